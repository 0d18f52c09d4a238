//! Student-t tail probabilities and the OLS association test used to relate
//! accuracy and stability.

use serde::{Deserialize, Serialize};

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps the series in its accurate range.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + 7.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = f64::from(m);
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// P(|T| ≥ |t|) for Student's t with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    if t == 0.0 {
        return 1.0;
    }
    reg_inc_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

pub fn bonferroni(p: f64, m: usize) -> f64 {
    (p * m.max(1) as f64).min(1.0)
}

/// OLS line of stability (y) on accuracy (x).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociationFit {
    pub n: usize,
    /// `None` when every x is equal.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Two-sided p-value of the slope; needs n ≥ 3.
    pub p_value: Option<f64>,
    pub corrected_p: Option<f64>,
    pub m_tests: usize,
    pub note: Option<String>,
}

/// Fits `y = a + b·x` and tests `b = 0` with `n − 2` degrees of freedom.
///
/// With zero residual the standard error vanishes: p is then 1 for a zero
/// slope and 0 otherwise.
pub fn fit_association(points: &[(f64, f64)], m_tests: usize) -> AssociationFit {
    let n = points.len();
    let mut fit = AssociationFit { n, slope: None, intercept: None, p_value: None, corrected_p: None, m_tests, note: None };
    if n < 2 {
        fit.note = Some("fewer than two points".into());
        return fit;
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        fit.note = Some("zero variance in accuracy; slope undefined".into());
        return fit;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    fit.slope = Some(slope);
    fit.intercept = Some(intercept);
    if n < 3 {
        fit.note = Some("two points; no p-value".into());
        return fit;
    }
    let df = nf - 2.0;
    let sse: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    // Residuals at rounding level count as an exact fit.
    let exact = sse <= 1e-24 * syy;
    let p = if slope == 0.0 {
        1.0
    } else if exact {
        0.0
    } else {
        let se = (sse / df / sxx).sqrt();
        t_two_sided_p(slope / se, df)
    };
    fit.p_value = Some(p);
    fit.corrected_p = Some(bonferroni(p, m_tests));
    fit
}
