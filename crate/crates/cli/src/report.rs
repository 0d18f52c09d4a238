//! Plot-ready tables built from `scores/scores.json`.
//!
//! Everything lands in `report/` as CSV, plus `index.json` with a sha256 per
//! file and the provenance of the run. No wall-clock data is written, so two
//! runs with equal inputs produce byte-identical reports.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use stabx_core::rankmetrics::RankMetric;
use stabx_core::stats::{fit_association, AssociationFit};
use stabx_core::InterpretationKind;

use crate::artifacts::kind_name;
use crate::config::{hex, MetricConfig};
use crate::error::Result;
use crate::pipeline::{Condition, DatasetInfo};
use crate::score::{self, num, Scores, SweepRow, WithinRow};

const KINDS: [InterpretationKind; 3] =
    [InterpretationKind::FeatureImportance, InterpretationKind::Clustering, InterpretationKind::DimensionReduction];

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub metrics: MetricConfig,
    pub data_hashes: BTreeMap<String, String>,
}

#[derive(Debug, Serialize)]
pub struct ReportIndex {
    pub provenance: Provenance,
    pub files: Vec<FileEntry>,
}

/// Competition ranks, highest value first; ties share the better rank and
/// missing values stay unranked.
pub fn competition_ranks(values: &[Option<f64>]) -> Vec<Option<usize>> {
    values
        .iter()
        .map(|v| v.map(|x| 1 + values.iter().flatten().filter(|&&y| y > x).count()))
        .collect()
}

/// One fitted line of an association panel.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PanelFit {
    pub line: String,
    pub fit: AssociationFit,
}

/// Fits one line per entry; Bonferroni m is the number of lines in the panel
/// that yield a p-value.
pub fn association_panel(lines: &[(String, Vec<(f64, f64)>)]) -> Vec<PanelFit> {
    let m = lines.iter().filter(|(_, pts)| fit_association(pts, 1).p_value.is_some()).count();
    lines.iter().map(|(line, pts)| PanelFit { line: line.clone(), fit: fit_association(pts, m) }).collect()
}

/// Datasets by N/P ratio, ties by id.
fn dataset_order(datasets: &[DatasetInfo]) -> Vec<&DatasetInfo> {
    let ratio = |d: &DatasetInfo| if d.n_features == 0 { f64::INFINITY } else { d.n_samples as f64 / d.n_features as f64 };
    let mut v: Vec<&DatasetInfo> = datasets.iter().collect();
    v.sort_by(|a, b| ratio(a).total_cmp(&ratio(b)).then_with(|| a.id.cmp(&b.id)));
    v
}

fn headline<'a>(s: &'a Scores, dataset: &str, method: &str) -> Option<&'a WithinRow> {
    s.within.iter().find(|w| w.dataset == dataset && w.method == method && w.condition == Condition::Base)
}

fn value(w: Option<&WithinRow>) -> Option<f64> {
    w.and_then(|w| w.cell.as_ref()).and_then(|c| c.mean)
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<FileEntry>,
}

impl Writer<'_> {
    fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| crate::error::CliError::fatal(e.to_string()))?;
        std::fs::write(self.dir.join(name), &bytes)?;
        self.files.push(FileEntry { name: name.to_string(), sha256: hex(&Sha256::digest(&bytes)) });
        Ok(())
    }

    fn sweep(&mut self, name: &str, rows: &[&SweepRow]) -> Result<()> {
        let header: Vec<String> = ["method", "dataset", "x", "y", "n_pairs"].map(String::from).to_vec();
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|r| vec![r.method.clone(), r.dataset.clone(), format!("{:?}", r.x), num(r.y), r.n_pairs.to_string()])
            .collect();
        self.csv(name, &header, &body)
    }
}

fn strings<I: IntoIterator<Item = S>, S: Into<String>>(it: I) -> Vec<String> {
    it.into_iter().map(Into::into).collect()
}

/// Writes `report/` for a scored run directory.
pub fn build_report(run_dir: &Path) -> Result<ReportIndex> {
    let index = score::load_index(run_dir)?;
    let s = score::load_scores(run_dir)?;
    let dir = run_dir.join("report");
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    std::fs::create_dir_all(&dir)?;
    let mut w = Writer { dir: &dir, files: vec![] };
    let datasets = dataset_order(&s.datasets);

    for kind in KINDS {
        let methods: Vec<&str> = s.methods.iter().filter(|m| m.kind == kind).map(|m| m.id.as_str()).collect();
        let ds: Vec<&&DatasetInfo> = datasets
            .iter()
            .filter(|d| methods.iter().any(|m| headline(&s, &d.id, m).is_some()))
            .collect();
        if methods.is_empty() || ds.is_empty() {
            continue;
        }
        let k = kind_name(kind);

        // Heatmap: datasets by methods.
        let mut header = strings(["dataset", "metric"]);
        header.extend(methods.iter().map(|m| m.to_string()));
        let mut rows = Vec::new();
        let mut grid: Vec<Vec<Option<f64>>> = Vec::new();
        for d in &ds {
            let vals: Vec<Option<f64>> = methods.iter().map(|m| value(headline(&s, &d.id, m))).collect();
            let metric = methods.iter().find_map(|m| headline(&s, &d.id, m)).map(|w| w.metric.clone()).unwrap_or_default();
            let mut row = vec![d.id.clone(), metric];
            row.extend(vals.iter().map(|v| num(*v)));
            rows.push(row);
            grid.push(vals);
        }
        w.csv(&format!("within_{k}.csv"), &header, &rows)?;

        // Bump chart: methods by datasets, plus the average rank.
        let ranks: Vec<Vec<Option<usize>>> = grid.iter().map(|vals| competition_ranks(vals)).collect();
        let mut header = strings(["method"]);
        header.extend(ds.iter().map(|d| d.id.clone()));
        header.extend(strings(["average", "n_ranked"]));
        let mut rows = Vec::new();
        for (j, m) in methods.iter().enumerate() {
            let col: Vec<usize> = ranks.iter().filter_map(|r| r[j]).collect();
            let mut row = vec![m.to_string()];
            row.extend(ranks.iter().map(|r| r[j].map_or_else(String::new, |x| x.to_string())));
            let avg = (!col.is_empty()).then(|| col.iter().sum::<usize>() as f64 / col.len() as f64);
            row.push(num(avg));
            row.push(col.len().to_string());
            rows.push(row);
        }
        w.csv(&format!("bump_{k}.csv"), &header, &rows)?;
    }

    // Sweeps.
    for metric in RankMetric::ALL {
        let rows: Vec<&SweepRow> = s.k_sweep.iter().filter(|r| r.metric == metric.name()).collect();
        if !rows.is_empty() {
            w.sweep(&format!("sweep_k_{}.csv", metric.name()), &rows)?;
        }
    }
    let sigma: Vec<SweepRow> = s
        .within
        .iter()
        .filter_map(|r| match r.condition {
            Condition::Sigma { sigma } => Some(sweep_point(r, sigma)),
            _ => None,
        })
        .collect();
    if !sigma.is_empty() {
        w.sweep("sweep_sigma.csv", &sigma.iter().collect::<Vec<_>>())?;
    }
    if !s.nn_sweep.is_empty() {
        w.sweep("sweep_nn.csv", &s.nn_sweep.iter().collect::<Vec<_>>())?;
    }
    let rank: Vec<SweepRow> = s
        .within
        .iter()
        .filter(|r| r.kind == InterpretationKind::DimensionReduction && !matches!(r.condition, Condition::Sigma { .. }))
        .filter_map(|r| r.rank.map(|k| sweep_point(r, k as f64)))
        .collect();
    if !rank.is_empty() {
        let mut rank = rank;
        rank.sort_by(|a, b| (&a.dataset, &a.method).cmp(&(&b.dataset, &b.method)).then(a.x.total_cmp(&b.x)));
        w.sweep("sweep_rank.csv", &rank.iter().collect::<Vec<_>>())?;
    }

    // Between-method matrices.
    for d in &datasets {
        for (prefix, rows) in [("between", &s.between), ("prediction_between", &s.prediction_between)] {
            for kind in KINDS {
                let cells: Vec<_> = rows
                    .iter()
                    .filter(|r| r.dataset == d.id && s.methods.iter().any(|m| m.id == r.method_a && m.kind == kind))
                    .collect();
                if cells.is_empty() {
                    continue;
                }
                let mut methods: Vec<&str> = Vec::new();
                for c in &cells {
                    if !methods.contains(&c.method_a.as_str()) {
                        methods.push(&c.method_a);
                    }
                }
                let mut header = strings(["method"]);
                header.extend(methods.iter().map(|m| m.to_string()));
                let body: Vec<Vec<String>> = methods
                    .iter()
                    .map(|a| {
                        let mut row = vec![a.to_string()];
                        row.extend(methods.iter().map(|b| {
                            num(cells.iter().find(|c| c.method_a == *a && c.method_b == *b).and_then(|c| c.value))
                        }));
                        row
                    })
                    .collect();
                let name = if prefix == "between" {
                    format!("between_{}_{}.csv", d.id, kind_name(kind))
                } else {
                    format!("prediction_between_{}.csv", d.id)
                };
                w.csv(&name, &header, &body)?;
            }
        }
    }

    // Accuracy against stability.
    let mut scatter = Vec::new();
    for a in &s.accuracy {
        let st = headline(&s, &a.dataset, &a.method);
        if let (Some(x), Some(y)) = (a.value, value(st)) {
            scatter.push((a, st.map(|w| w.metric.clone()).unwrap_or_default(), x, y));
        }
    }
    if !s.accuracy.is_empty() {
        let header = strings(["dataset", "method", "kind", "accuracy_metric", "accuracy", "stability_metric", "stability"]);
        let rows: Vec<Vec<String>> = scatter
            .iter()
            .map(|(a, sm, x, y)| {
                vec![
                    a.dataset.clone(),
                    a.method.clone(),
                    kind_name(a.kind).into(),
                    a.metric.clone(),
                    format!("{x:?}"),
                    sm.clone(),
                    format!("{y:?}"),
                ]
            })
            .collect();
        w.csv("scatter.csv", &header, &rows)?;

        let mut fits = Vec::new();
        for kind in KINDS {
            let pts: Vec<_> = scatter.iter().filter(|(a, ..)| a.kind == kind).collect();
            if pts.is_empty() {
                continue;
            }
            for (panel, key) in [("by_dataset", 0), ("by_method", 1)] {
                let mut lines: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
                for (a, _, x, y) in &pts {
                    let name = if key == 0 { &a.dataset } else { &a.method };
                    match lines.iter_mut().find(|(l, _)| l == name) {
                        Some((_, v)) => v.push((*x, *y)),
                        None => lines.push((name.clone(), vec![(*x, *y)])),
                    }
                }
                for f in association_panel(&lines) {
                    fits.push(vec![
                        kind_name(kind).to_string(),
                        panel.to_string(),
                        f.line,
                        f.fit.n.to_string(),
                        num(f.fit.slope),
                        num(f.fit.intercept),
                        num(f.fit.p_value),
                        num(f.fit.corrected_p),
                        f.fit.m_tests.to_string(),
                        f.fit.note.unwrap_or_default(),
                    ]);
                }
            }
        }
        let header = strings(["kind", "panel", "line", "n", "slope", "intercept", "p_value", "corrected_p", "m_tests", "note"]);
        w.csv("association.csv", &header, &fits)?;
    }
    if !s.prediction_within.is_empty() {
        let header = strings(["dataset", "method", "value", "n_repeats", "excluded"]);
        let rows: Vec<Vec<String>> = s
            .prediction_within
            .iter()
            .map(|r| vec![r.dataset.clone(), r.method.clone(), num(r.value), r.n_repeats.to_string(), r.excluded.to_string()])
            .collect();
        w.csv("prediction_stability.csv", &header, &rows)?;
    }

    let report = ReportIndex {
        provenance: Provenance {
            config_hash: index.config_hash.clone(),
            seed: index.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            metrics: s.metrics,
            data_hashes: s.datasets.iter().map(|d| (d.id.clone(), d.data_hash.clone())).collect(),
        },
        files: w.files,
    };
    std::fs::write(dir.join("index.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

fn sweep_point(r: &WithinRow, x: f64) -> SweepRow {
    SweepRow {
        method: r.method.clone(),
        dataset: r.dataset.clone(),
        metric: r.metric.clone(),
        x,
        y: value(Some(r)),
        n_pairs: r.cell.as_ref().map_or(0, |c| c.n_pairs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_share_the_better_rank() {
        let r = competition_ranks(&[Some(0.9), Some(0.5), Some(0.9), None, Some(0.1)]);
        assert_eq!(r, vec![Some(1), Some(3), Some(1), None, Some(4)]);
    }

    #[test]
    fn bonferroni_counts_fitted_lines_only() {
        let lines = vec![
            ("a".to_string(), vec![(0.0, 0.1), (1.0, 0.9), (2.0, 2.2)]),
            ("b".to_string(), vec![(0.0, 0.0), (1.0, 1.1), (2.0, 1.9), (3.0, 3.05)]),
            ("c".to_string(), vec![(0.0, 1.0)]),
        ];
        let fits = association_panel(&lines);
        assert!(fits.iter().all(|f| f.fit.m_tests == 2));
        let p = fits[0].fit.p_value.unwrap();
        assert_eq!(fits[0].fit.corrected_p, Some((2.0 * p).min(1.0)));
        assert!(fits[2].fit.p_value.is_none());
    }

    #[test]
    fn datasets_order_by_samples_per_feature() {
        let d = |id: &str, n, p| DatasetInfo {
            id: id.into(),
            task: stabx_core::TaskKind::Unsupervised,
            n_samples: n,
            n_features: p,
            data_hash: String::new(),
            k_clusters: None,
            truth_file: None,
            classes: None,
            constant_columns: vec![],
        };
        let v = vec![d("wide", 10, 100), d("b", 100, 10), d("a", 50, 5), d("tall", 1000, 2)];
        let ids: Vec<&str> = dataset_order(&v).iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["wide", "a", "b", "tall"]);
    }
}
