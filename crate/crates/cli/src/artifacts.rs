//! On-disk artifact formats, shared by built-in methods and external runners.
//!
//! | kind        | header                 |
//! |-------------|------------------------|
//! | ranking     | `feature_index,score`  |
//! | labeling    | `sample_id,label`      |
//! | embedding   | `sample_id,c1,...,cr`  |
//! | predictions | `sample_id,prediction` |
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces every bit. Parsing never trusts its input: every file passes
//! the same invariant checks as in-process results.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use nalgebra::DMatrix;
use stabx_core::methods::{PredictedValues, Predictions};
use stabx_core::{ClusterLabeling, Embedding, FeatureRanking, Interpretation, InterpretationKind, SampleId};
use thiserror::Error;

use crate::error::Result;

/// A file that violates its output schema.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct SchemaError(pub String);

type SResult<T> = std::result::Result<T, SchemaError>;

fn bad<T>(msg: impl Into<String>) -> SResult<T> {
    Err(SchemaError(msg.into()))
}

/// What the consumer knows about the artifact beforehand.
#[derive(Clone, Debug, Default)]
pub struct Expected {
    pub n_features: Option<usize>,
    /// Samples that must be covered, in the order the result should use.
    pub sample_ids: Option<Vec<SampleId>>,
    pub k_clusters: Option<usize>,
    pub rank: Option<usize>,
}

pub fn write_interpretation(path: &Path, interp: &Interpretation) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    match interp {
        Interpretation::Ranking(r) => {
            w.write_record(["feature_index", "score"])?;
            for (j, s) in r.scores().iter().enumerate() {
                w.write_record([j.to_string(), format!("{s:?}")])?;
            }
        }
        Interpretation::Labels(l) => {
            w.write_record(["sample_id", "label"])?;
            for (id, lab) in l.sample_ids().iter().zip(l.labels()) {
                w.write_record([id.as_str(), &lab.to_string()])?;
            }
        }
        Interpretation::Embedding(e) => {
            let mut header = vec!["sample_id".to_string()];
            header.extend((1..=e.rank()).map(|c| format!("c{c}")));
            w.write_record(&header)?;
            for (i, id) in e.sample_ids().iter().enumerate() {
                let mut rec = vec![id.0.clone()];
                rec.extend(e.coords().row(i).iter().map(|v| format!("{v:?}")));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Prediction values as the strings stored on disk.
pub fn prediction_strings(values: &PredictedValues) -> Vec<String> {
    match values {
        PredictedValues::Labels(v) => v.clone(),
        PredictedValues::Reals(v) => v.iter().map(|x| format!("{x:?}")).collect(),
    }
}

pub fn write_predictions(path: &Path, ids: &[SampleId], values: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sample_id", "prediction"])?;
    for (id, v) in ids.iter().zip(values) {
        w.write_record([id.as_str(), v.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_method_predictions(path: &Path, p: &Predictions) -> Result<()> {
    write_predictions(path, &p.sample_ids, &prediction_strings(&p.values))
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> SResult<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| SchemaError(format!("cannot read {}: {e}", path.display())))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| SchemaError(format!("bad header in {}: {e}", path.display())))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| SchemaError(format!("{}: {e}", path.display())))?;
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok(Table { header, rows })
}

/// Artifact kind implied by a header, if any.
pub fn kind_of_header(header: &[String]) -> Option<InterpretationKind> {
    match header {
        [a, b] if a == "feature_index" && b == "score" => Some(InterpretationKind::FeatureImportance),
        [a, b] if a == "sample_id" && b == "label" => Some(InterpretationKind::Clustering),
        [a, rest @ ..] if a == "sample_id" && !rest.is_empty() && rest.iter().enumerate().all(|(i, c)| *c == format!("c{}", i + 1)) => {
            Some(InterpretationKind::DimensionReduction)
        }
        _ => None,
    }
}

/// Parses an artifact of a known kind and validates it against `expected`.
pub fn parse_interpretation(path: &Path, task: InterpretationKind, expected: &Expected) -> SResult<Interpretation> {
    let table = read_table(path)?;
    match kind_of_header(&table.header) {
        Some(k) if k == task => {}
        _ => {
            return bad(format!(
                "{}: header `{}` does not match the {} schema",
                path.display(),
                table.header.join(","),
                kind_name(task)
            ))
        }
    }
    match task {
        InterpretationKind::FeatureImportance => parse_ranking(&table, expected),
        InterpretationKind::Clustering => parse_labels(&table, expected),
        InterpretationKind::DimensionReduction => parse_embedding(&table, expected),
    }
}

/// Parses an artifact whose kind is inferred from its header.
pub fn read_interpretation(path: &Path) -> SResult<Interpretation> {
    let table = read_table(path)?;
    let kind = kind_of_header(&table.header)
        .ok_or_else(|| SchemaError(format!("{}: unrecognized artifact header `{}`", path.display(), table.header.join(","))))?;
    let expected = Expected::default();
    match kind {
        InterpretationKind::FeatureImportance => parse_ranking(&table, &expected),
        InterpretationKind::Clustering => parse_labels(&table, &expected),
        InterpretationKind::DimensionReduction => parse_embedding(&table, &expected),
    }
    .map_err(|e| SchemaError(format!("{}: {e}", path.display())))
}

pub fn kind_name(kind: InterpretationKind) -> &'static str {
    match kind {
        InterpretationKind::FeatureImportance => "feature_importance",
        InterpretationKind::Clustering => "clustering",
        InterpretationKind::DimensionReduction => "dimension_reduction",
    }
}

fn float(cell: &str, what: &str, line: usize) -> SResult<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => bad(format!("line {line}: {what} `{cell}` is not a finite number")),
    }
}

fn parse_ranking(t: &Table, expected: &Expected) -> SResult<Interpretation> {
    let p = expected.n_features.unwrap_or(t.rows.len());
    if t.rows.len() != p {
        return bad(format!("ranking has {} rows, expected one per feature ({p})", t.rows.len()));
    }
    let mut scores = vec![None; p];
    for (i, row) in t.rows.iter().enumerate() {
        let line = i + 2;
        let j: usize = row[0].parse().map_err(|_| SchemaError(format!("line {line}: feature_index `{}` is not an index", row[0])))?;
        if j >= p {
            return bad(format!("line {line}: feature_index {j} is out of range 0..{p}"));
        }
        if scores[j].is_some() {
            return bad(format!("line {line}: feature_index {j} appears twice"));
        }
        scores[j] = Some(float(&row[1], "score", line)?);
    }
    let scores: Vec<f64> = scores.into_iter().map(|s| s.expect("all filled")).collect();
    FeatureRanking::from_scores(scores).map(Interpretation::Ranking).map_err(|e| SchemaError(e.to_string()))
}

/// Rows keyed by sample id, reordered to `expected` when given.
fn align<T>(rows: Vec<(SampleId, T)>, expected: Option<&[SampleId]>) -> SResult<(Vec<SampleId>, Vec<T>)> {
    let mut seen = HashSet::new();
    for (id, _) in &rows {
        if !seen.insert(id.clone()) {
            return bad(format!("sample id `{id}` appears twice"));
        }
    }
    let Some(want) = expected else {
        return Ok(rows.into_iter().unzip());
    };
    let mut by_id: HashMap<SampleId, T> = rows.into_iter().collect();
    let mut values = Vec::with_capacity(want.len());
    for id in want {
        match by_id.remove(id) {
            Some(v) => values.push(v),
            None => return bad(format!("missing sample id `{id}`")),
        }
    }
    if let Some(extra) = by_id.keys().min() {
        return bad(format!("unknown sample id `{extra}`"));
    }
    Ok((want.to_vec(), values))
}

fn parse_labels(t: &Table, expected: &Expected) -> SResult<Interpretation> {
    let mut rows = Vec::with_capacity(t.rows.len());
    for (i, row) in t.rows.iter().enumerate() {
        let label: usize = row[1]
            .parse()
            .map_err(|_| SchemaError(format!("line {}: label `{}` is not a non-negative integer", i + 2, row[1])))?;
        rows.push((SampleId(row[0].clone()), label));
    }
    if rows.is_empty() {
        return bad("labeling has no rows");
    }
    let (ids, labels) = align(rows, expected.sample_ids.as_deref())?;
    let k = match expected.k_clusters {
        Some(k) => {
            if let Some((id, l)) = ids.iter().zip(&labels).find(|(_, &l)| l >= k) {
                return bad(format!("label {l} of sample `{id}` violates label < k_clusters ({k})"));
            }
            k
        }
        None => labels.iter().max().map_or(1, |m| m + 1),
    };
    ClusterLabeling::new(ids, labels, k).map(Interpretation::Labels).map_err(|e| SchemaError(e.to_string()))
}

fn parse_embedding(t: &Table, expected: &Expected) -> SResult<Interpretation> {
    let r = t.header.len() - 1;
    if let Some(want) = expected.rank {
        if r != want {
            return bad(format!("embedding has {r} columns, expected rank {want}"));
        }
    }
    let mut rows = Vec::with_capacity(t.rows.len());
    for (i, row) in t.rows.iter().enumerate() {
        let coords = row[1..].iter().map(|c| float(c, "coordinate", i + 2)).collect::<SResult<Vec<f64>>>()?;
        rows.push((SampleId(row[0].clone()), coords));
    }
    if rows.is_empty() {
        return bad("embedding has no rows");
    }
    let (ids, coords) = align(rows, expected.sample_ids.as_deref())?;
    let m = DMatrix::from_fn(ids.len(), r, |i, j| coords[i][j]);
    Embedding::new(ids, m).map(Interpretation::Embedding).map_err(|e| SchemaError(e.to_string()))
}

/// Reads `sample_id,prediction`. Real-valued predictions are checked and
/// re-rendered canonically.
pub fn read_predictions(path: &Path, expected: Option<&[SampleId]>, real: bool) -> SResult<(Vec<SampleId>, Vec<String>)> {
    read_sample_column(path, "prediction", expected, real)
}

/// Reads `sample_id,<column>` with string values, e.g. a truth file.
pub fn read_predictions_like(path: &Path, column: &str) -> SResult<(Vec<SampleId>, Vec<String>)> {
    read_sample_column(path, column, None, false)
}

fn read_sample_column(path: &Path, column: &str, expected: Option<&[SampleId]>, real: bool) -> SResult<(Vec<SampleId>, Vec<String>)> {
    let t = read_table(path)?;
    if t.header != ["sample_id", column] {
        return bad(format!("{}: header `{}` is not `sample_id,{column}`", path.display(), t.header.join(",")));
    }
    let mut rows = Vec::with_capacity(t.rows.len());
    for (i, row) in t.rows.iter().enumerate() {
        let value = if real { format!("{:?}", float(&row[1], "prediction", i + 2)?) } else { row[1].clone() };
        rows.push((SampleId(row[0].clone()), value));
    }
    align(rows, expected).map_err(|e| SchemaError(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use stabx_core::dataset::sequential_ids;

    fn file(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn three_feature_scores_use_tie_break_order() {
        let d = tempfile::tempdir().unwrap();
        let p = file(&d, "r.csv", "feature_index,score\n2,0.5\n0,0.5\n1,0.9\n");
        let Interpretation::Ranking(r) = parse_interpretation(&p, InterpretationKind::FeatureImportance, &Expected::default()).unwrap() else {
            panic!()
        };
        assert_eq!(r.order(), &[1, 0, 2]);
    }

    #[test]
    fn ranking_schema_violations() {
        let d = tempfile::tempdir().unwrap();
        let fi = InterpretationKind::FeatureImportance;
        let exp = Expected { n_features: Some(3), ..Default::default() };
        for body in [
            "feature_index,score\n0,1\n1,2\n",
            "feature_index,score\n0,1\n1,2\n1,3\n",
            "feature_index,score\n0,1\n1,2\n5,3\n",
            "feature_index,score\n0,1\n1,nan\n2,3\n",
            "idx,score\n0,1\n1,2\n2,3\n",
        ] {
            let p = file(&d, "r.csv", body);
            assert!(parse_interpretation(&p, fi, &exp).is_err(), "{body}");
        }
    }

    #[test]
    fn labels_missing_a_sample_are_rejected() {
        let d = tempfile::tempdir().unwrap();
        let p = file(&d, "l.csv", "sample_id,label\n0,1\n2,0\n");
        let exp = Expected { sample_ids: Some(sequential_ids(3)), k_clusters: Some(2), ..Default::default() };
        let err = parse_interpretation(&p, InterpretationKind::Clustering, &exp).unwrap_err();
        assert!(err.0.contains("missing sample id `1`"), "{err}");
    }

    #[test]
    fn label_at_or_above_k_names_the_invariant() {
        let d = tempfile::tempdir().unwrap();
        let p = file(&d, "l.csv", "sample_id,label\n0,1\n1,3\n");
        let exp = Expected { sample_ids: Some(sequential_ids(2)), k_clusters: Some(3), ..Default::default() };
        let err = parse_interpretation(&p, InterpretationKind::Clustering, &exp).unwrap_err();
        assert!(err.0.contains("k_clusters"), "{err}");
    }

    #[test]
    fn labels_are_reordered_to_expected_ids() {
        let d = tempfile::tempdir().unwrap();
        let p = file(&d, "l.csv", "sample_id,label\n1,0\n0,1\n");
        let exp = Expected { sample_ids: Some(sequential_ids(2)), k_clusters: Some(2), ..Default::default() };
        let Interpretation::Labels(l) = parse_interpretation(&p, InterpretationKind::Clustering, &exp).unwrap() else { panic!() };
        assert_eq!(l.labels(), &[1, 0]);
    }

    #[test]
    fn embedding_rank_must_match() {
        let d = tempfile::tempdir().unwrap();
        let p = file(&d, "e.csv", "sample_id,c1,c2\na,1,2\nb,3,4\n");
        let ok = Expected { rank: Some(2), ..Default::default() };
        let Interpretation::Embedding(e) = parse_interpretation(&p, InterpretationKind::DimensionReduction, &ok).unwrap() else {
            panic!()
        };
        assert_eq!(e.rank(), 2);
        let wrong = Expected { rank: Some(3), ..Default::default() };
        assert!(parse_interpretation(&p, InterpretationKind::DimensionReduction, &wrong).is_err());
    }

    #[test]
    fn round_trips_are_exact() {
        let d = tempfile::tempdir().unwrap();
        let coords = DMatrix::from_fn(4, 2, |i, j| (i as f64 + 0.1).powf(1.0 / (j as f64 + 3.0)) * 1e-7);
        let items = [
            Interpretation::Ranking(FeatureRanking::from_scores(vec![0.1 + 0.2, 1.0 / 3.0, -0.0]).unwrap()),
            Interpretation::Labels(ClusterLabeling::from_labels(sequential_ids(4), vec![2, 0, 1, 2]).unwrap()),
            Interpretation::Embedding(Embedding::new(sequential_ids(4), coords).unwrap()),
        ];
        for item in items {
            let p = d.path().join("x.csv");
            write_interpretation(&p, &item).unwrap();
            assert_eq!(read_interpretation(&p).unwrap(), item);
        }
    }

    #[test]
    fn predictions_align_and_canonicalize() {
        let d = tempfile::tempdir().unwrap();
        let p = file(&d, "p.csv", "sample_id,prediction\n1,2.50\n0,1e0\n");
        let (ids, v) = read_predictions(&p, Some(&sequential_ids(2)), true).unwrap();
        assert_eq!(ids, sequential_ids(2));
        assert_eq!(v, ["1.0", "2.5"]);
        assert!(read_predictions(&p, Some(&sequential_ids(3)), true).is_err());
    }
}
