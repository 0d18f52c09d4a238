//! Tabular data model: ingestion, validation, standardization and CSV export.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the reserved sample-id column in CSV input.
pub const ID_COLUMN: &str = "id";

/// Opaque identifier for one observation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleId(pub String);

impl SampleId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<usize> for SampleId {
    fn from(i: usize) -> Self {
        SampleId(i.to_string())
    }
}

impl From<&str> for SampleId {
    fn from(s: &str) -> Self {
        SampleId(s.to_owned())
    }
}

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn sequential_ids(n: usize) -> Vec<SampleId> {
    (0..n).map(SampleId::from).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Classification,
    Unsupervised,
}

/// Response column. Class labels are interned to `0..C` in first-appearance
/// order; `classes[c]` is the original spelling of class `c`.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Real(Vec<f64>),
    Class { labels: Vec<usize>, classes: Vec<String> },
}

impl Target {
    pub fn len(&self) -> usize {
        match self {
            Target::Real(v) => v.len(),
            Target::Class { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_classes(&self) -> Option<usize> {
        match self {
            Target::Real(_) => None,
            Target::Class { classes, .. } => Some(classes.len()),
        }
    }

    /// Response as reals; class labels are cast to their integer codes.
    pub fn as_reals(&self) -> Vec<f64> {
        match self {
            Target::Real(v) => v.clone(),
            Target::Class { labels, .. } => labels.iter().map(|&l| l as f64).collect(),
        }
    }

    fn select(&self, rows: &[usize]) -> Target {
        match self {
            Target::Real(v) => Target::Real(rows.iter().map(|&r| v[r]).collect()),
            // Re-interned in order of first appearance, exactly as a fresh
            // load of the selected rows would produce.
            Target::Class { labels, classes } => {
                let mut code = vec![usize::MAX; classes.len()];
                let mut kept = Vec::new();
                let relabeled = rows
                    .iter()
                    .map(|&r| {
                        let old = labels[r];
                        if code[old] == usize::MAX {
                            code[old] = kept.len();
                            kept.push(classes[old].clone());
                        }
                        code[old]
                    })
                    .collect();
                Target::Class { labels: relabeled, classes: kept }
            }
        }
    }
}

/// N×P feature matrix with sample ids, feature names and an optional target.
///
/// Immutable after construction; every constructor enforces the invariants
/// (N ≥ 2, P ≥ 1, finite values, unique ids and names, class labels in range).
#[derive(Clone, Debug, PartialEq)]
pub struct TabularDataset {
    samples: Vec<SampleId>,
    features: DMatrix<f64>,
    feature_names: Vec<String>,
    target: Option<Target>,
    task: TaskKind,
}

impl TabularDataset {
    pub fn new(
        samples: Vec<SampleId>,
        features: DMatrix<f64>,
        feature_names: Vec<String>,
        target: Option<Target>,
        task: TaskKind,
    ) -> Result<Self> {
        let (n, p) = features.shape();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if n < 2 || p < 1 {
            return Err(Error::Invalid(format!("dataset must have N >= 2 and P >= 1 (got {n}x{p})")));
        }
        if samples.len() != n || feature_names.len() != p {
            return Err(Error::Invalid("sample ids / feature names do not match matrix shape".into()));
        }
        if let Some(bad) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite feature value at row {}", bad % n)));
        }
        let mut seen = HashSet::new();
        for s in &samples {
            if !seen.insert(s) {
                return Err(Error::DuplicateSample(s.0.clone()));
            }
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if !seen.insert(name) {
                return Err(Error::DuplicateFeature(name.clone()));
            }
        }
        match (&target, task) {
            (Some(t), _) if t.len() != n => {
                return Err(Error::Invalid("target length differs from sample count".into()));
            }
            (Some(Target::Class { labels, classes }), _) => {
                if classes.len() < 2 {
                    return Err(Error::Invalid("classification target needs at least 2 classes".into()));
                }
                if labels.iter().any(|&l| l >= classes.len()) {
                    return Err(Error::Invalid("class label out of range".into()));
                }
            }
            (Some(Target::Real(v)), _) if v.iter().any(|x| !x.is_finite()) => {
                return Err(Error::Invalid("non-finite target value".into()));
            }
            (None, TaskKind::Regression | TaskKind::Classification) => {
                return Err(Error::Invalid("supervised task requires a target".into()));
            }
            _ => {}
        }
        if task == TaskKind::Classification && !matches!(target, Some(Target::Class { .. })) {
            return Err(Error::Invalid("classification task requires class labels".into()));
        }
        if task == TaskKind::Regression && !matches!(target, Some(Target::Real(_))) {
            return Err(Error::Invalid("regression task requires a real target".into()));
        }
        Ok(Self { samples, features, feature_names, target, task })
    }

    /// Unsupervised dataset with sequential ids and generated feature names.
    pub fn from_matrix(features: DMatrix<f64>) -> Result<Self> {
        let (n, p) = features.shape();
        let names = (0..p).map(|j| format!("x{j}")).collect();
        Self::new(sequential_ids(n), features, names, None, TaskKind::Unsupervised)
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn samples(&self) -> &[SampleId] {
        &self.samples
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target(&self) -> Option<&Target> {
        self.target.as_ref()
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    /// Same dataset with a replacement feature matrix of identical shape.
    pub fn with_features(&self, features: DMatrix<f64>) -> Result<Self> {
        if features.shape() != self.features.shape() {
            return Err(Error::Invalid("replacement matrix has a different shape".into()));
        }
        Self::new(
            self.samples.clone(),
            features,
            self.feature_names.clone(),
            self.target.clone(),
            self.task,
        )
    }

    /// Rows `rows` (in the given order) as a new dataset.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let p = self.n_features();
        let features = DMatrix::from_fn(rows.len(), p, |i, j| self.features[(rows[i], j)]);
        Self::new(
            rows.iter().map(|&r| self.samples[r].clone()).collect(),
            features,
            self.feature_names.clone(),
            self.target.as_ref().map(|t| t.select(rows)),
            self.task,
        )
    }

    /// Per-column centering and scaling by the sample (ddof = 1) standard
    /// deviation. Constant columns end up all-zero and are reported.
    pub fn standardize(&self) -> Standardized {
        let n = self.n_samples() as f64;
        let mut out = self.features.clone();
        let mut constant_columns = Vec::new();
        for j in 0..out.ncols() {
            let mut col = out.column_mut(j);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            if sd <= 1e-12 * mean.abs().max(1.0) {
                col.fill(0.0);
                constant_columns.push(j);
            } else {
                col.iter_mut().for_each(|v| *v = (*v - mean) / sd);
            }
        }
        if !constant_columns.is_empty() {
            log::warn!("standardize: {} constant column(s) set to zero", constant_columns.len());
        }
        let dataset = Self { features: out, ..self.clone() };
        Standardized { dataset, constant_columns }
    }

    /// Writes `id,<features...>[,target]` with shortest round-trip float
    /// formatting, so reading the file back reproduces every bit.
    pub fn write_csv<W: Write>(&self, writer: W, target_name: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![ID_COLUMN.to_owned()];
        header.extend(self.feature_names.iter().cloned());
        if self.target.is_some() {
            header.push(target_name.to_owned());
        }
        w.write_record(&header)?;
        for i in 0..self.n_samples() {
            let mut rec = vec![self.samples[i].0.clone()];
            rec.extend(self.features.row(i).iter().map(|v| format!("{v:?}")));
            match &self.target {
                Some(Target::Real(v)) => rec.push(format!("{:?}", v[i])),
                Some(Target::Class { labels, classes }) => rec.push(classes[labels[i]].clone()),
                None => {}
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, target_name: &str) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file), target_name)
    }
}

#[derive(Clone, Debug)]
pub struct Standardized {
    pub dataset: TabularDataset,
    pub constant_columns: Vec<usize>,
}

/// CSV ingestion options.
#[derive(Clone, Debug, Default)]
pub struct CsvOptions {
    /// Response column; removed from the features.
    pub target: Option<String>,
    pub task: Option<TaskKind>,
    /// Additional non-feature columns to drop (e.g. ground-truth labels kept elsewhere).
    pub ignore: Vec<String>,
}

impl CsvOptions {
    pub fn new(target: Option<&str>, task: TaskKind) -> Self {
        Self { target: target.map(str::to_owned), task: Some(task), ignore: Vec::new() }
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "na" | "NaN" | "nan" | "null" | "?")
}

pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<TabularDataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, options)
}

/// Parses a headed CSV. Line numbers in errors are 1-based file lines with
/// the header on line 1.
pub fn read_csv<R: Read>(reader: R, options: &CsvOptions) -> Result<TabularDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_owned()).collect();

    let id_col = header.iter().position(|h| h == ID_COLUMN);
    let target_col = match &options.target {
        Some(t) => Some(header.iter().position(|h| h == t).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("target column `{t}` not found"),
        })?),
        None => None,
    };
    for ign in &options.ignore {
        if !header.iter().any(|h| h == ign) {
            return Err(Error::Parse { line: 1, message: format!("column `{ign}` not found") });
        }
    }
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| Some(c) != id_col && Some(c) != target_col && !options.ignore.contains(&header[c]))
        .collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&c| header[c].clone()).collect();
    let mut seen = HashSet::new();
    for name in &feature_names {
        if !seen.insert(name.as_str()) {
            return Err(Error::DuplicateFeature(name.clone()));
        }
    }

    let task = options.task.unwrap_or(match target_col {
        Some(_) => TaskKind::Regression,
        None => TaskKind::Unsupervised,
    });

    let mut values = Vec::new();
    let mut ids = Vec::new();
    let mut raw_target = Vec::new();
    let mut missing = 0usize;
    let mut first_missing = 0usize;
    let mut row_index = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} columns, found {}", header.len(), rec.len()),
            });
        }
        let mut row = Vec::with_capacity(feature_cols.len());
        let mut row_missing = false;
        for &c in &feature_cols {
            let cell = rec[c].trim();
            if is_missing(cell) {
                row_missing = true;
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric value `{cell}` in column `{}`", header[c]),
            })?;
            row.push(v);
        }
        if let Some(c) = target_col {
            if is_missing(&rec[c]) {
                row_missing = true;
            }
        }
        if row_missing {
            if missing == 0 {
                first_missing = line;
            }
            missing += 1;
            continue;
        }
        values.extend(row);
        ids.push(match id_col {
            Some(c) => SampleId(rec[c].trim().to_owned()),
            None => SampleId::from(row_index),
        });
        if let Some(c) = target_col {
            raw_target.push((line, rec[c].trim().to_owned()));
        }
        row_index += 1;
    }
    if missing > 0 {
        return Err(Error::MissingValues { count: missing, first_line: first_missing });
    }
    if ids.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let target = match (target_col, task) {
        (None, _) => None,
        // Unsupervised datasets may carry ground-truth labels.
        (Some(_), TaskKind::Classification | TaskKind::Unsupervised) => {
            let mut codes: HashMap<String, usize> = HashMap::new();
            let mut classes = Vec::new();
            let labels = raw_target
                .into_iter()
                .map(|(_, s)| {
                    *codes.entry(s.clone()).or_insert_with(|| {
                        classes.push(s);
                        classes.len() - 1
                    })
                })
                .collect();
            Some(Target::Class { labels, classes })
        }
        (Some(_), _) => Some(Target::Real(
            raw_target
                .into_iter()
                .map(|(line, s)| {
                    s.parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        message: format!("non-numeric target `{s}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        )),
    };
    let n = ids.len();
    let p = feature_names.len();
    let features = DMatrix::from_row_slice(n, p, &values);
    TabularDataset::new(ids, features, feature_names, target, task)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn parse(text: &str, target: Option<&str>, task: TaskKind) -> Result<TabularDataset> {
        read_csv(text.as_bytes(), &CsvOptions::new(target, task))
    }

    #[test]
    fn loads_four_rows_with_target() {
        let ds = parse("f1,f2,y\n1,2,3\n4,5,6\n7,8,9\n1,1,1\n", Some("y"), TaskKind::Regression).unwrap();
        assert_eq!((ds.n_samples(), ds.n_features()), (4, 2));
        assert_eq!(ds.feature_names(), ["f1", "f2"]);
        assert_eq!(ds.samples()[3], SampleId::from(3));
        assert_eq!(ds.target(), Some(&Target::Real(vec![3.0, 6.0, 9.0, 1.0])));
    }

    #[test]
    fn non_numeric_cell_names_its_line() {
        let err = parse("f1,f2,y\n1,2,3\nabc,5,6\n", Some("y"), TaskKind::Regression).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_header_rejected() {
        let err = parse("f1,f1\n1,2\n3,4\n", None, TaskKind::Unsupervised).unwrap_err();
        assert!(err.to_string().contains("duplicate feature name"));
    }

    #[test]
    fn column_count_mismatch() {
        let err = parse("a,b\n1,2\n3\n", None, TaskKind::Unsupervised).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn missing_rows_are_counted() {
        let err = parse("a,b\n1,2\n,4\n5,NA\n7,8\n", None, TaskKind::Unsupervised).unwrap_err();
        assert!(matches!(err, Error::MissingValues { count: 2, first_line: 3 }));
    }

    #[test]
    fn empty_dataset() {
        assert!(matches!(parse("a,b\n", None, TaskKind::Unsupervised), Err(Error::EmptyDataset)));
    }

    #[test]
    fn id_column_and_class_interning() {
        let ds = parse("id,a,label\ns1,1,cat\ns2,2,dog\ns3,3,cat\n", Some("label"), TaskKind::Classification)
            .unwrap();
        assert_eq!(ds.samples()[1], SampleId::from("s2"));
        assert_eq!(ds.n_features(), 1);
        match ds.target().unwrap() {
            Target::Class { labels, classes } => {
                assert_eq!(labels, &[0, 1, 0]);
                assert_eq!(classes, &["cat", "dog"]);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn single_class_rejected() {
        assert!(parse("a,y\n1,x\n2,x\n", Some("y"), TaskKind::Classification).is_err());
    }

    #[test]
    fn standardize_uses_sample_sd() {
        let ds = TabularDataset::from_matrix(DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 5.0, 5.0, 5.0]))
            .unwrap();
        let st = ds.standardize();
        let f = st.dataset.features();
        assert_abs_diff_eq!(f[(0, 0)], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f[(1, 0)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f[(2, 0)], 1.0, epsilon = 1e-15);
        assert_eq!(f.column(1).iter().copied().collect::<Vec<_>>(), vec![0.0; 3]);
        assert_eq!(st.constant_columns, vec![1]);
    }

    #[test]
    fn standardize_is_idempotent() {
        let m = DMatrix::from_fn(7, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 * 1.3 + j as f64);
        let once = TabularDataset::from_matrix(m).unwrap().standardize().dataset;
        let twice = once.standardize().dataset;
        for (a, b) in once.features().iter().zip(twice.features().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let m = DMatrix::from_fn(5, 3, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0) * std::f64::consts::PI);
        let ds = TabularDataset::new(
            sequential_ids(5),
            m,
            vec!["a".into(), "b".into(), "c".into()],
            Some(Target::Real(vec![0.1, 0.2, 1.0 / 3.0, 4.0, -5.5])),
            TaskKind::Regression,
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf, "y").unwrap();
        let back = read_csv(buf.as_slice(), &CsvOptions::new(Some("y"), TaskKind::Regression)).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn selected_rows_match_a_fresh_load() {
        let m = DMatrix::from_fn(6, 2, |i, j| i as f64 * 0.7 - j as f64);
        let ds = TabularDataset::new(
            sequential_ids(6),
            m,
            vec!["a".into(), "b".into()],
            Some(Target::Class { labels: vec![0, 1, 2, 0, 1, 2], classes: vec!["x".into(), "y".into(), "z".into()] }),
            TaskKind::Classification,
        )
        .unwrap();
        let sub = ds.select_rows(&[5, 1, 4]).unwrap();
        assert_eq!(sub.target(), Some(&Target::Class { labels: vec![0, 1, 1], classes: vec!["z".into(), "y".into()] }));
        let mut buf = Vec::new();
        sub.write_csv(&mut buf, "label").unwrap();
        let back = read_csv(buf.as_slice(), &CsvOptions::new(Some("label"), TaskKind::Classification)).unwrap();
        assert_eq!(back, sub);
    }
}
