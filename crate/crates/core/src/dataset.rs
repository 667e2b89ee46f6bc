//! Labeled feature records on disk.
//!
//! A dataset directory holds `dataset.jsonl` (one [`DatasetRecord`] per
//! line), `dataset.meta.json` ([`DatasetMeta`]) and optionally a
//! `dataset.csv` export.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{self, Operator, ScenarioKey, SCHEMA_VERSION};
use crate::miner::MiningSummary;
use crate::Label;

pub const RECORDS_FILE: &str = "dataset.jsonl";
pub const META_FILE: &str = "dataset.meta.json";
pub const CSV_FILE: &str = "dataset.csv";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("{0} is locked by another writer")]
    Lock(PathBuf),
    #[error("line {line}: {message}")]
    Load { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionMeta {
    pub operator: Operator,
    pub git_version: String,
    pub schema_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub scenario_key: ScenarioKey,
    pub language: String,
    pub merge_timestamp: i64,
    pub features: Vec<f64>,
    pub label: Label,
    pub meta: ExtractionMeta,
}

impl DatasetRecord {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.meta.schema_version != SCHEMA_VERSION {
            return Err(DatasetError::Schema(format!(
                "record schema {} but this build writes {SCHEMA_VERSION}",
                self.meta.schema_version
            )));
        }
        let expected = self.meta.operator.dimension();
        if self.features.len() != expected {
            return Err(DatasetError::Schema(format!(
                "{} features under operator {} (expected {expected})",
                self.features.len(),
                self.meta.operator
            )));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(DatasetError::Schema("non-finite feature value".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub conflicts: usize,
    pub cleans: usize,
}

impl ClassCounts {
    pub fn of<'a>(labels: impl IntoIterator<Item = &'a Label>) -> ClassCounts {
        let mut c = ClassCounts::default();
        for l in labels {
            match l {
                Label::Conflict => c.conflicts += 1,
                Label::Clean => c.cleans += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.conflicts + self.cleans
    }

    /// Conflict fraction; `None` for an empty dataset.
    pub fn imbalance_rate(&self) -> Option<f64> {
        (self.total() > 0).then(|| self.conflicts as f64 / self.total() as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledDataset {
    pub records: Vec<DatasetRecord>,
    pub schema_version: Option<String>,
    pub operator: Option<Operator>,
    pub class_counts: ClassCounts,
}

impl LabeledDataset {
    pub fn from_records(records: Vec<DatasetRecord>) -> Result<LabeledDataset, DatasetError> {
        let mut operator = None;
        let mut schema_version = None;
        for (i, r) in records.iter().enumerate() {
            r.validate().map_err(|e| DatasetError::Load {
                line: i + 1,
                message: e.to_string(),
            })?;
            match operator {
                None => {
                    operator = Some(r.meta.operator);
                    schema_version = Some(r.meta.schema_version.clone());
                }
                Some(op) if op != r.meta.operator => {
                    return Err(DatasetError::Load {
                        line: i + 1,
                        message: format!("operator {} differs from {op}", r.meta.operator),
                    })
                }
                Some(_) => {}
            }
        }
        let class_counts = ClassCounts::of(records.iter().map(|r| &r.label));
        Ok(LabeledDataset {
            records,
            schema_version,
            operator,
            class_counts,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn imbalance_rate(&self) -> Option<f64> {
        self.class_counts.imbalance_rate()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.records.first().map(|r| r.features.len())
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.features.clone()).collect()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn timestamps(&self) -> Vec<i64> {
        self.records.iter().map(|r| r.merge_timestamp).collect()
    }

    pub fn languages(&self) -> Vec<String> {
        let mut langs: Vec<String> = self.records.iter().map(|r| r.language.clone()).collect();
        langs.sort();
        langs.dedup();
        langs
    }

    /// SHA-256 over the serialized records, in order.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for r in &self.records {
            hasher.update(serde_json::to_vec(r).expect("record serializes"));
            hasher.update(b"\n");
        }
        format!("{:x}", hasher.finalize())
    }
}

/// Exclusive appender for `dataset.jsonl`. The lock is released on drop.
#[derive(Debug)]
pub struct DatasetWriter {
    file: File,
    lock: PathBuf,
    keys: HashSet<ScenarioKey>,
}

impl DatasetWriter {
    /// Opens (creating if needed) the records file in `dir`.
    pub fn open(dir: &Path) -> Result<DatasetWriter, DatasetError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(RECORDS_FILE);
        let lock = dir.join(format!("{RECORDS_FILE}.lock"));
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(DatasetError::Lock(path))
            }
            Err(e) => return Err(e.into()),
        }
        let keys = if path.exists() {
            match read_records(&path) {
                Ok(records) => records.into_iter().map(|r| r.scenario_key).collect(),
                Err(e) => {
                    let _ = fs::remove_file(&lock);
                    return Err(e);
                }
            }
        } else {
            HashSet::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(DatasetWriter { file, lock, keys })
    }

    pub fn contains(&self, key: &ScenarioKey) -> bool {
        self.keys.contains(key)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Appends one record durably. Returns `false` when the scenario is
    /// already stored.
    pub fn append_record(&mut self, record: &DatasetRecord) -> Result<bool, DatasetError> {
        record.validate()?;
        if self.keys.contains(&record.scenario_key) {
            return Ok(false);
        }
        let mut line = serde_json::to_vec(record).map_err(|e| DatasetError::Schema(e.to_string()))?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        self.keys.insert(record.scenario_key.clone());
        Ok(true)
    }
}

impl Drop for DatasetWriter {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

fn read_records(path: &Path) -> Result<Vec<DatasetRecord>, DatasetError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DatasetError::Load {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord = serde_json::from_str(&line).map_err(|e| DatasetError::Load {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Resolves a dataset argument that may be the directory or the `.jsonl` file.
pub fn records_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(RECORDS_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Loads records in file order, keeping only `language` when given.
pub fn load_dataset(path: &Path, language: Option<&str>) -> Result<LabeledDataset, DatasetError> {
    let records = read_records(&records_path(path))?
        .into_iter()
        .filter(|r| language.is_none_or(|l| r.language.eq_ignore_ascii_case(l)))
        .collect();
    LabeledDataset::from_records(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoMiningReport {
    pub repo: String,
    pub language: String,
    pub status: String,
    pub detail: String,
    pub summary: MiningSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema_version: String,
    pub operator: Operator,
    pub git_version: String,
    pub branch_diff: String,
    pub keyword_matching: String,
    pub summary: MiningSummary,
    pub repos: Vec<RepoMiningReport>,
}

impl DatasetMeta {
    pub fn new(operator: Operator, git_version: String) -> DatasetMeta {
        DatasetMeta {
            schema_version: SCHEMA_VERSION.into(),
            operator,
            git_version,
            branch_diff: "endpoint".into(),
            keyword_matching: "case-insensitive token prefix".into(),
            summary: MiningSummary::default(),
            repos: Vec::new(),
        }
    }
}

pub fn write_meta(dir: &Path, meta: &DatasetMeta) -> Result<(), DatasetError> {
    fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(meta).map_err(|e| DatasetError::Schema(e.to_string()))?;
    text.push('\n');
    fs::write(dir.join(META_FILE), text)?;
    Ok(())
}

pub fn read_meta(dir: &Path) -> Result<DatasetMeta, DatasetError> {
    let text = fs::read_to_string(dir.join(META_FILE))?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Load {
        line: e.line(),
        message: e.to_string(),
    })
}

/// Writes a CSV with a header of key columns followed by feature names.
pub fn export_csv(dataset: &LabeledDataset, out: &Path) -> Result<(), DatasetError> {
    let operator = dataset.operator.unwrap_or_default();
    let mut w = csv::Writer::from_path(out)?;
    let mut header = vec!["scenario_key".to_string(), "language".into(), "label".into()];
    header.extend(features::feature_names(operator));
    w.write_record(&header)?;
    for r in &dataset.records {
        let mut row = vec![r.scenario_key.to_string(), r.language.clone(), r.label.to_string()];
        row.extend(r.features.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(i: usize, language: &str, label: Label, dim: usize) -> DatasetRecord {
        DatasetRecord {
            scenario_key: ScenarioKey {
                repo: "org/repo".into(),
                merge_commit: format!("{i:040x}"),
            },
            language: language.into(),
            merge_timestamp: i as i64,
            features: (0..dim).map(|j| (i * j) as f64 / 7.0).collect(),
            label,
            meta: ExtractionMeta {
                operator: Operator::Norm1,
                git_version: "2.34.1".into(),
                schema_version: SCHEMA_VERSION.into(),
            },
        }
    }

    #[test]
    fn append_grows_file_by_one_line() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = DatasetWriter::open(dir.path()).unwrap();
        assert!(w.append_record(&record(1, "C", Label::Clean, 28)).unwrap());
        let text = fs::read_to_string(dir.path().join(RECORDS_FILE)).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(!w.append_record(&record(1, "C", Label::Clean, 28)).unwrap());
        assert_eq!(fs::read_to_string(dir.path().join(RECORDS_FILE)).unwrap(), text);
    }

    #[test]
    fn wrong_dimension_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = DatasetWriter::open(dir.path()).unwrap();
        assert!(matches!(
            w.append_record(&record(1, "C", Label::Clean, 27)),
            Err(DatasetError::Schema(_))
        ));
    }

    #[test]
    fn second_writer_is_locked_out() {
        let dir = tempfile::tempdir().unwrap();
        let w = DatasetWriter::open(dir.path()).unwrap();
        assert!(matches!(DatasetWriter::open(dir.path()), Err(DatasetError::Lock(_))));
        drop(w);
        assert!(DatasetWriter::open(dir.path()).is_ok());
    }

    #[test]
    fn language_filter() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = DatasetWriter::open(dir.path()).unwrap();
        for (i, lang) in ["C", "Java", "C", "Python", "C"].iter().enumerate() {
            w.append_record(&record(i, lang, Label::Clean, 28)).unwrap();
        }
        drop(w);
        let ds = load_dataset(dir.path(), Some("C")).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(load_dataset(dir.path(), None).unwrap().len(), 5);
    }

    #[test]
    fn empty_file_has_no_imbalance() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(RECORDS_FILE), "").unwrap();
        let ds = load_dataset(dir.path(), None).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.imbalance_rate(), None);
    }

    #[test]
    fn table2_c_conflict_rate() {
        let counts = ClassCounts {
            conflicts: 1_308,
            cleans: 18_824 - 1_308,
        };
        let rate = counts.imbalance_rate().unwrap();
        assert!((rate * 100.0 - 6.95).abs() < 0.005, "{rate}");
    }

    #[test]
    fn corrupt_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let good = serde_json::to_string(&record(1, "C", Label::Clean, 28)).unwrap();
        fs::write(dir.path().join(RECORDS_FILE), format!("{good}\n{{oops\n")).unwrap();
        match load_dataset(dir.path(), None) {
            Err(DatasetError::Load { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn floats_round_trip_exactly(values in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 28)) {
            let mut r = record(3, "C", Label::Conflict, 28);
            r.features = values;
            let line = serde_json::to_string(&r).unwrap();
            let back: DatasetRecord = serde_json::from_str(&line).unwrap();
            for (a, b) in r.features.iter().zip(&back.features) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
