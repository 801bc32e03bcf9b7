use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "epoch,train_loss,valid_loss,metric,wall_seconds";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub metric: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    /// SHA-256 of the effective configuration JSON.
    pub config_hash: String,
    /// What `metric` measures, e.g. `accuracy` or `test_nll`.
    pub metric_name: String,
    pub rows: Vec<EpochRow>,
}

pub fn config_hash(config_json: &str) -> String {
    hex::encode(Sha256::digest(config_json.as_bytes()))
}

impl RunRecord {
    pub fn new(seed: u64, config_hash: String, metric_name: &str) -> Self {
        RunRecord {
            seed,
            config_hash,
            metric_name: metric_name.to_string(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: EpochRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.epoch <= last.epoch {
                return Err(Error::Contract(format!(
                    "epoch {} recorded after epoch {}",
                    row.epoch, last.epoch
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn last(&self) -> Option<&EpochRow> {
        self.rows.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.train_loss, r.valid_loss, r.metric, r.wall_seconds
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(epoch: usize) -> EpochRow {
        EpochRow {
            epoch,
            train_loss: 1.5,
            valid_loss: 0.1 + 0.2,
            metric: 0.9,
            wall_seconds: 0.0,
        }
    }

    #[test]
    fn csv_layout() {
        let mut r = RunRecord::new(1, config_hash("{}"), "accuracy");
        r.push(row(1)).unwrap();
        r.push(row(2)).unwrap();
        let csv = r.to_csv();
        assert!(!csv.contains('\r'));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "1,1.5,0.30000000000000004,0.9,0");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn epochs_must_increase() {
        let mut r = RunRecord::default();
        r.push(row(2)).unwrap();
        assert!(r.push(row(2)).is_err());
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(
            config_hash(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
