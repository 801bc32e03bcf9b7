//! Piano-roll datasets: per-step sets of MIDI pitches, vectorized to binary
//! frames for next-frame prediction.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A sequence of steps, each a set of MIDI pitches.
pub type PitchSequence = Vec<Vec<i64>>;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: Vec<PitchSequence>,
    pub valid: Vec<PitchSequence>,
    pub test: Vec<PitchSequence>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PianoRollDataset {
    pub pitch_lo: i64,
    pub pitch_hi: i64,
    pub splits: Splits,
}

impl PianoRollDataset {
    pub fn features(&self) -> usize {
        (self.pitch_hi - self.pitch_lo + 1) as usize
    }

    pub fn split(&self, name: &str) -> Result<&[PitchSequence]> {
        Ok(match name {
            "train" => &self.splits.train,
            "valid" => &self.splits.valid,
            "test" => &self.splits.test,
            _ => return Err(Error::Config(format!("unknown split `{name}`; use train, valid or test"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.pitch_lo > self.pitch_hi {
            return Err(Error::Data(format!("pitch_lo {} exceeds pitch_hi {}", self.pitch_lo, self.pitch_hi)));
        }
        for name in ["train", "valid", "test"] {
            for (s, seq) in self.split(name)?.iter().enumerate() {
                for (t, step) in seq.iter().enumerate() {
                    if let Some(p) = step.iter().find(|&&p| p < self.pitch_lo || p > self.pitch_hi) {
                        return Err(Error::Data(format!(
                            "{name} sequence {s}, step {t}: pitch {p} outside [{}, {}]",
                            self.pitch_lo, self.pitch_hi
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn vectorize(&self, seq: &PitchSequence) -> Tensor {
        let f = self.features();
        let mut data = vec![0.0; seq.len() * f];
        for (t, step) in seq.iter().enumerate() {
            for &p in step {
                data[t * f + (p - self.pitch_lo) as usize] = 1.0;
            }
        }
        Tensor::new(vec![seq.len(), f], data).expect("roll shape")
    }

    /// Sorted pitch sets of a `[T × features]` binary roll.
    pub fn devectorize(&self, roll: &Tensor) -> PitchSequence {
        (0..roll.rows())
            .map(|t| {
                roll.row(t)
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(i, _)| self.pitch_lo + i as i64)
                    .collect()
            })
            .collect()
    }
}

pub fn pianoroll_load(path: &Path) -> Result<PianoRollDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ds: PianoRollDataset =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    ds.validate()?;
    Ok(ds)
}

/// Binary `[T × features]` rolls of one split.
pub fn pianoroll_vectorize(ds: &PianoRollDataset, split: &str) -> Result<Vec<Tensor>> {
    Ok(ds.split(split)?.iter().map(|s| ds.vectorize(s)).collect())
}

/// Input frames `0..T-1` and their next-step targets `1..T`.
pub fn next_step_pairs(roll: &Tensor) -> (Tensor, Tensor) {
    let (t, f) = (roll.rows(), roll.cols());
    let n = t.saturating_sub(1);
    let d = roll.data();
    (
        Tensor::new(vec![n, f], d[..n * f].to_vec()).expect("input frames"),
        Tensor::new(vec![n, f], d[f.min(d.len())..].to_vec()).expect("target frames"),
    )
}
