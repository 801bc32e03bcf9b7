//! Dataset ingestion and temporal encoding.

pub mod cache;
pub mod mnist;
pub mod pianoroll;
pub mod rate;
pub mod stream;

pub use cache::{load_stream, save_stream};
pub use mnist::{load_mnist, split_paths, MnistSplit};
pub use pianoroll::{next_step_pairs, pianoroll_load, pianoroll_vectorize, PianoRollDataset, PitchSequence};
pub use rate::{encode_batch, rate_encode, rate_encode_lanes};
pub use stream::{Segment, SpikeStream};

use crate::error::{Error, Result};

/// Index of the largest count; ties go to the lowest index.
pub fn argmax_lowest<T: PartialOrd + Copy>(counts: &[T]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Predicted class per lane from spike counts over `segment`.
pub fn readout_counts(output: &SpikeStream, segment: &Segment) -> Result<Vec<usize>> {
    if segment.is_empty() {
        return Err(Error::Contract(format!(
            "empty readout segment [{}, {})",
            segment.start, segment.end
        )));
    }
    if segment.end > output.time() {
        return Err(Error::Contract(format!(
            "segment end {} beyond stream length {}",
            segment.end,
            output.time()
        )));
    }
    Ok(output
        .counts(segment.start, segment.end)
        .iter()
        .map(|c| argmax_lowest(c))
        .collect())
}
