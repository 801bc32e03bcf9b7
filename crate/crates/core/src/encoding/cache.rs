//! On-disk cache of encoded spike streams.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{Container, ContainerWriter};
use crate::error::{Error, Result};

use super::stream::{Segment, SpikeStream};

pub const STREAM_KIND: &str = "spike_stream";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub shape: [usize; 3],
    pub seed: u64,
    pub n_s: usize,
    pub n_p: usize,
    pub segments: Vec<Segment>,
}

pub fn stream_to_bytes(stream: &SpikeStream, seed: u64) -> Result<Vec<u8>> {
    writer(stream, seed)?.to_bytes()
}

fn writer(stream: &SpikeStream, seed: u64) -> Result<ContainerWriter> {
    let meta = StreamMeta {
        shape: stream.shape(),
        seed,
        n_s: stream.n_s,
        n_p: stream.n_p,
        segments: stream.segments.clone(),
    };
    let mut w = ContainerWriter::new(STREAM_KIND, serde_json::to_value(&meta)?);
    w.add_bits("spikes", &stream.shape(), stream.bits());
    Ok(w)
}

pub fn save_stream(path: &Path, stream: &SpikeStream, seed: u64) -> Result<()> {
    writer(stream, seed)?.write(path)
}

fn from_container(c: Container) -> Result<(SpikeStream, u64)> {
    let meta: StreamMeta = serde_json::from_value(c.header.meta.clone())
        .map_err(|e| Error::Container(format!("bad stream metadata: {e}")))?;
    let block = c.block(None, "spikes")?;
    if block.shape != meta.shape {
        return Err(Error::Container(format!(
            "spike block shape {:?} disagrees with header shape {:?}",
            block.shape, meta.shape
        )));
    }
    let [t, b, f] = meta.shape;
    let mut s = SpikeStream::from_bits(t, b, f, c.bits_data(block)?)?;
    s.segments = meta.segments;
    s.n_s = meta.n_s;
    s.n_p = meta.n_p;
    Ok((s, meta.seed))
}

/// Returns the stream and the seed it was encoded with.
pub fn load_stream(path: &Path) -> Result<(SpikeStream, u64)> {
    from_container(Container::read(path, STREAM_KIND)?)
}

pub fn stream_from_bytes(bytes: &[u8]) -> Result<(SpikeStream, u64)> {
    from_container(Container::from_bytes(bytes, STREAM_KIND)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::rate_encode;
    use crate::tensor::Tensor;

    #[test]
    fn round_trip() {
        let img = Tensor::new(vec![3, 5], (0..15).map(|i| i as f64 / 14.0).collect()).unwrap();
        let s = rate_encode(&img, 7, 2, 11).unwrap();
        let bytes = stream_to_bytes(&s, 11).unwrap();
        let (back, seed) = stream_from_bytes(&bytes).unwrap();
        assert_eq!(seed, 11);
        assert_eq!(back, s);
    }
}
