//! Binary container shared by checkpoints, encoded-stream caches and
//! crossbar dumps.
//!
//! Layout: the magic `SNUC`, a little-endian `u64` header length, the JSON
//! header, then the payload. Block offsets are relative to the payload
//! start; float blocks are little-endian `f64`, bit blocks are little-endian
//! `u64` words packed LSB-first.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SNUC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockType {
    F64,
    Bits,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<usize>,
    pub name: String,
    pub dtype: BlockType,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub len: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: String,
    pub format_version: u32,
    pub meta: serde_json::Value,
    pub blocks: Vec<BlockInfo>,
}

#[derive(Clone, Debug)]
pub struct ContainerWriter {
    header: Header,
    payload: Vec<u8>,
}

impl ContainerWriter {
    pub fn new(kind: &str, meta: serde_json::Value) -> Self {
        ContainerWriter {
            header: Header {
                kind: kind.to_string(),
                format_version: FORMAT_VERSION,
                meta,
                blocks: Vec::new(),
            },
            payload: Vec::new(),
        }
    }

    fn push(&mut self, layer: Option<usize>, name: &str, dtype: BlockType, shape: &[usize], bytes: Vec<u8>) {
        self.header.blocks.push(BlockInfo {
            layer,
            name: name.to_string(),
            dtype,
            shape: shape.to_vec(),
            offset: self.payload.len() as u64,
            len: bytes.len() as u64,
        });
        self.payload.extend(bytes);
    }

    pub fn add_f64(&mut self, layer: Option<usize>, name: &str, shape: &[usize], data: &[f64]) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let bytes = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.push(layer, name, BlockType::F64, shape, bytes);
    }

    /// `shape` is the logical bit shape; `words` holds its packed bits.
    pub fn add_bits(&mut self, name: &str, shape: &[usize], words: &[u64]) {
        let bytes = words.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.push(None, name, BlockType::Bits, shape, bytes);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(12 + header.len() + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Writes via a temporary sibling file and a rename, so readers never
    /// observe a partial file.
    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("partial");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        drop(f);
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug)]
pub struct Container {
    pub header: Header,
    payload: Vec<u8>,
}

impl Container {
    pub fn read(path: &Path, kind: &str) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Container::from_bytes(&bytes, kind)
    }

    /// Parses and validates the whole container before returning anything.
    pub fn from_bytes(bytes: &[u8], kind: &str) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::Container("missing container magic".into()));
        }
        let hlen = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
        let body = &bytes[12..];
        if hlen > body.len() {
            return Err(Error::Container(format!(
                "header length {hlen} exceeds file body of {} bytes",
                body.len()
            )));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])
            .map_err(|e| Error::Container(format!("unreadable header: {e}")))?;
        if header.kind != kind {
            return Err(Error::Container(format!("expected a `{kind}` container, found `{}`", header.kind)));
        }
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Container(format!(
                "unsupported format version {} (this build reads {FORMAT_VERSION})",
                header.format_version
            )));
        }
        let payload = body[hlen..].to_vec();
        for b in &header.blocks {
            let end = b.offset.checked_add(b.len);
            if end.is_none_or(|e| e > payload.len() as u64) {
                return Err(Error::Container(format!("block `{}` overruns the payload", b.name)));
            }
            let numel: usize = b.shape.iter().product();
            let expected = match b.dtype {
                BlockType::F64 => numel * 8,
                BlockType::Bits => numel.div_ceil(64) * 8,
            };
            if b.len as usize != expected {
                return Err(Error::Container(format!(
                    "block `{}` has {} bytes, shape {:?} needs {expected}",
                    b.name, b.len, b.shape
                )));
            }
        }
        Ok(Container { header, payload })
    }

    pub fn block(&self, layer: Option<usize>, name: &str) -> Result<&BlockInfo> {
        self.header
            .blocks
            .iter()
            .find(|b| b.layer == layer && b.name == name)
            .ok_or_else(|| match layer {
                Some(l) => Error::Container(format!("missing block `{name}` for layer {l}")),
                None => Error::Container(format!("missing block `{name}`")),
            })
    }

    fn words(&self, b: &BlockInfo) -> impl Iterator<Item = [u8; 8]> + '_ {
        let bytes = &self.payload[b.offset as usize..(b.offset + b.len) as usize];
        bytes.chunks_exact(8).map(|c| c.try_into().expect("8 bytes"))
    }

    pub fn f64_data(&self, b: &BlockInfo) -> Result<Vec<f64>> {
        if b.dtype != BlockType::F64 {
            return Err(Error::Container(format!("block `{}` is not f64", b.name)));
        }
        Ok(self.words(b).map(f64::from_le_bytes).collect())
    }

    pub fn bits_data(&self, b: &BlockInfo) -> Result<Vec<u64>> {
        if b.dtype != BlockType::Bits {
            return Err(Error::Container(format!("block `{}` is not a bit block", b.name)));
        }
        Ok(self.words(b).map(u64::from_le_bytes).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_corruption() {
        let mut w = ContainerWriter::new("test", serde_json::json!({"seed": 3}));
        w.add_f64(Some(0), "weight", &[2, 2], &[1.0, -0.0, f64::MIN_POSITIVE, 3.5]);
        w.add_bits("spikes", &[3, 30], &[u64::MAX, 0b1011]);
        let bytes = w.to_bytes().unwrap();

        let c = Container::from_bytes(&bytes, "test").unwrap();
        let b = c.block(Some(0), "weight").unwrap().clone();
        let vals = c.f64_data(&b).unwrap();
        assert_eq!(vals[1].to_bits(), (-0.0f64).to_bits());
        assert_eq!(vals[2], f64::MIN_POSITIVE);
        let b = c.block(None, "spikes").unwrap().clone();
        assert_eq!(c.bits_data(&b).unwrap(), vec![u64::MAX, 0b1011]);

        assert!(Container::from_bytes(&bytes, "other").is_err());
        let mut bad = bytes.clone();
        bad[14] = b'#';
        assert!(matches!(Container::from_bytes(&bad, "test"), Err(Error::Container(_))));
        assert!(Container::from_bytes(&bytes[..bytes.len() - 1], "test").is_err());
    }
}
