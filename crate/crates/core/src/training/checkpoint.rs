use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{Container, ContainerWriter};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::units::{Network, NetworkSpec, ParamName};

pub const CHECKPOINT_KIND: &str = "checkpoint";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub spec: NetworkSpec,
    pub seed: u64,
}

fn writer(net: &Network, seed: u64) -> Result<ContainerWriter> {
    let meta = CheckpointMeta {
        spec: net.spec.clone(),
        seed,
    };
    let mut w = ContainerWriter::new(CHECKPOINT_KIND, serde_json::to_value(&meta)?);
    for (id, t) in net.tensors() {
        w.add_f64(Some(id.layer), id.name.as_str(), t.shape(), t.data());
    }
    Ok(w)
}

pub fn checkpoint_to_bytes(net: &Network, seed: u64) -> Result<Vec<u8>> {
    writer(net, seed)?.to_bytes()
}

pub fn checkpoint_save(net: &Network, seed: u64, path: &Path) -> Result<()> {
    writer(net, seed)?.write(path)
}

/// Rebuilds a network from a checkpoint. With `expected`, the stored tensors
/// must fit that spec; the first mismatch is reported with its layer.
pub fn checkpoint_from_bytes(bytes: &[u8], expected: Option<&NetworkSpec>) -> Result<(Network, CheckpointMeta)> {
    let c = Container::from_bytes(bytes, CHECKPOINT_KIND)?;
    let meta: CheckpointMeta = serde_json::from_value(c.header.meta.clone())
        .map_err(|e| Error::Container(format!("bad checkpoint metadata: {e}")))?;
    let spec = expected.cloned().unwrap_or_else(|| meta.spec.clone());
    let mut net = Network::new(spec, meta.seed)?;
    let ids: Vec<_> = net.tensors().into_iter().map(|(id, t)| (id, t.shape().to_vec())).collect();
    let mut loaded = Vec::with_capacity(ids.len());
    for (id, shape) in &ids {
        let block = c.block(Some(id.layer), id.name.as_str())?;
        if &block.shape != shape {
            return Err(Error::LayerShape {
                layer: id.layer,
                name: id.name.as_str().to_string(),
                expected: shape.clone(),
                found: block.shape.clone(),
            });
        }
        loaded.push((*id, Tensor::new(shape.clone(), c.f64_data(block)?)?));
    }
    let known = ids.len();
    if c.header.blocks.len() != known {
        return Err(Error::Container(format!(
            "checkpoint has {} blocks, the network defines {known}",
            c.header.blocks.len()
        )));
    }
    for (id, t) in loaded {
        if id.name == ParamName::Decay && t.data().iter().any(|d| !(0.0..=1.0).contains(d)) {
            return Err(Error::Container(format!("layer {} decay outside [0, 1]", id.layer)));
        }
        *net.param_mut(id).expect("id from this network") = t;
    }
    Ok((net, meta))
}

pub fn checkpoint_load(path: &Path, expected: Option<&NetworkSpec>) -> Result<(Network, CheckpointMeta)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes, expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{LayerKind, LayerSpec};

    fn spec(hidden: usize) -> NetworkSpec {
        NetworkSpec {
            input: vec![6],
            layers: vec![LayerSpec::new(LayerKind::Snu, hidden), LayerSpec::new(LayerKind::DenseSigmoid, 6)],
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let net = Network::new(spec(4), 5).unwrap();
        let bytes = checkpoint_to_bytes(&net, 5).unwrap();
        let (back, meta) = checkpoint_from_bytes(&bytes, None).unwrap();
        assert_eq!(meta.seed, 5);
        for ((_, a), (_, b)) in net.tensors().iter().zip(back.tensors()) {
            let bits_a: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn mismatched_spec_names_layer() {
        let net = Network::new(spec(4), 5).unwrap();
        let bytes = checkpoint_to_bytes(&net, 5).unwrap();
        match checkpoint_from_bytes(&bytes, Some(&spec(3))) {
            Err(Error::LayerShape { layer, .. }) => assert_eq!(layer, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn corrupted_header_is_rejected() {
        let net = Network::new(spec(2), 0).unwrap();
        let mut bytes = checkpoint_to_bytes(&net, 0).unwrap();
        bytes[20] ^= 0xff;
        assert!(checkpoint_from_bytes(&bytes, None).is_err());
    }
}
