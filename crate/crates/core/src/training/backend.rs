use crate::error::{Error, Result};
use crate::units::{Network, ParamId};

/// Where trained weights live. The trainer calls [`prepare`] before every
/// forward pass, hands each optimizer delta to [`apply`], and signals batch
/// and epoch boundaries.
///
/// [`prepare`]: WeightBackend::prepare
/// [`apply`]: WeightBackend::apply
pub trait WeightBackend {
    /// Makes `net`'s tensors reflect the weights the forward pass should use.
    fn prepare(&mut self, net: &mut Network) -> Result<()>;

    fn apply(&mut self, net: &mut Network, id: ParamId, delta: &[f64]) -> Result<()>;

    fn end_batch(&mut self, _net: &mut Network, _batch: usize) -> Result<()> {
        Ok(())
    }

    fn end_epoch(&mut self, _net: &mut Network, _epoch: usize) -> Result<()> {
        Ok(())
    }
}

/// Adds `delta` to a network tensor.
pub fn add_delta(net: &mut Network, id: ParamId, delta: &[f64]) -> Result<()> {
    let p = net
        .param_mut(id)
        .ok_or_else(|| Error::Internal(format!("no parameter {id}")))?;
    if p.numel() != delta.len() {
        return Err(Error::dim("apply delta", p.shape(), &[delta.len()]));
    }
    for (w, d) in p.data_mut().iter_mut().zip(delta) {
        *w += d;
    }
    Ok(())
}

/// Exact software weights.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdealBackend;

impl WeightBackend for IdealBackend {
    fn prepare(&mut self, _net: &mut Network) -> Result<()> {
        Ok(())
    }

    fn apply(&mut self, net: &mut Network, id: ParamId, delta: &[f64]) -> Result<()> {
        add_delta(net, id, delta)
    }
}
