//! Feed-forward stacks of stateful units described by a [`NetworkSpec`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Padding, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::conv::{BoundConvSnu, ConvSnuLayer};
use super::snu::{BoundSnu, InputFn, OutputFn, SnuLayer, SnuState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Snu,
    Ssnu,
    ConvSnu,
    DenseSigmoid,
    DenseSoftmax,
}

impl LayerKind {
    pub fn is_dense(self) -> bool {
        matches!(self, LayerKind::DenseSigmoid | LayerKind::DenseSoftmax)
    }

    pub fn is_stateful(self) -> bool {
        !self.is_dense()
    }
}

/// How `l(τ)` is parameterized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayMode {
    /// One fixed scalar shared by every unit of the layer.
    #[default]
    Shared,
    /// One trainable value per unit (per feature map for convolutions).
    PerUnit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    #[serde(default = "default_decay")]
    pub decay: f64,
    /// Defaults to -1.0 for stateful units and 0.0 for dense layers.
    #[serde(default)]
    pub bias: Option<f64>,
    /// Multiplier on the Glorot-uniform bound.
    #[serde(default = "default_gain")]
    pub weight_gain: f64,
}

fn default_decay() -> f64 {
    0.8
}

fn default_gain() -> f64 {
    1.0
}

fn default_stride() -> usize {
    1
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            decay: default_decay(),
            bias: None,
            weight_gain: default_gain(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// Output units, or feature maps for `conv_snu`.
    pub units: usize,
    #[serde(default)]
    pub decay_mode: DecayMode,
    #[serde(default)]
    pub input_fn: InputFn,
    #[serde(default)]
    pub init: InitSpec,
    /// Square kernel extent (`conv_snu` only).
    #[serde(default)]
    pub kernel: Option<usize>,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub padding: Padding,
    #[serde(default)]
    pub pool: Option<usize>,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, units: usize) -> Self {
        LayerSpec {
            kind,
            units,
            decay_mode: DecayMode::Shared,
            input_fn: InputFn::Relu,
            init: InitSpec::default(),
            kernel: None,
            stride: 1,
            padding: Padding::Same,
            pool: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    /// `[features]` or `[channels, height, width]`.
    pub input: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Input shape (without batch) seen by each layer, plus the final output
    /// shape as the last entry.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input.is_empty() || self.input.len() == 2 || self.input.len() > 3 || self.input.contains(&0) {
            return Err(Error::Config(format!(
                "input must be [features] or [channels, height, width], got {:?}",
                self.input
            )));
        }
        let mut shapes = vec![self.input.clone()];
        let last = self.layers.len().saturating_sub(1);
        for (i, l) in self.layers.iter().enumerate() {
            if l.units == 0 {
                return Err(Error::Config(format!("layer {i}: units must be positive")));
            }
            if l.kind.is_dense() && i != last {
                return Err(Error::Config(format!("layer {i}: dense layers are only allowed as the output layer")));
            }
            if !(0.0..=1.0).contains(&l.init.decay) {
                return Err(Error::Config(format!("layer {i}: initial decay {} outside [0, 1]", l.init.decay)));
            }
            let cur = shapes.last().expect("nonempty");
            let next = match l.kind {
                LayerKind::ConvSnu => {
                    let &[c, h, w] = cur.as_slice() else {
                        return Err(Error::Config(format!("layer {i}: conv_snu needs a [c, h, w] input, got {cur:?}")));
                    };
                    let k = l
                        .kernel
                        .ok_or_else(|| Error::Config(format!("layer {i}: conv_snu needs `kernel`")))?;
                    let conv = ConvSnuLayer {
                        kernel: Tensor::zeros(&[l.units, c, k, k]),
                        decay: Tensor::scalar(0.0),
                        bias: Tensor::zeros(&[l.units, 1, 1]),
                        stride: l.stride,
                        padding: l.padding,
                        pool: l.pool,
                        input_fn: l.input_fn,
                        output_fn: OutputFn::Step,
                        decay_trainable: false,
                    };
                    let (f, oh, ow) = conv
                        .output_extent(h, w)
                        .map_err(|e| Error::Config(format!("layer {i}: {e}")))?;
                    vec![f, oh, ow]
                }
                _ => {
                    if l.kernel.is_some() || l.pool.is_some() {
                        return Err(Error::Config(format!("layer {i}: kernel/pool only apply to conv_snu")));
                    }
                    vec![l.units]
                }
            };
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_features(&self) -> Result<usize> {
        Ok(self.shapes()?.last().expect("nonempty").iter().product())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamName {
    Weight,
    Kernel,
    Bias,
    Decay,
}

impl ParamName {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::Weight => "weight",
            ParamName::Kernel => "kernel",
            ParamName::Bias => "bias",
            ParamName::Decay => "decay",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "weight" => ParamName::Weight,
            "kernel" => ParamName::Kernel,
            "bias" => ParamName::Bias,
            "decay" => ParamName::Decay,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId {
    pub layer: usize,
    pub name: ParamName,
}

impl ParamId {
    pub fn new(layer: usize, name: ParamName) -> Self {
        ParamId { layer, name }
    }

    /// Synaptic weights (matrix or kernel), as opposed to bias and decay.
    pub fn is_synaptic(self) -> bool {
        matches!(self.name, ParamName::Weight | ParamName::Kernel)
    }
}

impl std::fmt::Display for ParamId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.layer, self.name.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenseOutput {
    Sigmoid,
    /// The layer emits logits; the softmax lives in the loss.
    Softmax,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub output: DenseOutput,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundDense {
    pub weight: Var,
    pub bias: Var,
}

impl DenseLayer {
    pub fn step(&self, g: &mut Graph, p: &BoundDense, x: Var) -> Result<Var> {
        let z = g.matmul(x, p.weight)?;
        let z = g.add(z, p.bias)?;
        Ok(match self.output {
            DenseOutput::Sigmoid => g.sigmoid(z),
            DenseOutput::Softmax => z,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Snu(SnuLayer),
    Conv(ConvSnuLayer),
    Dense(DenseLayer),
}

#[derive(Clone, Copy, Debug)]
pub enum BoundLayer {
    Snu(BoundSnu),
    Conv(BoundConvSnu),
    Dense(BoundDense),
}

/// A network's parameters inserted into one graph.
#[derive(Clone, Debug)]
pub struct BoundNet {
    pub layers: Vec<BoundLayer>,
    /// Trainable parameters and their graph variables, in declaration order.
    pub params: Vec<(ParamId, Var)>,
}

/// Per-layer recurrent state; `None` for stateless layers.
#[derive(Clone, Debug)]
pub struct NetState {
    pub layers: Vec<Option<SnuState>>,
}

/// Detached copy of a [`NetState`]'s values, independent of any graph.
#[derive(Clone, Debug, PartialEq)]
pub struct StateValues(pub Vec<Option<(Tensor, Tensor)>>);

impl NetState {
    pub fn values(&self, g: &Graph) -> StateValues {
        StateValues(
            self.layers
                .iter()
                .map(|s| s.map(|s| (g.value(s.s).clone(), g.value(s.y).clone())))
                .collect(),
        )
    }
}

impl StateValues {
    /// Re-inserts the values as constants, cutting the gradient path.
    pub fn attach(&self, g: &mut Graph) -> NetState {
        NetState {
            layers: self
                .0
                .iter()
                .map(|s| {
                    s.as_ref().map(|(s, y)| SnuState {
                        s: g.constant(s.clone()),
                        y: g.constant(y.clone()),
                    })
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub layers: Vec<Layer>,
    shapes: Vec<Vec<usize>>,
}

fn glorot(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize, gain: f64) -> Tensor {
    let bound = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("glorot shape")
}

impl Network {
    /// Builds and initializes a network; layer `i` draws from stream `i` of
    /// a ChaCha8 generator seeded with `seed`.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, l) in spec.layers.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let in_shape = &shapes[i];
            let m: usize = in_shape.iter().product();
            let n = l.units;
            let trainable_decay = l.decay_mode == DecayMode::PerUnit;
            let layer = match l.kind {
                LayerKind::Snu | LayerKind::Ssnu => {
                    let weight = glorot(&mut rng, &[m, n], m, n, l.init.weight_gain);
                    let decay = match l.decay_mode {
                        DecayMode::Shared => Tensor::scalar(l.init.decay),
                        DecayMode::PerUnit => Tensor::full(&[n], l.init.decay),
                    };
                    let bias = Tensor::full(&[n], l.init.bias.unwrap_or(-1.0));
                    let output_fn = if l.kind == LayerKind::Snu { OutputFn::Step } else { OutputFn::Sigmoid };
                    let mut snu = SnuLayer::new(weight, decay, bias, l.input_fn, output_fn)?;
                    snu.decay_trainable = trainable_decay;
                    Layer::Snu(snu)
                }
                LayerKind::ConvSnu => {
                    let c = in_shape[0];
                    let k = l.kernel.expect("validated");
                    let kernel = glorot(&mut rng, &[n, c, k, k], c * k * k, n * k * k, l.init.weight_gain);
                    let decay = match l.decay_mode {
                        DecayMode::Shared => Tensor::scalar(l.init.decay),
                        DecayMode::PerUnit => Tensor::full(&[n, 1, 1], l.init.decay),
                    };
                    Layer::Conv(ConvSnuLayer {
                        kernel,
                        decay,
                        bias: Tensor::full(&[n, 1, 1], l.init.bias.unwrap_or(-1.0)),
                        stride: l.stride,
                        padding: l.padding,
                        pool: l.pool,
                        input_fn: l.input_fn,
                        output_fn: OutputFn::Step,
                        decay_trainable: trainable_decay,
                    })
                }
                LayerKind::DenseSigmoid | LayerKind::DenseSoftmax => Layer::Dense(DenseLayer {
                    weight: glorot(&mut rng, &[m, n], m, n, l.init.weight_gain),
                    bias: Tensor::full(&[n], l.init.bias.unwrap_or(0.0)),
                    output: if l.kind == LayerKind::DenseSigmoid {
                        DenseOutput::Sigmoid
                    } else {
                        DenseOutput::Softmax
                    },
                }),
            };
            layers.push(layer);
        }
        Ok(Network { spec, layers, shapes })
    }

    pub fn input_features(&self) -> usize {
        self.spec.input.iter().product()
    }

    pub fn output_features(&self) -> usize {
        self.shapes.last().expect("nonempty").iter().product()
    }

    /// Input shape of layer `i` (and output shape of the network at `len`).
    pub fn layer_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn output_kind(&self) -> Option<LayerKind> {
        self.spec.layers.last().map(|l| l.kind)
    }

    /// Every stored tensor, trainable or not, in declaration order.
    pub fn tensors(&self) -> Vec<(ParamId, &Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Snu(l) => {
                    out.push((ParamId::new(i, ParamName::Weight), &l.weight));
                    out.push((ParamId::new(i, ParamName::Bias), &l.bias));
                    out.push((ParamId::new(i, ParamName::Decay), &l.decay));
                }
                Layer::Conv(l) => {
                    out.push((ParamId::new(i, ParamName::Kernel), &l.kernel));
                    out.push((ParamId::new(i, ParamName::Bias), &l.bias));
                    out.push((ParamId::new(i, ParamName::Decay), &l.decay));
                }
                Layer::Dense(l) => {
                    out.push((ParamId::new(i, ParamName::Weight), &l.weight));
                    out.push((ParamId::new(i, ParamName::Bias), &l.bias));
                }
            }
        }
        out
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        if id.name != ParamName::Decay {
            return true;
        }
        match self.layers.get(id.layer) {
            Some(Layer::Snu(l)) => l.decay_trainable,
            Some(Layer::Conv(l)) => l.decay_trainable,
            _ => false,
        }
    }

    /// Trainable tensors in declaration order.
    pub fn params(&self) -> Vec<(ParamId, &Tensor)> {
        self.tensors().into_iter().filter(|(id, _)| self.is_trainable(*id)).collect()
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.tensors().into_iter().find(|(i, _)| *i == id).map(|(_, t)| t)
    }

    pub fn param_mut(&mut self, id: ParamId) -> Option<&mut Tensor> {
        let layer = self.layers.get_mut(id.layer)?;
        match (layer, id.name) {
            (Layer::Snu(l), ParamName::Weight) => Some(&mut l.weight),
            (Layer::Snu(l), ParamName::Bias) => Some(&mut l.bias),
            (Layer::Snu(l), ParamName::Decay) => Some(&mut l.decay),
            (Layer::Conv(l), ParamName::Kernel) => Some(&mut l.kernel),
            (Layer::Conv(l), ParamName::Bias) => Some(&mut l.bias),
            (Layer::Conv(l), ParamName::Decay) => Some(&mut l.decay),
            (Layer::Dense(l), ParamName::Weight) => Some(&mut l.weight),
            (Layer::Dense(l), ParamName::Bias) => Some(&mut l.bias),
            _ => None,
        }
    }

    pub fn bind(&self, g: &mut Graph) -> BoundNet {
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut params = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Snu(l) => {
                    let b = l.bind(g);
                    params.push((ParamId::new(i, ParamName::Weight), b.weight));
                    params.push((ParamId::new(i, ParamName::Bias), b.bias));
                    if l.decay_trainable {
                        params.push((ParamId::new(i, ParamName::Decay), b.decay));
                    }
                    layers.push(BoundLayer::Snu(b));
                }
                Layer::Conv(l) => {
                    let b = l.bind(g);
                    params.push((ParamId::new(i, ParamName::Kernel), b.kernel));
                    params.push((ParamId::new(i, ParamName::Bias), b.bias));
                    if l.decay_trainable {
                        params.push((ParamId::new(i, ParamName::Decay), b.decay));
                    }
                    layers.push(BoundLayer::Conv(b));
                }
                Layer::Dense(l) => {
                    let b = BoundDense {
                        weight: g.param(l.weight.clone()),
                        bias: g.param(l.bias.clone()),
                    };
                    params.push((ParamId::new(i, ParamName::Weight), b.weight));
                    params.push((ParamId::new(i, ParamName::Bias), b.bias));
                    layers.push(BoundLayer::Dense(b));
                }
            }
        }
        BoundNet { layers, params }
    }

    /// Resting state for `batch` sequences.
    pub fn init_state(&self, g: &mut Graph, batch: usize) -> Result<NetState> {
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            out.push(match layer {
                Layer::Snu(l) => Some(l.zero_state(g, batch)),
                Layer::Conv(l) => {
                    let s = &self.shapes[i];
                    Some(l.zero_state(g, batch, s[1], s[2])?)
                }
                Layer::Dense(_) => None,
            });
        }
        Ok(NetState { layers: out })
    }

    /// One time step on `x[batch × input...]`. Returns the output layer's
    /// value: spikes, sigmoid probabilities, or softmax logits.
    pub fn step(&self, g: &mut Graph, bound: &BoundNet, state: &mut NetState, x: Var) -> Result<Var> {
        let batch = g.value(x).shape().first().copied().unwrap_or(0);
        let mut h = x;
        for (i, (layer, b)) in self.layers.iter().zip(&bound.layers).enumerate() {
            let mut want = vec![batch];
            match layer {
                Layer::Conv(_) => want.extend_from_slice(&self.shapes[i]),
                _ => want.push(self.shapes[i].iter().product()),
            }
            let cur = g.value(h).shape();
            if cur != want.as_slice() {
                if cur.iter().product::<usize>() != want.iter().product::<usize>() {
                    return Err(Error::dim("network step", cur, &want));
                }
                h = g.reshape(h, want)?;
            }
            h = match (layer, b) {
                (Layer::Snu(l), BoundLayer::Snu(p)) => {
                    let st = state.layers[i].as_mut().ok_or_else(|| Error::Contract("missing snu state".into()))?;
                    l.step(g, p, st, h)?
                }
                (Layer::Conv(l), BoundLayer::Conv(p)) => {
                    let st = state.layers[i].as_mut().ok_or_else(|| Error::Contract("missing conv state".into()))?;
                    l.step(g, p, st, h)?
                }
                (Layer::Dense(l), BoundLayer::Dense(p)) => l.step(g, p, h)?,
                _ => return Err(Error::Internal(format!("layer {i} bound to the wrong kind"))),
            };
        }
        let out = g.value(h).shape();
        if out.len() > 2 {
            let flat = vec![batch, out[1..].iter().product()];
            h = g.reshape(h, flat)?;
        }
        Ok(h)
    }
}
