//! Neural units: SNU and soft SNU layers, the convolutional variant, the LIF
//! reference simulator, network assembly and parameter counting.

pub mod conv;
pub mod equivalence;
pub mod lif;
pub mod network;
pub mod params;
pub mod snu;

pub use conv::{BoundConvSnu, ConvSnuLayer};
pub use equivalence::{lif_equivalence_check, snu_forward_spikes, LifCheckReport};
pub use lif::{lif_oracle_run, lif_to_snu, snu_to_lif, LifNeuronConfig, LifTrace};
pub use network::{
    BoundLayer, BoundNet, DecayMode, DenseLayer, DenseOutput, InitSpec, Layer, LayerKind, LayerSpec, NetState, Network,
    NetworkSpec, ParamId, ParamName, StateValues,
};
pub use params::{enumerate_params, gru_params, lstm_params, param_count, rnn_params, snu_params, LayerCount};
pub use snu::{BoundSnu, InputFn, OutputFn, SnuLayer, SnuState};
