//! Spiking neural units (SNU) and soft SNUs as recurrent units inside a
//! small reverse-mode autodiff engine, trained with backpropagation through
//! time, with a discrete-time LIF reference simulator and a simulated
//! phase-change-memory crossbar weight backend.

pub mod autodiff;
pub mod container;
pub mod encoding;
pub mod error;
pub mod exec;
pub mod pcm;
pub mod run;
pub mod tensor;
pub mod training;
pub mod units;

pub use error::{Error, Result};
pub use exec::Exec;
pub use tensor::Tensor;
