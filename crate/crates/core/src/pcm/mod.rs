//! Simulated phase-change-memory crossbar backend for hardware-in-the-loop
//! training.

pub mod backend;
pub mod crossbar;
pub mod device;
pub mod dump;

pub use backend::PcmBackend;
pub use crossbar::{CrossbarPair, RebalanceStats};
pub use device::{PcmDevice, PcmParams};
pub use dump::{crossbar_from_bytes, crossbar_load, crossbar_save, crossbar_to_bytes, write_histogram};
