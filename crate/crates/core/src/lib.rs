//! Heart-disease risk classification: record preprocessing, chaotic
//! cuttlefish feature selection, a Gaussian-activation network whose weights
//! are searched by an elephant-herd optimizer and refined by backpropagation,
//! and clinical metrics.

pub mod aeho;
pub mod dataio;
pub mod error;
pub mod mcfa;
pub mod metrics;
pub mod network;
pub mod pipeline;
mod space;

pub use error::{Error, Result};
pub use space::Bounds;
