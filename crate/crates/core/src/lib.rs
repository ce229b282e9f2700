pub mod error;
pub mod experiment;
pub mod gru;
pub mod interpret;
pub mod linear;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod par;
pub mod synth;
pub mod timeseries;
pub mod tree;
pub mod windowing;

pub use error::{Error, Result};
pub use tree::EnsembleKind;
