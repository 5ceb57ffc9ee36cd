//! Minimal neural-network engine over a flat parameter vector.

mod batch;
mod engine;
mod params;
mod spec;

pub use batch::{Batch, Inputs, Targets};
pub use engine::{forward, gradient, loss, loss_and_gradient, Mode, OutputMatrix};
pub use params::{build_model, ParamVector, Slot};
pub use spec::{Activation, Head, InputKind, Layer, LstmReturn, ModelSpec};
