//! Dense tensors, a reverse-mode tape, LSTM cells, Adam and gradient checks.

pub mod adam;
pub mod gradcheck;
pub mod graph;
pub mod lstm;
pub mod params;
pub mod pretrained;
pub mod real;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use graph::{Graph, Var};
pub use lstm::{LstmCell, LstmStack, LstmState};
pub use params::{Gradients, ParamId, ParamSet};
pub use pretrained::PretrainedVectors;
pub use real::Real;
pub use tensor::{argmax, softmax, Tensor};
