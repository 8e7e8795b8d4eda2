//! Minimal neural-network toolkit: parameters, a differentiation tape,
//! recurrent and dense layers, Adagrad and the checkpoint container.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;
pub mod train;

pub use checkpoint::Checkpoint;
pub use layers::{Dense, Embedding, Lstm, LstmState};
pub use optim::Adagrad;
pub use params::{Gradients, ParamId, ParamSet, Tensor};
pub use tape::{NodeId, Tape};
