//! Dense networks with hand-written backpropagation, Adam, the two actor
//! heads, the multi-head critic and the checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod critic;
pub mod mlp;
pub mod policy;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, CheckpointError, Tensor};
pub use critic::Critic;
pub use mlp::{mlp_backward, mlp_forward, Activation, Mlp, MlpCache, MlpShape};
pub use policy::{DlActor, DlSample, StochasticPolicy, UlActor, UlSample};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("{what} has length {got}, expected {expected}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("activation cache does not match the network")]
    CacheMismatch,
    #[error("action does not fit the policy head")]
    BadAction,
    #[error("critic has no head {0}")]
    NoHead(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}
