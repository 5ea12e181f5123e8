//! Dense arithmetic, reverse-mode differentiation and simplex activations.

pub mod activation;
pub mod gradcheck;
pub mod tape;
pub mod tensor;

pub use activation::{softmax, sparsemax, Activation};
pub use gradcheck::finite_diff_check;
pub use tape::{sigmoid, BCE_EPS, Gradients, ParamSlot, Tape, Var};
pub use tensor::{affine, Tensor};
