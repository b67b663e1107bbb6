//! Dense tensors, reverse-mode differentiation and the optimizer used to train
//! both the graph models and the attack classifier.

pub mod adam;
pub mod dropout;
pub mod gradcheck;
pub mod init;
pub mod matrix;
pub mod mlp;
pub mod sparse;
pub mod tape;

pub use adam::AdamState;
pub use matrix::Matrix;
pub use sparse::SparseMatrix;
pub use tape::{Gradients, Tape, Var};
