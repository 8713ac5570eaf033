//! Minimal reverse-mode automatic differentiation over dense matrices, with
//! the MLP, Adam and checkpoint pieces the rest of the crate trains with.

mod adam;
mod checkpoint;
mod graph;
mod mlp;

pub use adam::{Adam, DEFAULT_LEARNING_RATE};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use graph::{Gradients, Graph, Var};
pub use mlp::{Activation, Mlp, MlpSpec};

/// Trainable models expose their parameters in a stable order.
pub trait Parameterized<T: crate::Scalar> {
    fn params(&self) -> Vec<&ndarray::Array2<T>>;
    fn params_mut(&mut self) -> Vec<&mut ndarray::Array2<T>>;
}

impl<T: crate::Scalar> Parameterized<T> for Mlp<T> {
    fn params(&self) -> Vec<&ndarray::Array2<T>> {
        Mlp::params(self)
    }
    fn params_mut(&mut self) -> Vec<&mut ndarray::Array2<T>> {
        Mlp::params_mut(self)
    }
}
