//! Dense `f64` tensors with tape-based reverse-mode differentiation, the
//! layers of the generator and discriminators, and parameter checkpoints.

mod conv;
mod gradcheck;
mod graph;
mod layers;
mod network;
mod spectral_ops;
mod tensor;

pub use gradcheck::{gradcheck, GradCheckReport, DEFAULT_STEP};
pub use graph::{Gradients, Graph, Var};
pub use network::{
    build_discriminator, build_generator, discriminator_strides, spec_diff, Activation,
    GeneratorConfig, LayerKind, LayerSpec, Network, NetworkRole, NetworkSpec, DISCRIMINATOR_WIDTHS,
    LEAKY_SLOPE,
};
pub use tensor::Tensor;
