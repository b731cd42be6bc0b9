//! Minimal dense tensor library for small adversarial networks.
//!
//! Provides `f64` tensors, a reverse-mode differentiation [`Tape`], the
//! layers needed by a DCGAN-style generator and discriminator (fully
//! connected, convolution, transposed convolution, batch normalization,
//! leaky ReLU, sigmoid, binary cross-entropy), ADAM and SGD, and a bit-exact
//! checkpoint format.

pub mod checkpoint;
pub mod error;
pub mod kernels;
pub mod layers;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use error::{NnError, Result};
pub use layers::{BatchNorm, ChannelBias, Conv2d, Deconv2d, Linear, Mode, ParamStore, Parameter};
pub use optim::{adam_step, sgd_step, AdamState};
pub use tape::{Gradients, ParamKey, Tape, Var};
pub use tensor::Tensor;
