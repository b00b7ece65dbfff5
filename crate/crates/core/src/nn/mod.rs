//! Minimal deterministic CNN stack with reverse-mode gradients.
//!
//! Everything a 2D image-translation GAN needs and nothing more: zero-padded
//! strided convolution, transposed convolution, instance normalization
//! (no affine), reflection padding, and pointwise activations, composed into
//! sequential [`Net`]s with nestable residual blocks.
//!
//! Design constraints that shaped this module:
//! - bitwise-deterministic forward passes (fixed loop order, no threading
//!   inside a section), so checkpoint round-trips and repeated inference
//!   compare exactly;
//! - one network may be run several times in a single optimization step, so
//!   forward passes return a per-call [`NetCtx`] instead of mutating layer
//!   state;
//! - backward passes can either accumulate parameter gradients or only
//!   propagate input gradients (`accumulate = false`), which lets a
//!   generator step backpropagate through a frozen discriminator;
//! - generic over `f32` (training) and `f64` (finite-difference checks).

mod adam;
mod geometry;
mod layers;
mod net;

pub use adam::Adam;
pub use geometry::{col2im, conv_out_dim, im2col};
pub use layers::{Conv2d, ConvTranspose2d, InstanceNorm};
pub use net::{Net, NetCtx, Node, NodeCtx};

/// Element type of all tensors: `f32` or `f64`.
pub trait Scalar: ndarray::NdFloat + num_traits::FromPrimitive + Send + Sync + 'static {
    fn from_f64c(v: f64) -> Self;
    fn to_f64c(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64c(v: f64) -> Self {
        v as f32
    }

    fn to_f64c(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    fn from_f64c(v: f64) -> Self {
        v
    }

    fn to_f64c(self) -> f64 {
        self
    }
}

/// Feature maps: `(N, C, H, W)`.
pub type Feat<S> = ndarray::Array4<S>;
