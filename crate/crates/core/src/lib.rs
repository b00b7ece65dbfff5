//! Blind restoration of anisotropically degraded 3D fluorescence-microscopy
//! volumes, with no ground truth and no PSF model.
//!
//! The pipeline slices a volume into xy, xz, and yz section stacks, trains a
//! spatially constrained CycleGAN per axis on unpaired degraded/clean
//! sections, restores the test volume along each axis, fuses the three
//! restored volumes by voxelwise weighted averaging, and scores the result
//! with no-reference quality metrics aggregated over all three section
//! families.
//!
//! Module map:
//! - [`volume`]: volume storage, TIFF/raw I/O, subvolume cropping, dataset splits.
//! - [`section`]: axis-aligned sectioning, padding, patch sampling.
//! - [`nn`]: minimal deterministic CNN stack (conv / transposed conv /
//!   instance norm / reflection padding) with reverse-mode gradients.
//! - [`spcyclegan`]: the five networks, the four-term training loss, the
//!   training loop, and checkpoints.
//! - [`infer`]: per-axis restoration and weighted fusion.
//! - [`iqa`]: BRISQUE, patch-classifier focus quality, and the 3-way
//!   sectional aggregation protocol.
//! - [`phantom`]: synthetic phantom volumes with depth-dependent degradation.
//! - [`pipeline`]: config-driven stages with content-addressed artifacts.

pub mod error;
pub mod infer;
pub mod iqa;
pub mod nn;
pub mod phantom;
pub mod pipeline;
pub mod section;
pub mod spcyclegan;
pub mod volume;

pub use error::{Error, Result};
