//! Cycle-consistent adversarial training with a spatial-constraint network.
//!
//! Five networks are trained per section axis: two generators mapping
//! between the blurred domain A and the sharp domain B, a constraint
//! network `H` pulling restored images back toward their source, and two
//! discriminators. The generator objective combines both adversarial
//! terms with a cycle term (weight `lambda1`) and a spatial term (weight
//! `lambda2`); discriminators train against a replay pool of past fakes.
//!
//! Everything is seeded and single-threaded, so a run is reproducible
//! bit-for-bit from its config.

mod arch;
mod checkpoint;
mod loss;
mod models;
mod pool;
mod train;


pub use arch::{build_discriminator, build_generator, GeneratorKind, NetConfig, ResPad};
pub use checkpoint::{
    load_checkpoint, load_matching, save_checkpoint, CheckpointMeta, CHECKPOINT_VERSION,
};
pub use loss::{
    cycle_loss, gan_loss_discriminator, gan_loss_generator, l1_mean, mse, spatial_loss,
    total_loss, GanMode, LossBreakdown,
};
pub use models::{
    build_models, build_models_with, discriminator_backward, generator_backward,
    generator_forward, h_only_backward, GenForward, GenTerms, SpCycleGanModels, TermWeights,
};
pub use pool::ImagePool;
pub use train::{
    append_history_csv, checkpoint_name, learning_rate, resume_train, train, AdamSet, HUpdate,
    HistoryRow, TrainConfig, TrainOutcome, HISTORY_CSV_HEADER,
};

use sha2::{Digest, Sha256};

/// Stretches one base seed into independent streams, one per labeled use.
pub(crate) fn derive_seed(base: u64, domain: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(domain.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}
