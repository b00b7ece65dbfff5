//! The five-network bundle and the gradient flow of one training step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::arch::{build_discriminator, build_generator, NetConfig};
use super::loss::{
    gan_loss_discriminator, gan_loss_discriminator_grads, gan_loss_generator,
    gan_loss_generator_grad, l1_grad, l1_mean, mse, mse_grad, GanMode,
};
use super::train::TrainConfig;
use super::derive_seed;
use crate::error::Result;
use crate::nn::{Feat, Net, NetCtx, Scalar};

/// Generators `g_ab` (A→B), `g_ba` (B→A), the spatial-constraint network
/// `h` (B-like→A-like), and discriminators for each domain. All operate on
/// single-channel images in [-1, 1].
#[derive(Debug, Clone)]
pub struct SpCycleGanModels<S> {
    pub g_ab: Net<S>,
    pub g_ba: Net<S>,
    pub h: Net<S>,
    pub d_a: Net<S>,
    pub d_b: Net<S>,
}

/// Freshly initialized networks; every weight is a deterministic function
/// of `(net, gan_mode, seed)`.
pub fn build_models_with<S: Scalar>(
    net: &NetConfig,
    gan_mode: GanMode,
    seed: u64,
) -> SpCycleGanModels<S> {
    let gen = |tag: &str| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, tag));
        build_generator(net, &mut rng)
    };
    let disc = |tag: &str| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, tag));
        build_discriminator(net, gan_mode, &mut rng)
    };
    SpCycleGanModels {
        g_ab: gen("init/g_ab"),
        g_ba: gen("init/g_ba"),
        h: gen("init/h"),
        d_a: disc("init/d_a"),
        d_b: disc("init/d_b"),
    }
}

pub fn build_models<S: Scalar>(cfg: &TrainConfig) -> SpCycleGanModels<S> {
    build_models_with(&cfg.net, cfg.gan_mode, cfg.seed)
}

/// Weight on each generator-objective term; training uses
/// `{1, 1, lambda1, lambda2}`, gradient checks isolate terms with unit
/// vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermWeights {
    pub gan_ab: f64,
    pub gan_ba: f64,
    pub cyc: f64,
    pub spatial: f64,
}

impl TermWeights {
    pub fn training(lambda1: f64, lambda2: f64) -> Self {
        TermWeights { gan_ab: 1.0, gan_ba: 1.0, cyc: lambda1, spatial: lambda2 }
    }
}

/// Intermediate images and saved activations of one generator-side pass.
pub struct GenForward<S> {
    pub fake_b: Feat<S>,
    pub rec_a: Feat<S>,
    pub fake_a: Feat<S>,
    pub rec_b: Feat<S>,
    pub h_fb: Feat<S>,
    ctx_ab_a: NetCtx<S>,
    ctx_ba_fb: NetCtx<S>,
    ctx_ba_b: NetCtx<S>,
    ctx_ab_fa: NetCtx<S>,
    ctx_h_fb: NetCtx<S>,
}

/// Raw (unweighted) values of the four generator loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenTerms {
    pub gan_ab: f64,
    pub gan_ba: f64,
    pub cyc: f64,
    pub spatial: f64,
}

/// Runs every forward application a generator step needs: `a→fake_b→rec_a`,
/// `b→fake_a→rec_b`, and `fake_b→h_fb`, keeping one context per
/// application so networks used twice get both gradient contributions.
pub fn generator_forward<S: Scalar>(
    m: &SpCycleGanModels<S>,
    a: &Feat<S>,
    b: &Feat<S>,
) -> Result<GenForward<S>> {
    let (fake_b, ctx_ab_a) = m.g_ab.forward(a.clone())?;
    let (rec_a, ctx_ba_fb) = m.g_ba.forward(fake_b.clone())?;
    let (fake_a, ctx_ba_b) = m.g_ba.forward(b.clone())?;
    let (rec_b, ctx_ab_fa) = m.g_ab.forward(fake_a.clone())?;
    let (h_fb, ctx_h_fb) = m.h.forward(fake_b.clone())?;
    Ok(GenForward {
        fake_b,
        rec_a,
        fake_a,
        rec_b,
        h_fb,
        ctx_ab_a,
        ctx_ba_fb,
        ctx_ba_b,
        ctx_ab_fa,
        ctx_h_fb,
    })
}

fn scaled<S: Scalar>(mut g: Feat<S>, w: f64) -> Feat<S> {
    let w = S::from_f64c(w);
    g.mapv_inplace(|v| v * w);
    g
}

/// Accumulates the weighted generator objective's gradients into `g_ab`,
/// `g_ba`, and `h`. Discriminators only route gradients (their own
/// accumulators stay untouched). Returns the unweighted term values.
pub fn generator_backward<S: Scalar>(
    m: &mut SpCycleGanModels<S>,
    fwd: &GenForward<S>,
    a: &Feat<S>,
    b: &Feat<S>,
    w: &TermWeights,
    mode: GanMode,
) -> Result<GenTerms> {
    let (d_fb, ctx_db) = m.d_b.forward(fwd.fake_b.clone())?;
    let gan_ab = gan_loss_generator(&d_fb, mode)?;
    let g_fb_gan =
        m.d_b
            .backward(&ctx_db, scaled(gan_loss_generator_grad(&d_fb, mode), w.gan_ab), false)?;

    let (d_fa, ctx_da) = m.d_a.forward(fwd.fake_a.clone())?;
    let gan_ba = gan_loss_generator(&d_fa, mode)?;
    let g_fa_gan =
        m.d_a
            .backward(&ctx_da, scaled(gan_loss_generator_grad(&d_fa, mode), w.gan_ba), false)?;

    let cyc_a = l1_mean(&fwd.rec_a, a)?;
    let cyc_b = l1_mean(&fwd.rec_b, b)?;
    let g_fb_cyc = m
        .g_ba
        .backward(&fwd.ctx_ba_fb, scaled(l1_grad(&fwd.rec_a, a), w.cyc), true)?;
    let g_fa_cyc = m
        .g_ab
        .backward(&fwd.ctx_ab_fa, scaled(l1_grad(&fwd.rec_b, b), w.cyc), true)?;

    let spatial = mse(&fwd.h_fb, a)?;
    let g_fb_sp = m
        .h
        .backward(&fwd.ctx_h_fb, scaled(mse_grad(&fwd.h_fb, a), w.spatial), true)?;

    m.g_ab.backward(&fwd.ctx_ab_a, g_fb_gan + g_fb_cyc + g_fb_sp, true)?;
    m.g_ba.backward(&fwd.ctx_ba_b, g_fa_gan + g_fa_cyc, true)?;

    Ok(GenTerms {
        gan_ab: gan_ab.to_f64c(),
        gan_ba: gan_ba.to_f64c(),
        cyc: (cyc_a + cyc_b).to_f64c(),
        spatial: spatial.to_f64c(),
    })
}

/// Accumulates the spatial term's gradient into `h` alone, leaving the
/// generators out of the loop; used by the alternating update schedule.
pub fn h_only_backward<S: Scalar>(
    m: &mut SpCycleGanModels<S>,
    fwd: &GenForward<S>,
    a: &Feat<S>,
    weight: f64,
) -> Result<()> {
    m.h
        .backward(&fwd.ctx_h_fb, scaled(mse_grad(&fwd.h_fb, a), weight), true)?;
    Ok(())
}

/// One discriminator update's gradients: real batch toward 1, fake batch
/// toward 0. Returns the loss value.
pub fn discriminator_backward<S: Scalar>(
    d: &mut Net<S>,
    real: &Feat<S>,
    fake: &Feat<S>,
    mode: GanMode,
) -> Result<f64> {
    let (r_out, r_ctx) = d.forward(real.clone())?;
    let (f_out, f_ctx) = d.forward(fake.clone())?;
    let loss = gan_loss_discriminator(&r_out, &f_out, mode)?;
    let (g_r, g_f) = gan_loss_discriminator_grads(&r_out, &f_out, mode);
    d.backward(&r_ctx, g_r, true)?;
    d.backward(&f_ctx, g_f, true)?;
    Ok(loss.to_f64c())
}
