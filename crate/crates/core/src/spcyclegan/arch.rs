//! Network blueprints: ResNet generators and patch discriminators.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::GanMode;
use crate::nn::{Conv2d, ConvTranspose2d, InstanceNorm, Net, Node, Scalar};

/// Padding used inside residual blocks. Reflection needs the bottleneck
/// feature maps to be at least 2x2, i.e. inputs of 8x8 and up; zero
/// padding works down to 4x4 toy inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResPad {
    Reflect,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Resnet,
    /// Parameterless pass-through; isolates plumbing in tests.
    Identity,
}

/// Architecture hyperparameters shared by all five networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub base_features: usize,
    pub n_res_blocks: usize,
    /// Strided 4x4 stages in the discriminator; 0 selects a 1x1-conv
    /// per-pixel discriminator usable on tiny inputs.
    pub disc_layers: usize,
    pub res_pad: ResPad,
    pub kind: GeneratorKind,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            base_features: 64,
            n_res_blocks: 9,
            disc_layers: 3,
            res_pad: ResPad::Reflect,
            kind: GeneratorKind::Resnet,
        }
    }
}

impl NetConfig {
    /// Smallest architecture that still exercises every layer type; fits
    /// 4x4 inputs and is cheap enough for finite-difference checks.
    pub fn toy() -> Self {
        NetConfig {
            base_features: 2,
            n_res_blocks: 1,
            disc_layers: 0,
            res_pad: ResPad::Zero,
            kind: GeneratorKind::Resnet,
        }
    }
}

fn res_block<S: Scalar>(ch: usize, pad: ResPad, rng: &mut impl Rng) -> Vec<Node<S>> {
    match pad {
        ResPad::Reflect => vec![
            Node::ReflectPad(1),
            Node::Conv(Conv2d::new(ch, ch, 3, 1, 0, rng)),
            Node::InstanceNorm(InstanceNorm::default()),
            Node::Relu,
            Node::ReflectPad(1),
            Node::Conv(Conv2d::new(ch, ch, 3, 1, 0, rng)),
            Node::InstanceNorm(InstanceNorm::default()),
        ],
        ResPad::Zero => vec![
            Node::Conv(Conv2d::new(ch, ch, 3, 1, 1, rng)),
            Node::InstanceNorm(InstanceNorm::default()),
            Node::Relu,
            Node::Conv(Conv2d::new(ch, ch, 3, 1, 1, rng)),
            Node::InstanceNorm(InstanceNorm::default()),
        ],
    }
}

/// Single-channel ResNet generator: 7x7 stem, two stride-2 downsamplings,
/// `n_res_blocks` residual blocks, two stride-2 upsamplings, 7x7 head with
/// tanh. Output dims equal input dims whenever both are multiples of 4.
pub fn build_generator<S: Scalar>(cfg: &NetConfig, rng: &mut impl Rng) -> Net<S> {
    if cfg.kind == GeneratorKind::Identity {
        return Net::identity();
    }
    let f = cfg.base_features;
    let mut nodes = vec![
        Node::ReflectPad(3),
        Node::Conv(Conv2d::new(1, f, 7, 1, 0, rng)),
        Node::InstanceNorm(InstanceNorm::default()),
        Node::Relu,
        Node::Conv(Conv2d::new(f, 2 * f, 3, 2, 1, rng)),
        Node::InstanceNorm(InstanceNorm::default()),
        Node::Relu,
        Node::Conv(Conv2d::new(2 * f, 4 * f, 3, 2, 1, rng)),
        Node::InstanceNorm(InstanceNorm::default()),
        Node::Relu,
    ];
    for _ in 0..cfg.n_res_blocks {
        nodes.push(Node::Residual(res_block(4 * f, cfg.res_pad, rng)));
    }
    nodes.extend([
        Node::ConvT(ConvTranspose2d::new(4 * f, 2 * f, 3, 2, 1, 1, rng)),
        Node::InstanceNorm(InstanceNorm::default()),
        Node::Relu,
        Node::ConvT(ConvTranspose2d::new(2 * f, f, 3, 2, 1, 1, rng)),
        Node::InstanceNorm(InstanceNorm::default()),
        Node::Relu,
        Node::ReflectPad(3),
        Node::Conv(Conv2d::new(f, 1, 7, 1, 0, rng)),
        Node::Tanh,
    ]);
    Net::new(nodes)
}

/// Patch discriminator scoring overlapping receptive fields with a grid of
/// raw scores; `log_vanilla` mode appends a sigmoid so scores become
/// probabilities.
pub fn build_discriminator<S: Scalar>(
    cfg: &NetConfig,
    mode: GanMode,
    rng: &mut impl Rng,
) -> Net<S> {
    let f = cfg.base_features;
    let mut nodes = Vec::new();
    if cfg.disc_layers == 0 {
        nodes.extend([
            Node::Conv(Conv2d::new(1, f, 1, 1, 0, rng)),
            Node::LeakyRelu(0.2),
            Node::Conv(Conv2d::new(f, 2 * f, 1, 1, 0, rng)),
            Node::InstanceNorm(InstanceNorm::default()),
            Node::LeakyRelu(0.2),
            Node::Conv(Conv2d::new(2 * f, 1, 1, 1, 0, rng)),
        ]);
    } else {
        nodes.push(Node::Conv(Conv2d::new(1, f, 4, 2, 1, rng)));
        nodes.push(Node::LeakyRelu(0.2));
        let mut prev = 1usize;
        for n in 1..cfg.disc_layers {
            let mult = (1usize << n).min(8);
            nodes.push(Node::Conv(Conv2d::new(f * prev, f * mult, 4, 2, 1, rng)));
            nodes.push(Node::InstanceNorm(InstanceNorm::default()));
            nodes.push(Node::LeakyRelu(0.2));
            prev = mult;
        }
        let mult = (1usize << cfg.disc_layers).min(8);
        nodes.push(Node::Conv(Conv2d::new(f * prev, f * mult, 4, 1, 1, rng)));
        nodes.push(Node::InstanceNorm(InstanceNorm::default()));
        nodes.push(Node::LeakyRelu(0.2));
        nodes.push(Node::Conv(Conv2d::new(f * mult, 1, 4, 1, 1, rng)));
    }
    if mode == GanMode::LogVanilla {
        nodes.push(Node::Sigmoid);
    }
    Net::new(nodes)
}
