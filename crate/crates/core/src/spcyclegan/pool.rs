//! Replay pool of generated images for discriminator updates.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::{Feat, Scalar};

/// Keeps up to `size` past fakes. Until full, every query stores its input
/// and returns it unchanged; afterwards each query returns, with equal
/// probability, either the input or a stored image swapped out for the
/// input. Size 0 disables the pool.
#[derive(Debug, Clone)]
pub struct ImagePool<S> {
    size: usize,
    items: Vec<Feat<S>>,
    rng: ChaCha8Rng,
}

impl<S: Scalar> ImagePool<S> {
    pub fn new(size: usize, seed: u64) -> Self {
        ImagePool {
            size,
            items: Vec::with_capacity(size),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn query(&mut self, img: Feat<S>) -> Feat<S> {
        if self.size == 0 {
            return img;
        }
        if self.items.len() < self.size {
            self.items.push(img.clone());
            return img;
        }
        if self.rng.random_bool(0.5) {
            let idx = self.rng.random_range(0..self.size);
            std::mem::replace(&mut self.items[idx], img)
        } else {
            img
        }
    }
}
