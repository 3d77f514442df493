//! Trainable networks, the frozen feature extractor and checkpoints.

mod checkpoint;
mod discriminator;
mod features;
mod generator;
mod params;
mod refiner;
mod translator;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use discriminator::Discriminator;
pub use features::{ConvStack, FeatureExtractor};
pub use generator::Generator;
pub use params::{Bound, Conv, Linear, ParamId, ParamStore};
pub use refiner::{Refiner, RefinerInput};
pub use translator::Translator;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub image_size: usize,
    pub base_channels: usize,
    pub latent_dim: usize,
    pub refiner_window: usize,
    pub refiner_residual: bool,
    pub refiner_channels: usize,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            base_channels: 32,
            latent_dim: 64,
            refiner_window: 2,
            refiner_residual: true,
            refiner_channels: 32,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 32 || !self.image_size.is_power_of_two() {
            return Err(Error::config(format!("image_size {} must be a power of two >= 32", self.image_size)));
        }
        if self.refiner_window < 1 {
            return Err(Error::config("refiner window L must be at least 1"));
        }
        if self.base_channels < 4 || self.latent_dim < 1 || self.refiner_channels < 1 {
            return Err(Error::config("channel counts and latent_dim must be positive (base_channels >= 4)"));
        }
        Ok(())
    }

    /// Independent deterministic stream for the network named `tag`.
    pub(crate) fn rng(&self, tag: &str) -> ChaCha8Rng {
        tagged_rng(self.seed, tag)
    }
}

/// Deterministic random stream derived from `seed` and a purpose tag.
pub fn tagged_rng(seed: u64, tag: &str) -> ChaCha8Rng {
    let h = tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x1000_0000_01b3));
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

/// A latent vector for the generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentCode(pub Vec<f32>);

impl LatentCode {
    pub fn sample<R: rand::Rng>(dim: usize, rng: &mut R) -> Self {
        Self((0..dim).map(|_| StandardNormal.sample(rng)).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn distance(&self, other: &LatentCode) -> f32 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).powi(2)).sum::<f32>().sqrt()
    }
}

/// Anything that owns a parameter store.
pub trait Network {
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
}

/// Builds a network from the checkpoint's own config and loads its `prefix`
/// section.
pub fn load_network<N: Network>(
    ck: &Checkpoint,
    prefix: &str,
    build: impl FnOnce(&NetConfig) -> Result<N>,
) -> Result<N> {
    let mut net = build(&ck.meta.config)?;
    ck.restore(prefix, net.store_mut())?;
    Ok(net)
}

/// Exact number of trainable scalars.
pub fn param_count(net: &impl Network) -> usize {
    net.store().numel()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_deploy_stack_is_under_six_million() {
        let cfg = NetConfig::default();
        let total = param_count(&Translator::new(&cfg).unwrap()) + param_count(&Refiner::new(&cfg).unwrap());
        assert!(total < 6_000_000, "{total}");
    }

    #[test]
    fn invalid_sizes_are_rejected() {
        let cfg = NetConfig { image_size: 48, ..NetConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = NetConfig { refiner_window: 0, ..NetConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
