use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::nets::{tagged_rng, Generator, LatentCode};
use crate::synthdata::oracle_stylize;

/// How the stylized half of a pseudo-pair is produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// `ŷ = oracle_stylize(x̂)`: exact ground truth for verification.
    Oracle,
    /// `ŷ = G_Y(z)` with the same `z` as `x̂ = G_X(z)`.
    Gan,
}

impl FromStr for PairMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "gan" => Ok(Self::Gan),
            other => Err(Error::config(format!("pair mode must be oracle or gan, got {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoPair {
    pub x_hat: Frame,
    pub y_hat: Frame,
    pub z: LatentCode,
}

/// A supervised (input, target) pair for translator training.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePair {
    pub x: Frame,
    pub y: Frame,
}

impl From<PseudoPair> for ImagePair {
    fn from(p: PseudoPair) -> Self {
        Self { x: p.x_hat, y: p.y_hat }
    }
}

const CHUNK: usize = 16;

/// `n` pairs from i.i.d. latents drawn from `seed`. `gy` is required in GAN
/// mode and ignored in oracle mode.
pub fn build_pseudo_pairs(
    gx: &Generator,
    gy: Option<&Generator>,
    mode: PairMode,
    n: i64,
    seed: u64,
) -> Result<Vec<PseudoPair>> {
    if n <= 0 {
        return Err(Error::config(format!("number of pseudo-pairs must be positive, got {n}")));
    }
    let gy = match (mode, gy) {
        (PairMode::Gan, None) => return Err(Error::MissingInput("GAN pair mode needs the target generator".into())),
        (PairMode::Gan, Some(gy)) => {
            if gy.config() != gx.config() {
                return Err(Error::Compatibility("source and target generators differ in config".into()));
            }
            Some(gy)
        }
        (PairMode::Oracle, _) => None,
    };
    let mut rng = tagged_rng(seed, "pseudo_pairs");
    let dim = gx.config().latent_dim;
    let zs: Vec<LatentCode> = (0..n).map(|_| LatentCode::sample(dim, &mut rng)).collect();
    let mut out = Vec::with_capacity(zs.len());
    for chunk in zs.chunks(CHUNK) {
        let xs = gx.generate(chunk)?;
        let ys = match gy {
            Some(gy) => gy.generate(chunk)?,
            None => xs.iter().map(oracle_stylize).collect(),
        };
        for ((x_hat, y_hat), z) in xs.into_iter().zip(ys).zip(chunk) {
            out.push(PseudoPair { x_hat, y_hat, z: z.clone() });
        }
    }
    Ok(out)
}

/// Real source frames paired with their oracle stylization.
pub fn oracle_pairs(frames: &[Frame]) -> Vec<ImagePair> {
    frames.iter().map(|x| ImagePair { x: x.clone(), y: oracle_stylize(x) }).collect()
}
