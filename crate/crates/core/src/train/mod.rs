//! Stage-I (generators, pseudo-pairs, translator) and Stage-II (refiner)
//! trainers. Every trainer is a pure function of its data, config and seed.

mod diagnostics;
mod gan;
mod optim;
mod pairs;
mod refiner;
mod stage1;
mod translator;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use diagnostics::{color_histogram_distance, orientation_correlation, orientation_histogram};
pub use gan::{finetune_target_generator, train_source_generator};
pub use optim::Adam;
pub use pairs::{build_pseudo_pairs, oracle_pairs, ImagePair, PairMode, PseudoPair};
pub use refiner::{train_refiner, RefinerReport, TrainingVideo};
pub use stage1::{run_stage1, Stage1Output, StyleSource};
pub use translator::{train_translator, TranslatorReport};

use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::losses::{validate_levels, LossWeights, WarpOperand};
use crate::nets::{FeatureExtractor, NetConfig};

pub const MIN_SOURCE_FRAMES: usize = 200;
pub const MIN_STYLE_FRAMES: usize = 100;
pub const MIN_PAIRS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub net: NetConfig,
    pub weights: LossWeights,
    /// Base learning rate; generator fine-tuning uses a tenth of it.
    pub lr: f32,
    pub batch_size: usize,
    pub gx_steps: usize,
    pub gy_steps: usize,
    pub translator_steps: usize,
    pub num_pairs: usize,
    /// Share of translator training pairs taken from oracle-stylized real
    /// source frames instead of generator samples (oracle mode only).
    pub real_fraction: f32,
    pub heldout_fraction: f32,
    pub eval_every: usize,
    pub refiner_steps: usize,
    pub refiner_batch: usize,
    /// Rollout length `W`.
    pub rollout: usize,
    pub warp_operand: WarpOperand,
    pub cx_h: f32,
    pub cx_eps: f32,
    pub perc_levels: Vec<usize>,
    pub temp_levels: Vec<usize>,
    /// Feature extractor checkpoint; `None` uses the seeded extractor.
    pub features: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            net: NetConfig::default(),
            weights: LossWeights::default(),
            lr: 2e-4,
            batch_size: 8,
            gx_steps: 2000,
            gy_steps: 500,
            translator_steps: 3000,
            num_pairs: 1000,
            real_fraction: 0.0,
            heldout_fraction: 0.1,
            eval_every: 250,
            refiner_steps: 1000,
            refiner_batch: 4,
            rollout: 4,
            warp_operand: WarpOperand::SourcePrev,
            cx_h: 0.5,
            cx_eps: 1e-5,
            perc_levels: vec![2, 3],
            temp_levels: vec![1, 2, 3],
            features: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.weights.validate()?;
        validate_levels(&self.perc_levels)?;
        validate_levels(&self.temp_levels)?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("train.lr must be positive, got {}", self.lr)));
        }
        if self.batch_size < 1 || self.refiner_batch < 1 {
            return Err(Error::config("batch sizes must be at least 1"));
        }
        if self.gx_steps < 1 || self.translator_steps < 1 || self.refiner_steps < 1 || self.eval_every < 1 {
            return Err(Error::config("step counts must be at least 1"));
        }
        if self.rollout < self.net.refiner_window + 1 {
            return Err(Error::config(format!(
                "rollout W={} must be at least L+1={}",
                self.rollout,
                self.net.refiner_window + 1
            )));
        }
        if !(0.0..=1.0).contains(&self.real_fraction) || !(0.0 < self.heldout_fraction && self.heldout_fraction < 1.0) {
            return Err(Error::config("real_fraction must be in [0,1] and heldout_fraction in (0,1)"));
        }
        if !(self.cx_h > 0.0 && self.cx_eps > 0.0) {
            return Err(Error::config("contextual h and eps must be positive"));
        }
        Ok(())
    }

    pub fn feature_extractor(&self) -> Result<FeatureExtractor> {
        match &self.features {
            Some(dir) => FeatureExtractor::from_checkpoint(dir),
            None => Ok(FeatureExtractor::from_seed(self.seed)),
        }
    }
}

/// One `step,term,value` record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub term: String,
    pub value: f32,
}

/// In-memory training log, written as CSV.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn push(&mut self, step: usize, term: impl Into<String>, value: f32) {
        self.rows.push(LogRow { step, term: term.into(), value });
    }

    pub fn values(&self, term: &str) -> Vec<f32> {
        self.rows.iter().filter(|r| r.term == term).map(|r| r.value).collect()
    }

    /// Mean of the first and of the last `window` values of `term`.
    pub fn smoothed_ends(&self, term: &str, window: usize) -> Option<(f32, f32)> {
        let v = self.values(term);
        if v.is_empty() || window == 0 {
            return None;
        }
        let w = window.min(v.len());
        let mean = |s: &[f32]| s.iter().sum::<f32>() / s.len() as f32;
        Some((mean(&v[..w]), mean(&v[v.len() - w..])))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,term,value\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.step, r.term, r.value);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

pub(crate) fn check_finite(v: f32, what: &str, step: usize) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} became {v} at step {step}")))
    }
}

/// Batch of frames drawn uniformly with replacement.
pub(crate) fn sample_batch<R: Rng>(frames: &[Frame], n: usize, rng: &mut R) -> Tensor {
    let picks: Vec<&Frame> = (0..n).map(|_| &frames[rng.random_range(0..frames.len())]).collect();
    Frame::batch_tensor(&picks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { rollout: 2, ..TrainConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = TrainConfig { translator_steps: 0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn log_csv_and_smoothing() {
        let mut log = TrainLog::default();
        for s in 0..10 {
            log.push(s, "loss", 10.0 - s as f32);
        }
        let csv = log.to_csv();
        assert!(csv.starts_with("step,term,value\n0,loss,10\n"));
        assert_eq!(log.smoothed_ends("loss", 2), Some((9.5, 1.5)));
        assert_eq!(log.smoothed_ends("none", 2), None);
    }
}
