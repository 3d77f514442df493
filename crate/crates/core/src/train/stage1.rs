use super::{
    build_pseudo_pairs, finetune_target_generator, oracle_pairs, train_source_generator, train_translator, ImagePair,
    PairMode, TrainConfig, TrainLog, TranslatorReport,
};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::nets::{load_network, Checkpoint, Generator};

/// Where the stylized half of the translator's training pairs comes from.
#[derive(Clone, Debug)]
pub enum StyleSource {
    Oracle,
    /// Unpaired style frames; `G_Y` is fine-tuned on them.
    Frames(Vec<Frame>),
}

impl StyleSource {
    pub fn mode(&self) -> PairMode {
        match self {
            Self::Oracle => PairMode::Oracle,
            Self::Frames(_) => PairMode::Gan,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Stage1Output {
    pub source_generator: Checkpoint,
    pub target_generator: Option<Checkpoint>,
    pub translator: Checkpoint,
    pub report: TranslatorReport,
}

/// Trains `G_X` on `source`, derives `G_Y` when `style` holds frames, builds
/// the pseudo-pair set and trains the translator on it.
pub fn run_stage1(
    source: &[Frame],
    style: &StyleSource,
    cfg: &TrainConfig,
    log: &mut TrainLog,
) -> Result<Stage1Output> {
    cfg.validate()?;
    let n_real = (cfg.num_pairs as f64 * cfg.real_fraction as f64).round() as usize;
    if n_real > 0 && style.mode() == PairMode::Gan {
        return Err(Error::config("stage1.real_fraction needs oracle style (real frames have no GAN target)"));
    }
    let n_pseudo = cfg.num_pairs - n_real;
    let gx_ck = train_source_generator(source, cfg, log)?;
    let gx = load_network(&gx_ck, "gen", Generator::new)?;
    let gy_ck = match style {
        StyleSource::Oracle => None,
        StyleSource::Frames(frames) => Some(finetune_target_generator(&gx_ck, frames, cfg, log)?),
    };
    let gy = gy_ck.as_ref().map(|ck| load_network(ck, "gen", Generator::new)).transpose()?;

    let mut pairs: Vec<ImagePair> = Vec::with_capacity(cfg.num_pairs);
    if n_pseudo > 0 {
        let pseudo = build_pseudo_pairs(&gx, gy.as_ref(), style.mode(), n_pseudo as i64, cfg.seed)?;
        pairs.extend(pseudo.into_iter().map(ImagePair::from));
    }
    if n_real > 0 {
        let stride = source.len().checked_div(n_real).unwrap_or(1).max(1);
        let picked: Vec<Frame> = source.iter().step_by(stride).cycle().take(n_real).cloned().collect();
        pairs.extend(oracle_pairs(&picked));
    }
    log::info!("stage1: {n_pseudo} pseudo-pairs, {n_real} real pairs");
    let (translator, report) = train_translator(&pairs, cfg, log)?;
    Ok(Stage1Output { source_generator: gx_ck, target_generator: gy_ck, translator, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_pairs_need_oracle_style() {
        let cfg = TrainConfig { real_fraction: 0.5, ..TrainConfig::default() };
        let style = StyleSource::Frames(vec![Frame::black(64, 64)]);
        let err = run_stage1(&[Frame::black(64, 64)], &style, &cfg, &mut TrainLog::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
