//! Flat `key = value` run configuration with a fixed, documented key set.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::flowwarp::{
    ExternalFlow, ExternalParse, FlowProvider, HeuristicParse, HornSchunck, ParseProvider, TruthFlow, TruthParse,
};
use crate::losses::{LossWeights, WarpOperand};
use crate::nets::NetConfig;
use crate::train::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    /// Non-negative integer.
    UInt,
    Float,
    Bool,
    /// Free-form string; the empty string means unset.
    Str,
    Choice(&'static [&'static str]),
    /// Comma-separated feature levels.
    Levels,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    UInt(u64),
    Float(f64),
    Bool(bool),
    Str(String),
    Levels(Vec<usize>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::UInt(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v:?}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Str(v) => write!(f, "{v}"),
            Value::Levels(v) => {
                let parts: Vec<String> = v.iter().map(ToString::to_string).collect();
                write!(f, "{}", parts.join(","))
            }
        }
    }
}

pub struct KeySpec {
    pub key: &'static str,
    pub kind: Kind,
    pub default: &'static str,
    pub doc: &'static str,
}

const fn spec(key: &'static str, kind: Kind, default: &'static str, doc: &'static str) -> KeySpec {
    KeySpec { key, kind, default, doc }
}

const FLOW_PROVIDERS: &[&str] = &["truth", "hs", "external"];
const PARSE_PROVIDERS: &[&str] = &["truth", "heuristic", "external"];
const WARP_OPERANDS: &[&str] = &["source_prev", "refined_prev"];

/// Every accepted key with its default.
pub const KEYS: &[KeySpec] = &[
    spec("seed", Kind::UInt, "0", "single source of all randomness"),
    spec("jobs", Kind::UInt, "1", "worker threads for convolutions; 1 runs sequentially, 0 uses all cores"),
    spec("data.size", Kind::UInt, "64", "frame side length in pixels"),
    spec("net.base_channels", Kind::UInt, "32", "translator/generator/discriminator width"),
    spec("net.latent_dim", Kind::UInt, "64", "generator latent size"),
    spec("net.refiner_window", Kind::UInt, "2", "refiner temporal window L"),
    spec("net.refiner_residual", Kind::Bool, "true", "refiner predicts a delta on the intermediate"),
    spec("net.refiner_channels", Kind::UInt, "32", "refiner width"),
    spec("features.weights", Kind::Str, "", "feature extractor checkpoint; empty uses the seeded extractor"),
    spec("loss.lambda_adv", Kind::Float, "1.0", "adversarial weight"),
    spec("loss.lambda_recon", Kind::Float, "10.0", "L1 reconstruction weight"),
    spec("loss.lambda_perc", Kind::Float, "1.0", "contextual perceptual weight"),
    spec("loss.lambda_warp", Kind::Float, "1.0", "flow-warp consistency weight"),
    spec("loss.lambda_temp", Kind::Float, "0.5", "feature-space temporal weight"),
    spec("loss.r1_gamma", Kind::Float, "1.0", "R1 gradient penalty weight"),
    spec("loss.cx_h", Kind::Float, "0.5", "contextual loss bandwidth"),
    spec("loss.cx_eps", Kind::Float, "1e-5", "contextual loss epsilon"),
    spec("loss.perc_levels", Kind::Levels, "2,3", "feature levels of the perceptual loss"),
    spec("loss.temp_levels", Kind::Levels, "1,2,3", "feature levels of the temporal loss"),
    spec("warp.operand", Kind::Choice(WARP_OPERANDS), "source_prev", "frame warped by the warp loss"),
    spec("flow.provider", Kind::Choice(FLOW_PROVIDERS), "truth", "flow source for refiner training"),
    spec("flow.hs_iters", Kind::UInt, "100", "Horn-Schunck iterations"),
    spec("flow.hs_alpha", Kind::Float, "10.0", "Horn-Schunck smoothness"),
    spec("flow.weights", Kind::Str, "", "flow network checkpoint (external provider)"),
    spec("parse.provider", Kind::Choice(PARSE_PROVIDERS), "truth", "background parsing source for refiner training"),
    spec("parse.tau", Kind::Float, "0.05", "heuristic parser color tolerance"),
    spec("parse.weights", Kind::Str, "", "parsing network checkpoint (external provider)"),
    spec("train.lr", Kind::Float, "0.0002", "base learning rate"),
    spec("train.batch", Kind::UInt, "8", "stage-1 batch size"),
    spec("train.eval_every", Kind::UInt, "250", "translator held-out evaluation interval"),
    spec("stage1.gx_steps", Kind::UInt, "2000", "source generator steps"),
    spec("stage1.gy_steps", Kind::UInt, "500", "target generator fine-tuning steps"),
    spec("stage1.translator_steps", Kind::UInt, "3000", "translator steps"),
    spec("stage1.num_pairs", Kind::UInt, "1000", "translator training pairs"),
    spec("stage1.real_fraction", Kind::Float, "0.0", "share of oracle-stylized real frames among the pairs"),
    spec("stage1.heldout", Kind::Float, "0.1", "held-out share of the pairs"),
    spec("stage2.steps", Kind::UInt, "1000", "refiner steps"),
    spec("stage2.rollout", Kind::UInt, "4", "refiner rollout length W"),
    spec("stage2.batch", Kind::UInt, "4", "refiner batch size"),
    spec("bench.parallel", Kind::Bool, "false", "enable internal parallelism in the latency benchmark"),
    spec("bench.warmup", Kind::UInt, "10", "latency warmup frames"),
    spec("bench.reps", Kind::UInt, "100", "latency timed frames"),
];

fn lookup(key: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|s| s.key == key)
}

fn parse_value(spec: &KeySpec, raw: &str) -> Result<Value> {
    let bad = |what: &str| Error::config(format!("{}: expected {what}, got {raw:?}", spec.key));
    Ok(match spec.kind {
        Kind::UInt => Value::UInt(raw.parse().map_err(|_| bad("a non-negative integer"))?),
        Kind::Float => {
            let v: f64 = raw.parse().map_err(|_| bad("a number"))?;
            if !v.is_finite() {
                return Err(bad("a finite number"));
            }
            Value::Float(v)
        }
        Kind::Bool => Value::Bool(raw.parse().map_err(|_| bad("true or false"))?),
        Kind::Str => Value::Str(raw.to_string()),
        Kind::Choice(options) => {
            if !options.contains(&raw) {
                return Err(bad(&format!("one of {}", options.join(", "))));
            }
            Value::Str(raw.to_string())
        }
        Kind::Levels => Value::Levels(
            raw.split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("comma-separated integers"))?,
        ),
    })
}

/// Latency benchmark settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchSettings {
    pub parallel: bool,
    pub warmup: usize,
    pub reps: usize,
}

/// Resolved configuration: every key of [`KEYS`] mapped to a typed value.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    values: BTreeMap<&'static str, Value>,
}

impl Default for Config {
    fn default() -> Self {
        let values =
            KEYS.iter().map(|s| (s.key, parse_value(s, s.default).expect("built-in default parses"))).collect();
        Self { values }
    }
}

impl Config {
    /// Parses `key = value` lines over the defaults. `#` starts a comment;
    /// unknown, duplicate or ill-typed keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| Error::config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(Error::config(format!("line {}: duplicate key {key}", n + 1)));
            }
            seen.push(key);
            cfg.set(key, value.trim()).map_err(|e| {
                Error::config(format!("line {}: {}", n + 1, e.to_string().trim_start_matches("configuration error: ")))
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
        Self::parse(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let spec = lookup(key).ok_or_else(|| Error::config(format!("unknown key {key:?}")))?;
        self.values.insert(spec.key, parse_value(spec, raw)?);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }

    fn uint(&self, key: &str) -> u64 {
        match self.values[key] {
            Value::UInt(v) => v,
            _ => unreachable!("{key} is an integer key"),
        }
    }

    fn usize(&self, key: &str) -> usize {
        self.uint(key) as usize
    }

    fn float(&self, key: &str) -> f32 {
        match self.values[key] {
            Value::Float(v) => v as f32,
            _ => unreachable!("{key} is a float key"),
        }
    }

    fn flag(&self, key: &str) -> bool {
        match self.values[key] {
            Value::Bool(v) => v,
            _ => unreachable!("{key} is a bool key"),
        }
    }

    fn string(&self, key: &str) -> &str {
        match &self.values[key] {
            Value::Str(v) => v,
            _ => unreachable!("{key} is a string key"),
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        let s = self.string(key);
        (!s.is_empty()).then(|| PathBuf::from(s))
    }

    fn levels(&self, key: &str) -> Vec<usize> {
        match &self.values[key] {
            Value::Levels(v) => v.clone(),
            _ => unreachable!("{key} is a levels key"),
        }
    }

    pub fn seed(&self) -> u64 {
        self.uint("seed")
    }

    pub fn jobs(&self) -> usize {
        self.usize("jobs")
    }

    pub fn image_size(&self) -> usize {
        self.usize("data.size")
    }

    /// Resolved config text: every key in sorted order, re-parseable.
    pub fn to_resolved_string(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn write_resolved(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_resolved_string())?;
        Ok(())
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            image_size: self.image_size(),
            base_channels: self.usize("net.base_channels"),
            latent_dim: self.usize("net.latent_dim"),
            refiner_window: self.usize("net.refiner_window"),
            refiner_residual: self.flag("net.refiner_residual"),
            refiner_channels: self.usize("net.refiner_channels"),
            seed: self.seed(),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            seed: self.seed(),
            net: self.net_config(),
            weights: LossWeights {
                lambda_adv: self.float("loss.lambda_adv"),
                lambda_recon: self.float("loss.lambda_recon"),
                lambda_perc: self.float("loss.lambda_perc"),
                lambda_warp: self.float("loss.lambda_warp"),
                lambda_temp: self.float("loss.lambda_temp"),
                r1_gamma: self.float("loss.r1_gamma"),
            },
            lr: self.float("train.lr"),
            batch_size: self.usize("train.batch"),
            gx_steps: self.usize("stage1.gx_steps"),
            gy_steps: self.usize("stage1.gy_steps"),
            translator_steps: self.usize("stage1.translator_steps"),
            num_pairs: self.usize("stage1.num_pairs"),
            real_fraction: self.float("stage1.real_fraction"),
            heldout_fraction: self.float("stage1.heldout"),
            eval_every: self.usize("train.eval_every"),
            refiner_steps: self.usize("stage2.steps"),
            refiner_batch: self.usize("stage2.batch"),
            rollout: self.usize("stage2.rollout"),
            warp_operand: self.string("warp.operand").parse::<WarpOperand>()?,
            cx_h: self.float("loss.cx_h"),
            cx_eps: self.float("loss.cx_eps"),
            perc_levels: self.levels("loss.perc_levels"),
            temp_levels: self.levels("loss.temp_levels"),
            features: self.path("features.weights"),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn flow_provider(&self) -> Result<Box<dyn FlowProvider>> {
        Ok(match self.string("flow.provider") {
            "truth" => Box::new(TruthFlow),
            "hs" => {
                let iters = self.uint("flow.hs_iters");
                if iters == 0 {
                    return Err(Error::config("flow.hs_iters must be positive"));
                }
                Box::new(HornSchunck { iters: iters as i64, alpha: self.float("flow.hs_alpha") })
            }
            _ => {
                let dir = self
                    .path("flow.weights")
                    .ok_or_else(|| Error::config("flow.provider = external needs flow.weights"))?;
                Box::new(ExternalFlow::load(&dir)?)
            }
        })
    }

    pub fn parse_provider(&self) -> Result<Box<dyn ParseProvider>> {
        Ok(match self.string("parse.provider") {
            "truth" => Box::new(TruthParse),
            "heuristic" => Box::new(HeuristicParse { tau: self.float("parse.tau") }),
            _ => {
                let dir = self
                    .path("parse.weights")
                    .ok_or_else(|| Error::config("parse.provider = external needs parse.weights"))?;
                Box::new(ExternalParse::load(&dir)?)
            }
        })
    }

    pub fn bench(&self) -> BenchSettings {
        BenchSettings {
            parallel: self.flag("bench.parallel"),
            warmup: self.usize("bench.warmup"),
            reps: self.usize("bench.reps"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_match_library_defaults() {
        let cfg = Config::default();
        assert_eq!(cfg.train_config().unwrap(), TrainConfig::default());
        assert_eq!(cfg.net_config(), NetConfig::default());
        assert_eq!(cfg.bench(), BenchSettings { parallel: false, warmup: 10, reps: 100 });
    }

    #[test]
    fn parses_comments_and_overrides() {
        let cfg =
            Config::parse("# run\nseed = 7   # trailing\n\nloss.lambda_warp=2.5\nloss.temp_levels = 1, 3\n").unwrap();
        let t = cfg.train_config().unwrap();
        assert_eq!(t.seed, 7);
        assert_eq!(t.net.seed, 7);
        assert_eq!(t.weights.lambda_warp, 2.5);
        assert_eq!(t.temp_levels, vec![1, 3]);
    }

    #[test]
    fn rejects_unknown_duplicate_and_ill_typed_keys() {
        for text in [
            "loss.lamda_warp = 1",
            "seed = 1\nseed = 2",
            "seed = -1",
            "net.refiner_residual = yes",
            "flow.provider = raft",
            "train.lr = nan",
            "just a line",
        ] {
            assert!(matches!(Config::parse(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn semantic_validation_happens_on_conversion() {
        let cfg = Config::parse("stage2.rollout = 2").unwrap();
        assert!(matches!(cfg.train_config(), Err(Error::Config(_))));
        let cfg = Config::parse("flow.provider = external").unwrap();
        assert!(matches!(cfg.flow_provider(), Err(Error::Config(_))));
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = Config::load(Path::new("/nonexistent/run.cfg")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/run.cfg"));
    }

    #[test]
    fn every_key_has_a_parseable_default() {
        for s in KEYS {
            parse_value(s, s.default).unwrap();
            assert!(!s.doc.is_empty());
        }
    }

    proptest! {
        #[test]
        fn resolved_config_round_trips(seed in any::<u64>(), lr in 1e-6f64..1.0, w in 0.0f64..100.0, residual: bool) {
            let mut cfg = Config::default();
            cfg.set("seed", &seed.to_string()).unwrap();
            cfg.set("train.lr", &lr.to_string()).unwrap();
            cfg.set("loss.lambda_temp", &w.to_string()).unwrap();
            cfg.set("net.refiner_residual", &residual.to_string()).unwrap();
            let again = Config::parse(&cfg.to_resolved_string()).unwrap();
            prop_assert_eq!(&again, &cfg);
            prop_assert_eq!(again.to_resolved_string(), cfg.to_resolved_string());
        }
    }
}
