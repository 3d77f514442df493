//! Pluggable flow and parsing sources for training.

use std::path::Path;

use super::hs::estimate_flow_classical;
use super::parse::{parse_background, parse_background_heuristic};
use crate::autograd::{sigmoid, Tensor};
use crate::error::{Error, Result};
use crate::frame::{FlowField, Frame, ParsingMap};
use crate::nets::ConvStack;

/// Source of the backward flow from `next` to `prev`. `truth` is the
/// ground-truth flow of `next`, when known.
pub trait FlowProvider: Send + Sync {
    fn name(&self) -> &'static str;
    fn flow(&self, prev: &Frame, next: &Frame, truth: Option<&FlowField>) -> Result<FlowField>;
}

/// Source of background probabilities for `frame`. `truth` is the frame's
/// ground-truth background mask, when known.
pub trait ParseProvider: Send + Sync {
    fn name(&self) -> &'static str;
    fn parse(&self, frame: &Frame, truth: Option<&ParsingMap>) -> Result<ParsingMap>;
}

pub struct TruthFlow;

impl FlowProvider for TruthFlow {
    fn name(&self) -> &'static str {
        "truth"
    }

    fn flow(&self, prev: &Frame, next: &Frame, truth: Option<&FlowField>) -> Result<FlowField> {
        prev.check_same_shape(next, "flow provider")?;
        let f = truth.ok_or_else(|| Error::MissingInput("ground-truth flow provider needs the scene's flow".into()))?;
        if f.width() != next.width() || f.height() != next.height() {
            return Err(Error::dim("ground-truth flow and frame differ in size"));
        }
        Ok(f.clone())
    }
}

pub struct HornSchunck {
    pub iters: i64,
    pub alpha: f32,
}

impl Default for HornSchunck {
    fn default() -> Self {
        Self { iters: 100, alpha: 10.0 }
    }
}

impl FlowProvider for HornSchunck {
    fn name(&self) -> &'static str {
        "hs"
    }

    fn flow(&self, prev: &Frame, next: &Frame, _truth: Option<&FlowField>) -> Result<FlowField> {
        estimate_flow_classical(prev, next, self.iters, self.alpha)
    }
}

/// Flow network loaded from a checkpoint: a conv stack mapping the
/// channel-concatenated `(prev, next)` pair to `(dx, dy)`.
pub struct ExternalFlow {
    net: ConvStack,
}

impl ExternalFlow {
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Self { net: ConvStack::from_checkpoint(dir, "flow", 6, 2)? })
    }
}

impl FlowProvider for ExternalFlow {
    fn name(&self) -> &'static str {
        "external"
    }

    fn flow(&self, prev: &Frame, next: &Frame, _truth: Option<&FlowField>) -> Result<FlowField> {
        prev.check_same_shape(next, "flow provider")?;
        let (w, h) = (next.width(), next.height());
        let mut data = prev.data().to_vec();
        data.extend_from_slice(next.data());
        let out = self.net.run(Tensor::new([1, 6, h, w], data));
        let bound = w.max(h) as f32;
        FlowField::new(w, h, out.into_data().into_iter().map(|v| v.clamp(-bound, bound)).collect())
    }
}

pub struct TruthParse;

impl ParseProvider for TruthParse {
    fn name(&self) -> &'static str {
        "truth"
    }

    fn parse(&self, frame: &Frame, truth: Option<&ParsingMap>) -> Result<ParsingMap> {
        parse_background(frame, truth)
    }
}

pub struct HeuristicParse {
    pub tau: f32,
}

impl ParseProvider for HeuristicParse {
    fn name(&self) -> &'static str {
        "heuristic"
    }

    fn parse(&self, frame: &Frame, _truth: Option<&ParsingMap>) -> Result<ParsingMap> {
        parse_background_heuristic(frame, self.tau)
    }
}

/// Parsing network loaded from a checkpoint: a conv stack from RGB to one
/// logit channel.
pub struct ExternalParse {
    net: ConvStack,
}

impl ExternalParse {
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Self { net: ConvStack::from_checkpoint(dir, "parse", 3, 1)? })
    }
}

impl ParseProvider for ExternalParse {
    fn name(&self) -> &'static str {
        "external"
    }

    fn parse(&self, frame: &Frame, _truth: Option<&ParsingMap>) -> Result<ParsingMap> {
        let out = self.net.run(frame.to_tensor());
        ParsingMap::new(frame.width(), frame.height(), out.data().iter().map(|&v| sigmoid(v)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{Checkpoint, NetConfig};
    use crate::synthdata::{render_video, sample_scene};

    #[test]
    fn truth_providers_require_truth() {
        let f = Frame::black(8, 8);
        assert!(matches!(TruthFlow.flow(&f, &f, None), Err(Error::MissingInput(_))));
        assert!(matches!(TruthParse.parse(&f, None), Err(Error::MissingInput(_))));
    }

    #[test]
    fn estimators_ignore_truth() {
        let (video, truth) = render_video(&sample_scene(3, 2, 32).unwrap()).unwrap();
        let (a, b) = (&video.frames()[0], &video.frames()[1]);
        let hs = HornSchunck::default();
        assert_eq!(hs.flow(a, b, None).unwrap(), hs.flow(a, b, Some(&truth.flow_gt[1])).unwrap());
        let hp = HeuristicParse { tau: 0.05 };
        assert_eq!(hp.parse(a, None).unwrap(), hp.parse(a, Some(&truth.mask_bg[0])).unwrap());
    }

    #[test]
    fn external_networks_load_from_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        for (prefix, channels) in [("flow", vec![6, 8, 2]), ("parse", vec![3, 8, 1])] {
            let net = ConvStack::new(&channels, 1).unwrap();
            let mut ck = Checkpoint::new("aux", 0, NetConfig::default());
            ck.meta.extra.insert("channels".into(), serde_json::json!(channels));
            ck.insert(prefix, net.store());
            ck.save(&dir.path().join(prefix)).unwrap();
        }
        let f = Frame::filled(16, 16, [0.3, 0.5, 0.7]);
        let flow = ExternalFlow::load(&dir.path().join("flow")).unwrap().flow(&f, &f, None).unwrap();
        assert_eq!((flow.width(), flow.height()), (16, 16));
        let m = ExternalParse::load(&dir.path().join("parse")).unwrap().parse(&f, None).unwrap();
        assert!(m.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(matches!(ExternalFlow::load(&dir.path().join("parse")), Err(Error::Load { .. })));
        assert!(matches!(ExternalParse::load(&dir.path().join("missing")), Err(Error::Load { .. })));
    }
}
