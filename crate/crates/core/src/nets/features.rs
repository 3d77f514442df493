use std::path::Path;

use super::checkpoint::Checkpoint;
use super::params::{Bound, Conv, ParamStore, LEAK};
use super::NetConfig;
use crate::autograd::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::frame::Frame;

pub const FEATURE_CHANNELS: [usize; 3] = [16, 32, 64];

/// Frozen three-level stride-2 conv pyramid used as the perceptual feature
/// space. Weights come from a seed or an external checkpoint and are never
/// trained.
pub struct FeatureExtractor {
    store: ParamStore,
    convs: Vec<Conv>,
}

impl FeatureExtractor {
    pub fn from_seed(seed: u64) -> Self {
        let cfg = NetConfig { seed, ..NetConfig::default() };
        let mut rng = cfg.rng("features");
        let mut store = ParamStore::new(false);
        let mut cin = 3;
        let convs = FEATURE_CHANNELS
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let conv = store.conv(&format!("level{}", i + 1), cin, c, 3, &mut rng).strided(2);
                cin = c;
                conv
            })
            .collect();
        // Small nonzero biases so a zero input still produces a bias response.
        let names = store.names().to_vec();
        for (name, t) in names.iter().zip(store.tensors_mut()) {
            if name.ends_with(".bias") {
                let n = t.numel();
                *t = Tensor::new([n], (0..n).map(|k| 0.01 * ((k % 7) as f32 - 3.0)).collect());
            }
        }
        Self { store, convs }
    }

    /// Loads weights for the same architecture from a checkpoint directory.
    pub fn from_checkpoint(dir: &Path) -> Result<Self> {
        let ckpt = Checkpoint::load(dir)?;
        let mut fx = Self::from_seed(0);
        fx.store.load_from(ckpt.entries("features")).map_err(|e| Error::load(dir, e.to_string()))?;
        Ok(fx)
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn bind(&self, g: &mut Graph) -> Bound {
        self.store.bind(g, false)
    }

    /// Feature maps of levels 1–3 for a `[n, 3, h, w]` input in `[0, 1]`.
    pub fn forward_graph(&self, g: &mut Graph, p: &Bound, x: NodeId) -> Vec<NodeId> {
        let mut h = g.add_scalar(x, -0.5);
        let mut levels = Vec::with_capacity(self.convs.len());
        for c in &self.convs {
            h = c.forward(g, p, h);
            h = g.leaky_relu(h, LEAK);
            levels.push(h);
        }
        levels
    }

    pub fn extract(&self, frame: &Frame) -> Vec<Tensor> {
        let mut g = Graph::new();
        let p = self.bind(&mut g);
        let x = g.constant(frame.to_tensor());
        self.forward_graph(&mut g, &p, x).into_iter().map(|id| g.value(id).clone()).collect()
    }
}

/// Plain stride-1 conv stack with leaky-ReLU between layers, used for
/// externally trained auxiliary networks.
pub struct ConvStack {
    store: ParamStore,
    convs: Vec<Conv>,
}

impl ConvStack {
    pub fn new(channels: &[usize], seed: u64) -> Result<Self> {
        if channels.len() < 2 {
            return Err(Error::config("conv stack needs at least input and output channels"));
        }
        let cfg = NetConfig { seed, ..NetConfig::default() };
        let mut rng = cfg.rng("convstack");
        let mut store = ParamStore::new(false);
        let convs = channels
            .windows(2)
            .enumerate()
            .map(|(i, w)| store.conv(&format!("layer{i}"), w[0], w[1], 3, &mut rng))
            .collect();
        Ok(Self { store, convs })
    }

    /// Loads a stack saved under `prefix`; layer widths come from the
    /// checkpoint's `channels` entry.
    pub fn from_checkpoint(dir: &Path, prefix: &str, cin: usize, cout: usize) -> Result<Self> {
        let ckpt = Checkpoint::load(dir)?;
        let channels: Vec<usize> = ckpt
            .meta
            .extra
            .get("channels")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .ok_or_else(|| Error::load(dir, "meta.json lacks a `channels` list"))?;
        if channels.first() != Some(&cin) || channels.last() != Some(&cout) {
            return Err(Error::load(dir, format!("expected a {cin}→{cout} network, found {channels:?}")));
        }
        let mut s = Self::new(&channels, 0).map_err(|e| Error::load(dir, e.to_string()))?;
        s.store.load_from(ckpt.entries(prefix)).map_err(|e| Error::load(dir, e.to_string()))?;
        Ok(s)
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn run(&self, input: Tensor) -> Tensor {
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let mut h = g.constant(input);
        for (i, c) in self.convs.iter().enumerate() {
            h = c.forward(&mut g, &p, h);
            if i + 1 < self.convs.len() {
                h = g.leaky_relu(h, LEAK);
            }
        }
        g.value(h).clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sensitive() {
        let fx = FeatureExtractor::from_seed(3);
        let f = Frame::filled(32, 32, [0.2, 0.3, 0.4]);
        let a = fx.extract(&f);
        assert_eq!(a, fx.extract(&f));
        let shapes: Vec<&[usize]> = a.iter().map(|t| t.shape()).collect();
        assert_eq!(shapes, vec![&[1, 16, 16, 16][..], &[1, 32, 8, 8], &[1, 64, 4, 4]]);
        let brighter = Frame::filled(32, 32, [0.5, 0.6, 0.7]);
        let b = fx.extract(&brighter);
        let dist: f32 = a.iter().zip(&b).map(|(x, y)| x.zip_map(y, |p, q| (p - q).abs()).sum()).sum();
        assert!(dist > 0.0);
    }

    #[test]
    fn zero_frame_gives_finite_bias_response() {
        let fx = FeatureExtractor::from_seed(3);
        let feats = fx.extract(&Frame::black(32, 32));
        assert!(feats.iter().all(|t| t.is_finite()));
        assert!(feats[0].data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn missing_external_weights_is_load_error() {
        let r = FeatureExtractor::from_checkpoint(Path::new("/nonexistent/phi"));
        assert!(matches!(r, Err(Error::Load { .. })));
    }
}
