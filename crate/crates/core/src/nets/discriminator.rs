use super::params::{Bound, Conv, Linear, ParamStore, LEAK};
use super::{NetConfig, Network};
use crate::autograd::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::frame::Frame;

/// Strided conv stack ending in a single linear logit.
pub struct Discriminator {
    cfg: NetConfig,
    store: ParamStore,
    input: Conv,
    convs: Vec<Conv>,
    head: Linear,
    head_in: usize,
}

impl Discriminator {
    pub fn new(cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = cfg.rng("discriminator");
        let mut store = ParamStore::new(true);
        let b = cfg.base_channels;
        let mut c = (b / 2).max(4);
        let input = store.conv("in", 3, c, 3, &mut rng);
        let mut convs = Vec::new();
        let mut res = cfg.image_size;
        while res > 4 {
            let cout = (2 * c).min(2 * b);
            convs.push(store.conv(&format!("down{}", convs.len()), c, cout, 3, &mut rng).strided(2));
            c = cout;
            res /= 2;
        }
        let head_in = c * 16;
        let head = store.linear("head", head_in, 1, Some((1.0 / head_in as f32).sqrt()), &mut rng);
        Ok(Self { cfg: cfg.clone(), store, input, convs, head, head_in })
    }

    /// `x` is `[n, 3, size, size]`; returns `[n, 1]` logits.
    pub fn forward_graph(&self, g: &mut Graph, p: &Bound, x: NodeId) -> NodeId {
        let n = g.value(x).shape()[0];
        let x = g.add_scalar(x, -0.5);
        let h = self.input.forward(g, p, x);
        let mut h = g.leaky_relu(h, LEAK);
        for c in &self.convs {
            h = c.forward(g, p, h);
            h = g.leaky_relu(h, LEAK);
        }
        let flat = g.reshape(h, [n, self.head_in]);
        self.head.forward(g, p, flat)
    }

    pub fn logits(&self, frames: &[&Frame]) -> Result<Vec<f32>> {
        let s = self.cfg.image_size;
        if let Some(f) = frames.iter().find(|f| f.width() != s || f.height() != s) {
            return Err(Error::dim(format!("discriminator expects {s}x{s}, got {}x{}", f.width(), f.height())));
        }
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let x = g.constant(Frame::batch_tensor(frames));
        let y = self.forward_graph(&mut g, &p, x);
        Ok(g.value(y).data().to_vec())
    }
}

impl Network for Discriminator {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_logits_are_finite_and_order_preserving() {
        let cfg = NetConfig { image_size: 32, base_channels: 8, ..NetConfig::default() };
        let d = Discriminator::new(&cfg).unwrap();
        let a = Frame::filled(32, 32, [0.2, 0.4, 0.9]);
        let b = Frame::filled(32, 32, [0.9, 0.1, 0.3]);
        let both = d.logits(&[&a, &b]).unwrap();
        assert_eq!(both.len(), 2);
        assert!(both.iter().all(|v| v.is_finite()));
        assert_eq!(both[0], d.logits(&[&a]).unwrap()[0]);
        assert_eq!(both[1], d.logits(&[&b]).unwrap()[0]);
        assert_eq!(d.logits(&[&b, &a]).unwrap(), vec![both[1], both[0]]);
    }

    #[test]
    fn wrong_size_is_dimension_error() {
        let cfg = NetConfig { image_size: 32, base_channels: 8, ..NetConfig::default() };
        let d = Discriminator::new(&cfg).unwrap();
        assert!(matches!(d.logits(&[&Frame::black(16, 16)]), Err(Error::Dimension(_))));
    }
}
