use super::params::{Bound, Conv, ParamStore, LEAK};
use super::{NetConfig, Network};
use crate::autograd::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::frame::Frame;

/// The refiner's conditioning window for frame `t`: sources
/// `x_{t−L} … x_t`, previous refined outputs `ŷ_{t−L} … ŷ_{t−1}` and the
/// intermediate translation of `x_t`, each ordered oldest to newest.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinerInput {
    pub sources: Vec<Frame>,
    pub refined_prev: Vec<Frame>,
    pub intermediate: Frame,
}

impl RefinerInput {
    pub fn validate(&self, window: usize) -> Result<()> {
        if self.sources.len() != window + 1 || self.refined_prev.len() != window {
            return Err(Error::Arity {
                expected: format!("({}, {}, 1)", window + 1, window),
                got: format!("({}, {}, 1)", self.sources.len(), self.refined_prev.len()),
            });
        }
        for f in self.sources.iter().chain(&self.refined_prev) {
            self.intermediate.check_same_shape(f, "refiner window")?;
        }
        Ok(())
    }

    /// Frames in channel-concatenation order.
    pub fn frames(&self) -> impl Iterator<Item = &Frame> {
        self.sources.iter().chain(&self.refined_prev).chain(std::iter::once(&self.intermediate))
    }

    /// `[1, 3·(2L+2), h, w]` stack.
    pub fn to_tensor(&self) -> Tensor {
        let f = &self.intermediate;
        let data: Vec<f32> = self.frames().flat_map(|f| f.data().iter().copied()).collect();
        let c = data.len() / (f.width() * f.height());
        Tensor::new([1, c, f.height(), f.width()], data)
    }
}

/// Sequential refiner: a small two-scale conv net over the window stack that
/// predicts a residual on the intermediate frame.
pub struct Refiner {
    cfg: NetConfig,
    store: ParamStore,
    input: Conv,
    down: Conv,
    mid: Conv,
    fuse: Conv,
    head: Conv,
}

impl Refiner {
    pub fn new(cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = cfg.rng("refiner");
        let mut store = ParamStore::new(true);
        let c = cfg.refiner_channels;
        let cin = 3 * (2 * cfg.refiner_window + 2);
        let input = store.conv("in", cin, c, 3, &mut rng);
        let down = store.conv("down", c, 2 * c, 3, &mut rng).strided(2);
        let mid = store.conv("mid", 2 * c, 2 * c, 3, &mut rng);
        let fuse = store.conv("fuse", 3 * c, c, 3, &mut rng);
        let head =
            if cfg.refiner_residual { store.conv_zero("head", c, 3, 3) } else { store.conv("head", c, 3, 3, &mut rng) };
        Ok(Self { cfg: cfg.clone(), store, input, down, mid, fuse, head })
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn window(&self) -> usize {
        self.cfg.refiner_window
    }

    /// `stack` is the `[n, 3·(2L+2), h, w]` window, `intermediate` its last
    /// three channels as a separate `[n, 3, h, w]` node.
    pub fn forward_graph(&self, g: &mut Graph, p: &Bound, stack: NodeId, intermediate: NodeId) -> NodeId {
        let x = g.add_scalar(stack, -0.5);
        let h = self.input.forward(g, p, x);
        let h0 = g.leaky_relu(h, LEAK);
        let h = self.down.forward(g, p, h0);
        let h = g.leaky_relu(h, LEAK);
        let h = self.mid.forward(g, p, h);
        let h = g.leaky_relu(h, LEAK);
        let u = g.upsample2x(h);
        let cat = g.concat(&[u, h0]);
        let h = self.fuse.forward(g, p, cat);
        let h = g.leaky_relu(h, LEAK);
        let delta = self.head.forward(g, p, h);
        if self.cfg.refiner_residual {
            let y = g.add(intermediate, delta);
            g.clamp(y, 0.0, 1.0)
        } else {
            g.sigmoid(delta)
        }
    }

    pub fn refine(&self, input: &RefinerInput) -> Result<Frame> {
        input.validate(self.cfg.refiner_window)?;
        let s = self.cfg.image_size;
        if input.intermediate.width() != s || input.intermediate.height() != s {
            return Err(Error::dim(format!("refiner expects {s}x{s} frames")));
        }
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let stack = g.constant(input.to_tensor());
        let inter = g.constant(input.intermediate.to_tensor());
        let y = self.forward_graph(&mut g, &p, stack, inter);
        Frame::from_tensor(g.value(y), 0)
    }
}

impl Network for Refiner {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}
