use super::params::{Bound, Conv, ParamStore, LEAK};
use super::{NetConfig, Network};
use crate::autograd::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::frame::Frame;

const DEPTH: usize = 4;

/// U-Net image translator: four stride-2 encoder stages, a bottleneck conv,
/// and mirrored upsampling stages that concatenate the matching skip.
pub struct Translator {
    cfg: NetConfig,
    store: ParamStore,
    input: Conv,
    down: Vec<Conv>,
    bottleneck: Conv,
    up: Vec<Conv>,
    output: Conv,
    frozen: bool,
}

impl Translator {
    pub fn new(cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = cfg.rng("translator");
        let mut store = ParamStore::new(true);
        let b = cfg.base_channels;
        let widths: Vec<usize> = (0..=DEPTH).map(|i| (b << i).min(4 * b)).collect();
        let input = store.conv("in", 3, widths[0], 3, &mut rng);
        let down = (1..=DEPTH)
            .map(|i| store.conv(&format!("down{i}"), widths[i - 1], widths[i], 3, &mut rng).strided(2))
            .collect();
        let bottleneck = store.conv("bottleneck", widths[DEPTH], widths[DEPTH], 3, &mut rng);
        let up = (1..=DEPTH)
            .rev()
            .map(|i| store.conv(&format!("up{i}"), widths[i] + widths[i - 1], widths[i - 1], 3, &mut rng))
            .collect();
        let output = store.conv("out", widths[0], 3, 1, &mut rng);
        Ok(Self { cfg: cfg.clone(), store, input, down, bottleneck, up, output, frozen: false })
    }

    /// Marks the weights as fixed; trainers that must not update the
    /// translator require this.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    /// `x` is `[n, 3, size, size]` in `[0, 1]`; so is the result.
    pub fn forward_graph(&self, g: &mut Graph, p: &Bound, x: NodeId) -> NodeId {
        let x = g.add_scalar(x, -0.5);
        let h = self.input.forward(g, p, x);
        let mut h = g.leaky_relu(h, LEAK);
        let mut skips = Vec::with_capacity(DEPTH);
        for conv in &self.down {
            skips.push(h);
            h = conv.forward(g, p, h);
            h = g.leaky_relu(h, LEAK);
        }
        h = self.bottleneck.forward(g, p, h);
        h = g.leaky_relu(h, LEAK);
        for conv in &self.up {
            let skip = skips.pop().unwrap();
            let u = g.upsample2x(h);
            let cat = g.concat(&[u, skip]);
            h = conv.forward(g, p, cat);
            h = g.leaky_relu(h, LEAK);
        }
        let y = self.output.forward(g, p, h);
        g.sigmoid(y)
    }

    pub fn check_input(&self, f: &Frame) -> Result<()> {
        let s = self.cfg.image_size;
        if f.width() != s || f.height() != s {
            return Err(Error::dim(format!("translator expects {s}x{s}, got {}x{}", f.width(), f.height())));
        }
        Ok(())
    }

    pub fn translate_batch(&self, frames: &[&Frame]) -> Result<Vec<Frame>> {
        for f in frames {
            self.check_input(f)?;
        }
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let x = g.constant(Frame::batch_tensor(frames));
        let y = self.forward_graph(&mut g, &p, x);
        (0..frames.len()).map(|i| Frame::from_tensor(g.value(y), i)).collect()
    }

    pub fn translate(&self, frame: &Frame) -> Result<Frame> {
        Ok(self.translate_batch(&[frame])?.remove(0))
    }
}

impl Network for Translator {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}
