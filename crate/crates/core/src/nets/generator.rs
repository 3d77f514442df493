use super::params::{Bound, Conv, Linear, ParamId, ParamStore, LEAK};
use super::{LatentCode, NetConfig, Network};
use crate::autograd::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::frame::Frame;

struct Block {
    conv: Conv,
    scale: Linear,
    shift: Linear,
}

/// Style-modulated generator: latent → style MLP → learned 4×4 constant →
/// upsample-conv blocks with per-channel modulation → RGB.
pub struct Generator {
    cfg: NetConfig,
    store: ParamStore,
    map: [Linear; 2],
    constant: ParamId,
    blocks: Vec<Block>,
    to_rgb: Conv,
}

/// Channel width of the block producing resolution `res`.
fn width(base: usize, res: usize) -> usize {
    let top = 2 * base;
    (top * 16 / res).clamp((base / 4).max(8).min(top), top)
}

impl Generator {
    pub fn new(cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = cfg.rng("generator");
        let mut store = ParamStore::new(true);
        let b = cfg.base_channels;
        let style = 2 * b;
        let map = [
            store.linear("map.0", cfg.latent_dim, style, None, &mut rng),
            store.linear("map.1", style, style, None, &mut rng),
        ];
        let c0 = 2 * b;
        let constant = store.add("const", Tensor::randn([1, c0, 4, 4], 1.0, &mut rng));
        let mut blocks = Vec::new();
        let (mut res, mut cin) = (4, c0);
        while res < cfg.image_size {
            res *= 2;
            let cout = width(b, res);
            let i = blocks.len();
            blocks.push(Block {
                conv: store.conv(&format!("block{i}.conv"), cin, cout, 3, &mut rng),
                scale: store.linear(&format!("block{i}.mod_scale"), style, cout, Some(0.05), &mut rng),
                shift: store.linear(&format!("block{i}.mod_shift"), style, cout, Some(0.05), &mut rng),
            });
            cin = cout;
        }
        let to_rgb = store.conv("to_rgb", cin, 3, 1, &mut rng);
        Ok(Self { cfg: cfg.clone(), store, map, constant, blocks, to_rgb })
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    /// `z` is `[n, latent_dim]`; returns `[n, 3, size, size]` in `[0, 1]`.
    pub fn forward_graph(&self, g: &mut Graph, p: &Bound, z: NodeId) -> NodeId {
        let n = g.value(z).shape()[0];
        let mut s = z;
        for l in &self.map {
            s = l.forward(g, p, s);
            s = g.leaky_relu(s, LEAK);
        }
        let mut x = g.broadcast_batch(p.get(self.constant), n);
        for blk in &self.blocks {
            x = g.upsample2x(x);
            x = blk.conv.forward(g, p, x);
            let sc = blk.scale.forward(g, p, s);
            let sh = blk.shift.forward(g, p, s);
            x = g.channel_affine(x, sc, sh);
            x = g.leaky_relu(x, LEAK);
        }
        let x = self.to_rgb.forward(g, p, x);
        let x = g.tanh(x);
        let x = g.scale(x, 0.5);
        g.add_scalar(x, 0.5)
    }

    pub fn latent_tensor(&self, zs: &[LatentCode]) -> Result<Tensor> {
        let d = self.cfg.latent_dim;
        let mut data = Vec::with_capacity(zs.len() * d);
        for z in zs {
            if z.dim() != d {
                return Err(Error::config(format!("latent has {} dims, generator expects {d}", z.dim())));
            }
            if z.0.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("latent code is not finite".into()));
            }
            data.extend_from_slice(&z.0);
        }
        Ok(Tensor::new([zs.len(), d], data))
    }

    pub fn generate(&self, zs: &[LatentCode]) -> Result<Vec<Frame>> {
        let zt = self.latent_tensor(zs)?;
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let z = g.constant(zt);
        let out = self.forward_graph(&mut g, &p, z);
        (0..zs.len()).map(|i| Frame::from_tensor(g.value(out), i)).collect()
    }
}

impl Network for Generator {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}
