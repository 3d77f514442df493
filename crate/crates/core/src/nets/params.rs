use rand::Rng;

use crate::autograd::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(usize);

/// Named parameter tensors of one network, in creation order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    trainable: bool,
}

/// Graph nodes for every tensor of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Bound {
    ids: Vec<NodeId>,
}

impl Bound {
    pub fn get(&self, p: ParamId) -> NodeId {
        self.ids[p.0]
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }
}

impl ParamStore {
    pub fn new(trainable: bool) -> Self {
        Self { names: Vec::new(), tensors: Vec::new(), trainable }
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, p: ParamId) -> &Tensor {
        &self.tensors[p.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Number of trainable scalars; zero for frozen stores.
    pub fn numel(&self) -> usize {
        if self.trainable {
            self.tensors.iter().map(Tensor::numel).sum()
        } else {
            0
        }
    }

    /// Adds every tensor to `g`, as trainable leaves when `with_grad` is set
    /// and the store is trainable, as constants otherwise.
    pub fn bind(&self, g: &mut Graph, with_grad: bool) -> Bound {
        let ids = self.tensors.iter().map(|t| g.leaf(t.clone(), with_grad && self.trainable)).collect();
        Bound { ids }
    }

    /// Replaces all tensors with `(name, tensor)` entries that must match
    /// this store's names and shapes one-to-one.
    pub fn load_from<'a>(&mut self, entries: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<()> {
        let mut seen = vec![false; self.names.len()];
        for (name, t) in entries {
            let i = self
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Compatibility(format!("unexpected parameter {name}")))?;
            if self.tensors[i].shape() != t.shape() {
                return Err(Error::Compatibility(format!(
                    "parameter {name}: shape {:?} vs expected {:?}",
                    t.shape(),
                    self.tensors[i].shape()
                )));
            }
            if seen[i] {
                return Err(Error::Compatibility(format!("parameter {name} given twice")));
            }
            seen[i] = true;
            self.tensors[i] = t.clone();
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Compatibility(format!("parameter {} missing", self.names[i])));
        }
        Ok(())
    }

    pub fn conv<R: Rng>(&mut self, name: &str, cin: usize, cout: usize, k: usize, rng: &mut R) -> Conv {
        let std = (2.0 / (cin * k * k) as f32).sqrt();
        let w = self.add(format!("{name}.weight"), Tensor::randn([cout, cin, k, k], std, rng));
        let b = self.add(format!("{name}.bias"), Tensor::zeros([cout]));
        Conv { w, b, stride: 1, pad: k / 2 }
    }

    /// Convolution with all-zero weights and bias.
    pub fn conv_zero(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> Conv {
        let w = self.add(format!("{name}.weight"), Tensor::zeros([cout, cin, k, k]));
        let b = self.add(format!("{name}.bias"), Tensor::zeros([cout]));
        Conv { w, b, stride: 1, pad: k / 2 }
    }

    pub fn linear<R: Rng>(&mut self, name: &str, din: usize, dout: usize, std: Option<f32>, rng: &mut R) -> Linear {
        let std = std.unwrap_or_else(|| (2.0 / din as f32).sqrt());
        let w = self.add(format!("{name}.weight"), Tensor::randn([dout, din], std, rng));
        let b = self.add(format!("{name}.bias"), Tensor::zeros([dout]));
        Linear { w, b }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Conv {
    w: ParamId,
    b: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv {
    pub fn strided(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: NodeId) -> NodeId {
        g.conv2d(x, p.get(self.w), Some(p.get(self.b)), self.stride, self.pad)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: NodeId) -> NodeId {
        g.linear(x, p.get(self.w), Some(p.get(self.b)))
    }
}

pub(crate) const LEAK: f32 = 0.2;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_conv_counts_weights_and_bias() {
        let mut store = ParamStore::new(true);
        store.conv("c", 3, 8, 3, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(store.numel(), 3 * 8 * 9 + 8);
        assert_eq!(store.numel(), 224);
    }

    #[test]
    fn empty_and_frozen_stores_count_zero() {
        assert_eq!(ParamStore::new(true).numel(), 0);
        let mut frozen = ParamStore::new(false);
        frozen.conv("c", 3, 8, 3, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(frozen.numel(), 0);
    }

    #[test]
    fn load_requires_exact_name_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = ParamStore::new(true);
        a.conv("c", 2, 2, 3, &mut rng);
        let mut b = a.clone();
        let entries: Vec<(&str, &Tensor)> = a.iter().take(1).collect();
        assert!(matches!(b.load_from(entries), Err(Error::Compatibility(_))));
        let all: Vec<(&str, &Tensor)> = a.iter().collect();
        b.load_from(all).unwrap();
        assert_eq!(a, b);
    }
}
