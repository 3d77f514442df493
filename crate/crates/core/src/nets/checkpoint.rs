//! Checkpoint directories: `meta.json` plus one `<name>.bin` per tensor
//! (u32 LE rank, u32 LE dims, then LE f32 payload).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::NetConfig;
use crate::autograd::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub stage: String,
    pub step: u64,
    pub config: NetConfig,
    /// Tensor names in storage order.
    pub params: Vec<String>,
    #[serde(default)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: Vec<Tensor>,
}

fn encode(t: &Tensor) -> Vec<u8> {
    let mut buf = Vec::with_capacity(4 + 4 * t.shape().len() + 4 * t.numel());
    buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

fn decode(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let word = |i: usize| -> Result<u32> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| Error::load(path, "truncated tensor file"))
    };
    let rank = word(0)? as usize;
    let shape = (0..rank).map(|i| word(1 + i).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let n: usize = shape.iter().product();
    let start = 4 * (1 + rank);
    if bytes.len() != start + 4 * n {
        return Err(Error::load(path, format!("payload size does not match shape {shape:?}")));
    }
    let data = bytes[start..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Tensor::new(shape, data))
}

impl Checkpoint {
    pub fn new(stage: impl Into<String>, step: u64, config: NetConfig) -> Self {
        Self {
            meta: CheckpointMeta { stage: stage.into(), step, config, params: Vec::new(), extra: Default::default() },
            tensors: Vec::new(),
        }
    }

    /// Adds every tensor of `store` under `prefix.`.
    pub fn insert(&mut self, prefix: &str, store: &ParamStore) {
        for (name, t) in store.iter() {
            self.meta.params.push(format!("{prefix}.{name}"));
            self.tensors.push(t.clone());
        }
    }

    /// Tensors stored under `prefix.`, with the prefix stripped.
    pub fn entries<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a Tensor)> + 'a {
        self.meta
            .params
            .iter()
            .zip(&self.tensors)
            .filter_map(move |(n, t)| n.strip_prefix(prefix)?.strip_prefix('.').map(|rest| (rest, t)))
    }

    pub fn has(&self, prefix: &str) -> bool {
        self.entries(prefix).next().is_some()
    }

    /// Loads the `prefix` section into `store`, failing on any name or shape
    /// disagreement.
    pub fn restore(&self, prefix: &str, store: &mut ParamStore) -> Result<()> {
        if !self.has(prefix) {
            return Err(Error::Compatibility(format!("checkpoint has no `{prefix}` network")));
        }
        store.load_from(self.entries(prefix))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, t) in self.meta.params.iter().zip(&self.tensors) {
            fs::write(dir.join(format!("{name}.bin")), encode(t))?;
        }
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&self.meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::load(&meta_path, e.to_string()))?;
        let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| Error::load(&meta_path, e.to_string()))?;
        let tensors = meta
            .params
            .iter()
            .map(|name| {
                let p = dir.join(format!("{name}.bin"));
                let bytes = fs::read(&p).map_err(|e| Error::load(&p, e.to_string()))?;
                decode(&bytes, &p)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { meta, tensors })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Frame;
    use crate::nets::{Network, Refiner, Translator};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn save_load_is_bit_exact() {
        let cfg = NetConfig { image_size: 32, base_channels: 8, refiner_channels: 8, ..NetConfig::default() };
        let t = Translator::new(&cfg).unwrap();
        let mut ck = Checkpoint::new("stage1", 17, cfg.clone());
        ck.insert("translator", t.store());
        let dir = tempfile::tempdir().unwrap();
        ck.save(dir.path()).unwrap();
        let back = Checkpoint::load(dir.path()).unwrap();
        assert_eq!(back, ck);
        let mut t2 = Translator::new(&NetConfig { seed: 99, ..cfg.clone() }).unwrap();
        back.restore("translator", t2.store_mut()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let f = Frame::new(32, 32, (0..3 * 32 * 32).map(|_| rng.random()).collect()).unwrap();
            assert_eq!(t.translate(&f).unwrap(), t2.translate(&f).unwrap());
        }
        let mut r = Refiner::new(&cfg).unwrap();
        assert!(matches!(back.restore("translator", r.store_mut()), Err(Error::Compatibility(_))));
        assert!(matches!(back.restore("refiner", r.store_mut()), Err(Error::Compatibility(_))));
    }

    #[test]
    fn truncated_tensor_is_load_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut ck = Checkpoint::new("x", 0, NetConfig::default());
        ck.meta.params.push("a".into());
        ck.tensors.push(Tensor::zeros([2, 2]));
        ck.save(dir.path()).unwrap();
        fs::write(dir.path().join("a.bin"), [2u8, 0, 0, 0, 2, 0]).unwrap();
        assert!(matches!(Checkpoint::load(dir.path()), Err(Error::Load { .. })));
    }
}
