//! Image-like containers shared by every stage of the pipeline.
//!
//! All planar buffers are stored channel-major (`[c][y][x]`). Pixel `(x, y)`
//! has its center at integer coordinates `(x, y)`.

use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;
use crate::error::{Error, Result};

/// An RGB frame with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Frame {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::dim(format!(
                "frame {width}x{height} needs {} values, got {}",
                3 * width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * width * height);
        for v in rgb {
            data.extend(std::iter::repeat_n(v, width * height));
        }
        Self { width, height, data }
    }

    pub fn black(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn rgb(&self, x: usize, y: usize) -> [f32; 3] {
        [self.get(0, x, y), self.get(1, x, y), self.get(2, x, y)]
    }

    pub fn set_rgb(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        for (c, v) in rgb.into_iter().enumerate() {
            self.set(c, x, y, v);
        }
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_same_shape(&self, other: &Frame, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::dim(format!("{what}: {}x{} vs {}x{}", self.width, self.height, other.width, other.height)))
        }
    }

    pub fn clamped(mut self) -> Self {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    /// Horizontal mirror.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        for c in 0..3 {
            for y in 0..self.height {
                for x in 0..self.width {
                    out.set(c, x, y, self.get(c, self.width - 1 - x, y));
                }
            }
        }
        out
    }

    pub fn luma(&self, x: usize, y: usize) -> f32 {
        let [r, g, b] = self.rgb(x, y);
        0.299 * r + 0.587 * g + 0.114 * b
    }

    pub fn mean_abs_diff(&self, other: &Frame) -> Result<f32> {
        self.check_same_shape(other, "mean_abs_diff")?;
        let s: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs() as f64).sum();
        Ok((s / self.data.len() as f64) as f32)
    }

    /// `[1, 3, h, w]` tensor view of the frame.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([1, 3, self.height, self.width], self.data.clone())
    }

    pub fn batch_tensor(frames: &[&Frame]) -> Tensor {
        let items: Vec<Tensor> = frames.iter().map(|f| f.to_tensor()).collect();
        Tensor::stack_batch(&items)
    }

    /// Frame `i` of an `[n, 3, h, w]` tensor.
    pub fn from_tensor(t: &Tensor, i: usize) -> Result<Self> {
        let (n, c, h, w) = t.dims4();
        if c != 3 || i >= n {
            return Err(Error::dim(format!("cannot take frame {i} from tensor {:?}", t.shape())));
        }
        Self::new(w, h, t.data()[i * 3 * h * w..(i + 1) * 3 * h * w].to_vec())
    }
}

/// Per-pixel backward displacement `(dx, dy)` in pixels: pixel `(x, y)` of
/// frame `t` originates at `(x + dx, y + dy)` in frame `t − 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; 2 * width * height] }
    }

    pub fn constant(width: usize, height: usize, dx: f32, dy: f32) -> Self {
        let mut f = Self::zeros(width, height);
        f.data[..width * height].fill(dx);
        f.data[width * height..].fill(dy);
        f
    }

    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 2 * width * height {
            return Err(Error::dim(format!(
                "flow {width}x{height} needs {} values, got {}",
                2 * width * height,
                data.len()
            )));
        }
        let f = Self { width, height, data };
        f.validate()?;
        Ok(f)
    }

    /// Finite values bounded by the image width.
    pub fn validate(&self) -> Result<()> {
        let bound = self.width.max(self.height) as f32;
        if let Some(v) = self.data.iter().find(|v| !v.is_finite() || v.abs() > bound) {
            return Err(Error::Domain(format!("flow value {v} is not finite or exceeds {bound}")));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.data[i], self.data[self.width * self.height + i])
    }

    pub fn set(&mut self, x: usize, y: usize, (dx, dy): (f32, f32)) {
        let i = y * self.width + x;
        let n = self.width * self.height;
        self.data[i] = dx;
        self.data[n + i] = dy;
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([1, 2, self.height, self.width], self.data.clone())
    }
}

/// Per-pixel probability that a pixel belongs to the background.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsingMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ParsingMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dim(format!("parsing map {width}x{height} needs {} values", width * height)));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("parsing probability {v} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, p: f32) -> Self {
        Self { width, height, data: vec![p.clamp(0.0, 1.0); width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Pixels with background probability below one half.
    pub fn foreground(&self) -> Mask {
        Mask { width: self.width, height: self.height, data: self.data.iter().map(|&p| p < 0.5).collect() }
    }

    /// `[1, 3, h, w]` tensor with the map replicated across channels.
    pub fn to_tensor3(&self) -> Tensor {
        let mut d = Vec::with_capacity(3 * self.data.len());
        for _ in 0..3 {
            d.extend_from_slice(&self.data);
        }
        Tensor::new([1, 3, self.height, self.width], d)
    }
}

/// Boolean per-pixel mask.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn filled(width: usize, height: usize, v: bool) -> Self {
        Self { width, height, data: vec![v; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Run-length encoding as alternating run lengths starting with `false`.
    pub fn to_rle(&self) -> Vec<u32> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u32;
        for &b in &self.data {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }

    pub fn from_rle(width: usize, height: usize, runs: &[u32]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        let mut v = false;
        for &r in runs {
            data.extend(std::iter::repeat_n(v, r as usize));
            v = !v;
        }
        if data.len() != width * height {
            return Err(Error::Data(format!(
                "run-length mask decodes to {} pixels, expected {}",
                data.len(),
                width * height
            )));
        }
        Ok(Self { width, height, data })
    }
}

/// An ordered list of equally-sized frames.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoSequence {
    frames: Vec<Frame>,
    fps: f32,
}

impl VideoSequence {
    pub fn new(frames: Vec<Frame>, fps: f32) -> Result<Self> {
        if let Some(first) = frames.first() {
            for (i, f) in frames.iter().enumerate() {
                if !f.same_shape(first) {
                    return Err(Error::dim(format!("frame {i} differs in shape from frame 0")));
                }
            }
        }
        Ok(Self { frames, fps })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn fps(&self) -> f32 {
        self.fps
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames.first().map_or(0, Frame::width)
    }

    pub fn height(&self) -> usize {
        self.frames.first().map_or(0, Frame::height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn rle_round_trips(bits in proptest::collection::vec(any::<bool>(), 1..200)) {
            let m = Mask { width: bits.len(), height: 1, data: bits };
            let back = Mask::from_rle(m.width, 1, &m.to_rle()).unwrap();
            prop_assert_eq!(back, m);
        }
    }

    #[test]
    fn parsing_map_rejects_out_of_range() {
        assert!(matches!(ParsingMap::new(1, 1, vec![1.5]), Err(Error::Domain(_))));
    }

    #[test]
    fn flow_rejects_non_finite() {
        assert!(FlowField::new(1, 1, vec![f32::NAN, 0.0]).is_err());
    }
}
