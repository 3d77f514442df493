//! Geometry-and-color identity descriptor and its cosine similarity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, ParsingMap};
use crate::synthdata::rgb_to_hsv;

/// Foreground pixels darker than this (pupils, outlines) belong to neither
/// skin nor hair.
const MIN_REGION_VALUE: f32 = 0.15;
const VALUE_BINS: usize = 64;

const ASPECT_RANGE: (f32, f32) = (0.5, 3.0);
const SPACING_RANGE: (f32, f32) = (0.2, 0.8);

/// Unit 5-vector: face hue, face saturation, face box aspect ratio, eye
/// spacing over face width, hair hue; each rescaled to `[0, 1]` first.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityDescriptor(pub [f64; 5]);

/// Saturation-weighted circular mean of `(hue, saturation)` samples.
fn circular_mean_hue(samples: &[(f32, f32)]) -> f32 {
    let (s, c) = samples.iter().fold((0.0f64, 0.0f64), |(s, c), &(h, w)| {
        let a = h as f64 * std::f64::consts::TAU;
        (s + w as f64 * a.sin(), c + w as f64 * a.cos())
    });
    if s == 0.0 && c == 0.0 {
        return 0.0;
    }
    (s.atan2(c) / std::f64::consts::TAU).rem_euclid(1.0) as f32
}

/// Otsu threshold over values in `[0, 1]`.
fn otsu(values: &[f32]) -> f32 {
    let mut hist = [0usize; VALUE_BINS];
    for v in values {
        hist[((v * VALUE_BINS as f32) as usize).min(VALUE_BINS - 1)] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &n)| i as f64 * n as f64).sum();
    let (mut w0, mut sum0, mut best, mut best_k) = (0.0f64, 0.0f64, -1.0f64, 0usize);
    for (k, &n) in hist.iter().enumerate().take(VALUE_BINS - 1) {
        w0 += n as f64;
        sum0 += k as f64 * n as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let between = w0 * w1 * (sum0 / w0 - (sum_all - sum0) / w1).powi(2);
        if between > best {
            (best, best_k) = (between, k);
        }
    }
    (best_k + 1) as f32 / VALUE_BINS as f32
}

fn rescale(v: f32, (lo, hi): (f32, f32)) -> f32 {
    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
}

/// Centroid of the darkest luma pixels among `pixels`.
fn darkest_centroid(frame: &Frame, pixels: impl Iterator<Item = (usize, usize)>) -> Option<(f32, f32)> {
    let mut best = f32::INFINITY;
    let (mut sx, mut sy, mut n) = (0.0f32, 0.0f32, 0usize);
    for (x, y) in pixels {
        let l = frame.luma(x, y);
        if l < best {
            best = l;
            (sx, sy, n) = (x as f32, y as f32, 1);
        } else if l == best {
            sx += x as f32;
            sy += y as f32;
            n += 1;
        }
    }
    (n > 0).then(|| (sx / n as f32, sy / n as f32))
}

impl IdentityDescriptor {
    /// Computes the descriptor over the foreground of `mask` (background
    /// probability below one half).
    pub fn compute(frame: &Frame, mask: &ParsingMap) -> Result<Self> {
        if mask.width() != frame.width() || mask.height() != frame.height() {
            return Err(Error::dim("identity mask and frame differ in size"));
        }
        let fg = mask.foreground();
        if fg.count() == 0 {
            return Err(Error::UndefinedRegion("foreground mask is empty".into()));
        }
        let (w, h) = (frame.width(), frame.height());
        let mut px = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if fg.get(x, y) {
                    let (hue, s, v) = rgb_to_hsv(frame.rgb(x, y));
                    if v >= MIN_REGION_VALUE {
                        px.push((x, y, hue, s, v));
                    }
                }
            }
        }
        // Skin is the brighter of the two value modes, hair the darker.
        let split = otsu(&px.iter().map(|p| p.4).collect::<Vec<_>>());
        let (mut face_hues, mut face_sats, mut hair_hues) = (Vec::new(), Vec::new(), Vec::new());
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0usize, 0usize);
        for &(x, y, hue, s, v) in &px {
            if v >= split {
                face_hues.push((hue, s));
                face_sats.push(s);
                (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x), y1.max(y));
            } else {
                hair_hues.push((hue, s));
            }
        }
        if face_hues.is_empty() {
            return Err(Error::UndefinedRegion("no skin pixels inside the foreground".into()));
        }
        let (bw, bh) = ((x1 - x0 + 1) as f32, (y1 - y0 + 1) as f32);
        // Pupils: darkest foreground pixels in the upper half of the face box,
        // one per side of its vertical midline.
        let mid = (x0 + x1) as f32 / 2.0;
        let upper = y0..=((y0 + y1) / 2);
        let region = |left: bool| {
            let fg = &fg;
            let upper = upper.clone();
            upper
                .flat_map(move |y| (x0..=x1).map(move |x| (x, y)))
                .filter(move |&(x, y)| fg.get(x, y) && ((x as f32) < mid) == left)
        };
        let spacing = match (darkest_centroid(frame, region(true)), darkest_centroid(frame, region(false))) {
            (Some(a), Some(b)) => ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt() / bw,
            _ => 0.0,
        };
        let raw = [
            circular_mean_hue(&face_hues),
            face_sats.iter().sum::<f32>() / face_sats.len() as f32,
            rescale(bw / bh, ASPECT_RANGE),
            rescale(spacing, SPACING_RANGE),
            if hair_hues.is_empty() { 0.0 } else { circular_mean_hue(&hair_hues) },
        ];
        let v: [f64; 5] = raw.map(|c| c as f64);
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::UndefinedRegion("identity descriptor is zero".into()));
        }
        Ok(Self(v.map(|c| c / norm)))
    }

    pub fn cosine(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0)
    }
}

/// Cosine similarity of the identity descriptors of `src` and `out`, both
/// taken over the foreground of `fg_mask`.
pub fn csim(src: &Frame, out: &Frame, fg_mask: &ParsingMap) -> Result<f32> {
    src.check_same_shape(out, "csim")?;
    let a = IdentityDescriptor::compute(src, fg_mask)?;
    let b = IdentityDescriptor::compute(out, fg_mask)?;
    if a == b {
        return Ok(1.0);
    }
    Ok(a.cosine(&b) as f32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{oracle_stylize, render_video, sample_scene};

    #[test]
    fn self_similarity_is_exactly_one() {
        for seed in 0..5 {
            let (v, t) = render_video(&sample_scene(seed, 1, 64).unwrap()).unwrap();
            let f = &v.frames()[0];
            assert_eq!(csim(f, f, &t.mask_bg[0]).unwrap(), 1.0);
            let d = IdentityDescriptor::compute(f, &t.mask_bg[0]).unwrap();
            let n: f64 = d.0.iter().map(|c| c * c).sum();
            assert!((n - 1.0).abs() < 1e-12);
            assert!((d.cosine(&d) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_foreground_is_undefined() {
        let f = Frame::filled(16, 16, [0.5, 0.2, 0.1]);
        let all_bg = ParsingMap::filled(16, 16, 1.0);
        assert!(matches!(csim(&f, &f, &all_bg), Err(Error::UndefinedRegion(_))));
    }

    #[test]
    fn oracle_stylization_keeps_identity() {
        let mut total = 0.0;
        for seed in 0..50 {
            let (v, t) = render_video(&sample_scene(300 + seed, 1, 64).unwrap()).unwrap();
            let f = &v.frames()[0];
            total += csim(f, &oracle_stylize(f), &t.mask_bg[0]).unwrap();
        }
        let mean = total / 50.0;
        assert!(mean >= 0.85, "{mean}");
    }

    #[test]
    fn different_identities_score_lower() {
        let (mut same, mut diff) = (0.0, 0.0);
        for k in 0..50u64 {
            let (v, t) = render_video(&sample_scene(600 + k, 8, 64).unwrap()).unwrap();
            let (o, _) = render_video(&sample_scene(700 + k, 1, 64).unwrap()).unwrap();
            let (a, b) = (&v.frames()[0], &v.frames()[7]);
            same += csim(a, b, &t.mask_bg[0]).unwrap();
            diff += csim(a, &o.frames()[0], &t.mask_bg[0]).unwrap();
        }
        assert!(same > diff, "{same} vs {diff}");
    }
}
