//! Distribution and structure comparisons used to judge generator training.

use crate::frame::Frame;

const BINS: usize = 16;
const ORIENTATIONS: usize = 8;

fn channel_histograms(frames: &[Frame]) -> [[f64; BINS]; 3] {
    let mut h = [[0.0f64; BINS]; 3];
    let mut n = 0usize;
    for f in frames {
        for (c, hist) in h.iter_mut().enumerate() {
            for &v in f.plane(c) {
                hist[((v.clamp(0.0, 1.0) * BINS as f32) as usize).min(BINS - 1)] += 1.0;
            }
        }
        n += f.width() * f.height();
    }
    for hist in &mut h {
        hist.iter_mut().for_each(|v| *v /= n.max(1) as f64);
    }
    h
}

/// Mean over RGB of the L1 distance between normalized 16-bin histograms;
/// in `[0, 2]`.
pub fn color_histogram_distance(a: &[Frame], b: &[Frame]) -> f32 {
    let (ha, hb) = (channel_histograms(a), channel_histograms(b));
    let total: f64 = (0..3).map(|c| ha[c].iter().zip(&hb[c]).map(|(x, y)| (x - y).abs()).sum::<f64>()).sum();
    (total / 3.0) as f32
}

/// Magnitude-weighted histogram of luma gradient orientations (modulo π).
pub fn orientation_histogram(f: &Frame) -> [f32; ORIENTATIONS] {
    let (w, h) = (f.width(), f.height());
    let mut hist = [0.0f32; ORIENTATIONS];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let gx = f.luma(x + 1, y) - f.luma(x - 1, y);
            let gy = f.luma(x, y + 1) - f.luma(x, y - 1);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).rem_euclid(std::f32::consts::PI);
            let bin = ((angle / std::f32::consts::PI * ORIENTATIONS as f32) as usize).min(ORIENTATIONS - 1);
            hist[bin] += mag;
        }
    }
    hist
}

/// Pearson correlation of the two frames' orientation histograms; 0 when
/// either histogram is constant.
pub fn orientation_correlation(a: &Frame, b: &Frame) -> f32 {
    let (ha, hb) = (orientation_histogram(a), orientation_histogram(b));
    let mean = |h: &[f32]| h.iter().sum::<f32>() / h.len() as f32;
    let (ma, mb) = (mean(&ha), mean(&hb));
    let (mut num, mut da, mut db) = (0.0f32, 0.0f32, 0.0f32);
    for (x, y) in ha.iter().zip(&hb) {
        num += (x - ma) * (y - mb);
        da += (x - ma).powi(2);
        db += (y - mb).powi(2);
    }
    if da == 0.0 || db == 0.0 {
        0.0
    } else {
        num / (da * db).sqrt()
    }
}
