//! Deterministic "cartoon" stylizer that defines the synthetic target domain.

use super::render::{hsv_to_rgb, rgb_to_hsv};
use crate::frame::Frame;

pub const STYLE_PALETTE: [[f32; 3]; 8] = [
    [0.0, 0.0, 0.0],
    [0.97, 0.93, 0.82],
    [0.55, 0.55, 0.55],
    [0.50, 0.72, 0.92],
    [0.96, 0.72, 0.56],
    [0.86, 0.36, 0.46],
    [0.36, 0.66, 0.38],
    [0.42, 0.24, 0.52],
];

const EDGE_GAIN: f32 = 2.0;
const EDGE_DARKEN: f32 = 0.75;
const SATURATION_BOOST: f32 = 1.2;

/// Palette entry closest to `rgb` in L2; ties go to the lower index.
pub fn nearest_palette_color(rgb: [f32; 3]) -> [f32; 3] {
    let mut best = STYLE_PALETTE[0];
    let mut best_d = f32::INFINITY;
    for p in STYLE_PALETTE {
        let d = (0..3).map(|c| (rgb[c] - p[c]).powi(2)).sum::<f32>();
        if d < best_d {
            best_d = d;
            best = p;
        }
    }
    best
}

/// Quantizes to [`STYLE_PALETTE`], darkens along luma edges of the quantized
/// image, then boosts saturation by 20%.
pub fn oracle_stylize(frame: &Frame) -> Frame {
    let (w, h) = (frame.width(), frame.height());
    let mut q = Frame::black(w, h);
    for y in 0..h {
        for x in 0..w {
            q.set_rgb(x, y, nearest_palette_color(frame.rgb(x, y)));
        }
    }
    let luma: Vec<f32> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| q.luma(x, y)).collect();
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        luma[y * w + x]
    };
    let mut out = Frame::black(w, h);
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            // Pairs are summed symmetrically so the result is exactly mirror
            // equivariant.
            let right = (at(xi + 1, yi - 1) + at(xi + 1, yi + 1)) + 2.0 * at(xi + 1, yi);
            let left = (at(xi - 1, yi - 1) + at(xi - 1, yi + 1)) + 2.0 * at(xi - 1, yi);
            let below = (at(xi - 1, yi + 1) + at(xi + 1, yi + 1)) + 2.0 * at(xi, yi + 1);
            let above = (at(xi - 1, yi - 1) + at(xi + 1, yi - 1)) + 2.0 * at(xi, yi - 1);
            let gx = (right - left) / 4.0;
            let gy = (below - above) / 4.0;
            let edge = (EDGE_GAIN * (gx * gx + gy * gy).sqrt()).clamp(0.0, 1.0);
            let k = 1.0 - EDGE_DARKEN * edge;
            let rgb = q.rgb(x, y).map(|v| v * k);
            let (hue, s, v) = rgb_to_hsv(rgb);
            let boosted = hsv_to_rgb(hue, (s * SATURATION_BOOST).min(1.0), v);
            out.set_rgb(x, y, boosted.map(|v| v.clamp(0.0, 1.0)));
        }
    }
    out
}
