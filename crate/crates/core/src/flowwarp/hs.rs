//! Horn–Schunck optical flow.

use crate::error::{Error, Result};
use crate::frame::{FlowField, Frame};

fn luma255(f: &Frame) -> Vec<f32> {
    let (w, h) = (f.width(), f.height());
    (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| 255.0 * f.luma(x, y)).collect()
}

/// Estimates the backward flow carrying `next`'s pixels to their positions in
/// `prev`, by fixed-point iteration of the Horn–Schunck equations on luma
/// scaled to `[0, 255]`. `alpha` weighs the smoothness term.
pub fn estimate_flow_classical(prev: &Frame, next: &Frame, iters: i64, alpha: f32) -> Result<FlowField> {
    if iters <= 0 {
        return Err(Error::config(format!("Horn–Schunck needs a positive iteration count, got {iters}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config(format!("Horn–Schunck alpha must be positive, got {alpha}")));
    }
    prev.check_same_shape(next, "estimate_flow_classical")?;
    let (w, h) = (next.width(), next.height());
    let a = luma255(next);
    let b = luma255(prev);
    let idx = |x: isize, y: isize| y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize;
    let n = w * h;
    let (mut ix, mut iy, mut it) = (vec![0.0f32; n], vec![0.0f32; n], vec![0.0f32; n]);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = idx(x, y);
            let dx = |img: &[f32]| 0.5 * (img[idx(x + 1, y)] - img[idx(x - 1, y)]);
            let dy = |img: &[f32]| 0.5 * (img[idx(x, y + 1)] - img[idx(x, y - 1)]);
            ix[i] = 0.5 * (dx(&a) + dx(&b));
            iy[i] = 0.5 * (dy(&a) + dy(&b));
            it[i] = b[i] - a[i];
        }
    }
    let alpha2 = alpha * alpha;
    let (mut u, mut v) = (vec![0.0f32; n], vec![0.0f32; n]);
    let (mut un, mut vn) = (vec![0.0f32; n], vec![0.0f32; n]);
    let avg = |f: &[f32], x: isize, y: isize| {
        (f[idx(x - 1, y)] + f[idx(x + 1, y)] + f[idx(x, y - 1)] + f[idx(x, y + 1)]) / 6.0
            + (f[idx(x - 1, y - 1)] + f[idx(x + 1, y - 1)] + f[idx(x - 1, y + 1)] + f[idx(x + 1, y + 1)]) / 12.0
    };
    for _ in 0..iters {
        for y in 0..h as isize {
            for x in 0..w as isize {
                let i = idx(x, y);
                let ub = avg(&u, x, y);
                let vb = avg(&v, x, y);
                let k = (ix[i] * ub + iy[i] * vb + it[i]) / (alpha2 + ix[i] * ix[i] + iy[i] * iy[i]);
                un[i] = ub - ix[i] * k;
                vn[i] = vb - iy[i] * k;
            }
        }
        std::mem::swap(&mut u, &mut un);
        std::mem::swap(&mut v, &mut vn);
    }
    let bound = w.max(h) as f32;
    u.extend(v);
    for d in &mut u {
        *d = d.clamp(-bound, bound);
    }
    FlowField::new(w, h, u)
}
