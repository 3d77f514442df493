//! Bilinear backward warping with replicate borders.

use crate::error::{Error, Result};
use crate::frame::{FlowField, Frame};

#[derive(Clone, Copy)]
struct Tap {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    fx: f32,
    fy: f32,
    // Whether the unclamped sample coordinate lies inside the image, i.e.
    // whether the sample position responds to the flow.
    inside_x: bool,
    inside_y: bool,
}

#[inline]
fn tap(x: usize, y: usize, dx: f32, dy: f32, h: usize, w: usize) -> Tap {
    let max_x = (w - 1) as f32;
    let max_y = (h - 1) as f32;
    let ux = x as f32 + dx;
    let uy = y as f32 + dy;
    let sx = ux.clamp(0.0, max_x);
    let sy = uy.clamp(0.0, max_y);
    let x0 = sx.floor() as usize;
    let y0 = sy.floor() as usize;
    Tap {
        x0,
        y0,
        x1: (x0 + 1).min(w - 1),
        y1: (y0 + 1).min(h - 1),
        fx: sx - x0 as f32,
        fy: sy - y0 as f32,
        inside_x: (0.0..=max_x).contains(&ux),
        inside_y: (0.0..=max_y).contains(&uy),
    }
}

/// Warps `c` planes of `h × w` by a planar `(dx, dy)` flow.
pub(crate) fn warp_planes(img: &[f32], flow: &[f32], c: usize, h: usize, w: usize, out: &mut [f32]) {
    let n = h * w;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let t = tap(x, y, flow[i], flow[n + i], h, w);
            for ch in 0..c {
                let p = &img[ch * n..(ch + 1) * n];
                // a + f·(b − a) keeps constant neighbourhoods exact.
                let (i00, i01) = (p[t.y0 * w + t.x0], p[t.y0 * w + t.x1]);
                let (i10, i11) = (p[t.y1 * w + t.x0], p[t.y1 * w + t.x1]);
                let top = i00 + t.fx * (i01 - i00);
                let bot = i10 + t.fx * (i11 - i10);
                out[ch * n + i] = top + t.fy * (bot - top);
            }
        }
    }
}

/// Accumulates image and flow gradients of [`warp_planes`].
#[allow(clippy::too_many_arguments)]
pub(crate) fn warp_planes_backward(
    img: &[f32],
    flow: &[f32],
    c: usize,
    h: usize,
    w: usize,
    gout: &[f32],
    mut dimg: Option<&mut [f32]>,
    mut dflow: Option<&mut [f32]>,
) {
    let n = h * w;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let t = tap(x, y, flow[i], flow[n + i], h, w);
            let (w00, w01) = ((1.0 - t.fy) * (1.0 - t.fx), (1.0 - t.fy) * t.fx);
            let (w10, w11) = (t.fy * (1.0 - t.fx), t.fy * t.fx);
            let mut gdx = 0.0f32;
            let mut gdy = 0.0f32;
            for ch in 0..c {
                let g = gout[ch * n + i];
                if let Some(d) = dimg.as_deref_mut() {
                    let d = &mut d[ch * n..(ch + 1) * n];
                    d[t.y0 * w + t.x0] += w00 * g;
                    d[t.y0 * w + t.x1] += w01 * g;
                    d[t.y1 * w + t.x0] += w10 * g;
                    d[t.y1 * w + t.x1] += w11 * g;
                }
                if dflow.is_some() {
                    let p = &img[ch * n..(ch + 1) * n];
                    let (i00, i01) = (p[t.y0 * w + t.x0], p[t.y0 * w + t.x1]);
                    let (i10, i11) = (p[t.y1 * w + t.x0], p[t.y1 * w + t.x1]);
                    if t.inside_x {
                        gdx += g * ((1.0 - t.fy) * (i01 - i00) + t.fy * (i11 - i10));
                    }
                    if t.inside_y {
                        gdy += g * ((1.0 - t.fx) * (i10 - i00) + t.fx * (i11 - i01));
                    }
                }
            }
            if let Some(d) = dflow.as_deref_mut() {
                d[i] += gdx;
                d[n + i] += gdy;
            }
        }
    }
}

/// Resamples `image` at `(x + dx, y + dy)` for every pixel, bilinearly, with
/// sample coordinates clamped to the image (replicate border).
pub fn backward_warp(image: &Frame, flow: &FlowField) -> Result<Frame> {
    if image.width() != flow.width() || image.height() != flow.height() {
        return Err(Error::dim(format!(
            "warp: image {}x{} vs flow {}x{}",
            image.width(),
            image.height(),
            flow.width(),
            flow.height()
        )));
    }
    let mut out = vec![0.0f32; image.data().len()];
    warp_planes(image.data(), flow.data(), 3, image.height(), image.width(), &mut out);
    Frame::new(image.width(), image.height(), out)
}
