//! im2col convolution kernels on top of `matrixmultiply`.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;

static PARALLEL: AtomicBool = AtomicBool::new(false);

/// Enables column-chunked parallel convolution forward passes.
///
/// Results are bit-identical either way: each output column is computed by
/// the same reduction regardless of chunking.
pub fn set_parallel(enabled: bool) {
    PARALLEL.store(enabled, Ordering::Relaxed);
}

pub fn parallel_enabled() -> bool {
    PARALLEL.load(Ordering::Relaxed)
}

/// `c = a·b + beta·c` with arbitrary strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (a_rs, a_cs): (usize, usize),
    b: &[f32],
    (b_rs, b_cs): (usize, usize),
    beta: f32,
    c: &mut [f32],
    (c_rs, c_cs): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(k == 0 || a.len() > (m - 1) * a_rs + (k - 1) * a_cs);
    debug_assert!(k == 0 || b.len() > (k - 1) * b_rs + (n - 1) * b_cs);
    debug_assert!(c.len() > (m - 1) * c_rs + (n - 1) * c_cs);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_rs as isize,
            a_cs as isize,
            b.as_ptr(),
            b_rs as isize,
            b_cs as isize,
            beta,
            c.as_mut_ptr(),
            c_rs as isize,
            c_cs as isize,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_hw(&self) -> (usize, usize) {
        ((self.h + 2 * self.pad - self.k) / self.stride + 1, (self.w + 2 * self.pad - self.k) / self.stride + 1)
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    fn col_rows(&self) -> usize {
        self.cin * self.k * self.k
    }
}

fn im2col(x: &[f32], g: &ConvGeom, col: &mut [f32]) {
    let (ho, wo) = g.out_hw();
    let cols = ho * wo;
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let out_row = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= g.h as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, o) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *o = if ix < 0 || ix >= g.w as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im(col: &[f32], g: &ConvGeom, dx: &mut [f32]) {
    let (ho, wo) = g.out_hw();
    let cols = ho * wo;
    for ci in 0..g.cin {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let src = &col[row * cols..(row + 1) * cols];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

struct SendPtr(*mut f32);
unsafe impl Send for SendPtr {}
unsafe impl Sync for SendPtr {}

/// Forward convolution of an `[n, cin, h, w]` batch.
pub fn conv2d_forward(x: &[f32], n: usize, g: &ConvGeom, weight: &[f32], bias: Option<&[f32]>) -> Vec<f32> {
    let (ho, wo) = g.out_hw();
    let cols = ho * wo;
    let kdim = g.col_rows();
    let in_len = g.cin * g.h * g.w;
    let out_len = g.cout * cols;
    let mut out = vec![0.0f32; n * out_len];
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![0.0f32; kdim * cols] };
    for s in 0..n {
        let xs = &x[s * in_len..(s + 1) * in_len];
        let colref: &[f32] = if g.is_pointwise() {
            xs
        } else {
            im2col(xs, g, &mut col);
            &col
        };
        let os = &mut out[s * out_len..(s + 1) * out_len];
        if let Some(b) = bias {
            for (co, row) in os.chunks_mut(cols).enumerate() {
                row.fill(b[co]);
            }
        }
        let beta = if bias.is_some() { 1.0 } else { 0.0 };
        const CHUNK: usize = 512;
        if parallel_enabled() && cols > CHUNK {
            let ptr = SendPtr(os.as_mut_ptr());
            let ptr = &ptr;
            (0..cols.div_ceil(CHUNK)).into_par_iter().for_each(|ci| {
                let c0 = ci * CHUNK;
                let width = CHUNK.min(cols - c0);
                // SAFETY: chunks write disjoint column ranges of `os`.
                let os_chunk = unsafe { std::slice::from_raw_parts_mut(ptr.0.add(c0), (g.cout - 1) * cols + width) };
                gemm(g.cout, kdim, width, weight, (kdim, 1), &colref[c0..], (cols, 1), beta, os_chunk, (cols, 1));
            });
        } else {
            gemm(g.cout, kdim, cols, weight, (kdim, 1), colref, (cols, 1), beta, os, (cols, 1));
        }
    }
    out
}

/// Gradients of a convolution. Returns `(d_input, d_weight, d_bias)`; the
/// input gradient is skipped when `need_input` is false.
pub fn conv2d_backward(
    x: &[f32],
    n: usize,
    g: &ConvGeom,
    weight: &[f32],
    dy: &[f32],
    need_input: bool,
) -> (Option<Vec<f32>>, Vec<f32>, Vec<f32>) {
    let (ho, wo) = g.out_hw();
    let cols = ho * wo;
    let kdim = g.col_rows();
    let in_len = g.cin * g.h * g.w;
    let out_len = g.cout * cols;
    let mut dw = vec![0.0f32; g.cout * kdim];
    let mut db = vec![0.0f32; g.cout];
    let mut dx = need_input.then(|| vec![0.0f32; n * in_len]);
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![0.0f32; kdim * cols] };
    let mut dcol = vec![0.0f32; kdim * cols];
    for s in 0..n {
        let xs = &x[s * in_len..(s + 1) * in_len];
        let dys = &dy[s * out_len..(s + 1) * out_len];
        for (co, row) in dys.chunks(cols).enumerate() {
            db[co] += row.iter().sum::<f32>();
        }
        let colref: &[f32] = if g.is_pointwise() {
            xs
        } else {
            im2col(xs, g, &mut col);
            &col
        };
        // dW[cout, kdim] += dY[cout, cols] · colᵀ[cols, kdim]
        gemm(g.cout, cols, kdim, dys, (cols, 1), colref, (1, cols), 1.0, &mut dw, (kdim, 1));
        if let Some(dx) = dx.as_mut() {
            let dxs = &mut dx[s * in_len..(s + 1) * in_len];
            if g.is_pointwise() {
                gemm(kdim, g.cout, cols, weight, (1, kdim), dys, (cols, 1), 0.0, dxs, (cols, 1));
            } else {
                gemm(kdim, g.cout, cols, weight, (1, kdim), dys, (cols, 1), 0.0, &mut dcol, (cols, 1));
                col2im(&dcol, g, dxs);
            }
        }
    }
    (dx, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &[f32], g: &ConvGeom, w: &[f32], b: &[f32]) -> Vec<f32> {
        let (ho, wo) = g.out_hw();
        let mut out = vec![0.0; g.cout * ho * wo];
        for co in 0..g.cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[co] as f64;
                    for ci in 0..g.cin {
                        for ky in 0..g.k {
                            for kx in 0..g.k {
                                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                if iy < 0 || ix < 0 || iy >= g.h as isize || ix >= g.w as isize {
                                    continue;
                                }
                                let xv = x[(ci * g.h + iy as usize) * g.w + ix as usize] as f64;
                                let wv = w[((co * g.cin + ci) * g.k + ky) * g.k + kx] as f64;
                                acc += xv * wv;
                            }
                        }
                    }
                    out[(co * ho + oy) * wo + ox] = acc as f32;
                }
            }
        }
        out
    }

    fn pseudo(n: usize, seed: u32) -> Vec<f32> {
        (0..n)
            .map(|i| (((i as u32).wrapping_mul(2654435761).wrapping_add(seed) >> 8) % 1000) as f32 / 500.0 - 1.0)
            .collect()
    }

    #[test]
    fn matches_naive_convolution() {
        for &(k, stride, pad) in &[(3, 1, 1), (3, 2, 1), (1, 1, 0), (4, 2, 1)] {
            let g = ConvGeom { cin: 3, h: 9, w: 7, cout: 5, k, stride, pad };
            let x = pseudo(3 * 9 * 7, 1);
            let w = pseudo(5 * 3 * k * k, 2);
            let b = pseudo(5, 3);
            let fast = conv2d_forward(&x, 1, &g, &w, Some(&b));
            let slow = naive_conv(&x, &g, &w, &b);
            for (a, e) in fast.iter().zip(&slow) {
                assert!((a - e).abs() < 1e-4, "k={k} s={stride}: {a} vs {e}");
            }
        }
    }

    #[test]
    fn parallel_forward_is_bit_identical() {
        let g = ConvGeom { cin: 4, h: 40, w: 40, cout: 6, k: 3, stride: 1, pad: 1 };
        let x = pseudo(4 * 40 * 40, 5);
        let w = pseudo(6 * 4 * 9, 6);
        let serial = conv2d_forward(&x, 1, &g, &w, None);
        set_parallel(true);
        let par = conv2d_forward(&x, 1, &g, &w, None);
        set_parallel(false);
        assert_eq!(serial, par);
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        // <conv(x), dy> == <x, conv_xᵀ(dy)> and <conv_w(x), dy> == <w, dW>.
        let g = ConvGeom { cin: 2, h: 6, w: 5, cout: 3, k: 3, stride: 2, pad: 1 };
        let (ho, wo) = g.out_hw();
        let x = pseudo(2 * 6 * 5, 9);
        let w = pseudo(3 * 2 * 9, 10);
        let dy = pseudo(3 * ho * wo, 11);
        let y = conv2d_forward(&x, 1, &g, &w, None);
        let (dx, dw, _) = conv2d_backward(&x, 1, &g, &w, &dy, true);
        let lhs: f64 = y.iter().zip(&dy).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
        let rhs_x: f64 = x.iter().zip(dx.unwrap().iter()).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
        let rhs_w: f64 = w.iter().zip(&dw).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
        assert!((lhs - rhs_x).abs() < 1e-3, "{lhs} vs {rhs_x}");
        assert!((lhs - rhs_w).abs() < 1e-3, "{lhs} vs {rhs_w}");
    }
}
