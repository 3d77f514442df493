//! Contextual similarity between two sets of feature vectors.
//!
//! Both sets are centered on the target's mean, compared by cosine distance,
//! and each prediction's distances are normalized by its nearest target before
//! a softmax-like affinity. The loss is `−ln(mean_j max_i A_ij + 1e-8)`.

use crate::autograd::conv::gemm;
use crate::error::{Error, Result};

const NORM_FLOOR: f32 = 1e-8;
const LOG_FLOOR: f32 = 1e-8;

/// Contextual loss between two planar feature blocks (`[c][np]` and
/// `[c][nt]`). When `grad` is given, `scale · ∂loss/∂pred` is accumulated
/// into its buffer. The target is held fixed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn contextual_planar(
    pred: &[f32],
    target: &[f32],
    c: usize,
    np: usize,
    nt: usize,
    h: f32,
    eps: f32,
    grad: Option<(&mut [f32], f32)>,
) -> f32 {
    let mut mu = vec![0.0f32; c];
    for (ch, m) in mu.iter_mut().enumerate() {
        *m = target[ch * nt..(ch + 1) * nt].iter().sum::<f32>() / nt as f32;
    }
    // Row-major [n][c] normalized copies.
    let normalize = |src: &[f32], n: usize| -> (Vec<f32>, Vec<f32>) {
        let mut rows = vec![0.0f32; n * c];
        let mut norms = vec![0.0f32; n];
        for i in 0..n {
            let mut sq = 0.0f32;
            for ch in 0..c {
                let v = src[ch * n + i] - mu[ch];
                rows[i * c + ch] = v;
                sq += v * v;
            }
            let norm = sq.sqrt().max(NORM_FLOOR);
            norms[i] = norm;
            for v in &mut rows[i * c..(i + 1) * c] {
                *v /= norm;
            }
        }
        (rows, norms)
    };
    let (p_hat, p_norm) = normalize(pred, np);
    let (t_hat, _) = normalize(target, nt);

    let mut sim = vec![0.0f32; np * nt];
    gemm(np, c, nt, &p_hat, (c, 1), &t_hat, (1, c), 0.0, &mut sim, (nt, 1));
    let dist: Vec<f32> = sim.iter().map(|s| (1.0 - s).max(0.0)).collect();

    let mut min_d = vec![0.0f32; np];
    let mut argmin = vec![0usize; np];
    let mut affinity = vec![0.0f32; np * nt];
    let mut weights = vec![0.0f32; np * nt];
    let mut row_sum = vec![0.0f32; np];
    for i in 0..np {
        let row = &dist[i * nt..(i + 1) * nt];
        let (k, &m) = row.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty target set");
        min_d[i] = m;
        argmin[i] = k;
        let denom = m + eps;
        let mut s = 0.0f32;
        for j in 0..nt {
            let wv = ((1.0 - row[j] / denom) / h).exp();
            weights[i * nt + j] = wv;
            s += wv;
        }
        row_sum[i] = s;
        for j in 0..nt {
            affinity[i * nt + j] = weights[i * nt + j] / s;
        }
    }
    let mut best_i = vec![0usize; nt];
    let mut cx = 0.0f32;
    for (j, best) in best_i.iter_mut().enumerate() {
        let mut bi = 0;
        let mut bv = f32::NEG_INFINITY;
        for i in 0..np {
            let a = affinity[i * nt + j];
            if a > bv {
                bv = a;
                bi = i;
            }
        }
        *best = bi;
        cx += bv;
    }
    cx /= nt as f32;
    let loss = -(cx + LOG_FLOOR).ln();

    let Some((dpred, scale)) = grad else {
        return loss;
    };

    let d_cx = -scale / (cx + LOG_FLOOR);
    let mut g_a = vec![0.0f32; np * nt];
    for (j, &i) in best_i.iter().enumerate() {
        g_a[i * nt + j] += d_cx / nt as f32;
    }
    let mut g_s = vec![0.0f32; np * nt];
    for i in 0..np {
        let ga = &g_a[i * nt..(i + 1) * nt];
        if ga.iter().all(|&v| v == 0.0) {
            continue;
        }
        let aff = &affinity[i * nt..(i + 1) * nt];
        let dot: f32 = ga.iter().zip(aff).map(|(g, a)| g * a).sum();
        let denom = min_d[i] + eps;
        let mut g_min = 0.0f32;
        for j in 0..nt {
            let g_w = (ga[j] - dot) / row_sum[i];
            let g_dn = g_w * weights[i * nt + j] * (-1.0 / h);
            let d = dist[i * nt + j];
            g_s[i * nt + j] = g_dn / denom;
            g_min -= g_dn * d / (denom * denom);
        }
        g_s[i * nt + argmin[i]] += g_min;
        // Through d = max(1 − s, 0).
        for j in 0..nt {
            let idx = i * nt + j;
            g_s[idx] = if 1.0 - sim[idx] > 0.0 { -g_s[idx] } else { 0.0 };
        }
    }
    let mut g_phat = vec![0.0f32; np * c];
    gemm(np, nt, c, &g_s, (nt, 1), &t_hat, (c, 1), 0.0, &mut g_phat, (c, 1));
    for i in 0..np {
        let ph = &p_hat[i * c..(i + 1) * c];
        let gp = &g_phat[i * c..(i + 1) * c];
        let norm = p_norm[i];
        let proj: f32 = if norm > NORM_FLOOR { ph.iter().zip(gp).map(|(a, b)| a * b).sum() } else { 0.0 };
        for ch in 0..c {
            dpred[ch * np + i] += (gp[ch] - ph[ch] * proj) / norm;
        }
    }
    loss
}

/// Contextual loss between two sets of feature vectors, one vector per row.
///
/// Sets need not be the same size, but every vector must share one length.
/// With a single vector per set the affinity is trivially 1, so the loss is
/// only informative for sets of two or more vectors.
pub fn contextual_loss(pred: &[Vec<f32>], target: &[Vec<f32>], h: f32, eps: f32) -> Result<f32> {
    if pred.is_empty() || target.is_empty() {
        return Err(Error::dim("contextual loss needs non-empty feature sets"));
    }
    let c = target[0].len();
    if c == 0 || pred.iter().chain(target).any(|v| v.len() != c) {
        return Err(Error::dim("contextual loss feature vectors differ in length"));
    }
    if h <= 0.0 || eps <= 0.0 {
        return Err(Error::config("contextual loss needs h > 0 and eps > 0"));
    }
    let planar = |set: &[Vec<f32>]| -> Vec<f32> {
        let n = set.len();
        let mut out = vec![0.0f32; n * c];
        for (i, v) in set.iter().enumerate() {
            for (ch, &x) in v.iter().enumerate() {
                out[ch * n + i] = x;
            }
        }
        out
    };
    Ok(contextual_planar(&planar(pred), &planar(target), c, pred.len(), target.len(), h, eps, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent f64 evaluation of the contextual loss formula.
    fn oracle(pred: &[Vec<f64>], target: &[Vec<f64>], h: f64, eps: f64) -> f64 {
        let c = target[0].len();
        let mu: Vec<f64> = (0..c).map(|ch| target.iter().map(|t| t[ch]).sum::<f64>() / target.len() as f64).collect();
        let unit = |v: &Vec<f64>| -> Vec<f64> {
            let centered: Vec<f64> = v.iter().zip(&mu).map(|(a, m)| a - m).collect();
            let n = centered.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-8);
            centered.iter().map(|x| x / n).collect()
        };
        let ps: Vec<Vec<f64>> = pred.iter().map(unit).collect();
        let ts: Vec<Vec<f64>> = target.iter().map(unit).collect();
        let d: Vec<Vec<f64>> = ps
            .iter()
            .map(|p| ts.iter().map(|t| (1.0 - p.iter().zip(t).map(|(a, b)| a * b).sum::<f64>()).max(0.0)).collect())
            .collect();
        let a: Vec<Vec<f64>> = d
            .iter()
            .map(|row| {
                let m = row.iter().cloned().fold(f64::INFINITY, f64::min);
                let w: Vec<f64> = row.iter().map(|x| ((1.0 - x / (m + eps)) / h).exp()).collect();
                let s: f64 = w.iter().sum();
                w.iter().map(|x| x / s).collect()
            })
            .collect();
        let cx = (0..target.len()).map(|j| a.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max)).sum::<f64>()
            / target.len() as f64;
        -(cx + 1e-8).ln()
    }

    fn to_f32(set: &[Vec<f64>]) -> Vec<Vec<f32>> {
        set.iter().map(|v| v.iter().map(|&x| x as f32).collect()).collect()
    }

    #[test]
    fn identical_orthogonal_sets_are_near_zero() {
        let basis: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let expected = oracle(&basis, &basis, 0.5, 1e-5);
        let got = contextual_loss(&to_f32(&basis), &to_f32(&basis), 0.5, 1e-5).unwrap();
        assert!(expected < 0.05);
        assert!((got as f64 - expected).abs() < 1e-5, "{got} vs {expected}");
    }

    #[test]
    fn single_vector_sets_are_degenerate() {
        let a = vec![vec![1.0f32, 0.0, 0.0]];
        let b = vec![vec![0.0f32, 1.0, 0.0]];
        assert!(contextual_loss(&a, &a, 0.5, 1e-5).unwrap().abs() < 1e-6);
        assert!(contextual_loss(&a, &b, 0.5, 1e-5).unwrap().abs() < 1e-6);
    }

    #[test]
    fn zero_vectors_never_produce_nan() {
        let z = vec![vec![0.0f32; 3]; 4];
        let v = contextual_loss(&z, &z, 0.5, 1e-5).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn rejects_empty_and_ragged_sets() {
        assert!(contextual_loss(&[], &[vec![1.0]], 0.5, 1e-5).is_err());
        assert!(contextual_loss(&[vec![1.0, 2.0]], &[vec![1.0]], 0.5, 1e-5).is_err());
    }

    #[test]
    fn matches_oracle_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let np = rng.random_range(2..12);
            let nt = rng.random_range(2..12);
            let c = rng.random_range(2..8);
            let p: Vec<Vec<f64>> = (0..np).map(|_| (0..c).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
            let t: Vec<Vec<f64>> = (0..nt).map(|_| (0..c).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
            let want = oracle(&p, &t, 0.5, 1e-5);
            let got = contextual_loss(&to_f32(&p), &to_f32(&t), 0.5, 1e-5).unwrap() as f64;
            assert!((got - want).abs() < 1e-3 * want.abs().max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn self_similarity_beats_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut wins = 0;
        for _ in 0..100 {
            let f: Vec<Vec<f32>> = (0..8).map(|_| (0..6).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect()).collect();
            let g: Vec<Vec<f32>> = (0..8).map(|_| (0..6).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect()).collect();
            if contextual_loss(&f, &f, 0.5, 1e-5).unwrap() <= contextual_loss(&f, &g, 0.5, 1e-5).unwrap() {
                wins += 1;
            }
        }
        assert!(wins >= 99, "{wins}/100");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (c, np, nt) = (5, 9, 7);
        let pred: Vec<f32> = (0..c * np).map(|_| rng.random::<f32>() - 0.5).collect();
        let target: Vec<f32> = (0..c * nt).map(|_| rng.random::<f32>() - 0.5).collect();
        let mut grad = vec![0.0f32; c * np];
        contextual_planar(&pred, &target, c, np, nt, 0.5, 1e-5, Some((&mut grad, 1.0)));
        let f = |p: &[f32]| contextual_planar(p, &target, c, np, nt, 0.5, 1e-5, None) as f64;
        let eps = 1e-3f32;
        let mut max_err = 0.0f64;
        for k in 0..pred.len() {
            let mut a = pred.clone();
            a[k] += eps;
            let mut b = pred.clone();
            b[k] -= eps;
            let fd = (f(&a) - f(&b)) / (2.0 * eps as f64);
            max_err = max_err.max((fd - grad[k] as f64).abs() / fd.abs().max(1e-2));
        }
        assert!(max_err < 2e-2, "max rel err {max_err}");
    }
}
