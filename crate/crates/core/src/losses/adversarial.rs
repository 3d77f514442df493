//! Non-saturating logistic GAN loss with an R1 penalty on real samples.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autograd::{softplus, Graph, NodeId, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Generator,
    Discriminator,
}

fn mean_softplus(xs: &[f32], sign: f32) -> f32 {
    xs.iter().map(|&x| softplus(sign * x) as f64).sum::<f64>() as f32 / xs.len() as f32
}

/// Loss value from precomputed logits. `r1` is the squared real-sample
/// gradient norm (or an estimate of it), used on the discriminator side only.
pub fn adv_loss(d_real: &[f32], d_fake: &[f32], side: Side, gamma: f32, r1: Option<f32>) -> Result<f32> {
    if d_real.iter().chain(d_fake).chain(r1.iter()).any(|v| v.is_nan()) {
        return Err(Error::Numeric("adversarial loss received NaN".into()));
    }
    match side {
        Side::Generator => {
            if d_fake.is_empty() {
                return Err(Error::dim("generator loss needs fake logits"));
            }
            Ok(mean_softplus(d_fake, -1.0))
        }
        Side::Discriminator => {
            if d_real.is_empty() || d_fake.is_empty() {
                return Err(Error::dim("discriminator loss needs real and fake logits"));
            }
            let penalty = if gamma > 0.0 { gamma / 2.0 * r1.unwrap_or(0.0) } else { 0.0 };
            Ok(mean_softplus(d_real, -1.0) + mean_softplus(d_fake, 1.0) + penalty)
        }
    }
}

/// `mean softplus(−d_real) + mean softplus(d_fake)`.
pub fn d_loss_graph(g: &mut Graph, d_real: NodeId, d_fake: NodeId) -> NodeId {
    let neg = g.scale(d_real, -1.0);
    let a = g.softplus(neg);
    let a = g.mean(a);
    let b = g.softplus(d_fake);
    let b = g.mean(b);
    g.add(a, b)
}

/// `mean softplus(−d_fake)`.
pub fn g_loss_graph(g: &mut Graph, d_fake: NodeId) -> NodeId {
    let neg = g.scale(d_fake, -1.0);
    let a = g.softplus(neg);
    g.mean(a)
}

/// Perturbation scale of the R1 estimator.
pub const R1_SIGMA: f32 = 1e-2;

/// Unbiased-in-the-limit estimate of `E‖∇ₓD(x)‖²` over the batch without
/// second-order derivatives: for `v ~ N(0, I)`, `E[(vᵀ∇D)²] = ‖∇D‖²`, and
/// the directional derivative is taken by a central difference. `disc` maps
/// an input node to `[n, 1]` logits.
pub fn r1_estimate_graph<R: Rng>(
    g: &mut Graph,
    real: &Tensor,
    rng: &mut R,
    mut disc: impl FnMut(&mut Graph, NodeId) -> NodeId,
) -> NodeId {
    let v: Vec<f32> = (0..real.numel()).map(|_| StandardNormal.sample(rng)).collect();
    let shifted = |sign: f32| {
        let data = real.data().iter().zip(&v).map(|(x, d)| x + sign * R1_SIGMA * d).collect();
        Tensor::new(real.shape().to_vec(), data)
    };
    let plus = g.constant(shifted(1.0));
    let minus = g.constant(shifted(-1.0));
    let dp = disc(g, plus);
    let dm = disc(g, minus);
    let diff = g.sub(dp, dm);
    let dd = g.scale(diff, 1.0 / (2.0 * R1_SIGMA));
    let sq = g.square(dd);
    g.mean(sq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_logits_give_two_ln_two_on_d_side() {
        let v = adv_loss(&[0.0], &[0.0], Side::Discriminator, 0.0, None).unwrap();
        assert!((v - 1.3863).abs() < 1e-4);
        assert!((v - 2.0 * std::f32::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn zero_fake_logit_gives_ln_two_on_g_side() {
        let v = adv_loss(&[], &[0.0], Side::Generator, 0.0, None).unwrap();
        assert!((v - std::f32::consts::LN_2).abs() < 1e-4);
    }

    #[test]
    fn confident_discriminator_loss() {
        // 2·ln(1 + e^−10) evaluated in f64.
        let expected = 2.0 * (1.0f64 + (-10.0f64).exp()).ln();
        assert!((expected - 9.08e-5).abs() < 1e-7);
        let v = adv_loss(&[10.0], &[-10.0], Side::Discriminator, 0.0, None).unwrap();
        assert!(((v as f64) - expected).abs() / expected < 1e-4);
    }

    #[test]
    fn nan_is_numeric_error() {
        assert!(matches!(adv_loss(&[f32::NAN], &[0.0], Side::Discriminator, 0.0, None), Err(Error::Numeric(_))));
    }

    #[test]
    fn graph_losses_match_values() {
        let mut g = Graph::new();
        let r = g.constant(Tensor::new([2, 1], vec![0.5, -1.0]));
        let f = g.constant(Tensor::new([2, 1], vec![2.0, 0.1]));
        let d = d_loss_graph(&mut g, r, f);
        let gl = g_loss_graph(&mut g, f);
        let dv = adv_loss(&[0.5, -1.0], &[2.0, 0.1], Side::Discriminator, 0.0, None).unwrap();
        let gv = adv_loss(&[], &[2.0, 0.1], Side::Generator, 0.0, None).unwrap();
        assert!((g.value(d).item() - dv).abs() < 1e-6);
        assert!((g.value(gl).item() - gv).abs() < 1e-6);
    }

    #[test]
    fn r1_estimator_recovers_linear_gradient_norm() {
        // D(x) = wᵀx has ‖∇D‖² = ‖w‖² exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = Tensor::randn([1, 48], 0.3, &mut rng);
        let norm2: f32 = w.data().iter().map(|v| v * v).sum();
        let x = Tensor::randn([1, 48], 1.0, &mut rng);
        let trials = 4000;
        let mut acc = 0.0f64;
        for _ in 0..trials {
            let mut g = Graph::new();
            let wn = g.constant(w.clone());
            let est = r1_estimate_graph(&mut g, &x, &mut rng, |g, inp| g.linear(inp, wn, None));
            acc += g.value(est).item() as f64;
        }
        let mean = acc / trials as f64;
        assert!((mean - norm2 as f64).abs() / (norm2 as f64) < 0.1, "{mean} vs {norm2}");
    }
}
