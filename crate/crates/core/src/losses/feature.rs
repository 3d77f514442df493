//! Losses measured in the frozen feature space.

use crate::autograd::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::nets::{Bound, FeatureExtractor};

/// Checks 1-based feature level indices.
pub fn validate_levels(levels: &[usize]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::config("at least one feature level is required"));
    }
    if let Some(l) = levels.iter().find(|&&l| !(1..=3).contains(&l)) {
        return Err(Error::config(format!("feature level {l} is out of range 1..=3")));
    }
    Ok(())
}

/// `Σ_l mean |Φ_l(a) − Φ_l(b)|` over the selected levels.
pub fn temporal_loss(y_prev: &Frame, y_cur: &Frame, fx: &FeatureExtractor, levels: &[usize]) -> Result<f32> {
    y_prev.check_same_shape(y_cur, "temporal loss")?;
    validate_levels(levels)?;
    let (a, b) = (fx.extract(y_prev), fx.extract(y_cur));
    Ok(levels
        .iter()
        .map(|&l| {
            let (fa, fb) = (&a[l - 1], &b[l - 1]);
            let s: f64 = fa.data().iter().zip(fb.data()).map(|(x, y)| (x - y).abs() as f64).sum();
            (s / fa.numel() as f64) as f32
        })
        .sum())
}

/// Graph form of [`temporal_loss`] for `[n, 3, h, w]` batches; the mean is
/// also taken over the batch.
pub fn temporal_loss_graph(
    g: &mut Graph,
    fx: &FeatureExtractor,
    p: &Bound,
    y_prev: NodeId,
    y_cur: NodeId,
    levels: &[usize],
) -> NodeId {
    let a = fx.forward_graph(g, p, y_prev);
    let b = fx.forward_graph(g, p, y_cur);
    let mut total = None;
    for &l in levels {
        let d = g.sub(a[l - 1], b[l - 1]);
        let d = g.abs(d);
        let m = g.mean(d);
        total = Some(match total {
            None => m,
            Some(t) => g.add(t, m),
        });
    }
    total.expect("levels validated non-empty")
}

/// Contextual perceptual loss summed over the selected levels.
pub fn perceptual_loss(
    pred: &Frame,
    target: &Frame,
    fx: &FeatureExtractor,
    levels: &[usize],
    h: f32,
    eps: f32,
) -> Result<f32> {
    validate_levels(levels)?;
    let mut g = Graph::new();
    let p = fx.bind(&mut g);
    let a = g.constant(pred.to_tensor());
    let b = g.constant(target.to_tensor());
    let loss = perceptual_loss_graph(&mut g, fx, &p, a, b, levels, h, eps);
    Ok(g.value(loss).item())
}

/// Graph form of [`perceptual_loss`]; the target branch is detached.
#[allow(clippy::too_many_arguments)]
pub fn perceptual_loss_graph(
    g: &mut Graph,
    fx: &FeatureExtractor,
    p: &Bound,
    pred: NodeId,
    target: NodeId,
    levels: &[usize],
    h: f32,
    eps: f32,
) -> NodeId {
    let a = fx.forward_graph(g, p, pred);
    let b = fx.forward_graph(g, p, target);
    let mut total = None;
    for &l in levels {
        let t = g.value(b[l - 1]).clone();
        let t = g.constant(t);
        let c = g.contextual(a[l - 1], t, h, eps);
        total = Some(match total {
            None => c,
            Some(s) => g.add(s, c),
        });
    }
    total.expect("levels validated non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{render_video, sample_scene};

    #[test]
    fn temporal_identical_is_exactly_zero() {
        let fx = FeatureExtractor::from_seed(0);
        let (video, _) = render_video(&sample_scene(4, 1, 32).unwrap()).unwrap();
        let f = &video.frames()[0];
        assert_eq!(temporal_loss(f, f, &fx, &[1, 2, 3]).unwrap(), 0.0);
    }

    #[test]
    fn temporal_detects_brightness_change() {
        let fx = FeatureExtractor::from_seed(0);
        let a = Frame::filled(32, 32, [0.2, 0.3, 0.4]);
        let b = Frame::filled(32, 32, [0.5, 0.6, 0.7]);
        assert!(temporal_loss(&a, &b, &fx, &[1, 2, 3]).unwrap() > 0.0);
        assert!(matches!(temporal_loss(&a, &Frame::black(16, 32), &fx, &[1]), Err(Error::Dimension(_))));
        assert!(matches!(temporal_loss(&a, &b, &fx, &[4]), Err(Error::Config(_))));
    }

    #[test]
    fn graph_matches_value() {
        let fx = FeatureExtractor::from_seed(3);
        let (video, _) = render_video(&sample_scene(5, 2, 32).unwrap()).unwrap();
        let (a, b) = (&video.frames()[0], &video.frames()[1]);
        let mut g = Graph::new();
        let p = fx.bind(&mut g);
        let an = g.constant(a.to_tensor());
        let bn = g.constant(b.to_tensor());
        let t = temporal_loss_graph(&mut g, &fx, &p, an, bn, &[1, 3]);
        let v = temporal_loss(a, b, &fx, &[1, 3]).unwrap();
        assert!((g.value(t).item() - v).abs() < 1e-5);
    }

    #[test]
    fn perceptual_prefers_the_target_itself() {
        let fx = FeatureExtractor::from_seed(0);
        let (video, _) = render_video(&sample_scene(6, 1, 64).unwrap()).unwrap();
        let (other, _) = render_video(&sample_scene(7, 1, 64).unwrap()).unwrap();
        let t = &video.frames()[0];
        let same = perceptual_loss(t, t, &fx, &[2, 3], 0.5, 1e-5).unwrap();
        let diff = perceptual_loss(&other.frames()[0], t, &fx, &[2, 3], 0.5, 1e-5).unwrap();
        assert!(same.is_finite() && diff.is_finite());
        assert!(same < diff, "{same} vs {diff}");
    }
}
