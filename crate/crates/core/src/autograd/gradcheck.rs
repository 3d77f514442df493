//! Finite-difference checks of every differentiable graph op.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Graph, NodeId, Tensor};

type Build = dyn Fn(&mut Graph, &[NodeId]) -> NodeId;

/// Contracts the op output with fixed random weights so every output element
/// contributes to the scalar objective.
fn objective(g: &mut Graph, out: NodeId, seed: u64) -> NodeId {
    let shape = g.value(out).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Tensor::randn(shape, 1.0, &mut rng);
    let w = g.constant(w);
    let m = g.mul(out, w);
    g.sum(m)
}

fn check(name: &str, inputs: Vec<Tensor>, build: &Build, tol: f64) {
    let eval = |vals: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = vals.iter().map(|t| g.constant(t.clone())).collect();
        let out = build(&mut g, &ids);
        let s = objective(&mut g, out, 99);
        g.value(s).item() as f64
    };
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let out = build(&mut g, &ids);
    let s = objective(&mut g, out, 99);
    let grads = g.backward(s);
    let eps = 1e-2f32;
    for (which, _) in inputs.iter().enumerate() {
        let analytic = grads.get(ids[which]).expect("missing grad").data().to_vec();
        for (k, &a) in analytic.iter().enumerate() {
            let mut plus = inputs.clone();
            plus[which].data_mut()[k] += eps;
            let mut minus = inputs.clone();
            minus[which].data_mut()[k] -= eps;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * eps as f64);
            let err = (fd - a as f64).abs() / fd.abs().max(1.0);
            assert!(err < tol, "{name}: input {which} elem {k}: fd {fd} vs analytic {a}");
        }
    }
}

fn rand_t(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::randn(shape.to_vec(), 0.7, &mut rng)
}

/// Values bounded away from zero so kinks are not straddled by the stencil.
fn rand_away(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f32 = rng.random_range(0.1..1.0);
            if rng.random::<bool>() {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

#[test]
fn elementwise_ops() {
    let s = [2, 3, 2, 2];
    check("add", vec![rand_t(&s, 1), rand_t(&s, 2)], &|g, x| g.add(x[0], x[1]), 1e-3);
    check("sub", vec![rand_t(&s, 1), rand_t(&s, 2)], &|g, x| g.sub(x[0], x[1]), 1e-3);
    check("mul", vec![rand_t(&s, 1), rand_t(&s, 2)], &|g, x| g.mul(x[0], x[1]), 1e-3);
    check("scale", vec![rand_t(&s, 3)], &|g, x| g.scale(x[0], -1.7), 1e-3);
    check("add_scalar", vec![rand_t(&s, 3)], &|g, x| g.add_scalar(x[0], 0.4), 1e-3);
    check("lrelu", vec![rand_away(&s, 4)], &|g, x| g.leaky_relu(x[0], 0.2), 1e-3);
    check("tanh", vec![rand_t(&s, 5)], &|g, x| g.tanh(x[0]), 1e-3);
    check("sigmoid", vec![rand_t(&s, 6)], &|g, x| g.sigmoid(x[0]), 1e-3);
    check("softplus", vec![rand_t(&s, 7)], &|g, x| g.softplus(x[0]), 1e-3);
    check("abs", vec![rand_away(&s, 8)], &|g, x| g.abs(x[0]), 1e-3);
    check("square", vec![rand_t(&s, 9)], &|g, x| g.square(x[0]), 1e-3);
    let pos = rand_t(&s, 10).map(|v| v.abs() + 0.5);
    check("sqrt", vec![pos.clone()], &|g, x| g.sqrt(x[0]), 1e-3);
    check("log", vec![pos], &|g, x| g.log(x[0]), 1e-3);
    // Keep every value at least 0.05 from the clamp bounds.
    let clamp_in = rand_away(&s, 11).map(|v| if v.abs() < 0.55 { v * 0.8 } else { v });
    check("clamp", vec![clamp_in], &|g, x| g.clamp(x[0], -0.5, 0.5), 1e-3);
    check("mean", vec![rand_t(&s, 12)], &|g, x| g.mean(x[0]), 1e-3);
    check("sum", vec![rand_t(&s, 12)], &|g, x| g.sum(x[0]), 1e-3);
    check("reshape", vec![rand_t(&s, 13)], &|g, x| g.reshape(x[0], [2, 12]), 1e-3);
}

#[test]
fn structural_ops() {
    check("upsample", vec![rand_t(&[2, 2, 3, 3], 1)], &|g, x| g.upsample2x(x[0]), 1e-3);
    check("concat", vec![rand_t(&[2, 1, 3, 3], 2), rand_t(&[2, 2, 3, 3], 3)], &|g, x| g.concat(&[x[0], x[1]]), 1e-3);
    check("broadcast", vec![rand_t(&[1, 2, 2, 2], 4)], &|g, x| g.broadcast_batch(x[0], 3), 1e-3);
    check(
        "affine",
        vec![rand_t(&[2, 3, 2, 2], 5), rand_t(&[2, 3], 6), rand_t(&[2, 3], 7)],
        &|g, x| g.channel_affine(x[0], x[1], x[2]),
        1e-3,
    );
}

#[test]
fn conv_and_linear() {
    for &(stride, pad, k) in &[(1, 1, 3), (2, 1, 3), (1, 0, 1)] {
        check(
            "conv2d",
            vec![rand_t(&[2, 2, 5, 5], 1), rand_t(&[3, 2, k, k], 2), rand_t(&[3], 3)],
            &move |g, x| g.conv2d(x[0], x[1], Some(x[2]), stride, pad),
            1e-3,
        );
    }
    check(
        "linear",
        vec![rand_t(&[3, 4], 4), rand_t(&[5, 4], 5), rand_t(&[5], 6)],
        &|g, x| g.linear(x[0], x[1], Some(x[2])),
        1e-3,
    );
}

#[test]
fn warp_image_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let flow = Tensor::new([1, 2, 4, 4], (0..32).map(|_| rng.random_range(-1.2..1.2)).collect());
    check(
        "warp",
        vec![rand_t(&[1, 3, 4, 4], 22)],
        &move |g, x| {
            let f = g.constant(flow.clone());
            g.warp(x[0], f)
        },
        1e-3,
    );
}

#[test]
fn gradients_skip_constants() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::scalar(2.0));
    let b = g.leaf(Tensor::scalar(3.0), true);
    let m = g.mul(a, b);
    let grads = g.backward(m);
    assert!(grads.get(a).is_none());
    assert_eq!(grads.get(b).unwrap().item(), 2.0);
}

#[test]
fn shared_leaf_accumulates() {
    let mut g = Graph::new();
    let a = g.leaf(Tensor::scalar(3.0), true);
    let sq = g.mul(a, a);
    let s = g.add(sq, a);
    let grads = g.backward(s);
    assert_eq!(grads.get(a).unwrap().item(), 7.0);
}
