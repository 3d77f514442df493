use super::conv::{self, ConvGeom};
use super::tensor::Tensor;
use crate::flowwarp::warp as warp_kernel;
use crate::losses::contextual as cx_kernel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f32),
    AddScalar(NodeId),
    LeakyRelu(NodeId, f32),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softplus(NodeId),
    Abs(NodeId),
    Square(NodeId),
    Sqrt(NodeId),
    Log(NodeId),
    Clamp(NodeId, f32, f32),
    Sum(NodeId),
    Mean(NodeId),
    Reshape(NodeId),
    BroadcastBatch(NodeId),
    Conv2d { x: NodeId, w: NodeId, b: Option<NodeId>, geom: ConvGeom },
    Linear { x: NodeId, w: NodeId, b: Option<NodeId> },
    Upsample2x(NodeId),
    Concat(Vec<NodeId>),
    ChannelAffine { x: NodeId, scale: NodeId, shift: NodeId },
    Warp { image: NodeId, flow: NodeId },
    Contextual { pred: NodeId, target: NodeId, h: f32, eps: f32 },
}

impl Op {
    fn parents(&self) -> Vec<NodeId> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) => vec![*a, *b],
            Scale(a, _)
            | AddScalar(a)
            | LeakyRelu(a, _)
            | Tanh(a)
            | Sigmoid(a)
            | Softplus(a)
            | Abs(a)
            | Square(a)
            | Sqrt(a)
            | Log(a)
            | Clamp(a, _, _)
            | Sum(a)
            | Mean(a)
            | Reshape(a)
            | BroadcastBatch(a)
            | Upsample2x(a) => vec![*a],
            Conv2d { x, w, b, .. } | Linear { x, w, b } => {
                let mut v = vec![*x, *w];
                v.extend(b.iter().copied());
                v
            }
            Concat(items) => items.clone(),
            ChannelAffine { x, scale, shift } => vec![*x, *scale, *shift],
            Warp { image, flow } => vec![*image, *flow],
            Contextual { pred, target, .. } => vec![*pred, *target],
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Tape of tensor operations supporting reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so reverse insertion order is a
/// valid reverse topological order for [`Graph::backward`].
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to the trainable leaves.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor, trainable: bool) -> NodeId {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: trainable });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn needs_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let needs_grad = op.parents().iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, s: f32) -> NodeId {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: NodeId, s: f32) -> NodeId {
        let v = self.value(a).map(|x| x + s);
        self.push(v, Op::AddScalar(a))
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f32) -> NodeId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(a, slope))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f32::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f32::abs);
        self.push(v, Op::Abs(a))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    /// Square root; the gradient at exactly zero is taken as zero.
    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f32::sqrt);
        self.push(v, Op::Sqrt(a))
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f32::ln);
        self.push(v, Op::Log(a))
    }

    pub fn clamp(&mut self, a: NodeId, lo: f32, hi: f32) -> NodeId {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a);
        let v = Tensor::scalar(t.sum() / t.numel() as f32);
        self.push(v, Op::Mean(a))
    }

    pub fn reshape(&mut self, a: NodeId, shape: impl Into<Vec<usize>>) -> NodeId {
        let v = self.value(a).clone().reshaped(shape);
        self.push(v, Op::Reshape(a))
    }

    /// Repeats a `[1, ...]` tensor `n` times along the batch axis.
    pub fn broadcast_batch(&mut self, a: NodeId, n: usize) -> NodeId {
        let t = self.value(a);
        assert_eq!(t.shape()[0], 1, "broadcast_batch expects a leading axis of 1");
        let mut shape = t.shape().to_vec();
        shape[0] = n;
        let mut data = Vec::with_capacity(t.numel() * n);
        for _ in 0..n {
            data.extend_from_slice(t.data());
        }
        self.push(Tensor::new(shape, data), Op::BroadcastBatch(a))
    }

    /// 2-D convolution: `x` is `[n, cin, h, w]`, `w` is `[cout, cin, k, k]`,
    /// `b` is `[cout]`.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>, stride: usize, pad: usize) -> NodeId {
        let (n, cin, h, wd) = self.value(x).dims4();
        let (cout, wcin, k, k2) = self.value(w).dims4();
        assert_eq!(cin, wcin, "conv2d channel mismatch");
        assert_eq!(k, k2, "conv2d expects square kernels");
        let geom = ConvGeom { cin, h, w: wd, cout, k, stride, pad };
        let (ho, wo) = geom.out_hw();
        let out =
            conv::conv2d_forward(self.value(x).data(), n, &geom, self.value(w).data(), b.map(|b| self.value(b).data()));
        self.push(Tensor::new([n, cout, ho, wo], out), Op::Conv2d { x, w, b, geom })
    }

    /// `x·wᵀ + b` with `x: [n, in]`, `w: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> NodeId {
        let xs = self.value(x).shape();
        let ws = self.value(w).shape();
        assert_eq!(xs.len(), 2);
        assert_eq!(xs[1], ws[1], "linear input width mismatch");
        let (n, din, dout) = (xs[0], xs[1], ws[0]);
        let mut out = vec![0.0f32; n * dout];
        if let Some(b) = b {
            let bv = self.value(b).data();
            for row in out.chunks_mut(dout) {
                row.copy_from_slice(bv);
            }
        }
        conv::gemm(
            n,
            din,
            dout,
            self.value(x).data(),
            (din, 1),
            self.value(w).data(),
            (1, din),
            if b.is_some() { 1.0 } else { 0.0 },
            &mut out,
            (dout, 1),
        );
        self.push(Tensor::new([n, dout], out), Op::Linear { x, w, b })
    }

    pub fn upsample2x(&mut self, a: NodeId) -> NodeId {
        let (n, c, h, w) = self.value(a).dims4();
        let src = self.value(a).data();
        let mut out = vec![0.0f32; n * c * 4 * h * w];
        for p in 0..n * c {
            let s = &src[p * h * w..(p + 1) * h * w];
            let d = &mut out[p * 4 * h * w..(p + 1) * 4 * h * w];
            for y in 0..2 * h {
                for x in 0..2 * w {
                    d[y * 2 * w + x] = s[(y / 2) * w + x / 2];
                }
            }
        }
        self.push(Tensor::new([n, c, 2 * h, 2 * w], out), Op::Upsample2x(a))
    }

    /// Concatenation along the channel axis of NCHW tensors.
    pub fn concat(&mut self, items: &[NodeId]) -> NodeId {
        assert!(!items.is_empty());
        let (n, _, h, w) = self.value(items[0]).dims4();
        let ctot: usize = items
            .iter()
            .map(|&i| {
                let (ni, ci, hi, wi) = self.value(i).dims4();
                assert_eq!((ni, hi, wi), (n, h, w), "concat shape mismatch");
                ci
            })
            .sum();
        let mut out = Vec::with_capacity(n * ctot * h * w);
        for s in 0..n {
            for &i in items {
                let (_, c, _, _) = self.value(i).dims4();
                let len = c * h * w;
                out.extend_from_slice(&self.value(i).data()[s * len..(s + 1) * len]);
            }
        }
        self.push(Tensor::new([n, ctot, h, w], out), Op::Concat(items.to_vec()))
    }

    /// Per-sample, per-channel modulation `x·(1 + scale) + shift`, with
    /// `scale` and `shift` shaped `[n, c]`.
    pub fn channel_affine(&mut self, x: NodeId, scale: NodeId, shift: NodeId) -> NodeId {
        let (n, c, h, w) = self.value(x).dims4();
        assert_eq!(self.value(scale).shape(), &[n, c]);
        assert_eq!(self.value(shift).shape(), &[n, c]);
        let xs = self.value(x).data();
        let sc = self.value(scale).data();
        let sh = self.value(shift).data();
        let hw = h * w;
        let mut out = vec![0.0f32; xs.len()];
        for p in 0..n * c {
            let m = 1.0 + sc[p];
            let b = sh[p];
            for (o, &v) in out[p * hw..(p + 1) * hw].iter_mut().zip(&xs[p * hw..(p + 1) * hw]) {
                *o = v * m + b;
            }
        }
        self.push(Tensor::new([n, c, h, w], out), Op::ChannelAffine { x, scale, shift })
    }

    /// Bilinear backward warp of `image` (`[n, c, h, w]`) by `flow`
    /// (`[n, 2, h, w]`, channel 0 = dx, channel 1 = dy).
    pub fn warp(&mut self, image: NodeId, flow: NodeId) -> NodeId {
        let (n, c, h, w) = self.value(image).dims4();
        assert_eq!(self.value(flow).shape(), &[n, 2, h, w], "warp flow shape mismatch");
        let mut out = vec![0.0f32; n * c * h * w];
        for s in 0..n {
            warp_kernel::warp_planes(
                &self.value(image).data()[s * c * h * w..(s + 1) * c * h * w],
                &self.value(flow).data()[s * 2 * h * w..(s + 1) * 2 * h * w],
                c,
                h,
                w,
                &mut out[s * c * h * w..(s + 1) * c * h * w],
            );
        }
        self.push(Tensor::new([n, c, h, w], out), Op::Warp { image, flow })
    }

    /// Batch-mean contextual loss between two `[n, c, h, w]` feature maps.
    /// The target is treated as fixed: it receives no gradient.
    pub fn contextual(&mut self, pred: NodeId, target: NodeId, h: f32, eps: f32) -> NodeId {
        let (n, c, hh, ww) = self.value(pred).dims4();
        assert_eq!(self.value(target).dims4().1, c, "contextual channel mismatch");
        let (_, _, th, tw) = self.value(target).dims4();
        let mut total = 0.0f32;
        for s in 0..n {
            let p = &self.value(pred).data()[s * c * hh * ww..(s + 1) * c * hh * ww];
            let t = &self.value(target).data()[s * c * th * tw..(s + 1) * c * th * tw];
            total += cx_kernel::contextual_planar(p, t, c, hh * ww, th * tw, h, eps, None);
        }
        self.push(Tensor::scalar(total / n as f32), Op::Contextual { pred, target, h, eps })
    }

    /// Reverse-mode sweep from the scalar `root`; gradients are retained for
    /// leaves only.
    pub fn backward(&self, root: NodeId) -> Gradients {
        assert_eq!(self.value(root).numel(), 1, "backward root must be a scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[root.0].needs_grad {
            return Gradients { grads };
        }
        grads[root.0] = Some(Tensor::full(self.value(root).shape().to_vec(), 1.0));
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            self.backward_node(idx, &gout, &mut grads);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn backward_node(&self, idx: usize, gout: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gout.clone());
                self.accumulate(grads, *b, gout.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, gout.clone());
                if self.needs_grad(*b) {
                    self.accumulate(grads, *b, gout.map(|g| -g));
                }
            }
            Op::Mul(a, b) => {
                if self.needs_grad(*a) {
                    self.accumulate(grads, *a, gout.zip_map(self.value(*b), |g, y| g * y));
                }
                if self.needs_grad(*b) {
                    self.accumulate(grads, *b, gout.zip_map(self.value(*a), |g, x| g * x));
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, gout.map(|g| g * s)),
            Op::AddScalar(a) => self.accumulate(grads, *a, gout.clone()),
            Op::LeakyRelu(a, slope) => {
                let g = gout.zip_map(self.value(*a), |g, x| if x > 0.0 { g } else { g * slope });
                self.accumulate(grads, *a, g)
            }
            Op::Tanh(a) => self.accumulate(grads, *a, gout.zip_map(out, |g, y| g * (1.0 - y * y))),
            Op::Sigmoid(a) => self.accumulate(grads, *a, gout.zip_map(out, |g, y| g * y * (1.0 - y))),
            Op::Softplus(a) => self.accumulate(grads, *a, gout.zip_map(self.value(*a), |g, x| g * sigmoid(x))),
            Op::Abs(a) => {
                let g = gout.zip_map(self.value(*a), |g, x| {
                    if x > 0.0 {
                        g
                    } else if x < 0.0 {
                        -g
                    } else {
                        0.0
                    }
                });
                self.accumulate(grads, *a, g)
            }
            Op::Square(a) => self.accumulate(grads, *a, gout.zip_map(self.value(*a), |g, x| 2.0 * g * x)),
            Op::Sqrt(a) => {
                let g = gout.zip_map(out, |g, y| if y > 0.0 { 0.5 * g / y } else { 0.0 });
                self.accumulate(grads, *a, g)
            }
            Op::Log(a) => self.accumulate(grads, *a, gout.zip_map(self.value(*a), |g, x| g / x)),
            Op::Clamp(a, lo, hi) => {
                let g = gout.zip_map(self.value(*a), |g, x| if x >= *lo && x <= *hi { g } else { 0.0 });
                self.accumulate(grads, *a, g)
            }
            Op::Sum(a) => {
                let g = gout.item();
                self.accumulate(grads, *a, Tensor::full(self.value(*a).shape().to_vec(), g))
            }
            Op::Mean(a) => {
                let t = self.value(*a);
                let g = gout.item() / t.numel() as f32;
                self.accumulate(grads, *a, Tensor::full(t.shape().to_vec(), g))
            }
            Op::Reshape(a) => {
                let g = gout.clone().reshaped(self.value(*a).shape().to_vec());
                self.accumulate(grads, *a, g)
            }
            Op::BroadcastBatch(a) => {
                let len = self.value(*a).numel();
                let mut acc = vec![0.0f32; len];
                for chunk in gout.data().chunks(len) {
                    for (s, v) in acc.iter_mut().zip(chunk) {
                        *s += v;
                    }
                }
                self.accumulate(grads, *a, Tensor::new(self.value(*a).shape().to_vec(), acc))
            }
            Op::Conv2d { x, w, b, geom } => {
                let n = self.value(*x).shape()[0];
                let (dx, dw, db) = conv::conv2d_backward(
                    self.value(*x).data(),
                    n,
                    geom,
                    self.value(*w).data(),
                    gout.data(),
                    self.needs_grad(*x),
                );
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, Tensor::new(self.value(*x).shape().to_vec(), dx));
                }
                self.accumulate(grads, *w, Tensor::new(self.value(*w).shape().to_vec(), dw));
                if let Some(b) = b {
                    self.accumulate(grads, *b, Tensor::new([geom.cout], db));
                }
            }
            Op::Linear { x, w, b } => {
                let xs = self.value(*x);
                let (n, din) = (xs.shape()[0], xs.shape()[1]);
                let dout = self.value(*w).shape()[0];
                if self.needs_grad(*x) {
                    let mut dx = vec![0.0f32; n * din];
                    conv::gemm(
                        n,
                        dout,
                        din,
                        gout.data(),
                        (dout, 1),
                        self.value(*w).data(),
                        (din, 1),
                        0.0,
                        &mut dx,
                        (din, 1),
                    );
                    self.accumulate(grads, *x, Tensor::new([n, din], dx));
                }
                if self.needs_grad(*w) {
                    let mut dw = vec![0.0f32; dout * din];
                    conv::gemm(dout, n, din, gout.data(), (1, dout), xs.data(), (din, 1), 0.0, &mut dw, (din, 1));
                    self.accumulate(grads, *w, Tensor::new([dout, din], dw));
                }
                if let Some(b) = b {
                    let mut db = vec![0.0f32; dout];
                    for row in gout.data().chunks(dout) {
                        for (d, g) in db.iter_mut().zip(row) {
                            *d += g;
                        }
                    }
                    self.accumulate(grads, *b, Tensor::new([dout], db));
                }
            }
            Op::Upsample2x(a) => {
                let (n, c, h, w) = self.value(*a).dims4();
                let mut dx = vec![0.0f32; n * c * h * w];
                let g = gout.data();
                for p in 0..n * c {
                    let gs = &g[p * 4 * h * w..(p + 1) * 4 * h * w];
                    let d = &mut dx[p * h * w..(p + 1) * h * w];
                    for y in 0..2 * h {
                        for x in 0..2 * w {
                            d[(y / 2) * w + x / 2] += gs[y * 2 * w + x];
                        }
                    }
                }
                self.accumulate(grads, *a, Tensor::new([n, c, h, w], dx))
            }
            Op::Concat(items) => {
                let (n, ctot, h, w) = out.dims4();
                let mut offset = 0;
                for &i in items {
                    let c = self.value(i).dims4().1;
                    if self.needs_grad(i) {
                        let mut d = Vec::with_capacity(n * c * h * w);
                        for s in 0..n {
                            let start = (s * ctot + offset) * h * w;
                            d.extend_from_slice(&gout.data()[start..start + c * h * w]);
                        }
                        self.accumulate(grads, i, Tensor::new([n, c, h, w], d));
                    }
                    offset += c;
                }
            }
            Op::ChannelAffine { x, scale, shift } => {
                let (n, c, h, w) = self.value(*x).dims4();
                let hw = h * w;
                let xs = self.value(*x).data();
                let sc = self.value(*scale).data();
                let g = gout.data();
                if self.needs_grad(*x) {
                    let mut dx = vec![0.0f32; xs.len()];
                    for p in 0..n * c {
                        let m = 1.0 + sc[p];
                        for (d, gv) in dx[p * hw..(p + 1) * hw].iter_mut().zip(&g[p * hw..(p + 1) * hw]) {
                            *d = gv * m;
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new([n, c, h, w], dx));
                }
                let mut ds = vec![0.0f32; n * c];
                let mut db = vec![0.0f32; n * c];
                for p in 0..n * c {
                    let gp = &g[p * hw..(p + 1) * hw];
                    let xp = &xs[p * hw..(p + 1) * hw];
                    ds[p] = gp.iter().zip(xp).map(|(a, b)| a * b).sum();
                    db[p] = gp.iter().sum();
                }
                self.accumulate(grads, *scale, Tensor::new([n, c], ds));
                self.accumulate(grads, *shift, Tensor::new([n, c], db));
            }
            Op::Warp { image, flow } => {
                let (n, c, h, w) = self.value(*image).dims4();
                let need_img = self.needs_grad(*image);
                let need_flow = self.needs_grad(*flow);
                let mut dimg = need_img.then(|| vec![0.0f32; n * c * h * w]);
                let mut dflow = need_flow.then(|| vec![0.0f32; n * 2 * h * w]);
                for s in 0..n {
                    let plane = c * h * w;
                    warp_kernel::warp_planes_backward(
                        self.value(*image).data()[s * plane..(s + 1) * plane].as_ref(),
                        &self.value(*flow).data()[s * 2 * h * w..(s + 1) * 2 * h * w],
                        c,
                        h,
                        w,
                        &gout.data()[s * plane..(s + 1) * plane],
                        dimg.as_mut().map(|d| &mut d[s * plane..(s + 1) * plane]),
                        dflow.as_mut().map(|d| &mut d[s * 2 * h * w..(s + 1) * 2 * h * w]),
                    );
                }
                if let Some(d) = dimg {
                    self.accumulate(grads, *image, Tensor::new([n, c, h, w], d));
                }
                if let Some(d) = dflow {
                    self.accumulate(grads, *flow, Tensor::new([n, 2, h, w], d));
                }
            }
            Op::Contextual { pred, target, h, eps } => {
                if !self.needs_grad(*pred) {
                    return;
                }
                let (n, c, hh, ww) = self.value(*pred).dims4();
                let (_, _, th, tw) = self.value(*target).dims4();
                let scale = gout.item() / n as f32;
                let mut dp = vec![0.0f32; n * c * hh * ww];
                for s in 0..n {
                    let plane = c * hh * ww;
                    let p = &self.value(*pred).data()[s * plane..(s + 1) * plane];
                    let t = &self.value(*target).data()[s * c * th * tw..(s + 1) * c * th * tw];
                    cx_kernel::contextual_planar(
                        p,
                        t,
                        c,
                        hh * ww,
                        th * tw,
                        *h,
                        *eps,
                        Some((&mut dp[s * plane..(s + 1) * plane], scale)),
                    );
                }
                self.accumulate(grads, *pred, Tensor::new([n, c, hh, ww], dp));
            }
        }
    }
}

pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + eˣ)`.
pub fn softplus(x: f32) -> f32 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
