//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation as it is evaluated, so node ids are
//! already in topological order. [`Graph::backward`] walks the tape in exact
//! reverse order and scatters parameter gradients into a [`ParamVector`]
//! with the same layout as the parameters the graph was built over.
//!
//! The op set is deliberately small: matmul, bias add, ReLU, same-padded
//! stride-1 2-D convolution (NHWC), softmax over the trailing axis, and a
//! fused masked softmax cross-entropy (mean over contributing rows).

use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Input,
    Param { slot: usize },
    MatMul { a: NodeId, b: NodeId },
    AddBias { x: NodeId, bias: NodeId },
    Relu { x: NodeId },
    Conv2d { x: NodeId, kernel: NodeId },
    Softmax { x: NodeId },
    CrossEntropy(Box<CrossEntropyCache>),
}

#[derive(Debug)]
struct CrossEntropyCache {
    logits: NodeId,
    labels: Vec<usize>,
    mask: Vec<bool>,
    probs: Vec<f64>,
    count: usize,
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param { .. } => "param",
            Op::MatMul { .. } => "matmul",
            Op::AddBias { .. } => "add_bias",
            Op::Relu { .. } => "relu",
            Op::Conv2d { .. } => "conv2d",
            Op::Softmax { .. } => "softmax",
            Op::CrossEntropy(_) => "softmax_cross_entropy",
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Evaluation tape over a fixed parameter vector.
pub struct Graph<'p> {
    params: &'p ParamVector,
    nodes: Vec<Node>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamVector) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn op_name(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.name()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::UnknownNode(id.0))
        }
    }

    fn mismatch(&self, op: &str, detail: String) -> Error {
        Error::ShapeMismatch {
            node: format!("node {} ({op})", self.nodes.len()),
            detail,
        }
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Input, value)
    }

    /// Leaf node holding the parameter slot `slot`.
    pub fn param(&mut self, slot: usize) -> Result<NodeId> {
        let layout = self.params.layout();
        let spec = layout
            .slot(slot)
            .ok_or_else(|| Error::UnknownParam(format!("slot #{slot}")))?;
        let value = Tensor::new(spec.shape.clone(), self.params.slot_values(slot).to_vec())?;
        Ok(self.push(Op::Param { slot }, value))
    }

    pub fn param_named(&mut self, name: &str) -> Result<NodeId> {
        let slot = self
            .params
            .layout()
            .find(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        self.param(slot)
    }

    /// `[n, k] x [k, m] -> [n, m]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let (sa, sb) = (va.shape(), vb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.mismatch("matmul", format!("cannot multiply {sa:?} by {sb:?}")));
        }
        let (n, k, m) = (sa[0], sa[1], sb[1]);
        let (da, db) = (va.data(), vb.data());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &da[i * k..(i + 1) * k];
            let dst = &mut out[i * m..(i + 1) * m];
            for (p, &x) in row.iter().enumerate() {
                let brow = &db[p * m..(p + 1) * m];
                for (o, &w) in dst.iter_mut().zip(brow) {
                    *o += x * w;
                }
            }
        }
        let value = Tensor::new(vec![n, m], out)?;
        Ok(self.push(Op::MatMul { a, b }, value))
    }

    /// Adds a `[m]` bias along the trailing axis of `x`.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        self.check(x)?;
        self.check(bias)?;
        let (vx, vb) = (self.value(x), self.value(bias));
        if vb.shape().len() != 1 || vx.last_dim() != vb.shape()[0] || vx.shape().is_empty() {
            return Err(self.mismatch(
                "add_bias",
                format!("bias {:?} does not match trailing axis of {:?}", vb.shape(), vx.shape()),
            ));
        }
        let m = vb.len();
        let mut out = vx.data().to_vec();
        for row in out.chunks_mut(m) {
            for (o, b) in row.iter_mut().zip(vb.data()) {
                *o += b;
            }
        }
        let value = Tensor::new(vx.shape().to_vec(), out)?;
        Ok(self.push(Op::AddBias { x, bias }, value))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let vx = self.value(x);
        let out = vx.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let value = Tensor::new(vx.shape().to_vec(), out)?;
        Ok(self.push(Op::Relu { x }, value))
    }

    /// Stride-1, zero-padded ("same") convolution.
    ///
    /// `x` is `[B, H, W, Cin]`, `kernel` is `[KH, KW, Cin, Cout]` with odd
    /// kernel sizes; the output is `[B, H, W, Cout]`.
    pub fn conv2d(&mut self, x: NodeId, kernel: NodeId) -> Result<NodeId> {
        self.check(x)?;
        self.check(kernel)?;
        let (vx, vk) = (self.value(x), self.value(kernel));
        let (sx, sk) = (vx.shape(), vk.shape());
        if sx.len() != 4 || sk.len() != 4 || sx[3] != sk[2] {
            return Err(self.mismatch(
                "conv2d",
                format!("input {sx:?} incompatible with kernel {sk:?}"),
            ));
        }
        if sk[0] % 2 == 0 || sk[1] % 2 == 0 {
            return Err(self.mismatch("conv2d", format!("kernel {sk:?} must have odd spatial size")));
        }
        let geom = ConvGeom::new(sx, sk);
        let mut out = vec![0.0; geom.batch * geom.h * geom.w * geom.cout];
        geom.forward(vx.data(), vk.data(), &mut out);
        let value = Tensor::new(vec![geom.batch, geom.h, geom.w, geom.cout], out)?;
        Ok(self.push(Op::Conv2d { x, kernel }, value))
    }

    /// Softmax over the trailing axis.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        let vx = self.value(x);
        let out = softmax_rows(vx.data(), vx.last_dim());
        let value = Tensor::new(vx.shape().to_vec(), out)?;
        Ok(self.push(Op::Softmax { x }, value))
    }

    /// Masked softmax cross-entropy, averaged over rows whose mask is set.
    ///
    /// Rows are the logits viewed as `[rows, C]`. When no row contributes
    /// the loss is exactly zero and so is its gradient.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        labels: &[usize],
        mask: &[bool],
    ) -> Result<NodeId> {
        self.check(logits)?;
        let vl = self.value(logits);
        let classes = vl.last_dim();
        let rows = vl.rows();
        if labels.len() != rows || mask.len() != rows {
            return Err(self.mismatch(
                "softmax_cross_entropy",
                format!(
                    "{rows} logit rows but {} labels and {} mask entries",
                    labels.len(),
                    mask.len()
                ),
            ));
        }
        let (loss, probs, count) = cross_entropy_parts(vl.data(), classes, labels, mask)?;
        let cache = CrossEntropyCache {
            logits,
            labels: labels.to_vec(),
            mask: mask.to_vec(),
            probs,
            count,
        };
        Ok(self.push(Op::CrossEntropy(Box::new(cache)), Tensor::scalar(loss)))
    }

    /// Gradient of the scalar node `loss` with respect to every parameter.
    ///
    /// Parameters that do not influence `loss` get exactly `0.0`.
    pub fn backward(&self, loss: NodeId) -> Result<ParamVector> {
        self.check(loss)?;
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss {
                node: loss.0,
                shape: lv.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = ParamVector::zeros(self.params.layout().clone());

        for id in (0..=loss.0).rev() {
            let Some(upstream) = grads[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            match &node.op {
                Op::Input => {}
                Op::Param { slot } => {
                    for (dst, g) in out.slot_values_mut(*slot).iter_mut().zip(&upstream) {
                        *dst += g;
                    }
                }
                Op::MatMul { a, b } => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (n, k, m) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                    let (da, db) = (va.data(), vb.data());
                    let mut ga = vec![0.0; n * k];
                    let mut gb = vec![0.0; k * m];
                    for i in 0..n {
                        let gout = &upstream[i * m..(i + 1) * m];
                        for p in 0..k {
                            let brow = &db[p * m..(p + 1) * m];
                            ga[i * k + p] = gout.iter().zip(brow).map(|(g, w)| g * w).sum();
                            let x = da[i * k + p];
                            for (acc, g) in gb[p * m..(p + 1) * m].iter_mut().zip(gout) {
                                *acc += x * g;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddBias { x, bias } => {
                    let m = self.value(*bias).len();
                    let mut gb = vec![0.0; m];
                    for row in upstream.chunks(m) {
                        for (acc, g) in gb.iter_mut().zip(row) {
                            *acc += g;
                        }
                    }
                    accumulate(&mut grads, *bias, gb);
                    accumulate(&mut grads, *x, upstream);
                }
                Op::Relu { x } => {
                    let gx = self
                        .value(*x)
                        .data()
                        .iter()
                        .zip(&upstream)
                        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *x, gx);
                }
                Op::Conv2d { x, kernel } => {
                    let (vx, vk) = (self.value(*x), self.value(*kernel));
                    let geom = ConvGeom::new(vx.shape(), vk.shape());
                    let mut gx = vec![0.0; vx.len()];
                    let mut gk = vec![0.0; vk.len()];
                    geom.backward(vx.data(), vk.data(), &upstream, &mut gx, &mut gk);
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *kernel, gk);
                }
                Op::Softmax { x } => {
                    let y = node.value.data();
                    let c = node.value.last_dim();
                    let mut gx = vec![0.0; y.len()];
                    for ((yr, gr), dst) in y.chunks(c).zip(upstream.chunks(c)).zip(gx.chunks_mut(c)) {
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((d, &yi), &gi) in dst.iter_mut().zip(yr).zip(gr) {
                            *d = yi * (gi - dot);
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::CrossEntropy(cache) => {
                    let c = self.value(cache.logits).last_dim();
                    let mut gx = vec![0.0; cache.probs.len()];
                    if cache.count > 0 {
                        let scale = upstream[0] / cache.count as f64;
                        for ((dst, p), (&label, &on)) in gx
                            .chunks_mut(c)
                            .zip(cache.probs.chunks(c))
                            .zip(cache.labels.iter().zip(&cache.mask))
                        {
                            if !on {
                                continue;
                            }
                            for (j, (d, &pj)) in dst.iter_mut().zip(p).enumerate() {
                                let target = if j == label { 1.0 } else { 0.0 };
                                *d = (pj - target) * scale;
                            }
                        }
                    }
                    accumulate(&mut grads, cache.logits, gx);
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: NodeId, g: Vec<f64>) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (a, b) in existing.iter_mut().zip(&g) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

struct ConvGeom {
    batch: usize,
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
    kh: usize,
    kw: usize,
}

impl ConvGeom {
    fn new(sx: &[usize], sk: &[usize]) -> Self {
        Self {
            batch: sx[0],
            h: sx[1],
            w: sx[2],
            cin: sx[3],
            cout: sk[3],
            kh: sk[0],
            kw: sk[1],
        }
    }

    /// Calls `f(out_pixel, in_pixel, tap)` for every valid kernel tap, where
    /// the indices are flat pixel offsets (without the channel axis).
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (ph, pw) = (self.kh / 2, self.kw / 2);
        for b in 0..self.batch {
            for i in 0..self.h {
                for j in 0..self.w {
                    let out_px = (b * self.h + i) * self.w + j;
                    for di in 0..self.kh {
                        let ii = i + di;
                        if ii < ph || ii - ph >= self.h {
                            continue;
                        }
                        for dj in 0..self.kw {
                            let jj = j + dj;
                            if jj < pw || jj - pw >= self.w {
                                continue;
                            }
                            let in_px = (b * self.h + ii - ph) * self.w + jj - pw;
                            f(out_px, in_px, di * self.kw + dj);
                        }
                    }
                }
            }
        }
    }

    fn forward(&self, x: &[f64], k: &[f64], out: &mut [f64]) {
        let (cin, cout) = (self.cin, self.cout);
        self.for_each_tap(|o, p, t| {
            let xs = &x[p * cin..(p + 1) * cin];
            let dst = &mut out[o * cout..(o + 1) * cout];
            for (c, &xv) in xs.iter().enumerate() {
                let ks = &k[(t * cin + c) * cout..(t * cin + c + 1) * cout];
                for (d, &kv) in dst.iter_mut().zip(ks) {
                    *d += xv * kv;
                }
            }
        });
    }

    fn backward(&self, x: &[f64], k: &[f64], gout: &[f64], gx: &mut [f64], gk: &mut [f64]) {
        let (cin, cout) = (self.cin, self.cout);
        self.for_each_tap(|o, p, t| {
            let go = &gout[o * cout..(o + 1) * cout];
            for c in 0..cin {
                let kidx = (t * cin + c) * cout;
                let ks = &k[kidx..kidx + cout];
                gx[p * cin + c] += go.iter().zip(ks).map(|(g, w)| g * w).sum::<f64>();
                let xv = x[p * cin + c];
                for (acc, g) in gk[kidx..kidx + cout].iter_mut().zip(go) {
                    *acc += xv * g;
                }
            }
        });
    }
}

/// Numerically stable softmax applied independently to each row of width `classes`.
pub fn softmax_rows(data: &[f64], classes: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(data.len());
    if classes == 0 {
        return out;
    }
    for row in data.chunks(classes) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut total = 0.0;
        for &v in row {
            let e = (v - max).exp();
            total += e;
            out.push(e);
        }
        for v in &mut out[start..] {
            *v /= total;
        }
    }
    out
}

fn cross_entropy_parts(
    logits: &[f64],
    classes: usize,
    labels: &[usize],
    mask: &[bool],
) -> Result<(f64, Vec<f64>, usize)> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            classes,
        });
    }
    let probs = softmax_rows(logits, classes);
    let mut total = 0.0;
    let mut count = 0;
    for ((row, &label), &on) in logits.chunks(classes.max(1)).zip(labels).zip(mask) {
        if !on {
            continue;
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_norm = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        total += log_norm - row[label];
        count += 1;
    }
    let loss = if count == 0 { 0.0 } else { total / count as f64 };
    Ok((loss, probs, count))
}

/// Masked mean softmax cross-entropy of `logits` (`[..., C]`) without building a graph.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize], mask: &[bool]) -> Result<f64> {
    let rows = logits.rows();
    if labels.len() != rows || mask.len() != rows {
        return Err(Error::ShapeMismatch {
            node: "softmax_cross_entropy".into(),
            detail: format!(
                "{rows} logit rows but {} labels and {} mask entries",
                labels.len(),
                mask.len()
            ),
        });
    }
    cross_entropy_parts(logits.data(), logits.last_dim(), labels, mask).map(|(loss, _, _)| loss)
}
