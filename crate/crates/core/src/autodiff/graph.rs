use super::kernels::{dot, matmul_acc, matmul_nt_acc, matmul_tn_acc, ConvGeom};
use super::{AutodiffError, Result, Tensor};

/// Epsilon inside layer normalization's square root.
pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    Bmm { a: Var, b: Var, trans_b: bool },
    Conv2d { x: Var, w: Var, bias: Option<Var>, geom: ConvGeom, cols: Vec<f64> },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, factor: f64 },
    Relu(Var),
    Sigmoid(Var),
    Abs(Var),
    Square(Var),
    LayerNorm { x: Var, rstd: Vec<f64> },
    Softmax(Var),
    Mean(Var),
    SumLast(Var),
    Concat(Vec<Var>),
    SliceLast { x: Var, start: usize },
    Reshape(Var),
    GlobalAvgPool(Var),
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
    op: Op,
}

/// A reverse-mode computation graph (a tape). Nodes are appended in
/// evaluation order, so the node list is already topologically sorted.
///
/// Gradients accumulate: calling [`backward`](Self::backward) twice without
/// [`zero_grads`](Self::zero_grads) in between adds the gradients twice.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, left: &Tensor, right: &Tensor) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        left: left.shape().to_vec(),
        right: right.shape().to_vec(),
    }
}

fn bad_shape(op: &'static str, t: &Tensor, expected: &str) -> AutodiffError {
    AutodiffError::BadShape {
        op,
        shape: t.shape().to_vec(),
        expected: expected.to_string(),
    }
}

/// `true` if `suffix` equals the trailing dims of `shape`.
fn is_suffix(shape: &[usize], suffix: &[usize]) -> bool {
    suffix.len() <= shape.len() && shape[shape.len() - suffix.len()..] == *suffix
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

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives a gradient.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad: true,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf treated as a constant; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad: false,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of the last backward pass(es), if any reached `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// `a[..., K] x b[K, N] -> [..., N]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() < 1 || bv.rank() != 2 || av.last_dim() != bv.shape()[0] {
            return Err(mismatch("matmul", av, bv));
        }
        let (k, n) = (bv.shape()[0], bv.shape()[1]);
        let m = av.len() / k;
        let mut out = vec![0.0; m * n];
        matmul_acc(av.data(), bv.data(), &mut out, m, k, n);
        let mut shape = av.shape()[..av.rank() - 1].to_vec();
        shape.push(n);
        Ok(self.push(Tensor::new(&shape, out), Op::MatMul { a, b }, &[a, b]))
    }

    /// Batched matmul: `[B, M, K] x [B, K, N]`, or `[B, M, K] x [B, N, K]^T`
    /// when `trans_b`.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 3 || bv.rank() != 3 || av.shape()[0] != bv.shape()[0] {
            return Err(mismatch("bmm", av, bv));
        }
        let (batch, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
        let (bk, n) = if trans_b {
            (bv.shape()[2], bv.shape()[1])
        } else {
            (bv.shape()[1], bv.shape()[2])
        };
        if bk != k {
            return Err(mismatch("bmm", av, bv));
        }
        let mut out = vec![0.0; batch * m * n];
        for i in 0..batch {
            let (asl, bsl) = (&av.data()[i * m * k..(i + 1) * m * k], &bv.data()[i * k * n..(i + 1) * k * n]);
            let osl = &mut out[i * m * n..(i + 1) * m * n];
            if trans_b {
                matmul_nt_acc(asl, bsl, osl, m, k, n);
            } else {
                matmul_acc(asl, bsl, osl, m, k, n);
            }
        }
        Ok(self.push(Tensor::new(&[batch, m, n], out), Op::Bmm { a, b, trans_b }, &[a, b]))
    }

    /// 2-D convolution of `x[B, C, H, W]` with `w[O, C, k, k]` and optional
    /// `bias[O]`, zero padding `pad` on every side.
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.rank() != 4 || wv.rank() != 4 || wv.shape()[1] != xv.shape()[1] || wv.shape()[2] != wv.shape()[3] {
            return Err(mismatch("conv2d", xv, wv));
        }
        let (batch, c, h, wd) = (xv.shape()[0], xv.shape()[1], xv.shape()[2], xv.shape()[3]);
        let (o, k) = (wv.shape()[0], wv.shape()[2]);
        let geom = ConvGeom::new(c, h, wd, k, stride, pad).ok_or_else(|| mismatch("conv2d", xv, wv))?;
        if let Some(bv) = bias {
            let bt = self.value(bv);
            if bt.shape() != [o] {
                return Err(mismatch("conv2d bias", wv, bt));
            }
        }
        // One matmul over the whole batch: cols is `q x (batch p)`.
        let (q, p) = (geom.patch_len(), geom.positions());
        let n = batch * p;
        let in_len = c * h * wd;
        let mut cols = vec![0.0; q * n];
        for i in 0..batch {
            geom.im2col(&xv.data()[i * in_len..(i + 1) * in_len], &mut cols, n, i * p);
        }
        let mut flat = vec![0.0; o * n];
        matmul_acc(wv.data(), &cols, &mut flat, o, q, n);
        let bias_values = bias.map(|bv| self.value(bv).data());
        let mut out = vec![0.0; batch * o * p];
        for oc in 0..o {
            let b = bias_values.map_or(0.0, |bt| bt[oc]);
            for i in 0..batch {
                let src = &flat[oc * n + i * p..oc * n + (i + 1) * p];
                let dst = &mut out[(i * o + oc) * p..(i * o + oc + 1) * p];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d = s + b);
            }
        }
        let shape = [batch, o, geom.out_h, geom.out_w];
        let mut parents = vec![x, w];
        parents.extend(bias);
        Ok(self.push(
            Tensor::new(&shape, out),
            Op::Conv2d { x, w, bias, geom, cols },
            &parents,
        ))
    }

    /// Elementwise `a + b`, where `b`'s shape may be a suffix of `a`'s and is
    /// then broadcast over the leading axes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if !is_suffix(av.shape(), bv.shape()) {
            return Err(mismatch("add", av, bv));
        }
        let bl = bv.len();
        let out: Vec<f64> = av
            .data()
            .chunks(bl)
            .flat_map(|c| c.iter().zip(bv.data()).map(|(x, y)| x + y))
            .collect();
        let shape = av.shape().to_vec();
        Ok(self.push(Tensor::new(&shape, out), Op::Add { a, b }, &[a, b]))
    }

    /// Elementwise `a * b` with the same broadcasting rule as [`add`](Self::add).
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if !is_suffix(av.shape(), bv.shape()) {
            return Err(mismatch("mul", av, bv));
        }
        let bl = bv.len();
        let out: Vec<f64> = av
            .data()
            .chunks(bl)
            .flat_map(|c| c.iter().zip(bv.data()).map(|(x, y)| x * y))
            .collect();
        let shape = av.shape().to_vec();
        Ok(self.push(Tensor::new(&shape, out), Op::Mul { a, b }, &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let neg = self.scale(b, -1.0);
        self.add(a, neg)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let v = self.value(x);
        let out = v.data().iter().map(|e| e * factor).collect();
        let shape = v.shape().to_vec();
        self.push(Tensor::new(&shape, out), Op::Scale { x, factor }, &[x])
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = self.value(x);
        let out = v.data().iter().map(|&e| f(e)).collect();
        let shape = v.shape().to_vec();
        self.push(Tensor::new(&shape, out), op, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, f64::abs, Op::Abs(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    /// Normalizes each row over the last axis to zero mean and unit variance.
    pub fn layer_norm(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let d = v.last_dim();
        let rows = v.len() / d;
        let mut out = vec![0.0; v.len()];
        let mut rstd = Vec::with_capacity(rows);
        for (r, row) in v.data().chunks(d).enumerate() {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / d as f64;
            let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd.push(s);
            for (o, e) in out[r * d..(r + 1) * d].iter_mut().zip(row) {
                *o = (e - mean) * s;
            }
        }
        let shape = v.shape().to_vec();
        self.push(Tensor::new(&shape, out), Op::LayerNorm { x, rstd }, &[x])
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let d = v.last_dim();
        let mut out = vec![0.0; v.len()];
        for (row, o) in v.data().chunks(d).zip(out.chunks_mut(d)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (oe, e) in o.iter_mut().zip(row) {
                *oe = (e - max).exp();
                total += *oe;
            }
            o.iter_mut().for_each(|e| *e /= total);
        }
        let shape = v.shape().to_vec();
        self.push(Tensor::new(&shape, out), Op::Softmax(x), &[x])
    }

    /// Mean of all elements, as a one-element tensor.
    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let m = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::scalar(m), Op::Mean(x), &[x])
    }

    /// Sums away the last axis.
    pub fn sum_last(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let d = v.last_dim();
        let out: Vec<f64> = v.data().chunks(d).map(|r| r.iter().sum()).collect();
        let mut shape = v.shape()[..v.rank().saturating_sub(1)].to_vec();
        if shape.is_empty() {
            shape.push(1);
        }
        self.push(Tensor::new(&shape, out), Op::SumLast(x), &[x])
    }

    /// Concatenates along the last axis; leading dims must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(AutodiffError::Empty("concat"))?;
        let lead = self.shape(*first)[..self.shape(*first).len() - 1].to_vec();
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != lead.len() + 1 || s[..lead.len()] != lead[..] {
                return Err(mismatch("concat", self.value(*first), self.value(p)));
            }
            total += s[s.len() - 1];
        }
        let rows: usize = lead.iter().product();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                let v = self.value(p);
                let d = v.last_dim();
                out.extend_from_slice(&v.data()[r * d..(r + 1) * d]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        Ok(self.push(Tensor::new(&shape, out), Op::Concat(parts.to_vec()), parts))
    }

    /// Columns `start..start + len` of the last axis.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(x);
        let d = v.last_dim();
        if start + len > d || len == 0 {
            return Err(bad_shape("slice_last", v, &format!("last axis >= {}", start + len)));
        }
        let out: Vec<f64> = v.data().chunks(d).flat_map(|r| r[start..start + len].iter().copied()).collect();
        let mut shape = v.shape().to_vec();
        *shape.last_mut().expect("rank >= 1") = len;
        Ok(self.push(Tensor::new(&shape, out), Op::SliceLast { x, start }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x);
        if shape.iter().product::<usize>() != v.len() {
            return Err(bad_shape("reshape", v, &format!("{} elements", shape.iter().product::<usize>())));
        }
        let out = v.clone().reshaped(shape);
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    /// Averages `[B, C, H, W]` over the spatial axes to `[B, C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.rank() != 4 {
            return Err(bad_shape("global_avg_pool", v, "[B, C, H, W]"));
        }
        let (b, c, hw) = (v.shape()[0], v.shape()[1], v.shape()[2] * v.shape()[3]);
        let out: Vec<f64> = v.data().chunks(hw).map(|r| r.iter().sum::<f64>() / hw as f64).collect();
        Ok(self.push(Tensor::new(&[b, c], out), Op::GlobalAvgPool(x), &[x]))
    }

    /// Back-propagates from a one-element `root`, adding `d root / d node` to
    /// every node on a path from a gradient-requiring leaf.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let rv = self.value(root);
        if rv.len() != 1 {
            return Err(AutodiffError::NonScalarRoot(rv.shape().to_vec()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..=root.0).map(|_| None).collect();
        adj[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut adj);
            let node = &mut self.nodes[i];
            match &mut node.grad {
                Some(t) => t.data_mut().iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => node.grad = Some(Tensor::new(node.value.shape(), g)),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| &nodes[v.0].value;
        let needs = |v: Var| nodes[v.0].requires_grad;
        // A parent that appears twice (e.g. `mul(x, x)`) is borrowed once per
        // contribution, so both accumulate into the same slot.
        macro_rules! acc {
            ($v:expr) => {
                slot(adj, nodes, $v)
            };
        }
        let out = &nodes[i].value;
        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (av, bv) = (val(*a), val(*b));
                let (k, n) = (bv.shape()[0], bv.shape()[1]);
                let m = av.len() / k;
                if needs(*a) {
                    matmul_nt_acc(g, bv.data(), acc!(*a), m, n, k);
                }
                if needs(*b) {
                    matmul_tn_acc(av.data(), g, acc!(*b), k, m, n);
                }
            }
            Op::Bmm { a, b, trans_b } => {
                let (av, bv) = (val(*a), val(*b));
                let (batch, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
                let n = out.shape()[2];
                for t in 0..batch {
                    let gs = &g[t * m * n..(t + 1) * m * n];
                    let asl = &av.data()[t * m * k..(t + 1) * m * k];
                    let bsl = &bv.data()[t * k * n..(t + 1) * k * n];
                    if needs(*a) {
                        let da = &mut acc!(*a)[t * m * k..(t + 1) * m * k];
                        if *trans_b {
                            // b is [n, k]
                            matmul_acc(gs, bsl, da, m, n, k);
                        } else {
                            matmul_nt_acc(gs, bsl, da, m, n, k);
                        }
                    }
                    if needs(*b) {
                        let db = &mut acc!(*b)[t * k * n..(t + 1) * k * n];
                        if *trans_b {
                            // d b[n, k] = g^T a
                            matmul_tn_acc(gs, asl, db, n, m, k);
                        } else {
                            matmul_tn_acc(asl, gs, db, k, m, n);
                        }
                    }
                }
            }
            Op::Conv2d { x, w, bias, geom, cols } => {
                let (q, p) = (geom.patch_len(), geom.positions());
                let wv = val(*w);
                let o = wv.shape()[0];
                let batch = out.shape()[0];
                let n = batch * p;
                let in_len = geom.channels * geom.height * geom.width;
                // gradient regrouped as `o x (batch p)`, matching cols
                let mut gflat = vec![0.0; o * n];
                for i in 0..batch {
                    for oc in 0..o {
                        gflat[oc * n + i * p..oc * n + (i + 1) * p]
                            .copy_from_slice(&g[(i * o + oc) * p..(i * o + oc + 1) * p]);
                    }
                }
                if needs(*w) {
                    matmul_nt_acc(&gflat, cols, acc!(*w), o, n, q);
                }
                if let Some(bv) = bias {
                    if needs(*bv) {
                        for (d, row) in acc!(*bv).iter_mut().zip(gflat.chunks(n)) {
                            *d += row.iter().sum::<f64>();
                        }
                    }
                }
                if needs(*x) {
                    let mut dcols = vec![0.0; q * n];
                    matmul_tn_acc(wv.data(), &gflat, &mut dcols, q, o, n);
                    let dx = acc!(*x);
                    for i in 0..batch {
                        geom.col2im_acc(&dcols, &mut dx[i * in_len..(i + 1) * in_len], n, i * p);
                    }
                }
            }
            Op::Add { a, b } => {
                if needs(*a) {
                    acc!(*a).iter_mut().zip(g).for_each(|(d, v)| *d += v);
                }
                if needs(*b) {
                    let db = acc!(*b);
                    let bl = db.len();
                    for chunk in g.chunks(bl) {
                        db.iter_mut().zip(chunk).for_each(|(d, v)| *d += v);
                    }
                }
            }
            Op::Mul { a, b } => {
                let (av, bv) = (val(*a), val(*b));
                let bl = bv.len();
                if needs(*a) {
                    let da = acc!(*a);
                    for (dc, gc) in da.chunks_mut(bl).zip(g.chunks(bl)) {
                        for ((d, v), y) in dc.iter_mut().zip(gc).zip(bv.data()) {
                            *d += v * y;
                        }
                    }
                }
                if needs(*b) {
                    let db = acc!(*b);
                    for (gc, xc) in g.chunks(bl).zip(av.data().chunks(bl)) {
                        for ((d, v), x) in db.iter_mut().zip(gc).zip(xc) {
                            *d += v * x;
                        }
                    }
                }
            }
            Op::Scale { x, factor } => {
                acc!(*x).iter_mut().zip(g).for_each(|(d, v)| *d += v * factor);
            }
            Op::Relu(x) => {
                let xv = val(*x);
                for ((d, v), e) in acc!(*x).iter_mut().zip(g).zip(xv.data()) {
                    if *e > 0.0 {
                        *d += v;
                    }
                }
            }
            Op::Sigmoid(x) => {
                for ((d, v), y) in acc!(*x).iter_mut().zip(g).zip(out.data()) {
                    *d += v * y * (1.0 - y);
                }
            }
            Op::Abs(x) => {
                let xv = val(*x);
                for ((d, v), e) in acc!(*x).iter_mut().zip(g).zip(xv.data()) {
                    *d += v * if *e > 0.0 { 1.0 } else if *e < 0.0 { -1.0 } else { 0.0 };
                }
            }
            Op::Square(x) => {
                let xv = val(*x);
                for ((d, v), e) in acc!(*x).iter_mut().zip(g).zip(xv.data()) {
                    *d += 2.0 * v * e;
                }
            }
            Op::LayerNorm { x, rstd } => {
                let d = out.last_dim();
                let dx = acc!(*x);
                for (r, s) in rstd.iter().enumerate() {
                    let y = &out.data()[r * d..(r + 1) * d];
                    let gy = &g[r * d..(r + 1) * d];
                    let mean_g = gy.iter().sum::<f64>() / d as f64;
                    let mean_gy = dot(gy, y) / d as f64;
                    for j in 0..d {
                        dx[r * d + j] += s * (gy[j] - mean_g - y[j] * mean_gy);
                    }
                }
            }
            Op::Softmax(x) => {
                let d = out.last_dim();
                let dx = acc!(*x);
                for (r, (y, gy)) in out.data().chunks(d).zip(g.chunks(d)).enumerate() {
                    let inner = dot(y, gy);
                    for j in 0..d {
                        dx[r * d + j] += y[j] * (gy[j] - inner);
                    }
                }
            }
            Op::Mean(x) => {
                let dx = acc!(*x);
                let scale = g[0] / dx.len() as f64;
                dx.iter_mut().for_each(|d| *d += scale);
            }
            Op::SumLast(x) => {
                let d = val(*x).last_dim();
                for (j, dv) in acc!(*x).iter_mut().enumerate() {
                    *dv += g[j / d];
                }
            }
            Op::Concat(parts) => {
                let total = out.last_dim();
                let rows = out.len() / total;
                let mut offset = 0;
                for &p in parts {
                    let d = val(p).last_dim();
                    if needs(p) {
                        let dp = acc!(p);
                        for r in 0..rows {
                            for j in 0..d {
                                dp[r * d + j] += g[r * total + offset + j];
                            }
                        }
                    }
                    offset += d;
                }
            }
            Op::SliceLast { x, start } => {
                let full = val(*x).last_dim();
                let len = out.last_dim();
                let dx = acc!(*x);
                for (r, gr) in g.chunks(len).enumerate() {
                    for (j, v) in gr.iter().enumerate() {
                        dx[r * full + start + j] += v;
                    }
                }
            }
            Op::Reshape(x) => {
                acc!(*x).iter_mut().zip(g).for_each(|(d, v)| *d += v);
            }
            Op::GlobalAvgPool(x) => {
                let xs = val(*x).shape();
                let hw = xs[2] * xs[3];
                let scale = 1.0 / hw as f64;
                for (j, d) in acc!(*x).iter_mut().enumerate() {
                    *d += g[j / hw] * scale;
                }
            }
        }
    }
}

fn slot<'a>(adj: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'a mut Vec<f64> {
    let len = nodes[v.0].value.len();
    adj[v.0].get_or_insert_with(|| vec![0.0; len])
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
