use super::ops;
use super::{Tensor, TensorError};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddBias(Var, Var),
    MatMul(Var, Var),
    BatchMatMul { a: Var, b: Var, transpose_b: bool },
    Gelu(Var),
    Softplus(Var),
    SoftmaxLast(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, rstd: Vec<T> },
    SumAll(Var),
    MeanAll(Var),
    MeanLeading(Var),
    L2Last(Var),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Reshape(Var),
    Permute { x: Var, perm: Vec<usize> },
    ExpandLeading(Var),
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records primitive ops in execution order for one forward/backward pass.
///
/// Nodes are only ever appended, and every op refers to earlier nodes, so the
/// node list is already topologically sorted.
#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn mismatch(op: &'static str, l: &[usize], r: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: l.to_vec(),
        right: r.to_vec(),
    }
}

fn invalid(op: &'static str, reason: impl Into<String>) -> TensorError {
    TensorError::InvalidArgument {
        op,
        reason: reason.into(),
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A trainable input whose gradient is reported by `backward`.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// An input that gradients never flow into.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    fn zip_same(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let t = self.zip_same("add", a, b, |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let t = self.zip_same("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let t = self.zip_same("mul", a, b, |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let t = self.value(a).map(|x| x * c);
        let rg = self.rg(&[a]);
        self.push(t, Op::Scale(a, c), rg)
    }

    /// `x + bias` where `bias.shape()` equals the trailing axes of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let (xs, bs) = (tx.shape(), tb.shape());
        if bs.len() > xs.len() || xs[xs.len() - bs.len()..] != *bs || tb.numel() == 0 {
            return Err(mismatch("add_bias", xs, bs));
        }
        let m = tb.numel();
        let data = tx
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + tb.data()[i % m])
            .collect();
        let t = Tensor::new(xs, data)?;
        let rg = self.rg(&[x, bias]);
        Ok(self.push(t, Op::AddBias(x, bias), rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(mismatch("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let t = Tensor::new(&[m, n], ops::matmul(ta.data(), tb.data(), m, k, n))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::MatMul(a, b), rg))
    }

    /// Batched product over the leading axis: `a[g] · b[g]` or `a[g] · b[g]ᵀ`.
    pub fn bmm(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(mismatch("bmm", sa, sb));
        }
        let (g, m, k) = (sa[0], sa[1], sa[2]);
        let (kb, n) = if transpose_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if kb != k {
            return Err(mismatch("bmm", sa, sb));
        }
        let mut data = Vec::with_capacity(g * m * n);
        for i in 0..g {
            let ab = &ta.data()[i * m * k..(i + 1) * m * k];
            let bb = &tb.data()[i * k * n..(i + 1) * k * n];
            if transpose_b {
                data.extend(ops::matmul_bt(ab, bb, m, k, n));
            } else {
                data.extend(ops::matmul(ab, bb, m, k, n));
            }
        }
        let t = Tensor::new(&[g, m, n], data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::BatchMatMul { a, b, transpose_b }, rg))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(ops::gelu);
        let rg = self.rg(&[x]);
        self.push(t, Op::Gelu(x), rg)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let t = self.value(x).map(ops::softplus);
        let rg = self.rg(&[x]);
        self.push(t, Op::Softplus(x), rg)
    }

    pub fn softmax_last(&mut self, x: Var) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let cols = *tx.shape().last().ok_or_else(|| invalid("softmax_last", "rank 0 input"))?;
        if cols == 0 {
            return Err(invalid("softmax_last", "empty last axis"));
        }
        let t = Tensor::new(tx.shape(), ops::softmax_rows(tx.data(), cols))?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::SoftmaxLast(x), rg))
    }

    /// Normalizes over the last axis, then applies `gain` and `bias` of that axis' size.
    pub fn layernorm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var, TensorError> {
        if !(eps > T::zero()) {
            return Err(invalid("layernorm", "eps must be positive"));
        }
        let tx = self.value(x);
        let cols = *tx.shape().last().ok_or_else(|| invalid("layernorm", "rank 0 input"))?;
        let (tg, tb) = (self.value(gain), self.value(bias));
        if tg.shape() != [cols] || tb.shape() != [cols] {
            return Err(mismatch("layernorm", tx.shape(), tg.shape()));
        }
        let (xhat, rstd) = ops::layernorm_stats(tx.data(), cols, eps);
        let data = xhat
            .iter()
            .enumerate()
            .map(|(i, &h)| h * tg.data()[i % cols] + tb.data()[i % cols])
            .collect();
        let t = Tensor::new(tx.shape(), data)?;
        let rg = self.rg(&[x, gain, bias]);
        Ok(self.push(t, Op::LayerNorm { x, gain, bias, xhat, rstd }, rg))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().fold(T::zero(), |s, &v| s + v);
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::SumAll(x), rg)
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let s = tx.data().iter().fold(T::zero(), |s, &v| s + v) / T::of(tx.numel() as f64);
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::MeanAll(x), rg)
    }

    /// Mean over the leading axis: `[m, rest…] → [rest…]`.
    pub fn mean_leading(&mut self, x: Var) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let s = tx.shape();
        if s.is_empty() || s[0] == 0 {
            return Err(invalid("mean_leading", "needs a nonempty leading axis"));
        }
        let inner = tx.numel() / s[0];
        let mut acc = vec![T::zero(); inner];
        for row in tx.data().chunks(inner) {
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        let m = T::of(s[0] as f64);
        acc.iter_mut().for_each(|a| *a /= m);
        let t = Tensor::new(&s[1..], acc)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::MeanLeading(x), rg))
    }

    /// Euclidean norm over the last axis: `[…, d] → […]`.
    pub fn l2_last(&mut self, x: Var) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let s = tx.shape();
        let cols = *s.last().ok_or_else(|| invalid("l2_last", "rank 0 input"))?;
        let data = tx
            .data()
            .chunks(cols)
            .map(|r| r.iter().fold(T::zero(), |a, &v| a + v * v).sqrt())
            .collect();
        let t = Tensor::new(&s[..s.len() - 1], data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::L2Last(x), rg))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = parts.first().ok_or_else(|| invalid("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(invalid("concat", format!("axis {axis} out of range")));
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            let ok = s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(mismatch("concat", &base, s));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let t = self.value(*p);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let t = Tensor::new(&shape, data)?;
        let rg = self.rg(parts);
        Ok(self.push(t, Op::Concat { parts: parts.to_vec(), axis }, rg))
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let s = tx.shape();
        if axis >= s.len() || start + len > s[axis] {
            return Err(invalid("slice", format!("range {start}..{} on axis {axis} of {s:?}", start + len)));
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * s[axis] + start) * inner;
            data.extend_from_slice(&tx.data()[base..base + len * inner]);
        }
        let mut shape = s.to_vec();
        shape[axis] = len;
        let t = Tensor::new(&shape, data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::Slice { x, axis, start }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(x).reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let mut seen = vec![false; perm.len()];
        if perm.len() != tx.rank() || perm.iter().any(|&p| p >= perm.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(invalid("permute", format!("{perm:?} is not a permutation of rank {}", tx.rank())));
        }
        let (data, shape) = ops::permute(tx.data(), tx.shape(), perm);
        let t = Tensor::new(&shape, data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::Permute { x, perm: perm.to_vec() }, rg))
    }

    /// Stacks `copies` copies of `x` along a new leading axis.
    pub fn expand_leading(&mut self, x: Var, copies: usize) -> Var {
        let tx = self.value(x);
        let mut shape = vec![copies];
        shape.extend_from_slice(tx.shape());
        let mut data = Vec::with_capacity(tx.numel() * copies);
        for _ in 0..copies {
            data.extend_from_slice(tx.data());
        }
        let t = Tensor::new(&shape, data).expect("shape built from data");
        let rg = self.rg(&[x]);
        self.push(t, Op::ExpandLeading(x), rg)
    }

    /// Reverse pass from a one-element loss, seeded with 1.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, TensorError> {
        let t = self.value(loss);
        if t.numel() != 1 {
            return Err(TensorError::NonScalarLoss(t.shape().to_vec()));
        }
        self.backward_with(loss, Tensor::ones(t.shape()))
    }

    /// Reverse pass from `root` seeded with an upstream gradient of the same shape.
    pub fn backward_with(&self, root: Var, seed: Tensor<T>) -> Result<Gradients<T>, TensorError> {
        if self.nodes.is_empty() {
            return Err(invalid("backward", "empty tape"));
        }
        if seed.shape() != self.shape(root) {
            return Err(mismatch("backward_with", self.shape(root), seed.shape()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(seed);
        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<(), TensorError> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ga = Tensor::new(g.shape(), g.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).collect())?;
                let gb = Tensor::new(g.shape(), g.data().iter().zip(ta.data()).map(|(&x, &y)| x * y).collect())?;
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.accumulate(grads, *a, g.map(|v| v * c));
            }
            Op::AddBias(x, bias) => {
                self.accumulate(grads, *x, g.clone());
                if self.requires_grad(*bias) {
                    let bshape = self.shape(*bias);
                    let m: usize = bshape.iter().product();
                    let mut gb = vec![T::zero(); m];
                    for (j, &v) in g.data().iter().enumerate() {
                        gb[j % m] += v;
                    }
                    self.accumulate(grads, *bias, Tensor::new(bshape, gb)?);
                }
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.requires_grad(*a) {
                    let ga = ops::matmul_bt(g.data(), tb.data(), m, n, k);
                    self.accumulate(grads, *a, Tensor::new(&[m, k], ga)?);
                }
                if self.requires_grad(*b) {
                    let gb = ops::matmul_at(ta.data(), g.data(), m, k, n);
                    self.accumulate(grads, *b, Tensor::new(&[k, n], gb)?);
                }
            }
            Op::BatchMatMul { a, b, transpose_b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (bs, m, k) = (ta.shape()[0], ta.shape()[1], ta.shape()[2]);
                let n = g.shape()[2];
                let mut ga = Vec::with_capacity(ta.numel());
                let mut gb = Vec::with_capacity(tb.numel());
                for i in 0..bs {
                    let ab = &ta.data()[i * m * k..(i + 1) * m * k];
                    let bb = &tb.data()[i * k * n..(i + 1) * k * n];
                    let gg = &g.data()[i * m * n..(i + 1) * m * n];
                    if *transpose_b {
                        // out = a·bᵀ with b: [n, k]
                        ga.extend(ops::matmul(gg, bb, m, n, k));
                        gb.extend(ops::matmul_at(gg, ab, m, n, k));
                    } else {
                        ga.extend(ops::matmul_bt(gg, bb, m, n, k));
                        gb.extend(ops::matmul_at(ab, gg, m, k, n));
                    }
                }
                self.accumulate(grads, *a, Tensor::new(ta.shape(), ga)?);
                self.accumulate(grads, *b, Tensor::new(tb.shape(), gb)?);
            }
            Op::Gelu(x) => {
                let tx = self.value(*x);
                let d = g.data().iter().zip(tx.data()).map(|(&gv, &xv)| gv * ops::gelu_grad(xv)).collect();
                self.accumulate(grads, *x, Tensor::new(g.shape(), d)?);
            }
            Op::Softplus(x) => {
                let tx = self.value(*x);
                let d = g.data().iter().zip(tx.data()).map(|(&gv, &xv)| gv * ops::sigmoid(xv)).collect();
                self.accumulate(grads, *x, Tensor::new(g.shape(), d)?);
            }
            Op::SoftmaxLast(x) => {
                let cols = *g.shape().last().expect("checked at forward");
                let d = ops::softmax_rows_backward(node.value.data(), g.data(), cols);
                self.accumulate(grads, *x, Tensor::new(g.shape(), d)?);
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let cols = *g.shape().last().expect("checked at forward");
                let tg = self.value(*gain);
                if self.requires_grad(*x) {
                    let gxhat: Vec<T> = g.data().iter().enumerate().map(|(j, &v)| v * tg.data()[j % cols]).collect();
                    let d = ops::layernorm_backward(xhat, rstd, &gxhat, cols);
                    self.accumulate(grads, *x, Tensor::new(g.shape(), d)?);
                }
                let mut ggain = vec![T::zero(); cols];
                let mut gbias = vec![T::zero(); cols];
                for (j, (&gv, &h)) in g.data().iter().zip(xhat).enumerate() {
                    ggain[j % cols] += gv * h;
                    gbias[j % cols] += gv;
                }
                self.accumulate(grads, *gain, Tensor::new(&[cols], ggain)?);
                self.accumulate(grads, *bias, Tensor::new(&[cols], gbias)?);
            }
            Op::SumAll(x) => {
                let gv = g.data()[0];
                self.accumulate(grads, *x, Tensor::full(self.shape(*x), gv));
            }
            Op::MeanAll(x) => {
                let n = T::of(self.value(*x).numel() as f64);
                let gv = g.data()[0] / n;
                self.accumulate(grads, *x, Tensor::full(self.shape(*x), gv));
            }
            Op::MeanLeading(x) => {
                let s = self.shape(*x).to_vec();
                let m = T::of(s[0] as f64);
                let mut d = Vec::with_capacity(s.iter().product());
                for _ in 0..s[0] {
                    d.extend(g.data().iter().map(|&v| v / m));
                }
                self.accumulate(grads, *x, Tensor::new(&s, d)?);
            }
            Op::L2Last(x) => {
                let tx = self.value(*x);
                let cols = *tx.shape().last().expect("checked at forward");
                let mut d = Vec::with_capacity(tx.numel());
                for ((row, &norm), &gv) in tx.data().chunks(cols).zip(node.value.data()).zip(g.data()) {
                    if norm > T::zero() {
                        d.extend(row.iter().map(|&v| gv * v / norm));
                    } else {
                        // subgradient 0 at the kink
                        d.extend(std::iter::repeat(T::zero()).take(cols));
                    }
                }
                self.accumulate(grads, *x, Tensor::new(tx.shape(), d)?);
            }
            Op::Concat { parts, axis } => {
                let s = g.shape();
                let outer: usize = s[..*axis].iter().product();
                let inner: usize = s[axis + 1..].iter().product();
                let mut offset = 0;
                for p in parts {
                    let ps = self.shape(*p).to_vec();
                    let chunk = ps[*axis] * inner;
                    if self.requires_grad(*p) {
                        let mut d = Vec::with_capacity(outer * chunk);
                        for o in 0..outer {
                            let base = o * s[*axis] * inner + offset;
                            d.extend_from_slice(&g.data()[base..base + chunk]);
                        }
                        self.accumulate(grads, *p, Tensor::new(&ps, d)?);
                    }
                    offset += chunk;
                }
            }
            Op::Slice { x, axis, start } => {
                let s = self.shape(*x).to_vec();
                let len = g.shape()[*axis];
                let outer: usize = s[..*axis].iter().product();
                let inner: usize = s[axis + 1..].iter().product();
                let mut d = vec![T::zero(); s.iter().product()];
                for o in 0..outer {
                    let dst = (o * s[*axis] + start) * inner;
                    let src = o * len * inner;
                    d[dst..dst + len * inner].copy_from_slice(&g.data()[src..src + len * inner]);
                }
                self.accumulate(grads, *x, Tensor::new(&s, d)?);
            }
            Op::Reshape(x) => {
                self.accumulate(grads, *x, g.reshape(self.shape(*x))?);
            }
            Op::Permute { x, perm } => {
                let (d, shape) = ops::permute(g.data(), g.shape(), &ops::inverse_perm(perm));
                self.accumulate(grads, *x, Tensor::new(&shape, d)?);
            }
            Op::ExpandLeading(x) => {
                let inner = self.value(*x).numel();
                let mut d = vec![T::zero(); inner];
                for chunk in g.data().chunks(inner) {
                    for (a, &v) in d.iter_mut().zip(chunk) {
                        *a += v;
                    }
                }
                self.accumulate(grads, *x, Tensor::new(self.shape(*x), d)?);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn identity_matmul_is_noop() {
        let mut tape = Tape::<f64>::new();
        let i = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let m = tape.constant(t(&[2, 2], &[3.5, -1.0, 2.0, 7.0]));
        let out = tape.matmul(i, m).unwrap();
        assert_eq!(tape.value(out), tape.value(m));
    }

    #[test]
    fn schoolbook_product() {
        let mut tape = Tape::<f32>::new();
        let a = tape.constant(Tensor::from_f64(&[2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = tape.constant(Tensor::from_f64(&[2, 1], &[5.0, 6.0]).unwrap());
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[17.0, 39.0]);
        assert_eq!(tape.value(c).shape(), &[2, 1]);
    }

    #[test]
    fn zeros_times_ones() {
        let mut tape = Tape::<f32>::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::ones(&[3, 4]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c), &Tensor::zeros(&[2, 4]));
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let mut tape = Tape::<f32>::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(tape.matmul(a, b), Err(TensorError::ShapeMismatch { .. })));
    }

    #[test]
    fn softmax_examples() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[2, 3], &[4.0, 4.0, 4.0, 0.0, 3f64.ln(), -1e300]));
        let y = tape.softmax_last(x).unwrap();
        let v = tape.value(y).data();
        for p in &v[..3] {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!((v[3] - 0.25).abs() < 1e-12);
        assert!((v[4] - 0.75).abs() < 1e-12);

        let x = tape.constant(t(&[1, 2], &[0.0, 3f64.ln()]));
        let shifted = tape.constant(t(&[1, 2], &[100.0, 100.0 + 3f64.ln()]));
        let a = tape.softmax_last(x).unwrap();
        let b = tape.softmax_last(shifted).unwrap();
        assert!(tape.value(a).max_abs_diff(tape.value(b)).unwrap() < 1e-12);
    }

    #[test]
    fn layernorm_examples() {
        let mut tape = Tape::<f64>::new();
        let g = tape.constant(Tensor::ones(&[2]));
        let b = tape.constant(Tensor::zeros(&[2]));
        let x = tape.constant(t(&[1, 2], &[1.0, 3.0]));
        let y = tape.layernorm(x, g, b, 1e-12).unwrap();
        let v = tape.value(y).data();
        assert!((v[0] + 1.0).abs() < 1e-9 && (v[1] - 1.0).abs() < 1e-9);

        let g4 = tape.constant(Tensor::ones(&[4]));
        let b4 = tape.constant(Tensor::zeros(&[4]));
        let c = tape.constant(Tensor::full(&[4], 2.5));
        let y = tape.layernorm(c, g4, b4, 1e-5).unwrap();
        assert!(tape.value(y).data().iter().all(|v| v.abs() < 1e-12));

        let x = tape.constant(t(&[2, 4], &[0.3, -1.0, 2.0, 5.0, 1.0, 1.5, -0.5, 0.0]));
        let plain = tape.layernorm(x, g4, b4, 1e-10).unwrap();
        let gain = tape.constant(t(&[4], &[2.0, -1.0, 0.5, 3.0]));
        let bias = tape.constant(t(&[4], &[0.1, 0.2, -0.3, 1.0]));
        let affine = tape.layernorm(x, gain, bias, 1e-10).unwrap();
        for (j, (&p, &a)) in tape.value(plain).data().iter().zip(tape.value(affine).data()).enumerate() {
            let expect = tape.value(gain).data()[j % 4] * p + tape.value(bias).data()[j % 4];
            assert!((expect - a).abs() < 1e-12);
        }
        let rows = tape.value(plain).data();
        for row in rows.chunks(4) {
            let mean = row.iter().sum::<f64>() / 4.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-5 && (var - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn layernorm_rejects_zero_eps() {
        let mut tape = Tape::<f64>::new();
        let g = tape.constant(Tensor::ones(&[2]));
        let b = tape.constant(Tensor::zeros(&[2]));
        let x = tape.constant(Tensor::ones(&[1, 2]));
        assert!(tape.layernorm(x, g, b, 0.0).is_err());
    }

    #[test]
    fn sum_gives_ones() {
        let mut tape = Tape::<f32>::new();
        let x = tape.param(Tensor::from_f64(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap());
        let s = tape.sum_all(x);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &Tensor::ones(&[2, 3]));
    }

    #[test]
    fn self_dot_gives_twice_x() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(t(&[3], &[1.5, -2.0, 0.25]));
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum_all(sq);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[3.0, -4.0, 0.5]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::<f32>::new();
        let x = tape.param(Tensor::ones(&[2]));
        assert!(matches!(tape.backward(x), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::<f32>::new();
        let x = tape.param(Tensor::ones(&[2]));
        let c = tape.constant(Tensor::ones(&[2]));
        let y = tape.mul(x, c).unwrap();
        let s = tape.sum_all(y);
        let g = tape.backward(s).unwrap();
        assert!(g.get(c).is_none());
        assert!(g.get(x).is_some());
    }

    #[test]
    fn add_bias_requires_trailing_match() {
        let mut tape = Tape::<f32>::new();
        let x = tape.param(Tensor::ones(&[2, 3, 4]));
        let ok = tape.param(Tensor::ones(&[3, 4]));
        let bad = tape.param(Tensor::ones(&[3]));
        assert!(tape.add_bias(x, ok).is_ok());
        assert!(tape.add_bias(x, bad).is_err());
    }
}
