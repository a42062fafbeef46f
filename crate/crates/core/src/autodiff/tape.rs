//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] records every forward operation as an append-only node list;
//! [`Tape::backward`] sweeps the list in reverse exactly once, distributing
//! gradients to each node's inputs. Reductions (dot products, sums, softmax
//! normalizers) accumulate in `f64` regardless of the element type.

use crate::autodiff::tensor::{Scalar, Tensor};
use crate::error::{CoreError, Result};

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

enum Step<F> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    MatMul(Var, Var),
    MatVec(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Row(Var, usize),
    Stack(Vec<Var>),
    EmbedLookup(Var, Vec<usize>),
    /// Saved argmax row per column, first occurrence on ties.
    MaxOverTime(Var, Vec<usize>),
    Sum(Var),
    Pick(Var, usize),
}

struct Node<F> {
    value: Tensor<F>,
    grad: Option<Tensor<F>>,
    step: Step<F>,
    needs_grad: bool,
}

pub struct Tape<F> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of `v`, populated by [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&Tensor<F>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Tensor<F>, step: Step<F>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            step,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn leaf(&mut self, value: Tensor<F>, requires_grad: bool) -> Var {
        self.push(value, Step::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.leaf(value, false)
    }

    fn check_same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(CoreError::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("add", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| *x + *y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(t, Step::Add(a, b), self.needs(a) || self.needs(b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("sub", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| *x - *y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(t, Step::Sub(a, b), self.needs(a) || self.needs(b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("mul", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| *x * *y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(t, Step::Mul(a, b), self.needs(a) || self.needs(b)))
    }

    pub fn scale(&mut self, a: Var, c: F) -> Var {
        let data = self.value(a).data().iter().map(|x| *x * c).collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data).expect("same shape");
        self.push(t, Step::Scale(a, c), self.needs(a))
    }

    /// `[m,k] x [k,n] -> [m,n]`, dot products accumulated in f64.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(CoreError::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![F::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0f64;
                for p in 0..k {
                    acc += av[i * k + p].wide() * bv[p * n + j].wide();
                }
                out[i * n + j] = F::from_wide(acc);
            }
        }
        let t = Tensor::matrix(m, n, out)?;
        Ok(self.push(t, Step::MatMul(a, b), self.needs(a) || self.needs(b)))
    }

    /// `[m,k] x [k] -> [m]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (sw, sx) = (self.value(w).shape(), self.value(x).shape());
        if sw.len() != 2 || sx.len() != 1 || sw[1] != sx[0] {
            return Err(CoreError::ShapeMismatch {
                op: "matvec",
                lhs: sw.to_vec(),
                rhs: sx.to_vec(),
            });
        }
        let (m, k) = (sw[0], sw[1]);
        let wv = self.value(w).data();
        let xv = self.value(x).data();
        let mut out = vec![F::zero(); m];
        for i in 0..m {
            let row = &wv[i * k..(i + 1) * k];
            let mut acc = 0.0f64;
            for p in 0..k {
                acc += row[p].wide() * xv[p].wide();
            }
            out[i] = F::from_wide(acc);
        }
        Ok(self.push(
            Tensor::vector(out),
            Step::MatVec(w, x),
            self.needs(w) || self.needs(x),
        ))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let data = self
            .value(a)
            .data()
            .iter()
            .map(|x| F::from_wide(stable_sigmoid(x.wide())))
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data).expect("same shape");
        self.push(t, Step::Sigmoid(a), self.needs(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let data = self
            .value(a)
            .data()
            .iter()
            .map(|x| F::from_wide(x.wide().tanh()))
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data).expect("same shape");
        self.push(t, Step::Tanh(a), self.needs(a))
    }

    fn softmax_parts(&self, a: Var) -> (Vec<f64>, f64, f64) {
        let xs: Vec<f64> = self.value(a).data().iter().map(|x| x.wide()).collect();
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = xs.iter().map(|x| (x - max).exp()).sum();
        (xs, max, denom)
    }

    /// Softmax over a rank-1 tensor; strictly positive, sums to 1.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        if self.value(a).rank() != 1 {
            return Err(CoreError::ShapeMismatch {
                op: "softmax",
                lhs: self.value(a).shape().to_vec(),
                rhs: vec![],
            });
        }
        let (xs, max, denom) = self.softmax_parts(a);
        let data = xs
            .iter()
            .map(|x| F::from_wide((x - max).exp() / denom))
            .collect();
        Ok(self.push(Tensor::vector(data), Step::Softmax(a), self.needs(a)))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        if self.value(a).rank() != 1 {
            return Err(CoreError::ShapeMismatch {
                op: "log_softmax",
                lhs: self.value(a).shape().to_vec(),
                rhs: vec![],
            });
        }
        let (xs, max, denom) = self.softmax_parts(a);
        let log_denom = denom.ln();
        let data = xs
            .iter()
            .map(|x| F::from_wide(x - max - log_denom))
            .collect();
        Ok(self.push(Tensor::vector(data), Step::LogSoftmax(a), self.needs(a)))
    }

    /// Concatenation of rank-1 tensors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        let mut needs = false;
        for &p in parts {
            if self.value(p).rank() != 1 {
                return Err(CoreError::ShapeMismatch {
                    op: "concat",
                    lhs: self.value(p).shape().to_vec(),
                    rhs: vec![],
                });
            }
            data.extend_from_slice(self.value(p).data());
            needs |= self.needs(p);
        }
        Ok(self.push(
            Tensor::vector(data),
            Step::Concat(parts.to_vec()),
            needs,
        ))
    }

    /// Contiguous range of a rank-1 tensor.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(a);
        if v.rank() != 1 || start + len > v.len() {
            return Err(CoreError::ShapeMismatch {
                op: "slice",
                lhs: v.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let data = v.data()[start..start + len].to_vec();
        Ok(self.push(Tensor::vector(data), Step::Slice(a, start), self.needs(a)))
    }

    /// Row `r` of a rank-2 tensor as a rank-1 tensor.
    pub fn row(&mut self, a: Var, r: usize) -> Result<Var> {
        let v = self.value(a);
        if v.rank() != 2 || r >= v.shape()[0] {
            return Err(CoreError::ShapeMismatch {
                op: "row",
                lhs: v.shape().to_vec(),
                rhs: vec![r],
            });
        }
        let data = v.row(r).to_vec();
        Ok(self.push(Tensor::vector(data), Step::Row(a, r), self.needs(a)))
    }

    /// Stack rank-1 tensors of equal length into a `[k, d]` matrix (time-major).
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(CoreError::invalid("stack of zero tensors"));
        }
        let d = self.value(parts[0]).len();
        let mut data = Vec::with_capacity(parts.len() * d);
        let mut needs = false;
        for &p in parts {
            if self.value(p).rank() != 1 || self.value(p).len() != d {
                return Err(CoreError::ShapeMismatch {
                    op: "stack",
                    lhs: vec![d],
                    rhs: self.value(p).shape().to_vec(),
                });
            }
            data.extend_from_slice(self.value(p).data());
            needs |= self.needs(p);
        }
        let t = Tensor::matrix(parts.len(), d, data)?;
        Ok(self.push(t, Step::Stack(parts.to_vec()), needs))
    }

    /// Gather rows `ids` of an embedding table `[v, e]` into `[len(ids), e]`.
    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if t.rank() != 2 {
            return Err(CoreError::ShapeMismatch {
                op: "embedding_lookup",
                lhs: t.shape().to_vec(),
                rhs: vec![ids.len()],
            });
        }
        let (v, e) = (t.shape()[0], t.shape()[1]);
        let mut data = Vec::with_capacity(ids.len() * e);
        for &id in ids {
            if id >= v {
                return Err(CoreError::invalid(format!(
                    "embedding id {id} out of range for table of {v}"
                )));
            }
            data.extend_from_slice(t.row(id));
        }
        let out = Tensor::matrix(ids.len(), e, data)?;
        Ok(self.push(out, Step::EmbedLookup(table, ids.to_vec()), self.needs(table)))
    }

    /// Column-wise max over a time-major `[t, d]` matrix; gradient flows to the
    /// first argmax row of each column.
    pub fn max_over_time(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        if v.rank() != 2 || v.shape()[0] == 0 {
            return Err(CoreError::ShapeMismatch {
                op: "max_over_time",
                lhs: v.shape().to_vec(),
                rhs: vec![],
            });
        }
        let (t, d) = (v.shape()[0], v.shape()[1]);
        let mut out = v.row(0).to_vec();
        let mut arg = vec![0usize; d];
        for r in 1..t {
            let row = v.row(r);
            for c in 0..d {
                if row[c] > out[c] {
                    out[c] = row[c];
                    arg[c] = r;
                }
            }
        }
        Ok(self.push(Tensor::vector(out), Step::MaxOverTime(a, arg), self.needs(a)))
    }

    /// Sum of all elements, as a rank-0 scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = F::from_wide(self.value(a).sum_f64());
        self.push(Tensor::scalar(s), Step::Sum(a), self.needs(a))
    }

    /// Element `i` of a rank-1 tensor, as a rank-0 scalar.
    pub fn pick(&mut self, a: Var, i: usize) -> Result<Var> {
        let v = self.value(a);
        if v.rank() != 1 || i >= v.len() {
            return Err(CoreError::ShapeMismatch {
                op: "pick",
                lhs: v.shape().to_vec(),
                rhs: vec![i],
            });
        }
        let x = v.data()[i];
        Ok(self.push(Tensor::scalar(x), Step::Pick(a, i), self.needs(a)))
    }

    /// Populate gradients of everything reachable from a scalar `loss`.
    /// Repeated calls without [`Tape::zero_grad`] accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(CoreError::NonScalarLoss {
                shape: self.value(loss).shape().to_vec(),
            });
        }
        let mut pass: Vec<Option<Tensor<F>>> = Vec::with_capacity(loss.0 + 1);
        pass.resize_with(loss.0 + 1, || None);
        pass[loss.0] = Some(Tensor::scalar(F::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = pass[idx].take() else { continue };
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let contribs = self.input_grads(idx, &g);
            for (p, contrib) in contribs {
                if !self.nodes[p].needs_grad {
                    continue;
                }
                match &mut pass[p] {
                    Some(t) => t.add_assign(&contrib),
                    slot => *slot = Some(contrib),
                }
            }
            let node = &mut self.nodes[idx];
            match &mut node.grad {
                Some(t) => t.add_assign(&g),
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }

    /// Gradient contributions of node `idx` to each of its inputs, given the
    /// output gradient `g`.
    fn input_grads(&self, idx: usize, g: &Tensor<F>) -> Vec<(usize, Tensor<F>)> {
        let node = &self.nodes[idx];
        let gd = g.data();
        match &node.step {
            Step::Leaf => vec![],
            Step::Add(a, b) => vec![(a.0, g.clone()), (b.0, g.clone())],
            Step::Sub(a, b) => {
                let neg = Tensor::new(g.shape().to_vec(), gd.iter().map(|x| -*x).collect())
                    .expect("same shape");
                vec![(a.0, g.clone()), (b.0, neg)]
            }
            Step::Mul(a, b) => {
                let av = self.nodes[a.0].value.data();
                let bv = self.nodes[b.0].value.data();
                let ga: Vec<F> = gd.iter().zip(bv).map(|(g, b)| *g * *b).collect();
                let gb: Vec<F> = gd.iter().zip(av).map(|(g, a)| *g * *a).collect();
                vec![
                    (a.0, Tensor::new(g.shape().to_vec(), ga).expect("same shape")),
                    (b.0, Tensor::new(g.shape().to_vec(), gb).expect("same shape")),
                ]
            }
            Step::Scale(a, c) => {
                let ga: Vec<F> = gd.iter().map(|g| *g * *c).collect();
                vec![(a.0, Tensor::new(g.shape().to_vec(), ga).expect("same shape"))]
            }
            Step::MatMul(a, b) => {
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                // dA = g . B^T
                let mut da = vec![F::zero(); m * k];
                for i in 0..m {
                    for p in 0..k {
                        let mut acc = 0.0f64;
                        for j in 0..n {
                            acc += gd[i * n + j].wide() * bv.data()[p * n + j].wide();
                        }
                        da[i * k + p] = F::from_wide(acc);
                    }
                }
                // dB = A^T . g
                let mut db = vec![F::zero(); k * n];
                for p in 0..k {
                    for j in 0..n {
                        let mut acc = 0.0f64;
                        for i in 0..m {
                            acc += av.data()[i * k + p].wide() * gd[i * n + j].wide();
                        }
                        db[p * n + j] = F::from_wide(acc);
                    }
                }
                vec![
                    (a.0, Tensor::matrix(m, k, da).expect("shape")),
                    (b.0, Tensor::matrix(k, n, db).expect("shape")),
                ]
            }
            Step::MatVec(w, x) => {
                let wv = &self.nodes[w.0].value;
                let xv = &self.nodes[x.0].value;
                let (m, k) = (wv.shape()[0], wv.shape()[1]);
                let mut dw = vec![F::zero(); m * k];
                for i in 0..m {
                    let gi = gd[i];
                    for p in 0..k {
                        dw[i * k + p] = gi * xv.data()[p];
                    }
                }
                let mut dx = vec![F::zero(); k];
                for p in 0..k {
                    let mut acc = 0.0f64;
                    for i in 0..m {
                        acc += wv.data()[i * k + p].wide() * gd[i].wide();
                    }
                    dx[p] = F::from_wide(acc);
                }
                vec![
                    (w.0, Tensor::matrix(m, k, dw).expect("shape")),
                    (x.0, Tensor::vector(dx)),
                ]
            }
            Step::Sigmoid(a) => {
                let y = node.value.data();
                let ga: Vec<F> = gd
                    .iter()
                    .zip(y)
                    .map(|(g, y)| *g * *y * (F::one() - *y))
                    .collect();
                vec![(a.0, Tensor::new(g.shape().to_vec(), ga).expect("shape"))]
            }
            Step::Tanh(a) => {
                let y = node.value.data();
                let ga: Vec<F> = gd
                    .iter()
                    .zip(y)
                    .map(|(g, y)| *g * (F::one() - *y * *y))
                    .collect();
                vec![(a.0, Tensor::new(g.shape().to_vec(), ga).expect("shape"))]
            }
            Step::Softmax(a) => {
                let y = node.value.data();
                let dot: f64 = gd
                    .iter()
                    .zip(y)
                    .map(|(g, y)| g.wide() * y.wide())
                    .sum();
                let ga: Vec<F> = gd
                    .iter()
                    .zip(y)
                    .map(|(g, y)| F::from_wide(y.wide() * (g.wide() - dot)))
                    .collect();
                vec![(a.0, Tensor::vector(ga))]
            }
            Step::LogSoftmax(a) => {
                let y = node.value.data();
                let gsum: f64 = gd.iter().map(|g| g.wide()).sum();
                let ga: Vec<F> = gd
                    .iter()
                    .zip(y)
                    .map(|(g, y)| F::from_wide(g.wide() - y.wide().exp() * gsum))
                    .collect();
                vec![(a.0, Tensor::vector(ga))]
            }
            Step::Concat(parts) => {
                let mut out = Vec::with_capacity(parts.len());
                let mut off = 0;
                for &p in parts {
                    let len = self.nodes[p.0].value.len();
                    out.push((p.0, Tensor::vector(gd[off..off + len].to_vec())));
                    off += len;
                }
                out
            }
            Step::Slice(a, start) => {
                let parent = &self.nodes[a.0].value;
                let mut ga = vec![F::zero(); parent.len()];
                ga[*start..*start + gd.len()].copy_from_slice(gd);
                vec![(a.0, Tensor::vector(ga))]
            }
            Step::Row(a, r) => {
                let parent = &self.nodes[a.0].value;
                let cols = parent.shape()[1];
                let mut ga = vec![F::zero(); parent.len()];
                ga[r * cols..(r + 1) * cols].copy_from_slice(gd);
                vec![(
                    a.0,
                    Tensor::new(parent.shape().to_vec(), ga).expect("shape"),
                )]
            }
            Step::Stack(parts) => {
                let d = self.nodes[parts[0].0].value.len();
                parts
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (p.0, Tensor::vector(gd[i * d..(i + 1) * d].to_vec())))
                    .collect()
            }
            Step::EmbedLookup(table, ids) => {
                let tv = &self.nodes[table.0].value;
                let e = tv.shape()[1];
                let mut gt = vec![F::zero(); tv.len()];
                for (m, &id) in ids.iter().enumerate() {
                    for c in 0..e {
                        gt[id * e + c] = gt[id * e + c] + gd[m * e + c];
                    }
                }
                vec![(
                    table.0,
                    Tensor::new(tv.shape().to_vec(), gt).expect("shape"),
                )]
            }
            Step::MaxOverTime(a, arg) => {
                let parent = &self.nodes[a.0].value;
                let d = parent.shape()[1];
                let mut ga = vec![F::zero(); parent.len()];
                for c in 0..d {
                    ga[arg[c] * d + c] = gd[c];
                }
                vec![(
                    a.0,
                    Tensor::new(parent.shape().to_vec(), ga).expect("shape"),
                )]
            }
            Step::Sum(a) => {
                let parent = &self.nodes[a.0].value;
                let ga = vec![gd[0]; parent.len()];
                vec![(
                    a.0,
                    Tensor::new(parent.shape().to_vec(), ga).expect("shape"),
                )]
            }
            Step::Pick(a, i) => {
                let parent = &self.nodes[a.0].value;
                let mut ga = vec![F::zero(); parent.len()];
                ga[*i] = gd[0];
                vec![(a.0, Tensor::vector(ga))]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t1(data: &[f64]) -> Tensor<f64> {
        Tensor::vector(data.to_vec())
    }

    #[test]
    fn max_over_time_is_columnwise() {
        // Time-major rows [[1,5],[3,2]] pool to [3,5].
        let mut tape = Tape::<f64>::new();
        let m = tape.constant(Tensor::matrix(2, 2, vec![1.0, 5.0, 3.0, 2.0]).unwrap());
        let r = tape.max_over_time(m).unwrap();
        assert_eq!(tape.value(r).data(), &[3.0, 5.0]);
    }

    #[test]
    fn max_over_time_permutation_invariant() {
        let rows = [vec![0.3, -1.0, 2.0], vec![1.5, 0.0, -0.5], vec![-2.0, 4.0, 1.0]];
        let perms: [[usize; 3]; 3] = [[0, 1, 2], [2, 0, 1], [1, 2, 0]];
        let mut outputs = Vec::new();
        for perm in perms {
            let mut tape = Tape::<f64>::new();
            let data: Vec<f64> = perm.iter().flat_map(|&i| rows[i].clone()).collect();
            let m = tape.constant(Tensor::matrix(3, 3, data).unwrap());
            let r = tape.max_over_time(m).unwrap();
            outputs.push(tape.value(r).data().to_vec());
        }
        assert_eq!(outputs[0], outputs[1]);
        assert_eq!(outputs[0], outputs[2]);
    }

    #[test]
    fn softmax_uniform_on_equal_inputs() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t1(&[0.0, 0.0, 0.0]));
        let s = tape.softmax(x).unwrap();
        for &p in tape.value(s).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_sums_to_one_and_positive() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t1(&[-3.0, 0.5, 11.0, -7.25]));
        let s = tape.softmax(x).unwrap();
        let sum: f64 = tape.value(s).data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(tape.value(s).data().iter().all(|&p| p > 0.0));
    }

    #[test]
    fn sigmoid_grad_at_zero_is_quarter() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t1(&[0.0, 0.0, 0.0]), true);
        let s = tape.sigmoid(x);
        let loss = tape.sum(s);
        tape.backward(loss).unwrap();
        for &g in tape.grad(x).unwrap().data() {
            assert!((g - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn matvec_loss_grad_matches_outer_structure() {
        // loss = sum(W.x) => dW[i][j] = x[j].
        let mut tape = Tape::<f64>::new();
        let w = tape.leaf(Tensor::matrix(2, 3, vec![0.1; 6]).unwrap(), true);
        let x = tape.constant(t1(&[1.0, 2.0, 3.0]));
        let y = tape.matvec(w, x).unwrap();
        let loss = tape.sum(y);
        tape.backward(loss).unwrap();
        assert_eq!(
            tape.grad(w).unwrap().data(),
            &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]
        );
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t1(&[2.0]), true);
        let y = tape.mul(x, x).unwrap();
        let loss = tape.sum(y);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[4.0]);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[8.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t1(&[1.0, 2.0]), true);
        assert!(matches!(
            tape.backward(x),
            Err(CoreError::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn shape_mismatch_names_op() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(t1(&[1.0, 2.0]));
        let b = tape.constant(t1(&[1.0, 2.0, 3.0]));
        let err = tape.add(a, b).unwrap_err();
        assert!(err.to_string().contains("add"));
        assert!(err.to_string().contains("[2]"));
        assert!(err.to_string().contains("[3]"));
    }

    #[test]
    fn max_over_time_ties_route_to_first_row() {
        let mut tape = Tape::<f64>::new();
        let m = tape.leaf(Tensor::matrix(2, 1, vec![7.0, 7.0]).unwrap(), true);
        let r = tape.max_over_time(m).unwrap();
        let loss = tape.sum(r);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(m).unwrap().data(), &[1.0, 0.0]);
    }
}
