//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Ops are appended in execution order, so the node list is always a valid
//! topological order and every node's inputs precede it. Values are computed
//! eagerly on insertion; `backward` walks the tape once in reverse and
//! accumulates adjoints.
//!
//! Leaves come in two kinds: `input` (constants, no gradient) and `param`
//! (registered with a parameter group so the adjoint can be assembled back
//! into a flat parameter vector). Freezing a network during one phase of an
//! alternating optimization is done by binding its parameters as inputs;
//! `detach` cuts the gradient path at a value instead.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param,
    Add(NodeId, NodeId),
    /// `[n, d] + [d]`, bias-style broadcast over rows.
    AddRow(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId),
    Neg(NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Clamp { x: NodeId, lo: f64, hi: f64 },
    /// Sum of all entries, producing a scalar.
    Sum(NodeId),
    Detach(NodeId),
    /// Column-wise concat of two matrices with equal row counts.
    Concat(NodeId, NodeId),
    /// Columns `[start, start+len)` of a matrix.
    SliceCols { x: NodeId, start: usize, len: usize },
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        match *self {
            Op::Input | Op::Param => vec![],
            Op::Add(a, b)
            | Op::AddRow(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::MatMul(a, b)
            | Op::Concat(a, b) => vec![a, b],
            Op::Scale(a, _)
            | Op::AddConst(a)
            | Op::Neg(a)
            | Op::Relu(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Exp(a)
            | Op::Ln(a)
            | Op::Clamp { x: a, .. }
            | Op::Sum(a)
            | Op::Detach(a)
            | Op::SliceCols { x: a, .. } => vec![a],
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
}

struct GroupInfo {
    len: usize,
    /// `(leaf node, offset of its first element in the flat vector)`.
    leaves: Vec<(NodeId, usize)>,
}

/// A computation tape. Build it forward, then call [`Graph::backward`].
pub struct Graph {
    nodes: Vec<Node>,
    groups: Vec<GroupInfo>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Graph {
        Graph { nodes: Vec::new(), groups: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, value });
        id
    }

    /// Constant leaf; no gradient is tracked for it.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Input, value)
    }

    /// Registers a parameter group covering `len` flat values.
    pub fn group(&mut self, len: usize) -> GroupId {
        let id = GroupId(self.groups.len());
        self.groups.push(GroupInfo { len, leaves: Vec::new() });
        id
    }

    /// Differentiable leaf whose flat values live at `offset..offset+value.len()`
    /// of the group's parameter vector.
    pub fn param(&mut self, group: GroupId, offset: usize, value: Tensor) -> NodeId {
        let len = value.len();
        assert!(
            offset + len <= self.groups[group.0].len,
            "param leaf [{}, {}) exceeds group length {}",
            offset,
            offset + len,
            self.groups[group.0].len
        );
        let id = self.push(Op::Param, value);
        self.groups[group.0].leaves.push((id, offset));
        id
    }

    /// Every node's inputs precede it; construction can only append, so this
    /// holds by design and is checked in tests.
    pub fn is_topologically_ordered(&self) -> bool {
        self.nodes
            .iter()
            .enumerate()
            .all(|(i, n)| n.op.inputs().iter().all(|inp| inp.0 < i))
    }

    fn shape_of(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape_of(a), self.shape_of(b), "add shape mismatch");
        let data = zip_map(self.value(a), self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), data)
    }

    /// `a` is `[n, d]`, `bias` is `[d]`; adds the bias to every row.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let (n, d) = self.value(a).as_matrix().expect("add_row lhs must be a matrix");
        assert_eq!(self.shape_of(bias), &[d], "bias length mismatch");
        let av = self.value(a).data();
        let bv = self.value(bias).data();
        let mut out = Vec::with_capacity(n * d);
        for r in 0..n {
            for c in 0..d {
                out.push(av[r * d + c] + bv[c]);
            }
        }
        let shape = self.shape_of(a).to_vec();
        self.push(Op::AddRow(a, bias), Tensor::new(shape, out))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape_of(a), self.shape_of(b), "sub shape mismatch");
        let data = zip_map(self.value(a), self.value(b), |x, y| x - y);
        self.push(Op::Sub(a, b), data)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape_of(a), self.shape_of(b), "mul shape mismatch");
        let data = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), data)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.mul(a, a)
    }

    /// `[n, k] x [k, m] -> [n, m]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (n, k) = self.value(a).as_matrix().expect("matmul lhs");
        let bs = self.shape_of(b);
        assert_eq!(bs.len(), 2, "matmul rhs must be 2-D");
        assert_eq!(bs[0], k, "matmul inner dimension mismatch");
        let m = bs[1];
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for p in 0..k {
                let aip = av[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bv[p * m..(p + 1) * m];
                let orow = &mut out[i * m..(i + 1) * m];
                for c in 0..m {
                    orow[c] += aip * brow[c];
                }
            }
        }
        self.push(Op::MatMul(a, b), Tensor::new(vec![n, m], out))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x * c);
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x + c);
        self.push(Op::AddConst(a), v)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| -x);
        self.push(Op::Neg(a), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(Op::Relu(a), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::ln);
        self.push(Op::Ln(a), v)
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(Op::Clamp { x: a, lo, hi }, v)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    /// Mean of all entries.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len();
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// Value passes through; gradient does not.
    pub fn detach(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).clone();
        self.push(Op::Detach(a), v)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (n, da) = self.value(a).as_matrix().expect("concat lhs");
        let (nb, db) = self.value(b).as_matrix().expect("concat rhs");
        assert_eq!(n, nb, "concat row count mismatch");
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = Vec::with_capacity(n * (da + db));
        for r in 0..n {
            out.extend_from_slice(&av[r * da..(r + 1) * da]);
            out.extend_from_slice(&bv[r * db..(r + 1) * db]);
        }
        self.push(Op::Concat(a, b), Tensor::new(vec![n, da + db], out))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let (n, d) = self.value(a).as_matrix().expect("slice_cols input");
        assert!(start + len <= d, "slice [{}, {}) out of {} columns", start, start + len, d);
        let av = self.value(a).data();
        let mut out = Vec::with_capacity(n * len);
        for r in 0..n {
            out.extend_from_slice(&av[r * d + start..r * d + start + len]);
        }
        self.push(Op::SliceCols { x: a, start, len }, Tensor::new(vec![n, len], out))
    }

    /// Runs the reverse pass from a scalar loss node and returns adjoints
    /// for every node plus per-group flat gradients.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Contract(format!(
                "loss must be scalar, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut adj: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(d) = adj[i].clone() else { continue };
            match self.nodes[i].op {
                Op::Input | Op::Param | Op::Detach(_) => {}
                Op::Add(a, b) => {
                    accumulate(&mut adj, a, &d);
                    accumulate(&mut adj, b, &d);
                }
                Op::AddRow(a, bias) => {
                    accumulate(&mut adj, a, &d);
                    let (n, dd) = d.as_matrix().unwrap();
                    let mut bg = vec![0.0; dd];
                    for r in 0..n {
                        for c in 0..dd {
                            bg[c] += d.data()[r * dd + c];
                        }
                    }
                    accumulate(&mut adj, bias, &Tensor::from_vec(bg));
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, a, &d);
                    accumulate(&mut adj, b, &d.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let da = zip_map(&d, self.value(b), |g, y| g * y);
                    let db = zip_map(&d, self.value(a), |g, x| g * x);
                    accumulate(&mut adj, a, &da);
                    accumulate(&mut adj, b, &db);
                }
                Op::MatMul(a, b) => {
                    let (n, k) = self.value(a).as_matrix().unwrap();
                    let m = self.value(b).shape()[1];
                    let dv = d.data();
                    let av = self.value(a).data();
                    let bv = self.value(b).data();
                    // dA = dC . B^T
                    let mut da = vec![0.0; n * k];
                    for i2 in 0..n {
                        for p in 0..k {
                            let mut s = 0.0;
                            for c in 0..m {
                                s += dv[i2 * m + c] * bv[p * m + c];
                            }
                            da[i2 * k + p] = s;
                        }
                    }
                    // dB = A^T . dC
                    let mut db = vec![0.0; k * m];
                    for p in 0..k {
                        for i2 in 0..n {
                            let aip = av[i2 * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            for c in 0..m {
                                db[p * m + c] += aip * dv[i2 * m + c];
                            }
                        }
                    }
                    accumulate(&mut adj, a, &Tensor::new(vec![n, k], da));
                    accumulate(&mut adj, b, &Tensor::new(vec![k, m], db));
                }
                Op::Scale(a, c) => accumulate(&mut adj, a, &d.map(|x| x * c)),
                Op::AddConst(a) => accumulate(&mut adj, a, &d),
                Op::Neg(a) => accumulate(&mut adj, a, &d.map(|x| -x)),
                Op::Relu(a) => {
                    let da = zip_map(&d, self.value(a), |g, x| if x > 0.0 { g } else { 0.0 });
                    accumulate(&mut adj, a, &da);
                }
                Op::Tanh(a) => {
                    let da = zip_map(&d, &self.nodes[i].value, |g, y| g * (1.0 - y * y));
                    accumulate(&mut adj, a, &da);
                }
                Op::Sigmoid(a) => {
                    let da = zip_map(&d, &self.nodes[i].value, |g, y| g * y * (1.0 - y));
                    accumulate(&mut adj, a, &da);
                }
                Op::Exp(a) => {
                    let da = zip_map(&d, &self.nodes[i].value, |g, y| g * y);
                    accumulate(&mut adj, a, &da);
                }
                Op::Ln(a) => {
                    let da = zip_map(&d, self.value(a), |g, x| g / x);
                    accumulate(&mut adj, a, &da);
                }
                Op::Clamp { x, lo, hi } => {
                    let da = zip_map(&d, self.value(x), |g, v| if v >= lo && v <= hi { g } else { 0.0 });
                    accumulate(&mut adj, x, &da);
                }
                Op::Sum(a) => {
                    let g = d.item();
                    let shape = self.value(a).shape().to_vec();
                    accumulate(&mut adj, a, &Tensor::filled(shape, g));
                }
                Op::Concat(a, b) => {
                    let (n, da_cols) = self.value(a).as_matrix().unwrap();
                    let db_cols = self.value(b).shape()[1];
                    let total = da_cols + db_cols;
                    let dv = d.data();
                    let mut ga = Vec::with_capacity(n * da_cols);
                    let mut gb = Vec::with_capacity(n * db_cols);
                    for r in 0..n {
                        ga.extend_from_slice(&dv[r * total..r * total + da_cols]);
                        gb.extend_from_slice(&dv[r * total + da_cols..(r + 1) * total]);
                    }
                    accumulate(&mut adj, a, &Tensor::new(vec![n, da_cols], ga));
                    accumulate(&mut adj, b, &Tensor::new(vec![n, db_cols], gb));
                }
                Op::SliceCols { x, start, len } => {
                    let (n, dcols) = self.value(x).as_matrix().unwrap();
                    let dv = d.data();
                    let mut gx = vec![0.0; n * dcols];
                    for r in 0..n {
                        gx[r * dcols + start..r * dcols + start + len]
                            .copy_from_slice(&dv[r * len..(r + 1) * len]);
                    }
                    accumulate(&mut adj, x, &Tensor::new(vec![n, dcols], gx));
                }
            }
        }

        let mut group_grads = Vec::with_capacity(self.groups.len());
        for info in &self.groups {
            let mut g = vec![0.0; info.len];
            for &(leaf, offset) in &info.leaves {
                if let Some(a) = &adj[leaf.0] {
                    g[offset..offset + a.len()].copy_from_slice(a.data());
                }
            }
            group_grads.push(g);
        }
        Ok(Gradients { adjoints: adj, group_grads })
    }
}

/// Result of a reverse pass.
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
    group_grads: Vec<Vec<f64>>,
}

impl Gradients {
    /// Adjoint of an arbitrary node; `None` means no gradient path reached it.
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.adjoints.get(id.0).and_then(|a| a.as_ref())
    }

    /// Flat gradient for a parameter group; zeros where no path reached.
    pub fn group(&self, id: GroupId) -> &[f64] {
        &self.group_grads[id.0]
    }
}

fn accumulate(adj: &mut [Option<Tensor>], target: NodeId, d: &Tensor) {
    match &mut adj[target.0] {
        Some(existing) => {
            debug_assert_eq!(existing.shape(), d.shape());
            for (e, v) in existing.data_mut().iter_mut().zip(d.data()) {
                *e += v;
            }
        }
        slot @ None => *slot = Some(d.clone()),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(a.len(), b.len());
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        // f(w) = sum(w^2), w = [1, -2] -> grad [2, -4]
        let mut g = Graph::new();
        let gid = g.group(2);
        let w = g.param(gid, 0, Tensor::from_vec(vec![1.0, -2.0]));
        let sq = g.square(w);
        let loss = g.sum(sq);
        assert_eq!(g.value(loss).item(), 5.0);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.group(gid), &[2.0, -4.0]);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let mut g = Graph::new();
        let gid = g.group(3);
        let w = g.param(gid, 0, Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let d = g.detach(w);
        let s = g.sum(d);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.group(gid), &[0.0, 0.0, 0.0]);
        assert!(grads.wrt(w).is_none());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn matmul_matches_hand_computation() {
        let mut g = Graph::new();
        let a = g.input(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let b = g.input(Tensor::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]));
        let c = g.matmul(a, b);
        assert_eq!(g.value(c).data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn slice_and_concat_roundtrip_gradient() {
        let mut g = Graph::new();
        let gid = g.group(6);
        let x = g.param(gid, 0, Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]));
        let left = g.slice_cols(x, 0, 1);
        let right = g.slice_cols(x, 1, 2);
        let back = g.concat_cols(left, right);
        let sq = g.square(back);
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        let expect: Vec<f64> = (1..=6).map(|v| 2.0 * v as f64).collect();
        assert_eq!(grads.group(gid), expect.as_slice());
    }
}
