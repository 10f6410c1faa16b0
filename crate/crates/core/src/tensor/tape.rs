//! Reverse-mode differentiation over dense f64 tensors.
//!
//! A [`Tape`] records operations as they execute; [`Tape::backward`] replays
//! them in reverse to accumulate gradients on every leaf that asked for them.
//! Tapes are append-only, so node order is already a topological order of the
//! computation graph.
//!
//! The op set is deliberately small: elementwise arithmetic, 2-D matmul,
//! relu, clamp, scalar scaling, leading-batch broadcast, reshape, axis
//! concatenation, axis means, and softmax cross-entropy. Broadcasting is
//! restricted to replicating a leading extent-1 axis (plus scalar fill);
//! anything richer must be spelled out explicitly by the caller.
//!
//! A tape and its tensors are confined to one thread of control. Independent
//! tapes may run in parallel threads; nothing is shared between them.

use std::sync::atomic::{AtomicU64, Ordering};

use super::value::{shape_string, Tensor};
use super::TensorError;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a tensor recorded on a tape.
///
/// The handle is only meaningful on the tape that produced it; using it on
/// another tape is rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape_id: u64,
    node: usize,
}

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MatMul {
        a: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Relu(usize),
    Broadcast(usize),
    Reshape(usize),
    Concat {
        inputs: Vec<usize>,
        axis: usize,
    },
    MeanAxes {
        x: usize,
        // out_strides[d] is the output stride of input axis d, 0 for pooled axes
        out_strides: Vec<usize>,
        pool_size: usize,
    },
    SoftmaxCrossEntropy {
        logits: usize,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    ScalarMul {
        x: usize,
        c: f64,
    },
    Clamp {
        x: usize,
        lo: f64,
        hi: f64,
    },
}

struct Node {
    data: Vec<f64>,
    shape: Vec<usize>,
    grad: Option<Vec<f64>>,
    needs_grad: bool,
    op: Op,
}

/// Recording tape. See the module docs for the op set and its conventions.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            backward_done: false,
        }
    }

    fn check(&self, v: Var, op: &'static str) -> Result<usize, TensorError> {
        if v.tape_id != self.id {
            return Err(TensorError::ForeignTensor { op });
        }
        Ok(v.node)
    }

    fn push(&mut self, data: Vec<f64>, shape: Vec<usize>, needs_grad: bool, op: Op) -> Var {
        let node = self.nodes.len();
        self.nodes.push(Node {
            data,
            shape,
            grad: None,
            needs_grad,
            op,
        });
        Var {
            tape_id: self.id,
            node,
        }
    }

    /// Records a leaf holding a copy of `t`. Gradients accumulate on it
    /// during backward only when `requires_grad` is set.
    pub fn leaf(&mut self, t: &Tensor, requires_grad: bool) -> Var {
        self.push(
            t.data().to_vec(),
            t.shape().to_vec(),
            requires_grad,
            Op::Leaf,
        )
    }

    pub fn leaf_from(
        &mut self,
        shape: Vec<usize>,
        data: Vec<f64>,
        requires_grad: bool,
    ) -> Result<Var, TensorError> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(TensorError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(self.push(data, shape, requires_grad, Op::Leaf))
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.leaf(t, false)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        assert_eq!(v.tape_id, self.id, "value: tensor from a different tape");
        &self.nodes[v.node].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        assert_eq!(v.tape_id, self.id, "shape: tensor from a different tape");
        &self.nodes[v.node].shape
    }

    /// Gradient accumulated by the last backward pass, if this node carries one.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        assert_eq!(v.tape_id, self.id, "grad: tensor from a different tape");
        self.nodes[v.node].grad.as_deref()
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        assert_eq!(v.tape_id, self.id, "to_tensor: tensor from a different tape");
        let n = &self.nodes[v.node];
        Tensor::new(n.shape.clone(), n.data.clone()).expect("node data matches its shape")
    }

    fn binary_elementwise(
        &mut self,
        op_name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: impl Fn(usize, usize) -> Op,
    ) -> Result<Var, TensorError> {
        let ia = self.check(a, op_name)?;
        let ib = self.check(b, op_name)?;
        if self.nodes[ia].shape != self.nodes[ib].shape {
            return Err(TensorError::ShapeMismatch {
                op: op_name,
                lhs: shape_string(&self.nodes[ia].shape),
                rhs: shape_string(&self.nodes[ib].shape),
            });
        }
        let data: Vec<f64> = self.nodes[ia]
            .data
            .iter()
            .zip(&self.nodes[ib].data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.nodes[ia].shape.clone();
        let needs = self.nodes[ia].needs_grad || self.nodes[ib].needs_grad;
        Ok(self.push(data, shape, needs, op(ia, ib)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary_elementwise("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary_elementwise("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn elementwise_mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary_elementwise("elementwise_mul", a, b, |x, y| x * y, Op::Mul)
    }

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let ia = self.check(a, "matmul")?;
        let ib = self.check(b, "matmul")?;
        let (sa, sb) = (&self.nodes[ia].shape, &self.nodes[ib].shape);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: shape_string(sa),
                rhs: shape_string(sb),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = matmul_raw(&self.nodes[ia].data, &self.nodes[ib].data, m, k, n);
        let needs = self.nodes[ia].needs_grad || self.nodes[ib].needs_grad;
        Ok(self.push(
            data,
            vec![m, n],
            needs,
            Op::MatMul {
                a: ia,
                b: ib,
                m,
                k,
                n,
            },
        ))
    }

    /// Gradient is 1 for positive entries and 0 at or below zero.
    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        let ix = self.check(x, "relu")?;
        let data: Vec<f64> = self.nodes[ix].data.iter().map(|&v| v.max(0.0)).collect();
        let shape = self.nodes[ix].shape.clone();
        let needs = self.nodes[ix].needs_grad;
        Ok(self.push(data, shape, needs, Op::Relu(ix)))
    }

    /// Gradient is 1 inside `[lo, hi]` (bounds included) and 0 outside.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var, TensorError> {
        if !(lo <= hi) {
            return Err(TensorError::Invalid {
                op: "clamp",
                msg: format!("lo {lo} must not exceed hi {hi}"),
            });
        }
        let ix = self.check(x, "clamp")?;
        let data: Vec<f64> = self.nodes[ix]
            .data
            .iter()
            .map(|&v| v.clamp(lo, hi))
            .collect();
        let shape = self.nodes[ix].shape.clone();
        let needs = self.nodes[ix].needs_grad;
        Ok(self.push(data, shape, needs, Op::Clamp { x: ix, lo, hi }))
    }

    pub fn scalar_mul(&mut self, x: Var, c: f64) -> Result<Var, TensorError> {
        let ix = self.check(x, "scalar_mul")?;
        let data: Vec<f64> = self.nodes[ix].data.iter().map(|&v| c * v).collect();
        let shape = self.nodes[ix].shape.clone();
        let needs = self.nodes[ix].needs_grad;
        Ok(self.push(data, shape, needs, Op::ScalarMul { x: ix, c }))
    }

    /// Replicates a leading extent-1 axis to `batch` copies, or fills
    /// `target_shape` from a single-element tensor.
    pub fn broadcast(&mut self, x: Var, target_shape: &[usize]) -> Result<Var, TensorError> {
        let ix = self.check(x, "broadcast")?;
        let src = &self.nodes[ix].shape;
        let numel: usize = src.iter().product();
        let scalar_fill = numel == 1;
        let batch_rep = !src.is_empty()
            && src[0] == 1
            && src.len() == target_shape.len()
            && src[1..] == target_shape[1..];
        if !scalar_fill && !batch_rep {
            return Err(TensorError::ShapeMismatch {
                op: "broadcast",
                lhs: shape_string(src),
                rhs: shape_string(target_shape),
            });
        }
        let target_numel: usize = target_shape.iter().product();
        let data = if scalar_fill && !batch_rep {
            vec![self.nodes[ix].data[0]; target_numel]
        } else {
            let chunk = &self.nodes[ix].data;
            let mut out = Vec::with_capacity(target_numel);
            for _ in 0..target_shape[0] {
                out.extend_from_slice(chunk);
            }
            out
        };
        let needs = self.nodes[ix].needs_grad;
        Ok(self.push(data, target_shape.to_vec(), needs, Op::Broadcast(ix)))
    }

    /// Row-major reinterpretation; element count must be preserved.
    pub fn reshape(&mut self, x: Var, new_shape: &[usize]) -> Result<Var, TensorError> {
        let ix = self.check(x, "reshape")?;
        let old_numel: usize = self.nodes[ix].shape.iter().product();
        let new_numel: usize = new_shape.iter().product();
        if old_numel != new_numel {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: shape_string(&self.nodes[ix].shape),
                rhs: shape_string(new_shape),
            });
        }
        let data = self.nodes[ix].data.clone();
        let needs = self.nodes[ix].needs_grad;
        Ok(self.push(data, new_shape.to_vec(), needs, Op::Reshape(ix)))
    }

    /// Concatenates tensors of equal rank along `axis`; all other extents
    /// must match.
    pub fn concat_along_axis(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        if inputs.is_empty() {
            return Err(TensorError::Invalid {
                op: "concat_along_axis",
                msg: "no inputs".into(),
            });
        }
        let idx: Vec<usize> = inputs
            .iter()
            .map(|&v| self.check(v, "concat_along_axis"))
            .collect::<Result<_, _>>()?;
        let first = self.nodes[idx[0]].shape.clone();
        if axis >= first.len() {
            return Err(TensorError::Invalid {
                op: "concat_along_axis",
                msg: format!("axis {axis} out of range for rank {}", first.len()),
            });
        }
        let mut axis_total = 0usize;
        for &i in &idx {
            let s = &self.nodes[i].shape;
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_along_axis",
                    lhs: shape_string(&first),
                    rhs: shape_string(s),
                });
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = vec![0.0; outer * axis_total * inner];
        let mut offset = 0usize;
        for &i in &idx {
            let e = self.nodes[i].shape[axis];
            let src = &self.nodes[i].data;
            for o in 0..outer {
                let src_start = o * e * inner;
                let dst_start = (o * axis_total + offset) * inner;
                data[dst_start..dst_start + e * inner]
                    .copy_from_slice(&src[src_start..src_start + e * inner]);
            }
            offset += e;
        }
        let needs = idx.iter().any(|&i| self.nodes[i].needs_grad);
        Ok(self.push(data, out_shape, needs, Op::Concat { inputs: idx, axis }))
    }

    /// Mean over the given axes; pooled axes are removed from the shape.
    pub fn mean_over_axes(&mut self, x: Var, axes: &[usize]) -> Result<Var, TensorError> {
        let ix = self.check(x, "mean_over_axes")?;
        let shape = self.nodes[ix].shape.clone();
        let rank = shape.len();
        let mut mask = vec![false; rank];
        for &a in axes {
            if a >= rank {
                return Err(TensorError::Invalid {
                    op: "mean_over_axes",
                    msg: format!("axis {a} out of range for rank {rank}"),
                });
            }
            if mask[a] {
                return Err(TensorError::Invalid {
                    op: "mean_over_axes",
                    msg: format!("axis {a} repeated"),
                });
            }
            mask[a] = true;
        }
        if axes.is_empty() {
            return Err(TensorError::Invalid {
                op: "mean_over_axes",
                msg: "no axes given".into(),
            });
        }
        let out_shape: Vec<usize> = shape
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| !m)
            .map(|(&d, _)| d)
            .collect();
        // Output stride per input axis, 0 for pooled axes.
        let mut out_strides = vec![0usize; rank];
        let mut acc = 1usize;
        for d in (0..rank).rev() {
            if !mask[d] {
                out_strides[d] = acc;
                acc *= shape[d];
            }
        }
        let pool_size: usize = shape
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(&d, _)| d)
            .product();
        let out_numel: usize = out_shape.iter().product();
        let mut sums = vec![0.0; out_numel];
        let src = &self.nodes[ix].data;
        let mut coords = vec![0usize; rank];
        let mut out_flat = 0usize;
        for &v in src {
            sums[out_flat] += v;
            // odometer increment over input coords, tracking the output index
            for d in (0..rank).rev() {
                coords[d] += 1;
                out_flat += out_strides[d];
                if coords[d] < shape[d] {
                    break;
                }
                out_flat -= out_strides[d] * shape[d];
                coords[d] = 0;
            }
        }
        let inv = 1.0 / pool_size as f64;
        for s in &mut sums {
            *s *= inv;
        }
        let needs = self.nodes[ix].needs_grad;
        Ok(self.push(
            sums,
            out_shape,
            needs,
            Op::MeanAxes {
                x: ix,
                out_strides,
                pool_size,
            },
        ))
    }

    /// Mean cross-entropy between `logits` `[B,N]` and integer `labels` `[B]`.
    /// Returns a rank-0 scalar.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
    ) -> Result<Var, TensorError> {
        let il = self.check(logits, "softmax_cross_entropy")?;
        let shape = self.nodes[il].shape.clone();
        if shape.len() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_cross_entropy",
                lhs: shape_string(&shape),
                rhs: "[BxN]".into(),
            });
        }
        let (b, n) = (shape[0], shape[1]);
        if labels.len() != b {
            return Err(TensorError::Invalid {
                op: "softmax_cross_entropy",
                msg: format!("{} labels for batch of {b}", labels.len()),
            });
        }
        for &y in labels {
            if y >= n {
                return Err(TensorError::LabelOutOfRange {
                    op: "softmax_cross_entropy",
                    label: y,
                    classes: n,
                });
            }
        }
        let z = &self.nodes[il].data;
        let mut probs = vec![0.0; b * n];
        let mut loss = 0.0;
        for r in 0..b {
            let row = &z[r * n..(r + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for &v in row {
                denom += (v - max).exp();
            }
            let lse = max + denom.ln();
            loss += lse - row[labels[r]];
            for c in 0..n {
                probs[r * n + c] = (row[c] - max).exp() / denom;
            }
        }
        loss /= b as f64;
        let needs = self.nodes[il].needs_grad;
        Ok(self.push(
            vec![loss],
            vec![],
            needs,
            Op::SoftmaxCrossEntropy {
                logits: il,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Sum of all entries, built from mean and scaling.
    pub fn sum_all(&mut self, x: Var) -> Result<Var, TensorError> {
        let numel: usize = self.shape(x).iter().product();
        let rank = self.shape(x).len();
        if rank == 0 {
            return self.scalar_mul(x, 1.0);
        }
        let axes: Vec<usize> = (0..rank).collect();
        let m = self.mean_over_axes(x, &axes)?;
        self.scalar_mul(m, numel as f64)
    }

    /// Accumulates `dloss/dleaf` on every reachable leaf that requires a
    /// gradient. `loss` must hold exactly one element. Errors if called twice
    /// on the same tape.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let il = self.check(loss, "backward")?;
        if self.backward_done {
            return Err(TensorError::BackwardAlreadyRun);
        }
        if self.nodes[il].data.len() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: shape_string(&self.nodes[il].shape),
            });
        }
        self.backward_done = true;
        self.nodes[il].grad = Some(vec![1.0]);
        for i in (0..=il).rev() {
            if self.nodes[i].grad.is_none() {
                continue;
            }
            self.step_backward(i);
        }
        Ok(())
    }

    fn ensure_grad(&mut self, node: usize) {
        if self.nodes[node].grad.is_none() {
            let len = self.nodes[node].data.len();
            self.nodes[node].grad = Some(vec![0.0; len]);
        }
    }

    fn add_to_grad(&mut self, node: usize, contribution: &[f64]) {
        if !self.nodes[node].needs_grad {
            return;
        }
        self.ensure_grad(node);
        let g = self.nodes[node].grad.as_mut().expect("just ensured");
        for (gv, &c) in g.iter_mut().zip(contribution) {
            *gv += c;
        }
    }

    fn step_backward(&mut self, i: usize) {
        let grad = match &self.nodes[i].grad {
            Some(g) => g.clone(),
            None => return,
        };
        // Moving the op out avoids aliasing the node list during accumulation.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.add_to_grad(*a, &grad);
                self.add_to_grad(*b, &grad);
            }
            Op::Sub(a, b) => {
                self.add_to_grad(*a, &grad);
                let neg: Vec<f64> = grad.iter().map(|&g| -g).collect();
                self.add_to_grad(*b, &neg);
            }
            Op::Mul(a, b) => {
                if self.nodes[*a].needs_grad {
                    let da: Vec<f64> = grad
                        .iter()
                        .zip(&self.nodes[*b].data)
                        .map(|(&g, &y)| g * y)
                        .collect();
                    self.add_to_grad(*a, &da);
                }
                if self.nodes[*b].needs_grad {
                    let db: Vec<f64> = grad
                        .iter()
                        .zip(&self.nodes[*a].data)
                        .map(|(&g, &x)| g * x)
                        .collect();
                    self.add_to_grad(*b, &db);
                }
            }
            Op::MatMul { a, b, m, k, n } => {
                if self.nodes[*a].needs_grad {
                    let da = matmul_nt(&grad, &self.nodes[*b].data, *m, *n, *k);
                    self.add_to_grad(*a, &da);
                }
                if self.nodes[*b].needs_grad {
                    let db = matmul_tn(&self.nodes[*a].data, &grad, *m, *k, *n);
                    self.add_to_grad(*b, &db);
                }
            }
            Op::Relu(x) => {
                if self.nodes[*x].needs_grad {
                    let dx: Vec<f64> = grad
                        .iter()
                        .zip(&self.nodes[*x].data)
                        .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
                        .collect();
                    self.add_to_grad(*x, &dx);
                }
            }
            Op::Clamp { x, lo, hi } => {
                if self.nodes[*x].needs_grad {
                    let dx: Vec<f64> = grad
                        .iter()
                        .zip(&self.nodes[*x].data)
                        .map(|(&g, &v)| if v >= *lo && v <= *hi { g } else { 0.0 })
                        .collect();
                    self.add_to_grad(*x, &dx);
                }
            }
            Op::ScalarMul { x, c } => {
                if self.nodes[*x].needs_grad {
                    let dx: Vec<f64> = grad.iter().map(|&g| g * c).collect();
                    self.add_to_grad(*x, &dx);
                }
            }
            Op::Broadcast(x) => {
                if self.nodes[*x].needs_grad {
                    let src_len = self.nodes[*x].data.len();
                    let mut dx = vec![0.0; src_len];
                    if src_len == 1 {
                        dx[0] = grad.iter().sum();
                    } else {
                        for (pos, &g) in grad.iter().enumerate() {
                            dx[pos % src_len] += g;
                        }
                    }
                    self.add_to_grad(*x, &dx);
                }
            }
            Op::Reshape(x) => {
                self.add_to_grad(*x, &grad);
            }
            Op::Concat { inputs, axis } => {
                let out_shape = self.nodes[i].shape.clone();
                let outer: usize = out_shape[..*axis].iter().product();
                let inner: usize = out_shape[*axis + 1..].iter().product();
                let axis_total = out_shape[*axis];
                let mut offset = 0usize;
                for &inp in inputs {
                    let e = self.nodes[inp].shape[*axis];
                    if self.nodes[inp].needs_grad {
                        let mut dx = vec![0.0; self.nodes[inp].data.len()];
                        for o in 0..outer {
                            let src_start = (o * axis_total + offset) * inner;
                            let dst_start = o * e * inner;
                            dx[dst_start..dst_start + e * inner]
                                .copy_from_slice(&grad[src_start..src_start + e * inner]);
                        }
                        self.add_to_grad(inp, &dx);
                    }
                    offset += e;
                }
            }
            Op::MeanAxes {
                x,
                out_strides,
                pool_size,
            } => {
                if self.nodes[*x].needs_grad {
                    let shape = self.nodes[*x].shape.clone();
                    let rank = shape.len();
                    let inv = 1.0 / *pool_size as f64;
                    let mut dx = vec![0.0; self.nodes[*x].data.len()];
                    let mut coords = vec![0usize; rank];
                    let mut out_flat = 0usize;
                    for slot in dx.iter_mut() {
                        *slot = grad[out_flat] * inv;
                        for d in (0..rank).rev() {
                            coords[d] += 1;
                            out_flat += out_strides[d];
                            if coords[d] < shape[d] {
                                break;
                            }
                            out_flat -= out_strides[d] * shape[d];
                            coords[d] = 0;
                        }
                    }
                    self.add_to_grad(*x, &dx);
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                if self.nodes[*logits].needs_grad {
                    let b = labels.len();
                    let n = self.nodes[*logits].shape[1];
                    let scale = grad[0] / b as f64;
                    let mut dz = probs.clone();
                    for (r, &y) in labels.iter().enumerate() {
                        dz[r * n + y] -= 1.0;
                    }
                    for v in &mut dz {
                        *v *= scale;
                    }
                    self.add_to_grad(*logits, &dz);
                }
            }
        }
        self.nodes[i].op = op;
    }
}

/// `a[m,k] * b[k,n]`, accumulating row by row.
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a[m,n] * b[k,n]^T -> [m,k]`.
fn matmul_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            let mut s = 0.0;
            for (&x, &y) in a_row.iter().zip(b_row) {
                s += x * y;
            }
            out[i * k + p] = s;
        }
    }
    out
}

/// `a[m,k]^T * g[m,n] -> [k,n]`.
fn matmul_tn(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let g_row = &g[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o += av * gv;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_matches_frozen_example() {
        let mut tape = Tape::new();
        let a = tape.leaf(&t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]), false);
        let b = tape.leaf(&t(&[2, 2], &[5.0, 6.0, 7.0, 8.0]), false);
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_matches_naive_triple_loop_oracle() {
        // Independent reference: the textbook i-j-p loop.
        fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
            let mut c = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    let mut s = 0.0;
                    for p in 0..k {
                        s += a[i * k + p] * b[p * n + j];
                    }
                    c[i * n + j] = s;
                }
            }
            c
        }
        let mut rng = crate::rng::Rng::new(11);
        for _ in 0..30 {
            let (m, k, n) = (
                1 + rng.below(5),
                1 + rng.below(5),
                1 + rng.below(5),
            );
            let a: Vec<f64> = (0..m * k).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
            let b: Vec<f64> = (0..k * n).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
            let expect = naive(&a, &b, m, k, n);
            let got = matmul_raw(&a, &b, m, k, n);
            for (x, y) in got.iter().zip(&expect) {
                assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn elementwise_mul_by_ones_is_identity() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, 9.0]), false);
        let ones = tape.leaf(&Tensor::filled(vec![2, 3], 1.0), false);
        let y = tape.elementwise_mul(x, ones).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn mean_of_constant_tensor_is_that_constant() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::filled(vec![2, 3, 4], 2.5), false);
        for axes in [vec![0], vec![1, 2], vec![0, 1, 2]] {
            let m = tape.mean_over_axes(x, &axes).unwrap();
            for &v in tape.value(m) {
                assert_eq!(v, 2.5);
            }
        }
    }

    #[test]
    fn mean_then_broadcast_back_is_identity_on_axis_constant_input() {
        // Constant along axis 0, arbitrary elsewhere.
        let mut tape = Tape::new();
        let row = [0.3, -1.7, 2.2];
        let data: Vec<f64> = row.iter().chain(&row).chain(&row).copied().collect();
        let x = tape.leaf(&t(&[3, 3], &data), false);
        let m = tape.mean_over_axes(x, &[0]).unwrap();
        let m1 = tape.reshape(m, &[1, 3]).unwrap();
        let back = tape.broadcast(m1, &[3, 3]).unwrap();
        let orig = tape.value(x).to_vec();
        for (a, b) in tape.value(back).iter().zip(&orig) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let run = || {
            let mut tape = Tape::new();
            let x = tape.leaf(&t(&[2, 2], &[0.1, 0.2, 0.3, 0.4]), false);
            let w = tape.leaf(&t(&[2, 2], &[1.5, -0.5, 2.0, 0.25]), false);
            let h = tape.matmul(x, w).unwrap();
            let r = tape.relu(h).unwrap();
            let l = tape.softmax_cross_entropy(r, &[0, 1]).unwrap();
            tape.value(l)[0].to_bits()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sum_backward_gives_all_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[2, 3], &[5.0, -1.0, 0.0, 2.0, 2.0, 7.0]), true);
        let s = tape.sum_all(x).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn symmetric_logits_cross_entropy_gradient() {
        let mut tape = Tape::new();
        let z = tape.leaf(&t(&[1, 2], &[0.0, 0.0]), true);
        let l = tape.softmax_cross_entropy(z, &[0]).unwrap();
        assert!((tape.value(l)[0] - 2.0f64.ln()).abs() < 1e-15);
        tape.backward(l).unwrap();
        let g = tape.grad(z).unwrap();
        assert!((g[0] + 0.5).abs() < 1e-15);
        assert!((g[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uniform_logits_loss_is_ln_n() {
        let mut tape = Tape::new();
        for n in [2usize, 3, 7] {
            let z = tape.leaf(&Tensor::filled(vec![2, n], 0.7), false);
            let l = tape.softmax_cross_entropy(z, &[0, n - 1]).unwrap();
            assert!((tape.value(l)[0] - (n as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn label_out_of_range_rejected() {
        let mut tape = Tape::new();
        let z = tape.leaf(&t(&[1, 3], &[0.0, 0.0, 0.0]), false);
        let err = tape.softmax_cross_entropy(z, &[3]).unwrap_err();
        assert!(matches!(err, TensorError::LabelOutOfRange { label: 3, .. }));
    }

    #[test]
    fn shape_mismatch_diagnostic_names_op_and_shapes() {
        let mut tape = Tape::new();
        let a = tape.leaf(&Tensor::zeros(vec![2, 3]), false);
        let b = tape.leaf(&Tensor::zeros(vec![3, 3]), false);
        let err = tape.add(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("add"), "{msg}");
        assert!(msg.contains("[2x3]"), "{msg}");
        assert!(msg.contains("[3x3]"), "{msg}");
    }

    #[test]
    fn backward_twice_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::scalar(2.0), true);
        let y = tape.scalar_mul(x, 3.0).unwrap();
        tape.backward(y).unwrap();
        assert!(matches!(
            tape.backward(y),
            Err(TensorError::BackwardAlreadyRun)
        ));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::zeros(vec![2]), true);
        assert!(matches!(
            tape.backward(x),
            Err(TensorError::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn foreign_tensor_rejected() {
        let mut tape_a = Tape::new();
        let mut tape_b = Tape::new();
        let x = tape_a.leaf(&Tensor::scalar(1.0), false);
        let y = tape_b.leaf(&Tensor::scalar(1.0), false);
        assert!(matches!(
            tape_b.add(x, y),
            Err(TensorError::ForeignTensor { .. })
        ));
    }

    #[test]
    fn relu_gradient_is_zero_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[3], &[-1.0, 0.0, 2.0]), true);
        let r = tape.relu(x).unwrap();
        let s = tape.sum_all(r).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn clamp_gradient_is_one_at_exact_bounds() {
        let mut tape = Tape::new();
        let x = tape.leaf(&t(&[5], &[-0.5, 0.0, 0.5, 1.0, 1.5]), true);
        let c = tape.clamp(x, 0.0, 1.0).unwrap();
        let s = tape.sum_all(c).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.0, 1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn broadcast_replicates_leading_axis_and_sums_gradient() {
        let mut tape = Tape::new();
        let w = tape.leaf(&t(&[1, 2], &[3.0, -1.0]), true);
        let b = tape.broadcast(w, &[4, 2]).unwrap();
        assert_eq!(tape.value(b), &[3.0, -1.0, 3.0, -1.0, 3.0, -1.0, 3.0, -1.0]);
        let s = tape.sum_all(b).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[4.0, 4.0]);
    }

    #[test]
    fn concat_splits_gradient_between_inputs() {
        let mut tape = Tape::new();
        let a = tape.leaf(&t(&[2, 1], &[1.0, 2.0]), true);
        let b = tape.leaf(&t(&[2, 2], &[10.0, 20.0, 30.0, 40.0]), true);
        let c = tape.concat_along_axis(&[a, b], 1).unwrap();
        assert_eq!(tape.shape(c), &[2, 3]);
        assert_eq!(tape.value(c), &[1.0, 10.0, 20.0, 2.0, 30.0, 40.0]);
        let w = tape.leaf(&t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), false);
        let p = tape.elementwise_mul(c, w).unwrap();
        let s = tape.sum_all(p).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(a).unwrap(), &[1.0, 4.0]);
        assert_eq!(tape.grad(b).unwrap(), &[2.0, 3.0, 5.0, 6.0]);
    }

    #[test]
    fn mean_over_middle_axis_keeps_outer_order() {
        let mut tape = Tape::new();
        // shape [2,2,2]: mean over axis 1
        let x = tape.leaf(
            &t(&[2, 2, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]),
            true,
        );
        let m = tape.mean_over_axes(x, &[1]).unwrap();
        assert_eq!(tape.shape(m), &[2, 2]);
        assert_eq!(tape.value(m), &[2.0, 3.0, 6.0, 7.0]);
        let s = tape.sum_all(m).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.5; 8]);
    }
}
