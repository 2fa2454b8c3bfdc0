//! Reverse-mode automatic differentiation over `ndarray` tensors.
//!
//! The tape records every operation as a node. `Tape::grad` walks the graph
//! in reverse and *builds the adjoint computation as new tape nodes*, so the
//! result of a backward pass is itself differentiable. That is what makes the
//! gradient-penalty term (a function of an input gradient) trainable and
//! testable against finite differences.
//!
//! All shape handling is panicking: a shape mismatch inside the engine is a
//! programming error, not a runtime condition. Public modules validate their
//! inputs before touching the tape.

mod conv;
pub mod gradcheck;
mod ops;

pub use conv::ConvGeom;

use crate::scalar::Scalar;
use ndarray::{ArrayD, IxDyn};
use ops::Op;
use std::cell::RefCell;

struct Node<T: Scalar> {
    value: ArrayD<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records a computation graph; create one per training step.
pub struct Tape<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Handle to a tape node. Cheap to copy; tied to the tape's lifetime.
#[derive(Clone, Copy)]
pub struct Var<'t, T: Scalar> {
    tape: &'t Tape<T>,
    pub(crate) id: usize,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: ArrayD<T>, op: Op<T>, requires_grad: bool) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        nodes.len() - 1
    }

    fn var(&self, id: usize) -> Var<'_, T> {
        Var { tape: self, id }
    }

    fn rg(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    fn value_of<R>(&self, id: usize, f: impl FnOnce(&ArrayD<T>) -> R) -> R {
        f(&self.nodes.borrow()[id].value)
    }

    fn shape_of(&self, id: usize) -> Vec<usize> {
        self.nodes.borrow()[id].value.shape().to_vec()
    }

    /// Insert a constant (gradient does not flow into it).
    pub fn constant(&self, value: ArrayD<T>) -> Var<'_, T> {
        let id = self.push(value, Op::Leaf, false);
        self.var(id)
    }

    /// Insert a leaf that gradients can be taken with respect to.
    pub fn param(&self, value: ArrayD<T>) -> Var<'_, T> {
        let id = self.push(value, Op::Leaf, true);
        self.var(id)
    }

    pub fn scalar_const(&self, value: T) -> Var<'_, T> {
        self.constant(ArrayD::from_elem(IxDyn(&[]), value))
    }

    fn unary(&self, op: Op<T>, parent: usize, value: ArrayD<T>) -> Var<'_, T> {
        let rg = self.rg(parent);
        let id = self.push(value, op, rg);
        self.var(id)
    }

    fn binary(&self, op: Op<T>, a: usize, b: usize, value: ArrayD<T>) -> Var<'_, T> {
        let rg = self.rg(a) || self.rg(b);
        let id = self.push(value, op, rg);
        self.var(id)
    }

    /// Gradient of a scalar `output` with respect to each entry of `wrt`.
    ///
    /// Adjoints are built as tape nodes, so they can be differentiated again.
    /// Entries of `wrt` that the output does not depend on (or that do not
    /// require grad) come back as `None`.
    pub fn grad<'t>(&'t self, output: Var<'t, T>, wrt: &[Var<'t, T>]) -> Vec<Option<Var<'t, T>>> {
        assert!(
            self.shape_of(output.id).is_empty(),
            "grad target must be a scalar node"
        );
        let mut adj: Vec<Option<usize>> = vec![None; output.id + 1];
        adj[output.id] = Some(self.constant(ArrayD::from_elem(IxDyn(&[]), T::one())).id);

        for id in (0..=output.id).rev() {
            let Some(gid) = adj[id] else { continue };
            if !self.rg(id) {
                continue;
            }
            let op = self.nodes.borrow()[id].op.clone();
            let contributions = ops::backward(self, &op, id, gid);
            for (pid, contrib) in contributions {
                if !self.rg(pid) {
                    continue;
                }
                adj[pid] = Some(match adj[pid] {
                    None => contrib,
                    Some(existing) => self.var(existing).add(self.var(contrib)).id,
                });
            }
        }

        wrt.iter()
            .map(|v| adj.get(v.id).copied().flatten().map(|gid| self.var(gid)))
            .collect()
    }
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn tape(self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(self) -> ArrayD<T> {
        self.tape.value_of(self.id, |v| v.clone())
    }

    pub fn shape(self) -> Vec<usize> {
        self.tape.shape_of(self.id)
    }

    /// Extract the value of a 0-dim node.
    pub fn scalar(self) -> T {
        self.tape.value_of(self.id, |v| {
            assert!(v.ndim() == 0, "scalar() on non-scalar node");
            *v.first().unwrap()
        })
    }

    pub fn requires_grad(self) -> bool {
        self.tape.rg(self.id)
    }

    /// Same value, but gradient flow stops here.
    pub fn detach(self) -> Var<'t, T> {
        self.tape.constant(self.value())
    }

    pub fn add(self, rhs: Var<'t, T>) -> Var<'t, T> {
        let v = self
            .tape
            .value_of(self.id, |a| self.tape.value_of(rhs.id, |b| a + b));
        self.tape.binary(Op::Add(self.id, rhs.id), self.id, rhs.id, v)
    }

    pub fn sub(self, rhs: Var<'t, T>) -> Var<'t, T> {
        let v = self
            .tape
            .value_of(self.id, |a| self.tape.value_of(rhs.id, |b| a - b));
        self.tape.binary(Op::Sub(self.id, rhs.id), self.id, rhs.id, v)
    }

    pub fn mul(self, rhs: Var<'t, T>) -> Var<'t, T> {
        let v = self
            .tape
            .value_of(self.id, |a| self.tape.value_of(rhs.id, |b| a * b));
        self.tape.binary(Op::Mul(self.id, rhs.id), self.id, rhs.id, v)
    }

    pub fn neg(self) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| a.mapv(|x| -x));
        self.tape.unary(Op::Neg(self.id), self.id, v)
    }

    pub fn scale(self, c: T) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| a.mapv(|x| x * c));
        self.tape.unary(Op::Scale(self.id, c), self.id, v)
    }

    pub fn add_scalar(self, c: T) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| a.mapv(|x| x + c));
        self.tape.unary(Op::AddScalar(self.id), self.id, v)
    }

    pub fn recip(self) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| a.mapv(|x| x.recip()));
        self.tape.unary(Op::Recip(self.id), self.id, v)
    }

    pub fn sqr(self) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| a.mapv(|x| x * x));
        self.tape.unary(Op::Sqr(self.id), self.id, v)
    }

    pub fn sqrt(self) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| a.mapv(|x| x.sqrt()));
        self.tape.unary(Op::Sqrt(self.id), self.id, v)
    }

    pub fn exp(self) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| a.mapv(|x| x.exp()));
        self.tape.unary(Op::Exp(self.id), self.id, v)
    }

    pub fn ln(self) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| a.mapv(|x| x.ln()));
        self.tape.unary(Op::Ln(self.id), self.id, v)
    }

    pub fn tanh(self) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| a.mapv(|x| x.tanh()));
        self.tape.unary(Op::Tanh(self.id), self.id, v)
    }

    pub fn sigmoid(self) -> Var<'t, T> {
        let one = T::one();
        let v = self
            .tape
            .value_of(self.id, |a| a.mapv(|x| one / (one + (-x).exp())));
        self.tape.unary(Op::Sigmoid(self.id), self.id, v)
    }

    pub fn leaky_relu(self, slope: T) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| {
            a.mapv(|x| if x > T::zero() { x } else { x * slope })
        });
        self.tape.unary(Op::LeakyRelu(self.id, slope), self.id, v)
    }

    pub fn relu(self) -> Var<'t, T> {
        self.leaky_relu(T::zero())
    }

    pub fn abs(self) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| a.mapv(|x| x.abs()));
        self.tape.unary(Op::Abs(self.id), self.id, v)
    }

    pub fn clamp_min(self, c: T) -> Var<'t, T> {
        let v = self
            .tape
            .value_of(self.id, |a| a.mapv(|x| if x < c { c } else { x }));
        self.tape.unary(Op::ClampMin(self.id, c), self.id, v)
    }

    /// 2-d matrix product.
    pub fn matmul(self, rhs: Var<'t, T>) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| {
            self.tape.value_of(rhs.id, |b| {
                let a2 = a.view().into_dimensionality::<ndarray::Ix2>().unwrap();
                let b2 = b.view().into_dimensionality::<ndarray::Ix2>().unwrap();
                a2.dot(&b2).into_dyn()
            })
        });
        self.tape
            .binary(Op::MatMul(self.id, rhs.id), self.id, rhs.id, v)
    }

    /// 2-d transpose (copies into standard layout).
    pub fn t(self) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| {
            a.view()
                .into_dimensionality::<ndarray::Ix2>()
                .unwrap()
                .t()
                .as_standard_layout()
                .to_owned()
                .into_dyn()
        });
        self.tape.unary(Op::Transpose2(self.id), self.id, v)
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| {
            a.clone().into_shape_clone(IxDyn(shape)).unwrap()
        });
        self.tape.unary(Op::Reshape(self.id), self.id, v)
    }

    pub fn permute(self, axes: &[usize]) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| {
            a.view()
                .permuted_axes(IxDyn(axes))
                .as_standard_layout()
                .to_owned()
        });
        self.tape
            .unary(Op::Permute(self.id, axes.to_vec()), self.id, v)
    }

    /// Broadcast to `shape` with ndarray right-aligned semantics.
    pub fn broadcast(self, shape: &[usize]) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| {
            a.broadcast(IxDyn(shape))
                .unwrap_or_else(|| panic!("cannot broadcast {:?} to {:?}", a.shape(), shape))
                .as_standard_layout()
                .to_owned()
        });
        self.tape.unary(Op::Broadcast(self.id), self.id, v)
    }

    /// Sum down to `shape`; exact adjoint of `broadcast`.
    pub fn sum_to(self, shape: &[usize]) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| ops::sum_to_array(a, shape));
        self.tape.unary(Op::SumTo(self.id), self.id, v)
    }

    pub fn sum_all(self) -> Var<'t, T> {
        self.sum_to(&[])
    }

    pub fn mean_all(self) -> Var<'t, T> {
        let n = self.tape.value_of(self.id, |a| a.len());
        self.sum_all().scale(T::from_f64(1.0 / n as f64))
    }

    /// (N,C,H,W) -> (N*OH*OW, C*KH*KW) patch matrix.
    pub fn im2col(self, geom: ConvGeom) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| conv::im2col(a, geom));
        self.tape.unary(Op::Im2Col(self.id, geom), self.id, v)
    }

    /// (N*OH*OW, C*KH*KW) -> (N,C,H,W) scatter-add; exact adjoint of `im2col`.
    pub fn col2im(self, geom: ConvGeom) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| conv::col2im(a, geom));
        self.tape.unary(Op::Col2Im(self.id, geom), self.id, v)
    }

    /// (N,C) + idx[N] -> (N,1): per-row column pick.
    pub fn gather_cols(self, idx: &[usize]) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| {
            let a2 = a.view().into_dimensionality::<ndarray::Ix2>().unwrap();
            assert_eq!(a2.nrows(), idx.len(), "gather_cols index length");
            let mut out = ndarray::Array2::<T>::zeros((a2.nrows(), 1));
            for (r, &c) in idx.iter().enumerate() {
                out[(r, 0)] = a2[(r, c)];
            }
            out.into_dyn()
        });
        self.tape
            .unary(Op::GatherCols(self.id, idx.to_vec()), self.id, v)
    }

    /// (N,1) + idx[N] -> (N,c): scatter into zeros; adjoint of `gather_cols`.
    pub fn scatter_cols(self, idx: &[usize], num_cols: usize) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| {
            let a2 = a.view().into_dimensionality::<ndarray::Ix2>().unwrap();
            let mut out = ndarray::Array2::<T>::zeros((a2.nrows(), num_cols));
            for (r, &c) in idx.iter().enumerate() {
                out[(r, c)] = a2[(r, 0)];
            }
            out.into_dyn()
        });
        self.tape
            .unary(Op::ScatterCols(self.id, idx.to_vec()), self.id, v)
    }

    /// Concatenate along the channel axis (axis 1).
    pub fn concat_c(self, others: &[Var<'t, T>]) -> Var<'t, T> {
        let mut ids = vec![self.id];
        ids.extend(others.iter().map(|v| v.id));
        let nodes = self.tape.nodes.borrow();
        let views: Vec<_> = ids.iter().map(|&i| nodes[i].value.view()).collect();
        let v = ndarray::concatenate(ndarray::Axis(1), &views).expect("concat_c shape mismatch");
        let rg = ids.iter().any(|&i| nodes[i].requires_grad);
        drop(nodes);
        let id = self.tape.push(v, Op::ConcatC(ids), rg);
        self.tape.var(id)
    }

    /// Channels `[start, start+len)` along axis 1.
    pub fn slice_c(self, start: usize, len: usize) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| {
            a.slice_axis(ndarray::Axis(1), ndarray::Slice::from(start..start + len))
                .as_standard_layout()
                .to_owned()
        });
        self.tape
            .unary(Op::SliceC(self.id, start, len), self.id, v)
    }

    /// Embed into `total_c` channels of zeros at offset `start`; adjoint of `slice_c`.
    pub fn pad_c(self, start: usize, total_c: usize) -> Var<'t, T> {
        let v = self.tape.value_of(self.id, |a| {
            let mut shape = a.shape().to_vec();
            let len = shape[1];
            shape[1] = total_c;
            let mut out = ArrayD::<T>::zeros(IxDyn(&shape));
            out.slice_axis_mut(ndarray::Axis(1), ndarray::Slice::from(start..start + len))
                .assign(a);
            out
        });
        self.tape
            .unary(Op::PadC(self.id, start, total_c), self.id, v)
    }

    /// Numerically stable softplus: log(1 + e^x).
    pub fn softplus(self) -> Var<'t, T> {
        // max(x,0) + ln(1 + exp(-|x|))
        let pos = self.relu();
        let small = self.abs().neg().exp().add_scalar(T::one()).ln();
        pos.add(small)
    }

    /// Row-wise log-softmax over a (N,C) matrix.
    pub fn log_softmax(self) -> Var<'t, T> {
        let shape = self.shape();
        assert_eq!(shape.len(), 2, "log_softmax expects (N,C)");
        let n = shape[0];
        // Shift by a detached row max: exact invariance of the result, and the
        // gradient of the shifted expression equals the true gradient.
        let row_max = self.tape.constant(self.tape.value_of(self.id, |a| {
            let a2 = a.view().into_dimensionality::<ndarray::Ix2>().unwrap();
            let mut m = ndarray::Array2::<T>::zeros((a2.nrows(), 1));
            for (r, row) in a2.outer_iter().enumerate() {
                m[(r, 0)] = row.iter().cloned().fold(T::neg_infinity(), T::max);
            }
            m.into_dyn()
        }));
        let z = self.sub(row_max.broadcast(&shape));
        let lse = z.exp().sum_to(&[n, 1]).ln();
        z.sub(lse.broadcast(&shape))
    }

    /// Row-wise softmax over a (N,C) matrix.
    pub fn softmax(self) -> Var<'t, T> {
        self.log_softmax().exp()
    }
}

impl<'t, T: Scalar> std::ops::Add for Var<'t, T> {
    type Output = Var<'t, T>;
    fn add(self, rhs: Self) -> Self::Output {
        Var::add(self, rhs)
    }
}

impl<'t, T: Scalar> std::ops::Sub for Var<'t, T> {
    type Output = Var<'t, T>;
    fn sub(self, rhs: Self) -> Self::Output {
        Var::sub(self, rhs)
    }
}

impl<'t, T: Scalar> std::ops::Mul for Var<'t, T> {
    type Output = Var<'t, T>;
    fn mul(self, rhs: Self) -> Self::Output {
        Var::mul(self, rhs)
    }
}

impl<'t, T: Scalar> std::ops::Neg for Var<'t, T> {
    type Output = Var<'t, T>;
    fn neg(self) -> Self::Output {
        Var::neg(self)
    }
}
