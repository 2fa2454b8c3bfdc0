use super::conv::ConvGeom;
use super::Tape;
use crate::scalar::Scalar;
use ndarray::{ArrayD, Axis};

#[derive(Clone)]
pub(crate) enum Op<T: Scalar> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, T),
    AddScalar(usize),
    Recip(usize),
    Sqr(usize),
    Sqrt(usize),
    Exp(usize),
    Ln(usize),
    Tanh(usize),
    Sigmoid(usize),
    LeakyRelu(usize, T),
    Abs(usize),
    ClampMin(usize, T),
    MatMul(usize, usize),
    Transpose2(usize),
    Reshape(usize),
    Permute(usize, Vec<usize>),
    Broadcast(usize),
    SumTo(usize),
    Im2Col(usize, ConvGeom),
    Col2Im(usize, ConvGeom),
    GatherCols(usize, Vec<usize>),
    ScatterCols(usize, Vec<usize>),
    ConcatC(Vec<usize>),
    SliceC(usize, usize, usize),
    PadC(usize, usize, usize),
}

/// Sum `a` down so that its shape becomes `target` (adjoint of broadcast).
pub(crate) fn sum_to_array<T: Scalar>(a: &ArrayD<T>, target: &[usize]) -> ArrayD<T> {
    let mut out = a.to_owned();
    // Collapse extra leading axes first.
    while out.ndim() > target.len() {
        out = out.sum_axis(Axis(0));
    }
    // Then collapse axes the target keeps at size 1.
    for ax in 0..target.len() {
        if target[ax] == 1 && out.shape()[ax] != 1 {
            let summed = out.sum_axis(Axis(ax));
            out = summed.insert_axis(Axis(ax));
        }
    }
    assert_eq!(out.shape(), target, "sum_to shape mismatch");
    out.as_standard_layout().to_owned()
}

/// Build the adjoint contributions of one node as new tape nodes.
///
/// `out` is the node being differentiated through, `g` the id of its adjoint.
/// Returns `(parent_id, contribution_node_id)` pairs.
pub(crate) fn backward<T: Scalar>(
    tape: &Tape<T>,
    op: &Op<T>,
    out: usize,
    g: usize,
) -> Vec<(usize, usize)> {
    let g = tape.var(g);
    let y = tape.var(out);
    match op {
        Op::Leaf => vec![],
        Op::Add(a, b) => vec![(*a, g.id), (*b, g.id)],
        Op::Sub(a, b) => vec![(*a, g.id), (*b, g.neg().id)],
        Op::Mul(a, b) => {
            let va = tape.var(*a);
            let vb = tape.var(*b);
            vec![(*a, (g * vb).id), (*b, (g * va).id)]
        }
        Op::Neg(a) => vec![(*a, g.neg().id)],
        Op::Scale(a, c) => vec![(*a, g.scale(*c).id)],
        Op::AddScalar(a) => vec![(*a, g.id)],
        Op::Recip(a) => {
            // d(1/x) = -y^2 dx, with y the stored output
            vec![(*a, (g * y.sqr()).neg().id)]
        }
        Op::Sqr(a) => {
            let va = tape.var(*a);
            vec![(*a, (g * va).scale(T::from_f64(2.0)).id)]
        }
        Op::Sqrt(a) => {
            // d sqrt = g / (2 y)
            vec![(*a, (g * y.recip()).scale(T::from_f64(0.5)).id)]
        }
        Op::Exp(a) => vec![(*a, (g * y).id)],
        Op::Ln(a) => {
            let va = tape.var(*a);
            vec![(*a, (g * va.recip()).id)]
        }
        Op::Tanh(a) => {
            let one_minus = y.sqr().neg().add_scalar(T::one());
            vec![(*a, (g * one_minus).id)]
        }
        Op::Sigmoid(a) => {
            let d = y * y.neg().add_scalar(T::one());
            vec![(*a, (g * d).id)]
        }
        Op::LeakyRelu(a, slope) => {
            let slope = *slope;
            let mask = tape.constant(tape.value_of(*a, |v| {
                v.mapv(|x| if x > T::zero() { T::one() } else { slope })
            }));
            vec![(*a, (g * mask).id)]
        }
        Op::Abs(a) => {
            let sign = tape.constant(tape.value_of(*a, |v| {
                v.mapv(|x| {
                    if x > T::zero() {
                        T::one()
                    } else if x < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    }
                })
            }));
            vec![(*a, (g * sign).id)]
        }
        Op::ClampMin(a, c) => {
            let c = *c;
            let mask = tape.constant(tape.value_of(*a, |v| {
                v.mapv(|x| if x >= c { T::one() } else { T::zero() })
            }));
            vec![(*a, (g * mask).id)]
        }
        Op::MatMul(a, b) => {
            let va = tape.var(*a);
            let vb = tape.var(*b);
            vec![(*a, g.matmul(vb.t()).id), (*b, va.t().matmul(g).id)]
        }
        Op::Transpose2(a) => vec![(*a, g.t().id)],
        Op::Reshape(a) => {
            let shape = tape.shape_of(*a);
            vec![(*a, g.reshape(&shape).id)]
        }
        Op::Permute(a, axes) => {
            let mut inverse = vec![0usize; axes.len()];
            for (i, &ax) in axes.iter().enumerate() {
                inverse[ax] = i;
            }
            vec![(*a, g.permute(&inverse).id)]
        }
        Op::Broadcast(a) => {
            let shape = tape.shape_of(*a);
            vec![(*a, g.sum_to(&shape).id)]
        }
        Op::SumTo(a) => {
            let shape = tape.shape_of(*a);
            vec![(*a, g.broadcast(&shape).id)]
        }
        Op::Im2Col(a, geom) => vec![(*a, g.col2im(*geom).id)],
        Op::Col2Im(a, geom) => vec![(*a, g.im2col(*geom).id)],
        Op::GatherCols(a, idx) => {
            let cols = tape.shape_of(*a)[1];
            vec![(*a, g.scatter_cols(idx, cols).id)]
        }
        Op::ScatterCols(a, idx) => vec![(*a, g.gather_cols(idx).id)],
        Op::ConcatC(parts) => {
            let mut out = Vec::with_capacity(parts.len());
            let mut start = 0usize;
            for &p in parts {
                let len = tape.shape_of(p)[1];
                out.push((p, g.slice_c(start, len).id));
                start += len;
            }
            out
        }
        Op::SliceC(a, start, _len) => {
            let total = tape.shape_of(*a)[1];
            vec![(*a, g.pad_c(*start, total).id)]
        }
        Op::PadC(a, start, _total) => {
            let len = tape.shape_of(*a)[1];
            vec![(*a, g.slice_c(*start, len).id)]
        }
    }
}
