//! Specialized kernels for the hot tensor-shuffling paths. ndarray's generic
//! dynamic-dimension iteration is an order of magnitude slower than manual
//! slice loops for the shapes the conv stack hits every layer, so `permute`,
//! `broadcast`, and `sum_to` dispatch here first and fall back to the generic
//! route for anything unusual.

use crate::scalar::Scalar;
use ndarray::{ArrayD, IxDyn};

/// Permute a standard-layout 4-d array by `axes`, writing a standard-layout
/// result. Returns `None` when the input is not contiguous 4-d.
pub(crate) fn permute4<T: Scalar>(a: &ArrayD<T>, axes: &[usize]) -> Option<ArrayD<T>> {
    if a.ndim() != 4 || axes.len() != 4 {
        return None;
    }
    let src = a.as_slice()?;
    let d = a.shape();
    let out_shape = [d[axes[0]], d[axes[1]], d[axes[2]], d[axes[3]]];
    // source strides (in elements) of the axes in output order
    let src_strides = [
        stride_of(d, axes[0]),
        stride_of(d, axes[1]),
        stride_of(d, axes[2]),
        stride_of(d, axes[3]),
    ];
    let mut out = Vec::with_capacity(src.len());
    let inner_stride = src_strides[3];
    for i0 in 0..out_shape[0] {
        let b0 = i0 * src_strides[0];
        for i1 in 0..out_shape[1] {
            let b1 = b0 + i1 * src_strides[1];
            for i2 in 0..out_shape[2] {
                let b2 = b1 + i2 * src_strides[2];
                if inner_stride == 1 {
                    out.extend_from_slice(&src[b2..b2 + out_shape[3]]);
                } else {
                    for i3 in 0..out_shape[3] {
                        out.push(src[b2 + i3 * inner_stride]);
                    }
                }
            }
        }
    }
    Some(ArrayD::from_shape_vec(IxDyn(&out_shape), out).unwrap())
}

fn stride_of(shape: &[usize], axis: usize) -> usize {
    shape[axis + 1..].iter().product()
}

/// Broadcast a standard-layout array to `target` when both have the same
/// rank and every expanded axis has source size 1 (right-aligned semantics
/// with equal ndim). Returns `None` otherwise.
pub(crate) fn broadcast_fast<T: Scalar>(a: &ArrayD<T>, target: &[usize]) -> Option<ArrayD<T>> {
    if a.ndim() == 0 {
        let v = *a.first().unwrap();
        return Some(ArrayD::from_elem(IxDyn(target), v));
    }
    if a.ndim() != target.len() {
        return None;
    }
    let src_shape = a.shape().to_vec();
    for (s, t) in src_shape.iter().zip(target) {
        if s != t && *s != 1 {
            return None;
        }
    }
    let src = a.as_slice()?;
    // grow axis by axis from the innermost
    let mut current = src.to_vec();
    let mut cur_shape = src_shape.clone();
    for ax in (0..target.len()).rev() {
        if cur_shape[ax] == target[ax] {
            continue;
        }
        // tile along ax: the block below ax is contiguous
        let inner: usize = cur_shape[ax + 1..].iter().product();
        let outer: usize = cur_shape[..ax].iter().product();
        let reps = target[ax];
        let mut next = Vec::with_capacity(outer * reps * inner);
        for o in 0..outer {
            let block = &current[o * inner..(o + 1) * inner];
            if inner == 1 {
                next.extend(std::iter::repeat(block[0]).take(reps));
            } else {
                for _ in 0..reps {
                    next.extend_from_slice(block);
                }
            }
        }
        current = next;
        cur_shape[ax] = reps;
    }
    Some(ArrayD::from_shape_vec(IxDyn(target), current).unwrap())
}

/// Sum a standard-layout array down to `target` (adjoint of `broadcast_fast`).
/// Handles the scalar target and same-rank reductions; `None` otherwise.
pub(crate) fn sum_to_fast<T: Scalar>(a: &ArrayD<T>, target: &[usize]) -> Option<ArrayD<T>> {
    let src = a.as_slice()?;
    if target.is_empty() {
        let mut acc = T::zero();
        for &v in src {
            acc = acc + v;
        }
        return Some(ArrayD::from_elem(IxDyn(&[]), acc));
    }
    if a.ndim() != target.len() {
        return None;
    }
    let shape = a.shape().to_vec();
    for (s, t) in shape.iter().zip(target) {
        if s != t && *t != 1 {
            return None;
        }
    }
    // collapse axis by axis from the innermost
    let mut current = src.to_vec();
    let mut cur_shape = shape;
    for ax in (0..target.len()).rev() {
        if cur_shape[ax] == target[ax] {
            continue;
        }
        let inner: usize = cur_shape[ax + 1..].iter().product();
        let outer: usize = cur_shape[..ax].iter().product();
        let reps = cur_shape[ax];
        let mut next = vec![T::zero(); outer * inner];
        if inner == 1 {
            for o in 0..outer {
                let base = o * reps;
                let mut acc = T::zero();
                for r in 0..reps {
                    acc = acc + current[base + r];
                }
                next[o] = acc;
            }
        } else {
            for o in 0..outer {
                let out_base = o * inner;
                for r in 0..reps {
                    let base = (o * reps + r) * inner;
                    for k in 0..inner {
                        next[out_base + k] = next[out_base + k] + current[base + k];
                    }
                }
            }
        }
        current = next;
        cur_shape[ax] = 1;
    }
    Some(ArrayD::from_shape_vec(IxDyn(target), current).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ops::sum_to_array;
    use crate::rng::stream;
    use rand::Rng;

    fn randn(shape: &[usize], seed: u64) -> ArrayD<f64> {
        let mut rng = stream(seed, "fast-test", 0);
        ArrayD::from_shape_fn(IxDyn(shape), |_| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn permute4_matches_generic() {
        let a = randn(&[3, 4, 5, 2], 1);
        for axes in [[0usize, 3, 1, 2], [0, 2, 3, 1], [1, 0, 3, 2], [3, 2, 1, 0]] {
            let fast = permute4(&a, &axes).unwrap();
            let generic = a
                .view()
                .permuted_axes(IxDyn(&axes))
                .as_standard_layout()
                .to_owned();
            assert_eq!(fast, generic, "axes {axes:?}");
        }
    }

    #[test]
    fn broadcast_fast_matches_generic() {
        let cases: Vec<(Vec<usize>, Vec<usize>)> = vec![
            (vec![1, 3, 1, 1], vec![2, 3, 4, 5]),
            (vec![2, 3, 1, 1], vec![2, 3, 4, 5]),
            (vec![2, 1, 4, 5], vec![2, 3, 4, 5]),
            (vec![1, 7], vec![6, 7]),
            (vec![6, 1], vec![6, 7]),
            (vec![], vec![3, 2]),
        ];
        for (from, to) in cases {
            let a = randn(&from, 2);
            let fast = broadcast_fast(&a, &to).unwrap();
            let generic = a.broadcast(IxDyn(&to)).unwrap().as_standard_layout().to_owned();
            assert_eq!(fast, generic, "{from:?} -> {to:?}");
        }
    }

    #[test]
    fn sum_to_fast_matches_generic() {
        let cases: Vec<(Vec<usize>, Vec<usize>)> = vec![
            (vec![2, 3, 4, 5], vec![2, 3, 1, 1]),
            (vec![2, 3, 4, 5], vec![1, 3, 1, 1]),
            (vec![2, 3, 4, 5], vec![2, 1, 4, 5]),
            (vec![6, 7], vec![6, 1]),
            (vec![6, 7], vec![1, 7]),
            (vec![2, 3, 4], vec![]),
        ];
        for (from, to) in cases {
            let a = randn(&from, 3);
            let fast = sum_to_fast(&a, &to).unwrap();
            let generic = sum_to_array(&a, &to);
            let diff = (&fast - &generic).mapv(f64::abs).sum();
            assert!(diff < 1e-9, "{from:?} -> {to:?}");
        }
    }

    #[test]
    fn fast_paths_decline_unusual_shapes() {
        let a = randn(&[2, 3], 4);
        assert!(permute4(&a, &[1, 0]).is_none());
        assert!(broadcast_fast(&a, &[2, 2, 3]).is_none());
        assert!(sum_to_fast(&a, &[2]).is_none());
    }
}
