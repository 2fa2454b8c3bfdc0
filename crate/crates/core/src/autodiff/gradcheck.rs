//! Central finite-difference verification of analytic gradients.
//!
//! Used by the per-loss gradient tests and the acceptance suite. Kept in the
//! library (not test code) so every crate target can call it, but it plays no
//! role in training.

use crate::scalar::Scalar;
use ndarray::ArrayD;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub coords_checked: usize,
    pub max_rel_err: f64,
    /// (tensor index, flat coordinate, analytic, finite-difference) of the worst coordinate.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Compare `analytic` gradients of `loss` against central finite differences.
///
/// Probes `samples_per_tensor` coordinates of each parameter tensor (all of
/// them if the tensor is smaller), chosen deterministically from `seed`.
/// Coordinates where both sides are below 1e-7 in magnitude are treated as
/// agreeing; everything else contributes a relative error.
///
/// L1-style losses have kinks; when a probe happens to step across one, the
/// central difference is wrong no matter how good the gradient is. A
/// coordinate that disagrees is therefore re-probed at a 20x smaller step:
/// a kink artifact collapses, a genuine gradient bug persists at every step
/// size.
pub fn check_grads(
    loss: &mut dyn FnMut(&[ArrayD<f64>]) -> f64,
    params: &[ArrayD<f64>],
    analytic: &[ArrayD<f64>],
    samples_per_tensor: usize,
    seed: u64,
) -> GradCheckReport {
    assert_eq!(params.len(), analytic.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work: Vec<ArrayD<f64>> = params.to_vec();
    let mut report = GradCheckReport {
        coords_checked: 0,
        max_rel_err: 0.0,
        worst: None,
    };

    for ti in 0..params.len() {
        let n = params[ti].len();
        if n == 0 {
            continue;
        }
        let coords: Vec<usize> = if n <= samples_per_tensor {
            (0..n).collect()
        } else {
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            all.truncate(samples_per_tensor);
            all
        };
        for &ci in &coords {
            let orig = params[ti].as_slice().unwrap()[ci];
            let an = analytic[ti].as_slice().unwrap()[ci];
            report.coords_checked += 1;

            let mut h = 1e-5 * orig.abs().max(1.0);
            let mut best_rel = f64::INFINITY;
            let mut best_fd = 0.0;
            for _attempt in 0..2 {
                work[ti].as_slice_mut().unwrap()[ci] = orig + h;
                let plus = loss(&work);
                work[ti].as_slice_mut().unwrap()[ci] = orig - h;
                let minus = loss(&work);
                work[ti].as_slice_mut().unwrap()[ci] = orig;

                let fd = (plus - minus) / (2.0 * h);
                let scale = an.abs().max(fd.abs());
                let rel = if scale < 1e-7 {
                    0.0
                } else {
                    (an - fd).abs() / scale
                };
                if rel < best_rel {
                    best_rel = rel;
                    best_fd = fd;
                }
                if best_rel <= 1e-4 {
                    break;
                }
                h /= 20.0;
            }

            if best_rel > report.max_rel_err {
                report.max_rel_err = best_rel;
                report.worst = Some((ti, ci, an, best_fd));
            }
        }
    }
    report
}

/// Panic unless the analytic gradients match finite differences within `tol`.
pub fn assert_grads_close(
    loss: &mut dyn FnMut(&[ArrayD<f64>]) -> f64,
    params: &[ArrayD<f64>],
    analytic: &[ArrayD<f64>],
    samples_per_tensor: usize,
    seed: u64,
    tol: f64,
) -> GradCheckReport {
    let report = check_grads(loss, params, analytic, samples_per_tensor, seed);
    assert!(
        report.passes(tol),
        "gradient check failed: max rel err {:.3e} > {:.1e}, worst {:?} over {} coords",
        report.max_rel_err,
        tol,
        report.worst,
        report.coords_checked
    );
    report
}

/// Dense gradient of a scalar-valued tape computation, as plain arrays.
///
/// Convenience wrapper used by gradient tests: builds a fresh tape, runs
/// `f` on parameter leaves, and returns (loss value, gradients).
pub fn tape_grads<T, F>(params: &[ArrayD<T>], f: F) -> (T, Vec<ArrayD<T>>)
where
    T: Scalar,
    F: for<'t> FnOnce(&'t super::Tape<T>, &[super::Var<'t, T>]) -> super::Var<'t, T>,
{
    let tape = super::Tape::<T>::new();
    let vars: Vec<_> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&tape, &vars);
    let loss = out.scalar();
    let grads = tape.grad(out, &vars);
    let grads = grads
        .into_iter()
        .zip(params)
        .map(|(g, p)| match g {
            Some(g) => g.value(),
            None => ArrayD::zeros(p.raw_dim()),
        })
        .collect();
    (loss, grads)
}
