use super::ParamStore;
use crate::scalar::Scalar;
use ndarray::ArrayD;

/// Adam with bias correction; one instance per `ParamStore`.
#[derive(Clone)]
pub struct Adam<T: Scalar> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<ArrayD<T>>,
    pub v: Vec<ArrayD<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParamStore<T>, beta1: f64, beta2: f64) -> Self {
        let m = store
            .values()
            .iter()
            .map(|p| ArrayD::zeros(p.raw_dim()))
            .collect();
        let v = store
            .values()
            .iter()
            .map(|p| ArrayD::zeros(p.raw_dim()))
            .collect();
        Adam {
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            m,
            v,
        }
    }

    /// One update. `grads[i] = None` leaves parameter `i` and its moment
    /// estimates untouched.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Option<ArrayD<T>>], lr: f64) {
        assert_eq!(grads.len(), store.len());
        self.t += 1;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one = T::one();
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = T::from_f64(lr / bc1);
        let denom_scale = T::from_f64(1.0 / bc2.sqrt());
        let eps = T::from_f64(self.eps);

        for (i, grad) in grads.iter().enumerate() {
            let Some(g) = grad else { continue };
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let p = &mut store.values_mut()[i];
            let (ms, vs, ps, gs) = (
                m.as_slice_mut().unwrap(),
                v.as_slice_mut().unwrap(),
                p.as_slice_mut().unwrap(),
                g.as_slice().unwrap(),
            );
            for j in 0..gs.len() {
                let gj = gs[j];
                ms[j] = b1 * ms[j] + (one - b1) * gj;
                vs[j] = b2 * vs[j] + (one - b2) * gj * gj;
                ps[j] = ps[j] - step * ms[j] / (vs[j].sqrt() * denom_scale + eps);
            }
        }
    }
}
