//! Rectified Adam: Adam whose adaptive step is gated and rescaled by the
//! estimated variance of the second-moment estimate. Early steps, where
//! that variance is unbounded, fall back to momentum SGD.

use super::{Grads, QNetwork, Scalar, TENSOR_COUNT};

#[derive(Debug, Clone, PartialEq)]
pub struct RAdam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Completed update steps.
    pub t: u64,
    /// First and second moment estimates, one vec per parameter tensor,
    /// kept in f64 regardless of the network element type.
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl RAdam {
    pub fn new<F: Scalar>(net: &QNetwork<F>, lr: f64) -> RAdam {
        let sizes: Vec<usize> = net.param_slices().iter().map(|s| s.len()).collect();
        RAdam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Length of the maximum approximated simple moving average.
    pub fn rho_inf(&self) -> f64 {
        2.0 / (1.0 - self.beta2) - 1.0
    }

    /// The rectification state at step `t` (1-based): `rho_t` and, when the
    /// adaptive branch is active, the variance rectification factor.
    pub fn rectification(&self, t: u64) -> (f64, Option<f64>) {
        let rho_inf = self.rho_inf();
        let b2t = self.beta2.powi(t as i32);
        let rho_t = rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t);
        if rho_t > 4.0 {
            let r = ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf)
                / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t);
            (rho_t, Some(r.sqrt()))
        } else {
            (rho_t, None)
        }
    }

    /// One optimizer step over all parameters.
    pub fn step<F: Scalar>(&mut self, net: &mut QNetwork<F>, grads: &Grads<F>) {
        self.t += 1;
        let t = self.t;
        let b1t = self.beta1.powi(t as i32);
        let b2t = self.beta2.powi(t as i32);
        let bias1 = 1.0 - b1t;
        let bias2 = 1.0 - b2t;
        let (_, rect) = self.rectification(t);

        let mut params = net.param_slices_mut();
        let gslices = grads.slices();
        for tensor in 0..TENSOR_COUNT {
            let m = &mut self.m[tensor];
            let v = &mut self.v[tensor];
            let g = gslices[tensor];
            let p = &mut params[tensor];
            for i in 0..g.len() {
                let gi = g[i].to_f64();
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / bias1;
                let update = match rect {
                    Some(r) => {
                        let v_hat = (v[i] / bias2).sqrt();
                        self.lr * r * m_hat / (v_hat + self.eps)
                    }
                    None => self.lr * m_hat,
                };
                p[i] = F::from_f64(p[i].to_f64() - update);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_inf_for_default_betas() {
        let net = QNetwork::<f64>::zeros();
        let opt = RAdam::new(&net, 1e-4);
        assert!((opt.rho_inf() - 1999.0).abs() < 1e-9);
    }

    #[test]
    fn early_steps_take_the_sgd_branch() {
        let net = QNetwork::<f64>::zeros();
        let opt = RAdam::new(&net, 1e-4);
        // rho_1 = rho_inf - 2 b2/(1-b2) = 1999 - 1998 = 1
        let (rho1, rect1) = opt.rectification(1);
        assert!((rho1 - 1.0).abs() < 1e-9);
        assert!(rect1.is_none());
        // rho_2 = 1999 - 4 b2^2/(1-b2^2) ~ 1.9995
        let (rho2, rect2) = opt.rectification(2);
        assert!((rho2 - 1.9995).abs() < 1e-3);
        assert!(rect2.is_none());
        // rho_t crosses 4 at t = 5 for beta2 = 0.999
        let (rho4, rect4) = opt.rectification(4);
        assert!(rho4 <= 4.0, "rho_4 = {rho4}");
        assert!(rect4.is_none());
        let (rho5, rect5) = opt.rectification(5);
        assert!(rho5 > 4.0, "rho_5 = {rho5}");
        assert!(rect5.is_some());
    }

    #[test]
    fn rectification_factor_grows_toward_one() {
        let net = QNetwork::<f64>::zeros();
        let opt = RAdam::new(&net, 1e-4);
        let (_, r5) = opt.rectification(5);
        let (_, r1000) = opt.rectification(1000);
        let (_, r100000) = opt.rectification(100_000);
        let (r5, r1000, r100000) = (r5.unwrap(), r1000.unwrap(), r100000.unwrap());
        assert!(r5 < r1000 && r1000 <= r100000);
        assert!(r100000 <= 1.0);
        assert!(r100000 > 0.99);
    }

    #[test]
    fn two_sgd_steps_with_unit_gradient() {
        // hand-worked: with g = 1 every step, m_hat = 1 at t = 1 and t = 2,
        // both in the SGD branch, so the parameter drops by lr each step
        let mut net = QNetwork::<f64>::zeros();
        let mut opt = RAdam::new(&net, 1e-4);
        let mut grads = Grads::<f64>::zeros();
        grads.fc2.b.fill(1.0);

        opt.step(&mut net, &grads);
        assert!((net.fc2.b[0] - (-1e-4)).abs() < 1e-15);
        opt.step(&mut net, &grads);
        assert!((net.fc2.b[0] - (-2e-4)).abs() < 1e-15);
        // untouched tensors stay zero
        assert!(net.fc1.w.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn adaptive_step_is_bounded_by_rectified_lr() {
        // once rectified, |update| <= lr * r * m_hat / sqrt(v_hat): with a
        // constant gradient m_hat/sqrt(v_hat) -> |g|/|g| = 1
        let mut net = QNetwork::<f64>::zeros();
        let mut opt = RAdam::new(&net, 1e-2);
        let mut grads = Grads::<f64>::zeros();
        grads.fc2.b.fill(2.0);
        for _ in 0..50 {
            let before = net.fc2.b[0];
            opt.step(&mut net, &grads);
            let delta = (net.fc2.b[0] - before).abs();
            if opt.t >= 5 {
                assert!(delta <= opt.lr * 1.0001, "step {}: delta {delta}", opt.t);
            } else {
                // momentum-SGD branch: the step is lr * m_hat = 2 * lr
                assert!((delta - 2.0 * opt.lr).abs() < 1e-12);
            }
        }
        // and the parameter moved monotonically down
        assert!(net.fc2.b[0] < -1e-3);
    }

    #[test]
    fn optimizer_state_tracks_steps() {
        let mut net = QNetwork::<f64>::zeros();
        let mut opt = RAdam::new(&net, 1e-4);
        let grads = Grads::<f64>::zeros();
        for _ in 0..3 {
            opt.step(&mut net, &grads);
        }
        assert_eq!(opt.t, 3);
        // zero gradients leave parameters untouched
        assert!(net.param_slices().iter().all(|s| s.iter().all(|v| *v == 0.0)));
    }
}
