//! Adam with coupled L2 weight decay, and a plateau learning-rate schedule.

use super::Real;

#[derive(Debug, Clone)]
pub struct Adam<T: Real> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(param_count: usize, lr: f64, weight_decay: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: vec![T::zero(); param_count],
            v: vec![T::zero(); param_count],
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update. The decay term `weight_decay * p` is added to the
    /// gradient before the moment estimates.
    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        self.step += 1;
        let c = |x: f64| T::from_f64(x).expect("finite constant");
        let (b1, b2) = (c(self.beta1), c(self.beta2));
        let one = T::one();
        let bias1 = 1.0 - self.beta1.powi(self.step as i32);
        let bias2 = 1.0 - self.beta2.powi(self.step as i32);
        let step_size = c(self.lr / bias1);
        let inv_bias2_sqrt = c(1.0 / bias2.sqrt());
        let eps = c(self.eps);
        let wd = c(self.weight_decay);
        for i in 0..params.len() {
            let g = grad[i] + wd * params[i];
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            let denom = self.v[i].sqrt() * inv_bias2_sqrt + eps;
            params[i] = params[i] - step_size * self.m[i] / denom;
        }
    }
}

/// Multiplies the learning rate by `factor` once the monitored loss has not
/// improved by a relative `threshold` for more than `patience` epochs.
#[derive(Debug, Clone)]
pub struct PlateauSchedule {
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
    best: f64,
    stale: usize,
}

impl PlateauSchedule {
    pub fn new(factor: f64, patience: usize, threshold: f64) -> Self {
        PlateauSchedule {
            factor,
            patience,
            threshold,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    /// Records an epoch loss and returns the (possibly reduced) rate.
    pub fn observe(&mut self, loss: f64, lr: f64) -> f64 {
        if loss < self.best * (1.0 - self.threshold) {
            self.best = loss;
            self.stale = 0;
            return lr;
        }
        self.stale += 1;
        if self.stale > self.patience {
            self.stale = 0;
            lr * self.factor
        } else {
            lr
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut adam = Adam::<f64>::new(2, 0.1, 0.0);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[0.5, -2.0]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut adam = Adam::<f64>::new(1, 0.05, 0.0);
        let mut p = vec![3.0];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.0)];
            adam.step(&mut p, &g);
        }
        assert!((p[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn weight_decay_shrinks_idle_params() {
        let mut adam = Adam::<f64>::new(1, 0.01, 0.5);
        let mut p = vec![1.0];
        for _ in 0..10 {
            adam.step(&mut p, &[0.0]);
        }
        assert!(p[0] < 1.0);
    }

    #[test]
    fn plateau_halves_after_patience() {
        let mut s = PlateauSchedule::new(0.5, 15, 1e-4);
        let mut lr = 0.08;
        lr = s.observe(1.0, lr);
        for _ in 0..15 {
            lr = s.observe(1.0, lr);
            assert_eq!(lr, 0.08);
        }
        lr = s.observe(1.0, lr);
        assert_eq!(lr, 0.04);
        // improvement resets the counter
        lr = s.observe(0.5, lr);
        assert_eq!(lr, 0.04);
    }
}
