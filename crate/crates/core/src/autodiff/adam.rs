//! Adam with bias correction (Kingma & Ba), over lists of named-by-position
//! parameter tensors.

use super::tensor::Tensor;
use super::AutodiffError;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(lr: f64, shapes: &[&[usize]]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn for_params(lr: f64, params: &[Tensor]) -> Self {
        let shapes: Vec<&[usize]> = params.iter().map(|p| p.shape()).collect();
        Self::new(lr, &shapes)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over all parameters. NaN gradients abort with the
    /// offending parameter index rather than propagating silently.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[&Tensor]) -> Result<(), AutodiffError> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(AutodiffError::Shape {
                op: "adam_step",
                detail: format!(
                    "state holds {} params, got {} params / {} grads",
                    self.m.len(),
                    params.len(),
                    grads.len()
                ),
            });
        }
        for (i, g) in grads.iter().enumerate() {
            if g.shape() != params[i].shape() {
                return Err(AutodiffError::Shape {
                    op: "adam_step",
                    detail: format!(
                        "param {i}: shape {:?} vs grad {:?}",
                        params[i].shape(),
                        g.shape()
                    ),
                });
            }
            if g.has_nan() {
                return Err(AutodiffError::NanGradient {
                    param_index: i,
                    step: self.step + 1,
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = params[i].data_mut();
            let g = grads[i].data();
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = vec![Tensor::vector(vec![1.0, -2.0, 3.0])];
        let before = params.clone();
        let g = Tensor::zeros(&[3]);
        let mut adam = AdamState::for_params(0.1, &params);
        adam.step(&mut params, &[&g]).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn constant_gradient_step_approaches_lr() {
        // with a constant gradient, |update| -> lr asymptotically
        let mut params = vec![Tensor::vector(vec![0.0])];
        let g = Tensor::vector(vec![2.5]);
        let lr = 0.05;
        let mut adam = AdamState::for_params(lr, &params);
        let mut prev = 0.0;
        for _ in 0..200 {
            adam.step(&mut params, &[&g]).unwrap();
            let step = (params[0].data()[0] - prev).abs();
            assert!(step <= lr * (1.0 + 1e-6), "step {step} exceeds lr bound");
            prev = params[0].data()[0];
        }
        let last = (params[0].data()[0] - prev).abs();
        assert!(last <= lr * (1.0 + 1e-6));
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(x) = ||x||^2, grad = 2x, 100 steps from x0 = 1 at lr 0.1
        let mut params = vec![Tensor::vector(vec![1.0, 1.0, 1.0])];
        let mut adam = AdamState::for_params(0.1, &params);
        for _ in 0..100 {
            let g = params[0].map(|x| 2.0 * x);
            adam.step(&mut params, &[&g]).unwrap();
        }
        let norm = params[0].data().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 0.1, "|x| = {norm}");
    }

    #[test]
    fn nan_gradient_aborts() {
        let mut params = vec![Tensor::vector(vec![1.0])];
        let g = Tensor::vector(vec![f64::NAN]);
        let mut adam = AdamState::for_params(0.1, &params);
        let err = adam.step(&mut params, &[&g]).unwrap_err();
        assert!(matches!(err, AutodiffError::NanGradient { param_index: 0, .. }));
    }
}
