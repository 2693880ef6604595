use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Adaptive-moment optimizer state for one flat parameter buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    /// One bias-corrected update. Non-finite gradients are rejected and leave
    /// both parameters and state untouched.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension { expected: self.m.len(), got: grads.len().min(params.len()) });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_only_counts() {
        let mut opt = Adam::new(3, 1e-2);
        let mut p = vec![1.0, -2.0, 3.0];
        opt.update(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(opt.m, vec![0.0; 3]);
        assert_eq!(opt.v, vec![0.0; 3]);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let lr = 1e-3;
        let mut opt = Adam::new(3, lr);
        let mut p = vec![0.0; 3];
        opt.update(&mut p, &[0.5, -3.0, 100.0]).unwrap();
        // m_hat = g, v_hat = g^2 so the step is lr * sign(g) up to eps.
        assert!((p[0] + lr).abs() < 1e-6 * lr.max(1.0));
        assert!((p[1] - lr).abs() < 1e-6);
        assert!((p[2] + lr).abs() < 1e-6);
    }

    #[test]
    fn deterministic_and_rejects_nan() {
        let mut a = Adam::new(2, 0.1);
        let mut b = a.clone();
        let (mut pa, mut pb) = (vec![1.0, 2.0], vec![1.0, 2.0]);
        a.update(&mut pa, &[0.3, -0.1]).unwrap();
        b.update(&mut pb, &[0.3, -0.1]).unwrap();
        assert_eq!((pa.clone(), &a), (pb, &b));
        let before = (pa.clone(), a.clone());
        assert!(matches!(a.update(&mut pa, &[f64::NAN, 0.0]), Err(Error::NonFinite(_))));
        assert_eq!((pa, a), before);
    }
}
