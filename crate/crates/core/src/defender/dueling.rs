use crate::nn::{Activation, Adam, ForwardCache, Mlp};
use crate::rng::Rng;
use crate::sim::{Action, OBS_DIM};
use crate::Result;

/// `Q = value + advantages - mean(advantages)`.
pub fn dueling_q(value: f64, advantages: &[f64]) -> Vec<f64> {
    let mean = advantages.iter().sum::<f64>() / advantages.len() as f64;
    advantages.iter().map(|a| value + a - mean).collect()
}

/// Shared tanh trunk feeding a scalar value head and a per-action advantage head.
#[derive(Debug, Clone, PartialEq)]
pub struct DuelingNet {
    pub trunk: Mlp,
    pub value: Mlp,
    pub advantage: Mlp,
}

pub struct DuelingCache {
    trunk: ForwardCache,
    value: ForwardCache,
    advantage: ForwardCache,
}

/// Gradients laid out like the three sub-networks.
#[derive(Debug, Clone, PartialEq)]
pub struct DuelingGrads {
    pub trunk: Vec<f64>,
    pub value: Vec<f64>,
    pub advantage: Vec<f64>,
}

impl DuelingNet {
    pub fn init(hidden: &[usize], rng: &mut Rng) -> Self {
        let mut trunk_sizes = vec![OBS_DIM];
        trunk_sizes.extend_from_slice(hidden);
        let width = *trunk_sizes.last().unwrap();
        Self {
            trunk: Mlp::init(&trunk_sizes, Activation::Tanh, Activation::Tanh, 1.0, rng),
            value: Mlp::init(&[width, 1], Activation::Tanh, Activation::Linear, 1.0, rng),
            advantage: Mlp::init(&[width, Action::COUNT], Activation::Tanh, Activation::Linear, 0.1, rng),
        }
    }

    pub fn nets(&self) -> [&Mlp; 3] {
        [&self.trunk, &self.value, &self.advantage]
    }

    pub fn from_nets(mut nets: Vec<Mlp>) -> Option<Self> {
        if nets.len() != 3 {
            return None;
        }
        let advantage = nets.pop()?;
        let value = nets.pop()?;
        let trunk = nets.pop()?;
        let width = trunk.output_dim();
        let ok = trunk.input_dim() == OBS_DIM
            && value.input_dim() == width
            && value.output_dim() == 1
            && advantage.input_dim() == width
            && advantage.output_dim() == Action::COUNT;
        ok.then_some(Self { trunk, value, advantage })
    }

    pub fn zero_grads(&self) -> DuelingGrads {
        DuelingGrads { trunk: self.trunk.zero_grads(), value: self.value.zero_grads(), advantage: self.advantage.zero_grads() }
    }

    pub fn optimizers(&self, lr: f64) -> [Adam; 3] {
        self.nets().map(|n| Adam::new(n.params().len(), lr))
    }

    pub fn q_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x).map(|(q, _)| q)
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, DuelingCache)> {
        let (h, trunk) = self.trunk.forward(x)?;
        let (v, value) = self.value.forward(&h)?;
        let (a, advantage) = self.advantage.forward(&h)?;
        Ok((dueling_q(v[0], &a), DuelingCache { trunk, value, advantage }))
    }

    /// Accumulates gradients of `grad_q . Q` into `grads`.
    pub fn backward(&self, cache: &DuelingCache, grad_q: &[f64], grads: &mut DuelingGrads) -> Result<()> {
        let total: f64 = grad_q.iter().sum();
        let mean = total / grad_q.len() as f64;
        let grad_adv: Vec<f64> = grad_q.iter().map(|g| g - mean).collect();
        let hv = self.value.backward(&cache.value, &[total], &mut grads.value)?;
        let ha = self.advantage.backward(&cache.advantage, &grad_adv, &mut grads.advantage)?;
        let h: Vec<f64> = hv.iter().zip(&ha).map(|(a, b)| a + b).collect();
        self.trunk.backward(&cache.trunk, &h, &mut grads.trunk)?;
        Ok(())
    }

    pub fn apply(&mut self, grads: &DuelingGrads, opts: &mut [Adam; 3]) -> Result<()> {
        opts[0].update(self.trunk.params_mut(), &grads.trunk)?;
        opts[1].update(self.value.params_mut(), &grads.value)?;
        opts[2].update(self.advantage.params_mut(), &grads.advantage)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    #[test]
    fn dueling_examples() {
        assert_eq!(dueling_q(2.5, &[0.0; 5]), vec![2.5; 5]);
        assert_eq!(dueling_q(1.0, &[1.0, 2.0, 3.0, 4.0, 5.0]), vec![-1.0, 0.0, 1.0, 2.0, 3.0]);
    }

    fn param(net: &mut DuelingNet, which: usize, i: usize) -> &mut f64 {
        let m = match which {
            0 => &mut net.trunk,
            1 => &mut net.value,
            _ => &mut net.advantage,
        };
        &mut m.params_mut()[i]
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut r = rng::from_seed(8);
        let mut net = DuelingNet::init(&[8, 8], &mut r);
        let x: Vec<f64> = (0..OBS_DIM).map(|_| r.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..5).map(|_| r.gen_range(-1.0..1.0)).collect();
        let loss = |n: &DuelingNet| -> f64 { n.q_values(&x).unwrap().iter().zip(&w).map(|(q, w)| w * q * q).sum() };
        let (q, cache) = net.forward(&x).unwrap();
        let up: Vec<f64> = q.iter().zip(&w).map(|(q, w)| 2.0 * w * q).collect();
        let mut g = net.zero_grads();
        net.backward(&cache, &up, &mut g).unwrap();
        let h = 1e-5;
        for which in 0..3 {
            let analytic = [&g.trunk, &g.value, &g.advantage][which].clone();
            for i in (0..analytic.len()).step_by(7) {
                let orig = *param(&mut net, which, i);
                *param(&mut net, which, i) = orig + h;
                let up = loss(&net);
                *param(&mut net, which, i) = orig - h;
                let down = loss(&net);
                *param(&mut net, which, i) = orig;
                let numeric = (up - down) / (2.0 * h);
                let rel = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-6);
                assert!(rel < 1e-5, "net {which} param {i}: {numeric} vs {}", analytic[i]);
            }
        }
    }
}
