use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Linear,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Tanh => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Linear),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Fully connected network with parameters in one flat buffer. Layer `l`
/// stores its `out x in` weight matrix row-major, followed by its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    hidden: Activation,
    output: Activation,
    params: Vec<f64>,
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    sizes: Vec<usize>,
    /// `activations[0]` is the input, `activations[l + 1]` the output of layer `l`.
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap()
    }
}

impl Mlp {
    pub fn param_count_for(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&n| n > 0), "invalid layer sizes {sizes:?}");
        Self { sizes: sizes.to_vec(), hidden, output, params: vec![0.0; Self::param_count_for(sizes)] }
    }

    /// Uniform Glorot initialization; the last layer is scaled by `output_gain`.
    pub fn init(sizes: &[usize], hidden: Activation, output: Activation, output_gain: f64, rng: &mut Rng) -> Self {
        let mut net = Self::zeros(sizes, hidden, output);
        let layers = net.layers();
        let mut offset = 0;
        for (l, (n_in, n_out)) in layers.into_iter().enumerate() {
            let bound = (6.0 / (n_in + n_out) as f64).sqrt();
            let gain = if l + 2 == sizes.len() { output_gain } else { 1.0 };
            for w in &mut net.params[offset..offset + n_in * n_out] {
                *w = gain * rng.gen_range(-bound..bound);
            }
            offset += n_in * n_out + n_out;
        }
        net
    }

    pub fn from_parts(sizes: Vec<usize>, hidden: Activation, output: Activation, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&n| n == 0) {
            return Err(Error::Dimension { expected: 2, got: sizes.len() });
        }
        let expected = Self::param_count_for(&sizes);
        if params.len() != expected {
            return Err(Error::Dimension { expected, got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(Self { sizes, hidden, output, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn activations(&self) -> (Activation, Activation) {
        (self.hidden, self.output)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn zero_grads(&self) -> Vec<f64> {
        vec![0.0; self.params.len()]
    }

    fn layers(&self) -> Vec<(usize, usize)> {
        self.sizes.windows(2).map(|w| (w[0], w[1])).collect()
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 2 == self.sizes.len() {
            self.output
        } else {
            self.hidden
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension { expected: self.input_dim(), got: x.len() });
        }
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(x.to_vec());
        let mut offset = 0;
        for (l, (n_in, n_out)) in self.layers().into_iter().enumerate() {
            let act = self.activation_of(l);
            let input = activations.last().unwrap();
            let weights = &self.params[offset..offset + n_in * n_out];
            let bias = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let out: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    let z = row.iter().zip(input).fold(bias[o], |acc, (w, a)| acc + w * a);
                    act.apply(z)
                })
                .collect();
            activations.push(out);
            offset += n_in * n_out + n_out;
        }
        let output = activations.last().unwrap().clone();
        Ok((output, ForwardCache { sizes: self.sizes.clone(), activations }))
    }

    /// Output only.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Accumulates into `grads` the gradient of `grad_output . output` with
    /// respect to every parameter, and returns the gradient with respect to
    /// the input.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64], grads: &mut [f64]) -> Result<Vec<f64>> {
        if cache.sizes != self.sizes || cache.activations.len() != self.sizes.len() {
            return Err(Error::StaleCache);
        }
        if grad_output.len() != self.output_dim() {
            return Err(Error::Dimension { expected: self.output_dim(), got: grad_output.len() });
        }
        if grads.len() != self.params.len() {
            return Err(Error::Dimension { expected: self.params.len(), got: grads.len() });
        }
        let layers = self.layers();
        let mut offsets = Vec::with_capacity(layers.len());
        let mut offset = 0;
        for &(n_in, n_out) in &layers {
            offsets.push(offset);
            offset += n_in * n_out + n_out;
        }
        let mut delta: Vec<f64> = grad_output.to_vec();
        for l in (0..layers.len()).rev() {
            let (n_in, n_out) = layers[l];
            let act = self.activation_of(l);
            let out = &cache.activations[l + 1];
            let input = &cache.activations[l];
            for (o, dz) in delta.iter_mut().enumerate() {
                *dz *= act.derivative_from_output(out[o]);
            }
            let off = offsets[l];
            let weights = &self.params[off..off + n_in * n_out];
            let mut grad_input = vec![0.0; n_in];
            for o in 0..n_out {
                let dz = delta[o];
                if dz == 0.0 {
                    continue;
                }
                let g_row = &mut grads[off + o * n_in..off + (o + 1) * n_in];
                for (g, a) in g_row.iter_mut().zip(input) {
                    *g += dz * a;
                }
                grads[off + n_in * n_out + o] += dz;
                for (gi, w) in grad_input.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                    *gi += dz * w;
                }
            }
            delta = grad_input;
        }
        Ok(delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    /// Naive scalar re-implementation used as an oracle.
    fn scalar_forward(sizes: &[usize], params: &[f64], hidden_tanh: bool, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let mut off = 0;
        for l in 0..sizes.len() - 1 {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let mut next = vec![0.0; n_out];
            for o in 0..n_out {
                let mut z = params[off + n_in * n_out + o];
                for i in 0..n_in {
                    z += params[off + o * n_in + i] * a[i];
                }
                let last = l == sizes.len() - 2;
                next[o] = if hidden_tanh && !last { z.tanh() } else { z };
            }
            off += n_in * n_out + n_out;
            a = next;
        }
        a
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[25, 16, 5], Activation::Tanh, Activation::Linear);
        let y = net.predict(&[0.3; 25]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_affine_layer_is_exact() {
        let params = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.5, -1.0];
        let net = Mlp::from_parts(vec![3, 2], Activation::Tanh, Activation::Linear, params).unwrap();
        let y = net.predict(&[1.0, -1.0, 2.0]).unwrap();
        assert_eq!(y, vec![1.0 - 2.0 + 6.0 + 0.5, 4.0 - 5.0 + 12.0 - 1.0]);
    }

    #[test]
    fn matches_scalar_oracle() {
        let mut r = rng::from_seed(3);
        let sizes = [25, 16, 16, 5];
        let net = Mlp::init(&sizes, Activation::Tanh, Activation::Linear, 1.0, &mut r);
        for _ in 0..20 {
            let x: Vec<f64> = (0..25).map(|_| r.gen_range(-2.0..2.0)).collect();
            let y = net.predict(&x).unwrap();
            let oracle = scalar_forward(&sizes, net.params(), true, &x);
            for (a, b) in y.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12);
            }
            assert_eq!(y, net.predict(&x).unwrap());
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut r = rng::from_seed(4);
        let net = Mlp::init(&[4, 6, 3], Activation::Tanh, Activation::Linear, 1.0, &mut r);
        let (_, cache) = net.forward(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut g = net.zero_grads();
        net.backward(&cache, &[0.0; 3], &mut g).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_bias_gradient_equals_upstream() {
        let net = Mlp::from_parts(vec![2, 2], Activation::Tanh, Activation::Linear, vec![1.0, 2.0, 3.0, 4.0, 0.0, 0.0]).unwrap();
        let (_, cache) = net.forward(&[0.5, -0.5]).unwrap();
        let mut g = net.zero_grads();
        net.backward(&cache, &[0.7, -1.3], &mut g).unwrap();
        assert_eq!(&g[4..], &[0.7, -1.3]);
    }

    #[test]
    fn finite_difference_gradient_check() {
        let mut r = rng::from_seed(5);
        let sizes = [25, 16, 16, 5];
        let mut net = Mlp::init(&sizes, Activation::Tanh, Activation::Linear, 1.0, &mut r);
        let x: Vec<f64> = (0..25).map(|_| r.gen_range(-1.0..1.0)).collect();
        let weights: Vec<f64> = (0..5).map(|_| r.gen_range(-1.0..1.0)).collect();
        // Composite loss: sum_k w_k * y_k^2.
        let loss = |net: &Mlp| -> f64 { net.predict(&x).unwrap().iter().zip(&weights).map(|(y, w)| w * y * y).sum() };
        let (y, cache) = net.forward(&x).unwrap();
        let upstream: Vec<f64> = y.iter().zip(&weights).map(|(y, w)| 2.0 * w * y).collect();
        let mut grads = net.zero_grads();
        net.backward(&cache, &upstream, &mut grads).unwrap();
        let n = net.params().len();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let i = r.gen_range(0..n);
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let up = loss(&net);
            net.params_mut()[i] = orig - h;
            let down = loss(&net);
            net.params_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let rel = (numeric - grads[i]).abs() / numeric.abs().max(grads[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-5, "worst relative error {worst}");
    }

    #[test]
    fn rejects_bad_shapes() {
        let net = Mlp::zeros(&[3, 2], Activation::Tanh, Activation::Linear);
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { .. })));
        let other = Mlp::zeros(&[3, 4, 2], Activation::Tanh, Activation::Linear);
        let (_, cache) = other.forward(&[0.0; 3]).unwrap();
        let mut g = net.zero_grads();
        assert!(matches!(net.backward(&cache, &[1.0, 1.0], &mut g), Err(Error::StaleCache)));
    }
}
