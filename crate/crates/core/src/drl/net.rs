//! Fully connected policy/value network with hand-written reverse mode.
//!
//! All weights live in one flat buffer so the optimizer and checkpoint code
//! can treat them as a single vector. Layout, in order: each trunk layer
//! (weights row-major `out × in`, then bias), the policy head (`J·K` outputs)
//! and the value head (1 output).

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerShape {
    inputs: usize,
    outputs: usize,
    weight_offset: usize,
    bias_offset: usize,
}

impl LayerShape {
    fn param_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }

    fn apply(&self, params: &[f64], x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let w = &params[self.weight_offset..self.weight_offset + self.inputs * self.outputs];
        let b = &params[self.bias_offset..self.bias_offset + self.outputs];
        for (row, bias) in w.chunks_exact(self.inputs).zip(b) {
            let dot: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            out.push(dot + bias);
        }
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the input.
    fn backward(&self, params: &[f64], x: &[f64], dout: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.inputs];
        let w = &params[self.weight_offset..self.weight_offset + self.inputs * self.outputs];
        for (o, &g) in dout.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[self.bias_offset + o] += g;
            let row = o * self.inputs;
            let gw = &mut grad[self.weight_offset + row..self.weight_offset + row + self.inputs];
            for ((gwi, &xi), (dxi, &wi)) in gw.iter_mut().zip(x).zip(dx.iter_mut().zip(&w[row..row + self.inputs])) {
                *gwi += g * xi;
                *dxi += g * wi;
            }
        }
        dx
    }
}

/// θ (trunk + policy heads) and φ (trunk + value head); the trunk is shared.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParameters {
    obs_dim: usize,
    num_ues: usize,
    num_planes: usize,
    hidden: Vec<usize>,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input followed by each trunk activation.
    activations: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub value: f64,
}

impl PolicyParameters {
    /// All-zero network: uniform heads and zero value everywhere.
    pub fn zeros(obs_dim: usize, num_ues: usize, num_planes: usize, hidden: &[usize]) -> Result<Self> {
        if obs_dim == 0 || num_ues == 0 || num_planes < 2 {
            return Err(Error::Shape(format!(
                "network needs obs_dim ≥ 1, J ≥ 1, K ≥ 2; got {obs_dim}, {num_ues}, {num_planes}"
            )));
        }
        if hidden.contains(&0) {
            return Err(Error::Shape("hidden widths must be positive".into()));
        }
        let mut layers = Vec::new();
        let mut offset = 0;
        let mut push = |inputs: usize, outputs: usize| {
            let shape = LayerShape {
                inputs,
                outputs,
                weight_offset: offset,
                bias_offset: offset + inputs * outputs,
            };
            offset += shape.param_count();
            layers.push(shape);
        };
        let mut width = obs_dim;
        for &h in hidden {
            push(width, h);
            width = h;
        }
        push(width, num_ues * num_planes);
        push(width, 1);
        Ok(PolicyParameters {
            obs_dim,
            num_ues,
            num_planes,
            hidden: hidden.to_vec(),
            layers,
            params: vec![0.0; offset],
        })
    }

    /// Glorot-uniform trunk, near-zero policy head (so the initial policy is
    /// close to uniform) and zero biases.
    pub fn init<R: Rng + ?Sized>(
        obs_dim: usize,
        num_ues: usize,
        num_planes: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(obs_dim, num_ues, num_planes, hidden)?;
        let head = net.layers.len() - 2;
        for (idx, layer) in net.layers.clone().into_iter().enumerate() {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            let scale = if idx == head { 0.01 } else { 1.0 };
            for w in &mut net.params[layer.weight_offset..layer.bias_offset] {
                *w = scale * rng.random_range(-limit..limit);
            }
        }
        Ok(net)
    }

    /// Rebuilds a network from a flat parameter vector.
    pub fn from_flat(
        obs_dim: usize,
        num_ues: usize,
        num_planes: usize,
        hidden: &[usize],
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut net = Self::zeros(obs_dim, num_ues, num_planes, hidden)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn num_ues(&self) -> usize {
        self.num_ues
    }

    pub fn num_planes(&self) -> usize {
        self.num_planes
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.params
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn forward_cached(&self, obs: &[f64]) -> Result<ForwardCache> {
        if obs.len() != self.obs_dim {
            return Err(Error::Shape(format!(
                "observation has {} entries, network expects {}",
                obs.len(),
                self.obs_dim
            )));
        }
        let trunk = self.layers.len() - 2;
        let mut activations = Vec::with_capacity(trunk + 1);
        activations.push(obs.to_vec());
        let mut buf = Vec::new();
        for layer in &self.layers[..trunk] {
            layer.apply(&self.params, activations.last().unwrap(), &mut buf);
            activations.push(buf.iter().map(|z| z.tanh()).collect());
        }
        let features = activations.last().unwrap();
        let mut logits = Vec::new();
        self.layers[trunk].apply(&self.params, features, &mut logits);
        let mut value = Vec::new();
        self.layers[trunk + 1].apply(&self.params, features, &mut value);
        Ok(ForwardCache {
            activations,
            logits,
            value: value[0],
        })
    }

    /// Logits (row-major `J × K`) and state value.
    pub fn forward(&self, obs: &[f64]) -> Result<(Vec<f64>, f64)> {
        let c = self.forward_cached(obs)?;
        Ok((c.logits, c.value))
    }

    /// Adds `∂L/∂params` to `grad` given upstream gradients on the outputs.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &[f64], dvalue: f64, grad: &mut [f64]) {
        let trunk = self.layers.len() - 2;
        let features = &cache.activations[trunk];
        let mut dh = self.layers[trunk].backward(&self.params, features, dlogits, grad);
        let dv = self.layers[trunk + 1].backward(&self.params, features, &[dvalue], grad);
        for (a, b) in dh.iter_mut().zip(dv) {
            *a += b;
        }
        for l in (0..trunk).rev() {
            let out = &cache.activations[l + 1];
            let dz: Vec<f64> = dh.iter().zip(out).map(|(g, y)| g * (1.0 - y * y)).collect();
            dh = self.layers[l].backward(&self.params, &cache.activations[l], &dz, grad);
        }
    }
}

/// Numerically stable log-softmax of one head.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = PolicyParameters::zeros(41, 10, 3, &[128, 128]).unwrap();
        let (logits, value) = net.forward(&[0.5; 41]).unwrap();
        assert_eq!(logits.len(), 30);
        assert!(logits.iter().all(|&z| z == 0.0));
        assert_eq!(value, 0.0);
        assert_eq!(net.len(), 41 * 128 + 128 + 128 * 128 + 128 + 128 * 30 + 30 + 129);
    }

    #[test]
    fn shape_errors() {
        let net = PolicyParameters::zeros(5, 2, 3, &[4]).unwrap();
        assert!(matches!(net.forward(&[0.0; 4]), Err(Error::Shape(_))));
        assert!(PolicyParameters::zeros(5, 2, 1, &[4]).is_err());
        assert!(PolicyParameters::from_flat(5, 2, 3, &[4], vec![0.0; 3]).is_err());
    }

    #[test]
    fn outputs_finite_on_unit_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = PolicyParameters::init(41, 10, 3, &[128, 128], &mut rng).unwrap();
        for _ in 0..50 {
            let obs: Vec<f64> = (0..41).map(|_| rng.random_range(0.0..=1.0)).collect();
            let (logits, v) = net.forward(&obs).unwrap();
            assert!(logits.iter().all(|z| z.is_finite()) && v.is_finite());
        }
    }

    #[test]
    fn log_softmax_shift_invariant() {
        let z = [0.3, -1.2, 2.5];
        let a = log_softmax(&z);
        let b = log_softmax(&[z[0] + 7.0, z[1] + 7.0, z[2] + 7.0]);
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
        let total: f64 = a.iter().map(|l| l.exp()).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences_on_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = PolicyParameters::init(5, 2, 3, &[6, 4], &mut rng).unwrap();
        let obs = [0.1, 0.9, 0.0, 1.0, 0.4];
        let dlogits = [0.3, -0.2, 0.5, 1.0, -0.7, 0.05];
        let dvalue = -0.8;
        let scalar = |p: &PolicyParameters| {
            let (l, v) = p.forward(&obs).unwrap();
            l.iter().zip(&dlogits).map(|(a, b)| a * b).sum::<f64>() + v * dvalue
        };
        let cache = net.forward_cached(&obs).unwrap();
        let mut grad = vec![0.0; net.len()];
        net.backward(&cache, &dlogits, dvalue, &mut grad);
        let h = 1e-6;
        for i in 0..net.len() {
            let mut p = net.clone();
            p.as_mut_slice()[i] += h;
            let up = scalar(&p);
            p.as_mut_slice()[i] -= 2.0 * h;
            let down = scalar(&p);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", grad[i]);
        }
    }
}
