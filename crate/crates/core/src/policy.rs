//! The policy head π_ψ(z) → a, the behavior-cloning loss and Jacobian probes.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};
use crate::mask::Mask;
use crate::math::{self, finite_diff_jacobian, Graph, NodeId, Tensor};
use crate::world::EnvSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

pub const DEFAULT_HIDDEN: [usize; 2] = [128, 128];

/// Scale of the initial weights relative to 1/√fan_in. Actions are a few
/// centimetres per step, so a small start keeps early outputs near zero.
pub const INIT_GAIN: f64 = 0.3;

/// Fully connected network. Hidden layers use `activation`, the output layer
/// is linear. Weights are stored (out × in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl Mlp {
    /// Weights ~ Normal(0, INIT_GAIN/√fan_in), zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let dist = Normal::new(0.0, INIT_GAIN / (fan_in as f64).sqrt()).expect("positive std");
            let w = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
            weights.push(Tensor::from_raw(vec![fan_out, fan_in], w));
            biases.push(Tensor::zeros(vec![fan_out]));
        }
        Ok(Self { sizes: sizes.to_vec(), activation: Activation::Tanh, weights, biases })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let weights = sizes.windows(2).map(|p| Tensor::zeros(vec![p[1], p[0]])).collect();
        let biases = sizes.windows(2).map(|p| Tensor::zeros(vec![p[1]])).collect();
        Ok(Self { sizes: sizes.to_vec(), activation: Activation::Tanh, weights, biases })
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidParams(format!("layer sizes must have ≥ 2 positive entries, got {sizes:?}")));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        Self::check_sizes(&self.sizes)?;
        let layers = self.sizes.len() - 1;
        if self.weights.len() != layers || self.biases.len() != layers {
            return Err(Error::InvalidParams("layer count does not match sizes".into()));
        }
        for (l, pair) in self.sizes.windows(2).enumerate() {
            if self.weights[l].shape() != [pair[1], pair[0]] || self.biases[l].shape() != [pair[1]] {
                return Err(Error::InvalidParams(format!("layer {l} has wrong parameter shapes")));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("validated sizes")
    }

    /// Parameter tensors in registration order: W0, b0, W1, b1, …
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights.iter_mut().zip(self.biases.iter_mut()).flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn register(&self, graph: &mut Graph) -> Vec<NodeId> {
        self.tensors().into_iter().map(|t| graph.param(t.clone())).collect()
    }

    /// Batched forward for `x: B × input_dim` using leaves from [`Mlp::register`].
    pub fn forward_in(&self, graph: &mut Graph, params: &[NodeId], x: NodeId) -> Result<NodeId> {
        let layers = self.weights.len();
        let mut h = x;
        for l in 0..layers {
            h = graph.matmul_bt(h, params[2 * l])?;
            h = graph.add_row_bias(h, params[2 * l + 1])?;
            if l + 1 < layers {
                h = match self.activation {
                    Activation::Tanh => graph.tanh(h),
                };
            }
        }
        Ok(h)
    }

    /// Single-input forward without a graph. Same arithmetic order as
    /// [`Mlp::forward_in`], so the two agree bit for bit.
    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.input_dim() {
            return Err(mismatch("policy_forward", self.input_dim(), z.len()));
        }
        let layers = self.weights.len();
        let mut h = z.to_vec();
        for l in 0..layers {
            let w = &self.weights[l];
            let b = self.biases[l].values();
            let mut next: Vec<f64> = (0..w.rows()).map(|j| math::dot(&h, w.row(j)) + b[j]).collect();
            if l + 1 < layers {
                match self.activation {
                    Activation::Tanh => next.iter_mut().for_each(|v| *v = v.tanh()),
                }
            }
            h = next;
        }
        Ok(h)
    }
}

/// ½‖predicted − expert‖².
pub fn bc_loss(predicted: &[f64], expert: &[f64]) -> Result<f64> {
    if predicted.len() != expert.len() {
        return Err(mismatch("bc_loss", expert.len(), predicted.len()));
    }
    Ok(0.5 * predicted.iter().zip(expert).map(|(p, e)| (p - e).powi(2)).sum::<f64>())
}

/// ∂a/∂s of the composite `π_ψ(M s)`, one backward pass per action
/// dimension. Row i is action i. For diagnostics only.
pub fn pipeline_jacobian(policy: &Mlp, mask: &Mask, s: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = mask.n();
    if s.len() != n || policy.input_dim() != n {
        return Err(mismatch("pipeline_jacobian", n, s.len()));
    }
    let m = policy.output_dim();
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let mut g = Graph::new();
        let state = g.param(Tensor::from_raw(vec![1, n], s.to_vec()));
        let mat = g.constant(mask.matrix().clone());
        let params: Vec<NodeId> = policy.tensors().into_iter().map(|t| g.constant(t.clone())).collect();
        let z = g.matmul_bt(state, mat)?;
        let out = policy.forward_in(&mut g, &params, z)?;
        let mut pick = vec![0.0; m];
        pick[i] = 1.0;
        let pick = g.constant(Tensor::from_raw(vec![1, m], pick));
        let selected = g.mul(out, pick)?;
        let root = g.sum(selected);
        g.backward(root)?;
        rows.push(g.grad(state).expect("state is tracked").into_values());
    }
    Ok(rows)
}

pub const JACOBIAN_STEP: f64 = 1e-6;

/// Finite-difference Jacobian of the scripted expert at `s`.
pub fn expert_jacobian(env: &EnvSpec, s: &[f64]) -> Result<Vec<Vec<f64>>> {
    if s.len() != env.state_dim() {
        return Err(mismatch("expert_jacobian", env.state_dim(), s.len()));
    }
    finite_diff_jacobian(|p| env.expert_action(p), s, JACOBIAN_STEP)
}
