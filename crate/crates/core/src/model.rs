//! Composite models (mask + policy, or encoder bottleneck + policy) and the
//! JSON checkpoint format.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{mismatch, Error, Result};
use crate::mask::{build_mask, Mask, MaskParams};
use crate::math::{self, Tensor};
use crate::policy::Mlp;
use crate::trainer::TrainConfig;
use crate::world::EnvSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Learned mask trained jointly with the policy.
    TransMask,
    /// Plain behavior cloning: frozen identity mask.
    Bc,
    /// Stochastic bottleneck encoder with a KL penalty toward a unit Normal.
    Vae,
    /// The scripted expert itself; used as a reference row.
    Expert,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::TransMask => "transmask",
            Method::Bc => "bc",
            Method::Vae => "vae",
            Method::Expert => "expert",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskSource {
    /// Frozen `I_n`; excluded from optimization.
    Identity { n: usize },
    Learned { params: MaskParams },
}

impl MaskSource {
    pub fn realize(&self) -> Result<Mask> {
        match self {
            MaskSource::Identity { n } => Ok(Mask::identity(*n)),
            MaskSource::Learned { params } => build_mask(params),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            MaskSource::Identity { n } => *n,
            MaskSource::Learned { params } => params.n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Masked { mask: MaskSource, policy: Mlp },
    /// `encoder: n → 2·latent` (mean, log-variance); `policy: latent → m`.
    Bottleneck { encoder: Mlp, latent_dim: usize, policy: Mlp },
    Expert,
}

impl Model {
    pub fn trainable_tensors(&self) -> Vec<&Tensor> {
        match self {
            Model::Masked { mask, policy } => {
                let mut out: Vec<&Tensor> = match mask {
                    MaskSource::Identity { .. } => Vec::new(),
                    MaskSource::Learned { params } => params.tensors.iter().collect(),
                };
                out.extend(policy.tensors());
                out
            }
            Model::Bottleneck { encoder, policy, .. } => {
                let mut out = encoder.tensors();
                out.extend(policy.tensors());
                out
            }
            Model::Expert => Vec::new(),
        }
    }

    pub fn trainable_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Model::Masked { mask, policy } => {
                let mut out: Vec<&mut Tensor> = match mask {
                    MaskSource::Identity { .. } => Vec::new(),
                    MaskSource::Learned { params } => params.tensors.iter_mut().collect(),
                };
                out.extend(policy.tensors_mut());
                out
            }
            Model::Bottleneck { encoder, policy, .. } => {
                let mut out = encoder.tensors_mut();
                out.extend(policy.tensors_mut());
                out
            }
            Model::Expert => Vec::new(),
        }
    }

    /// Flattened copy of every trainable parameter.
    pub fn flat_params(&self) -> Vec<f64> {
        self.trainable_tensors().iter().flat_map(|t| t.values().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = self.trainable_tensors().iter().map(|t| t.len()).sum();
        if total != flat.len() {
            return Err(mismatch("set_flat_params", total, flat.len()));
        }
        let mut offset = 0;
        for t in self.trainable_tensors_mut() {
            let len = t.len();
            t.values_mut().copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    /// The realized mask; `None` for models without one.
    pub fn mask(&self) -> Result<Option<Mask>> {
        match self {
            Model::Masked { mask, .. } => mask.realize().map(Some),
            _ => Ok(None),
        }
    }

    /// Freezes the current parameters into something that maps states to
    /// actions. The mask is realized once here.
    pub fn actor<'a>(&'a self, env: &'a EnvSpec) -> Result<Actor<'a>> {
        Ok(match self {
            Model::Masked { mask, policy } => Actor::Masked { mask: mask.realize()?, policy },
            Model::Bottleneck { encoder, latent_dim, policy } => Actor::Bottleneck { encoder, latent_dim: *latent_dim, policy },
            Model::Expert => Actor::Expert(env),
        })
    }
}

/// Immutable snapshot used for rollouts and probes; safe to share across
/// threads.
#[derive(Debug, Clone)]
pub enum Actor<'a> {
    Masked { mask: Mask, policy: &'a Mlp },
    Bottleneck { encoder: &'a Mlp, latent_dim: usize, policy: &'a Mlp },
    Expert(&'a EnvSpec),
}

impl Actor<'_> {
    /// Latent representation: `M s`, the encoder mean, or `s` for the expert.
    pub fn latent(&self, s: &[f64]) -> Result<Vec<f64>> {
        match self {
            Actor::Masked { mask, .. } => math::matvec(mask.matrix(), s),
            Actor::Bottleneck { encoder, latent_dim, .. } => {
                let mut out = encoder.forward(s)?;
                out.truncate(*latent_dim);
                Ok(out)
            }
            Actor::Expert(_) => Ok(s.to_vec()),
        }
    }

    pub fn act(&self, s: &[f64]) -> Result<Vec<f64>> {
        match self {
            Actor::Masked { policy, .. } | Actor::Bottleneck { policy, .. } => policy.forward(&self.latent(s)?),
            Actor::Expert(env) => {
                if s.len() != env.state_dim() {
                    return Err(mismatch("expert", env.state_dim(), s.len()));
                }
                Ok(env.expert_action(s))
            }
        }
    }

    /// `act` with errors mapped to a NaN action, which rollouts flag.
    pub fn act_or_nan(&self, s: &[f64]) -> Vec<f64> {
        self.act(s).unwrap_or_else(|_| vec![f64::NAN; 2])
    }
}

pub const CHECKPOINT_FORMAT: &str = "maskgrad-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub method: Method,
    pub env: EnvSpec,
    pub model: Model,
    pub config: Option<TrainConfig>,
    /// SHA-256 of the canonical JSON of `config`.
    pub config_digest: String,
    pub seed: u64,
}

impl Checkpoint {
    pub fn new(method: Method, env: EnvSpec, model: Model, config: Option<TrainConfig>, seed: u64) -> Result<Self> {
        let config_digest = match &config {
            Some(c) => digest(&serde_json::to_vec(c)?),
            None => String::new(),
        };
        Ok(Self { format: CHECKPOINT_FORMAT.into(), method, env, model, config, config_digest, seed })
    }

    /// Reference checkpoint that acts with the scripted expert.
    pub fn expert(env: EnvSpec) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            method: Method::Expert,
            env,
            model: Model::Expert,
            config: None,
            config_digest: String::new(),
            seed: 0,
        }
    }

    pub fn actor(&self) -> Result<Actor<'_>> {
        self.model.actor(&self.env)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Self = serde_json::from_str(text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidParams(format!("unsupported checkpoint format {:?}", ckpt.format)));
        }
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.env.state_dim(), self.env.action_dim());
        match &self.model {
            Model::Masked { mask, policy } => {
                if let MaskSource::Learned { params } = mask {
                    params.validate()?;
                }
                policy.validate()?;
                if mask.n() != n || policy.input_dim() != n || policy.output_dim() != m {
                    return Err(mismatch("checkpoint", format!("state {n}, action {m}"), "inconsistent layer sizes"));
                }
            }
            Model::Bottleneck { encoder, latent_dim, policy } => {
                encoder.validate()?;
                policy.validate()?;
                if encoder.input_dim() != n || encoder.output_dim() != 2 * latent_dim || policy.input_dim() != *latent_dim || policy.output_dim() != m {
                    return Err(mismatch("checkpoint", format!("state {n}, action {m}"), "inconsistent layer sizes"));
                }
            }
            Model::Expert => {}
        }
        Ok(())
    }
}

pub(crate) fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
