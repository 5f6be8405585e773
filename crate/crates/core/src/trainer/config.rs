use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{MaskVariant, Normalization, DEFAULT_ENCODER_HIDDEN, DEFAULT_ENCODER_INPUT};
use crate::model::Method;
use crate::policy::DEFAULT_HIDDEN;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub norm: Normalization,
    pub mask_variant: MaskVariant,
    /// Ones-encoder input size k.
    pub encoder_input: usize,
    /// Ones-encoder hidden width.
    pub encoder_hidden: usize,
    /// Hidden widths of the policy MLP (and of the VAE encoder).
    pub hidden: Vec<usize>,
    pub seed: u64,
    /// VAE only.
    pub latent_dim: usize,
    /// VAE only: weight λ of the KL term.
    pub kl_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::TransMask,
            epochs: 200,
            batch: 64,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            norm: Normalization::Sparsemax,
            mask_variant: MaskVariant::OnesEncoder,
            encoder_input: DEFAULT_ENCODER_INPUT,
            encoder_hidden: DEFAULT_ENCODER_HIDDEN,
            hidden: DEFAULT_HIDDEN.to_vec(),
            seed: 0,
            latent_dim: 4,
            kl_weight: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn for_method(method: Method) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("train.batch must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("train.lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::Config("Adam betas must be in [0, 1) and eps positive".into()));
        }
        if !(self.kl_weight.is_finite() && self.kl_weight >= 0.0) {
            return Err(Error::Config(format!("train.kl_weight must be ≥ 0, got {}", self.kl_weight)));
        }
        if self.hidden.contains(&0) || self.encoder_input == 0 || self.encoder_hidden == 0 || self.latent_dim == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.method == Method::Expert {
            return Err(Error::Config("the expert is not trainable".into()));
        }
        Ok(())
    }
}
