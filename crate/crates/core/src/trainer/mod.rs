//! Joint optimization of mask and policy under the plain imitation loss,
//! plus the identity-mask and stochastic-bottleneck baselines.
//!
//! The masked objective has a single term,
//!
//! ```text
//! L(ψ, θ) = mean over batch of ½ ‖π_ψ(M_θ s) − a‖²
//! ```
//!
//! and both ψ and θ receive one Adam update per mini-batch. The bottleneck
//! baseline adds `λ · KL(q(z|s) ‖ N(0, I))` on top of the same imitation term.

mod adam;
mod compare;
mod config;
mod log;
mod probe;

pub use adam::Adam;
pub use compare::{compare, eval_seed, mean_std, CompareReport, CompareSettings, MethodRow, MethodSpec, RegimeCell, SeedResult};
pub use config::TrainConfig;
pub use log::{EpochLog, TrainLog};
pub use probe::{probe_latent, ridge_r2, ProbeReport, PROBE_RIDGE};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{mismatch, Error, Result};
use crate::mask::{column_relevance, MaskParams, MaskVariant};
use crate::math::{Graph, NodeId, Tensor};
use crate::model::{Checkpoint, MaskSource, Method, Model};
use crate::policy::Mlp;
use crate::world::Dataset;

/// A mini-batch as two row-major matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Tensor,
    pub actions: Tensor,
}

impl Batch {
    pub fn new(pairs: &[(&[f64], &[f64])]) -> Result<Self> {
        let Some(first) = pairs.first() else {
            return Err(Error::InvalidParams("batch must not be empty".into()));
        };
        let (n, m) = (first.0.len(), first.1.len());
        let mut s = Vec::with_capacity(pairs.len() * n);
        let mut a = Vec::with_capacity(pairs.len() * m);
        for (si, ai) in pairs {
            if si.len() != n || ai.len() != m {
                return Err(mismatch("Batch::new", format!("({n}, {m})"), format!("({}, {})", si.len(), ai.len())));
            }
            s.extend_from_slice(si);
            a.extend_from_slice(ai);
        }
        Ok(Self { states: Tensor::matrix(pairs.len(), n, s)?, actions: Tensor::matrix(pairs.len(), m, a)? })
    }

    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Objective that was differentiated.
    pub loss: f64,
    /// Imitation term alone (equals `loss` for masked models).
    pub bc_loss: f64,
    /// Mean KL per sample; zero for masked models.
    pub kl: f64,
}

/// Fresh model for `n`-dim states and `m`-dim actions. The RNG is consumed
/// mask first, then policy (or encoder, then policy).
pub fn init_model(config: &TrainConfig, n: usize, m: usize, rng: &mut ChaCha8Rng) -> Result<Model> {
    let widths = |input: usize, output: usize| {
        let mut s = vec![input];
        s.extend(&config.hidden);
        s.push(output);
        s
    };
    Ok(match config.method {
        Method::TransMask => {
            let params = match config.mask_variant {
                MaskVariant::DirectMatrix => MaskParams::direct(n, config.norm, rng)?,
                MaskVariant::OnesEncoder => {
                    MaskParams::ones_encoder(n, config.encoder_input, config.encoder_hidden, config.norm, rng)?
                }
            };
            let policy = Mlp::new(&widths(n, m), rng)?;
            Model::Masked { mask: MaskSource::Learned { params }, policy }
        }
        Method::Bc => Model::Masked { mask: MaskSource::Identity { n }, policy: Mlp::new(&widths(n, m), rng)? },
        Method::Vae => {
            if config.latent_dim >= n {
                return Err(Error::Config(format!("latent_dim {} must be below the state dim {n}", config.latent_dim)));
            }
            let encoder = Mlp::new(&widths(n, 2 * config.latent_dim), rng)?;
            let policy = Mlp::new(&widths(config.latent_dim, m), rng)?;
            Model::Bottleneck { encoder, latent_dim: config.latent_dim, policy }
        }
        Method::Expert => return Err(Error::Config("the expert is not trainable".into())),
    })
}

/// Standard-normal reparameterization noise for a bottleneck batch.
pub fn sample_noise(rows: usize, latent: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let v = (0..rows * latent).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::from_raw(vec![rows, latent], v)
}

/// Forward and backward for one batch. Returns the statistics and one
/// gradient per entry of [`Model::trainable_tensors`].
///
/// `noise` is required for bottleneck models and ignored otherwise.
pub fn loss_and_grads(model: &Model, batch: &Batch, kl_weight: f64, noise: Option<&Tensor>) -> Result<(StepStats, Vec<Tensor>)> {
    let b = batch.len() as f64;
    let mut g = Graph::new();
    let states = g.constant(batch.states.clone());
    let actions = g.constant(batch.actions.clone());
    let mut leaves: Vec<NodeId> = Vec::new();
    let (loss, bc, kl) = match model {
        Model::Masked { mask, policy } => {
            let z = match mask {
                MaskSource::Identity { n } => {
                    if batch.states.cols() != *n {
                        return Err(mismatch("train_step", *n, batch.states.cols()));
                    }
                    states
                }
                MaskSource::Learned { params } => {
                    let theta = params.register(&mut g);
                    leaves.extend(&theta);
                    let m = params.build_in(&mut g, &theta)?;
                    // Row r of S·Mᵀ is (M s_r)ᵀ.
                    g.matmul_bt(states, m)?
                }
            };
            let psi = policy.register(&mut g);
            leaves.extend(&psi);
            let pred = policy.forward_in(&mut g, &psi, z)?;
            let diff = g.sub(pred, actions)?;
            let sq = g.sum_squares(diff)?;
            let loss = g.scale(sq, 0.5 / b);
            (loss, loss, None)
        }
        Model::Bottleneck { encoder, latent_dim, policy } => {
            let noise = noise.ok_or_else(|| Error::InvalidParams("bottleneck step needs noise".into()))?;
            let enc = encoder.register(&mut g);
            let dec = policy.register(&mut g);
            leaves.extend(&enc);
            leaves.extend(&dec);
            let h = encoder.forward_in(&mut g, &enc, states)?;
            let mean = g.slice_cols(h, 0, *latent_dim)?;
            let logvar = g.slice_cols(h, *latent_dim, *latent_dim)?;
            let half = g.scale(logvar, 0.5);
            let std = g.exp(half);
            let eps = g.constant(noise.clone());
            let spread = g.mul(std, eps)?;
            let z = g.add(mean, spread)?;
            let pred = policy.forward_in(&mut g, &dec, z)?;
            let diff = g.sub(pred, actions)?;
            let sq = g.sum_squares(diff)?;
            let bc = g.scale(sq, 0.5 / b);
            // KL(N(μ, σ²) ‖ N(0, 1)) = −½ Σ (1 + log σ² − μ² − σ²)
            let ones = g.constant(Tensor::from_raw(vec![batch.len(), *latent_dim], vec![1.0; batch.len() * latent_dim]));
            let var = g.exp(logvar);
            let mean_sq = g.mul(mean, mean)?;
            let t = g.add(ones, logvar)?;
            let t = g.sub(t, mean_sq)?;
            let t = g.sub(t, var)?;
            let total = g.sum(t);
            let kl = g.scale(total, -0.5 / b);
            let weighted = g.scale(kl, kl_weight);
            let loss = g.add(bc, weighted)?;
            (loss, bc, Some(kl))
        }
        Model::Expert => return Err(Error::Config("the expert is not trainable".into())),
    };
    g.backward(loss)?;
    let stats = StepStats {
        loss: g.value(loss).values()[0],
        bc_loss: g.value(bc).values()[0],
        kl: kl.map_or(0.0, |k| g.value(k).values()[0]),
    };
    let grads = leaves.iter().map(|id| g.grad(*id).expect("leaves are tracked")).collect();
    Ok((stats, grads))
}

/// One optimizer step on `model`. Fails without touching the parameters if
/// the loss or any gradient is non-finite.
pub fn train_step(
    model: &mut Model,
    adam: &mut Adam,
    batch: &Batch,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StepStats> {
    if batch.is_empty() {
        return Err(Error::InvalidParams("batch must not be empty".into()));
    }
    let noise = match model {
        Model::Bottleneck { latent_dim, .. } => Some(sample_noise(batch.len(), *latent_dim, rng)),
        _ => None,
    };
    let (stats, grads) = loss_and_grads(model, batch, config.kl_weight, noise.as_ref())?;
    if !stats.loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss { epoch: 0, step: adam.steps() as usize });
    }
    adam.step(model.trainable_tensors_mut(), &grads);
    Ok(stats)
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: TrainLog,
}

/// Shuffled mini-batch training, deterministic under `config.seed`.
///
/// The dataset's ground-truth relevance list is read only to fill the
/// separation column of the log; it never influences the parameters.
pub fn train(config: &TrainConfig, dataset: &Dataset) -> Result<TrainOutcome> {
    config.validate()?;
    dataset.check_layout()?;
    let (n, m) = (dataset.state_dim(), dataset.action_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = init_model(config, n, m, &mut rng)?;
    let mut adam = Adam::new(config.lr, config.beta1, config.beta2, config.eps);
    let pairs: Vec<(&[f64], &[f64])> = dataset.pairs().collect();
    let relevant = &dataset.header.relevant;
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..pairs.len()).collect();

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let (mut bc_sum, mut kl_sum) = (0.0, 0.0);
        for (step, chunk) in order.chunks(config.batch).enumerate() {
            let batch: Vec<_> = chunk.iter().map(|&i| pairs[i]).collect();
            let batch = Batch::new(&batch)?;
            let stats = train_step(&mut model, &mut adam, &batch, config, &mut rng).map_err(|e| match e {
                Error::NonFiniteLoss { .. } => Error::NonFiniteLoss { epoch, step },
                other => other,
            })?;
            bc_sum += stats.bc_loss * batch.len() as f64;
            kl_sum += stats.kl * batch.len() as f64;
            // Row-simplex check on the updated mask.
            model.mask()?;
        }
        let count = pairs.len().max(1) as f64;
        let relevance = model.mask()?.map(|mask| column_relevance(&mask));
        log.epochs.push(EpochLog {
            epoch,
            loss: bc_sum / count,
            kl: kl_sum / count,
            separation: relevance.as_ref().map(|r| r.separation(relevant)),
            relevance: relevance.map(|r| r.0),
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }
    let checkpoint = Checkpoint::new(config.method, dataset.header.env.clone(), model, Some(config.clone()), config.seed)?;
    Ok(TrainOutcome { checkpoint, log })
}

/// Stochastic-bottleneck baseline: encoder → (mean, log-variance),
/// reparameterized sample, policy on the sample; loss = imitation + λ·KL.
pub fn train_vae_baseline(config: &TrainConfig, dataset: &Dataset) -> Result<TrainOutcome> {
    let config = TrainConfig { method: Method::Vae, ..config.clone() };
    train(&config, dataset)
}

/// Closed-form KL(N(mean, exp(logvar)) ‖ N(0, I)).
pub fn gaussian_kl(mean: &[f64], logvar: &[f64]) -> f64 {
    -0.5 * mean
        .iter()
        .zip(logvar)
        .map(|(m, lv)| 1.0 + lv - m * m - lv.exp())
        .sum::<f64>()
}
