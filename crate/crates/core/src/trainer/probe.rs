//! Linear probes on the latent representation.
//!
//! Three ridge regressions are fit on the latents of 80% of the trajectories
//! and scored (R²) on the rest: latent → expert action, latent → relevant
//! state dims, latent → irrelevant state dims. A latent that kept only what
//! the action needs scores high on the first and low on the last.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Actor;
use crate::world::Dataset;

pub const PROBE_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub action_r2: f64,
    pub relevant_r2: f64,
    pub irrelevant_r2: f64,
    pub train_pairs: usize,
    pub test_pairs: usize,
    /// The latent had no variance on the training split.
    pub degenerate: bool,
}

/// Mean held-out R² over target columns of a ridge fit with intercept.
/// Returns 0 when the training latents have zero variance.
pub fn ridge_r2(train_x: &[Vec<f64>], train_y: &[Vec<f64>], test_x: &[Vec<f64>], test_y: &[Vec<f64>], ridge: f64) -> Result<(f64, bool)> {
    if train_x.is_empty() || test_x.is_empty() {
        return Err(Error::InvalidParams("probe needs non-empty train and test splits".into()));
    }
    let d = train_x[0].len();
    let k = train_y[0].len();
    let mean_of = |rows: &[Vec<f64>], width: usize| {
        let mut mu = vec![0.0; width];
        for r in rows {
            mu.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        mu.iter_mut().for_each(|m| *m /= rows.len() as f64);
        mu
    };
    let x_mean = mean_of(train_x, d);
    let y_mean = mean_of(train_y, k);
    let x = DMatrix::from_fn(train_x.len(), d, |i, j| train_x[i][j] - x_mean[j]);
    let y = DMatrix::from_fn(train_y.len(), k, |i, j| train_y[i][j] - y_mean[j]);
    if x.iter().all(|v| *v == 0.0) {
        log::warn!("probe latent has zero variance; reporting R² = 0");
        return Ok((0.0, true));
    }
    let gram = x.transpose() * &x + DMatrix::identity(d, d) * ridge;
    let rhs = x.transpose() * &y;
    let weights = match gram.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => gram.lu().solve(&rhs).ok_or_else(|| Error::InvalidParams("singular probe system".into()))?,
    };

    let mut scores = Vec::with_capacity(k);
    for t in 0..k {
        let actual: Vec<f64> = test_y.iter().map(|r| r[t]).collect();
        let mean = actual.iter().sum::<f64>() / actual.len() as f64;
        let ss_tot: f64 = actual.iter().map(|v| (v - mean).powi(2)).sum();
        if ss_tot <= 0.0 {
            continue;
        }
        let w = DVector::from_fn(d, |j, _| weights[(j, t)]);
        let ss_res: f64 = test_x
            .iter()
            .zip(&actual)
            .map(|(row, y)| {
                let pred = y_mean[t] + row.iter().zip(&x_mean).zip(w.iter()).map(|((v, mu), w)| (v - mu) * w).sum::<f64>();
                (y - pred).powi(2)
            })
            .sum();
        scores.push(1.0 - ss_res / ss_tot);
    }
    if scores.is_empty() {
        return Ok((0.0, false));
    }
    Ok((scores.iter().sum::<f64>() / scores.len() as f64, false))
}

/// Fits the three probes on `actor`'s latents over `dataset`. Trajectory ids
/// with `id % 5 == 4` form the held-out split.
pub fn probe_latent(actor: &Actor<'_>, dataset: &Dataset, relevant: &[usize]) -> Result<ProbeReport> {
    let n = dataset.state_dim();
    let irrelevant: Vec<usize> = (0..n).filter(|i| !relevant.contains(i)).collect();
    let mut train = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut test = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for d in &dataset.demos {
        let split = if d.id % 5 == 4 { &mut test } else { &mut train };
        for (s, a) in d.states.iter().zip(&d.actions) {
            split.0.push(actor.latent(s)?);
            split.1.push(a.clone());
            split.2.push(relevant.iter().map(|&i| s[i]).collect::<Vec<_>>());
            split.3.push(irrelevant.iter().map(|&i| s[i]).collect::<Vec<_>>());
        }
    }
    if train.0.is_empty() || test.0.is_empty() {
        return Err(Error::Config("probing needs at least 5 trajectories".into()));
    }
    let (action_r2, degenerate) = ridge_r2(&train.0, &train.1, &test.0, &test.1, PROBE_RIDGE)?;
    let relevant_r2 = if relevant.is_empty() { 0.0 } else { ridge_r2(&train.0, &train.2, &test.0, &test.2, PROBE_RIDGE)?.0 };
    let irrelevant_r2 = if irrelevant.is_empty() { 0.0 } else { ridge_r2(&train.0, &train.3, &test.0, &test.3, PROBE_RIDGE)?.0 };
    Ok(ProbeReport { action_r2, relevant_r2, irrelevant_r2, train_pairs: train.0.len(), test_pairs: test.0.len(), degenerate })
}
