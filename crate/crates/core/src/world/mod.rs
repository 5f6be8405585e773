//! Synthetic disentangled-state tasks, scripted experts, demonstrations and
//! closed-loop evaluation.

mod dataset;
mod env;

pub use dataset::{child_seed, generate_demonstrations, Dataset, DatasetHeader, Demonstration, LengthStats, DATASET_FORMAT};
pub use env::{clip, EnvSpec, Regime, Task};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One closed-loop episode. `states` has one more entry than `actions`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub success: bool,
    /// The policy emitted a non-finite action; the episode counts as failed.
    pub non_finite: bool,
}

/// Runs one episode from a reset drawn with `seed`. The episode ends on
/// success, on a non-finite action, or at the horizon.
pub fn rollout<P>(env: &EnvSpec, regime: Regime, policy: P, seed: u64) -> Trajectory
where
    P: Fn(&[f64]) -> Vec<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = env.reset(regime, &mut rng);
    let mut traj = Trajectory { seed, states: vec![s.clone()], actions: Vec::new(), success: false, non_finite: false };
    for _ in 0..env.horizon {
        let a = policy(&s);
        if a.len() != env.action_dim() || a.iter().any(|v| !v.is_finite()) {
            traj.non_finite = true;
            break;
        }
        s = env.step(&s, &a);
        traj.actions.push(a);
        traj.states.push(s.clone());
        if env.is_success(&s) {
            traj.success = true;
            break;
        }
    }
    traj
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub episodes: usize,
    pub successes: usize,
    pub non_finite: usize,
    pub success_rate: f64,
}

/// Success rate over `episodes` rollouts. Episode i uses
/// `child_seed(seed, i)`, so the result does not depend on scheduling.
pub fn evaluate<P>(env: &EnvSpec, regime: Regime, policy: P, episodes: usize, seed: u64) -> EvalOutcome
where
    P: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let (successes, non_finite) = (0..episodes as u64)
        .into_par_iter()
        .map(|i| {
            let t = rollout(env, regime, &policy, child_seed(seed, i));
            (usize::from(t.success), usize::from(t.non_finite))
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    EvalOutcome {
        episodes,
        successes,
        non_finite,
        success_rate: if episodes == 0 { 0.0 } else { successes as f64 / episodes as f64 },
    }
}
