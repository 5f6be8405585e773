//! Expert demonstrations and their JSON-lines file format.
//!
//! The first line is a header record holding the [`EnvSpec`] and the
//! ground-truth relevance layout; every following line is one (s, a) pair.
//! Training reads only the pairs and the dimensions.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::{EnvSpec, Regime};
use crate::error::{Error, Result};

pub const DATASET_FORMAT: &str = "maskgrad-dataset/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub min: usize,
    pub mean: f64,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub kind: String,
    pub format: String,
    pub env: EnvSpec,
    /// Ground-truth relevant indices, for evaluation and reporting only.
    pub relevant: Vec<usize>,
    pub regime: Regime,
    pub seed: u64,
    pub trajectories: usize,
    pub pairs: usize,
    pub discarded: usize,
    pub episode_length: LengthStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PairRecord {
    kind: String,
    traj: usize,
    step: usize,
    regime: Regime,
    seed: u64,
    s: Vec<f64>,
    a: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub id: usize,
    pub seed: u64,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub demos: Vec<Demonstration>,
}

impl Dataset {
    pub fn state_dim(&self) -> usize {
        self.header.env.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.header.env.action_dim()
    }

    pub fn pair_count(&self) -> usize {
        self.demos.iter().map(|d| d.states.len()).sum()
    }

    /// Every (s, a) pair in trajectory order.
    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.demos
            .iter()
            .flat_map(|d| d.states.iter().zip(&d.actions).map(|(s, a)| (s.as_slice(), a.as_slice())))
    }

    /// Checks every pair against the header dimensions.
    pub fn check_layout(&self) -> Result<()> {
        let (n, m) = (self.state_dim(), self.action_dim());
        for d in &self.demos {
            if d.states.len() != d.actions.len() {
                return Err(Error::LayoutMismatch(format!("trajectory {} has unequal state/action counts", d.id)));
            }
            for (s, a) in d.states.iter().zip(&d.actions) {
                if s.len() != n || a.len() != m {
                    return Err(Error::LayoutMismatch(format!(
                        "trajectory {} has a pair of dims ({}, {}), header says ({n}, {m})",
                        d.id,
                        s.len(),
                        a.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{}", serde_json::to_string(&self.header)?)?;
        for d in &self.demos {
            for (step, (s, a)) in d.states.iter().zip(&d.actions).enumerate() {
                let rec = PairRecord {
                    kind: "pair".into(),
                    traj: d.id,
                    step,
                    regime: self.header.regime,
                    seed: d.seed,
                    s: s.clone(),
                    a: a.clone(),
                };
                writeln!(out, "{}", serde_json::to_string(&rec)?)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut lines = file.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::LayoutMismatch("empty dataset file".into()))??;
        let header: DatasetHeader = serde_json::from_str(&first)?;
        if header.format != DATASET_FORMAT {
            return Err(Error::LayoutMismatch(format!("unsupported dataset format {:?}", header.format)));
        }
        let mut demos: Vec<Demonstration> = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: PairRecord = serde_json::from_str(&line)?;
            match demos.last_mut() {
                Some(d) if d.id == rec.traj => {
                    d.states.push(rec.s);
                    d.actions.push(rec.a);
                }
                _ => demos.push(Demonstration { id: rec.traj, seed: rec.seed, states: vec![rec.s], actions: vec![rec.a] }),
            }
        }
        let ds = Self { header, demos };
        ds.check_layout()?;
        Ok(ds)
    }
}

/// Records `count` successful expert episodes. Failed episodes are discarded
/// and redrawn; more than 10% failures is a configuration error.
pub fn generate_demonstrations(env: &EnvSpec, regime: Regime, count: usize, seed: u64) -> Result<Dataset> {
    env.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut demos = Vec::with_capacity(count);
    let mut failed = 0usize;
    while demos.len() < count {
        let episode_seed = rng.next_u64();
        let traj = super::rollout(env, regime, |s| env.expert_action(s), episode_seed);
        if traj.success {
            let len = traj.actions.len();
            let mut states = traj.states;
            states.truncate(len);
            demos.push(Demonstration { id: demos.len(), seed: episode_seed, states, actions: traj.actions });
        } else {
            failed += 1;
            if failed * 10 > count + failed {
                return Err(Error::ExpertFailure { failed, attempted: demos.len() + failed });
            }
        }
    }
    let lengths: Vec<usize> = demos.iter().map(|d| d.actions.len()).collect();
    let pairs = lengths.iter().sum();
    let episode_length = LengthStats {
        min: lengths.iter().copied().min().unwrap_or(0),
        mean: if lengths.is_empty() { 0.0 } else { pairs as f64 / lengths.len() as f64 },
        max: lengths.iter().copied().max().unwrap_or(0),
    };
    Ok(Dataset {
        header: DatasetHeader {
            kind: "header".into(),
            format: DATASET_FORMAT.into(),
            env: env.clone(),
            relevant: env.relevant_indices(),
            regime,
            seed,
            trajectories: demos.len(),
            pairs,
            discarded: failed,
            episode_length,
        },
        demos,
    })
}

/// Derives the i-th child seed from a base seed.
pub fn child_seed(base: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index);
    rng.random()
}
