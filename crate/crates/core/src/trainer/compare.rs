//! Method × regime comparison over several seeds.
//!
//! For each seed one ID demonstration set is generated and shared by every
//! method, each method is trained with that seed, and every regime is
//! evaluated with episode seeds that depend only on (seed, regime). Cells run
//! in parallel; each owns its RNG and writes to its own slot.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{probe_latent, train, ProbeReport, TrainConfig};
use crate::error::{Error, Result};
use crate::mask::column_relevance;
use crate::model::{Checkpoint, Method};
use crate::world::{child_seed, evaluate, generate_demonstrations, Dataset, EnvSpec, EvalOutcome, Regime};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub label: String,
    pub config: TrainConfig,
}

impl MethodSpec {
    pub fn new(label: impl Into<String>, config: TrainConfig) -> Self {
        Self { label: label.into(), config }
    }

    pub fn expert() -> Self {
        Self { label: "expert".into(), config: TrainConfig { method: Method::Expert, ..TrainConfig::default() } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSettings {
    pub env: EnvSpec,
    pub demos: usize,
    pub regimes: Vec<Regime>,
    pub seeds: Vec<u64>,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub outcomes: Vec<(Regime, EvalOutcome)>,
    pub relevance: Option<Vec<f64>>,
    pub probe: Option<ProbeReport>,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeCell {
    pub regime: Regime,
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub std: f64,
    pub successes: usize,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub label: String,
    pub method: Method,
    pub cells: Vec<RegimeCell>,
    pub seeds: Vec<SeedResult>,
}

impl MethodRow {
    pub fn cell(&self, regime: Regime) -> Option<&RegimeCell> {
        self.cells.iter().find(|c| c.regime == regime)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub env: EnvSpec,
    pub demos: usize,
    pub episodes: usize,
    pub regimes: Vec<Regime>,
    pub rows: Vec<MethodRow>,
}

/// Evaluation seed for one (training seed, regime) pair.
pub fn eval_seed(seed: u64, regime: Regime) -> u64 {
    let idx = Regime::ALL.iter().position(|r| *r == regime).expect("listed regime") as u64;
    child_seed(seed, 1 + idx)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn run_cell(spec: &MethodSpec, settings: &CompareSettings, dataset: &Dataset, seed: u64) -> Result<SeedResult> {
    let (checkpoint, final_loss) = if spec.config.method == Method::Expert {
        (Checkpoint::expert(settings.env.clone()), None)
    } else {
        let config = TrainConfig { seed, ..spec.config.clone() };
        let out = train(&config, dataset)?;
        let loss = out.log.final_loss();
        (out.checkpoint, loss)
    };
    let actor = checkpoint.actor()?;
    let outcomes = settings
        .regimes
        .iter()
        .map(|&regime| {
            let out = evaluate(&settings.env, regime, |s| actor.act_or_nan(s), settings.episodes, eval_seed(seed, regime));
            (regime, out)
        })
        .collect();
    let relevance = checkpoint.model.mask()?.map(|m| column_relevance(&m).0);
    let probe = match spec.config.method {
        Method::Expert => None,
        _ => Some(probe_latent(&actor, dataset, &dataset.header.relevant)?),
    };
    Ok(SeedResult { seed, outcomes, relevance, probe, final_loss })
}

pub fn compare(methods: &[MethodSpec], settings: &CompareSettings) -> Result<CompareReport> {
    if methods.is_empty() {
        return Err(Error::Config("compare needs at least one method".into()));
    }
    if settings.seeds.is_empty() || settings.regimes.is_empty() {
        return Err(Error::Config("compare needs at least one seed and one regime".into()));
    }
    let datasets: Vec<Dataset> = settings
        .seeds
        .par_iter()
        .map(|&seed| generate_demonstrations(&settings.env, Regime::Id, settings.demos, seed))
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> = (0..methods.len()).flat_map(|m| (0..settings.seeds.len()).map(move |s| (m, s))).collect();
    let results: Vec<SeedResult> = cells
        .par_iter()
        .map(|&(m, s)| run_cell(&methods[m], settings, &datasets[s], settings.seeds[s]))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(methods.len());
    let mut results = results.into_iter();
    for spec in methods {
        let seeds: Vec<SeedResult> = results.by_ref().take(settings.seeds.len()).collect();
        let cells = settings
            .regimes
            .iter()
            .map(|&regime| {
                let outs: Vec<&EvalOutcome> = seeds
                    .iter()
                    .filter_map(|r| r.outcomes.iter().find(|(g, _)| *g == regime).map(|(_, o)| o))
                    .collect();
                let rates: Vec<f64> = outs.iter().map(|o| o.success_rate).collect();
                let (mean, std) = mean_std(&rates);
                RegimeCell {
                    regime,
                    mean,
                    std,
                    successes: outs.iter().map(|o| o.successes).sum(),
                    episodes: outs.iter().map(|o| o.episodes).sum(),
                }
            })
            .collect();
        rows.push(MethodRow { label: spec.label.clone(), method: spec.config.method, cells, seeds });
    }
    Ok(CompareReport {
        env: settings.env.clone(),
        demos: settings.demos,
        episodes: settings.episodes,
        regimes: settings.regimes.clone(),
        rows,
    })
}

pub const TABLE_COLUMNS: [&str; 11] = [
    "method",
    "id_mean",
    "id_std",
    "ood_mean",
    "ood_std",
    "ood_relevant_mean",
    "ood_relevant_std",
    "ood_irrelevant_mean",
    "ood_irrelevant_std",
    "seeds",
    "episodes_per_seed",
];

impl CompareReport {
    pub fn row(&self, label: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// One row per method; a mean/std column pair per regime (empty when the
    /// regime was not evaluated). The column set never changes.
    pub fn write_table_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(TABLE_COLUMNS)?;
        for row in &self.rows {
            let mut rec = vec![row.label.clone()];
            for regime in Regime::ALL {
                match row.cell(regime) {
                    Some(c) => {
                        rec.push(c.mean.to_string());
                        rec.push(c.std.to_string());
                    }
                    None => rec.extend([String::new(), String::new()]),
                }
            }
            rec.push(row.seeds.len().to_string());
            rec.push(self.episodes.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `method,seed,index,relevance,ground_truth_relevant` for masked methods.
    pub fn write_relevance_csv(&self, path: &Path) -> Result<()> {
        let relevant = self.env.relevant_indices();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["method", "seed", "index", "relevance", "ground_truth_relevant"])?;
        for row in &self.rows {
            for sr in &row.seeds {
                if let Some(rel) = &sr.relevance {
                    for (i, r) in rel.iter().enumerate() {
                        let flag = if relevant.contains(&i) { "1" } else { "0" };
                        w.write_record([row.label.clone(), sr.seed.to_string(), i.to_string(), r.to_string(), flag.into()])?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `method,seed,action_r2,relevant_r2,irrelevant_r2`.
    pub fn write_probe_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["method", "seed", "action_r2", "relevant_r2", "irrelevant_r2"])?;
        for row in &self.rows {
            for sr in &row.seeds {
                if let Some(p) = &sr.probe {
                    w.write_record([
                        row.label.clone(),
                        sr.seed.to_string(),
                        p.action_r2.to_string(),
                        p.relevant_r2.to_string(),
                        p.irrelevant_r2.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
