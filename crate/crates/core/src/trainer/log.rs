use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean imitation loss over the epoch's samples.
    pub loss: f64,
    /// Mean KL over the epoch's samples (bottleneck models only).
    pub kl: f64,
    /// Mean relevant relevance minus mean irrelevant relevance.
    pub separation: Option<f64>,
    pub relevance: Option<Vec<f64>>,
    /// Not written to the deterministic CSV.
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }

    pub fn separations(&self) -> Vec<f64> {
        self.epochs.iter().filter_map(|e| e.separation).collect()
    }

    /// `epoch,loss,kl,separation`. Byte-identical across reruns.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "loss", "kl", "separation"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.loss.to_string(),
                e.kl.to_string(),
                e.separation.map(|s| s.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `epoch,wall_ms`. Kept apart from the loss log because it varies run to run.
    pub fn write_timing_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "wall_ms"])?;
        for e in &self.epochs {
            w.write_record([e.epoch.to_string(), format!("{:.3}", e.wall_ms)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Long-format `epoch,index,relevance` snapshots for heatmaps over time.
    pub fn write_relevance_history_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "index", "relevance"])?;
        for e in &self.epochs {
            if let Some(rel) = &e.relevance {
                for (i, r) in rel.iter().enumerate() {
                    w.write_record([e.epoch.to_string(), i.to_string(), r.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// True when the separation score trends upward over the last half of
    /// training. The tail is cut into windows of `max_window_frac` of all
    /// epochs and compared by window mean: at most one window may fall below
    /// the best earlier window, and the last window must not be below the
    /// first. Per-epoch jitter inside a window is ignored.
    pub fn separation_trend_ok(&self, max_window_frac: f64) -> bool {
        let seps = self.separations();
        if seps.len() < 2 {
            return true;
        }
        let tail = &seps[seps.len() / 2..];
        let width = ((max_window_frac * seps.len() as f64).floor() as usize).max(1);
        let means: Vec<f64> = tail.chunks(width).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        let mut best = f64::NEG_INFINITY;
        let mut violations = 0;
        for &m in &means {
            if m < best {
                violations += 1;
            } else {
                best = m;
            }
        }
        violations <= 1 && means.last() >= means.first()
    }
}
