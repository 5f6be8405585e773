//! The `maskgrad` command-line tool.
//!
//! Every command is a pure function of its config file, flags and input
//! files. Exit codes: 0 success, 1 usage or configuration error, 2 runtime
//! failure (non-finite loss, expert failure, I/O).

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mask::{column_relevance, write_relevance_csv, MaskVariant, Normalization};
use crate::model::{Checkpoint, Method};
use crate::trainer::{self, compare, eval_seed, mean_std, probe_latent, CompareSettings, MethodSpec, TrainConfig};
use crate::world::{evaluate, generate_demonstrations, Dataset, EnvSpec, EvalOutcome, Regime, Task};
use config::{resolve_seed, EvalSection, RunFile, SEED_ENV_VAR};

pub const DEFAULT_OUT: &str = "out";
pub const DATASET_FILE: &str = "dataset.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
/// The λ grid of the bottleneck sweep.
pub const DEFAULT_KL_SWEEP: [f64; 5] = [0.0, 1e-4, 1e-3, 1e-2, 1e-1];

#[derive(Debug, Parser)]
#[command(name = "maskgrad", version, about = "Learned static state masks for behavior cloning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate expert demonstrations (writes <out>/dataset.jsonl).
    Gen(GenArgs),
    /// Train a policy on a dataset (writes checkpoint, logs, mask, relevance).
    Train(TrainArgs),
    /// Evaluate a checkpoint, or the scripted expert, per regime.
    Eval(EvalArgs),
    /// Train and evaluate several methods over seeds; emit the result table.
    Compare(CompareArgs),
    /// Sweep the bottleneck baseline's KL weight.
    Sweep(SweepArgs),
    /// Export the mask matrix and relevance vector of a checkpoint.
    Mask(MaskArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration with [env], [train] and [eval] sections.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Global seed. Falls back to the config file, then MASKGRAD_SEED; required.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: out].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EnvArgs {
    /// Task [default: reach].
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Number of expert demonstrations [default: 100].
    #[arg(long)]
    pub demos: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    /// Training method [default: transmask].
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Row normalizer of the mask [default: sparsemax].
    #[arg(long, value_enum)]
    pub norm: Option<NormArg>,
    /// Mask parameterization [default: ones].
    #[arg(long, value_enum)]
    pub mask_variant: Option<VariantArg>,
    /// Training epochs [default: 200].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size [default: 64].
    #[arg(long)]
    pub batch: Option<usize>,
    /// Adam learning rate [default: 0.001].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Bottleneck latent size, vae only [default: 4].
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// KL weight λ, vae only [default: 0.001].
    #[arg(long)]
    pub kl_weight: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalFlags {
    /// Evaluation regime; repeat for several [default: all four].
    #[arg(long, value_enum)]
    pub regime: Vec<RegimeArg>,
    /// Rollouts per regime and seed [default: 100].
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Number of evaluation seeds, counted up from --seed [default: 3].
    #[arg(long)]
    pub eval_seeds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub env: EnvArgs,
    /// Reset distribution of the demonstrations [default: id].
    #[arg(long, value_enum)]
    pub regime: Option<RegimeArg>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub env: EnvArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Dataset file [default: <out>/dataset.jsonl].
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Also write per-epoch wall time to train_timing.csv (not reproducible).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub env: EnvArgs,
    #[command(flatten)]
    pub eval: EvalFlags,
    /// Checkpoint file, or `expert` for the scripted expert [default: <out>/checkpoint.json].
    #[arg(long, value_name = "FILE|expert")]
    pub checkpoint: Option<String>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// One TOML file per method; [env] sections must agree. The first one
    /// also supplies seed, out and [eval].
    #[arg(long = "config", value_name = "FILE")]
    pub configs: Vec<PathBuf>,
    /// Global seed (first evaluation seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: out].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub env: EnvArgs,
    /// Methods to compare when no --config is given [default: transmask,bc,vae,expert].
    #[arg(long, value_enum, value_delimiter = ',')]
    pub method: Vec<MethodArg>,
    /// Row normalizer for transmask rows [default: sparsemax].
    #[arg(long, value_enum)]
    pub norm: Option<NormArg>,
    /// Mask parameterization for transmask rows [default: ones].
    #[arg(long, value_enum)]
    pub mask_variant: Option<VariantArg>,
    /// Training epochs [default: 200].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size [default: 64].
    #[arg(long)]
    pub batch: Option<usize>,
    /// Adam learning rate [default: 0.001].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Bottleneck latent size [default: 4].
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// KL weight λ [default: 0.001].
    #[arg(long)]
    pub kl_weight: Option<f64>,
    #[command(flatten)]
    pub eval: EvalFlags,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub env: EnvArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Dataset file; generated from the env settings when absent.
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// KL weights to try [default: 0,0.0001,0.001,0.01,0.1].
    #[arg(long, value_delimiter = ',')]
    pub kl_weights: Vec<f64>,
    /// ID rollouts per λ [default: 100].
    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    /// Checkpoint file.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Output directory [default: out].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Reach,
    Push,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Transmask,
    Bc,
    Vae,
    Expert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    Softmax,
    Sparsemax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Matrix,
    Ones,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Id,
    Ood,
    OodRelevant,
    OodIrrelevant,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Reach => Task::Reach,
            TaskArg::Push => Task::Push,
        }
    }
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Transmask => Method::TransMask,
            MethodArg::Bc => Method::Bc,
            MethodArg::Vae => Method::Vae,
            MethodArg::Expert => Method::Expert,
        }
    }
}

impl From<NormArg> for Normalization {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Softmax => Normalization::Softmax,
            NormArg::Sparsemax => Normalization::Sparsemax,
        }
    }
}

impl From<VariantArg> for MaskVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Matrix => MaskVariant::DirectMatrix,
            VariantArg::Ones => MaskVariant::OnesEncoder,
        }
    }
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Id => Regime::Id,
            RegimeArg::Ood => Regime::Ood,
            RegimeArg::OodRelevant => Regime::OodRelevant,
            RegimeArg::OodIrrelevant => Regime::OodIrrelevant,
        }
    }
}

/// Exit code for an error: 1 for configuration problems, 2 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::LayoutMismatch(_) => 1,
        _ => 2,
    }
}

/// Parses `args` (including the program name), runs the command, and
/// returns the process exit code. Messages go to stdout/stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs one command and returns the text summary it would print.
pub fn execute(command: Command) -> Result<String> {
    match command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Mask(a) => cmd_mask(a),
    }
}

/// Config file merged with command-line overrides.
struct Resolved {
    file: RunFile,
    seed: Result<u64>,
    out: PathBuf,
    env: EnvSpec,
    demos: usize,
    /// The user named an environment (flag or config file).
    env_explicit: bool,
}

fn resolve(common: &CommonArgs, env: &EnvArgs) -> Result<Resolved> {
    let file = match &common.config {
        Some(p) => RunFile::load(p)?,
        None => RunFile::default(),
    };
    resolve_file(file, common.config.is_some(), common.seed, common.out.clone(), env)
}

fn resolve_file(mut file: RunFile, from_file: bool, seed: Option<u64>, out: Option<PathBuf>, env: &EnvArgs) -> Result<Resolved> {
    if let Some(t) = env.task {
        file.env.task = t.into();
    }
    if let Some(d) = env.demos {
        file.env.demos = d;
    }
    let spec = file.env.spec()?;
    let env_seed = std::env::var(SEED_ENV_VAR).ok();
    Ok(Resolved {
        seed: resolve_seed(seed, file.seed, env_seed.as_deref()),
        out: out.or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        env: spec,
        demos: file.env.demos,
        env_explicit: from_file || env.task.is_some(),
        file,
    })
}

fn apply_train_flags(mut cfg: TrainConfig, f: &TrainFlags) -> TrainConfig {
    if let Some(m) = f.method {
        cfg.method = m.into();
    }
    if let Some(n) = f.norm {
        cfg.norm = n.into();
    }
    if let Some(v) = f.mask_variant {
        cfg.mask_variant = v.into();
    }
    if let Some(e) = f.epochs {
        cfg.epochs = e;
    }
    if let Some(b) = f.batch {
        cfg.batch = b;
    }
    if let Some(lr) = f.lr {
        cfg.lr = lr;
    }
    if let Some(l) = f.latent_dim {
        cfg.latent_dim = l;
    }
    if let Some(k) = f.kl_weight {
        cfg.kl_weight = k;
    }
    cfg
}

fn apply_eval_flags(mut eval: EvalSection, f: &EvalFlags) -> Result<EvalSection> {
    if !f.regime.is_empty() {
        eval.regimes = f.regime.iter().map(|&r| r.into()).collect();
    }
    if let Some(e) = f.episodes {
        eval.episodes = e;
    }
    if let Some(s) = f.eval_seeds {
        eval.seeds = s;
    }
    if eval.episodes == 0 || eval.seeds == 0 || eval.regimes.is_empty() {
        return Err(Error::Config("episodes, eval seeds and regimes must be non-empty".into()));
    }
    Ok(eval)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn eval_seeds(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| base.wrapping_add(i)).collect()
}

fn cmd_gen(a: GenArgs) -> Result<String> {
    let r = resolve(&a.common, &a.env)?;
    let seed = r.seed?;
    let regime = a.regime.map_or(Regime::Id, Regime::from);
    create_dir(&r.out)?;
    let data = generate_demonstrations(&r.env, regime, r.demos, seed)?;
    let path = r.out.join(DATASET_FILE);
    data.write_jsonl(&path)?;
    let h = &data.header;
    Ok(format!(
        "wrote {}\ntask {} regime {} seed {}\ntrajectories {} pairs {} discarded {}\nstate dim {} action dim {}\nepisode length min {} mean {:.2} max {}\n",
        path.display(),
        h.env.task.as_str(),
        h.regime.as_str(),
        h.seed,
        h.trajectories,
        h.pairs,
        h.discarded,
        h.env.state_dim(),
        h.env.action_dim(),
        h.episode_length.min,
        h.episode_length.mean,
        h.episode_length.max
    ))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::Config(format!("dataset {} not found (run `maskgrad gen` first)", path.display())));
    }
    Dataset::read_jsonl(path)
}

fn check_env(expected: &EnvSpec, data: &Dataset) -> Result<()> {
    let got = &data.header.env;
    if got.task != expected.task || got.state_dim() != expected.state_dim() {
        return Err(Error::LayoutMismatch(format!(
            "dataset is {} with n = {}, config asks for {} with n = {}",
            got.task.as_str(),
            got.state_dim(),
            expected.task.as_str(),
            expected.state_dim()
        )));
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<String> {
    let r = resolve(&a.common, &a.env)?;
    let mut cfg = apply_train_flags(r.file.train.clone(), &a.train);
    cfg.seed = r.seed?;
    cfg.validate()?;
    let data_path = a.data.clone().unwrap_or_else(|| r.out.join(DATASET_FILE));
    let data = load_dataset(&data_path)?;
    if r.env_explicit {
        check_env(&r.env, &data)?;
    }
    let outcome = trainer::train(&cfg, &data)?;
    create_dir(&r.out)?;
    outcome.checkpoint.save(&r.out.join(CHECKPOINT_FILE))?;
    outcome.log.write_csv(&r.out.join("train_log.csv"))?;
    outcome.log.write_relevance_history_csv(&r.out.join("relevance_history.csv"))?;
    if a.timing {
        outcome.log.write_timing_csv(&r.out.join("train_timing.csv"))?;
    }
    let mut summary = format!(
        "wrote {}\nmethod {} epochs {} pairs {}\nfinal loss {:.6e}\n",
        r.out.join(CHECKPOINT_FILE).display(),
        cfg.method.as_str(),
        cfg.epochs,
        data.pair_count(),
        outcome.log.final_loss().unwrap_or(f64::NAN)
    );
    if let Some(mask) = outcome.checkpoint.model.mask()? {
        mask.write_text(&r.out.join("mask.txt"))?;
        write_relevance_csv(&mask, Some(&data.header.relevant), &r.out.join("relevance.csv"))?;
        let rel = column_relevance(&mask);
        let zeros = rel.values().iter().filter(|v| **v == 0.0).count();
        let _ = writeln!(
            summary,
            "relevance separation {:.4}, exact-zero columns {zeros}/{}",
            rel.separation(&data.header.relevant),
            rel.values().len()
        );
    }
    Ok(summary)
}

#[derive(Debug, Serialize)]
struct SeedRate {
    seed: u64,
    #[serde(flatten)]
    outcome: EvalOutcome,
}

#[derive(Debug, Serialize)]
struct RegimeReport {
    regime: Regime,
    mean: f64,
    std: f64,
    successes: usize,
    episodes: usize,
    non_finite: usize,
    per_seed: Vec<SeedRate>,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    method: Method,
    task: Task,
    seeds: Vec<u64>,
    episodes_per_seed: usize,
    regimes: Vec<RegimeReport>,
}

fn cmd_eval(a: EvalArgs) -> Result<String> {
    let r = resolve(&a.common, &a.env)?;
    let eval = apply_eval_flags(r.file.eval.clone(), &a.eval)?;
    let seed = r.seed?;
    let checkpoint = match a.checkpoint.as_deref() {
        Some("expert") => Checkpoint::expert(r.env.clone()),
        other => {
            let path = other.map_or_else(|| r.out.join(CHECKPOINT_FILE), PathBuf::from);
            if !path.exists() {
                return Err(Error::Config(format!("checkpoint {} not found", path.display())));
            }
            Checkpoint::load(&path)?
        }
    };
    let actor = checkpoint.actor()?;
    let env = &checkpoint.env;
    let seeds = eval_seeds(seed, eval.seeds);
    let regimes = eval
        .regimes
        .iter()
        .map(|&regime| {
            let per_seed: Vec<SeedRate> = seeds
                .iter()
                .map(|&s| SeedRate {
                    seed: s,
                    outcome: evaluate(env, regime, |x| actor.act_or_nan(x), eval.episodes, eval_seed(s, regime)),
                })
                .collect();
            let rates: Vec<f64> = per_seed.iter().map(|p| p.outcome.success_rate).collect();
            let (mean, std) = mean_std(&rates);
            RegimeReport {
                regime,
                mean,
                std,
                successes: per_seed.iter().map(|p| p.outcome.successes).sum(),
                episodes: per_seed.iter().map(|p| p.outcome.episodes).sum(),
                non_finite: per_seed.iter().map(|p| p.outcome.non_finite).sum(),
                per_seed,
            }
        })
        .collect();
    let report = EvalReport { method: checkpoint.method, task: env.task, seeds, episodes_per_seed: eval.episodes, regimes };

    create_dir(&r.out)?;
    let mut w = csv::Writer::from_path(r.out.join("eval.csv"))?;
    w.write_record(["regime", "mean", "std", "successes", "episodes", "non_finite", "seeds"])?;
    for g in &report.regimes {
        w.write_record([
            g.regime.as_str().to_string(),
            g.mean.to_string(),
            g.std.to_string(),
            g.successes.to_string(),
            g.episodes.to_string(),
            g.non_finite.to_string(),
            report.seeds.len().to_string(),
        ])?;
    }
    w.flush()?;
    std::fs::write(r.out.join("eval.json"), serde_json::to_string_pretty(&report)? + "\n")?;

    let mut s = format!("method {} on {}\n", report.method.as_str(), report.task.as_str());
    for g in &report.regimes {
        let _ = writeln!(
            s,
            "{:<15} {:.3} ± {:.3}  ({}/{} successes, {} non-finite)",
            g.regime.as_str(),
            g.mean,
            g.std,
            g.successes,
            g.episodes,
            g.non_finite
        );
    }
    Ok(s)
}

fn cmd_compare(a: CompareArgs) -> Result<String> {
    let flags = TrainFlags {
        method: None,
        norm: a.norm,
        mask_variant: a.mask_variant,
        epochs: a.epochs,
        batch: a.batch,
        lr: a.lr,
        latent_dim: a.latent_dim,
        kl_weight: a.kl_weight,
    };
    let (first, methods) = if a.configs.is_empty() {
        let list = if a.method.is_empty() {
            vec![MethodArg::Transmask, MethodArg::Bc, MethodArg::Vae, MethodArg::Expert]
        } else {
            a.method.clone()
        };
        let base = RunFile::default();
        let specs = list
            .iter()
            .map(|&m| {
                let method: Method = m.into();
                if method == Method::Expert {
                    MethodSpec::expert()
                } else {
                    let cfg = apply_train_flags(TrainConfig { method, ..base.train.clone() }, &flags);
                    MethodSpec::new(method.as_str(), cfg)
                }
            })
            .collect::<Vec<_>>();
        (base, specs)
    } else {
        let files = a.configs.iter().map(|p| RunFile::load(p)).collect::<Result<Vec<_>>>()?;
        if files.iter().any(|f| f.env != files[0].env) {
            return Err(Error::Config("compare configs disagree on [env]; all methods must share one environment".into()));
        }
        let specs = a
            .configs
            .iter()
            .zip(&files)
            .map(|(path, f)| {
                let label = path.file_stem().map_or_else(|| f.train.method.as_str().to_string(), |s| s.to_string_lossy().into_owned());
                if f.train.method == Method::Expert {
                    MethodSpec { label, ..MethodSpec::expert() }
                } else {
                    MethodSpec::new(label, apply_train_flags(f.train.clone(), &flags))
                }
            })
            .collect::<Vec<_>>();
        (files[0].clone(), specs)
    };
    let mut labels: Vec<&str> = methods.iter().map(|m| m.label.as_str()).collect();
    labels.sort_unstable();
    if labels.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("method labels must be unique".into()));
    }
    for m in &methods {
        if m.config.method != Method::Expert {
            m.config.validate()?;
        }
    }
    let r = resolve_file(first, !a.configs.is_empty(), a.seed, a.out.clone(), &a.env)?;
    let eval = apply_eval_flags(r.file.eval.clone(), &a.eval)?;
    let settings = CompareSettings {
        env: r.env.clone(),
        demos: r.demos,
        regimes: eval.regimes.clone(),
        seeds: eval_seeds(r.seed?, eval.seeds),
        episodes: eval.episodes,
    };
    let report = compare(&methods, &settings)?;
    create_dir(&r.out)?;
    report.write_table_csv(&r.out.join("table.csv"))?;
    report.write_relevance_csv(&r.out.join("relevance.csv"))?;
    report.write_probe_csv(&r.out.join("probe.csv"))?;
    report.write_json(&r.out.join("report.json"))?;

    let mut s = format!("{:<12}", "method");
    for g in &settings.regimes {
        let _ = write!(s, " {:>16}", g.as_str());
    }
    s.push('\n');
    for row in &report.rows {
        let _ = write!(s, "{:<12}", row.label);
        for c in &row.cells {
            let _ = write!(s, " {:>9.3} ± {:.3}", c.mean, c.std);
        }
        s.push('\n');
    }
    let _ = writeln!(s, "wrote {}", r.out.join("table.csv").display());
    Ok(s)
}

#[derive(Debug, Serialize)]
struct SweepRow {
    kl_weight: f64,
    final_loss: f64,
    final_kl: f64,
    action_r2: f64,
    relevant_r2: f64,
    irrelevant_r2: f64,
    id_success: f64,
}

fn cmd_sweep(a: SweepArgs) -> Result<String> {
    let r = resolve(&a.common, &a.env)?;
    let seed = r.seed?;
    let mut base = apply_train_flags(r.file.train.clone(), &a.train);
    base.method = Method::Vae;
    base.seed = seed;
    let weights = if a.kl_weights.is_empty() { DEFAULT_KL_SWEEP.to_vec() } else { a.kl_weights.clone() };
    for w in &weights {
        TrainConfig { kl_weight: *w, ..base.clone() }.validate()?;
    }
    let data = match &a.data {
        Some(p) => load_dataset(p)?,
        None => generate_demonstrations(&r.env, Regime::Id, r.demos, seed)?,
    };
    let episodes = a.episodes.unwrap_or(config::DEFAULT_EPISODES);
    let env = data.header.env.clone();
    let rows: Vec<SweepRow> = weights
        .par_iter()
        .map(|&w| {
            let cfg = TrainConfig { kl_weight: w, ..base.clone() };
            let out = trainer::train(&cfg, &data)?;
            let actor = out.checkpoint.actor()?;
            let probe = probe_latent(&actor, &data, &data.header.relevant)?;
            let id = evaluate(&env, Regime::Id, |x| actor.act_or_nan(x), episodes, eval_seed(seed, Regime::Id));
            let last = out.log.epochs.last();
            Ok(SweepRow {
                kl_weight: w,
                final_loss: last.map_or(f64::NAN, |e| e.loss),
                final_kl: last.map_or(f64::NAN, |e| e.kl),
                action_r2: probe.action_r2,
                relevant_r2: probe.relevant_r2,
                irrelevant_r2: probe.irrelevant_r2,
                id_success: id.success_rate,
            })
        })
        .collect::<Result<_>>()?;
    create_dir(&r.out)?;
    let mut w = csv::Writer::from_path(r.out.join("sweep.csv"))?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    let mut s = format!("{:>10} {:>12} {:>10} {:>9} {:>9} {:>9} {:>8}\n", "kl_weight", "loss", "kl", "a_r2", "mu_r2", "eta_r2", "id");
    for row in &rows {
        let _ = writeln!(
            s,
            "{:>10} {:>12.4e} {:>10.4} {:>9.3} {:>9.3} {:>9.3} {:>8.2}",
            row.kl_weight, row.final_loss, row.final_kl, row.action_r2, row.relevant_r2, row.irrelevant_r2, row.id_success
        );
    }
    let _ = writeln!(s, "wrote {}", r.out.join("sweep.csv").display());
    Ok(s)
}

fn cmd_mask(a: MaskArgs) -> Result<String> {
    if !a.checkpoint.exists() {
        return Err(Error::Config(format!("checkpoint {} not found", a.checkpoint.display())));
    }
    let ck = Checkpoint::load(&a.checkpoint)?;
    let mask = ck
        .model
        .mask()?
        .ok_or_else(|| Error::Config(format!("a {} checkpoint has no mask", ck.method.as_str())))?;
    let out = a.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    create_dir(&out)?;
    let relevant = ck.env.relevant_indices();
    mask.write_text(&out.join("mask.txt"))?;
    write_relevance_csv(&mask, Some(&relevant), &out.join("relevance.csv"))?;
    Ok(format!("wrote {} and {}\n", out.join("mask.txt").display(), out.join("relevance.csv").display()))
}
