//! Oracles and criterion checks shared by the integration tests and the
//! acceptance target. Nothing here calls the library routine it checks.
#![allow(dead_code)]

use std::time::{Duration, Instant};

use maskgrad::mask::{MaskVariant, Normalization};
use maskgrad::math::{matvec, sparsemax_backward, sparsemax_row, Tensor};
use maskgrad::model::{Method, Model};
use maskgrad::trainer::{
    compare, init_model, loss_and_grads, train_step, Adam, Batch, CompareReport, CompareSettings, MethodSpec,
    TrainConfig,
};
use maskgrad::world::{EnvSpec, Regime, Task};
use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

// ---- tolerances -------------------------------------------------------------

pub const GRAD_REL_TOL: f64 = 1e-5;
pub const FD_STEP: f64 = 1e-6;
pub const SPARSEMAX_ORACLE_TOL: f64 = 1e-9;
/// Vectors with an entry this close to the sparsemax threshold are skipped
/// by the backward check; a step of `FD_STEP` cannot change their support.
pub const SUPPORT_MARGIN: f64 = 1e-4;
pub const JACOBIAN_ZERO_TOL: f64 = 1e-8;
pub const PROPTEST_CASES: u32 = 128;

pub const RELEVANCE_IRRELEVANT_MEAN_MAX: f64 = 0.2;
pub const RELEVANCE_RELEVANT_MIN: f64 = 0.5;
pub const MIN_ZERO_IRRELEVANT_COLUMNS: usize = 6;
pub const OOD_MARGIN: f64 = 0.10;
pub const ID_SLACK: f64 = 0.05;
pub const COLLAPSE_ID_GAP: f64 = 0.2;
pub const PROBE_GAP: f64 = 0.3;

pub const ACCEPTANCE_SEEDS: [u64; 3] = [0, 1, 2];
pub const ACCEPTANCE_DEMOS: usize = 100;
pub const ACCEPTANCE_EPISODES: usize = 100;

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
}

pub fn timed(f: impl FnOnce() -> (bool, String)) -> Verdict {
    let start = Instant::now();
    let (pass, detail) = f();
    Verdict { pass, detail, elapsed: start.elapsed() }
}

// ---- oracles ----------------------------------------------------------------

/// Euclidean projection onto the simplex by enumerating every support set.
/// For each candidate support S the projection onto the affine hull of that
/// face is `v_i − τ` with `τ = (Σ_S v − 1)/|S|`; the answer is the feasible
/// candidate nearest to `v`.
pub fn brute_force_simplex_projection(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    assert!((1..=16).contains(&n));
    let mut best: Option<(f64, Vec<f64>)> = None;
    for bits in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|i| bits >> i & 1 == 1).collect();
        let tau = (support.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / support.len() as f64;
        let mut p = vec![0.0; n];
        let mut feasible = true;
        for &i in &support {
            p[i] = v[i] - tau;
            if p[i] < 0.0 {
                feasible = false;
            }
        }
        if !feasible {
            continue;
        }
        let dist: f64 = p.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, p));
        }
    }
    best.expect("the single-vertex faces are always feasible").1
}

/// Central differences of a scalar function.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, p: &[f64], h: f64) -> Vec<f64> {
    let mut x = p.to_vec();
    (0..p.len())
        .map(|i| {
            x[i] = p[i] + h;
            let plus = f(&x);
            x[i] = p[i] - h;
            let minus = f(&x);
            x[i] = p[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Norms below these count as zero gradients: central differences of an
/// exactly flat function still return rounding noise of order ε·|x|/h.
/// Model gradients are checked against a tiny floor; the sparsemax VJP has
/// unit-scale upstream vectors and inputs up to ~15, so it gets a larger one.
pub const MODEL_GRAD_FLOOR: f64 = 1e-6;
pub const VJP_FLOOR: f64 = 1e-3;

/// ‖a − b‖ / max(‖a‖, ‖b‖, floor).
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(floor)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, len: usize, std: f64) -> Vec<f64> {
    (0..len).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn random_batch(rng: &mut ChaCha8Rng, rows: usize, n: usize, m: usize) -> Batch {
    let states: Vec<Vec<f64>> = (0..rows).map(|_| normal_vec(rng, n, 0.5)).collect();
    let actions: Vec<Vec<f64>> = (0..rows).map(|_| normal_vec(rng, m, 0.5)).collect();
    let pairs: Vec<(&[f64], &[f64])> = states.iter().zip(&actions).map(|(s, a)| (s.as_slice(), a.as_slice())).collect();
    Batch::new(&pairs).unwrap()
}

/// States that exercise the experts: resets from every regime plus points
/// along an expert rollout.
pub fn sample_states(env: &EnvSpec, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let regime = Regime::ALL[out.len() % Regime::ALL.len()];
        let mut s = env.reset(regime, &mut rng);
        let steps = rng.random_range(0..6);
        for _ in 0..steps {
            s = env.step(&s, &env.expert_action(&s));
        }
        out.push(s);
    }
    out
}

// ---- criterion 1 ------------------------------------------------------------

pub struct GradCase {
    pub variant: MaskVariant,
    pub norm: Normalization,
    pub hidden: Vec<usize>,
    pub n: usize,
}

pub fn gradient_cases() -> Vec<GradCase> {
    let hiddens: [&[usize]; 5] = [&[6], &[12, 12], &[20], &[5, 7, 5], &[16]];
    (0..10)
        .map(|i| GradCase {
            variant: if i % 2 == 0 { MaskVariant::DirectMatrix } else { MaskVariant::OnesEncoder },
            norm: if (i / 2) % 2 == 0 { Normalization::Sparsemax } else { Normalization::Softmax },
            hidden: hiddens[i % 5].to_vec(),
            n: 4 + i % 5,
        })
        .collect()
}

/// Worst per-tensor relative error between backprop and central differences
/// of the full loss, over every trainable tensor of `model`.
pub fn model_gradient_error(model: &Model, batch: &Batch, kl_weight: f64, noise: Option<&Tensor>) -> f64 {
    let (_, grads) = loss_and_grads(model, batch, kl_weight, noise).unwrap();
    let flat = model.flat_params();
    let mut probe = model.clone();
    let mut loss = |p: &[f64]| {
        probe.set_flat_params(p).unwrap();
        loss_and_grads(&probe, batch, kl_weight, noise).unwrap().0.loss
    };
    let fd = central_diff(&mut loss, &flat, FD_STEP);
    let mut offset = 0;
    let mut worst: f64 = 0.0;
    for g in &grads {
        let len = g.len();
        worst = worst.max(rel_err(g.values(), &fd[offset..offset + len], MODEL_GRAD_FLOOR));
        offset += len;
    }
    worst
}

/// Random model for a gradient case, with parameters redrawn at a scale that
/// gives sparsemax rows partial support.
pub fn gradient_case_model(case: &GradCase, rng: &mut ChaCha8Rng) -> Model {
    let cfg = TrainConfig {
        method: Method::TransMask,
        norm: case.norm,
        mask_variant: case.variant,
        hidden: case.hidden.clone(),
        encoder_input: 3,
        encoder_hidden: 5,
        ..TrainConfig::default()
    };
    let mut model = init_model(&cfg, case.n, 2, rng).unwrap();
    let count = model.flat_params().len();
    model.set_flat_params(&normal_vec(rng, count, 0.5)).unwrap();
    model
}

pub fn criterion_gradients() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9ad);
    let mut worst: f64 = 0.0;
    for case in gradient_cases() {
        let model = gradient_case_model(&case, &mut rng);
        let batch = random_batch(&mut rng, 5, case.n, 2);
        worst = worst.max(model_gradient_error(&model, &batch, 0.0, None));
    }
    (worst < GRAD_REL_TOL, format!("10 configs, worst relative error {worst:.2e} (tol {GRAD_REL_TOL:.0e})"))
}

// ---- criterion 2 ------------------------------------------------------------

/// Returns (max forward deviation, worst backward relative error, vectors
/// checked by the backward test).
pub fn sparsemax_oracle_stats(count: usize, seed: u64) -> (f64, f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut fwd, mut bwd, mut checked) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..count {
        let n = rng.random_range(1..=8);
        let scale = [0.1, 1.0, 5.0][rng.random_range(0..3)];
        let v = normal_vec(&mut rng, n, scale);
        let p = sparsemax_row(&v);
        let oracle = brute_force_simplex_projection(&v);
        fwd = fwd.max(p.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));

        // Threshold from the oracle's support, to find boundary cases.
        let support: Vec<usize> = (0..n).filter(|&i| oracle[i] > 0.0).collect();
        let tau = (support.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / support.len() as f64;
        if v.iter().any(|x| (x - tau).abs() < SUPPORT_MARGIN) {
            continue;
        }
        let upstream = normal_vec(&mut rng, n, 1.0);
        let analytic = sparsemax_backward(&v, &upstream);
        let mut f = |x: &[f64]| sparsemax_row(x).iter().zip(&upstream).map(|(a, b)| a * b).sum::<f64>();
        let fd = central_diff(&mut f, &v, FD_STEP);
        bwd = bwd.max(rel_err(&analytic, &fd, VJP_FLOOR));
        checked += 1;
    }
    (fwd, bwd, checked)
}

pub fn criterion_sparsemax() -> (bool, String) {
    let (fwd, bwd, checked) = sparsemax_oracle_stats(1000, 0x5a);
    (
        fwd <= SPARSEMAX_ORACLE_TOL && bwd < GRAD_REL_TOL && checked >= 900,
        format!("1000 vectors: forward max dev {fwd:.1e}, backward rel err {bwd:.1e} over {checked} off-boundary vectors"),
    )
}

// ---- criterion 3 ------------------------------------------------------------

/// Largest |∂a/∂s_j| over irrelevant j and the sampled states.
pub fn expert_irrelevant_jacobian_max(env: &EnvSpec, states: usize, seed: u64) -> f64 {
    let irrelevant = env.irrelevant_indices();
    let mut worst: f64 = 0.0;
    for s in sample_states(env, states, seed) {
        for k in 0..env.action_dim() {
            let mut f = |x: &[f64]| env.expert_action(x)[k];
            let row = central_diff(&mut f, &s, FD_STEP);
            for &j in &irrelevant {
                worst = worst.max(row[j].abs());
            }
        }
    }
    worst
}

pub fn criterion_expert_jacobian() -> (bool, String) {
    let reach = expert_irrelevant_jacobian_max(&EnvSpec::reach(), 100, 31);
    let push = expert_irrelevant_jacobian_max(&EnvSpec::push(), 100, 32);
    (
        reach < JACOBIAN_ZERO_TOL && push < JACOBIAN_ZERO_TOL,
        format!("100 states per task: max irrelevant |J| reach {reach:.1e}, push {push:.1e}"),
    )
}

// ---- criteria 4-6 -----------------------------------------------------------

/// TransMASK, BC and the VAE baseline on the acceptance budget.
pub fn acceptance_report() -> CompareReport {
    let methods = vec![
        MethodSpec::new("transmask", TrainConfig::for_method(Method::TransMask)),
        MethodSpec::new("bc", TrainConfig::for_method(Method::Bc)),
        MethodSpec::new("vae", TrainConfig { kl_weight: 1e-3, ..TrainConfig::for_method(Method::Vae) }),
    ];
    let settings = CompareSettings {
        env: EnvSpec::for_task(Task::Reach),
        demos: ACCEPTANCE_DEMOS,
        regimes: Regime::ALL.to_vec(),
        seeds: ACCEPTANCE_SEEDS.to_vec(),
        episodes: ACCEPTANCE_EPISODES,
    };
    compare(&methods, &settings).unwrap()
}

pub fn criterion_relevance(report: &CompareReport) -> (bool, String) {
    let env = EnvSpec::reach();
    let (relevant, irrelevant) = (env.relevant_indices(), env.irrelevant_indices());
    let row = report.row("transmask").unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for seed in &row.seeds {
        let rel = seed.relevance.as_ref().unwrap();
        let irr_mean = irrelevant.iter().map(|&i| rel[i]).sum::<f64>() / irrelevant.len() as f64;
        let rel_min = relevant.iter().map(|&i| rel[i]).fold(f64::INFINITY, f64::min);
        let zeros = irrelevant.iter().filter(|&&i| rel[i] == 0.0).count();
        let ok = irr_mean <= RELEVANCE_IRRELEVANT_MEAN_MAX && rel_min >= RELEVANCE_RELEVANT_MIN && zeros >= MIN_ZERO_IRRELEVANT_COLUMNS;
        pass &= ok;
        parts.push(format!(
            "seed {} {}: irr mean {irr_mean:.3}, rel min {rel_min:.3}, zeros {zeros}/12",
            seed.seed,
            if ok { "ok" } else { "MISS" }
        ));
    }
    (pass, parts.join("; "))
}

pub fn criterion_ood_ordering(report: &CompareReport) -> (bool, String) {
    let t = report.row("transmask").unwrap();
    let b = report.row("bc").unwrap();
    let mean = |row: &maskgrad::trainer::MethodRow, r: Regime| row.cell(r).unwrap().mean;
    let (t_ood, b_ood) = (mean(t, Regime::OodIrrelevant), mean(b, Regime::OodIrrelevant));
    let (t_id, b_id) = (mean(t, Regime::Id), mean(b, Regime::Id));
    (
        t_ood >= b_ood + OOD_MARGIN && t_id >= b_id - ID_SLACK,
        format!("OOD-irrelevant transmask {t_ood:.3} vs bc {b_ood:.3}; ID transmask {t_id:.3} vs bc {b_id:.3}"),
    )
}

pub fn criterion_collapse(report: &CompareReport) -> (bool, String) {
    let t = report.row("transmask").unwrap();
    let v = report.row("vae").unwrap();
    let t_id = t.cell(Regime::Id).unwrap().mean;
    let v_id = v.cell(Regime::Id).unwrap().mean;
    let probes: Vec<_> = t.seeds.iter().map(|s| s.probe.clone().unwrap()).collect();
    let mu = probes.iter().map(|p| p.relevant_r2).sum::<f64>() / probes.len() as f64;
    let eta = probes.iter().map(|p| p.irrelevant_r2).sum::<f64>() / probes.len() as f64;
    (
        v_id <= t_id - COLLAPSE_ID_GAP && eta <= mu - PROBE_GAP,
        format!("ID vae {v_id:.3} vs transmask {t_id:.3}; transmask probe R² mu {mu:.3}, eta {eta:.3}"),
    )
}

// ---- criterion 8 ------------------------------------------------------------

fn runner() -> TestRunner {
    TestRunner::new(PtConfig { cases: PROPTEST_CASES, failure_persistence: None, ..PtConfig::default() })
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

fn rows_on_simplex(model: &Model) -> Result<(), TestCaseError> {
    let mask = model.mask().unwrap().unwrap();
    let t = mask.matrix();
    for i in 0..t.rows() {
        let row = t.row(i);
        let sum: f64 = row.iter().sum();
        check(row.iter().all(|&x| x >= 0.0) && (sum - 1.0).abs() < 1e-12, || format!("row {i} = {row:?}"))?;
    }
    Ok(())
}

/// Mask rows stay on the simplex after every optimizer step.
pub fn property_row_simplex() -> Result<(), String> {
    let strategy = (any::<u64>(), 3usize..10, any::<bool>(), any::<bool>());
    runner()
        .run(&strategy, |(seed, n, direct, sparse)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = TrainConfig {
                mask_variant: if direct { MaskVariant::DirectMatrix } else { MaskVariant::OnesEncoder },
                norm: if sparse { Normalization::Sparsemax } else { Normalization::Softmax },
                hidden: vec![8],
                encoder_hidden: 8,
                lr: 0.05,
                ..TrainConfig::default()
            };
            let mut model = init_model(&cfg, n, 2, &mut rng).unwrap();
            let mut adam = Adam::new(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
            rows_on_simplex(&model)?;
            for _ in 0..5 {
                let batch = random_batch(&mut rng, 4, n, 2);
                train_step(&mut model, &mut adam, &batch, &cfg, &mut rng).unwrap();
                rows_on_simplex(&model)?;
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// The mask applied to every sample of a batch is the same matrix, bit for
/// bit, and does not change by being applied.
pub fn property_static_mask() -> Result<(), String> {
    let strategy = (any::<u64>(), 3usize..10, 2usize..16);
    runner()
        .run(&strategy, |(seed, n, rows)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let case = GradCase { variant: MaskVariant::OnesEncoder, norm: Normalization::Sparsemax, hidden: vec![6], n };
            let model = gradient_case_model(&case, &mut rng);
            let env = EnvSpec::reach();
            let actor = model.actor(&env).unwrap();
            let before = model.mask().unwrap().unwrap();
            let bits = |t: &Tensor| t.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            for _ in 0..rows {
                let s = normal_vec(&mut rng, n, 1.0);
                let z = actor.latent(&s).unwrap();
                let expected = matvec(before.matrix(), &s).unwrap();
                check(
                    z.iter().map(|x| x.to_bits()).eq(expected.iter().map(|x| x.to_bits())),
                    || "latent differs from M s".into(),
                )?;
            }
            let after = model.mask().unwrap().unwrap();
            check(bits(before.matrix()) == bits(after.matrix()), || "mask changed across the batch".into())
        })
        .map_err(|e| e.to_string())
}

/// M(αs + βt) = αMs + βMt up to rounding.
pub fn property_linearity() -> Result<(), String> {
    let strategy = (any::<u64>(), 2usize..12, -3.0f64..3.0, -3.0f64..3.0);
    runner()
        .run(&strategy, |(seed, n, alpha, beta)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let case = GradCase { variant: MaskVariant::DirectMatrix, norm: Normalization::Softmax, hidden: vec![4], n };
            let mask = gradient_case_model(&case, &mut rng).mask().unwrap().unwrap();
            let s = normal_vec(&mut rng, n, 1.0);
            let t = normal_vec(&mut rng, n, 1.0);
            let mix: Vec<f64> = s.iter().zip(&t).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = maskgrad::mask::transform(&mask, &mix).unwrap();
            let ms = maskgrad::mask::transform(&mask, &s).unwrap();
            let mt = maskgrad::mask::transform(&mask, &t).unwrap();
            for i in 0..n {
                let rhs = alpha * ms[i] + beta * mt[i];
                check((lhs[i] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()), || format!("component {i}: {} vs {rhs}", lhs[i]))?;
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Expert actions ignore arbitrary changes to irrelevant coordinates.
pub fn property_expert_invariance() -> Result<(), String> {
    let strategy = (any::<u64>(), any::<bool>(), 0usize..4, 0.01f64..100.0);
    runner()
        .run(&strategy, |(seed, push, regime, scale)| {
            let env = if push { EnvSpec::push() } else { EnvSpec::reach() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = env.reset(Regime::ALL[regime], &mut rng);
            let a = env.expert_action(&s);
            let mut t = s.clone();
            for j in env.irrelevant_indices() {
                t[j] += scale * rng.sample::<f64, _>(StandardNormal);
            }
            check(env.expert_action(&t) == a, || "expert action changed".into())
        })
        .map_err(|e| e.to_string())
}

pub fn criterion_invariants() -> (bool, String) {
    let results = [
        ("row-simplex", property_row_simplex()),
        ("static mask", property_static_mask()),
        ("linearity", property_linearity()),
        ("expert invariance", property_expert_invariance()),
    ];
    let failed: Vec<String> = results.iter().filter_map(|(n, r)| r.as_ref().err().map(|e| format!("{n}: {e}"))).collect();
    let detail = if failed.is_empty() {
        format!("4 properties x {PROPTEST_CASES} cases")
    } else {
        failed.join("; ")
    };
    (failed.is_empty(), detail)
}

// ---- criterion 7 ------------------------------------------------------------

pub fn run_cli(bin: &str, dir: &std::path::Path, args: &[&str]) -> std::process::Output {
    let out = std::process::Command::new(bin)
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove(maskgrad::cli::config::SEED_ENV_VAR)
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Runs every command twice into separate directories and lists output
/// files that differ.
pub fn cli_differences(bin: &str) -> (Vec<String>, usize) {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let p = d.path();
        let data = p.join("dataset.jsonl");
        let data = data.to_str().unwrap();
        run_cli(bin, p, &["gen", "--seed", "5", "--demos", "15"]);
        run_cli(bin, p, &["train", "--seed", "5", "--epochs", "4", "--data", data]);
        run_cli(bin, p, &["eval", "--seed", "5", "--episodes", "10", "--eval-seeds", "2"]);
        run_cli(bin, &p.join("cmp"), &["compare", "--seed", "5", "--demos", "15", "--epochs", "3", "--episodes", "10", "--eval-seeds", "2"]);
        run_cli(bin, &p.join("sweep"), &["sweep", "--seed", "5", "--epochs", "3", "--episodes", "10", "--kl-weights", "0,0.01", "--data", data]);
    }
    let mut files: Vec<_> = walk(dirs[0].path());
    files.sort();
    let mut differing = Vec::new();
    for rel in &files {
        let a = std::fs::read(dirs[0].path().join(rel)).unwrap();
        let b = std::fs::read(dirs[1].path().join(rel)).ok();
        if b.as_deref() != Some(a.as_slice()) {
            differing.push(rel.display().to_string());
        }
    }
    (differing, files.len())
}

fn walk(root: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out
}

/// Save/load every trainable kind of checkpoint and compare forward passes
/// bit for bit. Returns the number of mismatching outputs.
pub fn round_trip_mismatches() -> usize {
    use maskgrad::model::Checkpoint;
    use maskgrad::world::generate_demonstrations;
    let dir = tempfile::tempdir().unwrap();
    let env = EnvSpec::reach();
    let data = generate_demonstrations(&env, Regime::Id, 10, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut bad = 0;
    for (i, method) in [Method::TransMask, Method::Bc, Method::Vae].into_iter().enumerate() {
        let cfg = TrainConfig { epochs: 2, seed: 8, ..TrainConfig::for_method(method) };
        let ck = maskgrad::trainer::train(&cfg, &data).unwrap().checkpoint;
        let path = dir.path().join(format!("ck{i}.json"));
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        let (a, b) = (ck.actor().unwrap(), back.actor().unwrap());
        for _ in 0..50 {
            let s = normal_vec(&mut rng, env.state_dim(), 0.3);
            let (x, y) = (a.act(&s).unwrap(), b.act(&s).unwrap());
            if x.iter().map(|v| v.to_bits()).ne(y.iter().map(|v| v.to_bits())) {
                bad += 1;
            }
        }
        if back != ck {
            bad += 1;
        }
    }
    bad
}

pub fn criterion_determinism(bin: &str) -> (bool, String) {
    let (differing, total) = cli_differences(bin);
    let bad = round_trip_mismatches();
    (
        differing.is_empty() && bad == 0,
        format!("{} of {total} output files differ across reruns {differing:?}; {bad} round-trip mismatches", differing.len()),
    )
}
