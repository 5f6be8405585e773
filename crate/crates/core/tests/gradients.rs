mod common;

use common::*;
use maskgrad::model::Method;
use maskgrad::trainer::{init_model, sample_noise, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn full_loss_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for (i, case) in gradient_cases().iter().enumerate() {
        let model = gradient_case_model(case, &mut rng);
        let batch = random_batch(&mut rng, 6, case.n, 2);
        let err = model_gradient_error(&model, &batch, 0.0, None);
        assert!(err < GRAD_REL_TOL, "case {i} ({:?}, {:?}, {:?}): {err:e}", case.variant, case.norm, case.hidden);
    }
}

#[test]
fn bc_and_bottleneck_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    for (method, kl) in [(Method::Bc, 0.0), (Method::Vae, 0.0), (Method::Vae, 0.3)] {
        let cfg = TrainConfig { hidden: vec![9], latent_dim: 3, ..TrainConfig::for_method(method) };
        let mut model = init_model(&cfg, 7, 2, &mut rng).unwrap();
        let count = model.flat_params().len();
        model.set_flat_params(&normal_vec(&mut rng, count, 0.4)).unwrap();
        let batch = random_batch(&mut rng, 5, 7, 2);
        let noise = sample_noise(5, 3, &mut rng);
        let err = model_gradient_error(&model, &batch, kl, Some(&noise));
        assert!(err < GRAD_REL_TOL, "{method:?} λ={kl}: {err:e}");
    }
}

#[test]
fn sparsemax_matches_brute_force_projection() {
    let (fwd, bwd, checked) = sparsemax_oracle_stats(1000, 1);
    assert!(fwd <= SPARSEMAX_ORACLE_TOL, "forward deviation {fwd:e}");
    assert!(bwd < GRAD_REL_TOL, "backward error {bwd:e}");
    assert!(checked >= 900, "only {checked} vectors away from support boundaries");
}

#[test]
fn brute_force_oracle_handles_known_cases() {
    assert_eq!(brute_force_simplex_projection(&[0.2]), vec![1.0]);
    assert_eq!(brute_force_simplex_projection(&[3.0, 0.0]), vec![1.0, 0.0]);
    let p = brute_force_simplex_projection(&[0.5, 0.5, -1.0]);
    assert_eq!(p, vec![0.5, 0.5, 0.0]);
}

#[test]
fn expert_jacobians_vanish_on_irrelevant_columns() {
    for env in [maskgrad::world::EnvSpec::reach(), maskgrad::world::EnvSpec::push()] {
        let worst = expert_irrelevant_jacobian_max(&env, 100, 9);
        assert!(worst < JACOBIAN_ZERO_TOL, "{:?}: {worst:e}", env.task);
    }
}

/// The library's Jacobian helper agrees with the independent oracle.
#[test]
fn library_expert_jacobian_matches_oracle() {
    let env = maskgrad::world::EnvSpec::push();
    for s in sample_states(&env, 20, 4) {
        let lib = maskgrad::policy::expert_jacobian(&env, &s).unwrap();
        for (k, row) in lib.iter().enumerate() {
            let mut f = |x: &[f64]| env.expert_action(x)[k];
            let oracle = central_diff(&mut f, &s, FD_STEP);
            for (a, b) in row.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }
}
