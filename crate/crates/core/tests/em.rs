use mtsbl::dictionary::PhaseReference;
use mtsbl::sbl::{run_em, EmOptions, Hyperparameters};
use mtsbl::scenario::{
    generate_channel, simulate, synthesize_measurement, NoiseLevel, ScenarioConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn noise_precision_is_recovered() {
    let cfg = ScenarioConfig {
        n_bs: 16,
        m_users: 2,
        pilot_len: 4,
        n_subcarriers: 40,
        t_steps: 1,
        ..Default::default()
    };
    for seed in 0..5 {
        let real = simulate(
            &ScenarioConfig {
                rng_seed: seed,
                ..cfg.clone()
            },
            PhaseReference::Center,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(50 + seed);
        let batch = synthesize_measurement(
            &real.truth.steps[0].h,
            &real.dictionary,
            NoiseLevel::Variance(0.1),
            &mut rng,
        )
        .unwrap();
        assert_eq!(batch.alpha0, 10.0);
        let out = run_em(
            &batch.y,
            &real.dictionary,
            &Hyperparameters::initial(32),
            &EmOptions::default(),
        )
        .unwrap();
        let rel = (out.hyper.alpha0 - 10.0).abs() / 10.0;
        assert!(rel < 0.2, "seed {seed}: alpha0 = {}", out.hyper.alpha0);
    }
}

#[test]
fn converges_before_budget_at_reduced_scale() {
    let seeds = 20;
    let mut converged = 0;
    for seed in 0..seeds {
        let cfg = ScenarioConfig {
            n_bs: 32,
            n_subcarriers: 10,
            t_steps: 1,
            rng_seed: seed,
            ..Default::default()
        };
        let real = simulate(&cfg, PhaseReference::Center).unwrap();
        let out = run_em(
            &real.measurements[0].y,
            &real.dictionary,
            &Hyperparameters::initial(real.dictionary.n_coeffs()),
            &EmOptions::default(),
        )
        .unwrap();
        if out.convergence.converged {
            converged += 1;
        }
    }
    assert!(converged * 100 >= seeds * 95, "{converged}/{seeds}");
}

#[test]
fn channel_generation_is_seeded() {
    let cfg = ScenarioConfig {
        n_bs: 8,
        n_subcarriers: 2,
        t_steps: 3,
        ..Default::default()
    };
    let a = generate_channel(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = generate_channel(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let c = generate_channel(&cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
