use hopcurve_core::curriculum::{run_stages, Stage};
use hopcurve_core::learner::{FieldOracle, RewardOracle};
use hopcurve_core::{estimate_gradient, learn_step, run_learning, CurriculumSpec, EnvLevel, LearnerConfig, PolicyParams};

fn quadratic(a: f64, c: f64) -> f64 {
    2.0 - 0.002 * (a - 27.0).powi(2) - 0.003 * (c - 31.0).powi(2) + 0.001 * (a - 27.0) * (c - 31.0)
}

fn quadratic_gradient(a: f64, c: f64) -> [f64; 2] {
    [-0.004 * (a - 27.0) + 0.001 * (c - 31.0), -0.006 * (c - 31.0) + 0.001 * (a - 27.0)]
}

#[test]
fn central_differences_are_exact_on_quadratics() {
    let oracle = FieldOracle(quadratic);
    for delta in [0.5, 1.0, 2.0] {
        let cfg = LearnerConfig { perturbation: delta, ..LearnerConfig::default() };
        for &(a, c) in &[(5.0, 15.0), (20.0, 30.0), (33.3, 42.1)] {
            let est = estimate_gradient(&oracle, &PolicyParams::new(a, c), &cfg, 0).unwrap();
            let g = quadratic_gradient(a, c);
            for k in 0..2 {
                assert!((est.gradient[k] - g[k]).abs() <= 1e-9 * g[k].abs().max(1e-3), "{:?} vs {g:?}", est.gradient);
            }
            assert_eq!(est.rollouts, 5);
        }
    }
}

#[test]
fn cubic_error_is_second_order() {
    let f = |a: f64, c: f64| 1e-4 * a.powi(3) - 2e-4 * c.powi(3) + 1e-3 * a * c;
    let exact = |a: f64, c: f64| [3e-4 * a * a + 1e-3 * c, -6e-4 * c * c + 1e-3 * a];
    let oracle = FieldOracle(f);
    let p = PolicyParams::new(20.0, 15.0);
    let err = |delta: f64| {
        let cfg = LearnerConfig { perturbation: delta, ..LearnerConfig::default() };
        let est = estimate_gradient(&oracle, &p, &cfg, 0).unwrap();
        let g = exact(20.0, 15.0);
        [(est.gradient[0] - g[0]).abs(), (est.gradient[1] - g[1]).abs()]
    };
    let (e1, e2) = (err(2.0), err(1.0));
    for k in 0..2 {
        // the central-difference error of a cubic is f'''·δ²/6 exactly
        assert!((e1[k] / e2[k] - 4.0).abs() < 1e-6, "ratio {}", e1[k] / e2[k]);
    }
    assert!((e2[0] - 1e-4).abs() < 1e-12 && (e2[1] - 2e-4).abs() < 1e-12);
}

#[test]
fn clipped_probes_use_the_clipped_divisor() {
    let oracle = FieldOracle(|a: f64, c: f64| 0.5 * a + 0.25 * c);
    let est = estimate_gradient(&oracle, &PolicyParams::new(0.0, 45.0), &LearnerConfig::default(), 0).unwrap();
    assert!((est.gradient[0] - 0.5).abs() < 1e-12 && (est.gradient[1] - 0.25).abs() < 1e-12);
}

#[test]
fn quadratic_ascent_converges() {
    // Hessian eigenvalues -0.15 and -0.25, so the default rate contracts
    let oracle = FieldOracle(|a: f64, c: f64| {
        let (x, y) = (a - 27.0, c - 31.0);
        5.0 - 0.1 * (x * x + y * y) + 0.05 * x * y
    });
    for (k, init) in [(0.0, 10.0), (40.0, 45.0), (0.0, 45.0), (40.0, 10.0), (10.0, 25.0)].into_iter().enumerate() {
        let cfg = LearnerConfig { seed: k as u64, stop_window: 100, ..LearnerConfig::default() };
        let trace = run_learning(PolicyParams::new(init.0, init.1), &oracle, &cfg, "quadratic").unwrap();
        assert!(trace.len() <= 30);
        let last = trace.last().unwrap();
        let dist = ((last.params[0] - 27.0).powi(2) + (last.params[1] - 31.0).powi(2)).sqrt();
        assert!(dist < 0.5, "from {init:?} ended {dist} deg away");
    }
}

#[test]
fn learning_is_seed_invariant_on_noise_free_fields() {
    let oracle = FieldOracle(quadratic);
    let run = |seed| run_learning(PolicyParams::new(5.0, 15.0), &oracle, &LearnerConfig { seed, ..LearnerConfig::default() }, "q").unwrap();
    assert_eq!(run(1).records, run(99).records);
}

#[test]
fn trace_stays_in_the_box_and_counts_rollouts() {
    let oracle = FieldOracle(|a: f64, c: f64| a + c);
    let cfg = LearnerConfig { learning_rate: 50.0, rollouts_per_eval: 3, ..LearnerConfig::default() };
    let trace = run_learning(PolicyParams::new(30.0, 40.0), &oracle, &cfg, "corner").unwrap();
    for r in &trace.records {
        assert!(cfg.bounds.contains(&PolicyParams::new(r.params[0], r.params[1])));
    }
    assert_eq!(trace.rollouts(), trace.len() * 13);
}

#[test]
fn flat_field_steps_have_no_preferred_direction() {
    let oracle = FieldOracle(|_: f64, _: f64| 0.0);
    let (mut sx, mut sy) = (0.0, 0.0);
    let n = 200;
    for seed in 0..n {
        let p = PolicyParams::new(20.0, 27.5);
        let cfg = LearnerConfig { seed, ..LearnerConfig::default() };
        let est = estimate_gradient(&oracle, &p, &cfg, seed).unwrap();
        assert_eq!(est.gradient, [0.0, 0.0]);
        let q = learn_step(&p, est.gradient, &cfg, seed);
        let step = ((q.theta0 - p.theta0).powi(2) + (q.theta1 - p.theta1).powi(2)).sqrt();
        assert!((step - 1.0).abs() < 1e-12);
        sx += q.theta0 - p.theta0;
        sy += q.theta1 - p.theta1;
    }
    // mean of n unit vectors: standard error 1/sqrt(2n) per axis
    let se = 1.0 / (2.0 * n as f64).sqrt();
    assert!((sx / n as f64).abs() < 4.0 * se && (sy / n as f64).abs() < 4.0 * se);
}

#[test]
fn single_stage_curriculum_is_plain_learning() {
    let oracle = FieldOracle(quadratic);
    let learner = LearnerConfig { seed: 5, max_steps: 12, stop_window: 100, ..LearnerConfig::default() };
    let spec = CurriculumSpec {
        levels: vec![EnvLevel::Original],
        learner: learner.clone(),
        total_budget: None,
        max_steps_per_env: 12,
        stall_window: 100,
        ..CurriculumSpec::default()
    };
    let stages = [Stage { label: "original".into(), oracle: &oracle as &dyn RewardOracle }];
    let init = PolicyParams::new(3.0, 14.0);
    let cur = run_stages(init, &spec, &stages).unwrap();
    let plain = run_learning(init, &oracle, &learner, "original").unwrap();
    assert_eq!(cur.stages.len(), 1);
    assert_eq!(cur.stages[0].trace.records, plain.records);
    assert_eq!(cur.total_rollouts, plain.rollouts());
}

#[test]
fn curriculum_moves_on_when_the_next_field_has_slope() {
    let easy = FieldOracle(quadratic);
    let hard = FieldOracle(|a: f64, c: f64| quadratic(a, c).max(1.9) - 1.9);
    let spec = CurriculumSpec {
        levels: vec![EnvLevel::Beginner, EnvLevel::Original],
        learner: LearnerConfig { learning_rate: 150.0, ..LearnerConfig::default() },
        ..CurriculumSpec::default()
    };
    let stages = [
        Stage { label: "beginner".into(), oracle: &easy as &dyn RewardOracle },
        Stage { label: "original".into(), oracle: &hard as &dyn RewardOracle },
    ];
    let res = run_stages(PolicyParams::new(2.0, 12.0), &spec, &stages).unwrap();
    assert_eq!(res.stages.len(), 2);
    assert!(res.total_rollouts <= 150);
    let end = res.final_params;
    assert!(hard.reward(&end, 0).unwrap() > 0.09);
    assert!(res.memory.get("beginner").is_some());
}
