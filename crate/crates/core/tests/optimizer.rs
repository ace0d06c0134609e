mod common;

use crm_core::optimize::{ga_run, grid_oracle, Evaluator, ExecMode, GaConfig};
use crm_core::{CrmError, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(cfg: &GaConfig) -> GaConfig {
    GaConfig { population: 8, max_generations: 4, seed: 11, ..cfg.clone() }
}

#[test]
fn ga_is_seed_deterministic_in_every_mode() {
    let sc = common::coarse();
    let cfg = small(&common::first_joint_pair(&sc));
    let ev = Evaluator::new(&sc, &cfg);
    let a = ga_run(&cfg, &ev, ExecMode::Sequential);
    let b = ga_run(&cfg, &ev, ExecMode::Parallel);
    let c = ga_run(&cfg, &ev, ExecMode::Sequential);
    assert_eq!(a, b);
    assert_eq!(a, c);
    let other = ga_run(&GaConfig { seed: 12, ..cfg.clone() }, &ev, ExecMode::Sequential);
    assert_ne!(a.history, other.history);
}

#[test]
fn ga_history_and_best_respect_contract() {
    let sc = common::coarse();
    let cfg = small(&sc.optimizer.clone().unwrap());
    let ev = Evaluator::new(&sc, &cfg);
    let r = ga_run(&cfg, &ev, ExecMode::Parallel);
    assert!(r.history.len() <= cfg.max_generations);
    for w in r.history.windows(2) {
        assert!(w[1].best_so_far >= w[0].best_so_far);
    }
    assert!(r.feasible_found);
    for (j, b) in cfg.damping_bounds.iter().enumerate() {
        assert!(b[0] <= r.best.damping_offset[j] && r.best.damping_offset[j] <= b[1]);
    }
    for (j, b) in cfg.stiffness_bounds.iter().enumerate() {
        assert!(b[0] <= r.best.stiffness_offset[j] && r.best.stiffness_offset[j] <= b[1]);
    }
    // Center seed plus elitism: never worse than the baseline gains.
    let baseline = ev.evaluate(&ev.space.center());
    assert!(r.best.fitness >= baseline.fitness);
    let again = ev.evaluate(&r.best.genes);
    assert_eq!(again.fitness.to_bits(), r.best.fitness.to_bits());
    assert!(again.feasible);
}

#[test]
fn stiffness_cannot_be_driven_to_zero() {
    let sc = common::coarse();
    let cfg = sc.optimizer.clone().unwrap();
    let ev = Evaluator::new(&sc, &cfg);
    let mut genes = ev.space.center();
    genes[6] = -825.0;
    let c = ev.evaluate(&genes);
    assert_eq!(c.genes[6], -75.0);
    assert_eq!(c.stiffness_offset[0], -75.0);
    assert!(c.feasible);
}

#[test]
fn diverged_rollouts_are_infeasible_not_fatal() {
    // Massless rotors make the 1 ms step unstable.
    let mut sc = ScenarioConfig::rod_descent();
    sc.sim.dt = 1e-3;
    let cfg = GaConfig { population: 3, max_generations: 2, ..common::first_joint_pair(&sc) };
    let ev = Evaluator::new(&sc, &cfg);
    let c = ev.evaluate(&[0.0, 0.0]);
    assert!(c.failed());
    assert_eq!(c.violation, f64::MAX);
    let r = ga_run(&cfg, &ev, ExecMode::Sequential);
    assert!(!r.feasible_found);
}

#[test]
fn grid_resolution_one_is_the_box_center() {
    let sc = common::coarse();
    let cfg = common::first_joint_pair(&sc);
    let ev = Evaluator::new(&sc, &cfg);
    let g = grid_oracle(&ev, 1, ExecMode::Sequential).unwrap();
    assert_eq!(g.points.len(), 1);
    assert_eq!(g.best.genes, vec![0.0, 0.0]);
    assert_eq!(g.best, ev.evaluate(&[0.0, 0.0]));
}

#[test]
fn grid_refuses_more_than_two_free_genes() {
    let sc = common::coarse();
    let ev = Evaluator::new(&sc, &sc.optimizer.clone().unwrap());
    assert!(matches!(grid_oracle(&ev, 3, ExecMode::Sequential), Err(CrmError::TooManyFreeVariables(12))));
}

#[test]
fn grid_best_dominates_its_points() {
    let sc = common::coarse();
    let cfg = common::first_joint_pair(&sc);
    let ev = Evaluator::new(&sc, &cfg);
    let g = grid_oracle(&ev, 5, ExecMode::Parallel).unwrap();
    assert_eq!(g.points.len(), 25);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let p = &g.points[rng.random_range(0..g.points.len())];
        assert!(p.fitness <= g.best.fitness);
    }
    assert_eq!(g, grid_oracle(&ev, 5, ExecMode::Sequential).unwrap());
}

#[test]
fn mirrored_arms_prefer_symmetric_damping() {
    let sc = common::mirrored();
    let cfg = common::first_joint_pair(&sc);
    let ev = Evaluator::new(&sc, &cfg);
    let n = 9;
    let g = grid_oracle(&ev, n, ExecMode::Parallel).unwrap();
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (&g.points[i * n + j], &g.points[j * n + i]);
            assert!(common::rel_close(a.fitness, b.fitness, 1e-9), "{} vs {}", a.fitness, b.fitness);
        }
    }
    let idx = g.points.iter().position(|p| *p == g.best).unwrap();
    let (i, j) = (idx / n, idx % n);
    assert!(i.abs_diff(j) <= 1, "best at cell ({i}, {j})");
}
