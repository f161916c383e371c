//! Acceptance battery on the reference instance.
//!
//! Reference instance: premium 1.5, interest 0.03, drift 0.08,
//! volatility 0.3, discount 0.05, dividend cap 2, horizon 1; Poisson
//! claim arrivals at rate 1; exponential claim sizes of mean 1; start
//! state (0, 2, 0); 40 x 60 x 40 grid with collar 0.05 and viscosity
//! 0.05. Each test prints one PASS/FAIL line (run with `--nocapture` to
//! see them); the assertions carry the same thresholds.

use divopt::config::{Instance, RunConfig, REFERENCE_CONFIG};
use divopt::model::State;
use divopt::pide::MaximizerOptions;
use divopt::policy::{extract_policy, FeedbackPolicy};
use divopt::sim::SimConfig;
use divopt::solver::{
    build_psi, refine_study, solve_backward, validate_psi, SchemeOptions, ValueField,
};
use divopt::verify;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

fn instance() -> Instance {
    let cfg: RunConfig = toml::from_str(REFERENCE_CONFIG).expect("reference config parses");
    cfg.build(Path::new(".")).expect("reference config builds")
}

/// The solved reference field and its extracted policy, shared across
/// criteria.
fn solved() -> &'static (Instance, ValueField, FeedbackPolicy) {
    static SOLVED: OnceLock<(Instance, ValueField, FeedbackPolicy)> = OnceLock::new();
    SOLVED.get_or_init(|| {
        let inst = instance();
        let grid = inst.make_grid().unwrap();
        let psi = build_psi(&inst.psi_spec, &inst.params, grid.eps_n, grid.delta).unwrap();
        let field = solve_backward(
            &grid,
            &psi,
            &inst.params,
            &inst.waiting,
            &inst.claims,
            &SchemeOptions::default(),
        )
        .unwrap();
        let pf = extract_policy(
            &field,
            &inst.params,
            &inst.waiting,
            &inst.claims,
            &MaximizerOptions::default(),
        )
        .unwrap();
        let policy = FeedbackPolicy::new(pf);
        (inst, field, policy)
    })
}

fn report(n: usize, name: &str, pass: bool, measured: f64, tol: f64) {
    println!(
        "ACCEPTANCE {n:>2} {} {name}: measured {measured:.6e}, tolerance {tol:.6e}",
        if pass { "PASS" } else { "FAIL" }
    );
}

#[test]
fn criterion_01_mc_matches_field_at_start() {
    let t0 = Instant::now();
    let (inst, field, policy) = solved();
    let sim = SimConfig {
        dt: 1e-3,
        n_paths: 20_000,
        seed: inst.sim.seed,
        record_paths: false,
        start: State::new(0.0, 2.0, 0.0),
    };
    let entry = verify::mc_vs_pde("mc_vs_pde", field, policy, inst, &sim).unwrap();
    report(1, "mc_vs_pde", entry.pass, entry.measured, entry.tolerance);
    assert!(entry.pass, "{}", entry.detail);
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed <= 300.0, "runtime {elapsed:.1}s exceeds the 5 minute budget");
}

#[test]
fn criterion_02_heuristics_never_beat_solved_value() {
    let (inst, field, _) = solved();
    let sim = SimConfig {
        dt: 1e-3,
        n_paths: inst.verify.heuristic_paths,
        seed: inst.sim.seed,
        record_paths: false,
        start: State::new(0.0, 2.0, 0.0),
    };
    let entries = verify::suboptimality_sweep(field, inst, &sim).unwrap();
    assert_eq!(entries.len(), 5);
    let mut all = true;
    for e in &entries {
        report(2, &e.name, e.pass, e.measured, e.tolerance);
        all &= e.pass;
    }
    assert!(all, "a heuristic beat the solved value");
}

#[test]
fn criterion_03_viscosity_collar_contraction() {
    let t0 = Instant::now();
    let inst = instance();
    let rep = refine_study(
        &inst.params,
        &inst.waiting,
        &inst.claims,
        &inst.psi_spec,
        &[(0.1, 0.1), (0.05, 0.05), (0.025, 0.025)],
        inst.x_max,
        (40, 60, 40),
        &SchemeOptions::default(),
    )
    .unwrap();
    let last = *rep.sup_diffs.last().unwrap();
    let pass = rep.strictly_decreasing && last < 0.05;
    report(3, "viscosity_cauchy", pass, last, 0.05);
    assert!(rep.strictly_decreasing, "sup-differences not decreasing: {:?}", rep.sup_diffs);
    assert!(last < 0.05, "final sup-difference {last}");
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed <= 180.0, "runtime {elapsed:.1}s exceeds the 3 minute budget");
}

#[test]
fn criterion_04_monotone_in_surplus_all_nodes() {
    let (_, field, _) = solved();
    let g = &field.grid;
    let mut worst: f64 = 0.0;
    for i in 0..=g.n_s {
        for k in 0..=g.n_w {
            for j in 1..=g.n_x {
                worst = worst.max(field.values[g.idx(i, j - 1, k)] - field.values[g.idx(i, j, k)]);
            }
        }
    }
    let pass = worst <= 1e-12;
    report(4, "monotone_in_surplus", pass, worst, 1e-12);
    assert!(pass, "largest decrease {worst}");
}

#[test]
fn criterion_05_distance_barrier_sandwich() {
    let (inst, field, _) = solved();
    // pinned constants of the reference instance
    assert_eq!(verify::upper_barrier_q1(&inst.params), 4.0);
    assert!((verify::lower_barrier_q2(&inst.params, &inst.waiting) - 2.05).abs() < 1e-12);
    let psi = build_psi(&inst.psi_spec, &inst.params, field.eps_n, field.delta).unwrap();
    let entries = verify::bounds_and_shape(field, psi.sup, inst).unwrap();
    let sandwich = entries.iter().find(|e| e.name == "distance_sandwich").unwrap();
    report(5, "distance_sandwich", sandwich.pass, sandwich.measured, sandwich.tolerance);
    assert!(sandwich.pass, "worst violation {}", sandwich.measured);
}

#[test]
fn criterion_06_constant_intensity_clock_invariance() {
    let inst = instance();
    let entry = verify::clock_invariance_check(&inst).unwrap();
    report(6, "clock_invariance", entry.pass, entry.measured, entry.tolerance);
    assert!(entry.pass, "clock-slice spread {}", entry.measured);
}

#[test]
fn criterion_07_jump_density_integrability() {
    let entries = verify::integrability_entries(1.0).unwrap();
    let mut all = true;
    for e in &entries {
        report(7, &e.name, e.pass, e.measured, e.tolerance);
        assert!((e.tolerance - (2.0 / 3.0 + 1e-4)).abs() < 1e-12);
        all &= e.pass;
    }
    assert!(all);
}

#[test]
fn criterion_08_deterministic_annuity_oracle() {
    let entry = verify::deterministic_oracle_check(20_240_817).unwrap();
    report(8, "deterministic_oracle", entry.pass, entry.measured, entry.tolerance);
    assert!(entry.pass, "{}", entry.detail);
}

#[test]
fn criterion_09_maximizer_dominates_grid_search() {
    let inst = instance();
    let entry = verify::maximizer_dominance_check(&inst.params, inst.grid.eps_n).unwrap();
    report(9, "maximizer_dominance", entry.pass, entry.measured, entry.tolerance);
    assert!(entry.pass, "worst deficit {}", entry.measured);
}

#[test]
fn criterion_10_boundary_function_validation() {
    // Slope clause: the strip slope must exceed 1. Residual clause: the
    // generator residual must stay above max_dividend / 2 everywhere on
    // the unit-collar extension. The residual clause is not attainable
    // by any admissible boundary function at this collar/viscosity pair:
    // killing the mandated slope by the terminal slice costs more
    // residual than the margin allows (see the verification report for
    // the measured floor), so this check records the honest failure.
    let inst = instance();
    let psi = build_psi(&inst.psi_spec, &inst.params, inst.grid.eps_n, inst.grid.delta).unwrap();
    let rep = validate_psi(
        &psi,
        &inst.params,
        &inst.waiting,
        &inst.claims,
        inst.grid.eps_n,
        inst.grid.delta,
        inst.params.max_dividend / 2.0,
        inst.x_max,
    )
    .unwrap();
    report(10, "boundary_validation_slope", rep.slope_pass, rep.slope_min, 1.0);
    report(10, "boundary_validation_residual", rep.pass, rep.margin, 0.0);
    assert!(rep.slope_pass, "strip slope {}", rep.slope_min);
    assert!(
        rep.pass,
        "generator residual floor {:.4} is below max_dividend - k2 = {:.4} at (s={:.3}, x={:.4}, w={:.2})",
        rep.min_residual, rep.threshold, rep.worst_at.0, rep.worst_at.1, rep.worst_at.2
    );
}
