//! Convergence and consistency properties of the regularized strong scheme.

use damage_core::diagnostics::strong_energy_balance_residual;
use damage_core::discretization::{assemble_operators, Operators};
use damage_core::presets::scenario;
use damage_core::state::SimState;
use damage_core::strong_galerkin::{run_strong, run_strong_with, RegParams, StrongRun};

fn state_distance(ops: &Operators, a: &SimState, b: &SimState) -> f64 {
    let d = |x: &[f64], y: &[f64]| {
        let v: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
        ops.l2_norm(&v).powi(2)
    };
    (d(&a.u, &b.u) + d(&a.v, &b.v) + d(&a.chi, &b.chi)).sqrt()
}

fn final_distance(ops: &Operators, a: &StrongRun, b: &StrongRun) -> f64 {
    state_distance(ops, a.traj.last(), b.traj.last())
}

#[test]
fn modal_truncation_converges_monotonically() {
    let spec = scenario("smooth_strong").unwrap();
    let runs: Vec<StrongRun> = [8, 16, 32]
        .iter()
        .map(|&m| {
            let mut s = spec.clone();
            s.strong.modes = m;
            run_strong(&s.resolve().unwrap()).unwrap()
        })
        .collect();
    let ops = assemble_operators(&spec.resolve().unwrap().mesh);
    let d1 = final_distance(&ops, &runs[0], &runs[1]);
    let d2 = final_distance(&ops, &runs[1], &runs[2]);
    assert!(d2 < d1, "{d1} then {d2}");
}

#[test]
fn delta_ladder_is_cauchy() {
    let cfg = scenario("smooth_strong").unwrap().resolve().unwrap();
    let runs: Vec<StrongRun> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&d: &f64| run_strong_with(&cfg, RegParams::new(d, d.powi(4)).unwrap()).unwrap())
        .collect();
    let ops = assemble_operators(&cfg.mesh);
    let d1 = final_distance(&ops, &runs[0], &runs[1]);
    let d2 = final_distance(&ops, &runs[1], &runs[2]);
    assert!(d2 < d1, "{d1} then {d2}");
}

#[test]
fn inertial_term_vanishes_along_schedule() {
    let cfg = scenario("smooth_strong").unwrap().resolve().unwrap();
    let ops = assemble_operators(&cfg.mesh);
    let mut prev = f64::INFINITY;
    for n in 1..=4 {
        let run = run_strong_with(&cfg, RegParams::schedule(n).unwrap()).unwrap();
        let sup = run
            .traj
            .states
            .iter()
            .map(|s| ops.l2_norm(s.omega_rate.as_ref().unwrap()).powi(2))
            .fold(0.0, f64::max);
        let value = run.reg.nu * sup;
        assert!(value < prev, "rung {n}: {value} after {prev}");
        prev = value;
    }
}

#[test]
fn energy_balance_is_second_order() {
    let spec = scenario("smooth_strong").unwrap();
    let residual = |sub: usize| {
        let mut s = spec.clone();
        s.strong.substeps = sub;
        let run = run_strong(&s.resolve().unwrap()).unwrap();
        *strong_energy_balance_residual(&run.traj).unwrap().last().unwrap()
    };
    let (r1, r2, r4) = (residual(1), residual(2), residual(4));
    assert!(r1 / r2 > 3.5 && r2 / r4 > 3.5, "{r1} {r2} {r4}");
}

#[test]
fn coherence_and_mean_identity_hold_at_every_step() {
    let cfg = scenario("smooth_strong").unwrap().resolve().unwrap();
    let run = run_strong(&cfg).unwrap();
    assert!(run.traj.is_complete());
    for (c, s) in run.coherence.iter().zip(&run.traj.states) {
        let scale = 1.0 + s.omega.as_ref().unwrap().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(*c <= cfg.tolerances.ell * scale, "{c}");
    }
    for (r, u) in run.mean_identity.iter().zip(&run.u_norm) {
        assert!(*r <= 1e-9 * (1.0 + u));
    }
    assert!(run.monitor.horizon.is_none());
    assert!(run.monitor.psi.iter().all(|p| p.is_finite() && *p > 0.0));
}

#[test]
fn psi_threshold_reports_a_horizon() {
    let mut spec = scenario("smooth_strong").unwrap();
    let psi0 = run_strong(&spec.resolve().unwrap()).unwrap().monitor.psi[0];
    spec.strong.psi_max = 1.001 * psi0;
    let run = run_strong(&spec.resolve().unwrap()).unwrap();
    assert!(run.traj.failure.is_none());
    assert_eq!(run.monitor.horizon, Some(run.traj.last().t));
    assert!(run.traj.states.len() < spec.steps + 1);
    spec.strong.psi_max = 0.5 * psi0;
    let run = run_strong(&spec.resolve().unwrap()).unwrap();
    assert_eq!(run.monitor.horizon, Some(0.0));
    assert_eq!(run.traj.states.len(), 1);
}
