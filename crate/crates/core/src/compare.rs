//! Weak runs measured against a refined reference run through the relative
//! energy.

use serde::Serialize;

use crate::diagnostics::{align_reference, rei_from_series, relative_series, RelativeReport, RelativeSeries};
use crate::discretization::assemble_operators_with;
use crate::error::{invalid, Result};
use crate::model::{FieldSpec, ReferenceKind, ScenarioSpec};
use crate::state::Trajectory;
use crate::strong_galerkin::run_strong;
use crate::weak_stepper::run_weak;

/// Outcome of a comparison. `reference` is already resampled onto the mesh
/// and time levels of `weak`.
#[derive(Debug, Clone, Serialize)]
pub struct CompareOutcome {
    pub weak: Trajectory,
    pub reference: Trajectory,
    pub reference_kind: ReferenceKind,
    pub reference_nodes: usize,
    pub reference_steps: usize,
    pub series: RelativeSeries,
    pub report: RelativeReport,
}

/// Same scenario with mesh width and time step divided by `factor`.
pub fn refined(spec: &ScenarioSpec, factor: usize) -> ScenarioSpec {
    let mut s = spec.clone();
    s.nodes = (spec.nodes - 1) * factor + 1;
    s.steps = spec.steps * factor;
    s.output_every = spec.output_every * factor;
    s
}

/// Scenario with the configured `χ₀` perturbation applied.
pub fn perturbed(spec: &ScenarioSpec) -> ScenarioSpec {
    let mut s = spec.clone();
    if let Some(p) = s.compare.chi0_perturbation.take() {
        s.initial.chi0 = FieldSpec::Sum { parts: vec![spec.initial.chi0.clone(), p] };
    }
    s
}

fn run_kind(spec: &ScenarioSpec, kind: ReferenceKind) -> Result<Trajectory> {
    let cfg = spec.resolve()?;
    let traj = match kind {
        ReferenceKind::Weak => run_weak(&cfg)?,
        ReferenceKind::Strong => run_strong(&cfg)?.traj,
    };
    traj.check_complete()?;
    Ok(traj)
}

/// Runs the weak scheme on the (possibly perturbed) scenario and the
/// reference on the unperturbed scenario refined by `compare.refinement`,
/// then evaluates the relative energy inequality with `compare.c_rei`.
/// The two runs execute in parallel.
pub fn compare(spec: &ScenarioSpec) -> Result<CompareOutcome> {
    let factor = spec.compare.refinement;
    if factor == 0 {
        return Err(invalid("compare refinement must be at least 1"));
    }
    let weak_spec = perturbed(spec);
    let mut ref_spec = refined(spec, factor);
    ref_spec.compare.chi0_perturbation = None;
    let kind = spec.compare.reference;
    let (weak, reference) = std::thread::scope(|scope| {
        let handle = scope.spawn(|| run_kind(&ref_spec, kind));
        let weak = run_kind(&weak_spec, ReferenceKind::Weak);
        (weak, handle.join().expect("reference worker panicked"))
    });
    let (weak, reference) = (weak?, reference?);
    let weak_cfg = weak_spec.resolve()?;
    let ref_mesh = crate::discretization::build_mesh(ref_spec.nodes, ref_spec.length)?;
    let aligned = align_reference(&weak, &weak_cfg.mesh, &reference, &ref_mesh)?;
    let ops = assemble_operators_with(&weak_cfg.mesh, weak_cfg.mass);
    let series = relative_series(&ops, &weak, &aligned, &weak_cfg.material, &weak_cfg.potential, weak_cfg.tolerances.mono)?;
    let report = rei_from_series(&series, spec.compare.c_rei);
    Ok(CompareOutcome {
        weak,
        reference: aligned,
        reference_kind: kind,
        reference_nodes: ref_spec.nodes,
        reference_steps: ref_spec.steps,
        series,
        report,
    })
}
