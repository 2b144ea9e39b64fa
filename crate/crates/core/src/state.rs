//! Simulation states and trajectories shared by both schemes.

use serde::Serialize;

use crate::weak_stepper::StepReport;

/// Nodal fields at one time level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimState {
    pub step: usize,
    pub t: f64,
    pub u: Vec<f64>,
    /// `u_t`; the backward difference `(uᵏ − uᵏ⁻¹)/τ` in the weak scheme.
    pub v: Vec<f64>,
    pub chi: Vec<f64>,
    /// `χ` at the previous time level (equal to `χ` at the initial time).
    pub chi_prev: Vec<f64>,
    /// `χ_t`; the backward difference in the weak scheme.
    pub chi_rate: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_rate: Option<Vec<f64>>,
}

impl SimState {
    pub fn initial(u: Vec<f64>, v: Vec<f64>, chi: Vec<f64>) -> Self {
        let n = chi.len();
        SimState {
            step: 0,
            t: 0.0,
            u,
            v,
            chi_prev: chi.clone(),
            chi,
            chi_rate: vec![0.0; n],
            omega: None,
            omega_rate: None,
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Weak,
    Strong,
}

/// Local time means of the forcing on each step interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForcingMeans {
    /// Spatial profile of the body force at the nodes.
    pub space: Vec<f64>,
    /// `(1/τ)∫ time(t) dt` per interval; entry `k − 1` belongs to step `k`.
    pub body: Vec<f64>,
    pub g_left: Vec<f64>,
    pub g_right: Vec<f64>,
    /// Time profile of the body force at `t_k`, `k = 0..K`.
    pub pointwise: Vec<f64>,
}

impl ForcingMeans {
    pub fn zero(n: usize, steps: usize) -> Self {
        ForcingMeans {
            space: vec![0.0; n],
            body: vec![0.0; steps],
            g_left: vec![0.0; steps],
            g_right: vec![0.0; steps],
            pointwise: vec![0.0; steps + 1],
        }
    }

    /// Nodal `f̄ₖ` for step `k ≥ 1`.
    pub fn body_nodal(&self, k: usize) -> Vec<f64> {
        let s = self.body[k - 1];
        self.space.iter().map(|x| x * s).collect()
    }
}

/// Energy bookkeeping of one strong step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct StrongStepRecord {
    /// Regularized energy `E_δ` at the end of the step.
    pub energy: f64,
    /// `𝒱 = (ν/2) χ_tᵀ K χ_t` at the end of the step.
    pub inertial: f64,
    pub dissipation_increment: f64,
    pub work_increment: f64,
    /// `(ν/2)∫ Σ m W̆‴_δ(χ) χ_t³` over the step.
    pub cubic_increment: f64,
    pub newton_iterations: usize,
    pub stage_residual: f64,
    pub elliptic_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFailure {
    pub step: usize,
    pub message: String,
    #[serde(skip)]
    pub error: crate::SimError,
}

/// Ordered snapshots, one per time level, with per-step solver reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    /// Spacing of consecutive states.
    pub tau: f64,
    pub states: Vec<SimState>,
    pub reports: Vec<StepReport>,
    pub means: ForcingMeans,
    /// Strong runs: one energy record per state (entry 0 has zero increments).
    pub strong: Vec<StrongStepRecord>,
    pub failure: Option<StepFailure>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &SimState {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    /// Converts a recorded step failure into an error.
    pub fn check_complete(&self) -> crate::Result<()> {
        match &self.failure {
            None => Ok(()),
            Some(f) => Err(crate::SimError::Step { step: f.step, source: Box::new(f.error.clone()) }),
        }
    }
}
