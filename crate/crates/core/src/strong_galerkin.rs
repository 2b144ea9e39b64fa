//! Regularized spectral Galerkin scheme for strong solutions.
//!
//! Displacements live on the span of the first discrete Neumann eigenmodes.
//! Damage is carried by the nodal field `ω = −Δχ + W̆′_δ(χ) + χ`, which obeys
//! `ν ω_tt + ω + χ_t + I′_δ(χ_t) + a′(χ) g(u) + W̌′(χ) − χ = 0`.
//! Both parts advance together with the implicit midpoint rule; `χ` and `χ_t`
//! are recovered from `(ω, ω_t)` by elliptic solves.
//!
//! The constant mode carries no strain and decouples, so it is advanced by
//! exact quadrature of the forcing moments.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::discretization::{neumann_eigenbasis, BandMatrix, EigenBasis, Operators, SymTridiag};
use crate::error::{invalid, Result, SimError};
use crate::model::{make_w_delta, MaterialLaw, OmegaRateInit, PotentialSplit, ScenarioConfig, StrongConfig, TimeProfile, Tolerances};
use crate::quadrature;
use crate::regularization::{make_i_delta, RegularizedFunction};
use crate::state::{SimState, StepFailure, StrongStepRecord, Trajectory, TrajectoryKind};
use crate::weak_stepper::{elastic_density, forcing_means};

const ELLIPTIC_MAX_ITERATIONS: usize = 60;
const STAGE_MAX_NEWTON: usize = 50;
const STAGE_MAX_OUTER: usize = 100;
/// A failed substep is retried with halved steps down to `τ / 2^MAX_HALVINGS`.
const MAX_HALVINGS: u32 = 6;

/// Regularization parameters `δ` and `ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegParams {
    /// Schedule index when the parameters come from the default schedule.
    pub rung: Option<u32>,
    pub delta: f64,
    pub nu: f64,
}

impl RegParams {
    pub fn new(delta: f64, nu: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid(format!("δ must lie in (0, 1), got {delta}")));
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(invalid(format!("ν must be positive, got {nu}")));
        }
        Ok(RegParams { rung: None, delta, nu })
    }

    /// Default schedule `δₙ = 2^{−n}`, `νₙ = 2^{−4n}`, so that `√νₙ/δₙ = 2^{−n}`.
    pub fn schedule(n: u32) -> Result<Self> {
        if n == 0 || n > 60 {
            return Err(invalid(format!("schedule rung must lie in 1..=60, got {n}")));
        }
        let delta = 0.5f64.powi(n as i32);
        Ok(RegParams { rung: Some(n), delta, nu: delta.powi(4) })
    }

    /// Schedule rung of the configuration with optional explicit overrides.
    pub fn from_config(cfg: &StrongConfig) -> Result<Self> {
        let mut p = RegParams::schedule(cfg.rung)?;
        if cfg.delta.is_some() || cfg.nu.is_some() {
            p = RegParams::new(cfg.delta.unwrap_or(p.delta), cfg.nu.unwrap_or(p.nu))?;
        }
        Ok(p)
    }

    /// `√ν / δ`, which the schedule drives to zero.
    pub fn scaling_ratio(&self) -> f64 {
        self.nu.sqrt() / self.delta
    }
}

/// Result of the elliptic solve `ω ↦ χ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllipticSolve {
    pub chi: Vec<f64>,
    pub iterations: usize,
    /// `max |−Δχ + W̆′_δ(χ) + χ − ω|` at the nodes.
    pub residual: f64,
    /// Measured `(‖χ‖_{H²} + ‖W̆′_δ(χ)‖) / ‖ω‖`, zero when `ω = 0`.
    pub s0_ratio: f64,
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `M_L(−Δχ + W̆′_δ(χ) + χ)` with lumped mass `M_L`.
fn phi_lumped(ops: &Operators, w_delta: &RegularizedFunction, chi: &[f64]) -> Result<Vec<f64>> {
    let mut out = ops.stiffness_apply(chi);
    for i in 0..chi.len() {
        out[i] += ops.weights[i] * (w_delta.eval(chi[i])?.value + chi[i]);
    }
    Ok(out)
}

/// `K(χ) = S + M_L diag(W̆″_δ(χ) + 1)`.
fn k_matrix(ops: &Operators, w_delta: &RegularizedFunction, chi: &[f64]) -> Result<SymTridiag> {
    let mut k = ops.stiffness.clone();
    for i in 0..chi.len() {
        k.diag[i] += ops.weights[i] * (w_delta.eval(chi[i])?.d1 + 1.0);
    }
    Ok(k)
}

/// Nodal residual `max |(M_L⁻¹ S χ)ᵢ + W̆′_δ(χᵢ) + χᵢ − ωᵢ|`.
pub fn elliptic_residual(ops: &Operators, w_delta: &RegularizedFunction, chi: &[f64], omega: &[f64]) -> Result<f64> {
    let f = phi_lumped(ops, w_delta, chi)?;
    Ok((0..chi.len()).map(|i| (f[i] / ops.weights[i] - omega[i]).abs()).fold(0.0, f64::max))
}

/// Discrete `H²` norm `(‖χ‖² + χᵀSχ + ‖M_L⁻¹Sχ‖²)^{1/2}` in the lumped metric.
pub fn h2_norm(ops: &Operators, chi: &[f64]) -> f64 {
    let s = ops.stiffness_apply(chi);
    let mut sum = ops.stiffness.quad_form(chi);
    for i in 0..chi.len() {
        let m = ops.weights[i];
        sum += m * chi[i] * chi[i] + s[i] * s[i] / m;
    }
    sum.max(0.0).sqrt()
}

fn lumped_norm(ops: &Operators, x: &[f64]) -> f64 {
    x.iter().zip(&ops.weights).map(|(v, m)| m * v * v).sum::<f64>().sqrt()
}

/// Solves `−Δχ + W̆′_δ(χ) + χ = ω` with Neumann conditions by damped Newton.
/// The problem is the gradient equation of a strictly convex functional, so
/// the solution is unique.
pub fn chi_from_omega(
    ops: &Operators,
    w_delta: &RegularizedFunction,
    omega: &[f64],
    guess: Option<&[f64]>,
    tol: f64,
) -> Result<EllipticSolve> {
    let n = omega.len();
    if n != ops.n() {
        return Err(invalid("ω has the wrong length"));
    }
    let target = tol * (1.0 + max_abs(omega));
    let mut chi = match guess {
        Some(g) => g.to_vec(),
        None => omega.iter().map(|w| 0.5 * w).collect(),
    };
    let residual_of = |chi: &[f64]| -> Result<(Vec<f64>, f64)> {
        let mut f = phi_lumped(ops, w_delta, chi)?;
        let mut r = 0.0f64;
        for i in 0..n {
            f[i] -= ops.weights[i] * omega[i];
            r = r.max((f[i] / ops.weights[i]).abs());
        }
        Ok((f, r))
    };
    let (mut f, mut r) = residual_of(&chi)?;
    let mut iterations = 0;
    while r > target {
        if iterations == ELLIPTIC_MAX_ITERATIONS {
            return Err(SimError::NonConvergence { solver: "elliptic omega-to-chi solve", iterations, residual: r });
        }
        iterations += 1;
        let k = k_matrix(ops, w_delta, &chi)?;
        let step = k.solve(&f.iter().map(|v| -v).collect::<Vec<_>>())?;
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = chi.iter().zip(&step).map(|(c, d)| c + alpha * d).collect();
            let (ft, rt) = residual_of(&trial)?;
            if rt < (1.0 - 1e-4 * alpha) * r || rt <= target {
                chi = trial;
                f = ft;
                r = rt;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-10 {
                return Err(SimError::NonConvergence { solver: "elliptic omega-to-chi line search", iterations, residual: r });
            }
        }
    }
    let om = lumped_norm(ops, omega);
    let s0_ratio = if om > 0.0 {
        let wp: Vec<f64> = chi.iter().map(|&c| w_delta.eval(c).map(|v| v.value)).collect::<Result<_>>()?;
        (h2_norm(ops, &chi) + lumped_norm(ops, &wp)) / om
    } else {
        0.0
    };
    Ok(EllipticSolve { chi, iterations, residual: r, s0_ratio })
}

/// Solves `(−Δ + W̆″_δ(χ) + 1) χ_t = ω_t` with Neumann conditions.
pub fn chi_rate_from_omega_rate(
    ops: &Operators,
    w_delta: &RegularizedFunction,
    chi: &[f64],
    omega_rate: &[f64],
) -> Result<Vec<f64>> {
    let k = k_matrix(ops, w_delta, chi)?;
    let rhs: Vec<f64> = omega_rate.iter().zip(&ops.weights).map(|(w, m)| w * m).collect();
    k.solve(&rhs)
}

/// State of the strong scheme: modal displacement and velocity, nodal damage
/// variables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralState {
    pub t: f64,
    /// Modal coefficients of `u`, constant mode first.
    pub c: Vec<f64>,
    /// Modal coefficients of `u_t`.
    pub d: Vec<f64>,
    pub chi: Vec<f64>,
    pub chi_rate: Vec<f64>,
    pub omega: Vec<f64>,
    pub omega_rate: Vec<f64>,
}

/// Solver statistics of one accepted substep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct StageInfo {
    pub outer_iterations: usize,
    pub newton_iterations: usize,
    pub stage_residual: f64,
    pub elliptic_residual: f64,
}

/// Energy quantities of the regularized system at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct StrongEnergy {
    /// `E_δ`: kinetic, elastic, gradient and regularized potential energy.
    pub energy: f64,
    /// `𝒱 = (ν/2) χ_tᵀ K(χ) χ_t`.
    pub inertial: f64,
    /// `b 𝕍 |ε(u_t)|² + |χ_t|² + I′_δ(χ_t) χ_t`.
    pub dissipation: f64,
    /// `∫ f u_t`.
    pub power: f64,
    /// `(ν/2) Σ mᵢ W̆‴_δ(χᵢ) χ_{t,i}³`.
    pub cubic: f64,
}

/// Discretized regularized system.
#[derive(Debug, Clone)]
pub struct StrongModel {
    pub ops: Operators,
    pub basis: EigenBasis,
    pub material: MaterialLaw,
    pub potential: PotentialSplit,
    pub w_delta: RegularizedFunction,
    pub i_delta: RegularizedFunction,
    pub reg: RegParams,
    pub tolerances: Tolerances,
    pub forcing_time: TimeProfile,
    /// `Yᵀ M f_space`, the modal load of the spatial forcing profile.
    pub space_modal: Vec<f64>,
    /// `1ᵀ M f_space`.
    pub space_integral: f64,
    /// Nonconstant modes as columns.
    modes: DMatrix<f64>,
}

impl StrongModel {
    pub fn new(cfg: &ScenarioConfig, reg: RegParams) -> Result<Self> {
        cfg.check_strong_admissible()?;
        let mut ops = crate::discretization::assemble_operators_with(&cfg.mesh, cfg.mass);
        ops.mass_kind = crate::discretization::MassKind::Consistent;
        let n_modes = cfg.strong.modes;
        if n_modes == 0 {
            return Err(invalid("strong mode needs at least one nonconstant mode"));
        }
        let mut basis = neumann_eigenbasis(&ops, cfg.material.v, n_modes)?;
        // Exact constant first mode and exactly mean-free higher modes keep
        // the mean displacement decoupled.
        let length = cfg.mesh.length;
        let ones = vec![1.0; ops.n()];
        let m1 = ops.mass_consistent.matvec(&ones);
        for i in 0..ops.n() {
            basis.vectors[(i, 0)] = 1.0 / length.sqrt();
        }
        for k in 1..basis.modes() {
            let mean = (0..ops.n()).map(|i| m1[i] * basis.vectors[(i, k)]).sum::<f64>() / length;
            for i in 0..ops.n() {
                basis.vectors[(i, k)] -= mean;
            }
        }
        let space = cfg.body_space()?;
        let space_modal = basis.project(&ops, &space);
        let space_integral = m1.iter().zip(&space).map(|(a, b)| a * b).sum();
        let modes = basis.vectors.columns(1, basis.modes() - 1).into_owned();
        Ok(StrongModel {
            w_delta: make_w_delta(&cfg.potential, reg.delta)?,
            i_delta: make_i_delta(reg.delta)?,
            ops,
            basis,
            material: cfg.material,
            potential: cfg.potential,
            reg,
            tolerances: cfg.tolerances,
            forcing_time: cfg.forcing.body_time.clone(),
            space_modal,
            space_integral,
            modes,
        })
    }

    pub fn n(&self) -> usize {
        self.ops.n()
    }

    fn n_modes(&self) -> usize {
        self.basis.modes()
    }

    /// `W̌′(χ)` plus the constant removed from `W̆′_δ` by its normalization.
    fn drift(&self, x: f64) -> f64 {
        self.potential.concave_d1(x) + self.w_delta.shift
    }

    /// Projected stiffness `Y₁ᵀ S_c Y₁` for element coefficients `c`.
    fn modal_stiffness(&self, element_coeff: &[f64]) -> DMatrix<f64> {
        let s = self.ops.weighted_stiffness(element_coeff);
        let mut sy = DMatrix::zeros(self.n(), self.modes.ncols());
        for k in 0..self.modes.ncols() {
            let col: Vec<f64> = self.modes.column(k).iter().copied().collect();
            sy.set_column(k, &DVector::from_vec(s.matvec(&col)));
        }
        self.modes.transpose() * sy
    }

    fn a_elements(&self, chi: &[f64]) -> Vec<f64> {
        self.ops.element_average(&self.material.a_nodal(chi)).iter().map(|a| self.material.c * a).collect()
    }

    fn b_elements(&self, chi: &[f64]) -> Vec<f64> {
        self.ops.element_average(&self.material.b_nodal(chi)).iter().map(|b| self.material.v * b).collect()
    }

    pub fn displacement(&self, c: &[f64]) -> Vec<f64> {
        self.basis.synthesize(c)
    }

    /// Projects initial data and builds a coherent spectral state.
    pub fn initial_state(&self, cfg: &ScenarioConfig) -> Result<SpectralState> {
        let c = self.basis.project(&self.ops, &cfg.u0);
        let d = self.basis.project(&self.ops, &cfg.v0);
        let chi = cfg.chi0.clone();
        let omega: Vec<f64> = phi_lumped(&self.ops, &self.w_delta, &chi)?
            .iter()
            .zip(&self.ops.weights)
            .map(|(f, m)| f / m)
            .collect();
        let omega_rate = match &cfg.strong.omega_rate0 {
            OmegaRateInit::Zero => vec![0.0; self.n()],
            OmegaRateInit::Field { field } => field.sample(&cfg.mesh)?,
            OmegaRateInit::QuasiStatic => self.quasi_static_rate(&c, &chi, &omega)?,
        };
        let chi_rate = chi_rate_from_omega_rate(&self.ops, &self.w_delta, &chi, &omega_rate)?;
        Ok(SpectralState { t: 0.0, c, d, chi, chi_rate, omega, omega_rate })
    }

    /// `ω_t` for which the `ν`-term vanishes initially: nodally
    /// `χ_t + I′_δ(χ_t) = −(ω + a′(χ) g + W̌′(χ) − χ)`, then `ω_t = K(χ) χ_t / m`.
    fn quasi_static_rate(&self, c: &[f64], chi: &[f64], omega: &[f64]) -> Result<Vec<f64>> {
        let g = elastic_density(&self.ops, self.material.c, &self.displacement(c));
        let mut rate = vec![0.0; self.n()];
        for i in 0..self.n() {
            let target = -(omega[i] + self.material.a.d1(chi[i]) * g[i] + self.drift(chi[i]) - chi[i]);
            let mut x = target;
            for _ in 0..100 {
                let v = self.i_delta.eval(x)?;
                let f = x + v.value - target;
                if f.abs() <= 1e-15 * (1.0 + target.abs()) {
                    break;
                }
                x -= f / (1.0 + v.d1);
            }
            rate[i] = x;
        }
        let k = k_matrix(&self.ops, &self.w_delta, chi)?;
        Ok(k.matvec(&rate).iter().zip(&self.ops.weights).map(|(v, m)| v / m).collect())
    }

    /// Residuals of the two damage stage equations for midpoint unknowns
    /// `(χ̄, z = χ̄_t)`, scaled to units of `ω` and of the flow rule.
    #[allow(clippy::too_many_arguments)]
    fn damage_stage_residual(
        &self,
        s: &SpectralState,
        tau: f64,
        g: &[f64],
        chi: &[f64],
        z: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let n = self.n();
        let m = &self.ops.weights;
        let two_tau = 2.0 / tau;
        let alpha = 4.0 * self.reg.nu / (tau * tau) + 1.0;
        let beta = 2.0 * self.reg.nu / tau;
        let phi = phi_lumped(&self.ops, &self.w_delta, chi)?;
        let sz = self.ops.stiffness_apply(z);
        let mut e1 = vec![0.0; n];
        let mut e2 = vec![0.0; n];
        let mut r = 0.0f64;
        for i in 0..n {
            let p = phi[i] - m[i] * s.omega[i];
            let w2 = self.w_delta.eval(chi[i])?.d1;
            e1[i] = sz[i] + m[i] * (w2 + 1.0) * z[i] - two_tau * p;
            let flow = z[i] + self.i_delta.eval(z[i])?.value + self.material.a.d1(chi[i]) * g[i] + self.drift(chi[i]) - chi[i];
            e2[i] = alpha * p + m[i] * s.omega[i] - beta * m[i] * s.omega_rate[i] + m[i] * flow;
            r = r.max((e1[i] / (m[i] * two_tau)).abs()).max((e2[i] / (m[i] * alpha)).abs());
        }
        Ok((e1, e2, r))
    }

    /// Newton solve of the damage stage for fixed elastic density `g`.
    /// The `W̆‴_δ` contribution is left out of the Jacobian.
    fn damage_stage(
        &self,
        s: &SpectralState,
        tau: f64,
        g: &[f64],
        chi0: &[f64],
        z0: &[f64],
        target: f64,
    ) -> Result<(Vec<f64>, Vec<f64>, usize, f64)> {
        let n = self.n();
        let m = &self.ops.weights;
        let two_tau = 2.0 / tau;
        let alpha = 4.0 * self.reg.nu / (tau * tau) + 1.0;
        let (mut chi, mut z) = (chi0.to_vec(), z0.to_vec());
        let (mut e1, mut e2, mut r) = self.damage_stage_residual(s, tau, g, &chi, &z)?;
        let mut it = 0;
        while r > target {
            if it == STAGE_MAX_NEWTON {
                return Err(SimError::NonConvergence { solver: "strong damage stage", iterations: it, residual: r });
            }
            it += 1;
            let k = k_matrix(&self.ops, &self.w_delta, &chi)?;
            let mut jac = BandMatrix::zeros(2 * n, 3, 3);
            for i in 0..n {
                let (row1, row2) = (2 * i, 2 * i + 1);
                let extra = m[i] * (self.material.a.d2(chi[i]) * g[i] + self.potential.concave_d2() - 1.0);
                let i2 = self.i_delta.eval(z[i])?.d1;
                jac.add(row1, 2 * i, -two_tau * k.diag[i]);
                jac.add(row1, 2 * i + 1, k.diag[i]);
                jac.add(row2, 2 * i, alpha * k.diag[i] + extra);
                jac.add(row2, 2 * i + 1, m[i] * (1.0 + i2));
                for j in [i.wrapping_sub(1), i + 1] {
                    if j >= n {
                        continue;
                    }
                    let kij = k.off[i.min(j)];
                    jac.add(row1, 2 * j, -two_tau * kij);
                    jac.add(row1, 2 * j + 1, kij);
                    jac.add(row2, 2 * j, alpha * kij);
                }
            }
            let mut rhs = vec![0.0; 2 * n];
            for i in 0..n {
                rhs[2 * i] = -e1[i];
                rhs[2 * i + 1] = -e2[i];
            }
            let step = jac.solve(&rhs)?;
            let mut lambda = 1.0;
            loop {
                let ct: Vec<f64> = (0..n).map(|i| chi[i] + lambda * step[2 * i]).collect();
                let zt: Vec<f64> = (0..n).map(|i| z[i] + lambda * step[2 * i + 1]).collect();
                let (a1, a2, rt) = self.damage_stage_residual(s, tau, g, &ct, &zt)?;
                if rt < (1.0 - 1e-4 * lambda) * r || rt <= target {
                    chi = ct;
                    z = zt;
                    e1 = a1;
                    e2 = a2;
                    r = rt;
                    break;
                }
                lambda *= 0.5;
                if lambda < 1e-10 {
                    return Err(SimError::NonConvergence { solver: "strong damage stage line search", iterations: it, residual: r });
                }
            }
        }
        Ok((chi, z, it, r))
    }

    /// `(1/τ)∫ time` and `∫ (t₁ − r) time(r) dr` over `[t₀, t₁]`.
    fn forcing_moments(&self, t0: f64, t1: f64) -> Result<(f64, f64)> {
        let prof = &self.forcing_time;
        if prof.is_zero() {
            return Ok((0.0, 0.0));
        }
        let i0 = prof.integral(t0, t1)?;
        let i1 = quadrature::integrate_with_breaks(&|r: f64| (t1 - r) * prof.value(r), t0, t1, prof.breaks(), 1e-15)?;
        Ok((i0, i1))
    }

    /// One implicit-midpoint step of length `tau`.
    pub fn step_regularized(&self, s: &SpectralState, tau: f64) -> Result<(SpectralState, StageInfo)> {
        let n = self.n();
        let nm = self.n_modes();
        let t0 = s.t;
        let t1 = t0 + tau;
        let f_mid = self.forcing_time.value(t0 + 0.5 * tau);
        let (i0, i1) = self.forcing_moments(t0, t1)?;
        let d0_new = s.d[0] + self.space_modal[0] * i0;
        let c0_new = s.c[0] + tau * s.d[0] + self.space_modal[0] * i1;

        let tol = self.tolerances.ode;
        let target = tol * (1.0 + max_abs(&s.omega));
        let mut chi_bar: Vec<f64> = (0..n).map(|i| s.chi[i] + 0.5 * tau * s.chi_rate[i]).collect();
        let mut z = s.chi_rate.clone();
        let mut d_bar: Vec<f64> = s.d[1..].to_vec();
        let mut info = StageInfo::default();
        let c_n = DVector::from_column_slice(&s.c[1..]);
        let d_n = DVector::from_column_slice(&s.d[1..]);
        let f_vec = DVector::from_iterator(nm - 1, self.space_modal[1..].iter().map(|v| v * f_mid));
        let mut converged = false;
        let mut g = Vec::new();
        for outer in 0..STAGE_MAX_OUTER {
            info.outer_iterations = outer + 1;
            let a = self.modal_stiffness(&self.a_elements(&chi_bar));
            let b = self.modal_stiffness(&self.b_elements(&chi_bar));
            let mut lhs = &b * (0.5 * tau) + &a * (0.25 * tau * tau);
            for k in 0..nm - 1 {
                lhs[(k, k)] += 1.0;
            }
            let rhs = &d_n + (&f_vec - &a * &c_n) * (0.5 * tau);
            let sol = lhs
                .cholesky()
                .ok_or_else(|| SimError::Singular("modal momentum matrix not positive definite".into()))?
                .solve(&rhs);
            let d_change = sol.iter().zip(&d_bar).fold(0.0f64, |mx, (a, b)| mx.max((a - b).abs()));
            d_bar = sol.iter().copied().collect();
            let mut c_bar = vec![0.5 * (s.c[0] + c0_new)];
            c_bar.extend((0..nm - 1).map(|k| s.c[k + 1] + 0.5 * tau * d_bar[k]));
            g = elastic_density(&self.ops, self.material.c, &self.displacement(&c_bar));
            let (chi_new, z_new, its, r) = self.damage_stage(s, tau, &g, &chi_bar, &z, target)?;
            info.newton_iterations += its;
            info.stage_residual = r;
            let chi_change = chi_new.iter().zip(&chi_bar).fold(0.0f64, |mx, (a, b)| mx.max((a - b).abs()));
            chi_bar = chi_new;
            z = z_new;
            let scale = 1.0 + max_abs(&chi_bar) + max_abs(&d_bar);
            if outer > 0 && chi_change.max(d_change) <= tol * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(SimError::NonConvergence {
                solver: "strong stage coupling",
                iterations: STAGE_MAX_OUTER,
                residual: info.stage_residual,
            });
        }
        let (_, _, r) = self.damage_stage_residual(s, tau, &g, &chi_bar, &z)?;
        info.stage_residual = r;

        let phi = phi_lumped(&self.ops, &self.w_delta, &chi_bar)?;
        let mut omega = vec![0.0; n];
        let mut omega_rate = vec![0.0; n];
        for i in 0..n {
            let om_bar = phi[i] / self.ops.weights[i];
            let w_bar = 2.0 / tau * (om_bar - s.omega[i]);
            omega[i] = 2.0 * om_bar - s.omega[i];
            omega_rate[i] = 2.0 * w_bar - s.omega_rate[i];
        }
        let guess: Vec<f64> = (0..n).map(|i| 2.0 * chi_bar[i] - s.chi[i]).collect();
        let ell = chi_from_omega(&self.ops, &self.w_delta, &omega, Some(&guess), self.tolerances.ell)?;
        info.elliptic_residual = ell.residual;
        let chi_rate = chi_rate_from_omega_rate(&self.ops, &self.w_delta, &ell.chi, &omega_rate)?;
        let mut c = vec![c0_new];
        let mut d = vec![d0_new];
        for k in 1..nm {
            c.push(2.0 * (s.c[k] + 0.5 * tau * d_bar[k - 1]) - s.c[k]);
            d.push(2.0 * d_bar[k - 1] - s.d[k]);
        }
        Ok((SpectralState { t: t1, c, d, chi: ell.chi, chi_rate, omega, omega_rate }, info))
    }

    /// Advances by `tau`, halving the step on failure down to `tau / 2^6`.
    pub fn advance(&self, s: &SpectralState, tau: f64) -> Result<(Vec<SpectralState>, StageInfo)> {
        self.advance_depth(s, tau, 0)
    }

    fn advance_depth(&self, s: &SpectralState, tau: f64, depth: u32) -> Result<(Vec<SpectralState>, StageInfo)> {
        match self.step_regularized(s, tau) {
            Ok((next, info)) => Ok((vec![next], info)),
            Err(e) if depth >= MAX_HALVINGS => Err(e),
            Err(_) => {
                let (mut first, i1) = self.advance_depth(s, 0.5 * tau, depth + 1)?;
                let mid = first.last().expect("nonempty").clone();
                let (second, i2) = self.advance_depth(&mid, 0.5 * tau, depth + 1)?;
                first.extend(second);
                let info = StageInfo {
                    outer_iterations: i1.outer_iterations.max(i2.outer_iterations),
                    newton_iterations: i1.newton_iterations + i2.newton_iterations,
                    stage_residual: i1.stage_residual.max(i2.stage_residual),
                    elliptic_residual: i1.elliptic_residual.max(i2.elliptic_residual),
                };
                Ok((first, info))
            }
        }
    }

    /// Third derivative of `W̆_δ` by central differences of the second.
    fn w_delta_d3(&self, x: f64) -> Result<f64> {
        let h = 1e-3 * self.reg.delta * self.reg.delta;
        Ok((self.w_delta.eval(x + h)?.d1 - self.w_delta.eval(x - h)?.d1) / (2.0 * h))
    }

    /// Energy bookkeeping of the regularized system.
    pub fn energy(&self, s: &SpectralState) -> Result<StrongEnergy> {
        let ops = &self.ops;
        let m = &ops.weights;
        let u = self.displacement(&s.c);
        let v = self.displacement(&s.d);
        let kinetic = 0.5 * s.d.iter().map(|x| x * x).sum::<f64>();
        let eps = ops.element_gradient(&u);
        let eps_t = ops.element_gradient(&v);
        let a_el = self.a_elements(&s.chi);
        let b_el = self.b_elements(&s.chi);
        let h = ops.h();
        let elastic: f64 = (0..eps.len()).map(|e| 0.5 * h * a_el[e] * eps[e] * eps[e]).sum();
        let viscous: f64 = (0..eps.len()).map(|e| h * b_el[e] * eps_t[e] * eps_t[e]).sum();
        let gradient = 0.5 * ops.stiffness.quad_form(&s.chi);
        let mut potential = 0.0;
        let mut inertial = 0.0;
        let mut damage = 0.0;
        let mut cubic = 0.0;
        for i in 0..self.n() {
            let x = s.chi[i];
            let r = s.chi_rate[i];
            potential += m[i] * (self.w_delta.raw_potential(x)? + self.potential.concave_value(x) + self.potential.offset);
            inertial += 0.5 * self.reg.nu * m[i] * r * s.omega_rate[i];
            damage += m[i] * (r * r + self.i_delta.eval(r)?.value * r);
            if r != 0.0 {
                cubic += 0.5 * self.reg.nu * m[i] * self.w_delta_d3(x)? * r * r * r;
            }
        }
        let ft = self.forcing_time.value(s.t);
        let power = ft * s.d.iter().zip(&self.space_modal).map(|(a, b)| a * b).sum::<f64>();
        Ok(StrongEnergy {
            energy: kinetic + elastic + gradient + potential,
            inertial,
            dissipation: viscous + damage,
            power,
            cubic,
        })
    }

    /// Nodal snapshot of a spectral state.
    pub fn to_sim_state(&self, s: &SpectralState, step: usize, chi_prev: &[f64]) -> SimState {
        SimState {
            step,
            t: s.t,
            u: self.displacement(&s.c),
            v: self.displacement(&s.d),
            chi: s.chi.clone(),
            chi_prev: chi_prev.to_vec(),
            chi_rate: s.chi_rate.clone(),
            omega: Some(s.omega.clone()),
            omega_rate: Some(s.omega_rate.clone()),
        }
    }

    /// Laplacian eigenvalues `λₖ / V` of the basis.
    fn laplace_values(&self) -> Vec<f64> {
        self.basis.values.iter().map(|l| l / self.material.v).collect()
    }
}

/// Monitored norms of the strong run. Discrete Sobolev norms of `u_t` are
/// spectral, `‖w‖²_{H^s} = Σₖ (1 + λₖ)^s wₖ²` with Laplacian eigenvalues
/// `λₖ`; the `χ` norm is [`h2_norm`].
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct BlowupMonitor {
    pub times: Vec<f64>,
    pub ut_h2: Vec<f64>,
    pub chi_h2: Vec<f64>,
    pub omega_l2: Vec<f64>,
    /// `∫₀ᵗ ‖u_t‖²_{H³}`.
    pub ut_h3_integral: Vec<f64>,
    /// `ψ = ‖u_t‖²_{H²} + ‖χ‖²_{H²} + ∫₀ᵗ (‖u_t‖²_{H³} + ‖χ_t‖²_{H¹})`.
    pub psi: Vec<f64>,
    pub psi_max: f64,
    /// First time with `ψ > ψ_max`, if any.
    pub horizon: Option<f64>,
    /// Exploratory `ψ(0)^{1−β} / (2(β − 1))`; not asserted.
    pub horizon_formula: f64,
}

impl BlowupMonitor {
    pub fn psi_ratio(&self) -> Vec<f64> {
        let p0 = self.psi.first().copied().unwrap_or(0.0);
        self.psi.iter().map(|p| if p0 > 0.0 { p / p0 } else { f64::NAN }).collect()
    }
}

struct MonitorRates {
    ut_h2_sq: f64,
    ut_h3_sq: f64,
    chi_rate_h1_sq: f64,
}

fn monitor_rates(model: &StrongModel, lam: &[f64], s: &SpectralState) -> MonitorRates {
    let (mut h2, mut h3) = (0.0, 0.0);
    for (k, d) in s.d.iter().enumerate() {
        let w = 1.0 + lam[k];
        h2 += w * w * d * d;
        h3 += w * w * w * d * d;
    }
    let chi_rate_h1_sq = model.ops.stiffness.quad_form(&s.chi_rate) + lumped_norm(&model.ops, &s.chi_rate).powi(2);
    MonitorRates { ut_h2_sq: h2, ut_h3_sq: h3, chi_rate_h1_sq }
}

/// A strong run with its monitors.
#[derive(Debug, Clone, Serialize)]
pub struct StrongRun {
    pub traj: Trajectory,
    pub monitor: BlowupMonitor,
    pub reg: RegParams,
    pub final_state: SpectralState,
    /// `|∫u(t) − ∫u₀ − t∫v₀ − ∫₀ᵗ(t−r)∫f dr|` per stored time.
    pub mean_identity: Vec<f64>,
    /// `‖u(t)‖` (discrete L²) per stored time.
    pub u_norm: Vec<f64>,
    /// Elliptic coherence residual `‖−Δχ + W̆′_δ(χ) + χ − ω‖_∞` per stored time.
    pub coherence: Vec<f64>,
    pub stage_info: Vec<StageInfo>,
}

impl StrongRun {
    /// Largest `mean_identity / (1 + ‖u‖)`.
    pub fn mean_identity_relative(&self) -> f64 {
        self.mean_identity.iter().zip(&self.u_norm).map(|(r, u)| r / (1.0 + u)).fold(0.0, f64::max)
    }
}

fn mean_identity_reference(model: &StrongModel, mean_u0: f64, mean_v0: f64, t: f64) -> Result<f64> {
    let prof = &model.forcing_time;
    let forcing = if prof.is_zero() || t == 0.0 {
        0.0
    } else {
        quadrature::integrate_with_breaks(&|r: f64| (t - r) * prof.value(r), 0.0, t, prof.breaks(), 1e-15)?
    };
    Ok(mean_u0 + t * mean_v0 + model.space_integral * forcing)
}

/// Integrates the regularized system on `[0, T]` with the regularization of
/// the configuration.
pub fn run_strong(cfg: &ScenarioConfig) -> Result<StrongRun> {
    run_strong_with(cfg, RegParams::from_config(&cfg.strong)?)
}

/// Integrates the regularized system with explicit `δ`, `ν`. Stops early,
/// without error, when `ψ` exceeds `ψ_max`; a step failure is recorded in the
/// trajectory.
pub fn run_strong_with(cfg: &ScenarioConfig, reg: RegParams) -> Result<StrongRun> {
    let model = StrongModel::new(cfg, reg)?;
    if cfg.strong.substeps == 0 {
        return Err(invalid("strong substeps must be at least 1"));
    }
    let tau = cfg.tau();
    let tau_ode = tau / cfg.strong.substeps as f64;
    let lam = model.laplace_values();
    let mut s = model.initial_state(cfg)?;
    let mass = model.ops.mass_consistent.clone();
    let ones = vec![1.0; model.n()];
    let m1 = mass.matvec(&ones);
    let integral = |f: &[f64]| -> f64 { m1.iter().zip(f).map(|(a, b)| a * b).sum() };
    let mean_u0 = integral(&cfg.u0);
    let mean_v0 = integral(&cfg.v0);

    let mut traj = Trajectory {
        kind: TrajectoryKind::Strong,
        tau,
        states: Vec::with_capacity(cfg.steps + 1),
        reports: Vec::new(),
        means: forcing_means(cfg)?,
        strong: Vec::with_capacity(cfg.steps + 1),
        failure: None,
    };
    let mut monitor = BlowupMonitor { psi_max: cfg.strong.psi_max, ..Default::default() };
    let mut mean_identity = Vec::new();
    let mut u_norm = Vec::new();
    let mut coherence = Vec::new();
    let mut stage_info = Vec::new();

    let e0 = model.energy(&s)?;
    let record = |s: &SpectralState,
                  step: usize,
                  chi_prev: &[f64],
                  rec: StrongStepRecord,
                  traj: &mut Trajectory,
                  mean_identity: &mut Vec<f64>,
                  u_norm: &mut Vec<f64>,
                  coherence: &mut Vec<f64>|
     -> Result<()> {
        let st = model.to_sim_state(s, step, chi_prev);
        let mean_u = integral(&st.u);
        mean_identity.push((mean_u - mean_identity_reference(&model, mean_u0, mean_v0, s.t)?).abs());
        u_norm.push(mass.quad_form(&st.u).max(0.0).sqrt());
        coherence.push(elliptic_residual(&model.ops, &model.w_delta, &s.chi, &s.omega)?);
        traj.states.push(st);
        traj.strong.push(rec);
        Ok(())
    };
    let rec0 = StrongStepRecord { energy: e0.energy, inertial: e0.inertial, ..Default::default() };
    record(&s, 0, &s.chi.clone(), rec0, &mut traj, &mut mean_identity, &mut u_norm, &mut coherence)?;
    let r0 = monitor_rates(&model, &lam, &s);
    let mut h3_int = 0.0;
    let mut psi_int = 0.0;
    let push_monitor = |monitor: &mut BlowupMonitor, s: &SpectralState, r: &MonitorRates, h3_int: f64, psi_int: f64| {
        let chi_h2 = h2_norm(&model.ops, &s.chi);
        monitor.times.push(s.t);
        monitor.ut_h2.push(r.ut_h2_sq.sqrt());
        monitor.chi_h2.push(chi_h2);
        monitor.omega_l2.push(lumped_norm(&model.ops, &s.omega));
        monitor.ut_h3_integral.push(h3_int);
        monitor.psi.push(r.ut_h2_sq + chi_h2 * chi_h2 + psi_int);
    };
    push_monitor(&mut monitor, &s, &r0, 0.0, 0.0);
    let beta = cfg.strong.beta;
    monitor.horizon_formula = if beta > 1.0 && monitor.psi[0] > 0.0 {
        monitor.psi[0].powf(1.0 - beta) / (2.0 * (beta - 1.0))
    } else {
        f64::NAN
    };

    if monitor.psi[0] > monitor.psi_max {
        monitor.horizon = Some(0.0);
    }
    let steps = if monitor.horizon.is_some() { 0 } else { cfg.steps };
    let mut e_prev = e0;
    let mut rates_prev = r0;
    'outer: for step in 1..=steps {
        let chi_prev = s.chi.clone();
        let mut rec = StrongStepRecord::default();
        let mut step_info = StageInfo::default();
        for _ in 0..cfg.strong.substeps {
            let (pieces, info) = match model.advance(&s, tau_ode) {
                Ok(v) => v,
                Err(e) => {
                    traj.failure = Some(StepFailure { step, message: e.to_string(), error: e });
                    break 'outer;
                }
            };
            step_info.outer_iterations = step_info.outer_iterations.max(info.outer_iterations);
            step_info.newton_iterations += info.newton_iterations;
            step_info.stage_residual = step_info.stage_residual.max(info.stage_residual);
            step_info.elliptic_residual = step_info.elliptic_residual.max(info.elliptic_residual);
            for next in pieces {
                let dt = next.t - s.t;
                let e = model.energy(&next)?;
                rec.dissipation_increment += 0.5 * dt * (e_prev.dissipation + e.dissipation);
                rec.work_increment += 0.5 * dt * (e_prev.power + e.power);
                rec.cubic_increment += 0.5 * dt * (e_prev.cubic + e.cubic);
                let r = monitor_rates(&model, &lam, &next);
                h3_int += 0.5 * dt * (rates_prev.ut_h3_sq + r.ut_h3_sq);
                psi_int += 0.5 * dt * (rates_prev.ut_h3_sq + r.ut_h3_sq + rates_prev.chi_rate_h1_sq + r.chi_rate_h1_sq);
                e_prev = e;
                rates_prev = r;
                s = next;
            }
        }
        // Pin the time to the grid to avoid drift from repeated additions.
        s.t = step as f64 * tau;
        rec.energy = e_prev.energy;
        rec.inertial = e_prev.inertial;
        rec.newton_iterations = step_info.newton_iterations;
        rec.stage_residual = step_info.stage_residual;
        rec.elliptic_residual = step_info.elliptic_residual;
        record(&s, step, &chi_prev, rec, &mut traj, &mut mean_identity, &mut u_norm, &mut coherence)?;
        stage_info.push(step_info);
        push_monitor(&mut monitor, &s, &rates_prev, h3_int, psi_int);
        if *monitor.psi.last().expect("pushed") > monitor.psi_max {
            monitor.horizon = Some(s.t);
            break;
        }
    }
    Ok(StrongRun { traj, monitor, reg, final_state: s, mean_identity, u_norm, coherence, stage_info })
}

/// Runs the configuration at several schedule rungs in parallel.
pub fn run_schedule_ladder(cfg: &ScenarioConfig, rungs: &[u32]) -> Result<Vec<StrongRun>> {
    let params: Vec<RegParams> = rungs.iter().map(|&n| RegParams::schedule(n)).collect::<Result<_>>()?;
    std::thread::scope(|scope| {
        let handles: Vec<_> = params.iter().map(|&p| scope.spawn(move || run_strong_with(cfg, p))).collect();
        handles.into_iter().map(|h| h.join().expect("ladder worker panicked")).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{assemble_operators, build_mesh};
    use crate::model::{FieldSpec, Forcing, InitialSpec, MaterialSpec, Mode, PotentialSpec, ScalarLaw, ScenarioSpec};
    use crate::regularization::MonotoneGraph;
    use std::collections::BTreeMap;

    fn ops(n: usize) -> Operators {
        assemble_operators(&build_mesh(n, 1.0).unwrap())
    }

    #[test]
    fn schedule_satisfies_scaling() {
        for n in 1..5 {
            let p = RegParams::schedule(n).unwrap();
            assert_eq!(p.delta, 0.5f64.powi(n as i32));
            assert!((p.scaling_ratio() - p.delta).abs() < 1e-15);
        }
        assert!(RegParams::schedule(0).is_err());
        assert!(RegParams::new(1.5, 0.1).is_err());
    }

    #[test]
    fn chi_from_constant_omega() {
        let delta = 0.2;
        // Quadratic graph whose Yosida derivative is exactly the identity.
        let w = RegularizedFunction::new(MonotoneGraph::Quadratic { k: 1.0 / (1.0 - delta), slope: 0.0 }, delta)
            .unwrap()
            .normalized_at_zero()
            .unwrap();
        let o = ops(21);
        let sol = chi_from_omega(&o, &w, &[3.0; 21], None, 1e-12).unwrap();
        for c in &sol.chi {
            assert!((c - 1.5).abs() < 1e-11);
        }
        let zero = chi_from_omega(&o, &w, &[0.0; 21], None, 1e-12).unwrap();
        assert!(zero.chi.iter().all(|c| c.abs() < 1e-14));
    }

    /// Picard iteration `(S + (1 + L)M) χ⁺ = M(ω − W′(χ) + Lχ)` with `L = 1/δ`.
    fn picard(o: &Operators, w: &RegularizedFunction, omega: &[f64]) -> Vec<f64> {
        let l = 1.0 / w.delta;
        let mut lhs = o.stiffness.clone();
        for i in 0..o.n() {
            lhs.diag[i] += (1.0 + l) * o.weights[i];
        }
        let mut chi = vec![0.0; o.n()];
        for _ in 0..5000 {
            let rhs: Vec<f64> =
                (0..o.n()).map(|i| o.weights[i] * (omega[i] - w.eval(chi[i]).unwrap().value + l * chi[i])).collect();
            let next = lhs.solve(&rhs).unwrap();
            let change = next.iter().zip(&chi).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            chi = next;
            if change < 1e-14 {
                break;
            }
        }
        chi
    }

    #[test]
    fn chi_from_omega_matches_picard_for_box_indicator() {
        let o = ops(201);
        let w = make_w_delta(&crate::model::make_potential("indicator_box", &BTreeMap::new()).unwrap(), 0.1).unwrap();
        let omega: Vec<f64> = o.mesh.nodes.iter().map(|x| 2.0 * (std::f64::consts::PI * x).cos()).collect();
        let sol = chi_from_omega(&o, &w, &omega, None, 1e-12).unwrap();
        let reference = picard(&o, &w, &omega);
        let err = sol.chi.iter().zip(&reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-8, "{err}");
        assert!(sol.s0_ratio > 0.0);
    }

    #[test]
    fn chi_rate_cases() {
        let o = ops(5);
        let flat = RegularizedFunction::new(MonotoneGraph::Quadratic { k: 0.0, slope: 0.0 }, 0.3).unwrap();
        let chi = vec![0.3, 0.2, 0.5, 0.1, 0.9];
        let zero = chi_rate_from_omega_rate(&o, &flat, &chi, &[0.0; 5]).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
        let c = chi_rate_from_omega_rate(&o, &flat, &chi, &[0.7; 5]).unwrap();
        assert!(c.iter().all(|v| (v - 0.7).abs() < 1e-13));

        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let w = make_w_delta(&crate::model::make_potential("indicator_box", &BTreeMap::new()).unwrap(), 0.3).unwrap();
        let chi: Vec<f64> = (0..5).map(|_| rng.gen_range(-0.2..1.2)).collect();
        let rate: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = chi_rate_from_omega_rate(&o, &w, &chi, &rate).unwrap();
        let mut dense = o.stiffness.to_dense();
        for i in 0..5 {
            dense[(i, i)] += o.weights[i] * (w.eval(chi[i]).unwrap().d1 + 1.0);
        }
        let rhs = DVector::from_iterator(5, (0..5).map(|i| o.weights[i] * rate[i]));
        let want = dense.lu().solve(&rhs).unwrap();
        for i in 0..5 {
            assert!((got[i] - want[i]).abs() < 1e-10);
        }
    }

    fn linear_spec(steps: usize, final_time: f64) -> ScenarioSpec {
        ScenarioSpec {
            name: "modal".into(),
            mode: Mode::Strong,
            nodes: 101,
            length: 1.0,
            final_time,
            steps,
            output_every: 1,
            mass: Default::default(),
            material: MaterialSpec {
                a: ScalarLaw::constant(1.0),
                b: ScalarLaw::constant(1.0),
                b_floor: Some(1.0),
                ..MaterialLaw::default().into()
            },
            potential: PotentialSpec { preset: "quadratic".into(), params: BTreeMap::new() },
            initial: InitialSpec {
                u0: FieldSpec::Sum {
                    parts: vec![FieldSpec::cosine(0.0, 0.2, 1), FieldSpec::cosine(0.0, -0.1, 2), FieldSpec::cosine(0.0, 0.05, 3)],
                },
                v0: FieldSpec::cosine(0.0, 0.3, 1),
                chi0: FieldSpec::constant(0.5),
            },
            forcing: Forcing::none(),
            tolerances: Default::default(),
            strong: StrongConfig { modes: 3, ..Default::default() },
            compare: Default::default(),
            seed: 0,
        }
    }

    /// Exact solution of `c̈ + λċ + λc = 0` (C = V = 1).
    fn damped(lambda: f64, c0: f64, d0: f64, t: f64) -> f64 {
        let disc = lambda * lambda - 4.0 * lambda;
        if disc > 0.0 {
            let q = disc.sqrt();
            let (r1, r2) = ((-lambda + q) / 2.0, (-lambda - q) / 2.0);
            let b = (d0 - r1 * c0) / (r2 - r1);
            let a = c0 - b;
            a * (r1 * t).exp() + b * (r2 * t).exp()
        } else {
            let w = (-disc).sqrt() / 2.0;
            let s = -lambda / 2.0;
            let b = (d0 - s * c0) / w;
            (s * t).exp() * (c0 * (w * t).cos() + b * (w * t).sin())
        }
    }

    #[test]
    fn uncoupled_modes_follow_damped_oscillator() {
        let cfg = linear_spec(400, 0.5).resolve().unwrap();
        let run = run_strong(&cfg).unwrap();
        assert!(run.traj.is_complete());
        let model = StrongModel::new(&cfg, run.reg).unwrap();
        let s0 = model.initial_state(&cfg).unwrap();
        let lam = model.laplace_values();
        let mut err = 0.0f64;
        for k in 1..4 {
            let exact = damped(lam[k], s0.c[k], s0.d[k], 0.5);
            err = err.max((run.final_state.c[k] - exact).abs());
        }
        assert!(err < 2e-5, "{err}");
    }

    #[test]
    fn equilibrium_is_stationary() {
        let mut spec = linear_spec(10, 0.1);
        spec.material = MaterialLaw::default().into();
        spec.potential = PotentialSpec {
            preset: "quadratic".into(),
            params: [("k".to_string(), 0.0), ("ell".to_string(), 0.0)].into_iter().collect(),
        };
        spec.initial = InitialSpec { u0: FieldSpec::default(), v0: FieldSpec::default(), chi0: FieldSpec::constant(1.0) };
        let run = run_strong(&spec.resolve().unwrap()).unwrap();
        let first = &run.traj.states[0];
        for s in &run.traj.states {
            for i in 0..s.chi.len() {
                assert!((s.chi[i] - first.chi[i]).abs() < 1e-12);
                assert!(s.u[i].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mean_identity_with_constant_force() {
        let mut spec = linear_spec(50, 0.5);
        spec.forcing = Forcing::body(FieldSpec::constant(1.0), TimeProfile::Constant { value: 0.7 });
        let run = run_strong(&spec.resolve().unwrap()).unwrap();
        assert!(run.mean_identity_relative() < 1e-12, "{}", run.mean_identity_relative());
    }

    #[test]
    fn boundary_gate() {
        let mut spec = linear_spec(10, 0.1);
        spec.material.gamma1 = 0.5;
        let cfg = spec.resolve().unwrap();
        assert!(run_strong(&cfg).is_err());
    }
}
