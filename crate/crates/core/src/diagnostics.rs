//! Energy, dissipation and the inequalities they satisfy, evaluated on
//! states and trajectories. Also the relative-energy machinery comparing
//! two trajectories.

use serde::Serialize;

use crate::discretization::{Mesh1D, Operators};
use crate::error::{invalid, Result, SimError};
use crate::model::{MaterialLaw, PotentialSplit};
use crate::state::{SimState, Trajectory, TrajectoryKind};
use crate::weak_stepper::{elastic_density, separable_sum, TestBank, WeakContext};

/// Summands of the energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub elastic: f64,
    pub gradient: f64,
    pub potential: f64,
    pub boundary: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.kinetic + self.elastic + self.gradient + self.potential + self.boundary
    }
}

/// `½vᵀMv + ½Σ_e h A_e C ε_e² + ½χᵀSχ + Σ mᵢ W(χᵢ) + γ₂/(2γ₀)(u(0)² + u(L)²)`
/// with `A_e` the element average of `a(χ)`.
pub fn energy_parts(ops: &Operators, state: &SimState, material: &MaterialLaw, potential: &PotentialSplit) -> Result<EnergyParts> {
    let kinetic = 0.5 * ops.mass().quad_form(&state.v);
    let a_el = ops.element_average(&material.a_nodal(&state.chi));
    let eps = ops.element_gradient(&state.u);
    let elastic = 0.5 * ops.h() * material.c * a_el.iter().zip(&eps).map(|(a, e)| a * e * e).sum::<f64>();
    let gradient = 0.5 * ops.stiffness.quad_form(&state.chi);
    let mut pot = 0.0;
    for (i, (&x, m)) in state.chi.iter().zip(&ops.weights).enumerate() {
        let w = potential.value(x);
        if !w.is_finite() {
            return Err(SimError::Domain { node: i, value: x });
        }
        pot += m * w;
    }
    let (ul, ur) = (state.u[ops.trace_left], state.u[ops.trace_right]);
    let boundary = 0.5 * material.gamma2 / material.gamma0 * (ul * ul + ur * ur);
    Ok(EnergyParts { kinetic, elastic, gradient, potential: pot, boundary })
}

pub fn energy(ops: &Operators, state: &SimState, material: &MaterialLaw, potential: &PotentialSplit) -> Result<f64> {
    Ok(energy_parts(ops, state, material, potential)?.total())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct Dissipation {
    pub viscous: f64,
    pub damage: f64,
    pub boundary: f64,
    /// Some node has `χ_t > tol_mono`, so the indicator term is `+∞`.
    pub infeasible: bool,
}

impl Dissipation {
    /// Finite part; the indicator contributes only through [`Self::infeasible`].
    pub fn value(&self) -> f64 {
        self.viscous + self.damage + self.boundary
    }
}

/// `Σ_e h V B_e (∂ₓu_t)² + Σ mᵢ χ_t² + γ₁/γ₀(u_t(0)² + u_t(L)²)` using the
/// rates stored in the state.
pub fn dissipation(ops: &Operators, state: &SimState, material: &MaterialLaw, tol_mono: f64) -> Dissipation {
    let b_el = ops.element_average(&material.b_nodal(&state.chi));
    let grad = ops.element_gradient(&state.v);
    let viscous = ops.h() * material.v * b_el.iter().zip(&grad).map(|(b, g)| b * g * g).sum::<f64>();
    let damage = state.chi_rate.iter().zip(&ops.weights).map(|(r, m)| m * r * r).sum();
    let (vl, vr) = (state.v[ops.trace_left], state.v[ops.trace_right]);
    let boundary = material.gamma1 / material.gamma0 * (vl * vl + vr * vr);
    let infeasible = state.chi_rate.iter().any(|&r| r > tol_mono);
    Dissipation { viscous, damage, boundary, infeasible }
}

/// Work of the step means over step `k`: `⟨M f̄ₖ, uᵏ − uᵏ⁻¹⟩ + ḡₖ·Δu/γ₀` at both ends.
pub fn step_work(ctx: &WeakContext, prev: &SimState, cur: &SimState, k: usize) -> f64 {
    let du: Vec<f64> = cur.u.iter().zip(&prev.u).map(|(a, b)| a - b).collect();
    let f = ctx.means.body_nodal(k);
    let (l, r) = (ctx.ops.trace_left, ctx.ops.trace_right);
    ctx.ops.mass().bilinear(&f, &du)
        + (ctx.means.g_left[k - 1] * du[l] + ctx.means.g_right[k - 1] * du[r]) / ctx.material.gamma0
}

/// Slack series of an energy inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdiReport {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    /// Instantaneous finite dissipation.
    pub dissipation: Vec<f64>,
    pub dissipation_cum: Vec<f64>,
    pub work_cum: Vec<f64>,
    /// `E(0) + work − E(t) − ∫D`.
    pub slack: Vec<f64>,
    pub tolerance: f64,
    pub infeasible_steps: Vec<usize>,
}

impl EdiReport {
    pub fn min_slack(&self) -> f64 {
        self.slack.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn first_violation(&self) -> Option<usize> {
        self.slack.iter().position(|&s| s < -self.tolerance)
    }

    pub fn passed(&self) -> bool {
        self.first_violation().is_none() && self.infeasible_steps.is_empty()
    }
}

/// Incremental form of [`discrete_edi_check`] for runs that are not kept in
/// memory. Feed consecutive states with [`WeakEnergyMonitor::push`].
#[derive(Debug, Clone)]
pub struct WeakEnergyMonitor<'a> {
    ctx: &'a WeakContext,
    e0: f64,
    d_cum: f64,
    w_cum: f64,
    report: EdiReport,
}

impl<'a> WeakEnergyMonitor<'a> {
    pub fn new(ctx: &'a WeakContext, initial: &SimState) -> Result<Self> {
        let e0 = energy(&ctx.ops, initial, &ctx.material, &ctx.potential)?;
        let report = EdiReport {
            times: vec![initial.t],
            energy: vec![e0],
            dissipation: vec![0.0],
            dissipation_cum: vec![0.0],
            work_cum: vec![0.0],
            slack: vec![0.0],
            tolerance: ctx.tolerances.edi_for(ctx.steps),
            infeasible_steps: Vec::new(),
        };
        Ok(WeakEnergyMonitor { ctx, e0, d_cum: 0.0, w_cum: 0.0, report })
    }

    pub fn push(&mut self, prev: &SimState, cur: &SimState) -> Result<()> {
        let ctx = self.ctx;
        let e = energy(&ctx.ops, cur, &ctx.material, &ctx.potential)?;
        let d = dissipation(&ctx.ops, cur, &ctx.material, ctx.tolerances.mono);
        self.d_cum += ctx.tau * d.value();
        self.w_cum += step_work(ctx, prev, cur, cur.step);
        let rep = &mut self.report;
        if d.infeasible {
            rep.infeasible_steps.push(rep.times.len());
        }
        rep.times.push(cur.t);
        rep.energy.push(e);
        rep.dissipation.push(d.value());
        rep.dissipation_cum.push(self.d_cum);
        rep.work_cum.push(self.w_cum);
        rep.slack.push(self.e0 + self.w_cum - e - self.d_cum);
        Ok(())
    }

    pub fn report(&self) -> &EdiReport {
        &self.report
    }

    pub fn finish(self) -> EdiReport {
        self.report
    }
}

/// Discrete energy inequality from the initial state to every step of a
/// weak trajectory, with `tol = tol_inner × K` unless overridden.
pub fn discrete_edi_check(ctx: &WeakContext, traj: &Trajectory) -> Result<EdiReport> {
    if traj.kind != TrajectoryKind::Weak {
        return Err(invalid("the discrete energy inequality needs a weak trajectory"));
    }
    let mut monitor = WeakEnergyMonitor::new(ctx, &traj.states[0])?;
    for w in traj.states.windows(2) {
        monitor.push(&w[0], &w[1])?;
    }
    Ok(monitor.finish())
}

/// Upper energy–dissipation inequality on `[0, t]` at every stored time.
/// Weak trajectories carry backward-difference rates, which are constant on
/// each interval, so their time integrals use the rectangle rule with the
/// step means of the forcing. Strong trajectories use the trapezoid rule
/// with pointwise forcing.
pub fn uedi_check(ctx: &WeakContext, traj: &Trajectory, tolerance: f64) -> Result<EdiReport> {
    let n = traj.states.len();
    let mut rep = EdiReport {
        times: traj.times(),
        energy: Vec::with_capacity(n),
        dissipation: Vec::with_capacity(n),
        dissipation_cum: Vec::with_capacity(n),
        work_cum: Vec::with_capacity(n),
        slack: Vec::with_capacity(n),
        tolerance,
        infeasible_steps: Vec::new(),
    };
    let mass = ctx.ops.mass();
    let power = |s: &SimState, k: usize| -> f64 {
        let f: Vec<f64> = ctx.means.space.iter().map(|x| x * ctx.means.pointwise[k]).collect();
        mass.bilinear(&f, &s.v)
    };
    let e0 = energy(&ctx.ops, &traj.states[0], &ctx.material, &ctx.potential)?;
    let (mut d_cum, mut w_cum) = (0.0, 0.0);
    let mut d_prev = 0.0;
    for (k, s) in traj.states.iter().enumerate() {
        let e = energy(&ctx.ops, s, &ctx.material, &ctx.potential)?;
        let d = dissipation(&ctx.ops, s, &ctx.material, ctx.tolerances.mono);
        let dv = if k == 0 && traj.kind == TrajectoryKind::Weak { 0.0 } else { d.value() };
        if k > 0 {
            match traj.kind {
                TrajectoryKind::Weak => {
                    d_cum += traj.tau * dv;
                    w_cum += step_work(ctx, &traj.states[k - 1], s, s.step);
                }
                TrajectoryKind::Strong => {
                    d_cum += 0.5 * traj.tau * (d_prev + dv);
                    w_cum += 0.5 * traj.tau * (power(&traj.states[k - 1], k - 1) + power(s, k));
                }
            }
            if d.infeasible {
                rep.infeasible_steps.push(k);
            }
        }
        d_prev = dv;
        rep.energy.push(e);
        rep.dissipation.push(dv);
        rep.dissipation_cum.push(d_cum);
        rep.work_cum.push(w_cum);
        rep.slack.push(e0 + w_cum - e - d_cum);
    }
    Ok(rep)
}

/// Per-node terms of the smooth one-sided inequality; the form is linear,
/// `term(i, ψᵢ) = cᵢψᵢ` with `c = Sχᵏ + M(χ_t + W̆′(χᵏ) + W̌′(χᵏ⁻¹) + a′(χᵏ)g)`.
fn one_sided_vi_terms(ctx: &WeakContext, prev: &SimState, cur: &SimState) -> Result<impl Fn(usize, f64) -> Result<f64>> {
    if ctx.potential.convex.is_indicator() {
        return Err(invalid("the smooth one-sided inequality needs a differentiable potential"));
    }
    let load = elastic_density(&ctx.ops, ctx.material.c, &prev.u);
    let mut coef = ctx.ops.stiffness.matvec(&cur.chi);
    for (i, c) in coef.iter_mut().enumerate() {
        let x = cur.chi[i];
        let wd = ctx.potential.convex.derivative(x).ok_or(SimError::Domain { node: i, value: x })?;
        let rate = (x - prev.chi[i]) / ctx.tau;
        let drive = wd + ctx.potential.concave_d1(prev.chi[i]) + ctx.material.a.d1(x) * load[i];
        *c += ctx.ops.weights[i] * (rate + drive);
    }
    Ok(move |i: usize, p: f64| Ok(coef[i] * p))
}

/// Discrete left-hand side of the one-sided inequality for smooth `W` at
/// step `k` with the scheme's lagged data:
/// `Σ mᵢ[χ_t ψ + (W̆′(χᵏ) + W̌′(χᵏ⁻¹) + a′(χᵏ) g(uᵏ⁻¹))ψ]ᵢ + ψᵀSχᵏ`.
pub fn one_sided_vi_lhs(ctx: &WeakContext, prev: &SimState, cur: &SimState, psi: &[f64]) -> Result<f64> {
    separable_sum(psi, cur.chi.len(), one_sided_vi_terms(ctx, prev, cur)?)
}

/// Minimum of [`one_sided_vi_lhs`] over the bank at one step.
pub fn one_sided_vi_residual(ctx: &WeakContext, prev: &SimState, cur: &SimState, bank: &TestBank) -> Result<f64> {
    bank.min_separable(&cur.chi, one_sided_vi_terms(ctx, prev, cur)?)
}

pub fn one_sided_vi_series(ctx: &WeakContext, traj: &Trajectory, bank: &TestBank) -> Result<Vec<f64>> {
    traj.states.windows(2).map(|w| one_sided_vi_residual(ctx, &w[0], &w[1], bank)).collect()
}

/// `|E_δ + 𝒱 + ∫D_δ − E_δ(0) − 𝒱(0) − ∫work + ∫cubic|` at every stored time
/// of a strong trajectory.
pub fn strong_energy_balance_residual(traj: &Trajectory) -> Result<Vec<f64>> {
    if traj.kind != TrajectoryKind::Strong || traj.strong.len() != traj.states.len() {
        return Err(invalid("energy balance needs a strong trajectory with energy records"));
    }
    let r0 = &traj.strong[0];
    let base = r0.energy + r0.inertial;
    let (mut d, mut w, mut c) = (0.0, 0.0, 0.0);
    Ok(traj
        .strong
        .iter()
        .map(|r| {
            d += r.dissipation_increment;
            w += r.work_increment;
            c += r.cubic_increment;
            (r.energy + r.inertial + d - base - w + c).abs()
        })
        .collect())
}

/// Summands of the relative energy; each is nonnegative for `ℓ`-convex `W`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct RelativeEnergy {
    pub gradient: f64,
    /// `∫ W(χ) − W(χ̃) − W′(χ̃)(χ − χ̃) + (ℓ/2)|χ − χ̃|²`.
    pub potential: f64,
    pub elastic: f64,
    pub kinetic: f64,
}

impl RelativeEnergy {
    pub fn total(&self) -> f64 {
        self.gradient + self.potential + self.elastic + self.kinetic
    }

    pub fn min_summand(&self) -> f64 {
        self.gradient.min(self.potential).min(self.elastic).min(self.kinetic)
    }
}

/// Element of `∂W̆(x)` used in the relative energy: the derivative where it
/// exists and `0` on the closed domain of an indicator.
fn convex_selection(potential: &PotentialSplit, x: f64) -> Option<f64> {
    match potential.convex.derivative(x) {
        Some(d) => Some(d),
        None if potential.convex.is_indicator() && potential.convex.potential(x) == 0.0 => Some(0.0),
        None => None,
    }
}

/// Relative energy `ℛ(s | s̃)` on a common mesh.
pub fn relative_energy(
    ops: &Operators,
    s: &SimState,
    t: &SimState,
    material: &MaterialLaw,
    potential: &PotentialSplit,
) -> Result<RelativeEnergy> {
    if s.len() != t.len() || s.len() != ops.n() {
        return Err(invalid("relative energy needs states on the same mesh"));
    }
    let dchi: Vec<f64> = s.chi.iter().zip(&t.chi).map(|(a, b)| a - b).collect();
    let gradient = 0.5 * ops.stiffness.quad_form(&dchi);
    let mut pot = 0.0;
    for i in 0..s.len() {
        let (x, y) = (s.chi[i], t.chi[i]);
        let (wx, wy) = (potential.convex.potential(x), potential.convex.potential(y));
        let sel = convex_selection(potential, y);
        match (wx.is_finite() && wy.is_finite(), sel) {
            (true, Some(d)) => {
                // The concave part and the ℓ-term cancel exactly.
                pot += ops.weights[i] * (wx - wy - d * (x - y));
            }
            _ => return Err(SimError::Domain { node: i, value: if wx.is_finite() { y } else { x } }),
        }
    }
    let du: Vec<f64> = s.u.iter().zip(&t.u).map(|(a, b)| a - b).collect();
    let a_el = ops.element_average(&material.a_nodal(&s.chi));
    let eps = ops.element_gradient(&du);
    let elastic = 0.5 * ops.h() * material.c * a_el.iter().zip(&eps).map(|(a, e)| a * e * e).sum::<f64>();
    let dv: Vec<f64> = s.v.iter().zip(&t.v).map(|(a, b)| a - b).collect();
    let kinetic = 0.5 * ops.mass().quad_form(&dv);
    Ok(RelativeEnergy { gradient, potential: pot, elastic, kinetic })
}

/// Relative dissipation `𝒲 = ∫ |χ_t − χ̃_t|² + b(χ)V|∂ₓ(u_t − ũ_t)|²`; the
/// indicator terms vanish once both rates are verified nonpositive.
pub fn relative_dissipation(ops: &Operators, s: &SimState, t: &SimState, material: &MaterialLaw) -> f64 {
    let dr: Vec<f64> = s.chi_rate.iter().zip(&t.chi_rate).map(|(a, b)| a - b).collect();
    let damage: f64 = dr.iter().zip(&ops.weights).map(|(r, m)| m * r * r).sum();
    let dv: Vec<f64> = s.v.iter().zip(&t.v).map(|(a, b)| a - b).collect();
    let b_el = ops.element_average(&material.b_nodal(&s.chi));
    let g = ops.element_gradient(&dv);
    damage + ops.h() * material.v * b_el.iter().zip(&g).map(|(b, e)| b * e * e).sum::<f64>()
}

/// `∫ a′(χ) χ̃_t C ε(u − ũ)²`, nonpositive for nondecreasing `a` and `χ̃_t ≤ 0`.
pub fn coupling_term(ops: &Operators, s: &SimState, t: &SimState, material: &MaterialLaw) -> f64 {
    let nodal: Vec<f64> = s.chi.iter().zip(&t.chi_rate).map(|(&x, &r)| material.a.d1(x) * r).collect();
    let coeff = ops.element_average(&nodal);
    let du: Vec<f64> = s.u.iter().zip(&t.u).map(|(a, b)| a - b).collect();
    let eps = ops.element_gradient(&du);
    ops.h() * material.c * coeff.iter().zip(&eps).map(|(c, e)| c * e * e).sum::<f64>()
}

/// `‖χ̃_t‖_{L^{3/2}} + ‖ε(ũ_t)‖²_{L³} + ℓ² + ‖ε(ũ)‖²_{L∞} + ‖ε(ũ)‖²_{L³} + ‖ε(ũ)‖⁴_{L⁶}`,
/// the bracket of `𝒦` without the constant `C_REI`.
pub fn kappa_bracket(ops: &Operators, t: &SimState, ell: f64) -> f64 {
    let h = ops.h();
    let lp_el = |e: &[f64], p: f64| (h * e.iter().map(|x| x.abs().powf(p)).sum::<f64>()).powf(1.0 / p);
    let chi_t = t.chi_rate.iter().zip(&ops.weights).map(|(r, m)| m * r.abs().powf(1.5)).sum::<f64>().powf(2.0 / 3.0);
    let eps_v = ops.element_gradient(&t.v);
    let eps_u = ops.element_gradient(&t.u);
    let sup = eps_u.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    chi_t + lp_el(&eps_v, 3.0).powi(2) + ell * ell + sup * sup + lp_el(&eps_u, 3.0).powi(2) + lp_el(&eps_u, 6.0).powi(4)
}

/// `𝒦(s̃) = C_REI · bracket`.
pub fn kappa(ops: &Operators, t: &SimState, ell: f64, c_rei: f64) -> f64 {
    c_rei * kappa_bracket(ops, t, ell)
}

/// Per-time quantities entering the relative energy inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelativeSeries {
    pub times: Vec<f64>,
    pub relative: Vec<RelativeEnergy>,
    pub dissipation: Vec<f64>,
    pub coupling: Vec<f64>,
    pub bracket: Vec<f64>,
    pub infeasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelativeReport {
    pub times: Vec<f64>,
    pub r: Vec<f64>,
    /// `∫₀ᵗ [𝒲 − coupling] e^{∫_s^t 𝒦} ds`.
    pub w_cum: Vec<f64>,
    pub k: Vec<f64>,
    pub k_cum: Vec<f64>,
    /// `ℛ(0) e^{∫₀ᵗ 𝒦}`.
    pub rhs: Vec<f64>,
    pub slack: Vec<f64>,
    pub coupling: Vec<f64>,
    pub c_rei: f64,
    pub sup_r: f64,
    pub min_summand: f64,
    pub coupling_sign_ok: bool,
    pub infeasible: bool,
}

impl RelativeReport {
    pub fn min_slack(&self) -> f64 {
        self.slack.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `ℛ(t) ≤ factor · ℛ(0) e^{∫𝒦}` at every time.
    pub fn within_envelope(&self, factor: f64) -> bool {
        self.r.iter().zip(&self.rhs).all(|(r, rhs)| *r <= factor * rhs)
    }
}

/// Evaluates the relative quantities on two trajectories sharing mesh and
/// time grid (see [`align_reference`]).
pub fn relative_series(
    ops: &Operators,
    traj: &Trajectory,
    reference: &Trajectory,
    material: &MaterialLaw,
    potential: &PotentialSplit,
    tol_mono: f64,
) -> Result<RelativeSeries> {
    if traj.states.len() != reference.states.len() {
        return Err(invalid("trajectories have different numbers of time levels"));
    }
    let mut out = RelativeSeries {
        times: traj.times(),
        relative: Vec::new(),
        dissipation: Vec::new(),
        coupling: Vec::new(),
        bracket: Vec::new(),
        infeasible: false,
    };
    for (s, t) in traj.states.iter().zip(&reference.states) {
        if (s.t - t.t).abs() > 1e-9 * (1.0 + s.t.abs()) {
            return Err(invalid(format!("time grids differ: {} vs {}", s.t, t.t)));
        }
        out.relative.push(relative_energy(ops, s, t, material, potential)?);
        out.dissipation.push(relative_dissipation(ops, s, t, material));
        out.coupling.push(coupling_term(ops, s, t, material));
        out.bracket.push(kappa_bracket(ops, t, potential.ell));
        out.infeasible |= s.chi_rate.iter().chain(&t.chi_rate).any(|&r| r > tol_mono);
    }
    Ok(out)
}

/// Slack of the relative energy inequality with trapezoid time integrals.
pub fn rei_from_series(series: &RelativeSeries, c_rei: f64) -> RelativeReport {
    let n = series.times.len();
    let k: Vec<f64> = series.bracket.iter().map(|b| c_rei * b).collect();
    let mut k_cum = vec![0.0; n];
    for i in 1..n {
        k_cum[i] = k_cum[i - 1] + 0.5 * (series.times[i] - series.times[i - 1]) * (k[i - 1] + k[i]);
    }
    let r: Vec<f64> = series.relative.iter().map(|x| x.total()).collect();
    let integrand: Vec<f64> = (0..n).map(|i| series.dissipation[i] - series.coupling[i]).collect();
    let mut w_cum = vec![0.0; n];
    for j in 1..n {
        let mut acc = 0.0;
        for i in 1..=j {
            let dt = series.times[i] - series.times[i - 1];
            let a = integrand[i - 1] * (k_cum[j] - k_cum[i - 1]).exp();
            let b = integrand[i] * (k_cum[j] - k_cum[i]).exp();
            acc += 0.5 * dt * (a + b);
        }
        w_cum[j] = acc;
    }
    let rhs: Vec<f64> = k_cum.iter().map(|kc| r[0] * kc.exp()).collect();
    let slack: Vec<f64> = (0..n).map(|i| rhs[i] - r[i] - w_cum[i]).collect();
    RelativeReport {
        times: series.times.clone(),
        sup_r: r.iter().copied().fold(0.0, f64::max),
        min_summand: series.relative.iter().map(|x| x.min_summand()).fold(f64::INFINITY, f64::min),
        coupling_sign_ok: series.coupling.iter().all(|&c| c <= 1e-14),
        coupling: series.coupling.clone(),
        r,
        w_cum,
        k,
        k_cum,
        rhs,
        slack,
        c_rei,
        infeasible: series.infeasible,
    }
}

/// Relative energy inequality of `traj` against `reference`.
pub fn rei_check(
    ops: &Operators,
    traj: &Trajectory,
    reference: &Trajectory,
    material: &MaterialLaw,
    potential: &PotentialSplit,
    c_rei: f64,
    tol_mono: f64,
) -> Result<RelativeReport> {
    let series = relative_series(ops, traj, reference, material, potential, tol_mono)?;
    Ok(rei_from_series(&series, c_rei))
}

/// Smallest `C_REI` (to relative precision `1e−6`) for which the relative
/// energy inequality holds at every time, searched in `[0, c_max]`.
pub fn calibrate_c_rei(series: &RelativeSeries, c_max: f64) -> Result<f64> {
    let ok = |c: f64| rei_from_series(series, c).min_slack() >= 0.0;
    if ok(0.0) {
        return Ok(0.0);
    }
    if !ok(c_max) {
        return Err(SimError::NonConvergence { solver: "C_REI calibration", iterations: 0, residual: c_max });
    }
    let (mut lo, mut hi) = (0.0, c_max);
    for _ in 0..200 {
        if hi - lo <= 1e-6 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Linear interpolation of nodal data from one mesh onto another.
pub fn resample(values: &[f64], from: &Mesh1D, to: &Mesh1D) -> Vec<f64> {
    to.nodes
        .iter()
        .map(|&x| {
            let s = (x / from.h).clamp(0.0, (from.n - 1) as f64);
            let i = (s.floor() as usize).min(from.n - 2);
            let w = s - i as f64;
            if w.abs() < 1e-12 {
                values[i]
            } else if (1.0 - w).abs() < 1e-12 {
                values[i + 1]
            } else {
                (1.0 - w) * values[i] + w * values[i + 1]
            }
        })
        .collect()
}

pub fn resample_state(state: &SimState, from: &Mesh1D, to: &Mesh1D) -> SimState {
    let r = |v: &[f64]| resample(v, from, to);
    SimState {
        step: state.step,
        t: state.t,
        u: r(&state.u),
        v: r(&state.v),
        chi: r(&state.chi),
        chi_prev: r(&state.chi_prev),
        chi_rate: r(&state.chi_rate),
        omega: state.omega.as_deref().map(r),
        omega_rate: state.omega_rate.as_deref().map(r),
    }
}

/// Puts `reference` on the mesh and time levels of `traj`. Time levels are
/// matched exactly (within `1e−9` relative); others are rejected.
pub fn align_reference(traj: &Trajectory, traj_mesh: &Mesh1D, reference: &Trajectory, ref_mesh: &Mesh1D) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(traj.states.len());
    let mut j = 0;
    for s in &traj.states {
        while j < reference.states.len() && reference.states[j].t < s.t - 1e-9 * (1.0 + s.t) {
            j += 1;
        }
        let r = reference
            .states
            .get(j)
            .filter(|r| (r.t - s.t).abs() <= 1e-9 * (1.0 + s.t))
            .ok_or_else(|| invalid(format!("reference has no time level at t = {}", s.t)))?;
        let mut rs = resample_state(r, ref_mesh, traj_mesh);
        rs.step = s.step;
        states.push(rs);
    }
    Ok(Trajectory {
        kind: reference.kind,
        tau: traj.tau,
        states,
        reports: Vec::new(),
        means: traj.means.clone(),
        strong: Vec::new(),
        failure: None,
    })
}

/// Per-time energy summary for export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub dissipation: Vec<f64>,
    pub dissipation_cum: Vec<f64>,
    pub work_cum: Vec<f64>,
    pub edi_slack: Vec<f64>,
    pub uedi_slack: Vec<f64>,
    pub infeasible_steps: Vec<usize>,
}

impl EnergyReport {
    pub fn from_checks(edi: Option<&EdiReport>, uedi: &EdiReport) -> Self {
        EnergyReport {
            times: uedi.times.clone(),
            energy: uedi.energy.clone(),
            dissipation: uedi.dissipation.clone(),
            dissipation_cum: uedi.dissipation_cum.clone(),
            work_cum: uedi.work_cum.clone(),
            edi_slack: edi.map(|e| e.slack.clone()).unwrap_or_else(|| vec![f64::NAN; uedi.times.len()]),
            uedi_slack: uedi.slack.clone(),
            infeasible_steps: uedi.infeasible_steps.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{assemble_operators, build_mesh};
    use crate::model::{make_potential, ScalarLaw};
    use std::collections::BTreeMap;

    fn quad() -> PotentialSplit {
        make_potential("quadratic", &BTreeMap::new()).unwrap()
    }

    fn state(u: Vec<f64>, v: Vec<f64>, chi: Vec<f64>) -> SimState {
        SimState::initial(u, v, chi)
    }

    #[test]
    fn energy_examples() {
        let ops = assemble_operators(&build_mesh(11, 1.0).unwrap());
        let m = MaterialLaw::default();
        let s = state(vec![0.0; 11], vec![0.0; 11], vec![0.5; 11]);
        assert!((energy(&ops, &s, &m, &quad()).unwrap() - 0.125).abs() < 1e-14);
        let s = state(vec![0.0; 11], vec![1.0; 11], vec![0.0; 11]);
        assert!((energy(&ops, &s, &m, &quad()).unwrap() - 0.5).abs() < 1e-14);
        let box_ = make_potential("indicator_box", &BTreeMap::new()).unwrap();
        let s = state(vec![0.0; 11], vec![0.0; 11], vec![1.5; 11]);
        assert!(matches!(energy(&ops, &s, &m, &box_), Err(SimError::Domain { .. })));
    }

    #[test]
    fn dissipation_examples() {
        let ops = assemble_operators(&build_mesh(11, 1.0).unwrap());
        let m = MaterialLaw { b: ScalarLaw::constant(2.0), b_floor: 2.0, ..MaterialLaw::default() };
        let s = state(vec![0.0; 11], vec![0.0; 11], vec![1.0; 11]);
        assert_eq!(dissipation(&ops, &s, &m, 1e-10).value(), 0.0);
        let mut s = state(vec![0.0; 11], ops.mesh.nodes.clone(), vec![1.0; 11]);
        assert!((dissipation(&ops, &s, &m, 1e-10).value() - 2.0).abs() < 1e-13);
        s.chi_rate[4] = 0.1;
        assert!(dissipation(&ops, &s, &m, 1e-10).infeasible);
    }

    #[test]
    fn relative_energy_examples() {
        let ops = assemble_operators(&build_mesh(21, 1.0).unwrap());
        let m = MaterialLaw { a: ScalarLaw::constant(1.0), ..MaterialLaw::default() };
        let s = state(ops.mesh.nodes.clone(), vec![0.3; 21], vec![0.6; 21]);
        let t = state(vec![0.0; 21], vec![0.3; 21], vec![0.6; 21]);
        assert_eq!(relative_energy(&ops, &s, &s, &m, &quad()).unwrap().total(), 0.0);
        assert!((relative_energy(&ops, &s, &t, &m, &quad()).unwrap().total() - 0.5).abs() < 1e-13);
        assert_eq!(relative_dissipation(&ops, &s, &s, &m), 0.0);
    }

    #[test]
    fn kappa_static_reference() {
        let ops = assemble_operators(&build_mesh(11, 1.0).unwrap());
        let t = state(vec![0.0; 11], vec![0.0; 11], vec![0.4; 11]);
        assert!((kappa(&ops, &t, 1.5, 2.0) - 2.0 * 2.25).abs() < 1e-14);
    }

    #[test]
    fn rei_identical_trajectories() {
        let ops = assemble_operators(&build_mesh(5, 1.0).unwrap());
        let s = state(vec![0.1; 5], vec![0.2; 5], vec![0.5; 5]);
        let traj = Trajectory {
            kind: TrajectoryKind::Weak,
            tau: 0.1,
            states: vec![s.clone(), SimState { t: 0.1, step: 1, ..s.clone() }],
            reports: vec![],
            means: crate::state::ForcingMeans::zero(5, 1),
            strong: vec![],
            failure: None,
        };
        let rep = rei_check(&ops, &traj, &traj, &MaterialLaw::default(), &quad(), 1.0, 1e-10).unwrap();
        assert!(rep.r.iter().all(|&r| r == 0.0));
        assert!(rep.slack.iter().all(|&s| s == 0.0));
        assert_eq!(rep.sup_r, 0.0);
    }

    #[test]
    fn weak_uedi_uses_the_discrete_edi_quadrature() {
        let mut spec = crate::presets::scenario("quadratic").unwrap();
        spec.nodes = 21;
        spec.steps = 20;
        let cfg = spec.resolve().unwrap();
        let ctx = WeakContext::new(&cfg).unwrap();
        let traj = crate::weak_stepper::run_weak(&cfg).unwrap();
        let edi = discrete_edi_check(&ctx, &traj).unwrap();
        let uedi = uedi_check(&ctx, &traj, 1e-9).unwrap();
        assert_eq!(edi.slack, uedi.slack);
        assert_eq!(edi.dissipation_cum, uedi.dissipation_cum);
    }

    #[test]
    fn resample_injects_coarse_nodes() {
        let fine = build_mesh(9, 1.0).unwrap();
        let coarse = build_mesh(3, 1.0).unwrap();
        let v: Vec<f64> = fine.nodes.iter().map(|x| x * x).collect();
        assert_eq!(resample(&v, &fine, &coarse), vec![0.0, 0.25, 1.0]);
        let back = resample(&[0.0, 1.0, 0.0], &coarse, &fine);
        assert!((back[2] - 0.5).abs() < 1e-15);
    }
}
