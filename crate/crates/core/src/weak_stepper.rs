//! Time discretization of the weak formulation. Each step first minimizes
//! the damage functional over `{χ ≤ χᵏ⁻¹}` and then solves the linear
//! momentum balance with the new damage field.

use std::time::Instant;

use serde::Serialize;

use crate::discretization::{assemble_operators_with, Operators, SymTridiag};
use crate::error::{invalid, Result, SimError};
use crate::model::{MaterialLaw, PotentialSplit, ScalarLaw, ScenarioConfig, TimeProfile, Tolerances};
use crate::regularization::MonotoneGraph;
use crate::state::{ForcingMeans, SimState, StepFailure, Trajectory, TrajectoryKind};

/// Iteration cap of the accelerated proximal-gradient warm start.
const APG_MAX_ITERATIONS: usize = 200;
/// Warm start stops once the proximal-gradient step moves less than this.
const APG_TOL: f64 = 1e-6;
const NEWTON_MAX_ITERATIONS: usize = 100;
const ARMIJO: f64 = 1e-4;
/// Extra Newton steps taken after the KKT tolerance is met.
const POLISH_STEPS: usize = 2;

/// `f̄ₖ = (1/τ)∫_{t_{k−1}}^{t_k} f` for `k = 1..K`.
pub fn local_time_means(f: &TimeProfile, steps: usize, tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) || steps == 0 {
        return Err(invalid("local means need K ≥ 1 and τ > 0"));
    }
    (1..=steps)
        .map(|k| {
            let (a, b) = ((k - 1) as f64 * tau, k as f64 * tau);
            Ok(f.integral(a, b)? / tau)
        })
        .collect()
}

pub fn forcing_means(cfg: &ScenarioConfig) -> Result<ForcingMeans> {
    let tau = cfg.tau();
    Ok(ForcingMeans {
        space: cfg.body_space()?,
        body: local_time_means(&cfg.forcing.body_time, cfg.steps, tau)?,
        g_left: local_time_means(&cfg.forcing.g_left, cfg.steps, tau)?,
        g_right: local_time_means(&cfg.forcing.g_right, cfg.steps, tau)?,
        pointwise: (0..=cfg.steps).map(|k| cfg.forcing.body_time.value(k as f64 * tau)).collect(),
    })
}

/// Nodal elastic energy density `gᵢ` with `Σ mᵢ a(χᵢ) gᵢ = ½ Σ_e h A_e C ε_e²`
/// for the element average `A_e` of `a(χ)`.
pub fn elastic_density(ops: &Operators, c: f64, u: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = ops.element_gradient(u).iter().map(|g| 0.5 * c * g * g).collect();
    ops.element_to_nodal_density(&e)
}

/// Largest admissible step for coercivity of the damage functional:
/// `1/(2 c_W²)` with `c_W` the slope of an affine minorant of `W̆`.
pub fn tau_max(split: &PotentialSplit) -> f64 {
    let c_w = match split.convex {
        MonotoneGraph::Quadratic { k, slope } if k == 0.0 => slope.abs(),
        _ => 0.0,
    };
    if c_w == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (2.0 * c_w * c_w)
    }
}

/// Nodal damage functional
/// `𝒫(χ) = Σ mᵢ[(χᵢ−χᵢ⁰)²/(2τ) + W̆(χᵢ) + W̌′(χᵢ⁰)χᵢ + a(χᵢ)gᵢ] + ½χᵀSχ`
/// on `{χ ≤ χ⁰}`.
#[derive(Debug, Clone)]
pub struct DamageSubproblem {
    pub tau: f64,
    pub weights: Vec<f64>,
    pub stiffness: SymTridiag,
    pub potential: PotentialSplit,
    pub a: ScalarLaw,
    /// `W̌′(χᵏ⁻¹)`.
    pub drift: Vec<f64>,
    /// Elastic density `g(uᵏ⁻¹)`.
    pub load: Vec<f64>,
    /// Upper bound `χᵏ⁻¹`.
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct DamageReport {
    pub apg_iterations: usize,
    pub newton_iterations: usize,
    pub objective_before: f64,
    pub objective_after: f64,
    pub kkt_residual: f64,
    /// Nodes where `χᵏ = χᵏ⁻¹`.
    pub active: Vec<bool>,
}

impl DamageSubproblem {
    pub fn new(
        ops: &Operators,
        potential: &PotentialSplit,
        a: ScalarLaw,
        c: f64,
        tau: f64,
        chi_prev: &[f64],
        u_prev: &[f64],
    ) -> Self {
        DamageSubproblem {
            tau,
            weights: ops.weights.clone(),
            stiffness: ops.stiffness.clone(),
            potential: *potential,
            a,
            drift: chi_prev.iter().map(|&r| potential.concave_d1(r)).collect(),
            load: elastic_density(ops, c, u_prev),
            upper: chi_prev.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }

    /// Box `[loᵢ, hiᵢ]` combining the constraint with the domain of `W̆`.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let (dlo, dhi) = match self.potential.convex {
            MonotoneGraph::Logarithmic { eps_dom, .. } => (eps_dom, 1.0 - eps_dom),
            g => g.domain(),
        };
        let hi = self.upper.iter().map(|&u| u.min(dhi)).collect();
        (vec![dlo; self.len()], hi)
    }

    fn convex_smooth(&self) -> bool {
        !self.potential.convex.is_indicator()
    }

    fn w_value(&self, x: f64) -> f64 {
        if self.convex_smooth() {
            self.potential.convex.potential(x)
        } else {
            0.0
        }
    }

    fn w_d1(&self, x: f64) -> f64 {
        if self.convex_smooth() {
            self.potential.convex.derivative(x).unwrap_or(f64::NAN)
        } else {
            0.0
        }
    }

    fn w_d2(&self, x: f64) -> f64 {
        if self.convex_smooth() {
            self.potential.convex.second_derivative(x).unwrap_or(f64::NAN)
        } else {
            0.0
        }
    }

    /// Smooth part (everything except `W̆` and the constraint).
    fn smooth_value(&self, x: &[f64]) -> f64 {
        let mut s = 0.5 * self.stiffness.quad_form(x);
        for i in 0..x.len() {
            let d = x[i] - self.upper[i];
            s += self.weights[i] * (d * d / (2.0 * self.tau) + self.drift[i] * x[i] + self.a.value(x[i]) * self.load[i]);
        }
        s
    }

    fn smooth_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.stiffness.matvec(x);
        for i in 0..x.len() {
            g[i] += self.weights[i]
                * ((x[i] - self.upper[i]) / self.tau + self.drift[i] + self.a.d1(x[i]) * self.load[i]);
        }
        g
    }

    /// `𝒫(χ)`, `+∞` when `χ` violates the constraint or leaves the domain.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let (dlo, dhi) = self.potential.domain();
        let mut s = self.smooth_value(x);
        for i in 0..x.len() {
            if x[i] > self.upper[i] || x[i] < dlo || x[i] > dhi {
                return f64::INFINITY;
            }
            s += self.weights[i] * (self.potential.convex.potential(x[i]) + self.potential.offset);
        }
        s
    }

    /// Full gradient on the interior of the box.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.smooth_gradient(x);
        for i in 0..x.len() {
            g[i] += self.weights[i] * self.w_d1(x[i]);
        }
        g
    }

    /// `max |χᵢ − clamp(χᵢ − Gᵢ/Hᵢᵢ, loᵢ, hiᵢ)|` with `H` the convexified Hessian.
    pub fn kkt_residual(&self, x: &[f64]) -> f64 {
        let (lo, hi) = self.bounds();
        let g = self.gradient(x);
        scaled_kkt(x, &g, &self.hessian(x).diag, &lo, &hi)
    }

    /// Convexified Hessian of the smooth part.
    fn hessian(&self, x: &[f64]) -> SymTridiag {
        let mut hess = self.stiffness.clone();
        for i in 0..x.len() {
            let curv = 1.0 / self.tau + self.w_d2(x[i]).max(0.0) + self.a.d2(x[i]).max(0.0) * self.load[i];
            hess.diag[i] += self.weights[i] * curv;
        }
        hess
    }

    fn newton_objective(&self, x: &[f64]) -> f64 {
        let mut s = self.smooth_value(x);
        for i in 0..x.len() {
            s += self.weights[i] * self.w_value(x[i]);
        }
        s
    }

    /// Accelerated proximal gradient in the lumped-mass metric with
    /// backtracking and adaptive restart.
    fn apg(&self, x0: Vec<f64>, lo: &[f64], hi: &[f64]) -> Result<(Vec<f64>, usize)> {
        let n = x0.len();
        let mut lip = 1.0 / self.tau;
        for i in 0..n {
            let off_l = if i > 0 { self.stiffness.off[i - 1].abs() } else { 0.0 };
            let off_r = if i + 1 < n { self.stiffness.off[i].abs() } else { 0.0 };
            let gersh = (self.stiffness.diag[i] + off_l + off_r) / self.weights[i];
            lip = lip.max(1.0 / self.tau + gersh + self.a.d2(x0[i]).max(0.0) * self.load[i]);
        }
        let graph = self.potential.convex;
        let prox_step = |y: &[f64], g: &[f64], l: f64| -> Result<Vec<f64>> {
            (0..n)
                .map(|i| {
                    let z = y[i] - g[i] / (self.weights[i] * l);
                    let p = if graph.is_indicator() { z } else { graph.prox(1.0 / l, z)? };
                    Ok(p.clamp(lo[i], hi[i]))
                })
                .collect()
        };
        let mut x = x0;
        let mut y = x.clone();
        let mut t = 1.0f64;
        let mut f_x = self.newton_objective(&x);
        for it in 0..APG_MAX_ITERATIONS {
            let fy = self.smooth_value(&y);
            let gy = self.smooth_gradient(&y);
            let mut xn;
            loop {
                xn = prox_step(&y, &gy, lip)?;
                let mut model = fy;
                for i in 0..n {
                    let d = xn[i] - y[i];
                    model += gy[i] * d + 0.5 * lip * self.weights[i] * d * d;
                }
                if self.smooth_value(&xn) <= model + 1e-12 * (1.0 + fy.abs()) {
                    break;
                }
                lip *= 2.0;
                if !lip.is_finite() {
                    return Err(SimError::NonConvergence { solver: "apg backtracking", iterations: it, residual: f64::NAN });
                }
            }
            let step = (0..n).map(|i| (xn[i] - y[i]).abs()).fold(0.0, f64::max);
            let f_new = self.newton_objective(&xn);
            let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            if f_new > f_x {
                // Adaptive restart: drop momentum.
                y = x.clone();
                t = 1.0;
                continue;
            }
            let beta = (t - 1.0) / tn;
            y = (0..n).map(|i| (xn[i] + beta * (xn[i] - x[i])).clamp(lo[i], hi[i])).collect();
            x = xn;
            f_x = f_new;
            t = tn;
            if step <= APG_TOL {
                return Ok((x, it + 1));
            }
        }
        Ok((x, APG_MAX_ITERATIONS))
    }

    /// Projected Newton with an `ε`-active set and Armijo search along the
    /// projection arc.
    fn projected_newton(&self, mut x: Vec<f64>, lo: &[f64], hi: &[f64], tol: f64) -> Result<(Vec<f64>, usize, f64)> {
        let n = x.len();
        let mut f = self.newton_objective(&x);
        let mut residual = f64::INFINITY;
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut polished = 0;
        for it in 0..NEWTON_MAX_ITERATIONS {
            let g = self.gradient(&x);
            let hess = self.hessian(&x);
            residual = scaled_kkt(&x, &g, &hess.diag, lo, hi);
            if residual <= tol {
                // Polish: the scaled residual hides gradients of size
                // tol·diag(H), so keep stepping while that still pays off.
                if let Some((bx, br)) = best.take() {
                    if br <= residual {
                        return Ok((bx, it, br));
                    }
                }
                if residual == 0.0 || polished == POLISH_STEPS {
                    return Ok((x, it, residual));
                }
                polished += 1;
                best = Some((x.clone(), residual));
            }
            let eps = residual.min(1e-3);
            let mut active: Vec<bool> = (0..n)
                .map(|i| (x[i] <= lo[i] + eps && g[i] > 0.0) || (x[i] >= hi[i] - eps && g[i] < 0.0))
                .collect();
            let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
            // Free nodes sitting on a bound whose Newton component points
            // outward are frozen and the reduced system is solved again.
            let mut d = loop {
                let free: Vec<bool> = active.iter().map(|a| !a).collect();
                let d = hess.solve_masked(&free, &neg_g)?;
                let mut changed = false;
                for i in 0..n {
                    if !active[i] && ((x[i] <= lo[i] + eps && d[i] < 0.0) || (x[i] >= hi[i] - eps && d[i] > 0.0)) {
                        active[i] = true;
                        changed = true;
                    }
                }
                if !changed {
                    break d;
                }
            };
            for i in 0..n {
                if active[i] {
                    d[i] = -g[i] / hess.diag[i];
                }
            }
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let xa: Vec<f64> = (0..n).map(|i| (x[i] + alpha * d[i]).clamp(lo[i], hi[i])).collect();
                let fa = self.newton_objective(&xa);
                let mut pred = 0.0;
                for i in 0..n {
                    pred += if active[i] { g[i] * (x[i] - xa[i]) } else { -alpha * g[i] * d[i] };
                }
                if fa.is_finite() && f - fa >= ARMIJO * pred - 1e-13 * (1.0 + f.abs()) {
                    x = xa;
                    f = fa;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                if let Some((bx, br)) = best {
                    return Ok((bx, it, br));
                }
                return Err(SimError::NonConvergence { solver: "projected newton line search", iterations: it, residual });
            }
        }
        let residual_end = self.kkt_residual(&x);
        if residual_end <= tol {
            return Ok((x, NEWTON_MAX_ITERATIONS, residual_end));
        }
        Err(SimError::NonConvergence { solver: "projected newton", iterations: NEWTON_MAX_ITERATIONS, residual: residual.min(residual_end) })
    }
}

/// Projected-gradient residual `max |xᵢ − Π(xᵢ − Gᵢ/Hᵢᵢ)|` in the metric of
/// the Hessian diagonal.
fn scaled_kkt(x: &[f64], g: &[f64], diag: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    (0..x.len()).map(|i| (x[i] - (x[i] - g[i] / diag[i]).clamp(lo[i], hi[i])).abs()).fold(0.0, f64::max)
}

/// Minimizes the damage functional over `{χ ≤ χᵏ⁻¹}` to KKT residual `tol`.
pub fn damage_step(sub: &DamageSubproblem, tol: f64) -> Result<(Vec<f64>, DamageReport)> {
    if !(sub.tau < tau_max(&sub.potential)) {
        return Err(invalid(format!(
            "time step {} exceeds the coercivity threshold {}",
            sub.tau,
            tau_max(&sub.potential)
        )));
    }
    let (lo, hi) = sub.bounds();
    if let Some(i) = (0..sub.len()).find(|&i| lo[i] > hi[i]) {
        return Err(SimError::Domain { node: i, value: sub.upper[i] });
    }
    let x0: Vec<f64> = (0..sub.len()).map(|i| sub.upper[i].clamp(lo[i], hi[i])).collect();
    let objective_before = sub.objective(&x0);
    let (x1, apg_iterations) = sub.apg(x0, &lo, &hi)?;
    let (x, newton_iterations, kkt_residual) = sub.projected_newton(x1, &lo, &hi, tol)?;
    let active = x.iter().zip(&sub.upper).map(|(a, b)| a >= b).collect();
    let report = DamageReport {
        apg_iterations,
        newton_iterations,
        objective_before,
        objective_after: sub.objective(&x),
        kkt_residual,
        active,
    };
    Ok((x, report))
}

/// Solves
/// `(M/τ² + S_b/τ + S_a + (γ₁/τ + γ₂)/γ₀·B) uᵏ = M(uᵏ⁻¹ + τvᵏ⁻¹)/τ² + S_b uᵏ⁻¹/τ
///  + γ₁/(γ₀τ)·B uᵏ⁻¹ + M f̄ₖ + ḡₖ/γ₀` where `B` picks the two end nodes.
/// Returns `uᵏ` and the relative residual.
#[allow(clippy::too_many_arguments)]
pub fn momentum_step(
    ops: &Operators,
    state: &SimState,
    chi: &[f64],
    tau: f64,
    material: &MaterialLaw,
    f_mean: &[f64],
    g_left: f64,
    g_right: f64,
) -> Result<(Vec<f64>, f64)> {
    let n = ops.n();
    let b_el = ops.element_average(&material.b_nodal(chi));
    if let Some(e) = b_el.iter().position(|&b| !(b > 0.0)) {
        return Err(SimError::Singular(format!("viscous modulus b = {} on element {e}", b_el[e])));
    }
    let a_el = ops.element_average(&material.a_nodal(chi));
    let sb = ops.weighted_stiffness(&b_el.iter().map(|b| material.v * b).collect::<Vec<_>>());
    let sa = ops.weighted_stiffness(&a_el.iter().map(|a| material.c * a).collect::<Vec<_>>());
    let mass = ops.mass();
    let mut lhs = mass.scaled(1.0 / (tau * tau)).axpy(1.0 / tau, &sb).axpy(1.0, &sa);
    let robin = (material.gamma1 / tau + material.gamma2) / material.gamma0;
    lhs.diag[ops.trace_left] += robin;
    lhs.diag[ops.trace_right] += robin;

    let pred: Vec<f64> = (0..n).map(|i| state.u[i] + tau * state.v[i]).collect();
    let mut rhs = mass.matvec(&pred);
    for r in rhs.iter_mut() {
        *r /= tau * tau;
    }
    let sbu = sb.matvec(&state.u);
    let mf = mass.matvec(f_mean);
    for i in 0..n {
        rhs[i] += sbu[i] / tau + mf[i];
    }
    let damp = material.gamma1 / (material.gamma0 * tau);
    rhs[ops.trace_left] += damp * state.u[ops.trace_left] + g_left / material.gamma0;
    rhs[ops.trace_right] += damp * state.u[ops.trace_right] + g_right / material.gamma0;

    let u = lhs.solve(&rhs)?;
    let au = lhs.matvec(&u);
    let num = au.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den = rhs.iter().map(|b| b * b).sum::<f64>().sqrt();
    let rel = if den > 0.0 { num / den } else { num };
    Ok((u, rel))
}

/// Per-step solver record.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct StepReport {
    pub step: usize,
    pub t: f64,
    pub damage: DamageReport,
    pub linear_residual: f64,
    pub min_chi: f64,
    pub max_chi_increase: f64,
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Everything the weak scheme needs besides the evolving state.
#[derive(Debug, Clone)]
pub struct WeakContext {
    pub ops: Operators,
    pub material: MaterialLaw,
    pub potential: PotentialSplit,
    pub tau: f64,
    pub steps: usize,
    pub tolerances: Tolerances,
    pub means: ForcingMeans,
    pub hypothesis1: bool,
}

impl WeakContext {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        Ok(WeakContext {
            ops: assemble_operators_with(&cfg.mesh, cfg.mass),
            material: cfg.material,
            potential: cfg.potential,
            tau: cfg.tau(),
            steps: cfg.steps,
            tolerances: cfg.tolerances,
            means: forcing_means(cfg)?,
            hypothesis1: cfg.hypothesis1,
        })
    }

    pub fn subproblem(&self, prev: &SimState) -> DamageSubproblem {
        DamageSubproblem::new(&self.ops, &self.potential, self.material.a, self.material.c, self.tau, &prev.chi, &prev.u)
    }
}

/// Advances the weak scheme one step at a time.
#[derive(Debug, Clone)]
pub struct WeakStepper {
    pub ctx: WeakContext,
    pub state: SimState,
}

impl WeakStepper {
    pub fn new(ctx: WeakContext, initial: SimState) -> Self {
        WeakStepper { ctx, state: initial }
    }

    pub fn finished(&self) -> bool {
        self.state.step >= self.ctx.steps
    }

    pub fn step(&mut self) -> Result<(SimState, StepReport)> {
        let start = Instant::now();
        let k = self.state.step + 1;
        let tau = self.ctx.tau;
        let sub = self.ctx.subproblem(&self.state);
        let (chi, damage) = damage_step(&sub, self.ctx.tolerances.inner)?;
        let f_mean = self.ctx.means.body_nodal(k);
        let (u, linear_residual) = momentum_step(
            &self.ctx.ops,
            &self.state,
            &chi,
            tau,
            &self.ctx.material,
            &f_mean,
            self.ctx.means.g_left[k - 1],
            self.ctx.means.g_right[k - 1],
        )?;
        if linear_residual > self.ctx.tolerances.lin {
            return Err(SimError::NonConvergence { solver: "momentum solve", iterations: 1, residual: linear_residual });
        }
        let v = u.iter().zip(&self.state.u).map(|(a, b)| (a - b) / tau).collect();
        let chi_rate: Vec<f64> = chi.iter().zip(&self.state.chi).map(|(a, b)| (a - b) / tau).collect();
        let report = StepReport {
            step: k,
            t: k as f64 * tau,
            damage,
            linear_residual,
            min_chi: chi.iter().copied().fold(f64::INFINITY, f64::min),
            max_chi_increase: chi.iter().zip(&self.state.chi).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max),
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        let next = SimState {
            step: k,
            t: k as f64 * tau,
            u,
            v,
            chi_prev: self.state.chi.clone(),
            chi,
            chi_rate,
            omega: None,
            omega_rate: None,
        };
        self.state = next.clone();
        Ok((next, report))
    }
}

impl Iterator for WeakStepper {
    type Item = Result<(SimState, StepReport)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished() {
            None
        } else {
            Some(self.step())
        }
    }
}

/// Runs the weak scheme over `K` steps from `u⁻¹ = u₀ − τv₀`. A failing step
/// ends the run; the partial trajectory records the step index.
pub fn run_weak(cfg: &ScenarioConfig) -> Result<Trajectory> {
    let ctx = WeakContext::new(cfg)?;
    run_weak_with(ctx, SimState::initial(cfg.u0.clone(), cfg.v0.clone(), cfg.chi0.clone()))
}

pub fn run_weak_with(ctx: WeakContext, initial: SimState) -> Result<Trajectory> {
    let mut traj = Trajectory {
        kind: TrajectoryKind::Weak,
        tau: ctx.tau,
        states: vec![initial.clone()],
        reports: Vec::with_capacity(ctx.steps),
        means: ctx.means.clone(),
        strong: Vec::new(),
        failure: None,
    };
    let stepper = WeakStepper::new(ctx, initial);
    for item in stepper {
        match item {
            Ok((s, r)) => {
                traj.states.push(s);
                traj.reports.push(r);
            }
            Err(e) => {
                traj.failure = Some(StepFailure { step: traj.states.len(), message: e.to_string(), error: e });
                break;
            }
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationStep {
    pub step: usize,
    pub min_chi: f64,
    pub negative_nodes: usize,
    pub objective: f64,
    pub truncated_objective: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationReport {
    pub skipped: bool,
    pub warning: Option<String>,
    pub steps: Vec<TruncationStep>,
}

impl TruncationReport {
    pub fn passed(&self) -> bool {
        self.skipped || self.steps.iter().all(|s| s.passed)
    }
}

/// For each step checks `χᵏ = (χᵏ)⁺` and `𝒫((χᵏ)⁺) ≤ 𝒫(χᵏ) + tol`. Skipped
/// with a warning unless `a` vanishes on `ℝ₋` (first structural hypothesis).
pub fn truncation_consistency_check(ctx: &WeakContext, traj: &Trajectory, tol: f64) -> TruncationReport {
    if !ctx.hypothesis1 {
        return TruncationReport {
            skipped: true,
            warning: Some("material violates the structural hypothesis on a; truncation check skipped".into()),
            steps: Vec::new(),
        };
    }
    let steps = traj.states.windows(2).map(|w| truncation_step(ctx, &w[0], &w[1], tol)).collect();
    TruncationReport { skipped: false, warning: None, steps }
}

/// Truncation check of a single step `prev → cur`.
pub fn truncation_step(ctx: &WeakContext, prev: &SimState, cur: &SimState, tol: f64) -> TruncationStep {
    let sub = ctx.subproblem(prev);
    let chi = &cur.chi;
    let plus: Vec<f64> = chi.iter().map(|c| c.max(0.0)).collect();
    let objective = sub.objective(chi);
    let truncated_objective = sub.objective(&plus);
    let negative_nodes = chi.iter().filter(|&&c| c < 0.0).count();
    let within = truncated_objective <= objective + tol * (1.0 + objective.abs())
        || (objective.is_infinite() && truncated_objective.is_infinite());
    TruncationStep {
        step: cur.step,
        min_chi: chi.iter().copied().fold(f64::INFINITY, f64::min),
        negative_nodes,
        objective,
        truncated_objective,
        passed: negative_nodes == 0 && within,
    }
}

/// Per-node terms of the nonsmooth inequality at step `k`. The left-hand
/// side is node-separable, `lhs(φ) = Σᵢ term(i, φᵢ)` with `term(i, 0) = 0`,
/// because `φᵀSχᵏ = Σᵢ φᵢ(Sχᵏ)ᵢ`.
fn nonsmooth_vi_terms<'a>(
    ctx: &'a WeakContext,
    prev: &'a SimState,
    cur: &'a SimState,
) -> impl Fn(usize, f64) -> Result<f64> + 'a {
    let load = elastic_density(&ctx.ops, ctx.material.c, &prev.u);
    let s_chi = ctx.ops.stiffness.matvec(&cur.chi);
    move |i, p| {
        let x = cur.chi[i];
        let w_new = ctx.potential.convex.potential(x + p);
        let w_old = ctx.potential.convex.potential(x);
        if !w_new.is_finite() || !w_old.is_finite() {
            return Err(invalid(format!("test function leaves the potential domain at node {i}")));
        }
        let rate = (x - prev.chi[i]) / ctx.tau;
        let lin = ctx.potential.concave_d1(prev.chi[i]) + ctx.material.a.d1(x) * load[i];
        Ok(p * s_chi[i] + ctx.ops.weights[i] * (rate * p + (w_new - w_old) + lin * p))
    }
}

/// `Σᵢ term(i, φᵢ)` over the nonzero entries of a nonpositive test vector.
pub(crate) fn separable_sum(phi: &[f64], n: usize, term: impl Fn(usize, f64) -> Result<f64>) -> Result<f64> {
    if phi.len() != n {
        return Err(invalid("test function length does not match the mesh"));
    }
    let mut s = 0.0;
    for (i, &p) in phi.iter().enumerate() {
        if p > 0.0 {
            return Err(invalid(format!("test function is positive at node {i}")));
        }
        if p != 0.0 {
            s += term(i, p)?;
        }
    }
    Ok(s)
}

/// Discrete left-hand side of the one-sided inequality with a convex
/// nonsmooth part at step `k`, for a nonpositive test vector `φ`:
/// `Σ mᵢ[(χᵏ−χᵏ⁻¹)ᵢ/τ φᵢ + W̆(χᵏᵢ+φᵢ) − W̆(χᵏᵢ) + (W̌′(χᵏ⁻¹ᵢ) + a′(χᵏᵢ)gᵢ(uᵏ⁻¹))φᵢ] + φᵀSχᵏ`.
pub fn nonsmooth_vi_lhs(ctx: &WeakContext, prev: &SimState, cur: &SimState, phi: &[f64]) -> Result<f64> {
    separable_sum(phi, cur.chi.len(), nonsmooth_vi_terms(ctx, prev, cur))
}

/// Minimum of [`nonsmooth_vi_lhs`] over the bank at one step.
pub fn nonsmooth_vi_step(ctx: &WeakContext, prev: &SimState, cur: &SimState, bank: &TestBank) -> Result<f64> {
    bank.min_separable(&cur.chi, nonsmooth_vi_terms(ctx, prev, cur))
}

/// Minimum of [`nonsmooth_vi_lhs`] over the bank, per step.
pub fn nonsmooth_vi_residual(ctx: &WeakContext, traj: &Trajectory, bank: &TestBank) -> Result<Vec<f64>> {
    traj.states.windows(2).map(|w| nonsmooth_vi_step(ctx, &w[0], &w[1], bank)).collect()
}

/// Nonpositive test functions. State-dependent entries are scaled so that
/// `χ + φ` stays in `[0, ∞)` for indicator potentials.
#[derive(Debug, Clone, PartialEq)]
pub enum TestVector {
    Fixed(Vec<f64>),
    /// `−scale·χ`.
    ScaledState(f64),
    /// `−min(1, χ)` on all nodes.
    MinusOneCapped,
    /// Minus the hat function of node `i`, capped by `χᵢ`.
    HatCapped(usize),
    /// `−wᵢ·min(1, χᵢ)` with weights `wᵢ ∈ [0, 1]`.
    Weighted(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TestBank {
    pub entries: Vec<TestVector>,
}

impl TestBank {
    /// `{−1, −hatᵢ for every node, −10⁻³χ}` plus one [`TestVector::Weighted`]
    /// entry per weight vector in `extra`.
    pub fn standard(n: usize, extra: &[Vec<f64>]) -> Self {
        let mut entries = vec![TestVector::MinusOneCapped, TestVector::ScaledState(1e-3)];
        entries.extend((0..n).map(TestVector::HatCapped));
        entries.extend(extra.iter().map(|w| TestVector::Weighted(w.iter().map(|x| x.clamp(0.0, 1.0)).collect())));
        TestBank { entries }
    }

    /// Minimum over the bank of a node-separable form `Σᵢ term(i, φᵢ)` with
    /// `term(i, 0) = 0`; single-node entries cost one term each. Returns 0 for
    /// an empty bank.
    pub fn min_separable(&self, chi: &[f64], term: impl Fn(usize, f64) -> Result<f64>) -> Result<f64> {
        let n = chi.len();
        let mut best = f64::INFINITY;
        for e in &self.entries {
            let value = match e {
                TestVector::HatCapped(i) => {
                    if *i >= n {
                        return Err(invalid(format!("hat test function at node {i} is outside the mesh")));
                    }
                    let p = -chi[*i].clamp(0.0, 1.0);
                    if p != 0.0 { term(*i, p)? } else { 0.0 }
                }
                other => separable_sum(&self.vector(other, chi), n, &term)?,
            };
            best = best.min(value);
        }
        Ok(if best.is_finite() { best } else { 0.0 })
    }

    fn vector(&self, e: &TestVector, chi: &[f64]) -> Vec<f64> {
        match e {
            TestVector::Fixed(v) => v.clone(),
            TestVector::ScaledState(s) => chi.iter().map(|c| -s * c.max(0.0)).collect(),
            TestVector::MinusOneCapped => chi.iter().map(|c| -c.clamp(0.0, 1.0)).collect(),
            TestVector::HatCapped(i) => {
                let mut v = vec![0.0; chi.len()];
                v[*i] = -chi[*i].clamp(0.0, 1.0);
                v
            }
            TestVector::Weighted(w) => w.iter().zip(chi).map(|(w, c)| -w * c.clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn vectors(&self, chi: &[f64]) -> Vec<Vec<f64>> {
        self.entries.iter().map(|e| self.vector(e, chi)).collect()
    }
}
