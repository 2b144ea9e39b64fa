//! Resolvents, Yosida approximations and their mollified smooth versions.
//!
//! For a maximal monotone graph `β = ∂β̂` the Yosida approximation is
//! `β^Y_δ(x) = (x − J_δ(x))/δ` with `J_δ` the proximal map, and the smooth
//! approximation is `β_δ = β^Y_δ ⋆ ρ_δ` with `ρ_δ(z) = ρ(z/δ²)/δ²`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SimError};
use crate::quadrature;

/// Maximal monotone graphs used as convex parts of potentials and as the
/// unidirectionality constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MonotoneGraph {
    /// Subdifferential of the indicator of `[lo, hi]` (either end may be infinite).
    Interval { lo: f64, hi: f64 },
    /// `β̂(r) = k r²/2 + slope·r`.
    Quadratic { k: f64, slope: f64 },
    /// `β̂(r) = r ln r + (1−r) ln(1−r) + slope·r` on `[0, 1]`.
    Logarithmic { slope: f64, eps_dom: f64 },
    /// `β̂(r) = c r²(1−r)² + (ell/2) r²`, convex when `ell ≥ c`.
    QuarticWell { c: f64, ell: f64 },
}

impl MonotoneGraph {
    pub fn non_positive_indicator() -> Self {
        MonotoneGraph::Interval { lo: f64::NEG_INFINITY, hi: 0.0 }
    }

    pub fn non_negative_indicator() -> Self {
        MonotoneGraph::Interval { lo: 0.0, hi: f64::INFINITY }
    }

    pub fn box_indicator(lo: f64, hi: f64) -> Self {
        MonotoneGraph::Interval { lo, hi }
    }

    /// Closed hull of the effective domain.
    pub fn domain(&self) -> (f64, f64) {
        match *self {
            MonotoneGraph::Interval { lo, hi } => (lo, hi),
            MonotoneGraph::Logarithmic { .. } => (0.0, 1.0),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn is_indicator(&self) -> bool {
        matches!(self, MonotoneGraph::Interval { .. })
    }

    pub fn is_smooth(&self) -> bool {
        !self.is_indicator()
    }

    /// Points where `β^Y_δ` fails to be smooth.
    pub fn kinks(&self) -> Vec<f64> {
        match *self {
            MonotoneGraph::Interval { lo, hi } => [lo, hi].into_iter().filter(|v| v.is_finite()).collect(),
            _ => Vec::new(),
        }
    }

    /// `β̂(x)`, `+∞` outside the domain.
    pub fn potential(&self, x: f64) -> f64 {
        match *self {
            MonotoneGraph::Interval { lo, hi } => {
                if x >= lo && x <= hi {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            MonotoneGraph::Quadratic { k, slope } => 0.5 * k * x * x + slope * x,
            MonotoneGraph::Logarithmic { slope, .. } => {
                if !(0.0..=1.0).contains(&x) {
                    return f64::INFINITY;
                }
                xlogx(x) + xlogx(1.0 - x) + slope * x
            }
            MonotoneGraph::QuarticWell { c, ell } => c * x * x * (1.0 - x) * (1.0 - x) + 0.5 * ell * x * x,
        }
    }

    /// `β̂′(x)` where single valued and finite; the logarithmic graph is
    /// evaluated at `x` clamped to `[eps_dom, 1 − eps_dom]`.
    pub fn derivative(&self, x: f64) -> Option<f64> {
        match *self {
            MonotoneGraph::Interval { lo, hi } => (x > lo && x < hi).then_some(0.0),
            MonotoneGraph::Quadratic { k, slope } => Some(k * x + slope),
            MonotoneGraph::Logarithmic { slope, eps_dom } => {
                if !(0.0..=1.0).contains(&x) {
                    return None;
                }
                let r = x.clamp(eps_dom, 1.0 - eps_dom);
                Some((r / (1.0 - r)).ln() + slope)
            }
            MonotoneGraph::QuarticWell { c, ell } => Some(c * (2.0 * x - 6.0 * x * x + 4.0 * x * x * x) + ell * x),
        }
    }

    pub fn second_derivative(&self, x: f64) -> Option<f64> {
        match *self {
            MonotoneGraph::Interval { lo, hi } => (x > lo && x < hi).then_some(0.0),
            MonotoneGraph::Quadratic { k, .. } => Some(k),
            MonotoneGraph::Logarithmic { eps_dom, .. } => {
                if !(0.0..=1.0).contains(&x) {
                    return None;
                }
                let r = x.clamp(eps_dom, 1.0 - eps_dom);
                Some(1.0 / (r * (1.0 - r)))
            }
            MonotoneGraph::QuarticWell { c, ell } => Some(c * (2.0 - 12.0 * x + 12.0 * x * x) + ell),
        }
    }

    /// Minimal section `|β°(x)| = inf{|y| : y ∈ β(x)}`.
    pub fn min_section(&self, x: f64) -> f64 {
        match *self {
            MonotoneGraph::Interval { lo, hi } => {
                if x >= lo && x <= hi {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            MonotoneGraph::Logarithmic { slope, .. } => {
                if x <= 0.0 || x >= 1.0 {
                    f64::INFINITY
                } else {
                    ((x / (1.0 - x)).ln() + slope).abs()
                }
            }
            _ => self.derivative(x).map(f64::abs).unwrap_or(f64::INFINITY),
        }
    }

    /// `J_λ(x) = argmin_y |y − x|²/(2λ) + β̂(y)`.
    pub fn prox(&self, lambda: f64, x: f64) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(invalid(format!("prox parameter must be positive, got {lambda}")));
        }
        if !x.is_finite() {
            return Err(invalid("prox of a non-finite point"));
        }
        match *self {
            MonotoneGraph::Interval { lo, hi } => Ok(x.clamp(lo, hi)),
            MonotoneGraph::Quadratic { k, slope } => Ok((x - lambda * slope) / (1.0 + lambda * k)),
            MonotoneGraph::Logarithmic { slope, .. } => prox_logarithmic(lambda, x, slope),
            MonotoneGraph::QuarticWell { c, ell } => {
                let g = |y: f64| (y - x) / lambda + c * (2.0 * y - 6.0 * y * y + 4.0 * y * y * y) + ell * y;
                let dg = |y: f64| 1.0 / lambda + (c * (2.0 - 12.0 * y + 12.0 * y * y) + ell).max(0.0);
                monotone_root(g, dg, x)
            }
        }
    }

    pub fn resolvent(&self, lambda: f64, x: f64) -> Result<f64> {
        self.prox(lambda, x)
    }

    pub fn yosida(&self, delta: f64, x: f64) -> Result<f64> {
        Ok((x - self.prox(delta, x)?) / delta)
    }

    /// Moreau envelope `β̂^Y_δ(x) = |x − J|²/(2δ) + β̂(J)`.
    pub fn yosida_potential(&self, delta: f64, x: f64) -> Result<f64> {
        let j = self.prox(delta, x)?;
        Ok((x - j) * (x - j) / (2.0 * delta) + self.potential(j))
    }
}

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

fn prox_logarithmic(lambda: f64, x: f64, slope: f64) -> Result<f64> {
    // In the logit variable s, g(s) = (σ(s) − x)/λ + s + slope is increasing with g′ ≥ 1.
    let sigma = |s: f64| 1.0 / (1.0 + (-s).exp());
    let g = |s: f64| (sigma(s) - x) / lambda + s + slope;
    let dg = |s: f64| {
        let p = sigma(s);
        p * (1.0 - p) / lambda + 1.0
    };
    let mut lo = x / lambda - slope - 1.0 / lambda;
    let mut hi = x / lambda - slope;
    let mut s = 0.5 * (lo + hi);
    for _ in 0..200 {
        let v = g(s);
        if v.abs() < 1e-14 * (1.0 + s.abs()) {
            break;
        }
        if v > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let step = s - v / dg(s);
        s = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 * (1.0 + s.abs()) {
            break;
        }
    }
    Ok(sigma(s))
}

/// Root of an increasing function by safeguarded Newton, starting from `x0`.
fn monotone_root(g: impl Fn(f64) -> f64, dg: impl Fn(f64) -> f64, x0: f64) -> Result<f64> {
    let g0 = g(x0);
    if g0 == 0.0 {
        return Ok(x0);
    }
    let mut width = 1.0;
    let (mut lo, mut hi) = if g0 > 0.0 { (x0 - width, x0) } else { (x0, x0 + width) };
    let mut tries = 0;
    while g(lo) > 0.0 || g(hi) < 0.0 {
        width *= 2.0;
        if g0 > 0.0 {
            lo = x0 - width;
        } else {
            hi = x0 + width;
        }
        tries += 1;
        if tries > 200 {
            return Err(SimError::NonConvergence { solver: "prox bracket", iterations: tries, residual: g0 });
        }
    }
    let mut y = 0.5 * (lo + hi);
    for _ in 0..200 {
        let v = g(y);
        let d = dg(y);
        if v == 0.0 || v.abs() <= 1e-15 * d * (1.0 + y.abs()) {
            return Ok(y);
        }
        if v > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let step = if d > 0.0 { y - v / d } else { f64::NAN };
        y = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        if hi - lo <= 4.0 * f64::EPSILON * (1.0 + y.abs()) {
            return Ok(y);
        }
    }
    Ok(y)
}

/// The bump `ρ(s) = c·exp(−1/(1−s²))` on `(−1, 1)`, normalized to unit mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    pub norm: f64,
    /// `Ĉ_ρ = ‖ρ′‖_{L¹}`.
    pub c_rho: f64,
}

impl Mollifier {
    pub fn standard() -> &'static Mollifier {
        static M: OnceLock<Mollifier> = OnceLock::new();
        M.get_or_init(|| {
            let raw = |s: f64| bump(s);
            let mass = quadrature::integrate_with_breaks(&raw, -1.0, 1.0, &[0.0], 1e-15).expect("bump mass");
            let norm = 1.0 / mass;
            let dabs = |s: f64| (norm * bump(s) * bump_log_d1(s)).abs();
            let c_rho = quadrature::integrate_with_breaks(&dabs, -1.0, 1.0, &[0.0], 1e-14).expect("bump derivative");
            Mollifier { norm, c_rho }
        })
    }

    pub fn rho(&self, s: f64) -> f64 {
        self.norm * bump(s)
    }

    pub fn d1(&self, s: f64) -> f64 {
        self.norm * bump(s) * bump_log_d1(s)
    }

    pub fn d2(&self, s: f64) -> f64 {
        if s.abs() >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - s * s;
        self.norm * bump(s) * (4.0 * s * s / q.powi(4) - 2.0 / (q * q) - 8.0 * s * s / q.powi(3))
    }
}

fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

fn bump_log_d1(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        return 0.0;
    }
    let q = 1.0 - s * s;
    -2.0 * s / (q * q)
}

/// Values of the smooth approximation and its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothValue {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// `β_δ = β^Y_δ ⋆ ρ_δ` for a parent graph, optionally shifted by a constant so
/// that a normalization `β_δ(0) − shift = 0` holds.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedFunction {
    pub graph: MonotoneGraph,
    pub delta: f64,
    /// Subtracted from every value; the potential loses `shift·x`.
    pub shift: f64,
    /// Point where the potential is anchored to the Moreau envelope.
    pub anchor: f64,
    /// δ used by property checks; equals `delta` unless deliberately misreported.
    pub reported_delta: f64,
    anchor_offset: f64,
}

impl RegularizedFunction {
    pub fn new(graph: MonotoneGraph, delta: f64) -> Result<Self> {
        Self::with_anchor(graph, delta, 0.0)
    }

    pub fn with_anchor(graph: MonotoneGraph, delta: f64, anchor: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid(format!("δ must lie in (0, 1), got {delta}")));
        }
        let mut reg = RegularizedFunction {
            graph,
            delta,
            shift: 0.0,
            anchor,
            reported_delta: delta,
            anchor_offset: 0.0,
        };
        reg.anchor_offset = graph.yosida_potential(delta, anchor)? - reg.convolved_envelope(anchor)?;
        Ok(reg)
    }

    /// Shifts values so that the returned function vanishes at 0.
    pub fn normalized_at_zero(mut self) -> Result<Self> {
        self.shift = self.raw(0.0)?.value;
        Ok(self)
    }

    pub fn with_reported_delta(mut self, reported: f64) -> Self {
        self.reported_delta = reported;
        self
    }

    fn width(&self) -> f64 {
        self.delta * self.delta
    }

    /// Unshifted `(β_δ, β_δ′, β_δ″)`.
    pub fn raw(&self, x: f64) -> Result<SmoothValue> {
        if !x.is_finite() {
            return Err(invalid("smooth Yosida evaluation at a non-finite point"));
        }
        let eps = self.width();
        let g = &self.graph;
        let delta = self.delta;
        let base = g.yosida(delta, x)?;
        if let Some(slope) = self.affine_slope_near(x) {
            // Mollifying an affine function with an even kernel is exact.
            return Ok(SmoothValue { value: base, d1: slope, d2: 0.0 });
        }
        let rho = Mollifier::standard();
        let f = |s: f64| -> [f64; 3] {
            let b = g.yosida(delta, x - eps * s).unwrap_or(f64::NAN) - base;
            [rho.rho(s) * b, rho.d1(s) * b, rho.d2(s) * b]
        };
        let breaks: Vec<f64> = g.kinks().iter().map(|k| (x - k) / eps).collect();
        let scale = 1.0 + base.abs();
        let tol = [1e-13 * scale, 1e-13 * scale / eps, 1e-13 * scale / (eps * eps)];
        let [v, d1, d2] = quadrature::integrate3_with_breaks(&f, -1.0, 1.0, &breaks, tol)?;
        if !(v.is_finite() && d1.is_finite() && d2.is_finite()) {
            return Err(SimError::Quadrature { a: x - eps, b: x + eps });
        }
        // ∫ρ = 1 and ∫ρ′ = ∫ρ″ = 0, so subtracting `base` only changes the value.
        Ok(SmoothValue { value: v + base, d1: d1 / eps, d2: d2 / (eps * eps) })
    }

    /// Slope of `β^Y_δ` when it is affine on the kernel support around `x`.
    fn affine_slope_near(&self, x: f64) -> Option<f64> {
        let eps = self.width();
        let delta = self.delta;
        match self.graph {
            MonotoneGraph::Quadratic { k, .. } => Some(k / (1.0 + delta * k)),
            MonotoneGraph::Interval { lo, hi } => {
                if x - eps > lo && x + eps < hi {
                    Some(0.0)
                } else if x + eps < lo || x - eps > hi {
                    Some(1.0 / delta)
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    /// Shifted `(β_δ − shift, β_δ′, β_δ″)`.
    pub fn eval(&self, x: f64) -> Result<SmoothValue> {
        let mut r = self.raw(x)?;
        r.value -= self.shift;
        Ok(r)
    }

    pub fn yosida(&self, x: f64) -> Result<f64> {
        self.graph.yosida(self.delta, x)
    }

    fn convolved_envelope(&self, x: f64) -> Result<f64> {
        let eps = self.width();
        let rho = Mollifier::standard();
        let g = &self.graph;
        let delta = self.delta;
        let base = g.yosida_potential(delta, x)?;
        let f = |s: f64| rho.rho(s) * (g.yosida_potential(delta, x - eps * s).unwrap_or(f64::NAN) - base);
        let breaks: Vec<f64> = g.kinks().iter().map(|k| (x - k) / eps).collect();
        Ok(base + quadrature::integrate_with_breaks(&f, -1.0, 1.0, &breaks, 1e-14 * (1.0 + base.abs()))?)
    }

    /// Unshifted primitive of `β_δ`, equal to the Moreau envelope at the anchor.
    pub fn raw_potential(&self, x: f64) -> Result<f64> {
        Ok(self.convolved_envelope(x)? + self.anchor_offset)
    }

    /// Primitive of [`eval`](Self::eval)`.value`.
    pub fn potential(&self, x: f64) -> Result<f64> {
        Ok(self.raw_potential(x)? - self.shift * x)
    }
}

pub fn smooth_yosida_eval(reg: &RegularizedFunction, x: f64) -> Result<SmoothValue> {
    reg.eval(x)
}

pub fn resolvent(graph: &MonotoneGraph, lambda: f64, x: f64) -> Result<f64> {
    graph.prox(lambda, x)
}

pub fn yosida_eval(graph: &MonotoneGraph, delta: f64, x: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("δ must lie in (0, 1), got {delta}")));
    }
    graph.yosida(delta, x)
}

pub const PROPERTY_TOL: f64 = 1e-7;

/// Worst-case margins of the four regularization bounds; a bound holds iff its margin is ≥ 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub delta: f64,
    pub tol: f64,
    pub value_margin: f64,
    pub value_witness: f64,
    pub d1_margin: f64,
    pub d1_witness: f64,
    pub d2_margin: f64,
    pub d2_witness: f64,
    /// `None` when the parent potential is not available anywhere on the grid.
    pub potential_upper_margin: Option<f64>,
    pub potential_lower_margin: f64,
    pub potential_witness: f64,
}

impl PropertyReport {
    pub fn value_bound_holds(&self) -> bool {
        self.value_margin >= 0.0
    }

    pub fn d1_bound_holds(&self) -> bool {
        self.d1_margin >= 0.0
    }

    pub fn d2_bound_holds(&self) -> bool {
        self.d2_margin >= 0.0
    }

    pub fn potential_bounds_hold(&self) -> bool {
        self.potential_lower_margin >= 0.0 && self.potential_upper_margin.is_none_or(|m| m >= 0.0)
    }

    pub fn all_hold(&self) -> bool {
        self.value_bound_holds() && self.d1_bound_holds() && self.d2_bound_holds() && self.potential_bounds_hold()
    }

    pub fn min_margin(&self) -> f64 {
        let mut m = self.value_margin.min(self.d1_margin).min(self.d2_margin).min(self.potential_lower_margin);
        if let Some(u) = self.potential_upper_margin {
            m = m.min(u);
        }
        m
    }
}

/// Checks the bounds on the unshifted regularization, measuring distances from the anchor.
pub fn regularization_property_check(reg: &RegularizedFunction, grid: &[f64]) -> Result<PropertyReport> {
    if grid.is_empty() {
        return Err(invalid("property check needs a nonempty grid"));
    }
    let d = reg.reported_delta;
    let tol = PROPERTY_TOL;
    let c_rho = Mollifier::standard().c_rho;
    let mut rep = PropertyReport {
        delta: d,
        tol,
        value_margin: f64::INFINITY,
        value_witness: grid[0],
        d1_margin: f64::INFINITY,
        d1_witness: grid[0],
        d2_margin: f64::INFINITY,
        d2_witness: grid[0],
        potential_upper_margin: None,
        potential_lower_margin: f64::INFINITY,
        potential_witness: grid[0],
    };
    for &x in grid {
        let v = reg.raw(x)?;
        let y = reg.yosida(x)?;
        let m = d + tol - (v.value - y).abs();
        if m < rep.value_margin {
            rep.value_margin = m;
            rep.value_witness = x;
        }
        let m = 1.0 / d + tol - v.d1.abs();
        if m < rep.d1_margin {
            rep.d1_margin = m;
            rep.d1_witness = x;
        }
        let m = c_rho / (d * d * d) + tol - v.d2.abs();
        if m < rep.d2_margin {
            rep.d2_margin = m;
            rep.d2_witness = x;
        }
        let dist = (x - reg.anchor).abs();
        let p = reg.raw_potential(x)?;
        let py = reg.graph.yosida_potential(reg.delta, x)?;
        let lower = p - (py - d * dist) + tol;
        if lower < rep.potential_lower_margin {
            rep.potential_lower_margin = lower;
            rep.potential_witness = x;
        }
        let parent = reg.graph.potential(x);
        if parent.is_finite() {
            let upper = parent + d * dist + tol - p;
            if rep.potential_upper_margin.is_none_or(|u| upper < u) {
                rep.potential_upper_margin = Some(upper);
                if upper < rep.potential_lower_margin {
                    rep.potential_witness = x;
                }
            }
        }
    }
    Ok(rep)
}

/// Regularization of the unidirectionality constraint `∂I_{(−∞,0]}`, shifted so that `I_δ′(0) = 0`.
pub fn make_i_delta(delta: f64) -> Result<RegularizedFunction> {
    RegularizedFunction::new(MonotoneGraph::non_positive_indicator(), delta)?.normalized_at_zero()
}

/// Uniform grid with `count` points on `[a, b]`.
pub fn uniform_grid(a: f64, b: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![a];
    }
    (0..count).map(|i| a + (b - a) * i as f64 / (count - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const NEG: MonotoneGraph = MonotoneGraph::Interval { lo: f64::NEG_INFINITY, hi: 0.0 };
    const HALF_SQUARE: MonotoneGraph = MonotoneGraph::Quadratic { k: 1.0, slope: 0.0 };

    #[test]
    fn resolvent_examples() {
        assert_eq!(resolvent(&NEG, 0.5, 1.0).unwrap(), 0.0);
        assert_eq!(resolvent(&NEG, 0.5, -2.0).unwrap(), -2.0);
        let j = resolvent(&HALF_SQUARE, 0.7, 2.3).unwrap();
        assert!((j - 2.3 / 1.7).abs() < 1e-15);
        assert!(resolvent(&NEG, 0.0, 1.0).is_err());
        let bx = MonotoneGraph::box_indicator(0.0, 1.0);
        assert_eq!(bx.prox(0.3, 1.4).unwrap(), 1.0);
        assert_eq!(bx.prox(0.3, -0.4).unwrap(), 0.0);
    }

    #[test]
    fn yosida_examples() {
        assert_eq!(yosida_eval(&NEG, 0.5, 1.0).unwrap(), 2.0);
        assert_eq!(yosida_eval(&NEG, 0.5, -1.0).unwrap(), 0.0);
        assert!((yosida_eval(&HALF_SQUARE, 0.5, 3.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(yosida_eval(&NEG, 1.5, 1.0).is_err());
    }

    #[test]
    fn mollifier_invariants() {
        let m = Mollifier::standard();
        let mass = quadrature::integrate_with_breaks(&|s| m.rho(s), -1.0, 1.0, &[0.0], 1e-15).unwrap();
        assert!((mass - 1.0).abs() < 1e-10);
        assert_eq!(m.rho(1.0), 0.0);
        assert_eq!(m.rho(-1.0), 0.0);
        for s in uniform_grid(-1.0, 1.0, 101) {
            assert_eq!(m.rho(s), m.rho(-s));
        }
        // ρ is even and unimodal, so ‖ρ′‖₁ = 2ρ(0).
        assert!((m.c_rho - 2.0 * m.rho(0.0)).abs() < 1e-12);
        for s in [-0.7, -0.2, 0.1, 0.5, 0.9] {
            let fd = (m.rho(s + 1e-6) - m.rho(s - 1e-6)) / 2e-6;
            assert!((fd - m.d1(s)).abs() < 1e-6 * (1.0 + fd.abs()));
            let fd2 = (m.d1(s + 1e-6) - m.d1(s - 1e-6)) / 2e-6;
            assert!((fd2 - m.d2(s)).abs() < 1e-5 * (1.0 + fd2.abs()));
        }
    }

    #[test]
    fn smooth_yosida_away_from_kink_is_exact() {
        let reg = RegularizedFunction::new(NEG, 0.5).unwrap();
        let v = smooth_yosida_eval(&reg, 1.0).unwrap();
        assert!((v.value - 2.0).abs() < 1e-12);
        assert!((v.d1 - 2.0).abs() < 1e-9);
        assert!(v.d2.abs() < 1e-6);
        let v = smooth_yosida_eval(&reg, -1.0).unwrap();
        assert_eq!(v.value, 0.0);
    }

    /// Frozen oracle: δ·∫₀¹ sρ(s) ds evaluated independently to 30 digits.
    #[test]
    fn smooth_yosida_at_kink_matches_frozen_oracle() {
        let reg = RegularizedFunction::new(NEG, 0.5).unwrap();
        let v = smooth_yosida_eval(&reg, 0.0).unwrap();
        // (1/δ)·δ²·∫₀¹ sρ(s) ds with δ = 0.5.
        assert!((v.value - 0.083_613_499_427_493_83).abs() < 1e-10, "{}", v.value);
    }

    #[test]
    fn property_examples() {
        let reg = RegularizedFunction::new(NEG, 0.1).unwrap();
        let rep = regularization_property_check(&reg, &uniform_grid(-2.0, 2.0, 401)).unwrap();
        assert!(rep.all_hold(), "{rep:?}");
        assert!(rep.min_margin() > 0.0);

        let reg = RegularizedFunction::new(HALF_SQUARE, 0.3).unwrap();
        for x in uniform_grid(-3.0, 3.0, 61) {
            let v = reg.raw(x).unwrap();
            assert!((v.value - reg.yosida(x).unwrap()).abs() < 1e-12);
        }

        // Reporting δ = 0.1 for a function built with δ = 0.05 breaks the slope bound.
        let reg = RegularizedFunction::new(NEG, 0.05).unwrap().with_reported_delta(0.1);
        let rep = regularization_property_check(&reg, &uniform_grid(-2.0, 2.0, 401)).unwrap();
        assert!(!rep.d1_bound_holds());
        // Understating δ loosens the slope bound instead.
        let reg = RegularizedFunction::new(NEG, 0.1).unwrap().with_reported_delta(0.05);
        let rep = regularization_property_check(&reg, &uniform_grid(-2.0, 2.0, 401)).unwrap();
        assert!(rep.d1_bound_holds());
    }

    #[test]
    fn i_delta_is_normalized() {
        for d in [0.5, 0.2, 0.05] {
            let r = make_i_delta(d).unwrap();
            assert!(r.eval(0.0).unwrap().value.abs() < 1e-14);
            assert!(r.shift <= 0.5 * d);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for graph in [NEG, MonotoneGraph::box_indicator(0.0, 1.0), MonotoneGraph::Logarithmic { slope: 0.0, eps_dom: 1e-9 }] {
            let reg = RegularizedFunction::new(graph, 0.2).unwrap();
            for x in [-0.013, 0.011, 0.02, 0.3, 0.97, 1.01] {
                let h = 1e-5;
                let p = reg.raw(x + h).unwrap();
                let m = reg.raw(x - h).unwrap();
                let c = reg.raw(x).unwrap();
                let fd1 = (p.value - m.value) / (2.0 * h);
                let fd2 = (p.d1 - m.d1) / (2.0 * h);
                assert!((fd1 - c.d1).abs() <= 1e-3 * c.d1.abs().max(1.0), "{graph:?} {x} {fd1} {}", c.d1);
                assert!((fd2 - c.d2).abs() <= 1e-3 * c.d2.abs().max(1.0), "{graph:?} {x} {fd2} {}", c.d2);
                let pp = reg.raw_potential(x + h).unwrap();
                let pm = reg.raw_potential(x - h).unwrap();
                assert!(((pp - pm) / (2.0 * h) - c.value).abs() < 1e-6 * (1.0 + c.value.abs()));
            }
        }
    }

    #[test]
    fn convergence_to_minimal_section() {
        for (graph, x) in [
            (HALF_SQUARE, 0.7),
            (MonotoneGraph::Logarithmic { slope: 0.2, eps_dom: 1e-9 }, 0.3),
            (MonotoneGraph::QuarticWell { c: 1.0, ell: 1.0 }, 0.8),
            (NEG, -0.4),
        ] {
            let mut prev = f64::INFINITY;
            for d in [0.2, 0.1, 0.05, 0.025] {
                let reg = RegularizedFunction::new(graph, d).unwrap();
                let err = (reg.raw(x).unwrap().value - graph.derivative(x).unwrap()).abs();
                assert!(err <= prev + 1e-14, "{graph:?} {d} {err} {prev}");
                prev = err;
            }
            assert!(prev < 0.1);
        }
    }

    #[test]
    fn prox_based_derivative_matches_analytic() {
        let graphs = [
            HALF_SQUARE,
            MonotoneGraph::Quadratic { k: 2.0, slope: -0.3 },
            MonotoneGraph::Logarithmic { slope: 0.5, eps_dom: 1e-9 },
            MonotoneGraph::QuarticWell { c: 1.5, ell: 2.0 },
        ];
        for g in graphs {
            for z in uniform_grid(-1.5, 2.5, 41) {
                let lambda = 0.1;
                let y = g.prox(lambda, z).unwrap();
                let (lo, hi) = g.domain();
                if y <= lo + 1e-6 || y >= hi - 1e-6 {
                    continue;
                }
                let via_prox = (z - y) / lambda;
                let exact = g.derivative(y).unwrap();
                assert!((via_prox - exact).abs() < 1e-8, "{g:?} {z} {via_prox} {exact}");
            }
        }
    }

    proptest! {
        #[test]
        fn prox_is_firmly_nonexpansive(x in -5.0f64..5.0, y in -5.0f64..5.0, lambda in 0.01f64..2.0, which in 0usize..5) {
            let g = [
                NEG,
                MonotoneGraph::box_indicator(0.0, 1.0),
                MonotoneGraph::Quadratic { k: 1.5, slope: 0.2 },
                MonotoneGraph::Logarithmic { slope: -0.4, eps_dom: 1e-9 },
                MonotoneGraph::QuarticWell { c: 2.0, ell: 2.0 },
            ][which];
            let px = g.prox(lambda, x).unwrap();
            let py = g.prox(lambda, y).unwrap();
            prop_assert!((px - py).abs() <= (x - y).abs() + 1e-12);
            prop_assert!((px - py) * (x - y) >= (px - py) * (px - py) - 1e-12);
            if x <= y {
                prop_assert!(px <= py + 1e-12);
            }
        }

        #[test]
        fn smooth_yosida_is_monotone(x in -2.0f64..2.0, dx in 0.0f64..0.1, which in 0usize..3) {
            let g = [NEG, MonotoneGraph::box_indicator(0.0, 1.0), MonotoneGraph::Logarithmic { slope: 0.0, eps_dom: 1e-9 }][which];
            let reg = RegularizedFunction::new(g, 0.1).unwrap();
            let a = reg.raw(x).unwrap().value;
            let b = reg.raw(x + dx).unwrap().value;
            prop_assert!(b >= a - 1e-12);
        }
    }
}
