//! Constitutive data: the modulation laws `a`, `b`, the elastic and viscous
//! moduli, the potential split `W = W̆ + W̌` and the Robin coefficients.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SimError};
use crate::regularization::{uniform_grid, MonotoneGraph, RegularizedFunction};

pub mod scenario;

pub use scenario::*;

/// Tolerance for the grid-based hypothesis checks.
pub const HYPOTHESIS_TOL: f64 = 1e-10;
/// Barrier offset used when evaluating the logarithmic potential near `{0, 1}`.
pub const EPS_DOM: f64 = 1e-9;

/// Scalar law `ℝ → ℝ` with first and second derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarLaw {
    Constant { value: f64 },
    Affine { slope: f64, intercept: f64 },
    /// `scale·max(r, 0)^power + offset`; at `r = 0` derivatives are one-sided from the right.
    PositivePartPower { scale: f64, power: f64, offset: f64 },
    Identity,
}

impl ScalarLaw {
    /// `max(r, 0)²`.
    pub fn quadratic_plus() -> Self {
        ScalarLaw::PositivePartPower { scale: 1.0, power: 2.0, offset: 0.0 }
    }

    pub fn constant(value: f64) -> Self {
        ScalarLaw::Constant { value }
    }

    pub fn value(&self, r: f64) -> f64 {
        match *self {
            ScalarLaw::Constant { value } => value,
            ScalarLaw::Affine { slope, intercept } => slope * r + intercept,
            ScalarLaw::PositivePartPower { scale, power, offset } => {
                if r > 0.0 {
                    scale * r.powf(power) + offset
                } else {
                    offset
                }
            }
            ScalarLaw::Identity => r,
        }
    }

    pub fn d1(&self, r: f64) -> f64 {
        match *self {
            ScalarLaw::Constant { .. } => 0.0,
            ScalarLaw::Affine { slope, .. } => slope,
            ScalarLaw::PositivePartPower { scale, power, .. } => {
                if r > 0.0 {
                    scale * power * r.powf(power - 1.0)
                } else if r == 0.0 && power == 1.0 {
                    scale
                } else {
                    0.0
                }
            }
            ScalarLaw::Identity => 1.0,
        }
    }

    pub fn d2(&self, r: f64) -> f64 {
        match *self {
            ScalarLaw::PositivePartPower { scale, power, .. } => {
                if r > 0.0 {
                    scale * power * (power - 1.0) * r.powf(power - 2.0)
                } else if r == 0.0 && power == 2.0 {
                    2.0 * scale
                } else if r == 0.0 && power < 2.0 && power > 1.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    }
}

/// Constitutive bundle of the one-dimensional model. The `ℓ` of
/// `ℓ`-convexity lives in [`PotentialSplit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialLaw {
    pub a: ScalarLaw,
    pub b: ScalarLaw,
    pub b_floor: f64,
    #[serde(rename = "C", alias = "c")]
    pub c: f64,
    #[serde(rename = "V", alias = "v")]
    pub v: f64,
    #[serde(default = "one")]
    pub growth_p: f64,
    #[serde(default = "one")]
    pub growth_q: f64,
    #[serde(default = "one")]
    pub gamma0: f64,
    #[serde(default)]
    pub gamma1: f64,
    #[serde(default)]
    pub gamma2: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for MaterialLaw {
    fn default() -> Self {
        MaterialLaw {
            a: ScalarLaw::quadratic_plus(),
            b: ScalarLaw::constant(1.0),
            b_floor: 1.0,
            c: 1.0,
            v: 1.0,
            growth_p: 1.0,
            growth_q: 1.0,
            gamma0: 1.0,
            gamma1: 0.0,
            gamma2: 0.0,
        }
    }
}

impl MaterialLaw {
    /// Nodal `a(χ)`.
    pub fn a_nodal(&self, chi: &[f64]) -> Vec<f64> {
        chi.iter().map(|&r| self.a.value(r)).collect()
    }

    pub fn b_nodal(&self, chi: &[f64]) -> Vec<f64> {
        chi.iter().map(|&r| self.b.value(r)).collect()
    }

    /// Boundary configuration accepted by the strong scheme: homogeneous Neumann.
    pub fn is_homogeneous_neumann(&self) -> bool {
        self.gamma0 > 0.0 && self.gamma1 == 0.0 && self.gamma2 == 0.0
    }
}

/// One hypothesis of the validation report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Grid point where the hypothesis fails (first offending point).
    pub witness: Option<f64>,
    /// Fitted constant for growth checks.
    pub fitted: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<HypothesisCheck>,
}

/// Checks that make up the first structural hypothesis on `a`, `b`, `C`, `V`.
const HYPOTHESIS1: [&str; 7] = [
    "C_positive",
    "V_positive",
    "gammas_nonnegative",
    "b_floor",
    "a_nondecreasing",
    "a_vanishes_nonpositive",
    "a_convex",
];

impl ValidationReport {
    pub fn get(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn passed(&self, name: &str) -> bool {
        self.get(name).map(|c| c.passed).unwrap_or(false)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn hypothesis1(&self) -> bool {
        HYPOTHESIS1.iter().all(|n| self.passed(n))
    }

    pub fn failures(&self) -> Vec<&HypothesisCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Default certification grid: 2001 points on `[−10, 10]`.
pub fn default_grid() -> Vec<f64> {
    uniform_grid(-10.0, 10.0, 2001)
}

fn check(name: &'static str, witness: Option<f64>, detail: impl Into<String>) -> HypothesisCheck {
    HypothesisCheck { name, passed: witness.is_none(), witness, fitted: None, detail: detail.into() }
}

fn scalar_check(name: &'static str, ok: bool, detail: impl Into<String>) -> HypothesisCheck {
    HypothesisCheck { name, passed: ok, witness: None, fitted: None, detail: detail.into() }
}

/// `max |f″(r)|/(|r|^p + 1)` over the grid and the point attaining it.
fn growth_fit(law: &ScalarLaw, p: f64, grid: &[f64]) -> (f64, f64) {
    let mut best = (0.0, grid[0]);
    for &r in grid {
        let q = law.d2(r).abs() / (r.abs().powf(p) + 1.0);
        if q > best.0 || q.is_nan() {
            best = (q, r);
        }
    }
    best
}

fn growth_check(name: &'static str, law: &ScalarLaw, p: f64, grid: &[f64]) -> HypothesisCheck {
    let (kappa, at) = growth_fit(law, p, grid);
    let finite = kappa.is_finite();
    HypothesisCheck {
        name,
        passed: finite,
        witness: (!finite).then_some(at),
        fitted: Some(kappa),
        detail: format!("fitted kappa {kappa} with exponent {p}, attained at r = {at}"),
    }
}

/// Checks the structural hypotheses on a sample grid. Failures are
/// reported with the first offending grid point.
pub fn validate_material(law: &MaterialLaw, grid: &[f64]) -> Result<ValidationReport> {
    if grid.is_empty() {
        return Err(invalid("validation grid is empty"));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let tol = HYPOTHESIS_TOL;
    let a: Vec<f64> = grid.iter().map(|&r| law.a.value(r)).collect();
    let mut checks = vec![
        scalar_check("C_positive", law.c > 0.0, format!("C = {}", law.c)),
        scalar_check("V_positive", law.v > 0.0, format!("V = {}", law.v)),
        scalar_check(
            "symmetry",
            true,
            "scalar moduli, symmetry conditions are vacuous in one dimension",
        ),
        scalar_check(
            "gammas_nonnegative",
            law.gamma0 >= 0.0 && law.gamma1 >= 0.0 && law.gamma2 >= 0.0,
            format!("gamma = ({}, {}, {})", law.gamma0, law.gamma1, law.gamma2),
        ),
        scalar_check(
            "growth_exponents",
            law.growth_p >= 1.0 && law.growth_q >= 1.0,
            format!("p = {}, q = {}", law.growth_p, law.growth_q),
        ),
    ];
    let b_bad = if law.b_floor > 0.0 {
        grid.iter().copied().find(|&r| law.b.value(r) < law.b_floor - tol)
    } else {
        Some(grid[0])
    };
    checks.push(check("b_floor", b_bad, format!("b ≥ {} on the grid", law.b_floor)));
    let mono_bad = (1..grid.len()).find(|&i| a[i] < a[i - 1] - tol * (1.0 + a[i - 1].abs())).map(|i| grid[i]);
    checks.push(check("a_nondecreasing", mono_bad, "a(r_{i+1}) ≥ a(r_i)"));
    let vanish_bad = grid.iter().zip(&a).find(|(&r, &v)| r <= 0.0 && v.abs() > tol).map(|(&r, _)| r);
    checks.push(check("a_vanishes_nonpositive", vanish_bad, "a(r) = 0 for r ≤ 0"));
    let convex_bad = (1..grid.len().saturating_sub(1))
        .find(|&i| {
            let (h0, h1) = (grid[i] - grid[i - 1], grid[i + 1] - grid[i]);
            // Divided second difference scaled back to a nodal quantity.
            let s = (a[i + 1] - a[i]) / h1 - (a[i] - a[i - 1]) / h0;
            s * h0.min(h1) < -tol * (1.0 + a[i].abs())
        })
        .map(|i| grid[i]);
    checks.push(check("a_convex", convex_bad, "second differences of a are nonnegative"));
    checks.push(growth_check("a_growth", &law.a, law.growth_p, &grid));
    checks.push(growth_check("b_growth", &law.b, law.growth_q, &grid));
    Ok(ValidationReport { checks })
}

/// Convex–concave split `W = W̆ + W̌` with `W̌(r) = −(ℓ/2) r²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSplit {
    /// Carrier of `∂W̆`; its potential is `W̆ − offset`.
    pub convex: MonotoneGraph,
    pub ell: f64,
    /// Constant added to `W̆`.
    pub offset: f64,
}

impl PotentialSplit {
    /// Closed hull of the admissible `χ` values.
    pub fn domain(&self) -> (f64, f64) {
        self.convex.domain()
    }

    /// Whether the domain is open (the logarithmic barrier).
    pub fn open_domain(&self) -> bool {
        matches!(self.convex, MonotoneGraph::Logarithmic { .. })
    }

    pub fn convex_value(&self, r: f64) -> f64 {
        self.convex.potential(r) + self.offset
    }

    pub fn concave_value(&self, r: f64) -> f64 {
        -0.5 * self.ell * r * r
    }

    pub fn concave_d1(&self, r: f64) -> f64 {
        -self.ell * r
    }

    pub fn concave_d2(&self) -> f64 {
        -self.ell
    }

    /// `W(r)`, `+∞` outside the domain.
    pub fn value(&self, r: f64) -> f64 {
        self.convex_value(r) + self.concave_value(r)
    }

    /// `W′(r)` where `W̆` is differentiable.
    pub fn d1(&self, r: f64) -> Option<f64> {
        self.convex.derivative(r).map(|d| d + self.concave_d1(r))
    }

    /// Lower bound of `W̆` on its domain, if known. Used for the coercivity
    /// threshold of the damage step.
    pub fn convex_lower_bound(&self) -> Option<f64> {
        match self.convex {
            MonotoneGraph::Interval { .. } => Some(self.offset),
            MonotoneGraph::Logarithmic { slope, .. } => Some(-(2f64.ln()) - slope.abs() + self.offset),
            MonotoneGraph::Quadratic { k, slope } => {
                if k > 0.0 {
                    Some(-slope * slope / (2.0 * k) + self.offset)
                } else if slope == 0.0 {
                    Some(self.offset)
                } else {
                    None
                }
            }
            MonotoneGraph::QuarticWell { .. } => Some(self.offset),
        }
    }

    /// Sampled invariants: the prox of `W̆` is firmly nonexpansive and
    /// monotone, and `W + (ℓ/2) r²` is convex on the domain part of the grid.
    pub fn check_invariants(&self, grid: &[f64]) -> Result<Option<f64>> {
        let lambda = 0.5;
        let mut prev: Option<(f64, f64)> = None;
        for &x in grid {
            let j = self.convex.prox(lambda, x)?;
            if let Some((xp, jp)) = prev {
                let d = (j - jp) * (x - xp);
                if j < jp - 1e-12 || (j - jp).powi(2) > d + 1e-12 {
                    return Ok(Some(x));
                }
            }
            prev = Some((x, j));
        }
        let (lo, hi) = self.domain();
        let pts: Vec<f64> = grid.iter().copied().filter(|&r| r > lo && r < hi).collect();
        for w in pts.windows(3) {
            let f = |r: f64| self.value(r) + 0.5 * self.ell * r * r;
            let (h0, h1) = (w[1] - w[0], w[2] - w[1]);
            let s = (f(w[2]) - f(w[1])) / h1 - (f(w[1]) - f(w[0])) / h0;
            if s * h0.min(h1) < -HYPOTHESIS_TOL * (1.0 + f(w[1]).abs()) {
                return Ok(Some(w[1]));
            }
        }
        Ok(None)
    }
}

fn param(params: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

fn check_keys(name: &str, params: &BTreeMap<String, f64>, allowed: &[&str]) -> Result<()> {
    for k in params.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(invalid(format!("unknown parameter `{k}` for potential `{name}`")));
        }
    }
    for (k, v) in params {
        if !v.is_finite() {
            return Err(invalid(format!("parameter `{k}` of potential `{name}` is not finite")));
        }
    }
    Ok(())
}

/// Potential presets.
///
/// * `quadratic {k = 1, ell = 0, slope = 0}`: `W̆ = k r²/2 + slope·r`.
/// * `logarithmic {c1, c2, c3}`: `W = r ln r + (1−r) ln(1−r) − c1 r² − c2 r − c3`, `ℓ = 2 c1`.
/// * `indicator_box {lo = 0, hi = 1, ell = 0}`: `W̆ = I_[lo,hi]`.
/// * `smooth_double_well {c = 1, ell = c}`: `W = c r²(1−r)²`, `W̆ = W + (ℓ/2) r²`.
pub fn make_potential(name: &str, params: &BTreeMap<String, f64>) -> Result<PotentialSplit> {
    let nonneg = |key: &str, v: f64| {
        if v < 0.0 {
            Err(invalid(format!("potential `{name}`: `{key}` must be nonnegative, got {v}")))
        } else {
            Ok(v)
        }
    };
    match name {
        "quadratic" => {
            check_keys(name, params, &["k", "ell", "slope"])?;
            let k = param(params, "k", 1.0);
            if k < 0.0 {
                return Err(invalid(format!(
                    "potential `quadratic`: k = {k} makes W + (ell/2) r² nonconvex"
                )));
            }
            Ok(PotentialSplit {
                convex: MonotoneGraph::Quadratic { k, slope: param(params, "slope", 0.0) },
                ell: nonneg("ell", param(params, "ell", 0.0))?,
                offset: 0.0,
            })
        }
        "logarithmic" => {
            check_keys(name, params, &["c1", "c2", "c3", "eps_dom"])?;
            let c1 = nonneg("c1", param(params, "c1", 1.0))?;
            let eps_dom = param(params, "eps_dom", EPS_DOM);
            if !(eps_dom > 0.0 && eps_dom < 0.5) {
                return Err(invalid(format!("potential `logarithmic`: eps_dom = {eps_dom} outside (0, 1/2)")));
            }
            Ok(PotentialSplit {
                convex: MonotoneGraph::Logarithmic { slope: -param(params, "c2", 0.0), eps_dom },
                ell: 2.0 * c1,
                offset: -param(params, "c3", 0.0),
            })
        }
        "indicator_box" => {
            check_keys(name, params, &["lo", "hi", "ell"])?;
            let (lo, hi) = (param(params, "lo", 0.0), param(params, "hi", 1.0));
            if !(lo <= hi) {
                return Err(invalid(format!("potential `indicator_box`: empty box [{lo}, {hi}]")));
            }
            Ok(PotentialSplit {
                convex: MonotoneGraph::box_indicator(lo, hi),
                ell: nonneg("ell", param(params, "ell", 0.0))?,
                offset: 0.0,
            })
        }
        "smooth_double_well" => {
            check_keys(name, params, &["c", "ell"])?;
            let c = nonneg("c", param(params, "c", 1.0))?;
            let ell = param(params, "ell", c);
            if ell < c {
                return Err(invalid(format!(
                    "potential `smooth_double_well`: ell = {ell} < c = {c} makes W + (ell/2) r² nonconvex"
                )));
            }
            Ok(PotentialSplit { convex: MonotoneGraph::QuarticWell { c, ell }, ell, offset: 0.0 })
        }
        other => Err(SimError::UnknownPreset(other.to_string())),
    }
}

/// Smooth regularization of `∂W̆`, translated so that `W̆′_δ(0) = 0`.
pub fn make_w_delta(split: &PotentialSplit, delta: f64) -> Result<RegularizedFunction> {
    RegularizedFunction::new(split.convex, delta)?.normalized_at_zero()
}
