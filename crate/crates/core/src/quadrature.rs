//! Adaptive Gauss–Legendre integration shared by the regularization and forcing code.

use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Result, SimError};

const NODES: usize = 64;
const MAX_DEPTH: u32 = 40;

fn rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(NODES).expect("degree >= 2"))
}

/// Integrates `f` over `[a, b]` with the 64-node rule, bisecting until the two halves agree
/// with the whole to `tol` (absolute, split across subintervals).
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let whole = rule().integrate(a, b, f);
    recurse(f, a, b, whole, tol, 0)
}

fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> Result<f64> {
    let m = 0.5 * (a + b);
    let left = rule().integrate(a, m, f);
    let right = rule().integrate(m, b, f);
    let refined = left + right;
    if (refined - whole).abs() <= tol || (b - a).abs() < 1e-300 {
        return Ok(refined);
    }
    if depth >= MAX_DEPTH {
        return Err(SimError::Quadrature { a, b });
    }
    Ok(recurse(f, a, m, left, 0.5 * tol, depth + 1)? + recurse(f, m, b, right, 0.5 * tol, depth + 1)?)
}

/// Integrates over `[a, b]` split at the given interior breakpoints (kinks of the integrand).
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, breaks: &[f64], tol: f64) -> Result<f64> {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&p| p > a && p < b).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut total = 0.0;
    let mut lo = a;
    let pieces = pts.len() + 1;
    for &p in pts.iter().chain(std::iter::once(&b)) {
        total += integrate(f, lo, p, tol / pieces as f64)?;
        lo = p;
    }
    Ok(total)
}

fn rule3(a: f64, b: f64, f: &impl Fn(f64) -> [f64; 3]) -> [f64; 3] {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    let mut acc = [0.0; 3];
    for &(x, w) in rule().as_node_weight_pairs() {
        let v = f(mid + half * x);
        for k in 0..3 {
            acc[k] += w * v[k];
        }
    }
    acc.map(|v| v * half)
}

/// Vector-valued variant of [`integrate_with_breaks`] with one absolute tolerance per component.
pub fn integrate3_with_breaks(
    f: &impl Fn(f64) -> [f64; 3],
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: [f64; 3],
) -> Result<[f64; 3]> {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&p| p > a && p < b).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let pieces = (pts.len() + 1) as f64;
    let tol = tol.map(|t| t / pieces);
    let mut total = [0.0; 3];
    let mut lo = a;
    for &p in pts.iter().chain(std::iter::once(&b)) {
        let whole = rule3(lo, p, f);
        let part = recurse3(f, lo, p, whole, tol, 0)?;
        for k in 0..3 {
            total[k] += part[k];
        }
        lo = p;
    }
    Ok(total)
}

fn recurse3(
    f: &impl Fn(f64) -> [f64; 3],
    a: f64,
    b: f64,
    whole: [f64; 3],
    tol: [f64; 3],
    depth: u32,
) -> Result<[f64; 3]> {
    let m = 0.5 * (a + b);
    let left = rule3(a, m, f);
    let right = rule3(m, b, f);
    let refined = [left[0] + right[0], left[1] + right[1], left[2] + right[2]];
    if (0..3).all(|k| (refined[k] - whole[k]).abs() <= tol[k]) {
        return Ok(refined);
    }
    if depth >= MAX_DEPTH {
        return Err(SimError::Quadrature { a, b });
    }
    let half = tol.map(|t| 0.5 * t);
    let l = recurse3(f, a, m, left, half, depth + 1)?;
    let r = recurse3(f, m, b, right, half, depth + 1)?;
    Ok([l[0] + r[0], l[1] + r[1], l[2] + r[2]])
}
