//! Independent reference computations shared by the integration tests. None
//! of these call into the solver code they check.

#![allow(dead_code)]

use damage_core::discretization::{assemble_operators, build_mesh};
use damage_core::model::{PotentialSplit, ScalarLaw};
use damage_core::regularization::MonotoneGraph;
use damage_core::weak_stepper::DamageSubproblem;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Simpson's rule on `[a, b]`; exact for the cubic integrands that arise from
/// products of piecewise-linear functions.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
}

fn lerp(x0: f64, x1: f64, y0: f64, y1: f64, x: f64) -> f64 {
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Elementwise data of a nodal state on a uniform mesh.
pub struct OracleState<'a> {
    pub nodes: &'a [f64],
    pub u: &'a [f64],
    pub v: &'a [f64],
    pub chi: &'a [f64],
}

/// Energy of a nodal state computed element by element: kinetic and
/// gradient terms by Simpson's rule on the interpolants, elastic term with
/// the element average of `a`, potential by the per-element trapezoid rule.
pub fn energy_oracle(s: &OracleState, c: f64, a: impl Fn(f64) -> f64, w: impl Fn(f64) -> f64) -> f64 {
    let mut total = 0.0;
    for e in 0..s.nodes.len() - 1 {
        let (x0, x1) = (s.nodes[e], s.nodes[e + 1]);
        let h = x1 - x0;
        total += 0.5 * simpson(|x| lerp(x0, x1, s.v[e], s.v[e + 1], x).powi(2), x0, x1);
        let du = (s.u[e + 1] - s.u[e]) / h;
        let dchi = (s.chi[e + 1] - s.chi[e]) / h;
        let a_avg = 0.5 * (a(s.chi[e]) + a(s.chi[e + 1]));
        total += 0.5 * simpson(|_| a_avg * c * du * du, x0, x1);
        total += 0.5 * simpson(|_| dchi * dchi, x0, x1);
        total += 0.5 * h * (w(s.chi[e]) + w(s.chi[e + 1]));
    }
    total
}

/// Relative energy of `s` with respect to `t` for a smooth convex part `w`
/// with derivative `dw`, computed like [`energy_oracle`].
pub fn relative_energy_oracle(
    s: &OracleState,
    t: &OracleState,
    c: f64,
    a: impl Fn(f64) -> f64,
    w: impl Fn(f64) -> f64,
    dw: impl Fn(f64) -> f64,
) -> f64 {
    let mut total = 0.0;
    let bregman = |x: f64, y: f64| w(x) - w(y) - dw(y) * (x - y);
    for e in 0..s.nodes.len() - 1 {
        let (x0, x1) = (s.nodes[e], s.nodes[e + 1]);
        let h = x1 - x0;
        let dv0 = s.v[e] - t.v[e];
        let dv1 = s.v[e + 1] - t.v[e + 1];
        total += 0.5 * simpson(|x| lerp(x0, x1, dv0, dv1, x).powi(2), x0, x1);
        let du = ((s.u[e + 1] - t.u[e + 1]) - (s.u[e] - t.u[e])) / h;
        let a_avg = 0.5 * (a(s.chi[e]) + a(s.chi[e + 1]));
        total += 0.5 * h * a_avg * c * du * du;
        let dchi = ((s.chi[e + 1] - t.chi[e + 1]) - (s.chi[e] - t.chi[e])) / h;
        total += 0.5 * h * dchi * dchi;
        total += 0.5 * h * (bregman(s.chi[e], t.chi[e]) + bregman(s.chi[e + 1], t.chi[e + 1]));
    }
    total
}

/// Minimizer of `½xᵀHx + bᵀx` over `lo ≤ x ≤ hi` by enumerating every
/// assignment of each coordinate to its lower bound, its upper bound or the
/// free set. Strict convexity makes the best feasible candidate the answer.
pub fn box_qp_enumeration(h: &DMatrix<f64>, b: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let n = b.len();
    let objective = |x: &[f64]| {
        let xv = DVector::from_column_slice(x);
        0.5 * (xv.transpose() * h * &xv)[(0, 0)] + b.iter().zip(x).map(|(p, q)| p * q).sum::<f64>()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut state = vec![0u8; n];
        let mut c = code;
        let mut skip = false;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            match state[i] {
                0 => {
                    if !lo[i].is_finite() {
                        skip = true;
                    }
                    x[i] = lo[i];
                }
                1 => {
                    if !hi[i].is_finite() {
                        skip = true;
                    }
                    x[i] = hi[i];
                }
                _ => {}
            }
        }
        if skip {
            continue;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        if !free.is_empty() {
            let m = free.len();
            let mut hf = DMatrix::zeros(m, m);
            let mut rhs = DVector::zeros(m);
            for (p, &i) in free.iter().enumerate() {
                rhs[p] = -b[i];
                for j in 0..n {
                    if state[j] != 2 {
                        rhs[p] -= h[(i, j)] * x[j];
                    }
                }
                for (q, &j) in free.iter().enumerate() {
                    hf[(p, q)] = h[(i, j)];
                }
            }
            let sol = match hf.lu().solve(&rhs) {
                Some(s) => s,
                None => continue,
            };
            for (p, &i) in free.iter().enumerate() {
                x[i] = sol[p];
            }
        }
        let feasible = (0..n).all(|i| x[i] >= lo[i] - 1e-13 && x[i] <= hi[i] + 1e-13);
        if !feasible {
            continue;
        }
        let f = objective(&x);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, x));
        }
    }
    best.expect("a strictly convex box problem has a minimizer").1
}

/// Exact modal coefficient of `c̈ + Vλċ + Cλc = 0`.
pub fn damped_mode(lambda: f64, c: f64, v: f64, c0: f64, d0: f64, t: f64) -> f64 {
    let (p, q) = (v * lambda, c * lambda);
    let disc = p * p - 4.0 * q;
    if disc > 0.0 {
        let s = disc.sqrt();
        let (r1, r2) = ((-p + s) / 2.0, (-p - s) / 2.0);
        let b = (d0 - r1 * c0) / (r2 - r1);
        (c0 - b) * (r1 * t).exp() + b * (r2 * t).exp()
    } else if disc < 0.0 {
        let w = (-disc).sqrt() / 2.0;
        let s = -p / 2.0;
        (s * t).exp() * (c0 * (w * t).cos() + (d0 - s * c0) / w * (w * t).sin())
    } else {
        let s = -p / 2.0;
        (c0 + (d0 - s * c0) * t) * (s * t).exp()
    }
}

/// Time derivative of [`damped_mode`].
pub fn damped_mode_rate(lambda: f64, c: f64, v: f64, c0: f64, d0: f64, t: f64) -> f64 {
    let (p, q) = (v * lambda, c * lambda);
    let disc = p * p - 4.0 * q;
    if disc > 0.0 {
        let s = disc.sqrt();
        let (r1, r2) = ((-p + s) / 2.0, (-p - s) / 2.0);
        let b = (d0 - r1 * c0) / (r2 - r1);
        r1 * (c0 - b) * (r1 * t).exp() + r2 * b * (r2 * t).exp()
    } else if disc < 0.0 {
        let w = (-disc).sqrt() / 2.0;
        let s = -p / 2.0;
        let b = (d0 - s * c0) / w;
        s * damped_mode(lambda, c, v, c0, d0, t) + (s * t).exp() * w * (b * (w * t).cos() - c0 * (w * t).sin())
    } else {
        let s = -p / 2.0;
        (d0 - s * c0) * (s * t).exp() + s * damped_mode(lambda, c, v, c0, d0, t)
    }
}

/// Random damage subproblem on at most eight nodes together with its
/// quadratic data `(H, b, lo, hi)`.
pub fn random_subproblem(rng: &mut ChaCha8Rng) -> (DamageSubproblem, DMatrix<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = rng.gen_range(3..=8);
    let ops = assemble_operators(&build_mesh(n, rng.gen_range(0.5..2.0)).unwrap());
    let tau = rng.gen_range(0.01..0.5);
    let upper: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let load: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
    let ell = rng.gen_range(0.0..2.0);
    let boxed = rng.gen_bool(0.5);
    let (potential, a, curvature, slope, a_slope) = if boxed {
        let p = PotentialSplit { convex: MonotoneGraph::box_indicator(0.0, 1.0), ell, offset: 0.0 };
        (p, ScalarLaw::quadratic_plus(), 0.0, 0.0, 0.0)
    } else {
        let (k, s) = (rng.gen_range(0.0..2.0), rng.gen_range(-1.0..1.0));
        let p = PotentialSplit { convex: MonotoneGraph::Quadratic { k, slope: s }, ell, offset: 0.0 };
        let a_slope = rng.gen_range(0.0..2.0);
        (p, ScalarLaw::Affine { slope: a_slope, intercept: 0.1 }, k, s, a_slope)
    };
    let sub = DamageSubproblem {
        tau,
        weights: ops.weights.clone(),
        stiffness: ops.stiffness.clone(),
        potential,
        a,
        drift: upper.iter().map(|&r| -ell * r).collect(),
        load: load.clone(),
        upper: upper.clone(),
    };
    let mut h = ops.stiffness.to_dense();
    let mut b = vec![0.0; n];
    for i in 0..n {
        let m = ops.weights[i];
        // On the box, a(χ) g = χ² g since χ ≥ 0.
        let a_curv = if boxed { 2.0 * load[i] } else { 0.0 };
        h[(i, i)] += m * (1.0 / tau + curvature + a_curv);
        b[i] = m * (-upper[i] / tau + slope + sub.drift[i] + a_slope * load[i]);
    }
    let (lo, hi) = if boxed {
        (vec![0.0; n], upper.iter().map(|u| u.min(1.0)).collect())
    } else {
        (vec![f64::NEG_INFINITY; n], upper.clone())
    };
    (sub, h, b, lo, hi)
}
