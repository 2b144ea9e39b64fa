//! Uniform 1D meshes, piecewise-linear finite-element operators and the Neumann eigenbasis.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SimError};

pub const TOL_EIG: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh1D {
    pub n: usize,
    pub length: f64,
    pub h: f64,
    pub nodes: Vec<f64>,
}

pub fn build_mesh(n: usize, length: f64) -> Result<Mesh1D> {
    if n < 3 {
        return Err(invalid(format!("mesh needs at least 3 nodes, got {n}")));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(invalid(format!("domain length must be positive, got {length}")));
    }
    let h = length / (n - 1) as f64;
    let mut nodes: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    nodes[n - 1] = length;
    Ok(Mesh1D { n, length, h, nodes })
}

impl Mesh1D {
    pub fn elements(&self) -> usize {
        self.n - 1
    }
}

/// Symmetric tridiagonal matrix stored by its diagonal and first off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn zeros(n: usize) -> Self {
        Self { diag: vec![0.0; n], off: vec![0.0; n.saturating_sub(1)] }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self { diag: d.to_vec(), off: vec![0.0; d.len().saturating_sub(1)] }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.diag.len();
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
    }

    /// `xᵀAx` written as `Σ rᵢxᵢ² − Σ aᵢ,ᵢ₊₁(xᵢ₊₁ − xᵢ)²` with row sums `rᵢ`,
    /// which avoids cancellation for stiffness matrices.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let n = self.diag.len();
        let mut s = 0.0;
        for i in 0..n {
            let left = if i > 0 { self.off[i - 1] } else { 0.0 };
            let right = if i + 1 < n { self.off[i] } else { 0.0 };
            s += (self.diag[i] + left + right) * x[i] * x[i];
        }
        for i in 0..self.off.len() {
            let d = x[i + 1] - x[i];
            s -= self.off[i] * d * d;
        }
        s
    }

    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.diag.len() {
            s += self.diag[i] * x[i] * y[i];
        }
        for i in 0..self.off.len() {
            s += self.off[i] * (x[i] * y[i + 1] + x[i + 1] * y[i]);
        }
        s
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &SymTridiag) -> SymTridiag {
        SymTridiag {
            diag: self.diag.iter().zip(&other.diag).map(|(a, b)| a + c * b).collect(),
            off: self.off.iter().zip(&other.off).map(|(a, b)| a + c * b).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> SymTridiag {
        SymTridiag {
            diag: self.diag.iter().map(|a| c * a).collect(),
            off: self.off.iter().map(|a| c * a).collect(),
        }
    }

    /// LDLᵀ solve without pivoting (Thomas algorithm). Fails on a vanishing pivot.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.diag.len();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        let mut y = rhs.to_vec();
        d[0] = self.diag[0];
        for i in 1..n {
            if d[i - 1] == 0.0 || !d[i - 1].is_finite() {
                return Err(SimError::Singular(format!("zero pivot at row {}", i - 1)));
            }
            l[i - 1] = self.off[i - 1] / d[i - 1];
            d[i] = self.diag[i] - l[i - 1] * self.off[i - 1];
            y[i] -= l[i - 1] * y[i - 1];
        }
        if d[n - 1] == 0.0 || !d[n - 1].is_finite() {
            return Err(SimError::Singular(format!("zero pivot at row {}", n - 1)));
        }
        for i in 0..n {
            y[i] /= d[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            y[i] -= l[i] * y[i + 1];
        }
        Ok(y)
    }

    /// Solves the system restricted to `free` rows/columns; fixed rows return zero.
    pub fn solve_masked(&self, free: &[bool], rhs: &[f64]) -> Result<Vec<f64>> {
        let mut m = self.clone();
        let n = self.diag.len();
        let mut b = rhs.to_vec();
        for i in 0..n {
            if !free[i] {
                m.diag[i] = 1.0;
                b[i] = 0.0;
                if i > 0 {
                    m.off[i - 1] = 0.0;
                }
                if i + 1 < n {
                    m.off[i] = 0.0;
                }
            }
        }
        m.solve(&b)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = self.diag[i];
        }
        for i in 0..n.saturating_sub(1) {
            a[(i, i + 1)] = self.off[i];
            a[(i + 1, i)] = self.off[i];
        }
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MassKind {
    #[default]
    Consistent,
    Lumped,
}

/// P1 operators on a uniform mesh.
#[derive(Debug, Clone)]
pub struct Operators {
    pub mesh: Mesh1D,
    pub mass_kind: MassKind,
    pub mass_consistent: SymTridiag,
    /// Lumped mass = trapezoid quadrature weights.
    pub weights: Vec<f64>,
    /// Stiffness of −∂ₓ(∂ₓ·) with natural (Neumann) boundary rows.
    pub stiffness: SymTridiag,
    pub trace_left: usize,
    pub trace_right: usize,
}

pub fn assemble_operators(mesh: &Mesh1D) -> Operators {
    assemble_operators_with(mesh, MassKind::Consistent)
}

pub fn assemble_operators_with(mesh: &Mesh1D, mass_kind: MassKind) -> Operators {
    let n = mesh.n;
    let h = mesh.h;
    let mut mc = SymTridiag::zeros(n);
    let mut weights = vec![0.0; n];
    for e in 0..n - 1 {
        mc.diag[e] += h / 3.0;
        mc.diag[e + 1] += h / 3.0;
        mc.off[e] = h / 6.0;
        weights[e] += 0.5 * h;
        weights[e + 1] += 0.5 * h;
    }
    let stiffness = weighted_stiffness_on(mesh, &vec![1.0; n - 1]);
    Operators {
        mesh: mesh.clone(),
        mass_kind,
        mass_consistent: mc,
        weights,
        stiffness,
        trace_left: 0,
        trace_right: n - 1,
    }
}

fn weighted_stiffness_on(mesh: &Mesh1D, coeff: &[f64]) -> SymTridiag {
    let n = mesh.n;
    let inv_h = 1.0 / mesh.h;
    let mut s = SymTridiag::zeros(n);
    for e in 0..n - 1 {
        let k = coeff[e] * inv_h;
        s.diag[e] += k;
        s.diag[e + 1] += k;
        s.off[e] = -k;
    }
    s
}

impl Operators {
    pub fn n(&self) -> usize {
        self.mesh.n
    }

    pub fn h(&self) -> f64 {
        self.mesh.h
    }

    /// The mass matrix selected by `mass_kind`.
    pub fn mass(&self) -> SymTridiag {
        match self.mass_kind {
            MassKind::Consistent => self.mass_consistent.clone(),
            MassKind::Lumped => SymTridiag::from_diagonal(&self.weights),
        }
    }

    /// Stiffness with a piecewise-constant coefficient per element.
    pub fn weighted_stiffness(&self, element_coeff: &[f64]) -> SymTridiag {
        weighted_stiffness_on(&self.mesh, element_coeff)
    }

    /// Element-wise derivative of a nodal P1 field.
    pub fn element_gradient(&self, u: &[f64]) -> Vec<f64> {
        let inv_h = 1.0 / self.mesh.h;
        u.windows(2).map(|w| (w[1] - w[0]) * inv_h).collect()
    }

    /// Average of a nodal quantity over each element (trapezoid rule).
    pub fn element_average(&self, nodal: &[f64]) -> Vec<f64> {
        nodal.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Lumps an element density onto nodes: `out_i = Σ_{e∋i} (h/2) q_e / m_i`.
    pub fn element_to_nodal_density(&self, element: &[f64]) -> Vec<f64> {
        let n = self.mesh.n;
        let half_h = 0.5 * self.mesh.h;
        let mut out = vec![0.0; n];
        for (e, q) in element.iter().enumerate() {
            out[e] += half_h * q;
            out[e + 1] += half_h * q;
        }
        for (o, m) in out.iter_mut().zip(&self.weights) {
            *o /= m;
        }
        out
    }

    /// `S x` for the unit-coefficient stiffness, assembled from element
    /// differences so that no large terms cancel.
    pub fn stiffness_apply(&self, x: &[f64]) -> Vec<f64> {
        let inv_h = 1.0 / self.mesh.h;
        let mut out = vec![0.0; x.len()];
        for e in 0..x.len() - 1 {
            let d = (x[e + 1] - x[e]) * inv_h;
            out[e] -= d;
            out[e + 1] += d;
        }
        out
    }

    /// Trapezoid (lumped) integral of a nodal field.
    pub fn integrate_nodal(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    /// Discrete L² norm with the selected mass.
    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        self.mass().quad_form(f).max(0.0).sqrt()
    }
}

/// Square band matrix with `kl` sub- and `ku` superdiagonals, solved by
/// Gaussian elimination with partial pivoting.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row `i` stores columns `i − kl ..= i + kl + ku` (room for pivoting fill).
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandMatrix { n, kl, ku, data: vec![0.0; n * (2 * kl + ku + 1)] }
    }

    fn width(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width() + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.kl + self.ku || j >= self.n {
            0.0
        } else {
            self.data[self.index(i, j)]
        }
    }

    /// Adds `v` to entry `(i, j)`, which must lie inside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(j + self.kl >= i && j <= i + self.ku && j < self.n, "entry ({i}, {j}) outside the band");
        let k = self.index(i, j);
        self.data[k] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Solves `A x = b`, consuming the matrix.
    pub fn solve(mut self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let (kl, reach) = (self.kl, self.kl + self.ku);
        let mut b = rhs.to_vec();
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let p = (k..=last)
                .max_by(|&a, &c| self.get(a, k).abs().total_cmp(&self.get(c, k).abs()))
                .unwrap_or(k);
            let pivot = self.get(p, k);
            if !(pivot.abs() > 1e-300 && pivot.abs() > f64::EPSILON * 1e-6 * scale) {
                return Err(SimError::Singular(format!("band matrix pivot {pivot:e} at row {k}")));
            }
            let jmax = (k + reach).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let (ik, ip) = (self.index(k, j), self.index(p, j));
                    self.data.swap(ik, ip);
                }
                b.swap(k, p);
            }
            for i in k + 1..=last {
                let l = self.get(i, k) / pivot;
                if l == 0.0 {
                    continue;
                }
                for j in k..=jmax {
                    let v = self.data[self.index(k, j)];
                    let idx = self.index(i, j);
                    self.data[idx] -= l * v;
                }
                b[i] -= l * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let jmax = (k + reach).min(n - 1);
            let mut s = b[k];
            for j in k + 1..=jmax {
                s -= self.data[self.index(k, j)] * x[j];
            }
            x[k] = s / self.data[self.index(k, k)];
        }
        Ok(x)
    }
}

/// First `n + 1` eigenpairs of `V·S y = λ M y` with the consistent mass, M-orthonormal.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    pub values: Vec<f64>,
    /// Column k holds nodal values of mode k.
    pub vectors: DMatrix<f64>,
    pub residuals: Vec<f64>,
}

impl EigenBasis {
    pub fn modes(&self) -> usize {
        self.values.len()
    }

    pub fn mode(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k).iter().copied().collect()
    }

    /// Nodal field from modal coefficients.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let c = nalgebra::DVector::from_column_slice(coeffs);
        (&self.vectors * c).iter().copied().collect()
    }

    /// Modal coefficients `yₖᵀ M f` of a nodal field.
    pub fn project(&self, ops: &Operators, f: &[f64]) -> Vec<f64> {
        let mf = ops.mass_consistent.matvec(f);
        let mf = nalgebra::DVector::from_vec(mf);
        (self.vectors.transpose() * mf).iter().copied().collect()
    }

    /// One column per mode, preceded by the node coordinate.
    pub fn to_csv(&self, mesh: &Mesh1D) -> String {
        let mut out = String::from("x");
        for k in 0..self.modes() {
            out.push_str(&format!(",mode_{k}"));
        }
        out.push('\n');
        for i in 0..mesh.n {
            out.push_str(&format!("{:.17e}", mesh.nodes[i]));
            for k in 0..self.modes() {
                out.push_str(&format!(",{:.17e}", self.vectors[(i, k)]));
            }
            out.push('\n');
        }
        out
    }
}

pub fn neumann_eigenbasis(ops: &Operators, v: f64, n: usize) -> Result<EigenBasis> {
    let mesh = &ops.mesh;
    let nn = mesh.n;
    if n + 1 >= nn {
        return Err(invalid(format!("mode count {n} too large for {nn} nodes")));
    }
    if !(v > 0.0) {
        return Err(invalid("viscosity modulus must be positive"));
    }
    let m = &ops.mass_consistent;
    let k = ops.stiffness.scaled(v);
    let md = m.to_dense();
    let chol = md
        .clone()
        .cholesky()
        .ok_or_else(|| SimError::Singular("mass matrix not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| SimError::Singular("Cholesky factor not invertible".into()))?;
    let c = &linv * k.to_dense() * linv.transpose();
    let c = 0.5 * (&c + c.transpose());
    let eig = SymmetricEigen::try_new(c, f64::EPSILON, 10_000).ok_or(SimError::NonConvergence {
        solver: "symmetric eigensolver",
        iterations: 10_000,
        residual: f64::NAN,
    })?;
    let mut order: Vec<usize> = (0..nn).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut values = Vec::with_capacity(n + 1);
    let mut vectors = DMatrix::zeros(nn, n + 1);
    let mut residuals = Vec::with_capacity(n + 1);
    let lt = linv.transpose();
    for (col, &idx) in order.iter().take(n + 1).enumerate() {
        let mut y: Vec<f64> = if col == 0 {
            vec![1.0; nn]
        } else {
            (&lt * eig.eigenvectors.column(idx)).iter().copied().collect()
        };
        let mut lambda = if col == 0 { 0.0 } else { eig.eigenvalues[idx] };
        if col > 0 {
            for _ in 0..2 {
                y = inverse_iteration(&k, m, lambda, &y)?;
                orthogonalize(m, &mut y, &vectors, col);
                normalize(m, &mut y);
                lambda = k.quad_form(&y);
            }
        }
        normalize(m, &mut y);
        if y[0] < 0.0 {
            y.iter_mut().for_each(|x| *x = -*x);
        }
        let ky = k.matvec(&y);
        let my = m.matvec(&y);
        let res: f64 = ky
            .iter()
            .zip(&my)
            .zip(&ops.weights)
            .map(|((a, b), w)| (a - lambda * b).powi(2) / w)
            .sum::<f64>()
            .sqrt();
        let scaled = res / lambda.max(1.0);
        if scaled > TOL_EIG {
            return Err(SimError::NonConvergence {
                solver: "eigenvector refinement",
                iterations: 2,
                residual: scaled,
            });
        }
        for i in 0..nn {
            vectors[(i, col)] = y[i];
        }
        values.push(lambda);
        residuals.push(scaled);
    }
    Ok(EigenBasis { values, vectors, residuals })
}

fn inverse_iteration(k: &SymTridiag, m: &SymTridiag, shift: f64, y: &[f64]) -> Result<Vec<f64>> {
    // Perturb the shift slightly so the factorization stays nonsingular.
    let sigma = shift * (1.0 - 1e-12) - 1e-14;
    let a = k.axpy(-sigma, m);
    a.solve(&m.matvec(y))
}

fn orthogonalize(m: &SymTridiag, y: &mut [f64], basis: &DMatrix<f64>, upto: usize) {
    let my = m.matvec(y);
    for j in 0..upto {
        let col = basis.column(j);
        let c: f64 = col.iter().zip(&my).map(|(a, b)| a * b).sum();
        for (yi, bi) in y.iter_mut().zip(col.iter()) {
            *yi -= c * bi;
        }
    }
}

fn normalize(m: &SymTridiag, y: &mut [f64]) {
    let nrm = m.quad_form(y).sqrt();
    y.iter_mut().for_each(|x| *x /= nrm);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mesh_examples() {
        let m = build_mesh(3, 1.0).unwrap();
        assert_eq!(m.nodes, vec![0.0, 0.5, 1.0]);
        assert_eq!(m.h, 0.5);
        assert!(build_mesh(2, 1.0).is_err());
        assert!((build_mesh(101, 2.0).unwrap().h - 0.02).abs() < 1e-15);
    }

    #[test]
    fn three_node_stiffness_matches_symbolic_integration() {
        let ops = assemble_operators(&build_mesh(3, 1.0).unwrap());
        let s = ops.stiffness.to_dense();
        assert_eq!(s.row(1).iter().copied().collect::<Vec<_>>(), vec![-2.0, 4.0, -2.0]);
        // ∫|ξ'|² for ξ = (0, 1, 3): slopes 2 and 4 over halves.
        let xi = [0.0, 1.0, 3.0];
        assert!((ops.stiffness.quad_form(&xi) - (4.0 * 0.5 + 16.0 * 0.5)).abs() < 1e-14);
    }

    #[test]
    fn kernel_and_mass() {
        for n in [3, 7, 50] {
            let ops = assemble_operators(&build_mesh(n, 1.7).unwrap());
            let one = vec![1.0; n];
            assert!(ops.stiffness.matvec(&one).iter().all(|v| v.abs() < 1e-12));
            assert!((ops.mass_consistent.quad_form(&one) - 1.7).abs() < 1e-12);
            assert!((ops.weights.iter().sum::<f64>() - 1.7).abs() < 1e-12);
        }
    }

    #[test]
    fn tridiagonal_solve_matches_dense() {
        let a = SymTridiag { diag: vec![4.0, 5.0, 6.0, 3.0], off: vec![1.0, -2.0, 0.5] };
        let b = [1.0, 2.0, -1.0, 0.25];
        let x = a.solve(&b).unwrap();
        let r = a.matvec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-13);
        }
        let xm = a.solve_masked(&[true, false, true, true], &b).unwrap();
        assert_eq!(xm[1], 0.0);
    }

    #[test]
    fn eigenvalues_approach_cosine_modes() {
        let ops = assemble_operators(&build_mesh(401, 1.0).unwrap());
        let basis = neumann_eigenbasis(&ops, 1.0, 3).unwrap();
        assert_eq!(basis.values[0], 0.0);
        for k in 1..=3 {
            let exact = (k as f64 * std::f64::consts::PI).powi(2);
            assert!((basis.values[k] - exact).abs() / exact < 1e-3);
        }
        let b4 = neumann_eigenbasis(&ops, 4.0, 3).unwrap();
        for k in 1..=3 {
            assert!((b4.values[k] / basis.values[k] - 4.0).abs() < 1e-10);
        }
        // Mode 1 against √2·cos(πx).
        let y = basis.mode(1);
        let diff: Vec<f64> = ops
            .mesh
            .nodes
            .iter()
            .zip(&y)
            .map(|(x, v)| v - 2f64.sqrt() * (std::f64::consts::PI * x).cos())
            .collect();
        assert!(ops.l2_norm(&diff) < 1e-2);
    }

    #[test]
    fn eigenbasis_is_m_orthonormal_with_zero_mean() {
        let ops = assemble_operators(&build_mesh(61, 2.0).unwrap());
        let basis = neumann_eigenbasis(&ops, 1.3, 8).unwrap();
        for i in 0..=8 {
            for j in 0..=8 {
                let g = ops.mass_consistent.bilinear(&basis.mode(i), &basis.mode(j));
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((g - target).abs() < TOL_EIG, "{i} {j} {g}");
            }
            if i > 0 {
                let mean = ops.mass_consistent.bilinear(&basis.mode(i), &vec![1.0; 61]);
                assert!(mean.abs() < TOL_EIG);
            }
            assert!(basis.residuals[i] <= TOL_EIG);
        }
        let c = basis.project(&ops, &basis.mode(3));
        assert!((c[3] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn eigenbasis_rejects_too_many_modes() {
        let ops = assemble_operators(&build_mesh(5, 1.0).unwrap());
        assert!(neumann_eigenbasis(&ops, 1.0, 4).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn stiffness_is_semidefinite(xi in proptest::collection::vec(-10.0f64..10.0, 12)) {
            let ops = assemble_operators(&build_mesh(12, 1.0).unwrap());
            let q = ops.stiffness.quad_form(&xi);
            prop_assert!(q >= -1e-12);
            let spread = xi.iter().cloned().fold(f64::MIN, f64::max) - xi.iter().cloned().fold(f64::MAX, f64::min);
            if spread > 1e-6 {
                prop_assert!(q > 0.0);
            }
        }

        #[test]
        fn constants_have_zero_energy(c in -100.0f64..100.0) {
            let ops = assemble_operators(&build_mesh(9, 3.0).unwrap());
            prop_assert!(ops.stiffness.quad_form(&[c; 9]).abs() < 1e-10 * (1.0 + c * c));
        }
    }

    #[test]
    fn band_solver_matches_dense_with_pivoting() {
        let n = 9;
        let mut a = BandMatrix::zeros(n, 3, 3);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(3)..=(i + 3).min(n - 1) {
                // Small diagonal forces row exchanges.
                let v = if i == j { 1e-3 * (i as f64 + 1.0) } else { ((i * 7 + j * 3) % 11) as f64 - 5.0 };
                a.add(i, j, v);
                dense[(i, j)] = v;
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = a.clone().solve(&b).unwrap();
        let xd = dense.lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-10 * (1.0 + xd[i].abs()), "{i}: {} vs {}", x[i], xd[i]);
        }
        let r = a.matvec(&x);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn stiffness_apply_matches_matvec() {
        let ops = assemble_operators(&build_mesh(17, 1.3).unwrap());
        let x: Vec<f64> = ops.mesh.nodes.iter().map(|t| (3.0 * t).cos() + t * t).collect();
        let a = ops.stiffness_apply(&x);
        let b = ops.stiffness.matvec(&x);
        for i in 0..x.len() {
            assert!((a[i] - b[i]).abs() < 1e-12);
        }
    }
}
