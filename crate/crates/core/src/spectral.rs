//! Hermitian linear algebra: validated Hermitian matrices, a deterministic
//! eigen-solver, Schatten norms and the functional calculus `f(H)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::function::ScalarFn;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Entrywise tolerance for `a_ij = conj(a_ji)` on construction.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Spectra handled by the `|x|^p` calculus must stay inside `[-WORKING_BOUND, WORKING_BOUND]`.
pub const WORKING_BOUND: f64 = 2.0;

const JACOBI_MAX_SWEEPS: usize = 80;

/// A complex self-adjoint matrix. The stored entries are exactly Hermitian:
/// the constructor averages `a_ij` with `conj(a_ji)` after validating the tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    entries: CMatrix,
}

impl HermitianMatrix {
    pub fn new(entries: CMatrix) -> Result<Self> {
        let (rows, cols) = entries.shape();
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        if rows == 0 {
            return Err(Error::EmptyMatrix);
        }
        let mut deviation = 0.0f64;
        for i in 0..rows {
            for j in i..rows {
                let d = (entries[(i, j)] - entries[(j, i)].conj()).norm();
                if d.is_nan() {
                    deviation = f64::NAN;
                } else {
                    deviation = deviation.max(d);
                }
            }
        }
        if !(deviation <= HERMITIAN_TOL) {
            return Err(Error::NotHermitian { deviation, tolerance: HERMITIAN_TOL });
        }
        let mut entries = entries;
        for i in 0..rows {
            entries[(i, i)] = C64::new(entries[(i, i)].re, 0.0);
            for j in (i + 1)..rows {
                let avg = (entries[(i, j)] + entries[(j, i)].conj()) * 0.5;
                entries[(i, j)] = avg;
                entries[(j, i)] = avg.conj();
            }
        }
        Ok(Self { entries })
    }

    /// Hermitian part `(A + A*)/2` of an arbitrary square matrix.
    pub fn hermitian_part(a: &CMatrix) -> Result<Self> {
        let (rows, cols) = a.shape();
        if rows != cols {
            return Err(Error::NotSquare { rows, cols });
        }
        Self::new((a + a.adjoint()) * C64::new(0.5, 0.0))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Result<Self> {
        let d = diag.len();
        let mut m = CMatrix::zeros(d, d);
        for (i, &x) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(x, 0.0);
        }
        Self::new(m)
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        let mut m = CMatrix::zeros(d, d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::NotSquare { rows: d, cols: row.len() });
            }
            for (j, &x) in row.iter().enumerate() {
                m[(i, j)] = C64::new(x, 0.0);
            }
        }
        Self::new(m)
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(CMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(CMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_matrix(self) -> CMatrix {
        self.entries
    }

    /// `self + t * other`, still exactly Hermitian.
    pub fn add_scaled(&self, t: f64, other: &HermitianMatrix) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Self::new(&self.entries + &other.entries * C64::new(t, 0.0))
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { entries: &self.entries * C64::new(c, 0.0) }
    }

    pub fn eigen(&self) -> Result<SpectralDecomposition> {
        eigendecompose(self)
    }

    /// `(sum |lambda_i|^p)^(1/p)`.
    pub fn schatten_norm(&self, p: f64) -> Result<f64> {
        Ok(lp_norm(&self.eigen()?.eigenvalues, p))
    }

    pub fn operator_norm(&self) -> Result<f64> {
        Ok(self.eigen()?.spectral_radius())
    }

    pub fn to_json(&self) -> String {
        MatrixJson::from_matrix(&self.entries).to_string()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::new(MatrixJson::parse(text)?.to_matrix()?)
    }
}

/// Eigensystem of a Hermitian matrix: ascending eigenvalues and a unitary
/// matrix whose columns are the matching eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `U diag(g(lambda)) U*` for a complex-valued `g`.
    pub fn map_complex(&self, g: impl Fn(f64) -> C64) -> CMatrix {
        let u = &self.eigenvectors;
        let d = self.dim();
        let mut scaled = u.clone();
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            let gj = g(lam);
            for i in 0..d {
                scaled[(i, j)] *= gj;
            }
        }
        scaled * u.adjoint()
    }

    /// `U diag(g(lambda)) U*` for a real-valued `g`.
    pub fn map(&self, g: impl Fn(f64) -> f64) -> CMatrix {
        self.map_complex(|x| C64::new(g(x), 0.0))
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.map(|x| x)
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
    }

    pub fn min_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().fold(f64::INFINITY, |acc, x| acc.min(x.abs()))
    }

    /// `sum_i g(lambda_i)`, i.e. `tr g(H)`.
    pub fn trace_of(&self, g: impl Fn(f64) -> f64) -> f64 {
        pairwise_sum(&self.eigenvalues.iter().map(|&x| g(x)).collect::<Vec<_>>())
    }

    /// Fails unless every eigenvalue lies in `[-2, 2]`.
    pub fn check_working_interval(&self) -> Result<()> {
        for &x in &self.eigenvalues {
            if !(x.abs() <= WORKING_BOUND) {
                return Err(Error::OutsideWorkingInterval { value: x });
            }
        }
        Ok(())
    }

    /// Express a matrix in this eigenbasis: `U* A U`.
    pub fn to_eigenbasis(&self, a: &CMatrix) -> CMatrix {
        self.eigenvectors.adjoint() * a * &self.eigenvectors
    }
}

/// Cyclic complex Jacobi eigen-solver.
///
/// Rows and columns that are exactly zero are never touched, so a constructed
/// zero eigenvalue comes out as an exact `0.0`. Eigenvectors are normalized
/// so their first non-negligible coordinate is real and positive.
pub fn eigendecompose(h: &HermitianMatrix) -> Result<SpectralDecomposition> {
    let d = h.dim();
    let mut a = h.matrix().clone();
    let mut v = CMatrix::identity(d, d);
    let scale = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();

    let off_norm = |a: &CMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    s += a[(i, j)].norm_sqr();
                }
            }
        }
        s.sqrt()
    };

    let target = 1e-15 * scale;
    let mut sweeps = 0;
    loop {
        let off = off_norm(&a);
        if off <= target || off == 0.0 {
            break;
        }
        if sweeps >= JACOBI_MAX_SWEEPS {
            return Err(Error::EigenNotConverged { sweeps, residual: off });
        }
        sweeps += 1;
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r == 0.0 || r < 1e-300 {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                // Skip rotations whose effect is below the diagonal's resolution.
                if sweeps > 4 && r < f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
                    a[(p, q)] = C64::new(0.0, 0.0);
                    a[(q, p)] = C64::new(0.0, 0.0);
                    continue;
                }
                let phase = apq / r;
                let tau = (aqq - app) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // G = [[c, s], [-s e^{-i theta}, c e^{-i theta}]] on coordinates (p, q).
                let gpp = C64::new(c, 0.0);
                let gpq = C64::new(s, 0.0);
                let gqp = -phase.conj() * s;
                let gqq = phase.conj() * c;
                // A <- A G
                for k in 0..d {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * gpp + akq * gqp;
                    a[(k, q)] = akp * gpq + akq * gqq;
                }
                // A <- G* A
                for k in 0..d {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = gpp.conj() * apk + gqp.conj() * aqk;
                    a[(q, k)] = gpq.conj() * apk + gqq.conj() * aqk;
                }
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
                for k in 0..d {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * gpp + vkq * gqp;
                    v[(k, q)] = vkp * gpq + vkq * gqq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut eigenvectors = CMatrix::zeros(d, d);
    for (col, &src) in order.iter().enumerate() {
        let column = v.column(src);
        let max_abs = column.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
        let lead = column.iter().find(|z| z.norm() > 1e-12 * max_abs).copied();
        let fix = match lead {
            Some(z) => z.conj() / z.norm(),
            None => C64::new(1.0, 0.0),
        };
        for i in 0..d {
            eigenvectors[(i, col)] = column[i] * fix;
        }
    }
    Ok(SpectralDecomposition { eigenvalues, eigenvectors })
}

/// A Schatten exponent `p` in `(1, inf)` with the order `m` of the Taylor
/// expansion, the integer with `m < p <= m + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchattenExponent {
    p: f64,
    m: usize,
}

impl SchattenExponent {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::InvalidExponent(p));
        }
        let m = (p.ceil() as usize) - 1;
        Ok(Self { p, m })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Hölder exponent `p - m` of the top derivative `f_p^(m)`, in `(0, 1]`.
    pub fn holder_exponent(&self) -> f64 {
        self.p - self.m as f64
    }

    /// Dual exponent `p' = p / (p - 1)`.
    pub fn dual(&self) -> f64 {
        self.p / (self.p - 1.0)
    }
}

/// `(sum |x_i|^p)^(1/p)`, accumulated pairwise.
pub fn lp_norm(values: &[f64], p: f64) -> f64 {
    let max = values.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if max == 0.0 {
        return 0.0;
    }
    let terms: Vec<f64> = values.iter().map(|x| (x.abs() / max).powf(p)).collect();
    max * pairwise_sum(&terms).powf(1.0 / p)
}

/// Singular values in descending order.
pub fn singular_values(a: &CMatrix) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let svd = a.clone().try_svd(false, false, f64::EPSILON, 10_000).ok_or(
        Error::EigenNotConverged { sweeps: 10_000, residual: f64::NAN },
    )?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// `(sum_k s_k(A)^p)^(1/p)` for any complex matrix, `p >= 1`.
pub fn schatten_norm(a: &CMatrix, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::OutOfRange(format!("Schatten norm needs p >= 1, got {p}")));
    }
    Ok(lp_norm(&singular_values(a)?, p))
}

/// `(sum_{k <= nu} s_k(A)^p)^(1/p)` over the `nu` largest singular values.
pub fn truncated_norm(a: &CMatrix, p: f64, nu: usize) -> Result<f64> {
    let s = singular_values(a)?;
    if nu == 0 || nu > s.len() {
        return Err(Error::OutOfRange(format!("nu = {nu} not in 1..={}", s.len())));
    }
    if !(p >= 1.0) {
        return Err(Error::OutOfRange(format!("truncated norm needs p >= 1, got {p}")));
    }
    Ok(lp_norm(&s[..nu], p))
}

/// Frobenius (Schatten-2) norm.
pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `U diag(f(lambda)) U*`. Every eigenvalue must lie in the function's domain.
pub fn apply_scalar_function(f: &dyn ScalarFn, decomp: &SpectralDecomposition) -> Result<HermitianMatrix> {
    let (lo, hi) = f.domain();
    for &x in &decomp.eigenvalues {
        if !(x >= lo && x <= hi) {
            return Err(Error::OutsideDomain { value: x, lo, hi });
        }
    }
    HermitianMatrix::new(decomp.map(|x| f.derivative(0, x)))
}

/// Real part of a trace, rejecting values with `|im| > 1e-10 (1 + |re|)`.
pub fn real_trace(z: C64) -> Result<f64> {
    if z.im.abs() > 1e-10 * (1.0 + z.re.abs()) || z.re.is_nan() {
        return Err(Error::ComplexTrace { re: z.re, im: z.im });
    }
    Ok(z.re)
}

/// Pairwise summation; fixed association order for reproducibility.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Wire format `{ "dim": d, "re": [[...]], "im": [[...]] }`, row-major.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let d = m.nrows();
        let re = (0..d).map(|i| (0..d).map(|j| m[(i, j)].re).collect()).collect();
        let im = (0..d).map(|i| (0..d).map(|j| m[(i, j)].im).collect()).collect();
        Self { dim: d, re, im }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        let d = self.dim;
        if self.re.len() != d || self.im.len() != d {
            return Err(Error::Parse(format!("expected {d} rows in both re and im")));
        }
        let mut m = CMatrix::zeros(d, d);
        for i in 0..d {
            if self.re[i].len() != d || self.im[i].len() != d {
                return Err(Error::Parse(format!("row {i} does not have {d} entries")));
            }
            for j in 0..d {
                m[(i, j)] = C64::new(self.re[i][j], self.im[i][j]);
            }
        }
        Ok(m)
    }
}

impl std::fmt::Display for MatrixJson {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_string(self).map_err(|_| std::fmt::Error)?;
        f.write_str(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::function::ScalarFunctionModel;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_hermitian(seed: u64, d: usize) -> HermitianMatrix {
        let mut rng = crate::harness::rng::SeededRng::new(seed);
        let mut g = CMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                g[(i, j)] = c(rng.normal(), rng.normal());
            }
        }
        HermitianMatrix::hermitian_part(&g).unwrap()
    }

    #[test]
    fn diagonal_input() {
        let h = HermitianMatrix::from_real_diagonal(&[3.0, 1.0]).unwrap();
        let e = h.eigen().unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 3.0]);
        assert_eq!(e.eigenvectors[(1, 0)], c(1.0, 0.0));
        assert_eq!(e.eigenvectors[(0, 1)], c(1.0, 0.0));
    }

    #[test]
    fn identity_and_pauli_x() {
        let e = HermitianMatrix::identity(4).unwrap().eigen().unwrap();
        assert_eq!(e.eigenvalues, vec![1.0; 4]);
        let x = HermitianMatrix::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let e = x.eigen().unwrap();
        assert!((e.eigenvalues[0] + 1.0).abs() < 1e-15);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 1)] = c(1.0, 0.0);
        assert!(matches!(HermitianMatrix::new(m), Err(Error::NotHermitian { .. })));
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 0)] = c(1.0, 1e-3);
        assert!(HermitianMatrix::new(m).is_err());
        assert!(matches!(HermitianMatrix::new(CMatrix::zeros(2, 3)), Err(Error::NotSquare { .. })));
        assert!(matches!(HermitianMatrix::new(CMatrix::zeros(0, 0)), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn reconstruction_and_orthonormality_battery() {
        for seed in 0..100u64 {
            let d = 2 + (seed as usize % 11);
            let h = random_hermitian(seed, d);
            let e = h.eigen().unwrap();
            let norm_inf = e.spectral_radius();
            let rec = e.reconstruct();
            for i in 0..d {
                for j in 0..d {
                    assert!((rec[(i, j)] - h.matrix()[(i, j)]).norm() <= 1e-10 * (1.0 + norm_inf));
                }
            }
            let gram = e.eigenvectors.adjoint() * &e.eigenvectors;
            for i in 0..d {
                for j in 0..d {
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[(i, j)] - c(target, 0.0)).norm() <= 1e-10);
                }
            }
            assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn phase_convention_and_determinism() {
        let h = random_hermitian(7, 6);
        let e1 = h.eigen().unwrap();
        let e2 = h.eigen().unwrap();
        assert_eq!(e1, e2);
        for j in 0..6 {
            let lead = e1.eigenvectors.column(j).iter().find(|z| z.norm() > 1e-12).copied().unwrap();
            assert!(lead.im.abs() < 1e-15 && lead.re > 0.0);
        }
    }

    #[test]
    fn agrees_with_nalgebra_symmetric_eigen() {
        let h = random_hermitian(3, 9);
        let ours = h.eigen().unwrap().eigenvalues;
        let mut theirs: Vec<f64> = h.matrix().clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        theirs.sort_by(f64::total_cmp);
        for (a, b) in ours.iter().zip(&theirs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_zero_row_gives_exact_zero_eigenvalue() {
        let mut m = random_hermitian(11, 5).into_matrix();
        for k in 0..5 {
            m[(0, k)] = c(0.0, 0.0);
            m[(k, 0)] = c(0.0, 0.0);
        }
        let e = HermitianMatrix::new(m).unwrap().eigen().unwrap();
        assert_eq!(e.min_abs_eigenvalue(), 0.0);
    }

    #[test]
    fn schatten_norm_examples() {
        let i2 = HermitianMatrix::identity(2).unwrap();
        assert!((i2.schatten_norm(2.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let d10 = HermitianMatrix::from_real_diagonal(&[1.0, 0.0]).unwrap();
        for p in [1.0, 1.5, 2.0, 7.0] {
            assert!((d10.schatten_norm(p).unwrap() - 1.0).abs() < 1e-15);
        }
        let pm = HermitianMatrix::from_real_diagonal(&[1.0, -1.0]).unwrap();
        assert!((pm.schatten_norm(3.0).unwrap() - 2f64.powf(1.0 / 3.0)).abs() < 1e-15);
        assert!((schatten_norm(pm.matrix(), 3.0).unwrap() - 2f64.powf(1.0 / 3.0)).abs() < 1e-14);
        assert!(schatten_norm(pm.matrix(), 0.5).is_err());
    }

    #[test]
    fn singular_value_examples() {
        let a = HermitianMatrix::from_real_diagonal(&[2.0, -3.0]).unwrap();
        let s = singular_values(a.matrix()).unwrap();
        assert!((s[0] - 3.0).abs() < 1e-14 && (s[1] - 2.0).abs() < 1e-14);
        let z = singular_values(&CMatrix::zeros(3, 3)).unwrap();
        assert!(z.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn singular_values_match_gram_eigenvalues() {
        let mut rng = crate::harness::rng::SeededRng::new(42);
        for _ in 0..10 {
            let mut a = CMatrix::zeros(4, 4);
            for z in a.iter_mut() {
                *z = c(rng.normal(), rng.normal());
            }
            let s = singular_values(&a).unwrap();
            let gram = HermitianMatrix::new(a.adjoint() * &a).unwrap();
            let mut oracle: Vec<f64> =
                gram.eigen().unwrap().eigenvalues.iter().map(|x| x.max(0.0).sqrt()).collect();
            oracle.reverse();
            for (x, y) in s.iter().zip(&oracle) {
                assert!((x - y).abs() < 1e-10, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn truncated_norm_examples() {
        let a = HermitianMatrix::from_real_diagonal(&[3.0, 2.0, 1.0]).unwrap();
        assert!((truncated_norm(a.matrix(), 1.0, 2).unwrap() - 5.0).abs() < 1e-14);
        let ones = HermitianMatrix::identity(3).unwrap();
        assert!((truncated_norm(ones.matrix(), 2.0, 2).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        let r = random_hermitian(5, 4);
        let full = truncated_norm(r.matrix(), 2.5, 4).unwrap();
        assert!((full - schatten_norm(r.matrix(), 2.5).unwrap()).abs() < 1e-14);
        assert!(truncated_norm(r.matrix(), 2.5, 5).is_err());
        assert!(truncated_norm(r.matrix(), 2.5, 0).is_err());
    }

    #[test]
    fn functional_calculus_examples() {
        let h = HermitianMatrix::from_real_diagonal(&[-1.0, 2.0]).unwrap();
        let sq = apply_scalar_function(&ScalarFunctionModel::Monomial { n: 2 }, &h.eigen().unwrap()).unwrap();
        assert!((sq.matrix()[(0, 0)].re - 1.0).abs() < 1e-15);
        assert!((sq.matrix()[(1, 1)].re - 4.0).abs() < 1e-15);

        let h = HermitianMatrix::from_real_diagonal(&[1.0, 0.0]).unwrap();
        let fp = apply_scalar_function(&ScalarFunctionModel::power_abs(2.5).unwrap(), &h.eigen().unwrap()).unwrap();
        assert_eq!(fp.matrix()[(0, 0)].re, 1.0);
        assert_eq!(fp.matrix()[(1, 1)].re, 0.0);

        let r = random_hermitian(9, 6);
        let id = apply_scalar_function(&ScalarFunctionModel::Monomial { n: 1 }, &r.eigen().unwrap()).unwrap();
        assert!(frobenius(&(id.matrix() - r.matrix())) < 1e-10);

        let big = HermitianMatrix::from_real_diagonal(&[3.0]).unwrap();
        let err = apply_scalar_function(&ScalarFunctionModel::power_abs(2.5).unwrap(), &big.eigen().unwrap());
        assert!(matches!(err, Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn matrix_json_round_trip_and_rejection() {
        let r = random_hermitian(12, 3);
        let text = r.to_json();
        let back = HermitianMatrix::from_json(&text).unwrap();
        assert_eq!(back, r);
        let bad = r#"{ "dim": 2, "re": [[0, 1], [0, 0]], "im": [[0, 0], [0, 0]] }"#;
        assert!(matches!(HermitianMatrix::from_json(bad), Err(Error::NotHermitian { .. })));
        let ragged = r#"{ "dim": 2, "re": [[0, 1]], "im": [[0, 0], [0, 0]] }"#;
        assert!(matches!(HermitianMatrix::from_json(ragged), Err(Error::Parse(_))));
    }

    #[test]
    fn real_trace_guard() {
        assert_eq!(real_trace(c(2.0, 1e-12)).unwrap(), 2.0);
        assert!(real_trace(c(2.0, 1e-6)).is_err());
    }
}
