//! Multiple operator integrals on matrices.
//!
//! For spectral data `H_j = U_j diag(lambda^j) U_j*` the integral
//! `T_phi(V_1, ..., V_m)` is the finite sum
//! `sum phi(lambda^0_{i_0}, ..., lambda^m_{i_m}) P^0_{i_0} V_1 P^1_{i_1} ... V_m P^m_{i_m}`,
//! evaluated here row by row in the eigenbases.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::divdiff::{derived_divided_difference, DEFAULT_DD_TOL};
use crate::scalar::function::ScalarFunctionModel;
use crate::scalar::momentum::{momentum_eval, momentum_perturbation_pair, MomentumSpec};
use crate::spectral::{frobenius, CMatrix, HermitianMatrix, SpectralDecomposition, C64};

/// Largest supported number of perturbations.
pub const MAX_MOI_ORDER: usize = 3;

pub type UnaryFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SymbolFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `phi(x) = sum_t w_t a_{t,0}(x_0) ... a_{t,m}(x_m)`.
#[derive(Clone, Default)]
pub struct SeparableSymbol {
    pub terms: Vec<SeparableTerm>,
}

#[derive(Clone)]
pub struct SeparableTerm {
    pub weight: f64,
    pub factors: Vec<UnaryFn>,
}

impl SeparableSymbol {
    pub fn push(&mut self, weight: f64, factors: Vec<UnaryFn>) {
        self.terms.push(SeparableTerm { weight, factors });
    }

    pub fn arity(&self) -> Option<usize> {
        self.terms.first().map(|t| t.factors.len())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.weight * t.factors.iter().zip(x).map(|(a, &xi)| a(xi)).product::<f64>()).sum()
    }
}

impl fmt::Debug for SeparableSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SeparableSymbol({} terms)", self.terms.len())
    }
}

/// The function `phi` of a multiple operator integral.
#[derive(Clone)]
pub enum Symbol {
    /// `f^[order]`, arity `order + 1`.
    DividedDifference { f: ScalarFunctionModel, order: usize },
    /// `(f')^[order - 1]`, arity `order`.
    TildeDividedDifference { f: ScalarFunctionModel, order: usize },
    Momentum(MomentumSpec),
    Separable(SeparableSymbol),
    Closure { arity: usize, f: SymbolFn },
    /// `x_0^{s_0} ... x_m^{s_m} phi(x)`.
    Shifted { base: Box<Symbol>, powers: Vec<u32> },
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::DividedDifference { f: g, order } => write!(f, "DividedDifference({g:?}, {order})"),
            Symbol::TildeDividedDifference { f: g, order } => write!(f, "TildeDividedDifference({g:?}, {order})"),
            Symbol::Momentum(spec) => write!(f, "Momentum({spec:?})"),
            Symbol::Separable(s) => write!(f, "{s:?}"),
            Symbol::Closure { arity, .. } => write!(f, "Closure(arity {arity})"),
            Symbol::Shifted { base, powers } => write!(f, "Shifted({base:?}, {powers:?})"),
        }
    }
}

impl Symbol {
    pub fn closure(arity: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Symbol::Closure { arity, f: Arc::new(f) }
    }

    pub fn arity(&self) -> usize {
        match self {
            Symbol::DividedDifference { order, .. } => order + 1,
            Symbol::TildeDividedDifference { order, .. } => *order,
            Symbol::Momentum(spec) => spec.m + 1,
            Symbol::Separable(s) => s.arity().unwrap_or(0),
            Symbol::Closure { arity, .. } => *arity,
            Symbol::Shifted { base, .. } => base.arity(),
        }
    }

    pub fn eval(&self, x: &[f64], tol: f64) -> Result<f64> {
        let value = match self {
            Symbol::DividedDifference { f, .. } => derived_divided_difference(f, 0, x, tol)?,
            Symbol::TildeDividedDifference { f, .. } => derived_divided_difference(f, 1, x, tol)?,
            Symbol::Momentum(spec) => momentum_eval(spec, x, tol)?,
            Symbol::Separable(s) => s.eval(x),
            Symbol::Closure { f, .. } => f(x),
            Symbol::Shifted { base, powers } => {
                let scale: f64 = powers.iter().zip(x).map(|(&s, &xi)| xi.powi(s as i32)).product();
                scale * base.eval(x, tol)?
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::SymbolEvaluation { point: x.to_vec() })
        }
    }
}

/// Spectral data `H_0, ..., H_m`, perturbations `V_1, ..., V_m` and a symbol.
#[derive(Debug, Clone)]
pub struct MoiRequest {
    pub tuple: Vec<SpectralDecomposition>,
    pub perturbations: Vec<CMatrix>,
    pub symbol: Symbol,
    /// Accuracy requested from quadrature-backed symbols.
    pub tol: f64,
}

impl MoiRequest {
    pub fn new(tuple: Vec<SpectralDecomposition>, perturbations: Vec<CMatrix>, symbol: Symbol) -> Result<Self> {
        let req = Self { tuple, perturbations, symbol, tol: DEFAULT_DD_TOL };
        req.validate()?;
        Ok(req)
    }

    /// Same decomposition in every slot.
    pub fn diagonal(decomp: &SpectralDecomposition, perturbations: Vec<CMatrix>, symbol: Symbol) -> Result<Self> {
        let tuple = vec![decomp.clone(); perturbations.len() + 1];
        Self::new(tuple, perturbations, symbol)
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn order(&self) -> usize {
        self.perturbations.len()
    }

    pub fn dim(&self) -> usize {
        self.tuple[0].dim()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.perturbations.len();
        if m > MAX_MOI_ORDER {
            return Err(Error::Unsupported(format!("multiple operator integrals of order {m} (at most {MAX_MOI_ORDER})")));
        }
        if self.tuple.len() != m + 1 {
            return Err(Error::DimensionMismatch { expected: m + 1, found: self.tuple.len() });
        }
        if self.symbol.arity() != m + 1 {
            return Err(Error::DimensionMismatch { expected: m + 1, found: self.symbol.arity() });
        }
        let d = self.tuple[0].dim();
        for t in &self.tuple {
            if t.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: t.dim() });
            }
        }
        for v in &self.perturbations {
            if v.nrows() != d || v.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, found: v.nrows().max(v.ncols()) });
            }
        }
        Ok(())
    }
}

fn map_rows<T: Send>(d: usize, row: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..d).into_par_iter().map(row).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..d).map(row).collect()
    }
}

/// One row `i_0` of the eigenbasis result.
fn contract_row(
    i0: usize,
    eigs: &[&[f64]],
    w: &[CMatrix],
    symbol: &Symbol,
    tol: f64,
) -> Result<Vec<C64>> {
    let m = w.len();
    let d = eigs[0].len();
    let mut row = vec![C64::new(0.0, 0.0); d];
    let mut idx = vec![0usize; m];
    let mut x = vec![0.0; m + 1];
    x[0] = eigs[0][i0];
    loop {
        let mut coeff = C64::new(1.0, 0.0);
        let mut prev = i0;
        for j in 0..m {
            coeff *= w[j][(prev, idx[j])];
            x[j + 1] = eigs[j + 1][idx[j]];
            prev = idx[j];
        }
        if coeff != C64::new(0.0, 0.0) {
            row[idx[m - 1]] += coeff * symbol.eval(&x, tol)?;
        }
        let mut slot = m;
        loop {
            if slot == 0 {
                return Ok(row);
            }
            slot -= 1;
            idx[slot] += 1;
            if idx[slot] < d {
                break;
            }
            idx[slot] = 0;
        }
    }
}

fn moi_with_eigenvalues(req: &MoiRequest, eigs: &[&[f64]]) -> Result<CMatrix> {
    req.validate()?;
    let m = req.order();
    let d = req.dim();
    let u0 = &req.tuple[0].eigenvectors;
    if m == 0 {
        let mut diag = CMatrix::zeros(d, d);
        for i in 0..d {
            diag[(i, i)] = C64::new(req.symbol.eval(&[eigs[0][i]], req.tol)?, 0.0);
        }
        return Ok(u0 * diag * u0.adjoint());
    }
    let w: Vec<CMatrix> = (0..m)
        .map(|j| req.tuple[j].eigenvectors.adjoint() * &req.perturbations[j] * &req.tuple[j + 1].eigenvectors)
        .collect();
    let rows = map_rows(d, |i0| contract_row(i0, eigs, &w, &req.symbol, req.tol))?;
    let mut r = CMatrix::zeros(d, d);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, z) in row.into_iter().enumerate() {
            r[(i, j)] = z;
        }
    }
    Ok(u0 * r * req.tuple[m].eigenvectors.adjoint())
}

/// `T_phi(V_1, ..., V_m)` with the exact eigenvalues.
pub fn moi_exact(req: &MoiRequest) -> Result<CMatrix> {
    let eigs: Vec<&[f64]> = req.tuple.iter().map(|t| t.eigenvalues.as_slice()).collect();
    moi_with_eigenvalues(req, &eigs)
}

/// Grid value `l / n` of the bin `[l/n, (l+1)/n)` containing `x`.
pub fn bin_value(x: f64, n: usize) -> f64 {
    let n = n as f64;
    (x * n).floor() / n
}

/// `S_{phi,n}`: every eigenvalue replaced by the left end of its bin.
pub fn moi_binned(req: &MoiRequest, n: usize) -> Result<CMatrix> {
    if n == 0 {
        return Err(Error::OutOfRange("bin count must be positive".into()));
    }
    let binned: Vec<Vec<f64>> =
        req.tuple.iter().map(|t| t.eigenvalues.iter().map(|&x| bin_value(x, n)).collect()).collect();
    let eigs: Vec<&[f64]> = binned.iter().map(Vec::as_slice).collect();
    moi_with_eigenvalues(req, &eigs)
}

fn function_of(decomp: &SpectralDecomposition, a: &UnaryFn) -> CMatrix {
    decomp.map(|x| a(x))
}

/// `sum_t w_t a_{t,0}(H_0) V_1 a_{t,1}(H_1) ... V_m a_{t,m}(H_m)`.
pub fn moi_separable(
    sym: &SeparableSymbol,
    decomps: &[SpectralDecomposition],
    perturbations: &[CMatrix],
) -> Result<CMatrix> {
    let m = perturbations.len();
    if decomps.len() != m + 1 {
        return Err(Error::DimensionMismatch { expected: m + 1, found: decomps.len() });
    }
    let d = decomps[0].dim();
    let mut total = CMatrix::zeros(d, d);
    for term in &sym.terms {
        if term.factors.len() != m + 1 {
            return Err(Error::DimensionMismatch { expected: m + 1, found: term.factors.len() });
        }
        let mut acc = function_of(&decomps[0], &term.factors[0]);
        for j in 0..m {
            acc = acc * &perturbations[j] * function_of(&decomps[j + 1], &term.factors[j + 1]);
        }
        total += acc * C64::new(term.weight, 0.0);
    }
    if total.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::SymbolEvaluation { point: Vec::new() });
    }
    Ok(total)
}

fn power(decomp: &SpectralDecomposition, s: u32) -> CMatrix {
    decomp.map(|x| x.powi(s as i32))
}

/// `(T_psi(V_1, ..., V_m), T_phi(H_0^{s_0} V_1 H_1^{s_1}, V_2 H_2^{s_2}, ..., V_m H_m^{s_m}))`
/// with `psi = x_0^{s_0} ... x_m^{s_m} phi`.
pub fn algebraic_shift(req: &MoiRequest, powers: &[u32]) -> Result<(CMatrix, CMatrix)> {
    req.validate()?;
    let m = req.order();
    if powers.len() != m + 1 {
        return Err(Error::DimensionMismatch { expected: m + 1, found: powers.len() });
    }
    let shifted = MoiRequest {
        symbol: Symbol::Shifted { base: Box::new(req.symbol.clone()), powers: powers.to_vec() },
        ..req.clone()
    };
    let lhs = moi_exact(&shifted)?;
    if m == 0 {
        // No perturbation slots: the power multiplies the function directly.
        let rhs = moi_exact(req)? * power(&req.tuple[0], powers[0]);
        return Ok((lhs, rhs));
    }
    let mut moved = req.perturbations.clone();
    moved[0] = power(&req.tuple[0], powers[0]) * &moved[0];
    for j in 0..m {
        moved[j] = &moved[j] * power(&req.tuple[j + 1], powers[j + 1]);
    }
    let rhs = moi_exact(&MoiRequest { perturbations: moved, ..req.clone() })?;
    Ok((lhs, rhs))
}

/// Residual of the first-slot perturbation formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationResidual {
    /// `||T_phi^{A,H}(V) - T_phi^{B,H}(V) - T_psi^{A,B,H}(A - B, V)||_2`.
    pub residual: f64,
    /// Largest Frobenius norm among the three terms.
    pub scale: f64,
}

/// Compare `T_phi^{A,H~}(V~) - T_phi^{B,H~}(V~)` with `T_psi^{A,B,H~}(A - B, V~)` where
/// `psi` is the perturbation pair of `phi`.
pub fn perturbation_identity(
    spec: &MomentumSpec,
    a: &HermitianMatrix,
    b: &HermitianMatrix,
    rest: &[SpectralDecomposition],
    perturbations: &[CMatrix],
    tol: f64,
) -> Result<PerturbationResidual> {
    let psi = momentum_perturbation_pair(spec)?;
    if rest.len() != spec.m || perturbations.len() != spec.m {
        return Err(Error::DimensionMismatch { expected: spec.m, found: rest.len().min(perturbations.len()) });
    }
    let da = a.eigen()?;
    let db = b.eigen()?;
    let build = |first: Vec<SpectralDecomposition>, perts: Vec<CMatrix>, sym: Symbol| {
        let mut tuple = first;
        tuple.extend(rest.iter().cloned());
        MoiRequest::new(tuple, perts, sym).map(|r| r.with_tol(tol))
    };
    let phi = Symbol::Momentum(spec.clone());
    let ta = moi_exact(&build(vec![da.clone()], perturbations.to_vec(), phi.clone())?)?;
    let tb = moi_exact(&build(vec![db.clone()], perturbations.to_vec(), phi)?)?;
    let mut perts = vec![a.matrix() - b.matrix()];
    perts.extend(perturbations.iter().cloned());
    let tpsi = moi_exact(&build(vec![da, db], perts, Symbol::Momentum(psi))?)?;
    let residual = frobenius(&(&ta - &tb - &tpsi));
    let scale = frobenius(&ta).max(frobenius(&tb)).max(frobenius(&tpsi));
    Ok(PerturbationResidual { residual, scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::rng::SeededRng;
    use crate::scalar::function::ScalarFn;
    use crate::scalar::momentum::{Kernel, QTerm};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn real(rows: &[&[f64]]) -> CMatrix {
        let d = rows.len();
        CMatrix::from_fn(d, d, |i, j| c(rows[i][j]))
    }

    fn random_hermitian(rng: &mut SeededRng, d: usize, scale: f64) -> HermitianMatrix {
        let g = CMatrix::from_fn(d, d, |_, _| C64::new(rng.normal(), rng.normal()));
        HermitianMatrix::hermitian_part(&(g * c(scale))).unwrap()
    }

    fn random_matrix(rng: &mut SeededRng, d: usize) -> CMatrix {
        CMatrix::from_fn(d, d, |_, _| C64::new(rng.normal(), rng.normal()))
    }

    fn close(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        frobenius(&(a - b)) <= tol
    }

    fn square() -> ScalarFunctionModel {
        ScalarFunctionModel::Monomial { n: 2 }
    }

    fn pauli_x() -> CMatrix {
        real(&[&[0.0, 1.0], &[1.0, 0.0]])
    }

    fn diag01() -> SpectralDecomposition {
        HermitianMatrix::from_real_diagonal(&[0.0, 1.0]).unwrap().eigen().unwrap()
    }

    #[test]
    fn first_order_square() {
        let req = MoiRequest::diagonal(&diag01(), vec![pauli_x()], Symbol::DividedDifference { f: square(), order: 1 })
            .unwrap();
        assert!(close(&moi_exact(&req).unwrap(), &pauli_x(), 1e-14));
    }

    #[test]
    fn identity_perturbation_gives_derivative() {
        let mut rng = SeededRng::new(3);
        let h = random_hermitian(&mut rng, 5, 0.3);
        let dh = h.eigen().unwrap();
        let f = ScalarFunctionModel::power_abs(2.5).unwrap();
        let req = MoiRequest::diagonal(&dh, vec![CMatrix::identity(5, 5)], Symbol::DividedDifference { f: f.clone(), order: 1 })
            .unwrap();
        let fprime = dh.map(|x| f.derivative(1, x));
        assert!(close(&moi_exact(&req).unwrap(), &fprime, 1e-12));
    }

    #[test]
    fn second_order_square_is_product() {
        let v = pauli_x();
        let req = MoiRequest::diagonal(&diag01(), vec![v.clone(), v.clone()], Symbol::DividedDifference { f: square(), order: 2 })
            .unwrap();
        assert!(close(&moi_exact(&req).unwrap(), &CMatrix::identity(2, 2), 1e-14));
    }

    #[test]
    fn order_zero_is_functional_calculus() {
        let dh = HermitianMatrix::from_real_diagonal(&[-1.0, 2.0]).unwrap().eigen().unwrap();
        let req = MoiRequest::diagonal(&dh, vec![], Symbol::closure(1, |x| x[0] * x[0])).unwrap();
        assert!(close(&moi_exact(&req).unwrap(), &real(&[&[1.0, 0.0], &[0.0, 4.0]]), 1e-14));
    }

    #[test]
    fn binned_on_grid_is_exact() {
        let mut rng = SeededRng::new(9);
        let v = random_matrix(&mut rng, 2);
        let sym = Symbol::DividedDifference { f: ScalarFunctionModel::power_abs(2.5).unwrap(), order: 1 };
        let req = MoiRequest::diagonal(&diag01(), vec![v], sym).unwrap();
        assert_eq!(moi_binned(&req, 2).unwrap(), moi_exact(&req).unwrap());
    }

    #[test]
    fn binned_constant_symbol() {
        let mut rng = SeededRng::new(10);
        let h = random_hermitian(&mut rng, 4, 0.4);
        let v = random_matrix(&mut rng, 4);
        let req = MoiRequest::diagonal(&h.eigen().unwrap(), vec![v.clone()], Symbol::closure(2, |_| 1.5)).unwrap();
        for n in [1, 7, 64] {
            assert!(close(&moi_binned(&req, n).unwrap(), &(v.clone() * c(1.5)), 1e-12));
        }
    }

    #[test]
    fn bins_are_left_closed() {
        assert_eq!(bin_value(0.5, 2), 0.5);
        assert_eq!(bin_value(0.49, 2), 0.0);
        assert_eq!(bin_value(-0.01, 4), -0.25);
    }

    #[test]
    fn separable_examples() {
        let mut rng = SeededRng::new(11);
        let h0 = random_hermitian(&mut rng, 3, 0.5);
        let h1 = random_hermitian(&mut rng, 3, 0.5);
        let v = random_matrix(&mut rng, 3);
        let decomps = vec![h0.eigen().unwrap(), h1.eigen().unwrap()];
        let id: UnaryFn = Arc::new(|x| x);
        let one: UnaryFn = Arc::new(|_| 1.0);
        let mut sym = SeparableSymbol::default();
        sym.push(1.0, vec![id.clone(), one.clone()]);
        let got = moi_separable(&sym, &decomps, &[v.clone()]).unwrap();
        assert!(close(&got, &(h0.matrix() * &v), 1e-12));
        sym.push(1.0, vec![one, id]);
        let got = moi_separable(&sym, &decomps, &[v.clone()]).unwrap();
        assert!(close(&got, &(h0.matrix() * &v + &v * h1.matrix()), 1e-12));
    }

    fn random_separable(rng: &mut SeededRng, m: usize, terms: usize) -> SeparableSymbol {
        let mut sym = SeparableSymbol::default();
        for _ in 0..terms {
            let factors: Vec<UnaryFn> = (0..=m)
                .map(|_| {
                    let (a, b) = (rng.normal(), rng.normal());
                    Arc::new(move |x: f64| (a * x).cos() + b * x) as UnaryFn
                })
                .collect();
            sym.push(rng.normal(), factors);
        }
        sym
    }

    #[test]
    fn separable_matches_exact() {
        for seed in 0..50u64 {
            let mut rng = SeededRng::new(seed);
            let m = 1 + (seed as usize % 3);
            let d = 5;
            let decomps: Vec<_> = (0..=m).map(|_| random_hermitian(&mut rng, d, 0.4).eigen().unwrap()).collect();
            let perts: Vec<_> = (0..m).map(|_| random_matrix(&mut rng, d)).collect();
            let sym = random_separable(&mut rng, m, 3);
            let direct = moi_separable(&sym, &decomps, &perts).unwrap();
            let req = MoiRequest::new(decomps, perts, Symbol::Separable(sym)).unwrap();
            let exact = moi_exact(&req).unwrap();
            assert!(close(&direct, &exact, 1e-10), "seed {seed}: {}", frobenius(&(direct - exact)));
        }
    }

    #[test]
    fn multilinear_in_each_slot() {
        let mut rng = SeededRng::new(21);
        let d = 4;
        let f = ScalarFunctionModel::power_abs(3.5).unwrap();
        let decomps: Vec<_> = (0..3).map(|_| random_hermitian(&mut rng, d, 0.3).eigen().unwrap()).collect();
        let v: Vec<_> = (0..2).map(|_| random_matrix(&mut rng, d)).collect();
        let w = random_matrix(&mut rng, d);
        let (alpha, beta) = (C64::new(0.7, -0.2), C64::new(-1.3, 0.4));
        let sym = Symbol::DividedDifference { f, order: 2 };
        let eval = |perts: Vec<CMatrix>| moi_exact(&MoiRequest::new(decomps.clone(), perts, sym.clone()).unwrap()).unwrap();
        for slot in 0..2 {
            let mut mixed = v.clone();
            mixed[slot] = &v[slot] * alpha + &w * beta;
            let mut only_w = v.clone();
            only_w[slot] = w.clone();
            let lhs = eval(mixed);
            let rhs = eval(v.clone()) * alpha + eval(only_w) * beta;
            assert!(frobenius(&(&lhs - &rhs)) <= 1e-12 * (1.0 + frobenius(&lhs)));
        }
    }

    #[test]
    fn symmetric_symbol_keeps_hermitian() {
        let mut rng = SeededRng::new(5);
        let h = random_hermitian(&mut rng, 6, 0.3);
        let v = random_hermitian(&mut rng, 6, 1.0);
        let sym = Symbol::DividedDifference { f: ScalarFunctionModel::power_abs(2.5).unwrap(), order: 1 };
        let out = moi_exact(&MoiRequest::diagonal(&h.eigen().unwrap(), vec![v.matrix().clone()], sym).unwrap()).unwrap();
        assert!(close(&out, &out.adjoint(), 1e-12));
    }

    #[test]
    fn shift_identity() {
        let mut rng = SeededRng::new(17);
        let d = 4;
        let decomps: Vec<_> = (0..3).map(|_| random_hermitian(&mut rng, d, 0.3).eigen().unwrap()).collect();
        let perts: Vec<_> = (0..2).map(|_| random_matrix(&mut rng, d)).collect();
        let f = ScalarFunctionModel::power_abs(3.5).unwrap();
        let req = MoiRequest::new(decomps, perts, Symbol::DividedDifference { f, order: 2 }).unwrap();
        let (lhs, rhs) = algebraic_shift(&req, &[1, 2, 0]).unwrap();
        assert!(close(&lhs, &rhs, 1e-10));
        let (lhs, rhs) = algebraic_shift(&req, &[0, 0, 0]).unwrap();
        let exact = moi_exact(&req).unwrap();
        assert!(close(&lhs, &exact, 1e-14) && close(&rhs, &exact, 1e-12));

        let h0 = random_hermitian(&mut rng, d, 0.3);
        let v = random_matrix(&mut rng, d);
        let one = MoiRequest::diagonal(&h0.eigen().unwrap(), vec![v.clone()], Symbol::closure(2, |_| 1.0)).unwrap();
        let (lhs, rhs) = algebraic_shift(&one, &[1, 0]).unwrap();
        let target = h0.matrix() * &v;
        assert!(close(&lhs, &target, 1e-12) && close(&rhs, &target, 1e-12));
    }

    #[test]
    fn perturbation_identity_quadratic() {
        let mut rng = SeededRng::new(2);
        let d = 3;
        let a = random_hermitian(&mut rng, d, 0.3);
        let b = random_hermitian(&mut rng, d, 0.3);
        let h = random_hermitian(&mut rng, d, 0.3).eigen().unwrap();
        let v = random_matrix(&mut rng, d);
        let spec = MomentumSpec::unit_q(1, Kernel::Model { f: square(), order: 1 }).unwrap();
        let r = perturbation_identity(&spec, &a, &b, &[h.clone()], &[v.clone()], 1e-12).unwrap();
        assert!(r.residual < 1e-12 * (1.0 + r.scale));
        let same = perturbation_identity(&spec, &a, &a, &[h], &[v], 1e-12).unwrap();
        assert_eq!(same.residual, 0.0);
    }

    #[test]
    fn perturbation_identity_general_q() {
        let mut rng = SeededRng::new(8);
        let d = 3;
        let a = random_hermitian(&mut rng, d, 0.3);
        let b = random_hermitian(&mut rng, d, 0.3);
        let h = random_hermitian(&mut rng, d, 0.3).eigen().unwrap();
        let v = random_matrix(&mut rng, d);
        let q = vec![QTerm { alpha: vec![2, 1], c: 1.0 }, QTerm { alpha: vec![0, 1], c: -0.5 }];
        let spec = MomentumSpec::new(1, Kernel::model(ScalarFunctionModel::Monomial { n: 4 }), q).unwrap();
        let r = perturbation_identity(&spec, &a, &b, &[h], &[v], 1e-13).unwrap();
        assert!(r.residual < 1e-12 * (1.0 + r.scale), "{r:?}");
    }

    #[test]
    fn rejects_bad_requests() {
        let d2 = diag01();
        let sym = Symbol::DividedDifference { f: square(), order: 1 };
        assert!(MoiRequest::diagonal(&d2, vec![CMatrix::zeros(3, 3)], sym.clone()).is_err());
        assert!(MoiRequest::diagonal(&d2, vec![pauli_x(), pauli_x()], sym).is_err());
        let four = vec![pauli_x(); 4];
        assert!(matches!(
            MoiRequest::diagonal(&d2, four, Symbol::closure(5, |_| 1.0)),
            Err(Error::Unsupported(_))
        ));
        let nan = MoiRequest::diagonal(&d2, vec![pauli_x()], Symbol::closure(2, |_| f64::NAN)).unwrap();
        assert!(matches!(moi_exact(&nan), Err(Error::SymbolEvaluation { .. })));
    }
}
