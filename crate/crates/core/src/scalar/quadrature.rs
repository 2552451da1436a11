//! Quadrature on the corner simplex `R_m = { s in R^m : s_j >= 0, sum s_j <= 1 }`.
//!
//! The base rule is a collapsed (Duffy) tensor product of Gauss–Legendre
//! rules, exact for polynomials of total degree `2n - m` with `n` points per
//! axis. Integrands of the form `h(sum_j s_j x_j)` with `h` non-analytic at
//! zero are handled by cutting `R_m` along the hyperplane
//! `{ s_0 x_0 + ... + s_m x_m = 0 }` (with `s_0 = 1 - sum s_j`), slicing each
//! side into slabs between level sets, and grading the slabs that touch the
//! hyperplane geometrically toward it.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Largest number of Gauss points per axis.
pub const MAX_POINTS_PER_AXIS: usize = 64;

/// Default cap on the total number of nodes of a composite rule.
pub const NODE_BUDGET: usize = 20_000_000;

/// Ratio between consecutive graded intervals of the cone coordinate, and
/// between consecutive level sets bounding the slabs of a kinked piece.
const GRADING_RATIO: f64 = 0.3;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 1 {
        return (x, 1.0);
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

fn compute_gauss_legendre(n: usize) -> GaussRule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map [-1, 1] to [0, 1].
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    GaussRule { nodes, weights }
}

/// Cached Gauss–Legendre rule with `n` points on `[0, 1]`, `1 <= n <= 64`.
pub fn gauss_legendre(n: usize) -> &'static GaussRule {
    static CACHE: OnceLock<Vec<GaussRule>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| (1..=MAX_POINTS_PER_AXIS).map(compute_gauss_legendre).collect());
    let n = n.clamp(1, MAX_POINTS_PER_AXIS);
    &cache[n - 1]
}

/// Composite rule on `R_m`: nodes are stored flat with stride `m`.
#[derive(Debug, Clone)]
pub struct SimplexQuadratureRule {
    pub order: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    /// Total polynomial degree integrated exactly.
    pub degree: usize,
    /// Number of simplices the domain was cut into.
    pub pieces: usize,
}

impl SimplexQuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.points[i * self.order..(i + 1) * self.order]
    }

    /// `sum_i w_i g(s_i)` with Neumaier-compensated accumulation.
    pub fn integrate(&self, mut g: impl FnMut(&[f64]) -> f64) -> f64 {
        let mut acc = Neumaier::default();
        for (i, &w) in self.weights.iter().enumerate() {
            acc.add(w * g(self.node(i)));
        }
        acc.total()
    }

    pub fn weight_sum(&self) -> f64 {
        let mut acc = Neumaier::default();
        for &w in &self.weights {
            acc.add(w);
        }
        acc.total()
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Collapsed Gauss rule on `R_k` (vertices `0, e_1, ..., e_k`), weights summing to `1/k!`.
fn reference_rule(k: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    if k == 0 {
        return (Vec::new(), vec![1.0]);
    }
    let g = gauss_legendre(n);
    let total = n.pow(k as u32);
    let mut points = Vec::with_capacity(total * k);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; k];
    for _ in 0..total {
        let mut remaining = 1.0;
        let mut w = 1.0;
        // Multiplying in `remaining` once per axis accumulates the collapsed
        // Jacobian prod_j (1 - u_j)^(k - j - 1).
        for &i in &idx {
            let u = g.nodes[i];
            points.push(remaining * u);
            w *= g.weights[i] * remaining;
            remaining *= 1.0 - u;
        }
        weights.push(w);
        for slot in idx.iter_mut().rev() {
            *slot += 1;
            if *slot < n {
                break;
            }
            *slot = 0;
        }
    }
    (points, weights)
}

#[derive(Debug, Clone)]
struct Piece {
    vertices: Vec<Vec<f64>>,
    levels: Vec<f64>,
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

/// Recursive edge bisection until no edge joins a negative and a positive vertex.
fn split_by_sign(piece: Piece, out: &mut Vec<Piece>) {
    let n = piece.levels.len();
    let mut cut = None;
    'outer: for i in 0..n {
        for j in 0..n {
            if piece.levels[i] < 0.0 && piece.levels[j] > 0.0 {
                cut = Some((i, j));
                break 'outer;
            }
        }
    }
    let Some((i, j)) = cut else {
        out.push(piece);
        return;
    };
    let (li, lj) = (piece.levels[i], piece.levels[j]);
    let t = li / (li - lj);
    let w = lerp(&piece.vertices[i], &piece.vertices[j], t);
    let mut a = piece.clone();
    a.vertices[j] = w.clone();
    a.levels[j] = 0.0;
    let mut b = piece;
    b.vertices[i] = w;
    b.levels[i] = 0.0;
    split_by_sign(a, out);
    split_by_sign(b, out);
}

/// Parts of `piece` with `level >= cut` (`above`) or `level <= cut`.
fn clip(piece: Piece, cut: f64, above: bool, out: &mut Vec<Piece>) {
    let shifted = Piece { vertices: piece.vertices, levels: piece.levels.iter().map(|l| l - cut).collect() };
    let mut parts = Vec::new();
    split_by_sign(shifted, &mut parts);
    for mut part in parts {
        let side = if part.levels.iter().any(|&l| l > 0.0) {
            true
        } else if part.levels.iter().any(|&l| l < 0.0) {
            false
        } else {
            continue;
        };
        if side == above {
            part.levels.iter_mut().for_each(|l| *l += cut);
            out.push(part);
        }
    }
}

/// Cut a sign-definite piece along the level sets `|L| = lmax GRADING_RATIO^j`
/// until the smallest nonzero level is reached, so that the nonzero levels of
/// every slab differ by at most `1 / GRADING_RATIO`. Levels at or below `zero`
/// (relative to the maximum) count as lying on the kink.
fn slabs(piece: Piece, zero: f64, out: &mut Vec<Piece>) {
    let sign = if piece.levels.iter().any(|&l| l < 0.0) { -1.0 } else { 1.0 };
    let lmax = piece.levels.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let mags: Vec<f64> = piece.levels.iter().map(|l| if l.abs() <= zero * lmax { 0.0 } else { l.abs() }).collect();
    let lmin = mags.iter().cloned().filter(|&l| l > 0.0).fold(f64::INFINITY, f64::min);
    if lmax == 0.0 || lmin >= GRADING_RATIO * lmax {
        out.push(piece);
        return;
    }
    let base = Piece { vertices: piece.vertices, levels: mags };
    let mut cuts = vec![lmax];
    while cuts[cuts.len() - 1] > lmin {
        let c = cuts[cuts.len() - 1] * GRADING_RATIO;
        cuts.push(c);
    }
    let mut parts = Vec::new();
    for w in cuts.windows(2) {
        let mut upper = Vec::new();
        clip(base.clone(), w[1], true, &mut upper);
        if w[0] == lmax {
            parts.append(&mut upper);
        } else {
            upper.into_iter().for_each(|u| clip(u, w[0], false, &mut parts));
        }
    }
    clip(base, cuts[cuts.len() - 1], false, &mut parts);
    for mut part in parts {
        part.levels.iter_mut().for_each(|l| *l *= sign);
        out.push(part);
    }
}

fn determinant(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut det = 1.0;
    for c in 0..n {
        let pivot = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
        if a[pivot][c] == 0.0 {
            return 0.0;
        }
        if pivot != c {
            a.swap(pivot, c);
            det = -det;
        }
        det *= a[c][c];
        for r in (c + 1)..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    det
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

fn simplex_volume(vertices: &[Vec<f64>]) -> f64 {
    let m = vertices.len() - 1;
    if m == 0 {
        return 1.0;
    }
    let rows: Vec<Vec<f64>> =
        (1..=m).map(|j| vertices[j].iter().zip(&vertices[0]).map(|(a, b)| a - b).collect()).collect();
    determinant(rows).abs() / factorial(m)
}

struct RuleBuilder<S: FnMut(&[f64], f64)> {
    m: usize,
    n: usize,
    sink: S,
    count: usize,
    budget: usize,
}

impl<S: FnMut(&[f64], f64)> RuleBuilder<S> {
    fn push(&mut self, point: &[f64], weight: f64) -> Result<()> {
        if self.count >= self.budget {
            return Err(Error::NodeBudgetExceeded { budget: self.budget });
        }
        self.count += 1;
        (self.sink)(point, weight);
        Ok(())
    }

    /// Affine image of the reference rule.
    fn plain(&mut self, piece: &Piece) -> Result<()> {
        let m = self.m;
        let vol = simplex_volume(&piece.vertices);
        if vol == 0.0 {
            return Ok(());
        }
        let (rp, rw) = reference_rule(m, self.n);
        let scale = vol * factorial(m);
        let mut x = vec![0.0; m];
        for (q, &w) in rw.iter().enumerate() {
            let s = &rp[q * m..(q + 1) * m];
            let s0 = 1.0 - s.iter().sum::<f64>();
            for c in 0..m {
                let mut v = s0 * piece.vertices[0][c];
                for (j, sj) in s.iter().enumerate() {
                    v += sj * piece.vertices[j + 1][c];
                }
                x[c] = v;
            }
            self.push(&x, w * scale)?;
        }
        Ok(())
    }

    /// Cone parametrization `s = (1 - r) sum eta_z v_z + r sum gamma_p v_p`
    /// with geometric grading of `r` toward the on-kink vertices `Z`.
    fn graded(&mut self, piece: &Piece, r_floor: f64, cofactor: Option<usize>) -> Result<()> {
        let m = self.m;
        let vol = simplex_volume(&piece.vertices);
        if vol == 0.0 {
            return Ok(());
        }
        let mags: Vec<f64> = piece.levels.iter().map(|l| l.abs()).collect();
        let lmax = mags.iter().cloned().fold(0.0, f64::max);
        let (near, far): (Vec<usize>, Vec<usize>) = (0..=m).partition(|&i| mags[i] <= r_floor * lmax);
        let a = near.len();
        let b = far.len();
        let stop = r_floor;

        let mut breaks = vec![1.0];
        let mut r = 1.0;
        while r > stop {
            r *= GRADING_RATIO;
            breaks.push(r.max(0.0));
        }
        breaks.push(0.0);

        let scale = vol * factorial(m);
        let mut x = vec![0.0; m];
        let mut eta = vec![0.0; a];
        let mut gamma = vec![0.0; b];
        let nk = self.n;
        // `L` does not vary over the near face, so only the cofactor has to be resolved there.
        let ne = cofactor.map_or(nk, |d| (d + a).div_ceil(2).clamp(1, nk));
        let rule = ConeRules::new(a, b, ne, nk);
        let g1 = gauss_legendre(nk);
        for win in breaks.windows(2) {
            let (hi, lo) = (win[0], win[1]);
            let len = hi - lo;
            for (ir, &ur) in g1.nodes.iter().enumerate() {
                let r = lo + len * ur;
                let radial = g1.weights[ir] * len * r.powi(b as i32 - 1) * (1.0 - r).powi(a as i32 - 1);
                for (qe, &we) in rule.ew.iter().enumerate() {
                    barycentric(&rule.ep[qe * (a - 1)..(qe + 1) * (a - 1)], &mut eta);
                    for (qg, &wg) in rule.gw.iter().enumerate() {
                        barycentric(&rule.gp[qg * (b - 1)..(qg + 1) * (b - 1)], &mut gamma);
                        for c in 0..m {
                            let mut v = 0.0;
                            for (k, &z) in near.iter().enumerate() {
                                v += (1.0 - r) * eta[k] * piece.vertices[z][c];
                            }
                            for (k, &p) in far.iter().enumerate() {
                                v += r * gamma[k] * piece.vertices[p][c];
                            }
                            x[c] = v;
                        }
                        self.push(&x, scale * radial * we * wg)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Reference rules on the near and far faces of a cone piece.
#[derive(Clone)]
struct ConeRules {
    ep: std::rc::Rc<Vec<f64>>,
    ew: std::rc::Rc<Vec<f64>>,
    gp: std::rc::Rc<Vec<f64>>,
    gw: std::rc::Rc<Vec<f64>>,
}

impl ConeRules {
    fn new(a: usize, b: usize, near_points: usize, n: usize) -> Self {
        let (ep, ew) = reference_rule(a - 1, near_points);
        let (gp, gw) = reference_rule(b - 1, n);
        Self { ep: ep.into(), ew: ew.into(), gp: gp.into(), gw: gw.into() }
    }
}

fn barycentric(free: &[f64], out: &mut [f64]) {
    out[0] = 1.0 - free.iter().sum::<f64>();
    out[1..].copy_from_slice(free);
}

/// Hyperplane data for the kink `{ s : s_0 x_0 + ... + s_m x_m = 0 }`.
#[derive(Debug, Clone, PartialEq)]
pub struct KinkHyperplane {
    /// Values `x_0, ..., x_m` of the linear form at the vertices of `R_m`
    /// (`x_0` at the origin, `x_j` at `e_j`).
    pub vertex_values: Vec<f64>,
    /// Set when the integrand is `h(L(s)) P(s)` with `P` a polynomial of at
    /// most this degree. Faces on which `L` vanishes then get an exact rule for `P`.
    pub cofactor_degree: Option<usize>,
}

impl KinkHyperplane {
    pub fn new(vertex_values: Vec<f64>) -> Self {
        Self { vertex_values, cofactor_degree: None }
    }

    pub fn with_cofactor_degree(mut self, degree: usize) -> Self {
        self.cofactor_degree = Some(degree);
        self
    }
}

/// Build a composite rule on `R_m` with `points_per_axis` Gauss points per axis.
///
/// With a kink, `R_m` is cut along the hyperplane, each side is sliced along
/// geometrically spaced level sets, and slabs touching the hyperplane are
/// graded toward it down to a cone coordinate of `tol / 100`.
pub fn build_quadrature(
    m: usize,
    points_per_axis: usize,
    kink: Option<&KinkHyperplane>,
    tol: f64,
) -> Result<SimplexQuadratureRule> {
    build_quadrature_with_budget(m, points_per_axis, kink, tol, NODE_BUDGET)
}

pub fn build_quadrature_with_budget(
    m: usize,
    points_per_axis: usize,
    kink: Option<&KinkHyperplane>,
    tol: f64,
    budget: usize,
) -> Result<SimplexQuadratureRule> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let pieces = for_each_node(m, points_per_axis, kink, tol, budget, |x, w| {
        points.extend_from_slice(x);
        weights.push(w);
    })?;
    Ok(SimplexQuadratureRule {
        order: m,
        points,
        weights,
        degree: (2 * points_per_axis).saturating_sub(m),
        pieces,
    })
}

/// Apply the composite rule of [`build_quadrature`] to `g` without storing its nodes.
pub fn integrate_simplex(
    m: usize,
    points_per_axis: usize,
    kink: Option<&KinkHyperplane>,
    tol: f64,
    mut g: impl FnMut(&[f64]) -> f64,
) -> Result<f64> {
    let mut acc = Neumaier::default();
    for_each_node(m, points_per_axis, kink, tol, NODE_BUDGET, |x, w| acc.add(w * g(x)))?;
    Ok(acc.total())
}

/// Feed every node of the composite rule to `sink`; returns the number of pieces.
fn for_each_node(
    m: usize,
    points_per_axis: usize,
    kink: Option<&KinkHyperplane>,
    tol: f64,
    budget: usize,
    sink: impl FnMut(&[f64], f64),
) -> Result<usize> {
    if !(1..=4).contains(&m) {
        return Err(Error::OutOfRange(format!("simplex order {m} not in 1..=4")));
    }
    if !(1..=MAX_POINTS_PER_AXIS).contains(&points_per_axis) {
        return Err(Error::OutOfRange(format!("{points_per_axis} points per axis")));
    }
    let mut vertices = vec![vec![0.0; m]];
    for j in 0..m {
        let mut e = vec![0.0; m];
        e[j] = 1.0;
        vertices.push(e);
    }
    let mut builder = RuleBuilder { m, n: points_per_axis, sink, count: 0, budget };
    let r_floor = (tol * 1e-2).clamp(1e-15, 1e-3);
    let mut pieces = Vec::new();
    match kink {
        None => pieces.push(Piece { vertices, levels: vec![1.0; m + 1] }),
        Some(k) => {
            if k.vertex_values.len() != m + 1 {
                return Err(Error::DimensionMismatch { expected: m + 1, found: k.vertex_values.len() });
            }
            let mut cut = Vec::new();
            split_by_sign(Piece { vertices, levels: k.vertex_values.clone() }, &mut cut);
            for piece in cut {
                slabs(piece, r_floor, &mut pieces);
            }
        }
    }
    for piece in &pieces {
        let mags: Vec<f64> = piece.levels.iter().map(|l| l.abs()).collect();
        let lmax = mags.iter().cloned().fold(0.0, f64::max);
        let lmin = mags.iter().cloned().fold(f64::INFINITY, f64::min);
        if kink.is_some() && lmax > 0.0 && lmin <= r_floor * lmax {
            builder.graded(piece, r_floor, kink.and_then(|k| k.cofactor_degree))?;
        } else {
            builder.plain(piece)?;
        }
    }
    Ok(pieces.len())
}
