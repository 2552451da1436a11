//! Seeded test instances `(H, V)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::rng::SeededRng;
use crate::spectral::{CMatrix, HermitianMatrix, C64};

/// Distance between the members of a clustered eigenvalue pair.
pub const CLUSTER_GAP: f64 = 1e-7;

/// Lower bound on `|lambda|` for the gapped profile.
pub const SPECTRAL_GAP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralProfile {
    /// `(G + G*)/2`, scaled to trace norm 1.
    Generic,
    /// `0 (+) H'` with an exact zero eigenvalue; `V` couples into the zero direction.
    Singular,
    /// Eigenvalues in pairs `1e-7` apart.
    Clustered,
    /// Every eigenvalue at distance at least `0.1` from zero.
    Gapped,
}

impl fmt::Display for SpectralProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SpectralProfile::Generic => "generic",
            SpectralProfile::Singular => "singular",
            SpectralProfile::Clustered => "clustered",
            SpectralProfile::Gapped => "gapped",
        };
        f.write_str(s)
    }
}

impl FromStr for SpectralProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generic" => Ok(Self::Generic),
            "singular" => Ok(Self::Singular),
            "clustered" => Ok(Self::Clustered),
            "gapped" => Ok(Self::Gapped),
            other => Err(Error::Parse(format!("unknown spectral profile {other:?}"))),
        }
    }
}

fn gaussian_hermitian(rng: &mut SeededRng, d: usize) -> CMatrix {
    let g = CMatrix::from_fn(d, d, |_, _| C64::new(rng.normal(), rng.normal()));
    (&g + g.adjoint()) * C64::new(0.5, 0.0)
}

fn trace_norm(h: &HermitianMatrix) -> Result<f64> {
    Ok(h.eigen()?.eigenvalues.iter().map(|x| x.abs()).sum())
}

fn with_trace_norm_one(h: HermitianMatrix) -> Result<HermitianMatrix> {
    let n = trace_norm(&h)?;
    Ok(if n > 0.0 { h.scale(1.0 / n) } else { h })
}

fn with_unit_operator_norm(v: HermitianMatrix) -> Result<HermitianMatrix> {
    let n = v.operator_norm()?;
    Ok(if n > 0.0 { v.scale(1.0 / n) } else { v })
}

/// Haar-like unitary: eigenvectors of a Gaussian Hermitian matrix.
fn random_unitary(rng: &mut SeededRng, d: usize) -> Result<CMatrix> {
    Ok(HermitianMatrix::new(gaussian_hermitian(rng, d))?.eigen()?.eigenvectors)
}

fn conjugate(u: &CMatrix, eigenvalues: &[f64]) -> Result<HermitianMatrix> {
    let d = eigenvalues.len();
    let diag = CMatrix::from_fn(d, d, |i, j| if i == j { C64::new(eigenvalues[i], 0.0) } else { C64::new(0.0, 0.0) });
    HermitianMatrix::new(u * diag * u.adjoint())
}

/// Deterministic `(H, V)` with `||H||_1 <= 1` (so `||H||_p <= 1` for every `p >= 1`),
/// spectrum of `H` in `[-1, 1]` and `||V||_inf = 1`.
pub fn generate_instance(seed: u64, dim: usize, profile: SpectralProfile) -> Result<(HermitianMatrix, HermitianMatrix)> {
    if !(2..=64).contains(&dim) {
        return Err(Error::OutOfRange(format!("dimension {dim} not in 2..=64")));
    }
    let mut rng = SeededRng::new(seed);
    let h = match profile {
        SpectralProfile::Generic => with_trace_norm_one(HermitianMatrix::new(gaussian_hermitian(&mut rng, dim))?)?,
        SpectralProfile::Singular => {
            // Block form keeps the zero eigenvalue exact through the eigen-solver.
            let inner = with_trace_norm_one(HermitianMatrix::new(gaussian_hermitian(&mut rng, dim - 1))?)?;
            let mut full = CMatrix::zeros(dim, dim);
            full.view_mut((1, 1), (dim - 1, dim - 1)).copy_from(inner.matrix());
            HermitianMatrix::new(full)?
        }
        SpectralProfile::Clustered => {
            let mut eig = Vec::with_capacity(dim);
            while eig.len() < dim {
                let x = rng.uniform(-1.0, 1.0);
                eig.push(x);
                if eig.len() < dim {
                    eig.push(x + CLUSTER_GAP);
                }
            }
            let u = random_unitary(&mut rng, dim)?;
            let total: f64 = eig.iter().map(|x| x.abs()).sum();
            let eig: Vec<f64> = eig.iter().map(|x| x / total).collect();
            conjugate(&u, &eig)?
        }
        SpectralProfile::Gapped => {
            // Magnitudes in [0.1, 0.35]: ||H||_2 <= 1 up to d = 8, hence ||H||_p <= 1 for p >= 2.
            let eig: Vec<f64> = (0..dim)
                .map(|_| {
                    let mag = rng.uniform(SPECTRAL_GAP, 0.35);
                    if rng.uniform(0.0, 1.0) < 0.5 { -mag } else { mag }
                })
                .collect();
            let u = random_unitary(&mut rng, dim)?;
            let h = conjugate(&u, &eig)?;
            let n2 = h.schatten_norm(2.0)?;
            if n2 > 1.0 { h.scale(1.0 / n2) } else { h }
        }
    };
    let mut v = gaussian_hermitian(&mut rng, dim);
    if profile == SpectralProfile::Singular {
        let g = with_unit_operator_norm(HermitianMatrix::new(v)?)?;
        v = g.matrix() * C64::new(0.1, 0.0);
        v[(0, 0)] += C64::new(1.0, 0.0);
    }
    let v = with_unit_operator_norm(HermitianMatrix::new(v)?)?;
    Ok((h, v))
}
