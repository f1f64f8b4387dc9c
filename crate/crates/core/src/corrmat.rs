//! Validation, factorization, and PSD repair of correlation matrices.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use thiserror::Error;

/// Which side of the copula transform a correlation matrix lives on.
///
/// The Normal-side matrix drives the multivariate Normal draw; the
/// Poisson-target matrix is what the final counts should exhibit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    NormalSide,
    PoissonTarget,
}

/// Symmetry tolerance accepted before exact symmetrization.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Smallest eigenvalue accepted as "positive semidefinite".
pub const PSD_TOL: f64 = -1e-10;

#[derive(Debug, Error)]
pub enum CorrError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("asymmetric beyond tolerance at ({i},{j}): |delta| = {delta:e}")]
    AsymmetricBeyondTolerance { i: usize, j: usize, delta: f64 },
    #[error("diagonal entry {i} is {value}, expected 1")]
    DiagonalNotOne { i: usize, value: f64 },
    #[error("entry ({i},{j}) = {value} outside [-1, 1]")]
    EntryOutOfRange { i: usize, j: usize, value: f64 },
    #[error("not positive semidefinite: smallest eigenvalue {min_eigenvalue:e}")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },
    #[error("empty matrix")]
    Empty,
}

/// A validated p×p correlation matrix: symmetric, unit diagonal,
/// off-diagonals in [-1, 1], positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    entries: DMatrix<f64>,
    space: Space,
}

impl CorrelationMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Same entries tagged with a different space.
    pub fn retagged(&self, space: Space) -> CorrelationMatrix {
        CorrelationMatrix {
            entries: self.entries.clone(),
            space,
        }
    }

    pub fn identity(p: usize, space: Space) -> CorrelationMatrix {
        CorrelationMatrix {
            entries: DMatrix::identity(p, p),
            space,
        }
    }
}

/// A p×p factor F with F·Fᵀ equal to the correlation matrix it was
/// built from, used to color i.i.d. standard normals.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrix {
    entries: DMatrix<f64>,
}

impl FactorMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// F·z for a vector z of independent standard normals.
    pub fn color(&self, z: &[f64]) -> Vec<f64> {
        let p = self.dim();
        debug_assert_eq!(z.len(), p);
        (0..p)
            .map(|i| {
                z.iter()
                    .enumerate()
                    .map(|(j, zj)| self.entries[(i, j)] * zj)
                    .sum()
            })
            .collect()
    }
}

fn smallest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let eigen = SymmetricEigen::new(m.clone());
    eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Check the four correlation-matrix invariants and return the validated
/// matrix, exactly symmetrized with an exact unit diagonal.
pub fn validate_correlation(
    raw: &DMatrix<f64>,
    space: Space,
) -> Result<CorrelationMatrix, CorrError> {
    let (rows, cols) = raw.shape();
    if rows != cols {
        return Err(CorrError::NotSquare { rows, cols });
    }
    if rows == 0 {
        return Err(CorrError::Empty);
    }
    let p = rows;
    for i in 0..p {
        let d = raw[(i, i)];
        if (d - 1.0).abs() > SYMMETRY_TOL {
            return Err(CorrError::DiagonalNotOne { i, value: d });
        }
    }
    for i in 0..p {
        for j in (i + 1)..p {
            let delta = (raw[(i, j)] - raw[(j, i)]).abs();
            if delta > SYMMETRY_TOL {
                return Err(CorrError::AsymmetricBeyondTolerance { i, j, delta });
            }
        }
    }
    let mut entries = DMatrix::zeros(p, p);
    for i in 0..p {
        entries[(i, i)] = 1.0;
        for j in (i + 1)..p {
            let v = 0.5 * (raw[(i, j)] + raw[(j, i)]);
            if !(-1.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(CorrError::EntryOutOfRange { i, j, value: v });
            }
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    let min_eig = smallest_eigenvalue(&entries);
    if min_eig < PSD_TOL {
        return Err(CorrError::NotPositiveSemidefinite {
            min_eigenvalue: min_eig,
        });
    }
    Ok(CorrelationMatrix { entries, space })
}

/// Factor R into F with F·Fᵀ = R. Cholesky when strictly positive
/// definite, symmetric eigendecomposition (negative eigenvalues clipped
/// to zero) otherwise.
pub fn factorize(r: &CorrelationMatrix) -> Result<FactorMatrix, CorrError> {
    if let Some(chol) = Cholesky::new(r.entries.clone()) {
        return Ok(FactorMatrix {
            entries: chol.l(),
        });
    }
    let eigen = SymmetricEigen::new(r.entries.clone());
    let min_eig = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_eig < PSD_TOL {
        return Err(CorrError::NotPositiveSemidefinite {
            min_eigenvalue: min_eig,
        });
    }
    // F = Ω·Δ^{1/2}: scale each eigenvector column by sqrt of its eigenvalue.
    let p = r.dim();
    let mut entries = eigen.eigenvectors;
    for j in 0..p {
        let s = eigen.eigenvalues[j].max(0.0).sqrt();
        for i in 0..p {
            entries[(i, j)] *= s;
        }
    }
    Ok(FactorMatrix { entries })
}

/// Project a symmetric unit-diagonal matrix onto the PSD cone by clipping
/// eigenvalues at `eps` and rescaling back to a unit diagonal. Already-PSD
/// inputs are returned unchanged.
pub fn nearest_psd(
    raw: &DMatrix<f64>,
    eps: f64,
    space: Space,
) -> Result<CorrelationMatrix, CorrError> {
    assert!(eps >= 0.0, "eps must be non-negative");
    let (rows, cols) = raw.shape();
    if rows != cols {
        return Err(CorrError::NotSquare { rows, cols });
    }
    if smallest_eigenvalue(raw) >= PSD_TOL {
        return validate_correlation(raw, space);
    }
    let mut eigen = SymmetricEigen::new(raw.clone());
    for v in eigen.eigenvalues.iter_mut() {
        if *v < eps {
            *v = eps;
        }
    }
    let rebuilt = eigen.recompose();
    let p = rows;
    let mut scaled = DMatrix::zeros(p, p);
    for i in 0..p {
        scaled[(i, i)] = 1.0;
        for j in (i + 1)..p {
            let denom = (rebuilt[(i, i)] * rebuilt[(j, j)]).sqrt();
            let v = (rebuilt[(i, j)] / denom).clamp(-1.0, 1.0);
            scaled[(i, j)] = v;
            scaled[(j, i)] = v;
        }
    }
    validate_correlation(&scaled, space)
}
