//! The Normal-to-Poisson copula transform: correlated Normal draws mapped
//! through the Normal CDF and the Poisson quantile, plus feasible
//! correlation bounds and the exponential correction that pre-distorts
//! targets at low rates.

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::corrmat::{
    factorize, nearest_psd, validate_correlation, CorrError, CorrelationMatrix, FactorMatrix,
    Space,
};
use crate::randsrc::{mvn_sample, NormalSampler, RandomStream};
use crate::scalardist::{normal_cdf, poisson_quantile, Rate, ScalarError};

/// Default midpoint-grid size for feasible-bound evaluation; stable to
/// about 1e-3 in the bound estimates.
pub const DEFAULT_GRID_SIZE: usize = 200_000;
/// Smallest grid accepted; below this the bounds are too coarse to trust.
pub const MIN_GRID_SIZE: usize = 1_000;
/// Rates below this turn the correction on by default.
pub const CORRECTION_RATE_THRESHOLD: f64 = 5.0;

const NEAR_SYMMETRIC_TOL: f64 = 1e-6;
const BLOCK_ROWS: usize = 4096;

#[derive(Debug, Error)]
pub enum CopulaError {
    #[error("rates length {rates} does not match correlation dimension {dim}")]
    DimensionMismatch { rates: usize, dim: usize },
    #[error(
        "infeasible correlation for pair ({i},{j}): requested {requested}, \
         feasible range [{min_corr}, {max_corr}]"
    )]
    Infeasible {
        i: usize,
        j: usize,
        requested: f64,
        min_corr: f64,
        max_corr: f64,
    },
    #[error("degenerate variance on the evaluation grid (rate {rate}, grid {grid}); increase the grid size")]
    DegenerateVariance { rate: f64, grid: usize },
    #[error("grid size {0} below minimum {MIN_GRID_SIZE}")]
    GridTooSmall(usize),
    #[error("bounds nearly symmetric (max_corr {max_corr}, min_corr {min_corr}): exponential fit degenerates")]
    NearSymmetricBounds { min_corr: f64, max_corr: f64 },
    #[error(transparent)]
    Matrix(#[from] CorrError),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error("n must be positive")]
    EmptySample,
}

/// Full description of a multivariate Poisson generation task.
#[derive(Debug, Clone)]
pub struct CopulaSpec {
    rates: Vec<Rate>,
    target: CorrelationMatrix,
    apply_correction: bool,
    sampler: NormalSampler,
}

impl CopulaSpec {
    /// `apply_correction = None` enables the correction when any rate is
    /// below 5, where the quantile transform distorts correlations most.
    pub fn new(
        rates: Vec<Rate>,
        target: CorrelationMatrix,
        apply_correction: Option<bool>,
        sampler: NormalSampler,
    ) -> Result<CopulaSpec, CopulaError> {
        if rates.len() != target.dim() {
            return Err(CopulaError::DimensionMismatch {
                rates: rates.len(),
                dim: target.dim(),
            });
        }
        let apply_correction = apply_correction.unwrap_or_else(|| {
            rates.iter().any(|r| r.get() < CORRECTION_RATE_THRESHOLD)
        });
        Ok(CopulaSpec {
            rates,
            target: target.retagged(Space::PoissonTarget),
            apply_correction,
            sampler,
        })
    }

    pub fn dim(&self) -> usize {
        self.rates.len()
    }

    pub fn rates(&self) -> &[Rate] {
        &self.rates
    }

    pub fn target(&self) -> &CorrelationMatrix {
        &self.target
    }

    pub fn apply_correction(&self) -> bool {
        self.apply_correction
    }

    pub fn sampler(&self) -> NormalSampler {
        self.sampler
    }
}

/// Attainable Pearson-correlation interval for a pair of Poisson marginals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibleBounds {
    pub min_corr: f64,
    pub max_corr: f64,
}

/// Exponential map rho_pois = a*exp(b*rho_normal) + c fitted through
/// (-1, min_corr), (0, 0), (1, max_corr).
#[derive(Debug, Clone, Copy)]
pub struct CorrectionFit {
    pub bounds: FeasibleBounds,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl CorrectionFit {
    /// Predicted Poisson-side correlation for a Normal-side value.
    pub fn forward(&self, rho_normal: f64) -> f64 {
        self.a * (self.b * rho_normal).exp() + self.c
    }
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Feasible correlation bounds for Poisson marginals with the given rates,
/// from comonotone (same uniform) and antithetic (u, 1-u) couplings
/// evaluated on the deterministic midpoint grid u_i = (i - 0.5)/m.
pub fn feasible_bounds(
    lambda1: Rate,
    lambda2: Rate,
    m: usize,
) -> Result<FeasibleBounds, CopulaError> {
    if m < MIN_GRID_SIZE {
        return Err(CopulaError::GridTooSmall(m));
    }
    let mut q1 = Vec::with_capacity(m);
    let mut q2 = Vec::with_capacity(m);
    let mut q2r = Vec::with_capacity(m);
    for i in 1..=m {
        let u = (i as f64 - 0.5) / m as f64;
        q1.push(poisson_quantile(u, lambda1)? as f64);
        q2.push(poisson_quantile(u, lambda2)? as f64);
        q2r.push(poisson_quantile(1.0 - u, lambda2)? as f64);
    }
    let max_corr = pearson(&q1, &q2).ok_or(CopulaError::DegenerateVariance {
        rate: lambda1.get().min(lambda2.get()),
        grid: m,
    })?;
    let min_corr = pearson(&q1, &q2r).ok_or(CopulaError::DegenerateVariance {
        rate: lambda1.get().min(lambda2.get()),
        grid: m,
    })?;
    Ok(FeasibleBounds { min_corr, max_corr })
}

/// Fit the exponential correction coefficients from the bounds:
/// a = -(max*min)/(max+min), b = ln((max+a)/a), c = -a.
pub fn fit_correction(bounds: FeasibleBounds) -> Result<CorrectionFit, CopulaError> {
    let FeasibleBounds { min_corr, max_corr } = bounds;
    if (max_corr + min_corr).abs() <= NEAR_SYMMETRIC_TOL {
        return Err(CopulaError::NearSymmetricBounds { min_corr, max_corr });
    }
    let a = -(max_corr * min_corr) / (max_corr + min_corr);
    let b = ((max_corr + a) / a).ln();
    let c = -a;
    Ok(CorrectionFit { bounds, a, b, c })
}

/// Invert the fitted map: the Normal-side correlation whose image under
/// the exponential fit is `r`, i.e. ln((r+a)/a)/b.
pub fn correct_target(r: f64, fit: &CorrectionFit) -> Result<f64, CopulaError> {
    let infeasible = || CopulaError::Infeasible {
        i: 0,
        j: 0,
        requested: r,
        min_corr: fit.bounds.min_corr,
        max_corr: fit.bounds.max_corr,
    };
    let arg = (r + fit.a) / fit.a;
    if arg <= 0.0 {
        return Err(infeasible());
    }
    let corrected = arg.ln() / fit.b;
    if !(-1.0..=1.0).contains(&corrected) {
        return Err(infeasible());
    }
    Ok(corrected)
}

/// Result of mapping a Poisson-target matrix to the Normal side.
#[derive(Debug, Clone)]
pub struct CorrectedMatrix {
    pub matrix: CorrelationMatrix,
    /// Largest entry change introduced by the PSD repair (0 when none).
    pub psd_adjustment: f64,
}

/// Apply the pairwise correction to every off-diagonal entry. Pairs whose
/// bounds are nearly symmetric pass through unchanged; the result is
/// PSD-repaired if the pairwise edits break positive semidefiniteness.
pub fn correct_matrix(
    target: &CorrelationMatrix,
    rates: &[Rate],
    grid_size: usize,
) -> Result<CorrectedMatrix, CopulaError> {
    let p = target.dim();
    if rates.len() != p {
        return Err(CopulaError::DimensionMismatch {
            rates: rates.len(),
            dim: p,
        });
    }
    let mut out = DMatrix::identity(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            let rho = target.entry(i, j);
            if rho == 0.0 {
                continue;
            }
            let bounds = feasible_bounds(rates[i], rates[j], grid_size)?;
            if rho <= bounds.min_corr || rho >= bounds.max_corr {
                return Err(CopulaError::Infeasible {
                    i,
                    j,
                    requested: rho,
                    min_corr: bounds.min_corr,
                    max_corr: bounds.max_corr,
                });
            }
            let corrected = match fit_correction(bounds) {
                Ok(fit) => correct_target(rho, &fit).map_err(|e| match e {
                    CopulaError::Infeasible {
                        requested,
                        min_corr,
                        max_corr,
                        ..
                    } => CopulaError::Infeasible {
                        i,
                        j,
                        requested,
                        min_corr,
                        max_corr,
                    },
                    other => other,
                })?,
                Err(CopulaError::NearSymmetricBounds { .. }) => rho,
                Err(e) => return Err(e),
            };
            out[(i, j)] = corrected;
            out[(j, i)] = corrected;
        }
    }
    match validate_correlation(&out, Space::NormalSide) {
        Ok(matrix) => Ok(CorrectedMatrix {
            matrix,
            psd_adjustment: 0.0,
        }),
        Err(CorrError::NotPositiveSemidefinite { .. }) => {
            let repaired = nearest_psd(&out, 0.0, Space::NormalSide)?;
            let adjustment = (repaired.as_matrix() - &out)
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            Ok(CorrectedMatrix {
                matrix: repaired,
                psd_adjustment: adjustment,
            })
        }
        Err(e) => Err(e.into()),
    }
}

/// Normal-side matrix and factor actually used by `generate`.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub normal_side: CorrelationMatrix,
    pub factor: FactorMatrix,
    pub psd_adjustment: f64,
}

/// Resolve the working Normal-side matrix (corrected or as-given) and
/// factor it.
pub fn prepare(spec: &CopulaSpec) -> Result<Prepared, CopulaError> {
    prepare_with_grid(spec, DEFAULT_GRID_SIZE)
}

pub fn prepare_with_grid(spec: &CopulaSpec, grid_size: usize) -> Result<Prepared, CopulaError> {
    let (normal_side, psd_adjustment) = if spec.apply_correction {
        let corrected = correct_matrix(spec.target(), spec.rates(), grid_size)?;
        (corrected.matrix, corrected.psd_adjustment)
    } else {
        (spec.target().retagged(Space::NormalSide), 0.0)
    };
    let factor = factorize(&normal_side)?;
    Ok(Prepared {
        normal_side,
        factor,
        psd_adjustment,
    })
}

/// An n×p matrix of generated counts, row-major.
#[derive(Debug, Clone)]
pub struct SampleMatrix {
    n: usize,
    p: usize,
    counts: Vec<u64>,
    spec: CopulaSpec,
    seed: u64,
}

impl SampleMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spec(&self) -> &CopulaSpec {
        &self.spec
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.p + col]
    }

    pub fn row(&self, row: usize) -> &[u64] {
        &self.counts[row * self.p..(row + 1) * self.p]
    }

    pub fn column(&self, col: usize) -> Vec<u64> {
        (0..self.n).map(|r| self.get(r, col)).collect()
    }

    /// Build a sample matrix from externally produced counts (CSV input).
    pub fn from_counts(
        counts: Vec<u64>,
        n: usize,
        p: usize,
        spec: CopulaSpec,
        seed: u64,
    ) -> SampleMatrix {
        assert_eq!(counts.len(), n * p);
        SampleMatrix {
            n,
            p,
            counts,
            spec,
            seed,
        }
    }
}

fn generate_block(
    prepared: &Prepared,
    rates: &[Rate],
    sampler: NormalSampler,
    seed: u64,
    block: usize,
    rows: usize,
) -> Vec<u64> {
    let p = rates.len();
    let mut stream = RandomStream::for_block(seed, block as u64);
    let mut out = Vec::with_capacity(rows * p);
    for _ in 0..rows {
        let normals = mvn_sample(&prepared.factor, &mut stream, sampler);
        for (j, x) in normals.iter().enumerate() {
            let u = normal_cdf(*x);
            // u is in the open interval by the normal_cdf contract
            let k = poisson_quantile(u, rates[j]).expect("uniform in (0,1)");
            out.push(k);
        }
    }
    out
}

fn block_layout(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(BLOCK_ROWS))
        .map(|b| (b, (n - b * BLOCK_ROWS).min(BLOCK_ROWS)))
        .collect()
}

/// Generate n draws, parallelizing across fixed-size row blocks. Output is
/// identical to the single-threaded path for the same seed.
pub fn generate(spec: &CopulaSpec, n: usize, seed: u64) -> Result<SampleMatrix, CopulaError> {
    let prepared = prepare(spec)?;
    generate_prepared(spec, &prepared, n, seed, true)
}

/// Single-threaded variant with byte-identical output.
pub fn generate_single_threaded(
    spec: &CopulaSpec,
    n: usize,
    seed: u64,
) -> Result<SampleMatrix, CopulaError> {
    let prepared = prepare(spec)?;
    generate_prepared(spec, &prepared, n, seed, false)
}

pub fn generate_prepared(
    spec: &CopulaSpec,
    prepared: &Prepared,
    n: usize,
    seed: u64,
    parallel: bool,
) -> Result<SampleMatrix, CopulaError> {
    if n == 0 {
        return Err(CopulaError::EmptySample);
    }
    let rates = spec.rates();
    let sampler = spec.sampler();
    let layout = block_layout(n);
    let blocks: Vec<Vec<u64>> = if parallel {
        layout
            .par_iter()
            .map(|&(b, rows)| generate_block(prepared, rates, sampler, seed, b, rows))
            .collect()
    } else {
        layout
            .iter()
            .map(|&(b, rows)| generate_block(prepared, rates, sampler, seed, b, rows))
            .collect()
    };
    let mut counts = Vec::with_capacity(n * spec.dim());
    for block in blocks {
        counts.extend(block);
    }
    Ok(SampleMatrix {
        n,
        p: spec.dim(),
        counts,
        spec: spec.clone(),
        seed,
    })
}
