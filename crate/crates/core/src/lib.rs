//! Multivariate Poisson sample generation via a Gaussian copula.
//!
//! Correlated standard-Normal vectors are mapped coordinate-wise through
//! the Normal CDF and the Poisson quantile, giving counts with exact
//! Poisson marginals and a target correlation structure, including
//! negative correlations. For low rates, where the transform distorts
//! correlations, an exponential correction pre-distorts the Normal-side
//! matrix from the pair's feasible correlation bounds.

pub mod cli;
pub mod copula;
pub mod corrmat;
pub mod randsrc;
pub mod scalardist;
pub mod stats;
