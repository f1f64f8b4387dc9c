//! Seedable random streams and standard/multivariate Normal sampling.
//!
//! The generator is ChaCha12 (`rand_chacha`), whose output is fixed by
//! seed across platforms and releases. Parallel generation derives one
//! independent stream per block via ChaCha's stream counter, so results
//! never depend on thread scheduling.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::corrmat::FactorMatrix;
use crate::scalardist::normal_quantile;

/// Which standard-normal sampler backs a multivariate draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalSampler {
    /// Inverse-CDF of a uniform (default).
    Exact,
    /// Sum of 12 uniforms minus 6; support truncated to [-6, 6].
    Clt,
}

/// Deterministic uniform source over the open interval (0, 1).
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha12Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream {
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream for block `block` of a run seeded with `seed`.
    /// Blocks share the key and differ in the ChaCha stream counter.
    pub fn for_block(seed: u64, block: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(block.wrapping_add(1));
        RandomStream { rng }
    }

    /// Uniform draw strictly inside (0, 1). The all-zero word that would
    /// map to 0.0 is rejected and redrawn; 1.0 is unreachable by
    /// construction (53-bit mantissa scaling).
    pub fn next_uniform(&mut self) -> f64 {
        loop {
            let bits = self.rng.next_u64() >> 11;
            if bits != 0 {
                return bits as f64 * (1.0 / (1u64 << 53) as f64);
            }
        }
    }

    /// Exact N(0,1) draw via the inverse CDF of a uniform.
    pub fn standard_normal(&mut self) -> f64 {
        normal_quantile(self.next_uniform())
    }

    /// N(0,1) approximation as the sum of 12 uniforms minus 6.
    pub fn standard_normal_clt(&mut self) -> f64 {
        let mut acc = 0.0;
        for _ in 0..12 {
            acc += self.next_uniform();
        }
        acc - 6.0
    }

    pub fn draw_normal(&mut self, sampler: NormalSampler) -> f64 {
        match sampler {
            NormalSampler::Exact => self.standard_normal(),
            NormalSampler::Clt => self.standard_normal_clt(),
        }
    }
}

/// One draw from N(0, R) where F·Fᵀ = R: colors a vector of independent
/// standard normals by F.
pub fn mvn_sample(
    factor: &FactorMatrix,
    stream: &mut RandomStream,
    sampler: NormalSampler,
) -> Vec<f64> {
    let p = factor.dim();
    let z: Vec<f64> = (0..p).map(|_| stream.draw_normal(sampler)).collect();
    factor.color(&z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrmat::{factorize, validate_correlation, Space};
    use nalgebra::DMatrix;

    #[test]
    fn uniform_determinism() {
        let mut a = RandomStream::new(42);
        let mut b = RandomStream::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_uniform(), b.next_uniform());
        }
    }

    #[test]
    fn uniform_mean_and_open_interval() {
        let mut s = RandomStream::new(7);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        for _ in 0..n {
            let u = s.next_uniform();
            assert!(u > 0.0 && u < 1.0);
            sum += u;
        }
        // 3 sigma = 3 / (sqrt(12) * 1000) ~ 0.00087
        assert!((sum / n as f64 - 0.5).abs() < 0.002);
    }

    #[test]
    fn standard_normal_moments() {
        let mut s = RandomStream::new(11);
        let n = 1_000_000usize;
        let (mut sum, mut sumsq, mut below_zero) = (0.0, 0.0, 0u64);
        for _ in 0..n {
            let x = s.standard_normal();
            sum += x;
            sumsq += x * x;
            if x < 0.0 {
                below_zero += 1;
            }
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.004);
        assert!((var - 1.0).abs() < 0.01);
        // empirical CDF at 0
        assert!((below_zero as f64 / n as f64 - 0.5).abs() < 0.002);
    }

    #[test]
    fn standard_normal_determinism() {
        let mut a = RandomStream::new(3);
        let mut b = RandomStream::new(3);
        for _ in 0..50 {
            assert_eq!(a.standard_normal(), b.standard_normal());
        }
    }

    #[test]
    fn clt_moments_and_support() {
        let mut s = RandomStream::new(13);
        let n = 1_000_000usize;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            let x = s.standard_normal_clt();
            assert!((-6.0..=6.0).contains(&x));
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.004);
        assert!((var - 1.0).abs() < 0.01);
    }

    #[test]
    fn exact_sampler_reaches_far_tails() {
        let mut s = RandomStream::new(17);
        let mut hits = 0u64;
        for _ in 0..10_000_000usize {
            if s.standard_normal().abs() > 4.0 {
                hits += 1;
            }
        }
        // P(|Z| > 4) ~ 6.3e-5, expected ~633 hits
        assert!(hits > 0);
    }

    #[test]
    fn mvn_identity_factor_is_independent_normals() {
        let r = validate_correlation(&DMatrix::identity(3, 3), Space::NormalSide).unwrap();
        let f = factorize(&r).unwrap();
        let mut a = RandomStream::new(5);
        let mut b = RandomStream::new(5);
        let v = mvn_sample(&f, &mut a, NormalSampler::Exact);
        let expect: Vec<f64> = (0..3).map(|_| b.standard_normal()).collect();
        assert_eq!(v, expect);
    }

    #[test]
    fn mvn_scalar_case() {
        let r = validate_correlation(&DMatrix::identity(1, 1), Space::NormalSide).unwrap();
        let f = factorize(&r).unwrap();
        let mut s = RandomStream::new(9);
        let v = mvn_sample(&f, &mut s, NormalSampler::Exact);
        assert_eq!(v.len(), 1);
    }

    #[test]
    fn mvn_empirical_correlation() {
        let raw = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
        let r = validate_correlation(&raw, Space::NormalSide).unwrap();
        let f = factorize(&r).unwrap();
        let mut s = RandomStream::new(21);
        let n = 50_000usize;
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let v = mvn_sample(&f, &mut s, NormalSampler::Exact);
            sx += v[0];
            sy += v[1];
            sxx += v[0] * v[0];
            syy += v[1] * v[1];
            sxy += v[0] * v[1];
        }
        let nf = n as f64;
        let cov = sxy / nf - sx / nf * (sy / nf);
        let vx = sxx / nf - (sx / nf) * (sx / nf);
        let vy = syy / nf - (sy / nf) * (sy / nf);
        let rho = cov / (vx * vy).sqrt();
        assert!((rho - 0.4).abs() < 0.02);
    }

    #[test]
    fn block_streams_differ_from_each_other() {
        let mut a = RandomStream::for_block(42, 0);
        let mut b = RandomStream::for_block(42, 1);
        let va: Vec<f64> = (0..8).map(|_| a.next_uniform()).collect();
        let vb: Vec<f64> = (0..8).map(|_| b.next_uniform()).collect();
        assert_ne!(va, vb);
    }
}
