//! Scalar distribution functions: standard Normal CDF and quantile,
//! Poisson pmf/CDF/quantile, and an inter-arrival Poisson sampler used
//! as an independent oracle.

use statrs::function::gamma::gamma_ur;
use thiserror::Error;

use crate::randsrc::RandomStream;

#[derive(Debug, Error)]
pub enum ScalarError {
    #[error("rate must be strictly positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("quantile argument must lie in the open interval (0,1), got {0}")]
    DomainError(f64),
}

/// A strictly positive, finite Poisson rate (mean = variance = lambda).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rate(f64);

impl Rate {
    pub fn new(lambda: f64) -> Result<Rate, ScalarError> {
        if lambda > 0.0 && lambda.is_finite() {
            Ok(Rate(lambda))
        } else {
            Err(ScalarError::InvalidRate(lambda))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard Normal CDF, clamped inside the open interval (0, 1).
pub fn normal_cdf(x: f64) -> f64 {
    let u = 0.5 * libm::erfc(-x / SQRT_2);
    u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

// Acklam's rational approximation to the standard Normal quantile,
// refined by one Halley step against normal_cdf.
pub fn normal_quantile(u: f64) -> f64 {
    assert!(u > 0.0 && u < 1.0, "normal_quantile domain is (0,1)");

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const U_LOW: f64 = 0.02425;

    let mut x = if u < U_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if u <= 1.0 - U_LOW {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - u).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley refinement; skipped in the extreme tail where exp(x^2/2)
    // overflows and the raw approximation is already adequate.
    if x.abs() < 37.0 {
        let e = normal_cdf(x) - u;
        let r = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
        x -= r / (1.0 + x * r / 2.0);
    }
    x
}

/// P(X = k) for X ~ Poisson(lambda), via the log-form for large rates.
pub fn poisson_pmf(k: u64, rate: Rate) -> f64 {
    let lam = rate.get();
    let kf = k as f64;
    (kf * lam.ln() - lam - libm::lgamma(kf + 1.0)).exp()
}

/// P(X <= k) for X ~ Poisson(lambda). Stable pmf recurrence while
/// exp(-lambda) is representable; regularized upper incomplete gamma
/// Q(k+1, lambda) beyond that.
pub fn poisson_cdf(k: u64, rate: Rate) -> f64 {
    let lam = rate.get();
    let p0 = (-lam).exp();
    if p0 > 0.0 {
        let mut pmf = p0;
        let mut sum = p0;
        for i in 0..k {
            pmf *= lam / (i as f64 + 1.0);
            sum += pmf;
        }
        sum.min(1.0)
    } else {
        gamma_ur(k as f64 + 1.0, lam).min(1.0)
    }
}

const QUANTILE_SWITCH_RATE: f64 = 30.0;

/// Smallest integer k with poisson_cdf(k, lambda) >= u. Forward summation
/// for small rates; Normal initial guess plus monotone local search on the
/// exact CDF for large ones, so the result is exact either way.
pub fn poisson_quantile(u: f64, rate: Rate) -> Result<u64, ScalarError> {
    if !(u > 0.0 && u < 1.0) {
        return Err(ScalarError::DomainError(u));
    }
    let lam = rate.get();
    if lam <= QUANTILE_SWITCH_RATE {
        let mut k = 0u64;
        let mut pmf = (-lam).exp();
        let mut cdf = pmf;
        while cdf < u {
            k += 1;
            pmf *= lam / k as f64;
            cdf += pmf;
            if pmf == 0.0 {
                break; // u above the representable CDF mass
            }
        }
        Ok(k)
    } else {
        let guess = (lam + normal_quantile(u) * lam.sqrt()).floor().max(0.0) as u64;
        let mut k = guess;
        if poisson_cdf(k, rate) >= u {
            while k > 0 && poisson_cdf(k - 1, rate) >= u {
                k -= 1;
            }
        } else {
            loop {
                k += 1;
                if poisson_cdf(k, rate) >= u {
                    break;
                }
            }
        }
        Ok(k)
    }
}

/// Exact Poisson(lambda) draw counting exponential inter-arrivals:
/// multiplies uniforms until the product falls below exp(-lambda).
/// Intended for small rates; independent of the quantile-transform path.
pub fn poisson_sample_interarrival(rate: Rate, stream: &mut RandomStream) -> u64 {
    let limit = (-rate.get()).exp();
    let mut k = 0u64;
    let mut prod = 1.0f64;
    loop {
        prod *= stream.next_uniform();
        if prod <= limit {
            return k;
        }
        k += 1;
    }
}
