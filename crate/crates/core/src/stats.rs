//! Validation suite: empirical correlations, marginal summaries,
//! chi-square goodness of fit against Poisson marginals, and
//! observed-vs-expected count tables.

use statrs::function::gamma::gamma_ur;
use thiserror::Error;

use crate::copula::SampleMatrix;
use crate::scalardist::{poisson_cdf, poisson_pmf, Rate};

/// Minimum expected frequency per chi-square bin before pooling.
pub const MIN_EXPECTED_PER_BIN: f64 = 5.0;
/// Thresholds the full report is judged against.
pub const GOF_SIGNIFICANCE: f64 = 1e-3;
pub const MAX_CORR_ERROR: f64 = 0.05;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("column {0} has zero variance")]
    DegenerateColumn(usize),
    #[error("need at least {need} observations, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error("fewer than 2 bins survive pooling")]
    TooFewBins,
}

/// Chi-square statistic, degrees of freedom, and upper-tail p-value.
#[derive(Debug, Clone, Copy)]
pub struct GofResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

fn chisq_upper_tail(statistic: f64, df: usize) -> f64 {
    gamma_ur(df as f64 / 2.0, statistic / 2.0)
}

/// Pearson correlation matrix of the sample columns.
pub fn empirical_correlation(samples: &SampleMatrix) -> Result<Vec<Vec<f64>>, StatsError> {
    let n = samples.n();
    let p = samples.p();
    if n < 2 {
        return Err(StatsError::InsufficientData { need: 2, got: n });
    }
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|j| samples.column(j).iter().map(|&v| v as f64).collect())
        .collect();
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let mut out = vec![vec![0.0; p]; p];
    let mut sdev = vec![0.0; p];
    for j in 0..p {
        let s: f64 = cols[j].iter().map(|v| (v - means[j]).powi(2)).sum();
        if s <= 0.0 {
            return Err(StatsError::DegenerateColumn(j));
        }
        sdev[j] = s.sqrt();
        out[j][j] = 1.0;
    }
    for i in 0..p {
        for j in (i + 1)..p {
            let cov: f64 = cols[i]
                .iter()
                .zip(&cols[j])
                .map(|(a, b)| (a - means[i]) * (b - means[j]))
                .sum();
            let r = cov / (sdev[i] * sdev[j]);
            out[i][j] = r;
            out[j][i] = r;
        }
    }
    Ok(out)
}

/// Sample mean and unbiased sample variance, per column.
pub fn marginal_summary(samples: &SampleMatrix) -> Result<Vec<(f64, f64)>, StatsError> {
    let n = samples.n();
    if n < 2 {
        return Err(StatsError::InsufficientData { need: 2, got: n });
    }
    let nf = n as f64;
    Ok((0..samples.p())
        .map(|j| {
            let col = samples.column(j);
            let mean = col.iter().sum::<u64>() as f64 / nf;
            let ss: f64 = col.iter().map(|&v| (v as f64 - mean).powi(2)).sum();
            (mean, ss / (nf - 1.0))
        })
        .collect())
}

/// Chi-square bins: contiguous count ranges with expected frequency >= 5.
/// The low and high tails are pooled; interior counts get individual bins.
fn pooled_bins(n: usize, rate: Rate) -> Vec<(u64, Option<u64>, f64)> {
    let lam = rate.get();
    let nf = n as f64;
    let kmax = (lam + 10.0 * lam.sqrt()).ceil() as u64;
    let mut bins: Vec<(u64, Option<u64>, f64)> = Vec::new();
    let mut lo = 0u64;
    let mut acc = 0.0;
    for k in 0..=kmax {
        acc += nf * poisson_pmf(k, rate);
        if acc >= MIN_EXPECTED_PER_BIN {
            bins.push((lo, Some(k), acc));
            lo = k + 1;
            acc = 0.0;
        }
    }
    // open-ended upper tail
    let tail = acc + nf * (1.0 - poisson_cdf(kmax, rate));
    if let Some(last) = bins.last_mut() {
        if tail < MIN_EXPECTED_PER_BIN {
            last.1 = None;
            last.2 += tail;
        } else {
            bins.push((lo, None, tail));
        }
    }
    bins
}

/// Goodness of fit of integer counts against Poisson(lambda).
/// df = bins - 1 (the rate is specified, not estimated).
pub fn chisq_gof(column: &[u64], rate: Rate) -> Result<GofResult, StatsError> {
    let n = column.len();
    if n < 100 {
        return Err(StatsError::InsufficientData { need: 100, got: n });
    }
    let bins = pooled_bins(n, rate);
    if bins.len() < 2 {
        return Err(StatsError::TooFewBins);
    }
    let mut observed = vec![0u64; bins.len()];
    'outer: for &v in column {
        for (idx, &(lo, hi, _)) in bins.iter().enumerate() {
            let in_bin = v >= lo && hi.is_none_or(|h| v <= h);
            if in_bin {
                observed[idx] += 1;
                continue 'outer;
            }
        }
        // above the last closed bin: belongs to the open tail
        observed[bins.len() - 1] += 1;
    }
    let statistic: f64 = bins
        .iter()
        .zip(&observed)
        .map(|(&(_, _, e), &o)| (o as f64 - e).powi(2) / e)
        .sum();
    let df = bins.len() - 1;
    Ok(GofResult {
        statistic,
        df,
        p_value: chisq_upper_tail(statistic, df),
    })
}

/// Two-sample chi-square homogeneity test over pooled count bins.
pub fn chisq_two_sample(a: &[u64], b: &[u64]) -> Result<GofResult, StatsError> {
    if a.len() < 100 || b.len() < 100 {
        return Err(StatsError::InsufficientData {
            need: 100,
            got: a.len().min(b.len()),
        });
    }
    let kmax = a.iter().chain(b).copied().max().unwrap_or(0);
    let mut ca = vec![0u64; kmax as usize + 1];
    let mut cb = vec![0u64; kmax as usize + 1];
    for &v in a {
        ca[v as usize] += 1;
    }
    for &v in b {
        cb[v as usize] += 1;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    // pool adjacent counts until both expected frequencies reach 5
    let mut bins: Vec<(u64, u64)> = Vec::new();
    let (mut oa, mut ob) = (0u64, 0u64);
    for k in 0..=kmax as usize {
        oa += ca[k];
        ob += cb[k];
        let pooled = (oa + ob) as f64 / (na + nb);
        if na * pooled >= MIN_EXPECTED_PER_BIN && nb * pooled >= MIN_EXPECTED_PER_BIN {
            bins.push((oa, ob));
            oa = 0;
            ob = 0;
        }
    }
    if oa + ob > 0 {
        if let Some(last) = bins.last_mut() {
            last.0 += oa;
            last.1 += ob;
        }
    }
    if bins.len() < 2 {
        return Err(StatsError::TooFewBins);
    }
    let statistic: f64 = bins
        .iter()
        .map(|&(x, y)| {
            let pooled = (x + y) as f64 / (na + nb);
            let (ea, eb) = (na * pooled, nb * pooled);
            (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb
        })
        .sum();
    let df = bins.len() - 1;
    Ok(GofResult {
        statistic,
        df,
        p_value: chisq_upper_tail(statistic, df),
    })
}

/// One row per count value 0..=max(observed).
#[derive(Debug, Clone)]
pub struct ObsExpRow {
    pub k: u64,
    pub observed: u64,
    pub expected: f64,
}

pub fn observed_vs_expected(column: &[u64], rate: Rate) -> Vec<ObsExpRow> {
    let n = column.len() as f64;
    let kmax = column.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0u64; kmax as usize + 1];
    for &v in column {
        counts[v as usize] += 1;
    }
    let lam = rate.get();
    let mut pmf = (-lam).exp();
    let mut rows = Vec::with_capacity(counts.len());
    for (k, &observed) in counts.iter().enumerate() {
        let expected = if pmf > 0.0 {
            n * pmf
        } else {
            n * poisson_pmf(k as u64, rate)
        };
        rows.push(ObsExpRow {
            k: k as u64,
            observed,
            expected,
        });
        pmf *= lam / (k as f64 + 1.0);
    }
    rows
}

/// Everything the validation report checks for one sample matrix.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub empirical_corr: Vec<Vec<f64>>,
    pub target_corr: Vec<Vec<f64>>,
    pub max_corr_error: f64,
    pub marginal_means: Vec<f64>,
    pub marginal_variances: Vec<f64>,
    pub gof: Vec<GofResult>,
    pub obs_vs_exp: Vec<Vec<ObsExpRow>>,
    pub n: usize,
}

impl ValidationReport {
    pub fn compute(samples: &SampleMatrix) -> Result<ValidationReport, StatsError> {
        let spec = samples.spec();
        let p = samples.p();
        let empirical_corr = empirical_correlation(samples)?;
        let target_corr: Vec<Vec<f64>> = (0..p)
            .map(|i| (0..p).map(|j| spec.target().entry(i, j)).collect())
            .collect();
        let mut max_corr_error = 0.0f64;
        for i in 0..p {
            for j in (i + 1)..p {
                max_corr_error = max_corr_error.max((empirical_corr[i][j] - target_corr[i][j]).abs());
            }
        }
        let summary = marginal_summary(samples)?;
        let mut gof = Vec::with_capacity(p);
        let mut obs_vs_exp = Vec::with_capacity(p);
        for j in 0..p {
            let col = samples.column(j);
            gof.push(chisq_gof(&col, spec.rates()[j])?);
            obs_vs_exp.push(observed_vs_expected(&col, spec.rates()[j]));
        }
        Ok(ValidationReport {
            empirical_corr,
            target_corr,
            max_corr_error,
            marginal_means: summary.iter().map(|s| s.0).collect(),
            marginal_variances: summary.iter().map(|s| s.1).collect(),
            gof,
            obs_vs_exp,
            n: samples.n(),
        })
    }

    /// 3 Monte Carlo standard errors for the sample mean of Poisson(lambda).
    pub fn mean_tolerance(lambda: f64, n: usize) -> f64 {
        3.0 * (lambda / n as f64).sqrt()
    }

    /// 3 Monte Carlo standard errors for the unbiased sample variance:
    /// Var(s^2) ~ (lambda + 2 lambda^2)/n for Poisson.
    pub fn variance_tolerance(lambda: f64, n: usize) -> f64 {
        3.0 * ((lambda + 2.0 * lambda * lambda) / n as f64).sqrt()
    }

    /// Apply the acceptance thresholds: correlation error, per-column GOF,
    /// and mean/variance within 3 Monte Carlo standard errors.
    pub fn passes(&self, rates: &[Rate]) -> bool {
        self.failures(rates).is_empty()
    }

    pub fn failures(&self, rates: &[Rate]) -> Vec<String> {
        let mut out = Vec::new();
        if self.max_corr_error >= MAX_CORR_ERROR {
            out.push(format!(
                "max_corr_error {} >= {}",
                self.max_corr_error, MAX_CORR_ERROR
            ));
        }
        for (j, r) in rates.iter().enumerate() {
            let lam = r.get();
            if self.gof[j].p_value <= GOF_SIGNIFICANCE {
                out.push(format!(
                    "column {j}: gof p-value {} <= {}",
                    self.gof[j].p_value, GOF_SIGNIFICANCE
                ));
            }
            let mtol = Self::mean_tolerance(lam, self.n);
            if (self.marginal_means[j] - lam).abs() > mtol {
                out.push(format!(
                    "column {j}: |mean {} - {lam}| > {mtol}",
                    self.marginal_means[j]
                ));
            }
            let vtol = Self::variance_tolerance(lam, self.n);
            if (self.marginal_variances[j] - lam).abs() > vtol {
                out.push(format!(
                    "column {j}: |variance {} - {lam}| > {vtol}",
                    self.marginal_variances[j]
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrmat::{CorrelationMatrix, Space};
    use crate::copula::CopulaSpec;
    use crate::randsrc::{NormalSampler, RandomStream};
    use crate::scalardist::poisson_sample_interarrival;

    fn rate(l: f64) -> Rate {
        Rate::new(l).unwrap()
    }

    fn matrix_from_columns(cols: Vec<Vec<u64>>) -> SampleMatrix {
        let p = cols.len();
        let n = cols[0].len();
        let mut counts = Vec::with_capacity(n * p);
        for r in 0..n {
            for c in cols.iter() {
                counts.push(c[r]);
            }
        }
        let spec = CopulaSpec::new(
            vec![rate(1.0); p],
            CorrelationMatrix::identity(p, Space::PoissonTarget),
            Some(false),
            NormalSampler::Exact,
        )
        .unwrap();
        SampleMatrix::from_counts(counts, n, p, spec, 0)
    }

    #[test]
    fn duplicated_column_gives_unit_correlation() {
        let col: Vec<u64> = (0..500).map(|i| i % 7).collect();
        let s = matrix_from_columns(vec![col.clone(), col]);
        let c = empirical_correlation(&s).unwrap();
        assert!((c[0][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_columns_near_zero_correlation() {
        let mut st = RandomStream::new(3);
        let n = 50_000;
        let a: Vec<u64> = (0..n).map(|_| poisson_sample_interarrival(rate(2.0), &mut st)).collect();
        let b: Vec<u64> = (0..n).map(|_| poisson_sample_interarrival(rate(2.0), &mut st)).collect();
        let s = matrix_from_columns(vec![a, b]);
        let c = empirical_correlation(&s).unwrap();
        assert!(c[0][1].abs() < 0.014);
    }

    #[test]
    fn constant_column_rejected() {
        let s = matrix_from_columns(vec![vec![3u64; 100], (0..100).collect()]);
        assert!(matches!(
            empirical_correlation(&s),
            Err(StatsError::DegenerateColumn(0))
        ));
    }

    #[test]
    fn marginal_summary_all_zeros() {
        let s = matrix_from_columns(vec![vec![0u64; 100]]);
        let m = marginal_summary(&s).unwrap();
        assert_eq!(m[0], (0.0, 0.0));
    }

    #[test]
    fn marginal_summary_poisson_two() {
        let mut st = RandomStream::new(5);
        let n = 50_000;
        let col: Vec<u64> = (0..n).map(|_| poisson_sample_interarrival(rate(2.0), &mut st)).collect();
        let s = matrix_from_columns(vec![col]);
        let m = marginal_summary(&s).unwrap();
        assert!((m[0].0 - 2.0).abs() < 0.02);
        assert!((m[0].1 - 2.0).abs() < 0.06);
    }

    #[test]
    fn marginal_summary_poisson_fifteen_variance() {
        let mut st = RandomStream::new(8);
        let n = 50_000;
        let col: Vec<u64> = (0..n).map(|_| poisson_sample_interarrival(rate(15.0), &mut st)).collect();
        let s = matrix_from_columns(vec![col]);
        let m = marginal_summary(&s).unwrap();
        assert!((m[0].1 - 15.0).abs() < 0.6);
    }

    #[test]
    fn gof_accepts_null_sample() {
        let mut st = RandomStream::new(13);
        let col: Vec<u64> = (0..1_000_000)
            .map(|_| poisson_sample_interarrival(rate(2.0), &mut st))
            .collect();
        let g = chisq_gof(&col, rate(2.0)).unwrap();
        assert!(g.p_value > GOF_SIGNIFICANCE, "p = {}", g.p_value);
    }

    #[test]
    fn gof_rejects_wrong_rate() {
        let mut st = RandomStream::new(17);
        let col: Vec<u64> = (0..50_000)
            .map(|_| poisson_sample_interarrival(rate(4.0), &mut st))
            .collect();
        let g = chisq_gof(&col, rate(2.0)).unwrap();
        assert!(g.p_value < 1e-6);
    }

    #[test]
    fn gof_pooling_collapse() {
        // constant data against a tiny rate: 0 and the tail pool into one bin
        let col = vec![0u64; 1_000];
        assert!(matches!(
            chisq_gof(&col, rate(0.0001)),
            Err(StatsError::TooFewBins)
        ));
    }

    #[test]
    fn gof_bins_respect_min_expected() {
        for &lam in &[0.3f64, 2.0, 37.0] {
            for bin in pooled_bins(10_000, rate(lam)) {
                assert!(bin.2 >= MIN_EXPECTED_PER_BIN, "lam = {lam}, bin = {bin:?}");
            }
        }
    }

    #[test]
    fn gof_calibrated_under_null() {
        // rejection rate at threshold 0.01 within [0.003, 0.03]
        let runs = 500;
        let mut rejections = 0;
        for seed in 0..runs {
            let mut st = RandomStream::new(1000 + seed);
            let col: Vec<u64> = (0..2_000)
                .map(|_| poisson_sample_interarrival(rate(2.0), &mut st))
                .collect();
            if chisq_gof(&col, rate(2.0)).unwrap().p_value < 0.01 {
                rejections += 1;
            }
        }
        let frac = rejections as f64 / runs as f64;
        assert!((0.003..=0.03).contains(&frac), "rejection rate {frac}");
    }

    #[test]
    fn two_sample_chisq_same_distribution() {
        let mut st = RandomStream::new(19);
        let a: Vec<u64> = (0..100_000).map(|_| poisson_sample_interarrival(rate(2.0), &mut st)).collect();
        let b: Vec<u64> = (0..100_000).map(|_| poisson_sample_interarrival(rate(2.0), &mut st)).collect();
        let g = chisq_two_sample(&a, &b).unwrap();
        assert!(g.p_value > GOF_SIGNIFICANCE);
    }

    #[test]
    fn two_sample_chisq_detects_shift() {
        let mut st = RandomStream::new(23);
        let a: Vec<u64> = (0..100_000).map(|_| poisson_sample_interarrival(rate(2.0), &mut st)).collect();
        let b: Vec<u64> = (0..100_000).map(|_| poisson_sample_interarrival(rate(2.5), &mut st)).collect();
        let g = chisq_two_sample(&a, &b).unwrap();
        assert!(g.p_value < 1e-9);
    }

    #[test]
    fn obs_vs_exp_single_row() {
        let rows = observed_vs_expected(&[3], rate(2.0));
        assert_eq!(rows.len(), 4);
        let obs: Vec<u64> = rows.iter().map(|r| r.observed).collect();
        assert_eq!(obs, vec![0, 0, 0, 1]);
        assert!((rows[0].expected - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn obs_vs_exp_matches_sample() {
        let mut st = RandomStream::new(29);
        let n = 50_000;
        let col: Vec<u64> = (0..n).map(|_| poisson_sample_interarrival(rate(2.0), &mut st)).collect();
        let rows = observed_vs_expected(&col, rate(2.0));
        for r in rows.iter().filter(|r| r.k <= 8) {
            // 4 sigma binomial bound per bin
            let sd = (r.expected * (1.0 - r.expected / n as f64)).sqrt();
            assert!(
                (r.observed as f64 - r.expected).abs() < 4.0 * sd,
                "k = {}, obs = {}, exp = {}",
                r.k,
                r.observed,
                r.expected
            );
        }
        // expected mass nearly complete once the observed max covers the tail
        let total: f64 = rows.iter().map(|r| r.expected).sum();
        if rows.last().unwrap().k as f64 >= 2.0 + 6.0 * 2.0f64.sqrt() {
            assert!((total - n as f64).abs() < 0.01 * n as f64);
        }
    }

    #[test]
    fn validation_report_on_generated_sample() {
        use crate::corrmat::validate_correlation;
        use nalgebra::DMatrix;
        let target = validate_correlation(
            &DMatrix::from_row_slice(3, 3, &[1.0, 0.4, 0.4, 0.4, 1.0, 0.4, 0.4, 0.4, 1.0]),
            Space::PoissonTarget,
        )
        .unwrap();
        let spec = CopulaSpec::new(
            vec![rate(2.0); 3],
            target,
            Some(false),
            NormalSampler::Exact,
        )
        .unwrap();
        let s = crate::copula::generate(&spec, 50_000, 11).unwrap();
        let report = ValidationReport::compute(&s).unwrap();
        assert!(
            report.passes(spec.rates()),
            "failures: {:?}",
            report.failures(spec.rates())
        );
        // observed frequencies per column sum to n
        for col in &report.obs_vs_exp {
            assert_eq!(col.iter().map(|r| r.observed).sum::<u64>() as usize, s.n());
        }
    }
}
