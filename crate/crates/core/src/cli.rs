//! Command-line front end: run-config parsing, CSV I/O, report
//! formatting, and the generate/bounds/correct/validate/demo commands.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::copula::{
    self, feasible_bounds, fit_correction, CopulaError, CopulaSpec, SampleMatrix,
    DEFAULT_GRID_SIZE,
};
use crate::corrmat::{validate_correlation, CorrelationMatrix, Space};
use crate::randsrc::NormalSampler;
use crate::scalardist::Rate;
use crate::stats::ValidationReport;

/// Process exit codes for the CLI error classes.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key '{key}': {message}")]
    BadValue {
        line: usize,
        key: String,
        message: String,
    },
    #[error("line {line}: expected 'key = value'")]
    BadSyntax { line: usize },
    #[error("line {line}: duplicate key '{key}'")]
    DuplicateKey { line: usize, key: String },
    #[error("missing required key '{0}'")]
    MissingKey(&'static str),
    #[error("lambda has {got} entries, expected p = {p}")]
    LambdaLength { got: usize, p: usize },
    #[error("corr has {got} rows, expected p = {p}")]
    CorrRows { got: usize, p: usize },
    #[error("corr row {row} has {got} entries, expected p = {p}")]
    CorrRowLength { row: usize, got: usize, p: usize },
    #[error("n must be positive")]
    ZeroN,
    #[error("invalid correlation matrix: {0}")]
    Matrix(#[from] crate::corrmat::CorrError),
    #[error("invalid rate: {0}")]
    Rate(#[from] crate::scalardist::ScalarError),
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("empty file")]
    Empty,
    #[error("bad header: expected 'x1,...,xp', got '{0}'")]
    BadHeader(String),
    #[error("line {line}: expected {expected} fields, got {got}")]
    FieldCount {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}, field {field}: '{value}' is not a non-negative integer")]
    BadField {
        line: usize,
        field: usize,
        value: String,
    },
}

/// Parsed run configuration (flat `key = value` text file).
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub p: usize,
    pub n: usize,
    pub seed: u64,
    pub lambda: Vec<f64>,
    pub corr: Vec<Vec<f64>>,
    pub apply_correction: Option<bool>,
    pub sampler: Option<NormalSampler>,
    pub output_path: Option<String>,
}

impl RunConfig {
    pub fn to_spec(&self) -> Result<CopulaSpec, ConfigError> {
        if self.n == 0 {
            return Err(ConfigError::ZeroN);
        }
        let rates = self
            .lambda
            .iter()
            .map(|&l| Rate::new(l))
            .collect::<Result<Vec<_>, _>>()?;
        let raw = DMatrix::from_fn(self.p, self.p, |i, j| self.corr[i][j]);
        let target = validate_correlation(&raw, Space::PoissonTarget)?;
        Ok(CopulaSpec::new(
            rates,
            target,
            self.apply_correction,
            self.sampler.unwrap_or(NormalSampler::Exact),
        )
        .expect("dimensions checked during parsing"))
    }
}

fn parse_number<T: std::str::FromStr>(
    line: usize,
    key: &str,
    value: &str,
) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.to_string(),
        message: format!("cannot parse '{}'", value.trim()),
    })
}

fn parse_real_row(line: usize, key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| ConfigError::BadValue {
                line,
                key: key.to_string(),
                message: format!("cannot parse '{tok}' as a real number"),
            })
        })
        .collect()
}

/// Parse the flat run-config format. Lines are `key = value`; `#` starts a
/// comment; `corr_row` repeats once per matrix row; `lambda` and matrix
/// rows are whitespace-separated reals.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut p: Option<usize> = None;
    let mut n: Option<usize> = None;
    let mut seed: Option<u64> = None;
    let mut lambda: Option<Vec<f64>> = None;
    let mut corr_rows: Vec<Vec<f64>> = Vec::new();
    let mut apply_correction: Option<bool> = None;
    let mut sampler: Option<NormalSampler> = None;
    let mut output_path: Option<String> = None;

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::BadSyntax { line });
        };
        let key = key.trim();
        let value = value.trim();
        let dup = |k: &str| ConfigError::DuplicateKey {
            line,
            key: k.to_string(),
        };
        match key {
            "p" => {
                if p.replace(parse_number(line, key, value)?).is_some() {
                    return Err(dup(key));
                }
            }
            "n" => {
                if n.replace(parse_number(line, key, value)?).is_some() {
                    return Err(dup(key));
                }
            }
            "seed" => {
                if seed.replace(parse_number(line, key, value)?).is_some() {
                    return Err(dup(key));
                }
            }
            "lambda" => {
                if lambda.replace(parse_real_row(line, key, value)?).is_some() {
                    return Err(dup(key));
                }
            }
            "corr_row" => corr_rows.push(parse_real_row(line, key, value)?),
            "apply_correction" => {
                let b = match value {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(ConfigError::BadValue {
                            line,
                            key: key.to_string(),
                            message: format!("expected true or false, got '{other}'"),
                        })
                    }
                };
                if apply_correction.replace(b).is_some() {
                    return Err(dup(key));
                }
            }
            "sampler" => {
                let s = match value {
                    "exact" => NormalSampler::Exact,
                    "clt" => NormalSampler::Clt,
                    other => {
                        return Err(ConfigError::BadValue {
                            line,
                            key: key.to_string(),
                            message: format!("expected exact or clt, got '{other}'"),
                        })
                    }
                };
                if sampler.replace(s).is_some() {
                    return Err(dup(key));
                }
            }
            "out" => {
                if output_path.replace(value.to_string()).is_some() {
                    return Err(dup(key));
                }
            }
            "output_format" => {
                if value != "csv" {
                    return Err(ConfigError::BadValue {
                        line,
                        key: key.to_string(),
                        message: format!("only 'csv' is supported, got '{value}'"),
                    });
                }
            }
            other => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: other.to_string(),
                })
            }
        }
    }

    let p = p.ok_or(ConfigError::MissingKey("p"))?;
    let n = n.ok_or(ConfigError::MissingKey("n"))?;
    let seed = seed.ok_or(ConfigError::MissingKey("seed"))?;
    let lambda = lambda.ok_or(ConfigError::MissingKey("lambda"))?;
    if lambda.len() != p {
        return Err(ConfigError::LambdaLength {
            got: lambda.len(),
            p,
        });
    }
    if corr_rows.len() != p {
        return Err(ConfigError::CorrRows {
            got: corr_rows.len(),
            p,
        });
    }
    for (row, r) in corr_rows.iter().enumerate() {
        if r.len() != p {
            return Err(ConfigError::CorrRowLength {
                row: row + 1,
                got: r.len(),
                p,
            });
        }
    }
    Ok(RunConfig {
        p,
        n,
        seed,
        lambda,
        corr: corr_rows,
        apply_correction,
        sampler,
        output_path,
    })
}

/// Render a sample matrix as CSV: header `x1,...,xp`, one integer row per
/// draw, LF line endings, no quoting.
pub fn render_csv(samples: &SampleMatrix) -> String {
    let p = samples.p();
    let header: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    let mut out = String::with_capacity(samples.n() * p * 3);
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..samples.n() {
        let row = samples.row(r);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

/// Parse CSV produced by `render_csv`: returns (p, row-major counts, n).
pub fn parse_csv(text: &str) -> Result<(usize, Vec<u64>, usize), CsvError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(CsvError::Empty)?;
    let cols: Vec<&str> = header.split(',').collect();
    let p = cols.len();
    for (j, c) in cols.iter().enumerate() {
        if *c != format!("x{}", j + 1) {
            return Err(CsvError::BadHeader(header.to_string()));
        }
    }
    let mut counts = Vec::new();
    let mut n = 0usize;
    for (idx, row) in lines.enumerate() {
        let line = idx + 2;
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != p {
            return Err(CsvError::FieldCount {
                line,
                expected: p,
                got: fields.len(),
            });
        }
        for (field, tok) in fields.iter().enumerate() {
            let v: u64 = tok.parse().map_err(|_| CsvError::BadField {
                line,
                field: field + 1,
                value: tok.to_string(),
            })?;
            counts.push(v);
        }
        n += 1;
    }
    Ok((p, counts, n))
}

fn format_matrix(prefix: &str, m: &[Vec<f64>], out: &mut String) {
    for (i, row) in m.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(out, "{prefix}[{i}] = {}", cells.join(" "));
    }
}

fn corr_rows(m: &CorrelationMatrix) -> Vec<Vec<f64>> {
    let p = m.dim();
    (0..p)
        .map(|i| (0..p).map(|j| m.entry(i, j)).collect())
        .collect()
}

/// Structured text report for a generation run.
pub fn generation_report(
    samples: &SampleMatrix,
    prepared: &copula::Prepared,
    elapsed_ms: f64,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "seed = {}", samples.seed());
    let _ = writeln!(out, "n = {}", samples.n());
    let _ = writeln!(out, "p = {}", samples.p());
    let _ = writeln!(
        out,
        "apply_correction = {}",
        samples.spec().apply_correction()
    );
    format_matrix("normal_side_corr", &corr_rows(&prepared.normal_side), &mut out);
    let _ = writeln!(out, "psd_adjustment = {:.6e}", prepared.psd_adjustment);
    if let Ok(report) = ValidationReport::compute(samples) {
        format_matrix("empirical_corr", &report.empirical_corr, &mut out);
        let _ = writeln!(out, "max_corr_error = {:.6}", report.max_corr_error);
    }
    let _ = writeln!(out, "elapsed_ms = {elapsed_ms:.1}");
    out
}

/// Full validation report as structured text (stable keys).
pub fn validation_report_text(report: &ValidationReport, rates: &[Rate]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "n = {}", report.n);
    format_matrix("target_corr", &report.target_corr, &mut out);
    format_matrix("empirical_corr", &report.empirical_corr, &mut out);
    let _ = writeln!(out, "max_corr_error = {:.6}", report.max_corr_error);
    for (j, r) in rates.iter().enumerate() {
        let _ = writeln!(
            out,
            "column[{j}] lambda = {} mean = {:.6} variance = {:.6} gof_statistic = {:.4} gof_df = {} gof_p = {:.6e}",
            r.get(),
            report.marginal_means[j],
            report.marginal_variances[j],
            report.gof[j].statistic,
            report.gof[j].df,
            report.gof[j].p_value,
        );
    }
    for (j, rows) in report.obs_vs_exp.iter().enumerate() {
        for row in rows {
            let _ = writeln!(
                out,
                "obs_vs_exp[{j}][{}] observed = {} expected = {:.2}",
                row.k, row.observed, row.expected
            );
        }
    }
    let failures = report.failures(rates);
    let _ = writeln!(out, "pass = {}", failures.is_empty());
    for f in &failures {
        let _ = writeln!(out, "failure = {f}");
    }
    out
}

/// CLI-level error with its exit code and machine-parsable prefix.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("error[config]: {0}")]
    Config(String),
    #[error("error[infeasible]: {0}")]
    Infeasible(String),
    #[error("error[validation]: {0}")]
    Validation(String),
    #[error("error[io]: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

fn classify_copula_error(e: CopulaError) -> CliError {
    match e {
        CopulaError::Infeasible { .. } => CliError::Infeasible(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub out: Option<String>,
    pub no_correction: bool,
    pub sampler: Option<NormalSampler>,
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut config = parse_config(&text).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(n) = overrides.n {
        config.n = n;
    }
    if let Some(out) = &overrides.out {
        config.output_path = Some(out.clone());
    }
    if overrides.no_correction {
        config.apply_correction = Some(false);
    }
    if let Some(s) = overrides.sampler {
        config.sampler = Some(s);
    }
    Ok(config)
}

/// Generate samples per config, write CSV, and return the report text.
pub fn cmd_generate(config_path: &Path, overrides: &Overrides) -> Result<String, CliError> {
    let config = load_config(config_path, overrides)?;
    let spec = config
        .to_spec()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let start = Instant::now();
    let prepared = copula::prepare(&spec).map_err(classify_copula_error)?;
    let samples = copula::generate_prepared(&spec, &prepared, config.n, config.seed, true)
        .map_err(classify_copula_error)?;
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    let csv = render_csv(&samples);
    let out_path = config.output_path.as_deref().unwrap_or("samples.csv");
    fs::write(out_path, csv).map_err(|e| CliError::Io(format!("cannot write {out_path}: {e}")))?;
    let mut report = generation_report(&samples, &prepared, elapsed_ms);
    let _ = writeln!(report, "output = {out_path}");
    Ok(report)
}

/// Print feasible bounds and the fitted correction for a rate pair.
pub fn cmd_bounds(lambda1: f64, lambda2: f64, m: usize) -> Result<String, CliError> {
    let l1 = Rate::new(lambda1).map_err(|e| CliError::Config(e.to_string()))?;
    let l2 = Rate::new(lambda2).map_err(|e| CliError::Config(e.to_string()))?;
    let bounds = feasible_bounds(l1, l2, m).map_err(classify_copula_error)?;
    let mut out = String::new();
    let _ = writeln!(out, "lambda1 = {lambda1}");
    let _ = writeln!(out, "lambda2 = {lambda2}");
    let _ = writeln!(out, "grid_size = {m}");
    let _ = writeln!(out, "min_corr = {:.6}", bounds.min_corr);
    let _ = writeln!(out, "max_corr = {:.6}", bounds.max_corr);
    match fit_correction(bounds) {
        Ok(fit) => {
            let _ = writeln!(out, "a = {:.6}", fit.a);
            let _ = writeln!(out, "b = {:.6}", fit.b);
            let _ = writeln!(out, "c = {:.6}", fit.c);
        }
        Err(CopulaError::NearSymmetricBounds { .. }) => {
            let _ = writeln!(out, "fit = near-symmetric bounds; identity correction applies");
        }
        Err(e) => return Err(classify_copula_error(e)),
    }
    Ok(out)
}

/// Print the corrected Normal-side correlation for a rate pair and target.
pub fn cmd_correct(lambda1: f64, lambda2: f64, r: f64, m: usize) -> Result<String, CliError> {
    let l1 = Rate::new(lambda1).map_err(|e| CliError::Config(e.to_string()))?;
    let l2 = Rate::new(lambda2).map_err(|e| CliError::Config(e.to_string()))?;
    let bounds = feasible_bounds(l1, l2, m).map_err(classify_copula_error)?;
    if r <= bounds.min_corr || r >= bounds.max_corr {
        return Err(CliError::Infeasible(format!(
            "requested {r} outside feasible range [{:.6}, {:.6}] for rates ({lambda1}, {lambda2})",
            bounds.min_corr, bounds.max_corr
        )));
    }
    let corrected = match fit_correction(bounds) {
        Ok(fit) => copula::correct_target(r, &fit).map_err(classify_copula_error)?,
        Err(CopulaError::NearSymmetricBounds { .. }) => r,
        Err(e) => return Err(classify_copula_error(e)),
    };
    let mut out = String::new();
    let _ = writeln!(out, "requested = {r}");
    let _ = writeln!(out, "min_corr = {:.6}", bounds.min_corr);
    let _ = writeln!(out, "max_corr = {:.6}", bounds.max_corr);
    let _ = writeln!(out, "corrected = {corrected:.6}");
    Ok(out)
}

/// Validate a CSV of counts against the config that produced it. Returns
/// the report text; errors with EXIT_VALIDATION when thresholds fail.
pub fn cmd_validate(csv_path: &Path, config_path: &Path) -> Result<String, CliError> {
    let config = load_config(config_path, &Overrides::default())?;
    let spec = config
        .to_spec()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let text = fs::read_to_string(csv_path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", csv_path.display())))?;
    let (p, counts, n) = parse_csv(&text).map_err(|e| CliError::Config(e.to_string()))?;
    if p != config.p {
        return Err(CliError::Config(format!(
            "CSV has {p} columns, config says p = {}",
            config.p
        )));
    }
    let samples = SampleMatrix::from_counts(counts, n, p, spec.clone(), config.seed);
    let report = ValidationReport::compute(&samples)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let text = validation_report_text(&report, spec.rates());
    if report.passes(spec.rates()) {
        Ok(text)
    } else {
        Err(CliError::Validation(format!(
            "thresholds violated: {}\n{text}",
            report.failures(spec.rates()).join("; ")
        )))
    }
}

const DEMO_SEED: u64 = 20_240_817;
const DEMO_N: usize = 50_000;

fn demo_generate(
    rates: &[f64],
    corr: &[f64],
    apply_correction: bool,
    seed: u64,
) -> Result<(CopulaSpec, SampleMatrix), CliError> {
    let p = rates.len();
    let rates: Vec<Rate> = rates
        .iter()
        .map(|&l| Rate::new(l).expect("demo rates are positive"))
        .collect();
    let target = validate_correlation(&DMatrix::from_row_slice(p, p, corr), Space::PoissonTarget)
        .expect("demo matrices are valid");
    let spec = CopulaSpec::new(rates, target, Some(apply_correction), NormalSampler::Exact)
        .expect("demo dimensions agree");
    let samples = copula::generate(&spec, DEMO_N, seed).map_err(classify_copula_error)?;
    Ok((spec, samples))
}

fn demo_table(spec: &CopulaSpec, samples: &SampleMatrix) -> Result<String, CliError> {
    let report =
        ValidationReport::compute(samples).map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(validation_report_text(&report, spec.rates()))
}

pub fn cmd_demo(experiment: &str) -> Result<String, CliError> {
    match experiment {
        "const-rate" => {
            let (spec, samples) = demo_generate(
                &[2.0, 2.0, 2.0],
                &[1.0, 0.4, 0.4, 0.4, 1.0, 0.4, 0.4, 0.4, 1.0],
                false,
                DEMO_SEED,
            )?;
            let mut out = String::from("experiment = const-rate\n");
            out.push_str(&demo_table(&spec, &samples)?);
            Ok(out)
        }
        "mixed-rate" => {
            let (spec, samples) = demo_generate(
                &[5.0, 10.0, 15.0],
                &[1.0, -0.4, 0.4, -0.4, 1.0, 0.5, 0.4, 0.5, 1.0],
                false,
                DEMO_SEED,
            )?;
            let mut out = String::from("experiment = mixed-rate\n");
            out.push_str(&demo_table(&spec, &samples)?);
            Ok(out)
        }
        "low-rate-correction" => demo_low_rate_correction(),
        other => Err(CliError::Config(format!(
            "unknown experiment '{other}'; expected const-rate, mixed-rate, or low-rate-correction"
        ))),
    }
}

/// Sweep the low-rate pairs across a feasible correlation grid, with and
/// without the correction, and report max |actual - desired| for each.
fn demo_low_rate_correction() -> Result<String, CliError> {
    let pairs = [(0.1, 0.1), (0.1, 0.5), (0.5, 0.5), (0.5, 0.9), (0.9, 0.9)];
    let mut out = String::from("experiment = low-rate-correction\n");
    for (idx, &(l1, l2)) in pairs.iter().enumerate() {
        let r1 = Rate::new(l1).unwrap();
        let r2 = Rate::new(l2).unwrap();
        let bounds = feasible_bounds(r1, r2, DEFAULT_GRID_SIZE).map_err(classify_copula_error)?;
        let targets: Vec<f64> = (0..9)
            .map(|i| 0.85 * (bounds.min_corr + (bounds.max_corr - bounds.min_corr) * i as f64 / 8.0))
            .collect();
        let mut max_err_corrected = 0.0f64;
        let mut max_err_raw = 0.0f64;
        for (t_idx, &target) in targets.iter().enumerate() {
            let corr = [1.0, target, target, 1.0];
            let seed = DEMO_SEED + (idx * 100 + t_idx) as u64;
            for (corrected, slot) in [
                (true, &mut max_err_corrected),
                (false, &mut max_err_raw),
            ] {
                let (_, samples) = demo_generate(&[l1, l2], &corr, corrected, seed)?;
                let emp = crate::stats::empirical_correlation(&samples)
                    .map_err(|e| CliError::Validation(e.to_string()))?;
                *slot = slot.max((emp[0][1] - target).abs());
            }
        }
        let _ = writeln!(
            out,
            "pair = ({l1}, {l2}) min_corr = {:.4} max_corr = {:.4} max_err_corrected = {:.4} max_err_uncorrected = {:.4}",
            bounds.min_corr, bounds.max_corr, max_err_corrected, max_err_raw
        );
    }
    Ok(out)
}
