//! Synthetic EP-versus-Gibbs comparison over a grid of dimensions.
//!
//! For every `(scenario, p)` cell a training set and `n_test` test rows are
//! generated, EP is fitted with the automatically chosen engine, and its
//! predictive probabilities are compared against a sampling baseline. The cell
//! summary is the median and quartiles of the absolute differences taken
//! across the test units.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::ep::{fit, EngineChoice, EpConfig};
use crate::error::{Error, Result};
use crate::oracles::{gibbs_predictive, hmc_predictive, GibbsSpec};

/// Between-row correlation of the `correlated` scenario.
pub const EQUICORRELATION: f64 = 0.5;
/// Nonzero coefficients in the `sparse` scenario.
pub const SPARSE_NONZEROS: usize = 10;
/// Degrees of freedom of the `heavy-tail` covariates.
pub const HEAVY_TAIL_DOF: f64 = 5.0;

/// Grid used by the default replica.
pub const DEFAULT_P_GRID: [usize; 5] = [50, 100, 200, 400, 800];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Standard normal covariates, `β*_j ~ N(0, 0.25)`.
    IidWeak,
    /// Standard normal covariates, `β*_j ~ N(0, 4)`.
    IidStrong,
    /// Equicorrelated normal covariates with unit variance, `β*_j ~ N(0, 1)`.
    Correlated,
    /// Standard normal covariates, ten coefficients `~ N(0, 4)`, the rest zero.
    Sparse,
    /// Student-t covariates rescaled to unit variance, `β*_j ~ N(0, 1)`.
    HeavyTail,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::IidWeak,
        Scenario::IidStrong,
        Scenario::Correlated,
        Scenario::Sparse,
        Scenario::HeavyTail,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::IidWeak => "iid-weak",
            Scenario::IidStrong => "iid-strong",
            Scenario::Correlated => "correlated",
            Scenario::Sparse => "sparse",
            Scenario::HeavyTail => "heavy-tail",
        }
    }

    fn index(self) -> u64 {
        Scenario::ALL.iter().position(|&s| s == self).unwrap() as u64
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub n: usize,
    pub n_test: usize,
    pub p_grid: Vec<usize>,
    pub prior_variance: f64,
    pub scenario: Scenario,
    pub seed: u64,
}

impl ScenarioSpec {
    /// `n = 100`, `ñ = 50`, `ν² = 25` over the default grid.
    pub fn replica(scenario: Scenario, seed: u64) -> Self {
        Self {
            n: 100,
            n_test: 50,
            p_grid: DEFAULT_P_GRID.to_vec(),
            prior_variance: 25.0,
            scenario,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n_test == 0 {
            return Err(Error::Config("n and n_test must be at least 1".into()));
        }
        if self.p_grid.is_empty() {
            return Err(Error::Config("p grid is empty".into()));
        }
        if self.p_grid.contains(&0) {
            return Err(Error::Config("p grid entries must be at least 1".into()));
        }
        if self.p_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("p grid must be strictly ascending".into()));
        }
        if !(self.prior_variance.is_finite() && self.prior_variance > 0.0) {
            return Err(Error::Config(format!(
                "prior variance must be positive and finite, got {}",
                self.prior_variance
            )));
        }
        Ok(())
    }
}

/// Random stream roles within one `(scenario, p)` cell.
#[derive(Debug, Clone, Copy)]
enum Purpose {
    Coefficients = 0,
    TrainCovariates = 1,
    Labels = 2,
    TestCovariates = 3,
    Baseline = 4,
}

fn stream_rng(spec: &ScenarioSpec, p: usize, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream((spec.scenario.index() << 56) | ((p as u64) << 8) | purpose as u64);
    rng
}

fn true_coefficients(scenario: Scenario, p: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let normal = |rng: &mut ChaCha8Rng, sd: f64| sd * Distribution::<f64>::sample(&StandardNormal, rng);
    match scenario {
        Scenario::IidWeak => DVector::from_fn(p, |_, _| normal(rng, 0.5)),
        Scenario::IidStrong => DVector::from_fn(p, |_, _| normal(rng, 2.0)),
        Scenario::Correlated | Scenario::HeavyTail => DVector::from_fn(p, |_, _| normal(rng, 1.0)),
        Scenario::Sparse => {
            let mut beta = DVector::zeros(p);
            for j in rand::seq::index::sample(rng, p, SPARSE_NONZEROS.min(p)) {
                beta[j] = normal(rng, 2.0);
            }
            beta
        }
    }
}

fn covariates(scenario: Scenario, rows: usize, p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(rows, p);
    match scenario {
        Scenario::IidWeak | Scenario::IidStrong | Scenario::Sparse => {
            for i in 0..rows {
                for j in 0..p {
                    x[(i, j)] = StandardNormal.sample(rng);
                }
            }
        }
        Scenario::Correlated => {
            let (a, b) = (EQUICORRELATION.sqrt(), (1.0 - EQUICORRELATION).sqrt());
            for i in 0..rows {
                let g: f64 = StandardNormal.sample(rng);
                for j in 0..p {
                    let e: f64 = StandardNormal.sample(rng);
                    x[(i, j)] = a * g + b * e;
                }
            }
        }
        Scenario::HeavyTail => {
            let t = StudentT::new(HEAVY_TAIL_DOF).unwrap();
            let scale = ((HEAVY_TAIL_DOF - 2.0) / HEAVY_TAIL_DOF).sqrt();
            for i in 0..rows {
                for j in 0..p {
                    x[(i, j)] = scale * t.sample(rng);
                }
            }
        }
    }
    x
}

/// Labels from the probit model: `y_i = 1{x_iᵀβ + ε_i > 0}`, `ε_i ~ N(0, 1)`.
pub fn draw_labels<R: Rng + ?Sized>(x: &DMatrix<f64>, beta: &DVector<f64>, rng: &mut R) -> Vec<u8> {
    let eta = x * beta;
    eta.iter()
        .map(|&e| {
            let noise: f64 = StandardNormal.sample(rng);
            u8::from(e + noise > 0.0)
        })
        .collect()
}

/// Training data and test covariates for one grid point. Every call with the
/// same seed, scenario and `p` returns the same values.
pub fn generate_synthetic(spec: &ScenarioSpec, p: usize) -> Result<(Dataset, DMatrix<f64>)> {
    spec.validate()?;
    if p == 0 {
        return Err(Error::Config("p must be at least 1".into()));
    }
    let beta = true_coefficients(spec.scenario, p, &mut stream_rng(spec, p, Purpose::Coefficients));
    let x = covariates(spec.scenario, spec.n, p, &mut stream_rng(spec, p, Purpose::TrainCovariates));
    let y = draw_labels(&x, &beta, &mut stream_rng(spec, p, Purpose::Labels));
    let x_test = covariates(spec.scenario, spec.n_test, p, &mut stream_rng(spec, p, Purpose::TestCovariates));
    Ok((Dataset::new(x, y, spec.prior_variance)?, x_test))
}

/// Quantile of sorted data by linear interpolation between order statistics,
/// with `q = 0` and `q = 1` mapping to the minimum and maximum.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    assert!((0.0..=1.0).contains(&q), "quantile level {q} outside [0, 1]");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Reference sampler for the predictive probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Baseline {
    /// Exact Hamiltonian Monte Carlo on the latent utilities.
    #[default]
    Hmc,
    /// Albert–Chib data-augmentation Gibbs.
    Gibbs,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::Hmc => "hmc",
            Baseline::Gibbs => "gibbs",
        }
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hmc" => Ok(Baseline::Hmc),
            "gibbs" => Ok(Baseline::Gibbs),
            other => Err(Error::Config(format!(
                "unknown baseline `{other}` (expected hmc or gibbs)"
            ))),
        }
    }
}

/// Solver settings shared by every cell of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyOptions {
    pub ep: EpConfig,
    pub baseline: Baseline,
    pub burn_in: usize,
    pub draws: usize,
    /// Worker threads; `None` uses the number of logical cores. Always capped
    /// at the number of cells.
    pub jobs: Option<usize>,
}

impl Default for StudyOptions {
    fn default() -> Self {
        let g = GibbsSpec::default();
        Self {
            ep: EpConfig::default(),
            baseline: Baseline::default(),
            burn_in: g.burn_in,
            draws: g.draws,
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub scenario: Scenario,
    pub p: usize,
    pub median_abs_diff: f64,
    pub q1: f64,
    pub q3: f64,
    /// EP fit plus predict wall time.
    pub ep_seconds: f64,
    pub fit_seconds: f64,
    pub predict_seconds: f64,
    pub baseline_seconds: f64,
    pub ep_sweeps: usize,
    pub skipped_updates: usize,
    pub converged: bool,
    pub engine: &'static str,
    /// `|EP − baseline|` for each test unit, in test order.
    pub abs_diffs: Vec<f64>,
    /// Largest batch-means standard error of the baseline.
    pub baseline_max_se: f64,
}

impl StudyRow {
    /// Copy with all wall-clock fields zeroed.
    pub fn without_timings(&self) -> StudyRow {
        StudyRow {
            ep_seconds: 0.0,
            fit_seconds: 0.0,
            predict_seconds: 0.0,
            baseline_seconds: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
}

fn run_cell(spec: &ScenarioSpec, p: usize, opts: &StudyOptions) -> Result<StudyRow> {
    let (data, x_test) = generate_synthetic(spec, p)?;

    let start = Instant::now();
    let model = fit(&data, &opts.ep, EngineChoice::Auto)?;
    let fit_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let ep = model.posterior.predict_batch(&x_test)?;
    let predict_seconds = start.elapsed().as_secs_f64();

    let gibbs = GibbsSpec {
        burn_in: opts.burn_in,
        draws: opts.draws,
        seed: stream_rng(spec, p, Purpose::Baseline).next_u64(),
    };
    let start = Instant::now();
    let baseline = match opts.baseline {
        Baseline::Hmc => hmc_predictive(&data, &x_test, &gibbs)?,
        Baseline::Gibbs => gibbs_predictive(&data, &x_test, &gibbs)?,
    };
    let baseline_seconds = start.elapsed().as_secs_f64();

    let abs_diffs: Vec<f64> = ep
        .iter()
        .zip(&baseline.probs)
        .map(|(e, b)| (e.probability - b).abs())
        .collect();
    let mut sorted = abs_diffs.clone();
    sorted.sort_by(f64::total_cmp);
    let baseline_max_se = baseline
        .standard_errors
        .iter()
        .copied()
        .fold(f64::NAN, f64::max);

    Ok(StudyRow {
        scenario: spec.scenario,
        p,
        median_abs_diff: quantile(&sorted, 0.5),
        q1: quantile(&sorted, 0.25),
        q3: quantile(&sorted, 0.75),
        ep_seconds: fit_seconds + predict_seconds,
        fit_seconds,
        predict_seconds,
        baseline_seconds,
        ep_sweeps: model.diagnostics.sweeps_run,
        skipped_updates: model.diagnostics.skipped_updates,
        converged: model.diagnostics.converged,
        engine: model.engine.name(),
        abs_diffs,
        baseline_max_se,
    })
}

/// Runs every `(scenario, p)` cell of the given specs. Cells may execute in
/// parallel; rows come back in spec order, then grid order.
pub fn run_studies(specs: &[ScenarioSpec], opts: &StudyOptions) -> Result<StudyReport> {
    opts.ep.validate()?;
    GibbsSpec {
        burn_in: opts.burn_in,
        draws: opts.draws,
        seed: 0,
    }
    .validate()?;
    for spec in specs {
        spec.validate()?;
    }
    let cells: Vec<(&ScenarioSpec, usize)> = specs
        .iter()
        .flat_map(|s| s.p_grid.iter().map(move |&p| (s, p)))
        .collect();
    if cells.is_empty() {
        return Ok(StudyReport::default());
    }
    let threads = opts
        .jobs
        .unwrap_or_else(rayon::current_num_threads)
        .clamp(1, cells.len());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let rows = pool.install(|| {
        cells
            .par_iter()
            .map(|&(spec, p)| {
                run_cell(spec, p, opts).map_err(|e| Error::InScenario {
                    scenario: spec.scenario.name(),
                    p,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(StudyReport { rows })
}

pub fn run_study(spec: &ScenarioSpec, opts: &StudyOptions) -> Result<StudyReport> {
    run_studies(std::slice::from_ref(spec), opts)
}
