use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use probit_ep::oracles::GibbsSpec;
use probit_ep::simstudy::{run_studies, Baseline, StudyOptions};
use probit_ep::{fit, EngineChoice, EpConfig, Scenario, ScenarioSpec};

use crate::artifact::ModelArtifact;
use crate::dataset::{read_covariates, read_dataset};
use crate::error::{CliError, CliResult, EXIT_CHECK_FAILED, EXIT_NOT_CONVERGED, EXIT_OK};
use crate::format::fmt_sig;
use crate::oracle_check::run_checks;
use crate::report::{write_diffs, write_report};

/// Grid used by `simstudy --quick` unless a grid is given.
pub const QUICK_P_GRID: [usize; 1] = [50];
pub const QUICK_BURN_IN: usize = 500;
pub const QUICK_DRAWS: usize = 2_000;

/// Opens `path` for writing, or stdout when `path` is `None` or `-`.
fn sink(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    match path {
        Some(p) if p != Path::new("-") => {
            let file = File::create(p).map_err(|e| CliError::io(p, e))?;
            Ok(Box::new(BufWriter::new(file)))
        }
        _ => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

fn finish(mut w: Box<dyn Write>, path: Option<&Path>) -> CliResult<()> {
    w.flush()
        .map_err(|e| CliError::io(path.unwrap_or(Path::new("<stdout>")), e))
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub prior_variance: f64,
    pub engine: EngineChoice,
    pub ep: EpConfig,
    /// Also write the artifact as text here.
    pub export_text: Option<PathBuf>,
}

/// Fits a model and writes its artifact. Returns the exit code: 0 when
/// converged, 3 when the sweep cap was hit (the artifact is still written).
pub fn cmd_fit(cfg: &FitConfig) -> CliResult<i32> {
    cfg.ep.validate()?;
    let data = read_dataset(&cfg.input, cfg.prior_variance)?;
    let model = fit(&data, &cfg.ep, cfg.engine)?;
    let artifact = ModelArtifact::from_fit(&model);
    artifact.save(&cfg.output)?;
    if let Some(path) = &cfg.export_text {
        std::fs::write(path, artifact.to_text()).map_err(|e| CliError::io(path, e))?;
    }
    let d = &model.diagnostics;
    println!(
        "engine={} converged={} sweeps={} skipped_updates={} n={} p={}",
        model.engine.name(),
        d.converged,
        d.sweeps_run,
        d.skipped_updates,
        data.n(),
        data.p()
    );
    if d.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "error[not-converged]: no convergence after {} sweeps (last max change {}); artifact written and flagged",
            d.sweeps_run,
            d.max_delta_trace.last().map_or("n/a".into(), |v| fmt_sig(*v))
        );
        Ok(EXIT_NOT_CONVERGED)
    }
}

#[derive(Debug, Clone)]
pub struct PredictConfig {
    pub model: PathBuf,
    pub test: PathBuf,
    pub output: Option<PathBuf>,
}

/// Writes one predictive probability per test row, in input order.
pub fn cmd_predict(cfg: &PredictConfig) -> CliResult<i32> {
    let artifact = ModelArtifact::load(&cfg.model)?;
    let x = read_covariates(&cfg.test, artifact.p())?;
    let preds = artifact.posterior.predict_batch(&x)?;
    let mut out = sink(cfg.output.as_deref())?;
    for r in &preds {
        writeln!(out, "{}", fmt_sig(r.probability))
            .map_err(|e| CliError::io(cfg.output.as_deref().unwrap_or(Path::new("<stdout>")), e))?;
    }
    finish(out, cfg.output.as_deref())?;
    Ok(EXIT_OK)
}

#[derive(Debug, Clone)]
pub struct SimstudyConfig {
    pub scenarios: Vec<Scenario>,
    pub p_grid: Option<Vec<usize>>,
    pub n: usize,
    pub n_test: usize,
    pub prior_variance: f64,
    pub seed: u64,
    pub ep: EpConfig,
    pub baseline: Baseline,
    pub burn_in: Option<usize>,
    pub draws: Option<usize>,
    pub jobs: Option<usize>,
    pub quick: bool,
    pub output: Option<PathBuf>,
    pub diffs: Option<PathBuf>,
}

impl SimstudyConfig {
    pub fn specs(&self) -> Vec<ScenarioSpec> {
        let grid = match (&self.p_grid, self.quick) {
            (Some(g), _) => g.clone(),
            (None, true) => QUICK_P_GRID.to_vec(),
            (None, false) => probit_ep::simstudy::DEFAULT_P_GRID.to_vec(),
        };
        self.scenarios
            .iter()
            .map(|&scenario| ScenarioSpec {
                n: self.n,
                n_test: self.n_test,
                p_grid: grid.clone(),
                prior_variance: self.prior_variance,
                scenario,
                seed: self.seed,
            })
            .collect()
    }

    pub fn options(&self) -> StudyOptions {
        let defaults = GibbsSpec::default();
        let (burn_in, draws) = if self.quick {
            (QUICK_BURN_IN, QUICK_DRAWS)
        } else {
            (defaults.burn_in, defaults.draws)
        };
        StudyOptions {
            ep: self.ep,
            baseline: self.baseline,
            burn_in: self.burn_in.unwrap_or(burn_in),
            draws: self.draws.unwrap_or(draws),
            jobs: self.jobs,
        }
    }
}

pub fn cmd_simstudy(cfg: &SimstudyConfig) -> CliResult<i32> {
    if cfg.scenarios.is_empty() {
        return Err(CliError::Invalid("no scenarios selected".into()));
    }
    if cfg.jobs == Some(0) {
        return Err(CliError::Invalid("--jobs must be at least 1".into()));
    }
    let opts = cfg.options();
    match opts.baseline {
        Baseline::Hmc => eprintln!(
            "note: baseline is exact HMC on the latent utilities ({} draws after {} burn-in), standing in for i.i.d. posterior draws",
            opts.draws, opts.burn_in
        ),
        Baseline::Gibbs => eprintln!(
            "note: baseline is Albert-Chib Gibbs ({} draws after {} burn-in), standing in for i.i.d. posterior draws",
            opts.draws, opts.burn_in
        ),
    }
    let report = run_studies(&cfg.specs(), &opts)?;
    let out = sink(cfg.output.as_deref())?;
    write_report(&report, out)?;
    if let Some(path) = &cfg.diffs {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        write_diffs(&report, BufWriter::new(file))?;
    }
    for row in report.rows.iter().filter(|r| !r.converged) {
        eprintln!(
            "note: EP did not converge for scenario {} at p = {} within {} sweeps",
            row.scenario, row.p, row.ep_sweeps
        );
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Clone)]
pub struct OracleCheckConfig {
    pub ep: EpConfig,
    pub gibbs: GibbsSpec,
}

/// Prints one CSV line per check; exit code 1 if any check fails.
pub fn cmd_oracle_check(cfg: &OracleCheckConfig) -> CliResult<i32> {
    let rows = run_checks(&cfg.ep, &cfg.gibbs)?;
    let mut out = sink(None)?;
    let io_err = |e| CliError::io("<stdout>", e);
    writeln!(out, "fixture,check,point,delta,tolerance,status").map_err(io_err)?;
    for r in &rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.fixture,
            r.check,
            r.point,
            fmt_sig(r.delta),
            fmt_sig(r.tolerance),
            if r.passed() { "pass" } else { "FAIL" }
        )
        .map_err(io_err)?;
    }
    finish(out, None)?;
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.passed())
        .map(|r| {
            format!(
                "{}/{}#{} delta={} tolerance={}",
                r.fixture,
                r.check,
                r.point,
                fmt_sig(r.delta),
                fmt_sig(r.tolerance)
            )
        })
        .collect();
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "{}",
            CliError::CheckFailed(format!("{} of {} checks failed: {}", failed.len(), rows.len(), failed.join("; ")))
                .render()
        );
        Ok(EXIT_CHECK_FAILED)
    }
}
