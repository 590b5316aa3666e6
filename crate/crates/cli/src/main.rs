use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use probit_ep::oracles::GibbsSpec;
use probit_ep::simstudy::Baseline;
use probit_ep::{EngineChoice, EpConfig, Scenario, SweepOrder};
use probit_ep_cli::commands::{
    cmd_fit, cmd_oracle_check, cmd_predict, cmd_simstudy, FitConfig, OracleCheckConfig,
    PredictConfig, SimstudyConfig,
};
use probit_ep_cli::error::{CliError, EXIT_INPUT};

#[derive(Parser)]
#[command(name = "probit-ep", version, about = "Expectation propagation for Bayesian probit regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model from a dataset CSV and write a model artifact.
    Fit(FitArgs),
    /// Predictive probabilities for the rows of a covariate CSV.
    Predict(PredictArgs),
    /// Compare EP against a sampling baseline on synthetic data.
    Simstudy(SimstudyArgs),
    /// Check EP and the Gibbs sampler against exact quadrature.
    OracleCheck(OracleArgs),
}

#[derive(Args, Clone)]
struct EpArgs {
    /// Stop when no site parameter moves by more than this.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_sweeps: usize,
    /// Fraction of each site update applied, in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    damping: f64,
}

impl EpArgs {
    fn config(&self) -> EpConfig {
        EpConfig {
            tol: self.tol,
            max_sweeps: self.max_sweeps,
            damping: self.damping,
            order: SweepOrder::Ascending,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Training CSV: header, then `y,x1,...,xp` rows.
    #[arg(long)]
    input: PathBuf,
    /// Model artifact to write.
    #[arg(long)]
    output: PathBuf,
    /// Prior variance ν² of each coefficient.
    #[arg(long, default_value_t = 25.0)]
    prior_variance: f64,
    /// auto picks dense when p <= n, low-rank otherwise.
    #[arg(long, default_value = "auto")]
    engine: EngineChoice,
    #[command(flatten)]
    ep: EpArgs,
    /// Also write a plain-text dump of the artifact.
    #[arg(long)]
    export_text: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Covariate CSV with p columns (a leading `y` column is ignored).
    #[arg(long)]
    test: PathBuf,
    /// Defaults to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimstudyArgs {
    /// Scenario name, repeatable; `all` selects all five.
    #[arg(long, default_value = "all")]
    scenario: Vec<String>,
    /// Comma-separated ascending list of dimensions.
    #[arg(long, value_delimiter = ',')]
    p_grid: Option<Vec<usize>>,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    n_test: usize,
    #[arg(long, default_value_t = 25.0)]
    prior_variance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    ep: EpArgs,
    /// Sampling baseline: hmc or gibbs.
    #[arg(long, default_value = "hmc")]
    baseline: Baseline,
    /// Retained baseline draws per grid point.
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Smaller run: p = 50 only, 2000 draws after 500 burn-in.
    #[arg(long)]
    quick: bool,
    /// Report CSV; defaults to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write every per-unit absolute difference here.
    #[arg(long)]
    diffs: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    ep: EpArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
    #[arg(long, default_value_t = 2_000)]
    burn_in: usize,
}

fn scenarios(names: &[String]) -> Result<Vec<Scenario>, CliError> {
    if names.iter().any(|s| s == "all") {
        return Ok(Scenario::ALL.to_vec());
    }
    let mut out = Vec::new();
    for name in names {
        let sc: Scenario = name.parse()?;
        if !out.contains(&sc) {
            out.push(sc);
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Fit(a) => cmd_fit(&FitConfig {
            input: a.input,
            output: a.output,
            prior_variance: a.prior_variance,
            engine: a.engine,
            ep: a.ep.config(),
            export_text: a.export_text,
        }),
        Command::Predict(a) => cmd_predict(&PredictConfig {
            model: a.model,
            test: a.test,
            output: a.output,
        }),
        Command::Simstudy(a) => cmd_simstudy(&SimstudyConfig {
            scenarios: scenarios(&a.scenario)?,
            p_grid: a.p_grid,
            n: a.n,
            n_test: a.n_test,
            prior_variance: a.prior_variance,
            seed: a.seed,
            ep: a.ep.config(),
            baseline: a.baseline,
            burn_in: a.burn_in,
            draws: a.draws,
            jobs: a.jobs,
            quick: a.quick,
            output: a.output,
            diffs: a.diffs,
        }),
        Command::OracleCheck(a) => cmd_oracle_check(&OracleCheckConfig {
            ep: a.ep.config(),
            gibbs: GibbsSpec {
                burn_in: a.burn_in,
                draws: a.draws,
                seed: a.seed,
            },
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(EXIT_INPUT as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{}", e.render());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
