//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints exactly one PASS or FAIL line; exits non-zero if any criterion fails.

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use probit_ep::oracles::{mc_gaussian_expectation, scalar_moment_gaps, GibbsSpec};
use probit_ep::simstudy::{generate_synthetic, run_studies, Baseline, StudyOptions};
use probit_ep::special::{
    log_std_normal_cdf, zeta1, zeta1_by_fraction, zeta1_by_ratio, zeta2, ZETA1_SWITCH,
};
use probit_ep::{fit, Dataset, EngineChoice, EpConfig, GaussianPosterior, Scenario, ScenarioSpec};
use probit_ep_cli::commands::{cmd_simstudy, SimstudyConfig};
use probit_ep_cli::oracle_check::run_checks;
use probit_ep_cli::report::TIMING_COLUMNS;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cell(scenario: Scenario, n: usize, n_test: usize, p: usize, nu2: f64, seed: u64) -> (Dataset, DMatrix<f64>) {
    let spec = ScenarioSpec {
        n,
        n_test,
        p_grid: vec![p],
        prior_variance: nu2,
        scenario,
        seed,
    };
    generate_synthetic(&spec, p).map_err(|e| e.to_string()).unwrap()
}

fn converged_fit(data: &Dataset, engine: EngineChoice) -> Result<probit_ep::Fit, String> {
    let model = fit(data, &EpConfig::default(), engine).map_err(|e| e.to_string())?;
    if !model.diagnostics.converged {
        return Err(format!("EP did not converge at n = {}, p = {}", data.n(), data.p()));
    }
    Ok(model)
}

const MC_SAMPLES: usize = 1_000_000;

fn predictive_matches_monte_carlo() -> Outcome {
    let cases = [
        (Scenario::IidWeak, 30, 3, 1),
        (Scenario::HeavyTail, 30, 3, 2),
        (Scenario::Correlated, 40, 8, 3),
        (Scenario::Sparse, 40, 8, 4),
        (Scenario::IidStrong, 100, 50, 5),
        (Scenario::Correlated, 30, 50, 6),
    ];
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (scenario, n, p, seed) in cases {
        let (data, x_test) = cell(scenario, n, 2, p, 25.0, seed);
        let post = converged_fit(&data, EngineChoice::Auto)?.posterior;
        for r in 0..x_test.nrows() {
            let x: Vec<f64> = x_test.row(r).iter().copied().collect();
            let exact = post.predict_one(&x).map_err(|e| e.to_string())?.probability;
            let (mc, se) = mc_gaussian_expectation(&post, &x, MC_SAMPLES, 100 + seed)
                .map_err(|e| e.to_string())?;
            let z = (exact - mc).abs() / se.max(f64::MIN_POSITIVE);
            worst = worst.max(z);
            checked += 1;
        }
    }
    ensure(
        worst <= 3.0,
        format!("{checked} points on 6 posteriors, worst gap {worst:.2} se"),
    )
}

fn equivalence_fixtures() -> Vec<(Dataset, DMatrix<f64>)> {
    (0..20u64)
        .map(|i| {
            let n = 8 + (7 * i as usize) % 57;
            let p = 2 + (13 * i as usize) % 63;
            let scenario = Scenario::ALL[i as usize % Scenario::ALL.len()];
            cell(scenario, n, 10, p, 25.0, 1_000 + i)
        })
        .collect()
}

fn engines_agree() -> Outcome {
    let (mut xi_gap, mut prob_gap): (f64, f64) = (0.0, 0.0);
    for (data, x_test) in equivalence_fixtures() {
        let dense = converged_fit(&data, EngineChoice::Dense)?.posterior;
        let low = converged_fit(&data, EngineChoice::LowRank)?.posterior;
        xi_gap = xi_gap.max((&dense.xi - &low.xi).amax());
        let a = dense.predict_batch(&x_test).map_err(|e| e.to_string())?;
        let b = low.predict_batch(&x_test).map_err(|e| e.to_string())?;
        for (x, y) in a.iter().zip(&b) {
            prob_gap = prob_gap.max((x.probability - y.probability).abs());
        }
    }
    ensure(
        xi_gap <= 1e-8 && prob_gap <= 1e-10,
        format!("20 datasets, max |Δξ| {xi_gap:.2e}, max |Δprob| {prob_gap:.2e}"),
    )
}

fn covariance_reconstruction() -> Outcome {
    let mut worst: f64 = 0.0;
    for (data, _) in equivalence_fixtures() {
        let dense = converged_fit(&data, EngineChoice::Dense)?.posterior;
        let low = converged_fit(&data, EngineChoice::LowRank)?.posterior;
        let sigma = dense.assemble_covariance();
        let rel = (low.assemble_covariance() - &sigma).norm() / sigma.norm();
        worst = worst.max(rel);
    }
    ensure(
        worst <= 1e-8,
        format!("20 datasets, worst Frobenius-relative gap {worst:.2e}"),
    )
}

fn moments_match_at_fixed_point() -> Outcome {
    let tight = EpConfig {
        tol: 1e-10,
        max_sweeps: 1_000,
        ..EpConfig::default()
    };
    let fixtures: [(&[f64], &[u8]); 4] = [
        (&[1.0], &[1]),
        (&[-0.4], &[0]),
        (&[1.0, -0.5, 2.0], &[1, 0, 1]),
        (&[0.7, 1.3, -2.0], &[1, 1, 1]),
    ];
    let mut worst: f64 = 0.0;
    for nu2 in [1.0, 25.0] {
        for (xs, ys) in fixtures {
            let data = Dataset::new(DMatrix::from_column_slice(xs.len(), 1, xs), ys.to_vec(), nu2)
                .map_err(|e| e.to_string())?;
            let model = fit(&data, &tight, EngineChoice::Dense).map_err(|e| e.to_string())?;
            if !model.diagnostics.converged {
                return Err(format!("no convergence at tol 1e-10 for n = {}", xs.len()));
            }
            for (dm, dv) in scalar_moment_gaps(&data, &model.sites).map_err(|e| e.to_string())? {
                worst = worst.max(dm).max(dv);
            }
        }
    }
    ensure(worst <= 1e-6, format!("8 fixtures, worst moment gap {worst:.2e}"))
}

fn exact_posterior_accuracy() -> Outcome {
    let rows = run_checks(&EpConfig::default(), &GibbsSpec::default()).map_err(|e| e.to_string())?;
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("{}/{}#{}", r.fixture, r.check, r.point))
        .collect();
    let worst_ep = rows
        .iter()
        .filter(|r| r.check == "ep-vs-exact")
        .fold(0.0f64, |a, r| a.max(r.delta));
    ensure(
        failed.is_empty(),
        format!(
            "{} checks, worst EP gap {worst_ep:.4}{}",
            rows.len(),
            if failed.is_empty() { String::new() } else { format!(", failed: {}", failed.join(" ")) }
        ),
    )
}

fn desk_scale_replica() -> Outcome {
    let specs: Vec<ScenarioSpec> = Scenario::ALL
        .iter()
        .map(|&s| ScenarioSpec::replica(s, 0))
        .collect();
    let gibbs = GibbsSpec::default();
    let opts = StudyOptions {
        ep: EpConfig::default(),
        baseline: Baseline::Hmc,
        burn_in: gibbs.burn_in,
        draws: gibbs.draws,
        jobs: None,
    };
    let report = run_studies(&specs, &opts).map_err(|e| e.to_string())?;
    let mut problems = Vec::new();
    let (mut slowest, mut largest): (f64, f64) = (0.0, 0.0);
    for row in &report.rows {
        slowest = slowest.max(row.ep_seconds);
        largest = largest.max(row.median_abs_diff);
        let ordered = row.q1 <= row.median_abs_diff && row.median_abs_diff <= row.q3;
        if !(row.median_abs_diff.is_finite() && row.median_abs_diff <= 0.05 && ordered) {
            problems.push(format!("{}@{} median {}", row.scenario, row.p, row.median_abs_diff));
        }
        if row.ep_seconds >= 1.0 {
            problems.push(format!("{}@{} took {:.3}s", row.scenario, row.p, row.ep_seconds));
        }
    }
    let expected = Scenario::ALL.len() * probit_ep::simstudy::DEFAULT_P_GRID.len();
    if report.rows.len() != expected {
        problems.push(format!("{} of {expected} cells", report.rows.len()));
    }
    ensure(
        problems.is_empty(),
        format!(
            "{} cells, slowest EP {slowest:.3}s, largest median {largest:.4}{}",
            report.rows.len(),
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join(", ")) }
        ),
    )
}

const TIMING_REPEATS: usize = 201;

fn timed(post: &GaussianPosterior, x: &DMatrix<f64>) -> f64 {
    let start = Instant::now();
    std::hint::black_box(post.predict_batch(std::hint::black_box(x)).unwrap());
    start.elapsed().as_secs_f64()
}

fn median(mut times: Vec<f64>) -> f64 {
    times.sort_by(f64::total_cmp);
    times[times.len() / 2]
}

/// Median predict times at `small` and `large` dimensions. Runs alternate
/// between the two so that drift in machine speed hits both equally.
fn paired_predict_cost(small: usize, large: usize, engine: EngineChoice) -> Result<(f64, f64), String> {
    let mut cells = Vec::new();
    for p in [small, large] {
        let (data, x_test) = cell(Scenario::IidWeak, 100, 50, p, 25.0, 0);
        cells.push((converged_fit(&data, engine)?.posterior, x_test));
    }
    for (post, x) in &cells {
        timed(post, x);
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for _ in 0..TIMING_REPEATS {
        a.push(timed(&cells[0].0, &cells[0].1));
        b.push(timed(&cells[1].0, &cells[1].1));
    }
    Ok((median(a), median(b)))
}

fn predict_cost_scaling() -> Outcome {
    let (f200, f800) = paired_predict_cost(200, 800, EngineChoice::LowRank)?;
    let (d100, d200) = paired_predict_cost(100, 200, EngineChoice::Dense)?;
    let (factored, dense) = (f800 / f200, d200 / d100);
    ensure(
        factored < 4.0 && dense < 8.0,
        format!("factored p 800/200 ratio {factored:.2} (< 4), dense p 200/100 ratio {dense:.2} (< 8)"),
    )
}

fn special_functions() -> Outcome {
    let mut problems = Vec::new();
    let grid = (0..=34_000).map(|i| -300.0 + i as f64 * 0.01);
    for x in grid {
        let (z1, z2) = (zeta1(x).unwrap(), zeta2(x).unwrap());
        if !(z1 > 0.0 && z2 > -1.0 && z2 < 0.0) {
            problems.push(format!("range at {x}"));
        }
        if x <= -20.0 {
            let t = -x;
            if (z1 / (t + 1.0 / t) - 1.0).abs() > 1e-3 {
                problems.push(format!("tail at {x}"));
            }
        }
    }
    for x in [ZETA1_SWITCH - 0.5, ZETA1_SWITCH + 0.5] {
        let (a, b) = (zeta1_by_fraction(x), zeta1_by_ratio(x));
        if ((a - b) / b).abs() > 1e-9 {
            problems.push(format!("routes disagree at {x}"));
        }
    }
    let h = 1e-5;
    for i in 0..=1_600 {
        let x = -8.0 + i as f64 * 0.01;
        let fd = (log_std_normal_cdf(x + h).unwrap() - log_std_normal_cdf(x - h).unwrap()) / (2.0 * h);
        if (fd - zeta1(x).unwrap()).abs() > 1e-6 {
            problems.push(format!("derivative at {x}"));
        }
    }
    // φ(−10)/Φ(−10), 60-digit reference.
    let oracle = 10.098_093_233_962_512;
    let rel = (zeta1(-10.0).unwrap() / oracle - 1.0).abs();
    if rel > 1e-10 {
        problems.push(format!("zeta1(-10) relative error {rel:.2e}"));
    }
    ensure(
        problems.is_empty(),
        format!(
            "grid [-300, 40], zeta1(-10) relative error {rel:.1e}{}",
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join(", ")) }
        ),
    )
}

fn strip_timings(csv_text: &str) -> Result<String, String> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let header = reader.headers().map_err(|e| e.to_string())?.clone();
    let keep: Vec<usize> = (0..header.len())
        .filter(|&j| !TIMING_COLUMNS.contains(&&header[j]))
        .collect();
    let mut out = keep.iter().map(|&j| &header[j]).collect::<Vec<_>>().join(",");
    for record in reader.records() {
        let record = record.map_err(|e| e.to_string())?;
        out.push('\n');
        out.push_str(&keep.iter().map(|&j| &record[j]).collect::<Vec<_>>().join(","));
    }
    Ok(out)
}

fn simstudy_is_reproducible() -> Outcome {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in 0..2 {
        let path = dir.path().join(format!("run{run}.csv"));
        let cfg = SimstudyConfig {
            scenarios: Scenario::ALL.to_vec(),
            p_grid: Some(vec![50, 200]),
            n: 100,
            n_test: 50,
            prior_variance: 25.0,
            seed: 42,
            ep: EpConfig::default(),
            baseline: Baseline::Hmc,
            burn_in: Some(200),
            draws: Some(1_000),
            jobs: None,
            quick: false,
            output: Some(path.clone()),
            diffs: None,
        };
        cmd_simstudy(&cfg).map_err(|e| e.render())?;
        outputs.push(fs::read_to_string(&path).map_err(|e| e.to_string())?);
    }
    let (a, b) = (strip_timings(&outputs[0])?, strip_timings(&outputs[1])?);
    ensure(
        a == b && a.lines().count() == 11,
        format!("two runs, {} data rows, identical outside timing columns: {}", a.lines().count() - 1, a == b),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("predictive formula vs Monte Carlo", predictive_matches_monte_carlo),
        ("dense and low-rank engines agree", engines_agree),
        ("factored covariance reconstruction", covariance_reconstruction),
        ("moment matching at the fixed point", moments_match_at_fixed_point),
        ("accuracy against exact quadrature", exact_posterior_accuracy),
        ("desk-scale simulation replica", desk_scale_replica),
        ("predictive cost scaling", predict_cost_scaling),
        ("special functions", special_functions),
        ("simulation study reproducibility", simstudy_is_reproducible),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failures += 1;
                println!("criterion {id} FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
