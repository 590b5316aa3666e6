//! Cross-checks of EP and the Gibbs sampler against exact quadrature on small
//! built-in problems with one or two covariates.

use nalgebra::DMatrix;
use probit_ep::oracles::{
    exact_predictive_many, gibbs_predictive, scalar_moment_gaps, GibbsSpec, QuadratureSpec,
};
use probit_ep::simstudy::generate_synthetic;
use probit_ep::{fit, Dataset, EngineChoice, EpConfig, Result, Scenario, ScenarioSpec};

/// Largest accepted `|EP − exact|` predictive gap.
pub const EP_TOLERANCE: f64 = 0.02;
/// Gibbs estimates must lie within this many batch-means standard errors.
pub const GIBBS_SE_MULTIPLE: f64 = 3.0;
/// Largest accepted hybrid-versus-`q` moment gap at a tight fixed point.
pub const MOMENT_TOLERANCE: f64 = 1e-6;
/// Convergence tolerance used for the moment-matching check.
pub const MOMENT_FIT_TOL: f64 = 1e-10;

pub struct Fixture {
    pub name: &'static str,
    pub data: Dataset,
    /// Test covariates, one row per point.
    pub points: DMatrix<f64>,
}

fn hand(name: &'static str, xs: &[f64], ys: &[u8], nu2: f64, points: &[f64]) -> Fixture {
    Fixture {
        name,
        data: Dataset::new(DMatrix::from_column_slice(xs.len(), 1, xs), ys.to_vec(), nu2).unwrap(),
        points: DMatrix::from_column_slice(points.len(), 1, points),
    }
}

fn generated(name: &'static str, scenario: Scenario, n: usize, p: usize, nu2: f64, seed: u64) -> Fixture {
    let spec = ScenarioSpec {
        n,
        n_test: 4,
        p_grid: vec![p],
        prior_variance: nu2,
        scenario,
        seed,
    };
    let (data, points) = generate_synthetic(&spec, p).unwrap();
    Fixture { name, data, points }
}

/// The built-in problems: `p ∈ {1, 2}`, `n ≤ 20`.
pub fn fixtures() -> Vec<Fixture> {
    vec![
        hand("single-site", &[1.0], &[1], 1.0, &[1.0, -0.5, 2.0]),
        hand("three-sites", &[1.0, -0.5, 2.0], &[1, 0, 1], 1.0, &[1.0, -1.0, 0.3]),
        hand("wide-prior", &[0.7, 1.3, -2.0], &[1, 1, 1], 25.0, &[1.0, -1.0, 2.5]),
        generated("scalar-twenty", Scenario::IidWeak, 20, 1, 25.0, 7),
        generated("plane-ten", Scenario::IidWeak, 10, 2, 4.0, 3),
        generated("plane-twenty", Scenario::Correlated, 20, 2, 25.0, 5),
        generated("plane-heavy", Scenario::HeavyTail, 15, 2, 9.0, 11),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub fixture: &'static str,
    pub check: &'static str,
    /// Test point index, starting at 1; 0 for fixture-wide checks.
    pub point: usize,
    pub delta: f64,
    pub tolerance: f64,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.delta <= self.tolerance
    }
}

pub fn check_fixture(fx: &Fixture, ep: &EpConfig, gibbs: &GibbsSpec) -> Result<Vec<CheckRow>> {
    let data = &fx.data;
    let exact = exact_predictive_many(
        data.design(),
        data.labels(),
        data.prior_variance(),
        &fx.points,
        &QuadratureSpec::default(),
    )?;
    let model = fit(data, ep, EngineChoice::Auto)?;
    let approx = model.posterior.predict_batch(&fx.points)?;
    let sampled = gibbs_predictive(data, &fx.points, gibbs)?;
    let mut rows = Vec::new();
    for (r, &truth) in exact.iter().enumerate() {
        rows.push(CheckRow {
            fixture: fx.name,
            check: "ep-vs-exact",
            point: r + 1,
            delta: (approx[r].probability - truth).abs(),
            tolerance: EP_TOLERANCE,
        });
        rows.push(CheckRow {
            fixture: fx.name,
            check: "gibbs-vs-exact",
            point: r + 1,
            delta: (sampled.probs[r] - truth).abs(),
            tolerance: GIBBS_SE_MULTIPLE * sampled.standard_errors[r],
        });
    }
    if data.p() == 1 {
        let tight = EpConfig {
            tol: MOMENT_FIT_TOL,
            max_sweeps: ep.max_sweeps.max(1_000),
            ..*ep
        };
        let model = fit(data, &tight, EngineChoice::Dense)?;
        let worst = scalar_moment_gaps(data, &model.sites)?
            .into_iter()
            .fold(0.0f64, |acc, (dm, dv)| acc.max(dm).max(dv));
        rows.push(CheckRow {
            fixture: fx.name,
            check: "moment-match",
            point: 0,
            delta: worst,
            tolerance: MOMENT_TOLERANCE,
        });
    }
    Ok(rows)
}

pub fn run_checks(ep: &EpConfig, gibbs: &GibbsSpec) -> Result<Vec<CheckRow>> {
    ep.validate()?;
    gibbs.validate()?;
    let mut rows = Vec::new();
    for fx in fixtures() {
        rows.extend(check_fixture(&fx, ep, gibbs)?);
    }
    Ok(rows)
}
