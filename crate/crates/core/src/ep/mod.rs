//! Expectation propagation for the probit model.
//!
//! Every likelihood term `Φ((2y_i - 1)x_iᵀβ)` is approximated by a rank-one
//! Gaussian site `exp(-k_i (x_iᵀβ)²/2 + m_i x_iᵀβ)`, so the global
//! approximation is `N(Q⁻¹r, Q⁻¹)` with `Q = ν⁻²I + Σ k_i x_i x_iᵀ` and
//! `r = Σ m_i x_i`. Each site refresh removes the site (the cavity), matches
//! the first two moments of the extended skew-normal hybrid in closed form,
//! and puts the new site back with a rank-one update.
//!
//! Two state engines share the sweep logic through [`EpState`]:
//! [`EpStateDense`] keeps `Q⁻¹` explicitly (`O(p²)` per site) and
//! [`EpStateLowRank`] keeps only `v_j = Q⁻¹x_j` (`O(pn)` per site).

mod dense;
mod hybrid;
mod lowrank;
mod site;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::predictive::GaussianPosterior;

pub use dense::EpStateDense;
pub use hybrid::{hybrid_params, HybridSnParams};
pub use lowrank::EpStateLowRank;
pub use site::{
    cavity, site_update, Cavity, SiteChange, SiteState, SiteUpdate, CAVITY_EPSILON,
    UPDATE_EPSILON,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Engine {
    Dense,
    LowRank,
}

impl Engine {
    /// Dense when `p <= n`, low-rank otherwise.
    pub fn auto(n: usize, p: usize) -> Self {
        if p <= n {
            Engine::Dense
        } else {
            Engine::LowRank
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Engine::Dense => "dense",
            Engine::LowRank => "lowrank",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EngineChoice {
    #[default]
    Auto,
    Dense,
    LowRank,
}

impl EngineChoice {
    pub fn resolve(self, n: usize, p: usize) -> Engine {
        match self {
            EngineChoice::Auto => Engine::auto(n, p),
            EngineChoice::Dense => Engine::Dense,
            EngineChoice::LowRank => Engine::LowRank,
        }
    }
}

impl FromStr for EngineChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(EngineChoice::Auto),
            "dense" => Ok(EngineChoice::Dense),
            "lowrank" => Ok(EngineChoice::LowRank),
            other => Err(Error::Config(format!("unknown engine `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepOrder {
    #[default]
    Ascending,
    Descending,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpConfig {
    /// Convergence threshold on `max_i max(|Δk_i|, |Δm_i|)` over a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Natural-parameter interpolation weight; 1 means undamped.
    pub damping: f64,
    pub order: SweepOrder,
}

impl Default for EpConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_sweeps: 200,
            damping: 1.0,
            order: SweepOrder::Ascending,
        }
    }
}

impl EpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_sweeps == 0 {
            return Err(Error::Config("max_sweeps must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitDiagnostics {
    pub sweeps_run: usize,
    pub converged: bool,
    /// Largest applied `|Δk_i|` or `|Δm_i|` in each sweep.
    pub max_delta_trace: Vec<f64>,
    /// Site updates dropped because of cavity breakdown or update rejection.
    pub skipped_updates: usize,
    pub elapsed_seconds: f64,
}

/// Common surface of the dense and low-rank engines.
pub trait EpState {
    fn engine(&self) -> Engine;

    fn sites(&self) -> &SiteState;

    /// `r = Σ_i m_i x_i`.
    fn natural_mean(&self) -> &DVector<f64>;

    /// `v_i = Q⁻¹x_i`.
    fn projection(&self, data: &Dataset, i: usize) -> DVector<f64>;

    /// Moves site `i` towards `(k_new, m_new)` given its current projection
    /// `v_i` and `xv = x_iᵀv_i`. Leaves the state untouched on rejection.
    #[allow(clippy::too_many_arguments)]
    fn apply_projected(
        &mut self,
        data: &Dataset,
        i: usize,
        v_i: &DVector<f64>,
        xv: f64,
        k_new: f64,
        m_new: f64,
        damping: f64,
    ) -> Result<SiteChange>;

    fn apply_update(
        &mut self,
        data: &Dataset,
        i: usize,
        k_new: f64,
        m_new: f64,
        damping: f64,
    ) -> Result<SiteChange> {
        let v = self.projection(data, i);
        let xv = crate::linalg::dot(data.row(i), v.as_slice());
        self.apply_projected(data, i, &v, xv, k_new, m_new, damping)
    }

    fn posterior(&self, data: &Dataset) -> GaussianPosterior;
}

/// Outcome of one pass over the sites.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SweepStats {
    pub accepted: usize,
    pub skipped: usize,
    pub max_delta: f64,
}

fn refresh_site<S: EpState + ?Sized>(
    state: &mut S,
    data: &Dataset,
    i: usize,
    damping: f64,
) -> Result<SiteChange> {
    let v = state.projection(data, i);
    let cav = site::cavity_from_projection(state, data, i, v)?;
    let upd = site_update(data.labels()[i], cav.d, cav.c)?;
    state.apply_projected(data, i, &cav.v, cav.xv, upd.k, upd.m, damping)
}

/// One EP sweep. Sites with an all-zero covariate row are passed over
/// silently; breakdowns and rejections are counted in `skipped`.
pub fn sweep<S: EpState + ?Sized>(state: &mut S, data: &Dataset, cfg: &EpConfig) -> SweepStats {
    let n = data.n();
    let mut stats = SweepStats::default();
    for step in 0..n {
        let i = match cfg.order {
            SweepOrder::Ascending => step,
            SweepOrder::Descending => n - 1 - step,
        };
        if data.is_degenerate(i) {
            continue;
        }
        match refresh_site(state, data, i, cfg.damping) {
            Ok(change) => {
                stats.accepted += 1;
                stats.max_delta = stats.max_delta.max(change.dk.abs()).max(change.dm.abs());
            }
            Err(_) => stats.skipped += 1,
        }
    }
    stats
}

/// Sweeps until the largest site change drops to `cfg.tol` or `cfg.max_sweeps`
/// is exhausted. Hitting the sweep cap is not an error; check
/// [`FitDiagnostics::converged`].
pub fn run<S: EpState + ?Sized>(
    state: &mut S,
    data: &Dataset,
    cfg: &EpConfig,
) -> Result<FitDiagnostics> {
    cfg.validate()?;
    let start = Instant::now();
    let mut diag = FitDiagnostics::default();
    for _ in 0..cfg.max_sweeps {
        let stats = sweep(state, data, cfg);
        diag.sweeps_run += 1;
        diag.skipped_updates += stats.skipped;
        diag.max_delta_trace.push(stats.max_delta);
        if stats.accepted == 0 && stats.skipped > 0 {
            diag.elapsed_seconds = start.elapsed().as_secs_f64();
            return Err(Error::NonProgress {
                diagnostics: Box::new(diag),
            });
        }
        if stats.skipped == 0 && stats.max_delta <= cfg.tol {
            diag.converged = true;
            break;
        }
    }
    diag.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(diag)
}

/// A finished EP fit.
#[derive(Debug, Clone)]
pub struct Fit {
    pub engine: Engine,
    pub posterior: GaussianPosterior,
    pub sites: SiteState,
    pub diagnostics: FitDiagnostics,
}

pub fn fit(data: &Dataset, cfg: &EpConfig, engine: EngineChoice) -> Result<Fit> {
    fn finish<S: EpState>(mut state: S, data: &Dataset, cfg: &EpConfig) -> Result<Fit> {
        let diagnostics = run(&mut state, data, cfg)?;
        Ok(Fit {
            engine: state.engine(),
            posterior: state.posterior(data),
            sites: state.sites().clone(),
            diagnostics,
        })
    }
    match engine.resolve(data.n(), data.p()) {
        Engine::Dense => finish(EpStateDense::new(data), data, cfg),
        Engine::LowRank => finish(EpStateLowRank::new(data), data, cfg),
    }
}
