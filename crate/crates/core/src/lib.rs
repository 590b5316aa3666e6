//! Expectation propagation for Bayesian probit regression with a spherical
//! Gaussian prior, with closed-form site updates, a dense and a low-rank
//! engine, closed-form predictive probabilities, and independent oracles.

pub mod data;
pub mod ep;
pub mod error;
pub mod linalg;
pub mod oracles;
pub mod predictive;
pub mod simstudy;
pub mod special;

pub use data::Dataset;
pub use ep::{fit, Engine, EngineChoice, EpConfig, Fit, FitDiagnostics, SweepOrder};
pub use error::{Error, Result};
pub use predictive::{Covariance, GaussianPosterior, PredictiveResult};
pub use simstudy::{Baseline, Scenario, ScenarioSpec, StudyOptions, StudyReport, StudyRow};
