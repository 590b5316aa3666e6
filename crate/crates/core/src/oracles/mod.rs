//! Independent ground truth for the closed-form EP results: exact posterior
//! quadrature for `p <= 2`, a data-augmentation Gibbs sampler, and plain Monte
//! Carlo over a Gaussian approximation.

mod gibbs;
mod montecarlo;
mod quadrature;
mod tmvn;
mod truncnorm;

pub use gibbs::{
    conditional_predictive_map, gibbs_predictive, ConditionalPredictive, GibbsPredictive, GibbsSpec, PredictiveAverager, ProbitGibbs,
    BATCHES,
};
pub use tmvn::{hmc_predictive, LatentHmc};
pub use montecarlo::{mc_expectation_with, mc_gaussian_expectation, MIN_SAMPLES};
pub use quadrature::{
    adaptive_simpson, exact_predictive_many, exact_predictive_quadrature, scalar_moment_gaps,
    tilted_moments,
    QuadratureSpec,
};
pub use truncnorm::{truncated_normal_draw, Side};
