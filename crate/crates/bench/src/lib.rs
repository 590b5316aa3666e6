//! Shared inputs for the criterion benchmarks.

use nalgebra::DMatrix;
use probit_ep::simstudy::generate_synthetic;
use probit_ep::{Dataset, Scenario, ScenarioSpec};

/// Training data (`n = 100`, `ν² = 25`) and 50 test rows of the iid-weak
/// scenario at dimension `p`.
pub fn replica_cell(p: usize) -> (Dataset, DMatrix<f64>) {
    let spec = ScenarioSpec {
        p_grid: vec![p],
        ..ScenarioSpec::replica(Scenario::IidWeak, 1)
    };
    generate_synthetic(&spec, p).expect("valid replica spec")
}
