//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use stswe_core::cases::{manufactured_case, ManufacturedParams};
use stswe_core::{Discretization, ProblemSpec, SpaceConfig, TrialState};

/// A manufactured problem on an `n × n` structured mesh with the default
/// space settings, together with its interpolated initial guess.
pub struct Fixture {
    pub spec: ProblemSpec,
    pub disc: Discretization,
    pub state: TrialState,
}

pub fn manufactured(n: usize) -> Fixture {
    let spec = manufactured_case(ManufacturedParams::default());
    let mesh = spec.structured_mesh(n, n).expect("valid mesh");
    let disc = Discretization::new(Arc::new(mesh), SpaceConfig::default()).expect("valid space");
    let state = disc.initial_guess(&spec).expect("initial guess");
    Fixture { spec, disc, state }
}
