//! Entropic dynamics of a spin-1/2 particle on a periodic grid.
//!
//! The epistemic state is a two-component field ψ evolved by the Pauli
//! equation; an ensemble of walkers with definite positions is driven by the
//! drift it induces. See the README for the module map.

pub mod error;
pub mod grid;
pub mod io;
pub mod maxent;
pub mod pauli;
pub mod phase_space;
pub mod rotations;
pub mod sampler;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{EdParams, GaugeField, Grid, SpinorField, C64};
pub use pauli::{HamiltonianSpec, Integrator, PotentialKernel};
pub use rotations::RotationSpec;
pub use sampler::TrajectoryEnsemble;
pub use scenario::{ScenarioConfig, ScenarioKind};
