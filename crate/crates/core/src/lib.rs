//! Steady-state periodic responses of damped nonlinear mechanical systems
//! through modal integral equations.
//!
//! The pipeline is: [`model::MechModel`] → [`modal::compute_modes`] →
//! per-frequency [`collocation::assemble_convolution`] → Picard/Newton in
//! [`solvers`] → frequency sweeps in [`continuation`]. [`oracle`] provides an
//! independent time-integration reference.

pub mod collocation;
pub mod continuation;
pub mod error;
pub mod green;
pub mod modal;
pub mod model;
pub mod oracle;
pub mod solvers;

pub use collocation::{assemble_convolution, build_grid, CollocationGrid, ConvolutionOperator};
pub use continuation::{amplitude, refinement_study, sweep, AmplitudeMetric, Direction, FrcPoint, SweepConfig};
pub use error::{Error, Result};
pub use green::{gamma_bound, linear_response, GreenKernel, LinearResponsePath};
pub use modal::{compute_modes, ModalBasis};
pub use model::{build_oscillator_chain, load_model, parse_model, ForcingSpec, MechModel};
pub use oracle::{compare_orbit, integrate_to_steady_state, SteadyOrbit};
pub use solvers::{
    solve_steady_state, ContractionReport, Formulation, PeriodicSolution, SolverConfig, SolverPath, Strategy,
};
