//! Dynamic model of a water/LiBr absorption heat pumping device.
//!
//! The crate implements a control-oriented nonlinear DAE model of a small
//! absorption machine (generator, condenser, evaporator, absorber, solution
//! heat exchanger, two expansion valves and three hydraulic circuits),
//! two reduced benchmark variants, a steady-state and transient solver
//! stack, a linearizer producing state-space models, and a scenario-driven
//! experiment harness with a CLI.
//!
//! Modules, bottom-up:
//!
//! * [`props`] — fluid property correlations for water and aqueous LiBr,
//!   with validity windows and a start-up coefficient validation pass.
//! * [`model`] — the component equations as residual functions.
//! * [`solver`] — damped Newton, steady-state solve, homotopy continuation.
//! * [`transient`] — backward Euler integration and settling to steady state.
//! * [`linearize`] — finite-difference Jacobians, reduction to an ODE
//!   state-space model, linear simulation.
//! * [`harness`] — scenario files, experiment execution, delimited output,
//!   comparison metrics.

pub mod error;
pub mod harness;
pub mod linearize;
pub mod model;
pub mod props;
pub mod solver;
pub mod transient;

pub use error::{AhpdError, Result};
pub use model::{
    AlgebraicVector, InputVector, Model, ModelParams, OutputVector, StateVector, Variant,
};
pub use props::{validate_params, PropertyParams, RangeMode};
