//! Stochastic flows, tamed Euler schemes and numerical checks of the
//! Itô-Alekseev-Gröbner perturbation identity.
//!
//! - [`grid`], [`rng`], [`brownian`]: uniform grids, counter-based streams
//!   and coupled Brownian paths.
//! - [`flows`]: Euler flows with first and second variational processes and
//!   the tamed Euler scheme.
//! - [`alekseev`]: the deterministic Alekseev-Gröbner identity for ODEs.
//! - [`iag`]: term-by-term evaluation of the stochastic identity, with the
//!   Skorohod term validated by weak and duality checks.
//! - [`vdp`]: the stochastic van der Pol experiments (moment bounds and the
//!   strong rate of the tamed scheme).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alekseev;
pub mod bilinear;
pub mod brownian;
pub mod error;
pub mod fd;
pub mod fields;
pub mod flows;
pub mod grid;
pub mod iag;
pub mod rng;
pub mod stats;
pub mod vdp;

pub use bilinear::Bilinear;
pub use brownian::{sample_brownian, BrownianPath};
pub use error::{Error, Result};
pub use fields::{DiffusionField, TestFunction, VectorField};
pub use flows::{flow_between, flow_solve, reference_solution, tamed_euler, FlowResult, SchemeTrajectory};
pub use grid::{make_grid, TimeGrid};
pub use rng::RandomStream;
pub use stats::Estimate;
