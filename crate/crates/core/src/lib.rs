//! Numerical laboratory for equation-free multiscale building blocks.
//!
//! Two schemes are implemented from their microscale ingredients:
//!
//! - [`projective`]: the coarse projective integrator for scalar SDEs, which
//!   lifts the coarse value into an ensemble, runs a few Euler–Maruyama micro
//!   steps, averages and extrapolates over a large macro step.
//! - [`patch`]: gap-tooth patch dynamics for 1D linear PDEs, which lifts a macro
//!   grid into local Taylor polynomials, evolves them inside small teeth,
//!   averages and extrapolates.
//!
//! The remaining modules measure what these schemes actually compute:
//! [`analysis`] (stability, convergence, moment tests), [`order_detect`]
//! (variance-based derivative dependence), and [`kp`] (scale-dependent effective
//! order of inertial particles in a random force field). [`config`] and
//! [`runner`] drive the canonical experiments from plain-text configuration.

pub mod analysis;
pub mod config;
pub mod error;
pub mod grid;
pub mod kp;
pub mod micro;
pub mod order_detect;
pub mod output;
pub mod patch;
pub mod pde;
pub mod poly;
pub mod projective;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
pub use grid::{BufferWidth, MacroState, ToothConfig};
pub use pde::PdeSpec;
pub use poly::TaylorPolynomial;
pub use rng::RngStreamSpec;
