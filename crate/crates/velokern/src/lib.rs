//! Structured kernel-based multi-step predictors for the velocity form of
//! nonlinear input-output systems.
//!
//! The crate covers the full pipeline:
//!
//! * [`signals`] — trajectories, difference signals, scheduling vectors, and
//!   block-Hankel data matrices;
//! * [`velocity`] — exact velocity-form coefficients of a nonlinear system
//!   via path integrals of its Jacobian, plus simulators;
//! * [`structure`] — the explicit multi-step parameter/feature factorization
//!   (basis-function oracle) behind the structured kernel;
//! * [`kernels`] — kernel specifications and the structured block-diagonal
//!   kernel with its effective Gram matrix;
//! * [`regression`] — ridge-regularized dual fitting, prediction, the
//!   implicit data-driven representation, and unstructured baselines;
//! * [`lpv`] — the linear parameter-varying embedding and its direct
//!   Hankel-based trajectory representation;
//! * [`hyperopt`] — hyperparameter grid search with validation splits;
//! * [`harness`] — experiment configuration, data generation, persistence,
//!   and the command-level API used by the `velokern` binary.

pub mod error;
pub mod harness;
pub mod hyperopt;
pub mod kernels;
pub mod linalg;
pub mod lpv;
pub mod regression;
pub mod rng;
pub mod signals;
pub mod structure;
pub mod velocity;

pub use error::{Error, Result};
