//! Renormalization-group flow engine for the two-dimensional massless
//! Gross-Neveu model on a torus.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernels`]: momentum lattices and position-space covariance kernels.
//! * [`spin`]: gamma matrices, Pin(2) lifts and invariant decompositions.
//! * [`coeffs`]: the per-step flow coefficients.
//! * [`quadratic`]: the explicit quadratic flow and its summation bounds.
//! * [`linear`]: linearized flow, the solver `S0`, weighted norms and `S(t, x)`.
//! * [`stability`]: perturbation models, the homotopy solve and the vacuum energy.
//! * [`grassmann`]: finite-mode Grassmann algebra and Gaussian integration.
//! * [`polymer`]: paved sets, tree weights, extraction, reblocking and Mayer logarithms.
//! * [`config`]: flat `key=value` run configuration used by the command-line tool.
//! * [`verify`]: the acceptance checks shared by the tool and the test suite.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod coeffs;
pub mod config;
pub mod error;
pub mod grassmann;
pub mod kernels;
pub mod linear;
pub mod numeric;
pub mod polymer;
pub mod quadratic;
pub mod spin;
pub mod stability;
pub mod verify;

pub use error::{Error, Result};
