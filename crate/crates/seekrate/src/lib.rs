//! Certified convergence rates for gradient-driven source-seeking loops.
//!
//! A vehicle with integral action, in feedback with the gradient of an
//! `m`-strongly-convex field with `L`-Lipschitz gradient, converges to the
//! field minimizer. This crate computes certified exponential rates for that
//! convergence: it builds Zames-Falb multiplier constraints with an
//! exponential weighting, assembles the resulting linear matrix inequalities,
//! and bisects over the rate with a small dense semidefinite feasibility
//! solver. LTI plants and polytopic LPV plants (vertex enumeration) are
//! supported.
//!
//! The crate also ships the machinery used to keep the certificates honest:
//! closed-loop simulators, a worst-case quadratic-field eigenvalue oracle,
//! empirical decay fitting, numerical checks of the underlying integral
//! quadratic constraints, and a flocking simulator demonstrating the
//! center-of-mass reduction for quadratic fields.

// Validation uses `!(x > 0.0)`-style guards on purpose: they reject NaN,
// which the suggested `x <= 0.0` rewrite would silently accept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod error;
pub mod field;
pub mod flock;
pub mod iqc_check;
pub mod iqc_filter;
pub mod linalg;
pub mod plants;
pub mod sdp;
pub mod sim;
pub mod ss;
pub mod zames_falb;


pub use error::{Error, Result};





pub use ss::{ReferenceGains, StateSpace};

