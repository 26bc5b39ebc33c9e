//! Numerical laboratory for the wave-type equation `u'' + λ² c(t) u = 0` with a
//! propagation speed `c(t)` that may be singular as `t -> 0+`.
//!
//! * [`speeds`] builds speeds with coded derivatives and measures class membership.
//! * [`oscillator`] integrates the frequency components and evaluates their energies.
//! * [`fdl_verifier`] runs the three-zone finite-loss analysis over frequency sweeps.
//! * [`activators`] constructs growth-inducing speeds and their certificates.
//! * [`harness`] drives experiments from config files and writes tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activators;
pub mod error;
pub mod fdl_verifier;
pub mod harness;
pub mod oscillator;
pub mod quad;
pub mod rate;
pub mod speeds;

pub use error::{Error, Result};
pub use rate::RateFn;
