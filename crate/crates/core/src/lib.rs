//! Algorithms for measuring and correcting the end-effector position of a
//! cable-driven surgical robot.
//!
//! The crate is `no_std` (with `alloc`) and covers two phases:
//!
//! 1. **Measurement**: camera pose refinement from known markers
//!    ([`calibration`]), colored-ball circle detection ([`image`]), per-view
//!    effective/suspended tracking and ray triangulation ([`tracking`]), and
//!    the three-ball rig pose solve ([`effector`]).
//! 2. **Correction**: a synthetic cable-driven arm producing 118-float state
//!    records ([`robot`]), and a batch-normalized MLP that learns the
//!    reported-vs-true position error ([`nn`]).
//!
//! [`eval`] computes the RMS / standard deviation reports used to judge both
//! phases. File formats, configuration and the command line live in the
//! `eeprec` companion crate.
//!
//! World units are millimeters, image units are pixels, angles are radians.

#![no_std]
#![warn(missing_debug_implementations)]
// Float methods come from num-traits without std and are inherent with it.
#![cfg_attr(feature = "std", allow(unused_imports))]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

mod prelude;

pub mod calibration;
pub mod effector;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod image;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod robot;
pub mod scene;
pub mod tracking;

pub use error::Error;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
