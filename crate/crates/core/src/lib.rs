//! Angle-of-departure estimation for a single-antenna receiver observing a
//! multi-antenna transmitter over a line-of-sight channel.
//!
//! The crate is split along the processing chain:
//!
//! - [`signal`]: steering vectors, channel gain, pilot schedules and noisy
//!   observation synthesis.
//! - [`ml`]: deterministic (least-squares) and stochastic (covariance
//!   likelihood) maximum-likelihood estimators.
//! - [`baselines`]: DFT-lattice search, and MUSIC / ESPRIT on the uplink dual.
//! - [`crlb`]: Fisher information and the square-root Cramér-Rao bound.
//! - [`neural`]: the unsupervised network estimator, its losses, a small
//!   reverse-mode differentiation tape, AdamW and the training loop.
//!
//! Angles are radians everywhere in this crate. Powers are watts.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN.

pub mod baselines;
pub mod crlb;
pub mod error;
pub mod linalg;
pub mod ml;
pub mod neural;
pub mod rng;
pub mod search;
pub mod signal;

pub use error::{Error, Result};

/// Complex scalar used throughout: an explicit `(re, im)` pair of `f64`.
pub type C64 = num_complex::Complex64;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
