//! Kernel quantile regression with the pinball loss.
//!
//! The crate has two halves. The learning half trains the regularized
//! pinball-loss SVM in an RKHS ([`solver`]), selects the regularization
//! parameter on a validation split ([`experiments::tv_svm`]) and measures
//! spectral decay of kernels ([`kernels`]). The verification half builds
//! synthetic conditional distributions whose quantile structure is known in
//! closed form ([`distributions`]), computes inner risks exactly
//! ([`inner_risk`]) and checks self-calibration and variance inequalities
//! against those exact quantities ([`calibration`]).
//!
//! All reals are `f64`. Tolerances are passed explicitly.
//!
//! With the default `parallel` feature, independent work items (test
//! functions, repetitions, Gram rows) run on rayon. Without it every entry
//! point falls back to sequential iteration; see [`exec::Execution`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod distributions;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod inner_risk;
pub mod kernels;
pub mod law;
pub mod loss;
pub mod quadrature;
pub mod report;
pub mod seed;
pub mod solver;

pub use error::{Error, Result};
pub use loss::{clip, empirical_risk, pinball_loss, Dataset, Tau};
