//! Fair representation learning under local differential privacy.
//!
//! The crate has two halves. The discrete half ([`discrete`], [`info`],
//! [`ldp`], [`solver`]) computes utility and leakage exactly on small finite
//! alphabets and checks the information-theoretic guarantees numerically.
//! The neural half ([`autodiff`], [`encoder`], [`fairness`], [`datasets`])
//! trains variational encoders on tabular data and audits them.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`, defaulting to
//! `f64`); the aliases below fix the precision for common uses.

// `!(x > 0.0)` is how validation rejects NaN along with the bad range
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod datasets;
pub mod discrete;
pub mod encoder;
pub mod error;
pub mod fairness;
pub mod info;
pub mod ldp;
mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Channel64 = discrete::Channel<f64>;
pub type Channel32 = discrete::Channel<f32>;
pub type JointSource64 = discrete::JointSource<f64>;
pub type JointSource32 = discrete::JointSource<f32>;
pub type Graph64 = autodiff::Graph<f64>;
pub type Graph32 = autodiff::Graph<f32>;
pub type Mlp64 = autodiff::Mlp<f64>;
pub type Mlp32 = autodiff::Mlp<f32>;
