//! Information measures in nats.
//!
//! Exact quantities on finite joint tables, a plug-in estimator for paired
//! discrete labels, and a neural estimator for continuous embeddings.

mod exact;
mod mine;
mod plugin;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

pub(crate) use exact::mi_unchecked;
pub use exact::{conditional_entropy, conditional_mi, entropy, mutual_information};
pub use mine::{mine_estimate, MineConfig, MIN_MINE_SAMPLES};
pub use plugin::plugin_mi;

/// Rounding slack below zero that is silently clamped to zero.
pub const NEGATIVE_SLACK: f64 = 1e-9;

/// An information quantity in nats.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Nats<T: Scalar = f64>(T);

impl<T: Scalar> Nats<T> {
    pub fn new(value: T) -> Self {
        Self(value)
    }

    /// Clamps tiny negative rounding residue to zero.
    pub(crate) fn clamped(value: T) -> Self {
        if value < T::zero() && value > -T::of(NEGATIVE_SLACK) {
            Self(T::zero())
        } else {
            Self(value)
        }
    }

    pub fn get(self) -> T {
        self.0
    }

    pub fn bits(self) -> T {
        self.0 / T::LN_2()
    }
}

impl<T: Scalar> std::fmt::Display for Nats<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} nats", self.0)
    }
}
