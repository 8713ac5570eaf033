use ndarray::Array2;

use super::exact::mi_unchecked;
use super::Nats;
use crate::error::{Error, Result};

/// Plug-in MI of paired discrete labels.
///
/// Builds the empirical joint over `card_a x card_b` cells, optionally adding
/// `smoothing` pseudo-counts to every cell, and returns its exact MI.
pub fn plugin_mi(pairs: &[(usize, usize)], card_a: usize, card_b: usize, smoothing: f64) -> Result<Nats> {
    if pairs.len() < 2 {
        return Err(Error::InvalidParameter("plug-in MI needs at least 2 samples".into()));
    }
    if !(smoothing >= 0.0) || !smoothing.is_finite() {
        return Err(Error::InvalidParameter(format!("smoothing {smoothing} must be >= 0")));
    }
    let mut counts = Array2::from_elem((card_a, card_b), smoothing);
    for &(a, b) in pairs {
        if a >= card_a || b >= card_b {
            return Err(Error::OutOfRange(format!("label pair ({a}, {b}) outside {card_a} x {card_b}")));
        }
        counts[(a, b)] += 1.0;
    }
    let total = counts.sum();
    counts.mapv_inplace(|c| c / total);
    Ok(Nats::clamped(mi_unchecked(counts.view())))
}
