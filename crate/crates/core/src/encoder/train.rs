//! Minibatch Adam training.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{loss_and_gradients, Batch, LossBreakdown, MechanismNoise};
use super::{EncoderModel, Mechanism, TrainConfig};
use crate::autodiff::{Adam, Parameterized};
use crate::datasets::TabularDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const HISTORY_COLUMNS: [&str; 6] = ["epoch", "recon", "utility", "vq_codebook", "vq_commit", "total"];

/// Trains in place and returns one row-weighted mean [`LossBreakdown`] per epoch.
///
/// Shuffling and mechanism draws come from `cfg.seed`, so a fixed model
/// initialization and seed give a bitwise-identical run.
pub fn train<T: Scalar>(
    model: &mut EncoderModel<T>,
    data: &TabularDataset,
    cfg: &TrainConfig,
) -> Result<Vec<LossBreakdown<T>>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidParameter("cannot train on an empty dataset".into()));
    }
    if data.dim() != model.spec.input_dim || data.layout() != model.spec.layout {
        return Err(Error::DimensionMismatch(format!(
            "dataset has {} columns, model expects {}",
            data.dim(),
            model.spec.input_dim
        )));
    }
    let mech = Mechanism::for_model(&model.spec, cfg)?;
    let x: Array2<T> = data.features_as();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(T::of(cfg.learning_rate));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossBreakdown::<T>::default();
        for chunk in order.chunks(cfg.batch_size) {
            let xb = x.select(ndarray::Axis(0), chunk);
            let ub: Vec<usize> = chunk.iter().map(|&i| data.u[i]).collect();
            let sb: Vec<usize> = chunk.iter().map(|&i| data.s[i]).collect();
            let noise = (0..cfg.mc_samples)
                .map(|_| MechanismNoise::draw(&model.spec, &mech, chunk.len(), &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let batch = Batch { x: xb.view(), u: &ub, s: &sb };
            let (loss, grads) = loss_and_gradients(model, batch, cfg, &mech, &noise).map_err(|e| match e {
                Error::NonFinite(term) => Error::Diverged { epoch, term },
                other => other,
            })?;
            if let Some((i, _)) = grads.iter().enumerate().find(|(_, g)| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::Diverged { epoch, term: format!("gradient of parameter {i}") });
            }
            adam.step(&mut model.params_mut(), &grads)?;
            let w = T::of_usize(chunk.len());
            sum.recon += loss.recon * w;
            sum.utility += loss.utility * w;
            sum.vq_codebook += loss.vq_codebook * w;
            sum.vq_commit += loss.vq_commit * w;
            sum.total += loss.total * w;
        }
        let n = T::of_usize(data.len());
        history.push(LossBreakdown {
            recon: sum.recon / n,
            utility: sum.utility / n,
            vq_codebook: sum.vq_codebook / n,
            vq_commit: sum.vq_commit / n,
            total: sum.total / n,
        });
    }
    Ok(history)
}

/// History as CSV with a [`HISTORY_COLUMNS`] header; epochs count from 1.
pub fn history_csv<T: Scalar>(history: &[LossBreakdown<T>]) -> String {
    let mut out = HISTORY_COLUMNS.join(",");
    out.push('\n');
    for (i, h) in history.iter().enumerate() {
        let h = h.as_f64();
        out.push_str(&format!("{},{},{},{},{},{}\n", i + 1, h.recon, h.utility, h.vq_codebook, h.vq_commit, h.total));
    }
    out
}
