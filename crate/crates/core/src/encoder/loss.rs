//! Monte Carlo training loss and its gradients.
//!
//! The loss is the negated objective, minimized:
//!
//! ```text
//! recon   = mean_i [ 0.5 ‖x_num - x̂_num‖² + Σ_groups CE(x_group, q(·|z, s)) ]
//! utility = mean_i [ -ln q(u | z) ]
//! total   = recon + β · utility (+ codebook + λ · commitment in discrete mode)
//! ```
//!
//! averaged over the `L` mechanism draws. The Gaussian normalizer of the
//! numeric columns is a constant and is left out.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EncoderModel, Mechanism, Mode, ModelSpec, TrainConfig};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::ldp::{sample_laplace, RandomizedResponse};
use crate::scalar::Scalar;

/// Per-batch loss terms, all as minimized negative log-likelihoods.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown<T: Scalar = f64> {
    pub recon: T,
    /// Unweighted `-ln q(u | z)`; it enters `total` multiplied by β.
    pub utility: T,
    pub vq_codebook: T,
    pub vq_commit: T,
    pub total: T,
}

impl<T: Scalar> LossBreakdown<T> {
    pub fn as_f64(&self) -> LossBreakdown<f64> {
        LossBreakdown {
            recon: self.recon.as_f64(),
            utility: self.utility.as_f64(),
            vq_codebook: self.vq_codebook.as_f64(),
            vq_commit: self.vq_commit.as_f64(),
            total: self.total.as_f64(),
        }
    }

    fn check(&self) -> Result<()> {
        for (name, v) in [
            ("recon", self.recon),
            ("utility", self.utility),
            ("vq_codebook", self.vq_codebook),
            ("vq_commit", self.vq_commit),
            ("total", self.total),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite(name.to_string()));
            }
        }
        Ok(())
    }
}

/// One frozen mechanism draw for a batch.
#[derive(Debug, Clone, PartialEq)]
pub enum MechanismNoise<T: Scalar = f64> {
    /// Additive Laplace noise, `[n, d]`.
    Laplace(Array2<T>),
    /// Randomized response: keep iff `keep[r, i] < keep_prob`, otherwise
    /// report the `pick[r, i]`-th of the other `K - 1` symbols.
    Rr { keep: Array2<f64>, pick: Array2<usize> },
}

impl<T: Scalar> MechanismNoise<T> {
    pub fn draw<R: Rng + ?Sized>(spec: &ModelSpec, mech: &Mechanism, n: usize, rng: &mut R) -> Result<Self> {
        match mech {
            Mechanism::Laplace(m) => {
                if m.d() != spec.d {
                    return Err(Error::DimensionMismatch(format!("Laplace d = {}, model d = {}", m.d(), spec.d)));
                }
                let b = m.scale();
                Ok(Self::Laplace(Array2::from_shape_simple_fn((n, spec.d), || T::of(sample_laplace(b, rng)))))
            }
            Mechanism::Rr(m) => {
                if m.d() != spec.d || m.k() != spec.codebook_size {
                    return Err(Error::DimensionMismatch(format!(
                        "RR (k={}, d={}) for codebook K={} and d={}",
                        m.k(),
                        m.d(),
                        spec.codebook_size,
                        spec.d
                    )));
                }
                let mut keep = Array2::zeros((n, spec.d));
                let mut pick = Array2::zeros((n, spec.d));
                for (kv, pv) in keep.iter_mut().zip(pick.iter_mut()) {
                    *kv = rng.random::<f64>();
                    *pv = rng.random_range(0..m.k() - 1);
                }
                Ok(Self::Rr { keep, pick })
            }
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            Self::Laplace(a) => a.nrows(),
            Self::Rr { keep, .. } => keep.nrows(),
        }
    }

    pub(crate) fn apply_rr(&self, idx: &Array2<usize>, rr: &RandomizedResponse) -> Result<Array2<usize>> {
        let Self::Rr { keep, pick } = self else {
            return Err(Error::InvalidParameter("randomized response needs RR noise".into()));
        };
        if keep.dim() != idx.dim() {
            return Err(Error::DimensionMismatch(format!("noise {:?} for indices {:?}", keep.dim(), idx.dim())));
        }
        let p = rr.keep_prob();
        Ok(Array2::from_shape_fn(idx.dim(), |ri| {
            let s = idx[ri];
            if keep[ri] < p {
                s
            } else if pick[ri] >= s {
                pick[ri] + 1
            } else {
                pick[ri]
            }
        }))
    }
}

/// A labelled minibatch.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a, T: Scalar = f64> {
    pub x: ArrayView2<'a, T>,
    pub u: &'a [usize],
    pub s: &'a [usize],
}

impl<T: Scalar> Batch<'_, T> {
    fn check(&self, spec: &ModelSpec) -> Result<()> {
        let n = self.x.nrows();
        if n == 0 {
            return Err(Error::InvalidParameter("empty batch".into()));
        }
        if self.u.len() != n || self.s.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} rows with {} u and {} s labels",
                self.u.len(),
                self.s.len()
            )));
        }
        if self.x.ncols() != spec.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "{} feature columns, model expects {}",
                self.x.ncols(),
                spec.input_dim
            )));
        }
        if self.u.iter().any(|&v| v >= spec.card_u) || self.s.iter().any(|&v| v >= spec.card_s) {
            return Err(Error::OutOfRange("label outside the model's alphabet".into()));
        }
        Ok(())
    }
}

struct Terms {
    recon: Var,
    utility: Var,
    codebook: Var,
    commit: Var,
    total: Var,
}

fn one_hot<T: Scalar>(labels: &[usize], k: usize) -> Array2<T> {
    Array2::from_shape_fn((labels.len(), k), |(r, c)| if labels[r] == c { T::one() } else { T::zero() })
}

/// Index of the hot column within each categorical group, per row.
fn group_targets<T: Scalar>(x: &ArrayView2<T>, start: usize, width: usize) -> Vec<usize> {
    x.rows()
        .into_iter()
        .map(|r| {
            (0..width).fold((0, T::neg_infinity()), |b, j| if r[start + j] > b.1 { (j, r[start + j]) } else { b }).0
        })
        .collect()
}

fn build<T: Scalar>(
    g: &mut Graph<T>,
    model: &EncoderModel<T>,
    bound: &Bound,
    batch: &Batch<'_, T>,
    cfg: &TrainConfig,
    mech: &Mechanism,
    noise: &[MechanismNoise<T>],
) -> Result<Terms> {
    let spec = &model.spec;
    let n = batch.x.nrows();
    let x = g.constant(batch.x.to_owned());
    let f = model.encoder.forward(g, &bound.encoder, x)?;
    let zero = g.scalar(T::zero());

    // the part of z that does not depend on the noise, and the vq terms
    let (clean, codebook_loss, commit_loss) = match (spec.mode, mech) {
        (Mode::Continuous, Mechanism::Laplace(m)) => {
            let th = g.tanh(f);
            (Clean::Continuous(g.scale(th, T::of(m.t()))), zero, zero)
        }
        (Mode::Discrete, Mechanism::Rr(rr)) => {
            let codebook = model.codebook.as_ref().expect("discrete model has a codebook");
            let e = bound.codebook.expect("codebook bound");
            let dd = spec.code_dim;
            let fv = g.value(f).clone();
            let idx = model.code_indices(&fv, codebook);
            let mut cb = Vec::new();
            let mut cm = Vec::new();
            let mut blocks = Vec::new();
            for i in 0..spec.d {
                let fi = g.slice_cols(f, i * dd, dd)?;
                let oh = g.constant(one_hot(&idx.column(i).to_vec(), spec.codebook_size));
                let emb = g.matmul(oh, e)?;
                let f_sg = g.stop_gradient(fi);
                let diff = g.sub(f_sg, emb)?;
                let sq = g.square(diff);
                cb.push(g.sum(sq));
                let emb_sg = g.stop_gradient(emb);
                let diff = g.sub(fi, emb_sg)?;
                let sq = g.square(diff);
                cm.push(g.sum(sq));
                blocks.push(fi);
            }
            let sum_all = |g: &mut Graph<T>, v: &[Var]| -> Result<Var> {
                let mut acc = v[0];
                for &w in &v[1..] {
                    acc = g.add(acc, w)?;
                }
                Ok(g.scale(acc, T::one() / T::of_usize(n)))
            };
            let cbl = sum_all(g, &cb)?;
            let cml = sum_all(g, &cm)?;
            (Clean::Discrete { idx, blocks, rr: *rr }, cbl, cml)
        }
        _ => return Err(Error::InvalidParameter("mechanism does not match the model mode".into())),
    };

    let s_onehot = g.constant(one_hot(batch.s, spec.card_s));
    let layout = &spec.layout;
    let mut recon_acc = zero;
    let mut util_acc = zero;
    for nz in noise {
        if nz.rows() != n {
            return Err(Error::DimensionMismatch(format!("noise for {} rows, batch has {n}", nz.rows())));
        }
        let z = match (&clean, nz) {
            (Clean::Continuous(zhat), MechanismNoise::Laplace(eta)) => {
                let c = g.constant(eta.clone());
                g.add(*zhat, c)?
            }
            (Clean::Discrete { idx, blocks, rr }, MechanismNoise::Rr { .. }) => {
                let codebook = model.codebook.as_ref().expect("discrete model has a codebook");
                let noisy = nz.apply_rr(idx, rr)?;
                let mut parts = Vec::with_capacity(blocks.len());
                for (i, &fi) in blocks.iter().enumerate() {
                    let rows = Array2::from_shape_fn((n, spec.code_dim), |(r, c)| codebook[(noisy[(r, i)], c)]);
                    let fwd = g.constant(rows);
                    parts.push(g.straight_through(fwd, fi)?);
                }
                g.concat(&parts)?
            }
            _ => return Err(Error::InvalidParameter("mechanism noise does not match the model mode".into())),
        };

        // utility decoder
        let logits = model.utility.forward(g, &bound.utility, z)?;
        let lp = g.log_softmax(logits);
        let picked = g.gather(lp, batch.u)?;
        let nll = g.mean(picked);
        let nll = g.neg(nll);
        util_acc = g.add(util_acc, nll)?;

        // side decoder
        let side_in = g.concat(&[z, s_onehot])?;
        let out = model.side.forward(g, &bound.side, side_in)?;
        let mut per_batch = zero;
        if layout.numeric > 0 {
            let pred = g.slice_cols(out, 0, layout.numeric)?;
            let target = g.constant(batch.x.slice(ndarray::s![.., 0..layout.numeric]).to_owned());
            let diff = g.sub(pred, target)?;
            let sq = g.square(diff);
            let s = g.sum(sq);
            per_batch = g.scale(s, T::of(0.5));
        }
        let mut start = layout.numeric;
        for &w in &layout.groups {
            let targets = group_targets(&batch.x, start, w);
            let logits = g.slice_cols(out, start, w)?;
            let lp = g.log_softmax(logits);
            let picked = g.gather(lp, &targets)?;
            let s = g.sum(picked);
            per_batch = g.sub(per_batch, s)?;
            start += w;
        }
        let r = g.scale(per_batch, T::one() / T::of_usize(n));
        recon_acc = g.add(recon_acc, r)?;
    }
    let inv_l = T::one() / T::of_usize(noise.len());
    let recon = g.scale(recon_acc, inv_l);
    let utility = g.scale(util_acc, inv_l);
    let bu = g.scale(utility, T::of(cfg.beta));
    let mut total = g.add(recon, bu)?;
    if spec.mode == Mode::Discrete {
        total = g.add(total, codebook_loss)?;
        let c = g.scale(commit_loss, T::of(cfg.vq_lambda));
        total = g.add(total, c)?;
    }
    Ok(Terms { recon, utility, codebook: codebook_loss, commit: commit_loss, total })
}

enum Clean {
    Continuous(Var),
    Discrete { idx: Array2<usize>, blocks: Vec<Var>, rr: RandomizedResponse },
}

struct Bound {
    encoder: Vec<Var>,
    codebook: Option<Var>,
    utility: Vec<Var>,
    side: Vec<Var>,
}

impl Bound {
    fn new<T: Scalar>(g: &mut Graph<T>, model: &EncoderModel<T>) -> Self {
        Self {
            encoder: model.encoder.bind(g),
            codebook: model.codebook.as_ref().map(|c| g.param(c.clone())),
            utility: model.utility.bind(g),
            side: model.side.bind(g),
        }
    }

    /// Same order as [`crate::autodiff::Parameterized::params`].
    fn all(&self) -> Vec<Var> {
        let mut out = self.encoder.clone();
        out.extend(self.codebook);
        out.extend(self.utility.iter().copied());
        out.extend(self.side.iter().copied());
        out
    }
}

fn breakdown<T: Scalar>(g: &Graph<T>, t: &Terms) -> LossBreakdown<T> {
    LossBreakdown {
        recon: g.scalar_value(t.recon),
        utility: g.scalar_value(t.utility),
        vq_codebook: g.scalar_value(t.codebook),
        vq_commit: g.scalar_value(t.commit),
        total: g.scalar_value(t.total),
    }
}

fn checked_setup<T: Scalar>(
    model: &EncoderModel<T>,
    batch: &Batch<'_, T>,
    cfg: &TrainConfig,
    noise: &[MechanismNoise<T>],
) -> Result<()> {
    cfg.validate()?;
    batch.check(&model.spec)?;
    if noise.is_empty() {
        return Err(Error::InvalidParameter("at least one mechanism draw is needed".into()));
    }
    Ok(())
}

/// Loss for fixed mechanism draws (one entry of `noise` per Monte Carlo sample).
pub fn mc_loss_frozen<T: Scalar>(
    model: &EncoderModel<T>,
    batch: Batch<'_, T>,
    cfg: &TrainConfig,
    mech: &Mechanism,
    noise: &[MechanismNoise<T>],
) -> Result<LossBreakdown<T>> {
    checked_setup(model, &batch, cfg, noise)?;
    let mut g = Graph::new();
    let bound = Bound::new(&mut g, model);
    let terms = build(&mut g, model, &bound, &batch, cfg, mech, noise)?;
    let out = breakdown(&g, &terms);
    out.check()?;
    Ok(out)
}

/// Loss with `cfg.mc_samples` fresh mechanism draws per example.
pub fn mc_loss<T: Scalar, R: Rng + ?Sized>(
    model: &EncoderModel<T>,
    batch: Batch<'_, T>,
    cfg: &TrainConfig,
    mech: &Mechanism,
    rng: &mut R,
) -> Result<LossBreakdown<T>> {
    let noise = (0..cfg.mc_samples)
        .map(|_| MechanismNoise::draw(&model.spec, mech, batch.x.nrows(), rng))
        .collect::<Result<Vec<_>>>()?;
    mc_loss_frozen(model, batch, cfg, mech, &noise)
}

/// Loss and gradients of `total` for every parameter, in
/// [`crate::autodiff::Parameterized::params`] order.
pub fn loss_and_gradients<T: Scalar>(
    model: &EncoderModel<T>,
    batch: Batch<'_, T>,
    cfg: &TrainConfig,
    mech: &Mechanism,
    noise: &[MechanismNoise<T>],
) -> Result<(LossBreakdown<T>, Vec<Array2<T>>)> {
    checked_setup(model, &batch, cfg, noise)?;
    let mut g = Graph::new();
    let bound = Bound::new(&mut g, model);
    let terms = build(&mut g, model, &bound, &batch, cfg, mech, noise)?;
    let out = breakdown(&g, &terms);
    out.check()?;
    let mut grads = g.backward(terms.total)?;
    Ok((out, bound.all().into_iter().map(|v| grads.take(v)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Parameterized;
    use crate::datasets::FeatureLayout;
    use crate::ldp::LaplaceMechanism;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_batch(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 5), |(_, j)| if j < 2 { rng.random_range(-1.0..1.0) } else { 0.0 });
        let mut x = x;
        for r in 0..n {
            x[(r, 2 + rng.random_range(0..3))] = 1.0;
        }
        let u = (0..n).map(|_| rng.random_range(0..2)).collect();
        let s = (0..n).map(|_| rng.random_range(0..2)).collect();
        (x, u, s)
    }

    fn model(mode: Mode) -> EncoderModel {
        let mut spec = ModelSpec::new(mode, FeatureLayout { numeric: 2, groups: vec![3] });
        spec.hidden = 6;
        EncoderModel::new(spec, 4).unwrap()
    }

    #[test]
    fn beta_zero_drops_utility() {
        let m = model(Mode::Continuous);
        let (x, u, s) = toy_batch(16, 1);
        let cfg = TrainConfig { beta: 0.0, epsilon: 2.0, ..Default::default() };
        let mech = Mechanism::for_model(&m.spec, &cfg).unwrap();
        let l =
            mc_loss(&m, Batch { x: x.view(), u: &u, s: &s }, &cfg, &mech, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(l.utility > 0.0);
        assert_eq!(l.total, l.recon);
    }

    #[test]
    fn gradients_follow_parameter_order() {
        let m = model(Mode::Discrete);
        let (x, u, s) = toy_batch(8, 2);
        let cfg = TrainConfig { epsilon: 1.0, ..Default::default() };
        let mech = Mechanism::for_model(&m.spec, &cfg).unwrap();
        let noise = vec![MechanismNoise::draw(&m.spec, &mech, 8, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()];
        let (_, grads) = loss_and_gradients(&m, Batch { x: x.view(), u: &u, s: &s }, &cfg, &mech, &noise).unwrap();
        let params = m.params();
        assert_eq!(grads.len(), params.len());
        for (g, p) in grads.iter().zip(params) {
            assert_eq!(g.dim(), p.dim());
        }
        // codebook receives gradient from the codebook loss
        let ncb = m.encoder.params().len();
        assert!(grads[ncb].iter().any(|v| *v != 0.0));
    }

    #[test]
    fn rr_noise_matches_mechanism_frequencies() {
        let rr = RandomizedResponse::new(1.0, 4, 1).unwrap();
        let spec = ModelSpec { d: 1, ..ModelSpec::new(Mode::Discrete, FeatureLayout::all_numeric(1)) };
        let n = 200_000;
        let noise =
            MechanismNoise::<f64>::draw(&spec, &Mechanism::Rr(rr), n, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let out = noise.apply_rr(&Array2::from_elem((n, 1), 2), &rr).unwrap();
        let kept = out.iter().filter(|&&v| v == 2).count() as f64 / n as f64;
        assert!((kept - rr.keep_prob()).abs() < 0.005);
        for other in [0, 1, 3] {
            let p = out.iter().filter(|&&v| v == other).count() as f64 / n as f64;
            assert!((p - rr.flip_prob()).abs() < 0.005);
        }
    }

    #[test]
    fn mismatched_noise_rejected() {
        let m = model(Mode::Continuous);
        let (x, u, s) = toy_batch(4, 3);
        let cfg = TrainConfig::default();
        let mech = Mechanism::Laplace(LaplaceMechanism::new(1.0, 0.5, 2).unwrap());
        let noise = vec![MechanismNoise::Laplace(Array2::zeros((3, 2)))];
        assert!(mc_loss_frozen(&m, Batch { x: x.view(), u: &u, s: &s }, &cfg, &mech, &noise).is_err());
        assert!(mc_loss_frozen(&m, Batch { x: x.view(), u: &u, s: &s }, &cfg, &mech, &[]).is_err());
    }
}
