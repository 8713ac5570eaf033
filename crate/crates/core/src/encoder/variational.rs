//! Exact variational bound on finite alphabets.
//!
//! For an encoder channel `p(z | x)` (mechanism included) and decoder tables
//! `q(x | z, s)`, `q(u | z)`:
//!
//! ```text
//! L   = I(X; Z | S) + β I(U; Z)
//! L_V = E[ln q(x | z, s)] + β E[ln q(u | z)] + H(X | S) + β H(U)
//! ```
//!
//! and `L - L_V` is a weighted sum of two KL divergences, so `L_V ≤ L` with
//! equality at the true posteriors. The entropy constants are included so
//! the two sides are directly comparable.
//!
//! A discrete [`EncoderModel`] whose features are a single one-hot group is
//! itself enumerable: [`model_channel`] and [`model_tables`] extract its
//! exact encoder channel and decoder tables, and [`expected_loss`] gives the
//! exact expectation of the Monte Carlo loss.

use ndarray::{Array1, Array2, Axis};

use super::{EncoderModel, Mechanism, Mode, TrainConfig};
use crate::discrete::{induced_joint, Channel, JointSource};
use crate::error::{Error, Result};
use crate::info::{conditional_entropy, conditional_mi, entropy, mutual_information};
use crate::ldp::rr_channel;
use crate::scalar::Scalar;

/// Decoder probabilities on a finite alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderTables<T: Scalar = f64> {
    /// `q(x | z, s)`, row `z * |S| + s`.
    pub q_x: Array2<T>,
    /// `q(u | z)`, row `z`.
    pub q_u: Array2<T>,
    pub card_s: usize,
}

impl<T: Scalar> DecoderTables<T> {
    fn check(&self, src: &JointSource<T>, nz: usize) -> Result<()> {
        if self.card_s != src.card_s()
            || self.q_x.dim() != (nz * src.card_s(), src.card_x())
            || self.q_u.dim() != (nz, src.card_u())
        {
            return Err(Error::DimensionMismatch("decoder tables do not match the source and encoder".into()));
        }
        Ok(())
    }
}

/// The true posteriors `p(x | z, s)` and `p(u | z)`; uniform where the
/// conditioning event has zero mass.
pub fn posterior_tables<T: Scalar>(src: &JointSource<T>, enc: &Channel<T>) -> Result<DecoderTables<T>> {
    let joint = induced_joint(src, enc)?;
    let p = joint.probs();
    let (nu, ns, nx, nz) = p.dim();
    let szx = p.sum_axis(Axis(0)); // [s, x, z]
    let mut q_x = Array2::zeros((nz * ns, nx));
    for z in 0..nz {
        for s in 0..ns {
            let mass: T = (0..nx).map(|x| szx[(s, x, z)]).sum();
            for x in 0..nx {
                q_x[(z * ns + s, x)] =
                    if mass > T::zero() { szx[(s, x, z)] / mass } else { T::one() / T::of_usize(nx) };
            }
        }
    }
    let uz = joint.joint_uz();
    let mut q_u = Array2::zeros((nz, nu));
    for z in 0..nz {
        let mass: T = uz.column(z).sum();
        for u in 0..nu {
            q_u[(z, u)] = if mass > T::zero() { uz[(u, z)] / mass } else { T::one() / T::of_usize(nu) };
        }
    }
    Ok(DecoderTables { q_x, q_u, card_s: ns })
}

/// `(E[ln q(x|z,s)], E[ln q(u|z)])` under the induced joint.
fn expected_log_likelihoods<T: Scalar>(
    src: &JointSource<T>,
    enc: &Channel<T>,
    tables: &DecoderTables<T>,
) -> Result<(T, T)> {
    let joint = induced_joint(src, enc)?;
    tables.check(src, enc.out_card())?;
    let ns = tables.card_s;
    let mut lx = T::zero();
    let mut lu = T::zero();
    for ((u, s, x, z), &p) in joint.probs().indexed_iter() {
        if p > T::zero() {
            lx += p * tables.q_x[(z * ns + s, x)].ln();
            lu += p * tables.q_u[(z, u)].ln();
        }
    }
    Ok((lx, lu))
}

/// Exact `(L_V, L)`.
pub fn variational_objectives<T: Scalar>(
    src: &JointSource<T>,
    enc: &Channel<T>,
    tables: &DecoderTables<T>,
    beta: T,
) -> Result<(T, T)> {
    let (lx, lu) = expected_log_likelihoods(src, enc, tables)?;
    let h_x_given_s = conditional_entropy(src.p_sx().t())?.get();
    let h_u = entropy(src.p_u().view())?.get();
    let lv = lx + h_x_given_s + beta * (lu + h_u);
    let joint = induced_joint(src, enc)?;
    let l = conditional_mi(joint.joint_xzs().view())?.get() + beta * mutual_information(joint.joint_uz().view())?.get();
    Ok((lv, l))
}

fn check_enumerable<T: Scalar>(model: &EncoderModel<T>, src: &JointSource<T>) -> Result<()> {
    let spec = &model.spec;
    if spec.mode != Mode::Discrete || spec.layout.numeric != 0 || spec.layout.groups != [src.card_x()] {
        return Err(Error::InvalidParameter(
            "enumeration needs a discrete model whose features are one one-hot group of width |X|".into(),
        ));
    }
    if spec.card_s != src.card_s() || spec.card_u != src.card_u() {
        return Err(Error::DimensionMismatch("model label alphabets differ from the source".into()));
    }
    Ok(())
}

fn onehot_inputs<T: Scalar>(nx: usize) -> Array2<T> {
    Array2::from_shape_fn((nx, nx), |(r, c)| if r == c { T::one() } else { T::zero() })
}

/// Exact `p(z | x)` over joint code symbols, mechanism included.
pub fn model_channel<T: Scalar>(model: &EncoderModel<T>, src: &JointSource<T>, mech: &Mechanism) -> Result<Channel<T>> {
    check_enumerable(model, src)?;
    let Mechanism::Rr(rr) = mech else {
        return Err(Error::InvalidParameter("enumeration needs randomized response".into()));
    };
    let f = model.features(onehot_inputs::<T>(src.card_x()).view())?;
    let codebook = model.codebook.as_ref().expect("discrete model has a codebook");
    let idx = model.code_indices(&f, codebook);
    let k = model.spec.codebook_size;
    let map: Vec<usize> = idx.rows().into_iter().map(|r| r.iter().fold(0, |acc, &i| acc * k + i)).collect();
    let rrc = rr_channel::<T>(rr)?;
    Channel::deterministic(&map, rrc.in_card())?.compose(&rrc)
}

/// The model's decoders evaluated at every joint code symbol.
pub fn model_tables<T: Scalar>(model: &EncoderModel<T>, src: &JointSource<T>) -> Result<DecoderTables<T>> {
    check_enumerable(model, src)?;
    let spec = &model.spec;
    let codebook = model.codebook.as_ref().expect("discrete model has a codebook");
    let k = spec.codebook_size;
    let nz = k.checked_pow(spec.d as u32).ok_or(Error::CapExceeded { size: usize::MAX, cap: usize::MAX })?;
    let z = Array2::from_shape_fn((nz, spec.d * spec.code_dim), |(sym, c)| {
        let block = c / spec.code_dim;
        let digit = (sym / k.pow((spec.d - 1 - block) as u32)) % k;
        codebook[(digit, c % spec.code_dim)]
    });
    let q_u = model.utility_probs(z.view())?;
    let ns = spec.card_s;
    let mut q_x = Array2::zeros((nz * ns, src.card_x()));
    for s in 0..ns {
        let out = model.side_output(z.view(), &vec![s; nz])?;
        for zi in 0..nz {
            let row = out.row(zi);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            for x in 0..src.card_x() {
                q_x[(zi * ns + s, x)] = (row[x] - lse).exp();
            }
        }
    }
    Ok(DecoderTables { q_x, q_u, card_s: ns })
}

/// Exact expectation of the Monte Carlo loss over the source and the mechanism.
pub fn expected_loss<T: Scalar>(
    model: &EncoderModel<T>,
    src: &JointSource<T>,
    cfg: &TrainConfig,
    mech: &Mechanism,
) -> Result<T> {
    let enc = model_channel(model, src, mech)?;
    let tables = model_tables(model, src)?;
    let (lx, lu) = expected_log_likelihoods(src, &enc, &tables)?;
    // vq terms depend on x only
    let f = model.features(onehot_inputs::<T>(src.card_x()).view())?;
    let codebook = model.codebook.as_ref().expect("discrete model has a codebook");
    let idx = model.code_indices(&f, codebook);
    let dd = model.spec.code_dim;
    let sq: Array1<T> = Array1::from_shape_fn(src.card_x(), |x| {
        (0..model.spec.d)
            .map(|i| (0..dd).map(|c| (f[(x, i * dd + c)] - codebook[(idx[(x, i)], c)]).powi(2)).sum::<T>())
            .sum()
    });
    let vq: T = src.p_x().iter().zip(sq.iter()).map(|(&p, &v)| p * v).sum();
    Ok(-lx - T::of(cfg.beta) * lu + vq * (T::one() + T::of(cfg.vq_lambda)))
}
