use ndarray::{Array1, ArrayView1, ArrayView2, ArrayView3, Axis};

use super::Nats;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn validate<'a, T: Scalar>(values: impl Iterator<Item = &'a T> + Clone, what: &str) -> Result<()> {
    let mut total = T::zero();
    let mut n = 0usize;
    for &p in values {
        if !p.is_finite() || p < T::zero() {
            return Err(Error::InvalidDistribution(format!("{what}: entry {p}")));
        }
        total += p;
        n += 1;
    }
    let tol = T::of(1e-9).max(T::epsilon() * T::of_usize(n.max(1)) * T::of(4.0));
    if n == 0 || (total - T::one()).abs() > tol {
        return Err(Error::InvalidDistribution(format!("{what}: total mass {total}")));
    }
    Ok(())
}

/// Shannon entropy `-Σ p ln p`.
pub fn entropy<T: Scalar>(dist: ArrayView1<T>) -> Result<Nats<T>> {
    validate(dist.iter(), "distribution")?;
    Ok(Nats::clamped(-dist.iter().map(|&p| p.xlnx()).sum::<T>()))
}

fn entropy_unchecked<T: Scalar>(dist: ArrayView1<T>) -> T {
    -dist.iter().map(|&p| p.xlnx()).sum::<T>()
}

/// `I(A; B)` for a joint `p(a, b)`.
pub fn mutual_information<T: Scalar>(joint: ArrayView2<T>) -> Result<Nats<T>> {
    validate(joint.iter(), "joint")?;
    Ok(Nats::clamped(mi_unchecked(joint)))
}

pub(crate) fn mi_unchecked<T: Scalar>(joint: ArrayView2<T>) -> T {
    let pa: Array1<T> = joint.sum_axis(Axis(1));
    let pb: Array1<T> = joint.sum_axis(Axis(0));
    let mut total = T::zero();
    for ((a, b), &p) in joint.indexed_iter() {
        if p > T::zero() {
            total += p * (p / (pa[a] * pb[b])).ln();
        }
    }
    total
}

/// `I(X; Z | S)` for a joint laid out as `p(x, z, s)`.
pub fn conditional_mi<T: Scalar>(joint: ArrayView3<T>) -> Result<Nats<T>> {
    validate(joint.iter(), "joint")?;
    let mut total = T::zero();
    for s in 0..joint.dim().2 {
        let slice = joint.index_axis(Axis(2), s);
        let ps: T = slice.sum();
        if ps > T::zero() {
            let cond = slice.mapv(|p| p / ps);
            total += ps * mi_unchecked(cond.view());
        }
    }
    Ok(Nats::clamped(total))
}

/// `H(A | B)` for a joint `p(a, b)`.
pub fn conditional_entropy<T: Scalar>(joint: ArrayView2<T>) -> Result<Nats<T>> {
    validate(joint.iter(), "joint")?;
    let ha_b = entropy_unchecked(joint.sum_axis(Axis(1)).view()) - mi_unchecked(joint);
    Ok(Nats::clamped(ha_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::{induced_joint, random_channel, random_source, Channel};
    use ndarray::{array, Array2, Array3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(array![1.0, 0.0].view()).unwrap().get(), 0.0);
        assert!((entropy(array![0.5, 0.5].view()).unwrap().get() - LN_2).abs() < 1e-15);
        // -0.25 ln 0.25 - 0.75 ln 0.75
        assert!((entropy(array![0.25f64, 0.75].view()).unwrap().get() - 0.562_335_144_618_5).abs() < 1e-12);
        assert!(entropy(array![0.5, 0.6].view()).is_err());
        assert!(entropy(array![-0.5, 1.5].view()).is_err());
    }

    #[test]
    fn mutual_information_examples() {
        let product = array![[0.12f64, 0.28], [0.18, 0.42]];
        assert!(mutual_information(product.view()).unwrap().get().abs() < 1e-15);
        let copy = array![[0.5, 0.0], [0.0, 0.5]];
        assert!((mutual_information(copy.view()).unwrap().get() - LN_2).abs() < 1e-15);
        // ln 2 - H_b(1/4)
        let bsc = array![[0.375, 0.125], [0.125, 0.375]];
        let expected = LN_2 - 0.562_335_144_618_5;
        assert!((mutual_information(bsc.view()).unwrap().get() - expected).abs() < 1e-12);
        assert!((expected - 0.130812).abs() < 1e-6);
    }

    #[test]
    fn conditional_mi_copy_and_independent() {
        // S = X: I(X;Z|S) = 0 for any channel
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let enc = random_channel::<f64, _>(3, 2, 1.0, &mut rng);
        let px = [0.2, 0.3, 0.5];
        let xzs = Array3::from_shape_fn((3, 2, 3), |(x, z, s)| if s == x { px[x] * enc.prob(x, z) } else { 0.0 });
        assert!(conditional_mi(xzs.view()).unwrap().get().abs() < 1e-15);

        // S independent of (X, Z): equals I(X;Z)
        let ps = [0.4, 0.6];
        let xz = Array2::from_shape_fn((3, 2), |(x, z)| px[x] * enc.prob(x, z));
        let xzs = Array3::from_shape_fn((3, 2, 2), |(x, z, s)| xz[(x, z)] * ps[s]);
        let lhs = conditional_mi(xzs.view()).unwrap().get();
        let rhs = mutual_information(xz.view()).unwrap().get();
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn chain_rule_on_markov_joint() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let src = random_source::<f64, _>(2, 2, 2, 1.0, &mut rng);
            let enc = random_channel::<f64, _>(2, 2, 1.0, &mut rng);
            let j = induced_joint(&src, &enc).unwrap();
            let ixz = mutual_information(j.joint_xz().view()).unwrap().get();
            let isz = mutual_information(j.joint_sz().view()).unwrap().get();
            let nu = conditional_mi(j.joint_xzs().view()).unwrap().get();
            assert!((ixz - nu - isz).abs() < 1e-10);
        }
    }

    #[test]
    fn conditioning_bound_holds() {
        // H(S|Z) >= H(S) - I(X;Z) + I(X;Z|S)
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let src = random_source::<f64, _>(2, 3, 4, 0.7, &mut rng);
            let enc = random_channel::<f64, _>(4, 3, 0.7, &mut rng);
            let j = induced_joint(&src, &enc).unwrap();
            let hs_z = conditional_entropy(j.joint_sz().view()).unwrap().get();
            let hs = entropy(src.p_s().view()).unwrap().get();
            let ixz = mutual_information(j.joint_xz().view()).unwrap().get();
            let nu = conditional_mi(j.joint_xzs().view()).unwrap().get();
            assert!(hs_z >= hs - ixz + nu - 1e-9);
        }
    }

    #[test]
    fn data_processing_on_compositions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let src = random_source::<f64, _>(2, 2, 4, 1.0, &mut rng);
            let a = random_channel::<f64, _>(4, 3, 0.5, &mut rng);
            let b = random_channel::<f64, _>(3, 4, 0.5, &mut rng);
            let i_a = mutual_information(induced_joint(&src, &a).unwrap().joint_xz().view()).unwrap().get();
            let ab = a.compose(&b).unwrap();
            let i_ab = mutual_information(induced_joint(&src, &ab).unwrap().joint_xz().view()).unwrap().get();
            assert!(i_ab <= i_a + 1e-9);
            let id = Channel::identity(4);
            let i_id = mutual_information(induced_joint(&src, &id).unwrap().joint_xz().view()).unwrap().get();
            assert!((i_id - entropy(src.p_x().view()).unwrap().get()).abs() < 1e-12);
        }
    }
}
