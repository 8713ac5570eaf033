//! Finite joint distributions over `(u, s, x)` and the channels that act on them.
//!
//! A [`JointSource`] holds `p(u, s, x)`. A [`Channel`] is a row-stochastic
//! matrix `p(out | in)`. Feeding the `x` coordinate of a source through a
//! channel gives a [`JointFull`] over `(u, s, x, z)` in which `(U, S)` and `Z`
//! are conditionally independent given `X` by construction.
//!
//! Probabilities are kept in linear space. Inputs that miss stochasticity by
//! at most [`STOCHASTIC_TOL`] are renormalized, anything worse is rejected.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, Array3, Array4, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest deviation from unit mass that is silently renormalized.
pub const STOCHASTIC_TOL: f64 = 1e-9;

fn tolerance<T: Scalar>(len: usize) -> T {
    let floor = T::epsilon() * T::of_usize(len.max(1)) * T::of(4.0);
    T::of(STOCHASTIC_TOL).max(floor)
}

fn check_entries<'a, T: Scalar>(it: impl Iterator<Item = &'a T>, what: &str) -> Result<()> {
    for &p in it {
        if !p.is_finite() {
            return Err(Error::InvalidDistribution(format!("{what}: non-finite entry")));
        }
        if p < T::zero() {
            return Err(Error::InvalidDistribution(format!("{what}: negative entry {p}")));
        }
    }
    Ok(())
}

/// Exact joint distribution `p(u, s, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSource<T: Scalar = f64> {
    probs: Array3<T>,
}

impl<T: Scalar> JointSource<T> {
    /// Validates and (if needed) renormalizes a `[|U|, |S|, |X|]` array.
    pub fn new(mut probs: Array3<T>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty joint".into()));
        }
        check_entries(probs.iter(), "joint")?;
        let total: T = probs.iter().copied().sum();
        if total <= T::zero() {
            return Err(Error::InvalidDistribution("joint has zero total mass".into()));
        }
        if (total - T::one()).abs() > tolerance::<T>(probs.len()) {
            return Err(Error::InvalidDistribution(format!("joint sums to {total}, not 1")));
        }
        probs.mapv_inplace(|p| p / total);
        Ok(Self { probs })
    }

    /// Builds a source from `p(x)`, `p(u | x)` and `p(s | x)` with `U` and `S`
    /// conditionally independent given `X`.
    pub fn from_conditionals(px: &[T], u_given_x: &Channel<T>, s_given_x: &Channel<T>) -> Result<Self> {
        let nx = px.len();
        if u_given_x.in_card() != nx || s_given_x.in_card() != nx {
            return Err(Error::DimensionMismatch("conditionals must be indexed by x".into()));
        }
        let (nu, ns) = (u_given_x.out_card(), s_given_x.out_card());
        let probs =
            Array3::from_shape_fn((nu, ns, nx), |(u, s, x)| px[x] * u_given_x.prob(x, u) * s_given_x.prob(x, s));
        Self::new(probs)
    }

    pub fn card_u(&self) -> usize {
        self.probs.dim().0
    }
    pub fn card_s(&self) -> usize {
        self.probs.dim().1
    }
    pub fn card_x(&self) -> usize {
        self.probs.dim().2
    }

    pub fn probs(&self) -> &Array3<T> {
        &self.probs
    }

    pub fn p_u(&self) -> Array1<T> {
        self.probs.sum_axis(Axis(2)).sum_axis(Axis(1))
    }
    pub fn p_s(&self) -> Array1<T> {
        self.probs.sum_axis(Axis(2)).sum_axis(Axis(0))
    }
    pub fn p_x(&self) -> Array1<T> {
        self.probs.sum_axis(Axis(1)).sum_axis(Axis(0))
    }
    /// `p(u, x)` as a `[|U|, |X|]` matrix.
    pub fn p_ux(&self) -> Array2<T> {
        self.probs.sum_axis(Axis(1))
    }
    /// `p(s, x)` as a `[|S|, |X|]` matrix.
    pub fn p_sx(&self) -> Array2<T> {
        self.probs.sum_axis(Axis(0))
    }
    /// `p(u, s)` as a `[|U|, |S|]` matrix.
    pub fn p_us(&self) -> Array2<T> {
        self.probs.sum_axis(Axis(2))
    }

    /// Draws `n` i.i.d. `(u, s, x)` triples; identical seeds give identical draws.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<(usize, usize, usize)>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<(usize, usize, usize)>> {
        if n == 0 {
            return Err(Error::InvalidParameter("sample count must be at least 1".into()));
        }
        let sampler = CellSampler::new(self.probs.iter().map(|p| p.as_f64()));
        let (_, ns, nx) = self.probs.dim();
        Ok((0..n)
            .map(|_| {
                let flat = sampler.draw(rng);
                (flat / (ns * nx), (flat / nx) % ns, flat % nx)
            })
            .collect())
    }

    /// Text form: a `U S X` header then one probability per line in row-major order.
    pub fn to_text(&self) -> String {
        let (nu, ns, nx) = self.probs.dim();
        let mut out = format!("{nu} {ns} {nx}\n");
        for p in self.probs.iter() {
            let _ = writeln!(out, "{:e}", p.as_f64());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Format("missing source header".into()))?;
        let dims = parse_usizes(header)?;
        if dims.len() != 3 {
            return Err(Error::Format(format!("source header needs 3 cardinalities, got {header:?}")));
        }
        let values = parse_values::<T>(lines, dims[0] * dims[1] * dims[2])?;
        let probs =
            Array3::from_shape_vec((dims[0], dims[1], dims[2]), values).map_err(|e| Error::Format(e.to_string()))?;
        Self::new(probs)
    }
}

/// Inverse-CDF sampler over a flat table of nonnegative weights.
pub(crate) struct CellSampler {
    cdf: Vec<f64>,
    last_positive: usize,
}

impl CellSampler {
    pub(crate) fn new(weights: impl Iterator<Item = f64>) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        let total = acc;
        let mut last_positive = 0;
        let mut prev = 0.0;
        for (i, c) in cdf.iter_mut().enumerate() {
            if *c > prev {
                last_positive = i;
            }
            prev = *c;
            *c /= total;
        }
        Self { cdf, last_positive }
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let r: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= r).min(self.last_positive)
    }
}

fn parse_usizes(line: &str) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| Error::Format(format!("bad integer {t:?}: {e}"))))
        .collect()
}

fn parse_values<'a, T: Scalar>(lines: impl Iterator<Item = &'a str>, expected: usize) -> Result<Vec<T>> {
    let values: Vec<T> = lines
        .flat_map(str::split_whitespace)
        .map(|t| t.parse::<f64>().map(T::of).map_err(|e| Error::Format(format!("bad number {t:?}: {e}"))))
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(Error::Format(format!("expected {expected} values, found {}", values.len())));
    }
    Ok(values)
}

/// Row-stochastic conditional distribution `p(out | in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel<T: Scalar = f64> {
    rows: Array2<T>,
}

impl<T: Scalar> Channel<T> {
    pub fn new(mut rows: Array2<T>) -> Result<Self> {
        let (n_in, n_out) = rows.dim();
        if n_in == 0 || n_out == 0 {
            return Err(Error::InvalidDistribution("channel with empty alphabet".into()));
        }
        check_entries(rows.iter(), "channel")?;
        let tol = tolerance::<T>(n_out);
        for (i, mut row) in rows.axis_iter_mut(Axis(0)).enumerate() {
            let total: T = row.iter().copied().sum();
            if (total - T::one()).abs() > tol {
                return Err(Error::InvalidDistribution(format!("channel row {i} sums to {total}")));
            }
            row.mapv_inplace(|p| p / total);
        }
        Ok(Self { rows })
    }

    /// Wraps a matrix already known to be row-stochastic up to rounding.
    pub(crate) fn from_rows_unchecked(rows: Array2<T>) -> Self {
        debug_assert!(rows.axis_iter(Axis(0)).all(|r| (r.sum() - T::one()).abs() < T::of(1e-6)));
        Self { rows }
    }

    pub fn identity(n: usize) -> Self {
        Self { rows: Array2::eye(n) }
    }

    /// Every input maps to the same output distribution.
    pub fn constant(in_card: usize, out: &[T]) -> Result<Self> {
        let rows = Array2::from_shape_fn((in_card, out.len()), |(_, j)| out[j]);
        Self::new(rows)
    }

    /// Deterministic channel sending input `i` to `map[i]`.
    pub fn deterministic(map: &[usize], out_card: usize) -> Result<Self> {
        let mut rows = Array2::zeros((map.len(), out_card));
        for (i, &o) in map.iter().enumerate() {
            if o >= out_card {
                return Err(Error::OutOfRange(format!("output {o} >= {out_card}")));
            }
            rows[(i, o)] = T::one();
        }
        Self::new(rows)
    }

    /// Binary symmetric channel with crossover probability `flip`.
    pub fn bsc(flip: T) -> Result<Self> {
        let keep = T::one() - flip;
        Self::new(Array2::from_shape_vec((2, 2), vec![keep, flip, flip, keep]).expect("2x2"))
    }

    pub fn in_card(&self) -> usize {
        self.rows.nrows()
    }
    pub fn out_card(&self) -> usize {
        self.rows.ncols()
    }
    pub fn rows(&self) -> &Array2<T> {
        &self.rows
    }
    pub fn prob(&self, input: usize, output: usize) -> T {
        self.rows[(input, output)]
    }

    /// `self` followed by `next`: `p(out | in) = Σ_mid p(mid | in) p(out | mid)`.
    pub fn compose(&self, next: &Channel<T>) -> Result<Channel<T>> {
        if self.out_card() != next.in_card() {
            return Err(Error::DimensionMismatch(format!(
                "cannot compose {}->{} with {}->{}",
                self.in_card(),
                self.out_card(),
                next.in_card(),
                next.out_card()
            )));
        }
        Ok(Self::from_rows_unchecked(self.rows.dot(&next.rows)))
    }

    /// Samples an output symbol for `input`.
    pub fn sample<R: Rng + ?Sized>(&self, input: usize, rng: &mut R) -> usize {
        let r = T::of(rng.random::<f64>());
        let mut acc = T::zero();
        let row = self.rows.row(input);
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if r < acc {
                return j;
            }
        }
        // rounding left a sliver at the top: return the last positive entry
        row.iter().rposition(|&p| p > T::zero()).unwrap_or(row.len() - 1)
    }

    /// Text form: `in out` header, then one row per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.in_card(), self.out_card());
        for row in self.rows.axis_iter(Axis(0)) {
            let line: Vec<String> = row.iter().map(|p| format!("{:e}", p.as_f64())).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Format("missing channel header".into()))?;
        let dims = parse_usizes(header)?;
        if dims.len() != 2 {
            return Err(Error::Format(format!("channel header needs 2 integers, got {header:?}")));
        }
        let values = parse_values::<T>(lines, dims[0] * dims[1])?;
        let rows = Array2::from_shape_vec((dims[0], dims[1]), values).map_err(|e| Error::Format(e.to_string()))?;
        Self::new(rows)
    }
}

/// Joint `p(u, s, x, z)` induced by passing `X` through an encoder channel.
#[derive(Debug, Clone)]
pub struct JointFull<T: Scalar = f64> {
    probs: Array4<T>,
}

impl<T: Scalar> JointFull<T> {
    pub fn probs(&self) -> &Array4<T> {
        &self.probs
    }

    pub fn card_z(&self) -> usize {
        self.probs.dim().3
    }

    /// Marginalizes `z` back out.
    pub fn source(&self) -> Array3<T> {
        self.probs.sum_axis(Axis(3))
    }

    pub fn p_z(&self) -> Array1<T> {
        self.probs.sum_axis(Axis(0)).sum_axis(Axis(0)).sum_axis(Axis(0))
    }

    /// `p(x, z)`.
    pub fn joint_xz(&self) -> Array2<T> {
        self.probs.sum_axis(Axis(0)).sum_axis(Axis(0))
    }
    /// `p(u, z)`.
    pub fn joint_uz(&self) -> Array2<T> {
        self.probs.sum_axis(Axis(2)).sum_axis(Axis(1))
    }
    /// `p(s, z)`.
    pub fn joint_sz(&self) -> Array2<T> {
        self.probs.sum_axis(Axis(2)).sum_axis(Axis(0))
    }
    /// `p(x, z, s)` laid out for [`crate::info::conditional_mi`].
    pub fn joint_xzs(&self) -> Array3<T> {
        let szx = self.probs.sum_axis(Axis(0)); // [s, x, z]
        let (ns, nx, nz) = szx.dim();
        Array3::from_shape_fn((nx, nz, ns), |(x, z, s)| szx[(s, x, z)])
    }
}

/// `p(u, s, x, z) = p(u, s, x) p(z | x)`.
pub fn induced_joint<T: Scalar>(src: &JointSource<T>, enc: &Channel<T>) -> Result<JointFull<T>> {
    if enc.in_card() != src.card_x() {
        return Err(Error::DimensionMismatch(format!("encoder input {} != |X| {}", enc.in_card(), src.card_x())));
    }
    let (nu, ns, nx) = src.probs.dim();
    let nz = enc.out_card();
    let probs = Array4::from_shape_fn((nu, ns, nx, nz), |(u, s, x, z)| src.probs[(u, s, x)] * enc.rows[(x, z)]);
    Ok(JointFull { probs })
}

/// Random row-stochastic matrix with Dirichlet(alpha) rows.
pub fn random_channel<T: Scalar, R: Rng + ?Sized>(
    in_card: usize,
    out_card: usize,
    alpha: f64,
    rng: &mut R,
) -> Channel<T> {
    use rand_distr::{Distribution, Gamma};
    let gamma = Gamma::new(alpha, 1.0).expect("positive concentration");
    let mut rows = Array2::zeros((in_card, out_card));
    for mut row in rows.axis_iter_mut(Axis(0)) {
        let draws: Vec<f64> = (0..out_card).map(|_| gamma.sample(rng).max(1e-300)).collect();
        let total: f64 = draws.iter().sum();
        for (slot, d) in row.iter_mut().zip(draws) {
            *slot = T::of(d / total);
        }
    }
    Channel::from_rows_unchecked(rows)
}

/// Random joint over the given cardinalities with Dirichlet(alpha) cell weights.
pub fn random_source<T: Scalar, R: Rng + ?Sized>(
    card_u: usize,
    card_s: usize,
    card_x: usize,
    alpha: f64,
    rng: &mut R,
) -> JointSource<T> {
    let flat = random_channel::<T, R>(1, card_u * card_s * card_x, alpha, rng);
    let probs = flat.rows.into_shape_with_order((card_u, card_s, card_x)).expect("shape");
    JointSource::new(probs).expect("dirichlet draw is a distribution")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_source_has_uniform_marginals() {
        let src = JointSource::<f64>::new(Array3::from_elem((2, 2, 2), 0.125)).unwrap();
        for m in [src.p_u(), src.p_s(), src.p_x()] {
            assert!(m.iter().all(|&p| (p - 0.5).abs() < 1e-15));
        }
    }

    #[test]
    fn negative_entry_rejected() {
        let mut a = Array3::from_elem((2, 2, 2), 0.15);
        a[(0, 0, 0)] = -0.1;
        assert!(matches!(JointSource::new(a), Err(Error::InvalidDistribution(_))));
    }

    #[test]
    fn zero_mass_and_bad_total_rejected() {
        assert!(JointSource::new(Array3::<f64>::zeros((2, 2, 2))).is_err());
        assert!(JointSource::new(Array3::from_elem((2, 2, 2), 0.2)).is_err());
    }

    #[test]
    fn near_stochastic_input_renormalized() {
        let a = Array3::from_elem((2, 2, 2), 0.125 + 1e-11);
        let src = JointSource::<f64>::new(a).unwrap();
        assert!((src.probs().sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn adult_like_utility_marginal() {
        // p(U=1) = 0.2362 spread over a 2x2x4 construction
        let pu = [0.7638, 0.2362];
        let ps = [0.33, 0.67];
        let px = [0.1, 0.2, 0.3, 0.4];
        let a = Array3::from_shape_fn((2, 2, 4), |(u, s, x)| pu[u] * ps[s] * px[x]);
        let src = JointSource::<f64>::new(a).unwrap();
        assert!((src.p_u()[1] - 0.2362).abs() < 1e-12);
    }

    #[test]
    fn swap_then_bsc_is_bsc_three_quarters() {
        let swap = Channel::<f64>::deterministic(&[1, 0], 2).unwrap();
        let bsc = Channel::bsc(0.25).unwrap();
        let c = swap.compose(&bsc).unwrap();
        let expected = array![[0.25, 0.75], [0.75, 0.25]];
        assert!(c.rows().abs_diff_eq(&expected, 1e-15));
    }

    #[test]
    fn compose_identity_and_constant() {
        let id = Channel::<f64>::identity(3);
        assert_eq!(id.compose(&id).unwrap(), id);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_channel::<f64, _>(3, 4, 1.0, &mut rng);
        let k = Channel::constant(4, &[0.2, 0.8]).unwrap();
        let c = a.compose(&k).unwrap();
        for row in c.rows().axis_iter(Axis(0)) {
            assert!((row[0] - 0.2).abs() < 1e-15 && (row[1] - 0.8).abs() < 1e-15);
        }
        assert!(matches!(k.compose(&a), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn induced_joint_bsc_z_marginal() {
        // p(x) = (0.3, 0.7) with BSC(1/4): p(z=0) = 0.3*0.75 + 0.7*0.25 = 0.4
        let px = [0.3, 0.7];
        let a = Array3::from_shape_fn((2, 2, 2), |(_, _, x)| px[x] / 4.0);
        let src = JointSource::<f64>::new(a).unwrap();
        let j = induced_joint(&src, &Channel::bsc(0.25).unwrap()).unwrap();
        let pz = j.p_z();
        assert!((pz[0] - 0.4).abs() < 1e-15 && (pz[1] - 0.6).abs() < 1e-15);
        assert!((j.probs().sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_encoder_copies_x() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = random_source::<f64, _>(2, 3, 4, 1.0, &mut rng);
        let j = induced_joint(&src, &Channel::identity(4)).unwrap();
        assert!(j.p_z().abs_diff_eq(&src.p_x(), 1e-15));
        assert!(j.source().abs_diff_eq(src.probs(), 1e-15));
    }

    #[test]
    fn sampling_boundaries_and_determinism() {
        let src = JointSource::new(Array3::from_elem((2, 2, 2), 0.125)).unwrap();
        assert!(src.sample(0, 1).is_err());
        let one = src.sample(1, 1).unwrap();
        assert_eq!(one.len(), 1);
        let (u, s, x) = one[0];
        assert!(u < 2 && s < 2 && x < 2);
        assert_eq!(src.sample(500, 9).unwrap(), src.sample(500, 9).unwrap());
    }

    #[test]
    fn zero_cells_never_sampled() {
        let mut a = Array3::from_elem((1, 1, 4), 0.0);
        a[(0, 0, 1)] = 0.5;
        a[(0, 0, 3)] = 0.5;
        let src = JointSource::new(a).unwrap();
        assert!(src.sample(2000, 5).unwrap().iter().all(|&(_, _, x)| x == 1 || x == 3));
    }

    #[test]
    fn text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let src = random_source::<f64, _>(2, 2, 3, 1.0, &mut rng);
        let back = JointSource::<f64>::from_text(&src.to_text()).unwrap();
        assert!(back.probs().abs_diff_eq(src.probs(), 1e-15));
        let ch = random_channel::<f64, _>(3, 2, 1.0, &mut rng);
        let back = Channel::<f64>::from_text(&ch.to_text()).unwrap();
        assert!(back.rows().abs_diff_eq(ch.rows(), 1e-15));
        assert!(Channel::<f64>::from_text("2 2\n0.5 0.5\n").is_err());
    }

    #[test]
    fn f32_sources_work() {
        let src = JointSource::<f32>::new(Array3::from_elem((2, 2, 2), 0.125)).unwrap();
        assert!((src.p_x()[0] - 0.5).abs() < 1e-6);
    }
}
