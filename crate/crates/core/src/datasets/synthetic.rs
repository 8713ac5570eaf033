//! Synthetic tabular data drawn from a known `p(u, s, x)`.
//!
//! Each record samples `(u, s, x)` from the source and emits features
//! `Normal(mean_x, σ² I)`. The exact source travels with the data so
//! estimators can be compared against exact information values.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Column, ColumnKind, Schema, Split, TabularDataset};
use crate::discrete::JointSource;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub source: JointSource,
    /// `|X| x p` emission means, one distinct row per symbol.
    pub means: Array2<f64>,
    pub sigma: f64,
    pub n: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Means at `separation · e_x` in `|X|` dimensions.
    pub fn one_hot_means(source: JointSource, separation: f64, sigma: f64, n: usize, seed: u64) -> Self {
        let nx = source.card_x();
        let means = Array2::from_shape_fn((nx, nx), |(x, j)| if x == j { separation } else { 0.0 });
        Self { source, means, sigma, n, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.means.nrows() != self.source.card_x() || self.means.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} emission means for |X| = {}",
                self.means.nrows(),
                self.source.card_x()
            )));
        }
        if self.source.card_u() > 2 || self.source.card_s() > 2 {
            return Err(Error::InvalidParameter("synthetic U and S must be binary".into()));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma {} must be positive", self.sigma)));
        }
        let rows: Vec<_> = self.means.rows().into_iter().collect();
        for (i, a) in rows.iter().enumerate() {
            if rows[..i].iter().any(|b| b == a) {
                return Err(Error::InvalidParameter(format!("emission mean of x = {i} repeats an earlier one")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: TabularDataset,
    pub source: JointSource,
    /// The latent symbol behind each row.
    pub x: Vec<usize>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Synthetic> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let draws = spec.source.sample_with(spec.n, &mut rng)?;
    let p = spec.means.ncols();
    let noise = Normal::new(0.0, spec.sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut features = Array2::zeros((spec.n, p));
    for (r, &(_, _, x)) in draws.iter().enumerate() {
        for j in 0..p {
            features[(r, j)] = spec.means[(x, j)] + noise.sample(&mut rng);
        }
    }
    let schema = Schema {
        columns: (0..p)
            .map(|j| Column { name: format!("f{j}"), kind: ColumnKind::Numeric { mean: 0.0, std: 1.0 } })
            .collect(),
        u_name: "u".into(),
        s_name: "s".into(),
        stats_from: Split::Train,
    };
    let dataset = TabularDataset::new(
        "synthetic",
        Split::Train,
        features,
        draws.iter().map(|d| d.0).collect(),
        draws.iter().map(|d| d.1).collect(),
        schema,
    )?;
    Ok(Synthetic { dataset, source: spec.source.clone(), x: draws.iter().map(|d| d.2).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::random_source;

    fn source(seed: u64) -> JointSource {
        random_source::<f64, _>(2, 2, 3, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn tiny_sigma_lets_nearest_mean_recover_x() {
        let spec = SyntheticSpec::one_hot_means(source(1), 1.0, 1e-6, 2000, 3);
        let syn = generate_synthetic(&spec).unwrap();
        for (row, &x) in syn.dataset.features.rows().into_iter().zip(&syn.x) {
            let guess = (0..3)
                .min_by(|&a, &b| {
                    let da: f64 = row.iter().zip(spec.means.row(a)).map(|(v, m)| (v - m).powi(2)).sum();
                    let db: f64 = row.iter().zip(spec.means.row(b)).map(|(v, m)| (v - m).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            assert_eq!(guess, x);
        }
    }

    #[test]
    fn label_frequencies_within_four_sigma() {
        let src = source(2);
        let n = 100_000;
        let syn = generate_synthetic(&SyntheticSpec::one_hot_means(src.clone(), 1.0, 0.5, n, 4)).unwrap();
        let p_us = src.p_us();
        for u in 0..2 {
            for s in 0..2 {
                let count = syn.dataset.u.iter().zip(&syn.dataset.s).filter(|&(&a, &b)| a == u && b == s).count();
                let p = p_us[(u, s)];
                let sigma = (p * (1.0 - p) / n as f64).sqrt();
                assert!((count as f64 / n as f64 - p).abs() <= 4.0 * sigma);
            }
        }
    }

    #[test]
    fn same_seed_same_data() {
        let spec = SyntheticSpec::one_hot_means(source(5), 2.0, 0.3, 500, 9);
        assert_eq!(generate_synthetic(&spec).unwrap().dataset, generate_synthetic(&spec).unwrap().dataset);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = SyntheticSpec::one_hot_means(source(6), 1.0, 0.0, 10, 0);
        assert!(generate_synthetic(&spec).is_err());
        spec.sigma = 1.0;
        spec.means = Array2::zeros((3, 2));
        assert!(generate_synthetic(&spec).is_err());
    }
}
