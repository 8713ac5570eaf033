//! Tabular datasets: ingestion, preprocessing, a synthetic source with a
//! known joint, and a hashed binary container.
//!
//! Feature matrices are laid out with all standardized numeric columns first,
//! followed by one one-hot block per categorical column, in schema order.

mod adult;
mod compas;
mod format;
mod synthetic;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use adult::{
    adult_paths, fetch_uci_adult, parse_adult, preprocess_adult, AdultFiles, AdultRecord, ADULT_TEST_RECORDS,
    ADULT_TRAIN_RECORDS, DEFAULT_ADULT_URL,
};
pub use compas::{load_compas, CompasData, COMPAS_ATTRIBUTES, COMPAS_P_U1, COMPAS_TEST_ROWS, COMPAS_TRAIN_ROWS};
pub use format::{DATASET_FORMAT_VERSION, DATASET_MAGIC};
pub use synthetic::{generate_synthetic, Synthetic, SyntheticSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    /// Z-scored with the given statistics (always the training split's).
    Numeric {
        mean: f64,
        std: f64,
    },
    Categorical {
        categories: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<Column>,
    pub u_name: String,
    pub s_name: String,
    /// Split whose statistics were used for standardization.
    pub stats_from: Split,
}

/// Where each likelihood term of the side decoder reads its columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    /// Leading numeric columns.
    pub numeric: usize,
    /// Widths of the one-hot groups that follow.
    pub groups: Vec<usize>,
}

impl FeatureLayout {
    pub fn all_numeric(width: usize) -> Self {
        Self { numeric: width, groups: Vec::new() }
    }

    pub fn width(&self) -> usize {
        self.numeric + self.groups.iter().sum::<usize>()
    }
}

impl Schema {
    pub fn layout(&self) -> FeatureLayout {
        let numeric = self.columns.iter().filter(|c| matches!(c.kind, ColumnKind::Numeric { .. })).count();
        let groups = self
            .columns
            .iter()
            .filter_map(|c| match &c.kind {
                ColumnKind::Categorical { categories } => Some(categories.len()),
                ColumnKind::Numeric { .. } => None,
            })
            .collect();
        FeatureLayout { numeric, groups }
    }

    pub fn attribute_count(&self) -> usize {
        self.columns.len()
    }

    fn check_order(&self) -> Result<()> {
        let first_cat = self.columns.iter().position(|c| matches!(c.kind, ColumnKind::Categorical { .. }));
        if let Some(i) = first_cat {
            if self.columns[i..].iter().any(|c| matches!(c.kind, ColumnKind::Numeric { .. })) {
                return Err(Error::Schema("numeric columns must precede categorical ones".into()));
            }
        }
        Ok(())
    }
}

/// Preprocessed features with binary utility and sensitive labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub name: String,
    pub split: Split,
    pub features: Array2<f64>,
    pub u: Vec<usize>,
    pub s: Vec<usize>,
    pub schema: Schema,
}

impl TabularDataset {
    pub fn new(
        name: impl Into<String>,
        split: Split,
        features: Array2<f64>,
        u: Vec<usize>,
        s: Vec<usize>,
        schema: Schema,
    ) -> Result<Self> {
        let n = features.nrows();
        if u.len() != n || s.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} feature rows, {} u labels, {} s labels",
                u.len(),
                s.len()
            )));
        }
        schema.check_order()?;
        if schema.layout().width() != features.ncols() {
            return Err(Error::Schema(format!(
                "schema describes {} feature columns, matrix has {}",
                schema.layout().width(),
                features.ncols()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Schema("non-finite feature value".into()));
        }
        if u.iter().chain(&s).any(|&l| l > 1) {
            return Err(Error::Schema("labels must be binary".into()));
        }
        Ok(Self { name: name.into(), split, features, u, s, schema })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn layout(&self) -> FeatureLayout {
        self.schema.layout()
    }

    pub fn p_u1(&self) -> f64 {
        self.u.iter().filter(|&&u| u == 1).count() as f64 / self.len().max(1) as f64
    }

    pub fn p_s1(&self) -> f64 {
        self.s.iter().filter(|&&s| s == 1).count() as f64 / self.len().max(1) as f64
    }

    pub fn features_as<T: Scalar>(&self) -> Array2<T> {
        self.features.mapv(T::of)
    }

    /// Rows `idx` as a new dataset of the same split.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            split: self.split,
            features: self.features.select(ndarray::Axis(0), idx),
            u: idx.iter().map(|&i| self.u[i]).collect(),
            s: idx.iter().map(|&i| self.s[i]).collect(),
            schema: self.schema.clone(),
        }
    }

    /// sha256 over the feature and label blocks of the binary format.
    pub fn content_hash(&self) -> String {
        format::content_hash(self)
    }

    pub fn write_to<W: std::io::Write>(&self, w: W) -> Result<()> {
        format::write(self, w)
    }

    pub fn read_from<R: std::io::Read>(r: R) -> Result<Self> {
        format::read(r)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Standardizes numeric values with training statistics (population std).
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}
