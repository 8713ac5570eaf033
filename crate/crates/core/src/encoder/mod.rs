//! Variational fair representation encoder.
//!
//! An encoder MLP maps features `x` to a pre-noise representation `ẑ`, an
//! LDP mechanism turns `ẑ` into `z`, and two decoders are trained on `z`:
//! the utility decoder `q(u | z)` and the side decoder `q(x | z, s)`.
//!
//! * Continuous mode: `ẑ = t · tanh(encoder(x)) ∈ [-t, t]^d`, `z = ẑ + Laplace`.
//! * Discrete mode: the encoder emits `d` blocks of width `D`, each snapped to
//!   its nearest codebook row; the `d` code indices pass through randomized
//!   response and `z` is the concatenation of the randomized codes' rows.
//!   Gradients reach the encoder straight through the quantization.
//!
//! The mechanism is applied inside every forward pass, including training,
//! so decoders never see an un-randomized representation.

mod loss;
mod train;
mod variational;

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Checkpoint, Mlp, MlpSpec, Parameterized};
use crate::datasets::FeatureLayout;
use crate::error::{Error, Result};
use crate::ldp::{LaplaceMechanism, RandomizedResponse, DEFAULT_TRUNCATION};
use crate::scalar::Scalar;

pub use loss::{loss_and_gradients, mc_loss, mc_loss_frozen, Batch, LossBreakdown, MechanismNoise};
pub use train::{history_csv, train, HISTORY_COLUMNS};
pub use variational::{
    expected_loss, model_channel, model_tables, posterior_tables, variational_objectives, DecoderTables,
};

pub const DEFAULT_HIDDEN: usize = 100;
pub const DEFAULT_CODEBOOK_SIZE: usize = 4;
pub const DEFAULT_CODE_DIM: usize = 8;
pub const DEFAULT_REPR_DIM: usize = 2;
pub const DEFAULT_VQ_LAMBDA: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Continuous,
    Discrete,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Continuous => "con",
            Mode::Discrete => "dis",
        }
    }
}

/// Architecture of an [`EncoderModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub mode: Mode,
    pub input_dim: usize,
    /// Number of representation coordinates (continuous) or code blocks (discrete).
    pub d: usize,
    /// Codebook size `K` (discrete only).
    pub codebook_size: usize,
    /// Codebook row width `D` (discrete only).
    pub code_dim: usize,
    pub hidden: usize,
    pub card_u: usize,
    pub card_s: usize,
    pub layout: FeatureLayout,
}

impl ModelSpec {
    pub fn new(mode: Mode, layout: FeatureLayout) -> Self {
        Self {
            mode,
            input_dim: layout.width(),
            d: DEFAULT_REPR_DIM,
            codebook_size: DEFAULT_CODEBOOK_SIZE,
            code_dim: DEFAULT_CODE_DIM,
            hidden: DEFAULT_HIDDEN,
            card_u: 2,
            card_s: 2,
            layout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layout.width() != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "feature layout covers {} columns, input_dim is {}",
                self.layout.width(),
                self.input_dim
            )));
        }
        if self.input_dim == 0 || self.d == 0 || self.hidden == 0 || self.card_u < 2 || self.card_s < 1 {
            return Err(Error::InvalidParameter("model dimensions must be positive (|U| >= 2)".into()));
        }
        if self.mode == Mode::Discrete && (self.codebook_size < 2 || self.code_dim == 0) {
            return Err(Error::InvalidParameter("discrete mode needs K >= 2 and D >= 1".into()));
        }
        Ok(())
    }

    /// Width of `z` as seen by the decoders.
    pub fn z_dim(&self) -> usize {
        match self.mode {
            Mode::Continuous => self.d,
            Mode::Discrete => self.d * self.code_dim,
        }
    }

    fn encoder_out(&self) -> usize {
        self.z_dim()
    }
}

/// Training hyperparameters. Defaults follow the adult continuous setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub beta: f64,
    pub epsilon: f64,
    /// Truncation threshold `t` (continuous mode).
    pub t: f64,
    /// Monte Carlo mechanism draws per example, `L`.
    pub mc_samples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Commitment weight `λ` (discrete mode).
    pub vq_lambda: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            epsilon: 5.0,
            t: DEFAULT_TRUNCATION,
            mc_samples: 1,
            epochs: 150,
            batch_size: 512,
            learning_rate: 1e-3,
            vq_lambda: DEFAULT_VQ_LAMBDA,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta {} must be finite and >= 0", self.beta)));
        }
        if self.mc_samples == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("mc_samples and batch_size must be >= 1".into()));
        }
        if !(self.vq_lambda > 0.0) || !(self.learning_rate > 0.0) || !(self.t > 0.0) {
            return Err(Error::InvalidParameter("vq_lambda, learning_rate and t must be > 0".into()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon {} must be >= 0", self.epsilon)));
        }
        Ok(())
    }
}

/// The LDP randomizer matching a model's mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Mechanism {
    Laplace(LaplaceMechanism),
    Rr(RandomizedResponse),
}

impl Mechanism {
    pub fn for_model(spec: &ModelSpec, cfg: &TrainConfig) -> Result<Self> {
        match spec.mode {
            Mode::Continuous => Ok(Self::Laplace(LaplaceMechanism::new(cfg.epsilon, cfg.t, spec.d)?)),
            Mode::Discrete => Ok(Self::Rr(RandomizedResponse::new(cfg.epsilon, spec.codebook_size, spec.d)?)),
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            Self::Laplace(m) => m.epsilon(),
            Self::Rr(m) => m.epsilon(),
        }
    }
}

/// Result of snapping one feature block to the codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized<T: Scalar = f64> {
    pub index: usize,
    pub embedding: Vec<T>,
    /// `‖sg(f) - E_index‖²` (value only; the gradient goes to the codebook).
    pub codebook_loss: T,
    /// `‖f - sg(E_index)‖²` (value only; the gradient goes to the encoder).
    pub commitment_loss: T,
}

/// Nearest codebook row by Euclidean distance; ties go to the lowest index.
pub fn nearest_code<T: Scalar>(features: &[T], codebook: &Array2<T>) -> usize {
    let mut best = 0;
    let mut best_d = T::infinity();
    for (j, row) in codebook.rows().into_iter().enumerate() {
        let d: T = row.iter().zip(features).map(|(&e, &f)| (f - e) * (f - e)).sum();
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

pub fn quantize<T: Scalar>(features: &[T], codebook: &Array2<T>) -> Result<Quantized<T>> {
    if features.len() != codebook.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} features for codebook rows of width {}",
            features.len(),
            codebook.ncols()
        )));
    }
    let index = nearest_code(features, codebook);
    let embedding = codebook.row(index).to_vec();
    let dist: T = embedding.iter().zip(features).map(|(&e, &f)| (f - e) * (f - e)).sum();
    Ok(Quantized { index, embedding, codebook_loss: dist, commitment_loss: dist })
}

/// Output of [`EncoderModel::encode_batch`].
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded<T: Scalar = f64> {
    /// Continuous: truncated `ẑ`. Discrete: codebook rows of the clean indices.
    pub zhat: Array2<T>,
    /// Discrete: clean code indices `[n, d]`.
    pub indices: Option<Array2<usize>>,
    /// Discrete: randomized code indices `[n, d]`.
    pub noisy_indices: Option<Array2<usize>>,
    /// Randomized representation handed to decoders.
    pub z: Array2<T>,
}

impl<T: Scalar> Encoded<T> {
    /// Randomized discrete codes flattened to one symbol in `[K^d]` per row.
    pub fn joint_symbols(&self, k: usize) -> Option<Vec<usize>> {
        self.noisy_indices
            .as_ref()
            .map(|idx| idx.rows().into_iter().map(|r| r.iter().fold(0, |acc, &i| acc * k + i)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel<T: Scalar = f64> {
    pub spec: ModelSpec,
    pub encoder: Mlp<T>,
    pub codebook: Option<Array2<T>>,
    pub utility: Mlp<T>,
    pub side: Mlp<T>,
}

impl<T: Scalar> EncoderModel<T> {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = spec.hidden;
        let encoder = Mlp::new(
            MlpSpec::hidden(spec.input_dim, &[h], spec.encoder_out(), Activation::Relu, Activation::Identity)?,
            &mut rng,
        )?;
        let codebook = (spec.mode == Mode::Discrete).then(|| {
            let a = 1.0 / spec.codebook_size as f64;
            Array2::from_shape_simple_fn((spec.codebook_size, spec.code_dim), || T::of(rng.random_range(-a..a)))
        });
        let utility = Mlp::new(
            MlpSpec::hidden(spec.z_dim(), &[h, h], spec.card_u, Activation::Relu, Activation::Identity)?,
            &mut rng,
        )?;
        let side = Mlp::new(
            MlpSpec::hidden(spec.z_dim() + spec.card_s, &[h], spec.input_dim, Activation::Relu, Activation::Identity)?,
            &mut rng,
        )?;
        Ok(Self { spec, encoder, codebook, utility, side })
    }

    fn check_input(&self, x: &ArrayView2<T>) -> Result<()> {
        if x.ncols() != self.spec.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "{} feature columns, model expects {}",
                x.ncols(),
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    /// Encoder output before truncation or quantization.
    pub fn features(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(&x)?;
        self.encoder.predict(x)
    }

    /// Randomizes a batch with a freshly drawn mechanism sample.
    pub fn encode_batch<R: Rng + ?Sized>(&self, x: ArrayView2<T>, mech: &Mechanism, rng: &mut R) -> Result<Encoded<T>> {
        let noise = MechanismNoise::draw(&self.spec, mech, x.nrows(), rng)?;
        self.encode_with_noise(x, mech, &noise)
    }

    /// Single-example form of [`EncoderModel::encode_batch`].
    pub fn encode<R: Rng + ?Sized>(&self, x: &[T], mech: &Mechanism, rng: &mut R) -> Result<Encoded<T>> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        self.encode_batch(view, mech, rng)
    }

    pub fn encode_with_noise(
        &self,
        x: ArrayView2<T>,
        mech: &Mechanism,
        noise: &MechanismNoise<T>,
    ) -> Result<Encoded<T>> {
        let f = self.features(x)?;
        match (self.spec.mode, noise) {
            (Mode::Continuous, MechanismNoise::Laplace(n)) => {
                let t = T::of(match mech {
                    Mechanism::Laplace(m) => m.t(),
                    Mechanism::Rr(_) => {
                        return Err(Error::InvalidParameter("continuous model needs a Laplace mechanism".into()))
                    }
                });
                let zhat = f.mapv(|v| t * v.tanh());
                let z = &zhat + n;
                Ok(Encoded { zhat, indices: None, noisy_indices: None, z })
            }
            (Mode::Discrete, MechanismNoise::Rr { .. }) => {
                let Mechanism::Rr(rr) = mech else {
                    return Err(Error::InvalidParameter("discrete model needs a randomized-response mechanism".into()));
                };
                let codebook = self.codebook.as_ref().expect("discrete model has a codebook");
                let idx = self.code_indices(&f, codebook);
                let noisy = noise.apply_rr(&idx, rr)?;
                Ok(Encoded {
                    zhat: self.embed_indices(&idx, codebook),
                    z: self.embed_indices(&noisy, codebook),
                    indices: Some(idx),
                    noisy_indices: Some(noisy),
                })
            }
            _ => Err(Error::InvalidParameter("mechanism noise does not match the model mode".into())),
        }
    }

    fn code_indices(&self, f: &Array2<T>, codebook: &Array2<T>) -> Array2<usize> {
        let dd = self.spec.code_dim;
        Array2::from_shape_fn((f.nrows(), self.spec.d), |(r, i)| {
            let block: Vec<T> = f.row(r).iter().skip(i * dd).take(dd).copied().collect();
            nearest_code(&block, codebook)
        })
    }

    fn embed_indices(&self, idx: &Array2<usize>, codebook: &Array2<T>) -> Array2<T> {
        let dd = self.spec.code_dim;
        Array2::from_shape_fn((idx.nrows(), self.spec.d * dd), |(r, c)| codebook[(idx[(r, c / dd)], c % dd)])
    }

    /// One frozen mechanism draw per row (the evaluation protocol).
    pub fn embed_dataset(&self, xs: ArrayView2<T>, mech: &Mechanism, seed: u64) -> Result<Encoded<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.encode_batch(xs, mech, &mut rng)
    }

    /// `q(u | z)` for each row of `z`.
    pub fn utility_probs(&self, z: ArrayView2<T>) -> Result<Array2<T>> {
        let mut logits = self.utility.predict(z)?;
        for mut row in logits.axis_iter_mut(Axis(0)) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            row.mapv_inplace(|v| (v - max).exp());
            let total = row.sum();
            row.mapv_inplace(|v| v / total);
        }
        Ok(logits)
    }

    /// Argmax of `q(u | z)`.
    pub fn predict_utility(&self, z: ArrayView2<T>) -> Result<Vec<usize>> {
        let probs = self.utility_probs(z)?;
        Ok(probs
            .rows()
            .into_iter()
            .map(|r| r.iter().enumerate().fold((0, T::neg_infinity()), |b, (i, &p)| if p > b.1 { (i, p) } else { b }).0)
            .collect())
    }

    /// Side decoder output for `concat(z, one_hot(s))`.
    pub fn side_output(&self, z: ArrayView2<T>, s: &[usize]) -> Result<Array2<T>> {
        if s.len() != z.nrows() || s.iter().any(|&v| v >= self.spec.card_s) {
            return Err(Error::DimensionMismatch("side labels do not match z rows or |S|".into()));
        }
        let onehot =
            Array2::from_shape_fn((z.nrows(), self.spec.card_s), |(r, c)| if s[r] == c { T::one() } else { T::zero() });
        let input =
            ndarray::concatenate(Axis(1), &[z, onehot.view()]).map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        self.side.predict(input.view())
    }

    pub fn to_checkpoint(&self, meta: serde_json::Value) -> Result<Checkpoint<T>> {
        let mut blocks = Vec::new();
        if let Some(c) = &self.codebook {
            blocks.push(("codebook".to_string(), c.clone()));
        }
        Ok(Checkpoint {
            mlps: vec![
                ("encoder".into(), self.encoder.clone()),
                ("utility".into(), self.utility.clone()),
                ("side".into(), self.side.clone()),
            ],
            blocks,
            meta: serde_json::json!({ "model": self.spec, "extra": meta }),
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint<T>) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_value(ck.meta["model"].clone())?;
        spec.validate()?;
        let get =
            |name: &str| ck.mlp(name).cloned().ok_or_else(|| Error::Format(format!("checkpoint lacks MLP {name:?}")));
        let codebook = ck.block("codebook").cloned();
        if (spec.mode == Mode::Discrete) != codebook.is_some() {
            return Err(Error::Format("codebook presence does not match the model mode".into()));
        }
        Ok(Self { encoder: get("encoder")?, utility: get("utility")?, side: get("side")?, codebook, spec })
    }
}

impl<T: Scalar> Parameterized<T> for EncoderModel<T> {
    /// Encoder, codebook (discrete), utility decoder, side decoder.
    fn params(&self) -> Vec<&Array2<T>> {
        let mut out = self.encoder.params();
        out.extend(self.codebook.as_ref());
        out.extend(self.utility.params());
        out.extend(self.side.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<T>> {
        let mut out = self.encoder.params_mut();
        out.extend(self.codebook.as_mut());
        out.extend(self.utility.params_mut());
        out.extend(self.side.params_mut());
        out
    }
}
