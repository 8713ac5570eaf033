//! Group-fairness gaps, downstream and attacker classifiers, and the
//! evaluation report.
//!
//! Predictions and labels are binary. Conditionals over an empty group are
//! errors; a gap is never imputed as zero.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Adam, Graph, Mlp, MlpSpec};
use crate::datasets::TabularDataset;
use crate::encoder::{Encoded, EncoderModel, Mechanism, Mode, TrainConfig};
use crate::error::{Error, Result};
use crate::info::{mine_estimate, plugin_mi, MineConfig, Nats};

fn check_binary(v: &[usize], what: &str) -> Result<()> {
    if let Some(&bad) = v.iter().find(|&&x| x > 1) {
        return Err(Error::OutOfRange(format!("{what} value {bad} is not binary")));
    }
    Ok(())
}

fn positive_rate(preds: &[usize], mask: impl Fn(usize) -> bool, what: &str) -> Result<f64> {
    let (mut n, mut pos) = (0usize, 0usize);
    for (i, &p) in preds.iter().enumerate() {
        if mask(i) {
            n += 1;
            pos += p;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedMetric(format!("group {what} is empty")));
    }
    Ok(pos as f64 / n as f64)
}

/// `|Pr[Û=1 | S=0] - Pr[Û=1 | S=1]|`.
pub fn delta_dp(preds: &[usize], s: &[usize]) -> Result<f64> {
    if preds.len() != s.len() {
        return Err(Error::DimensionMismatch(format!("{} predictions, {} labels", preds.len(), s.len())));
    }
    check_binary(preds, "prediction")?;
    check_binary(s, "s")?;
    let r0 = positive_rate(preds, |i| s[i] == 0, "S=0")?;
    let r1 = positive_rate(preds, |i| s[i] == 1, "S=1")?;
    Ok((r0 - r1).abs())
}

/// `max_u |Pr[Û=1 | S=0, U=u] - Pr[Û=1 | S=1, U=u]|`.
pub fn delta_eo(preds: &[usize], s: &[usize], u: &[usize]) -> Result<f64> {
    if preds.len() != s.len() || preds.len() != u.len() {
        return Err(Error::DimensionMismatch("predictions, s and u differ in length".into()));
    }
    check_binary(preds, "prediction")?;
    check_binary(s, "s")?;
    check_binary(u, "u")?;
    let mut gap: f64 = 0.0;
    for uv in 0..2 {
        let r0 = positive_rate(preds, |i| s[i] == 0 && u[i] == uv, &format!("S=0, U={uv}"))?;
        let r1 = positive_rate(preds, |i| s[i] == 1 && u[i] == uv, &format!("S=1, U={uv}"))?;
        gap = gap.max((r0 - r1).abs());
    }
    Ok(gap)
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(Error::DimensionMismatch(format!("{} predictions, {} labels", preds.len(), labels.len())));
    }
    Ok(preds.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / preds.len() as f64)
}

/// Mean per-class recall; 0.5 for an uninformative classifier whatever the class balance.
pub fn balanced_accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    accuracy(preds, labels)?;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut recalls = Vec::new();
    for c in 0..k {
        let n = labels.iter().filter(|&&l| l == c).count();
        if n > 0 {
            let hit = preds.iter().zip(labels).filter(|&(&p, &l)| l == c && p == c).count();
            recalls.push(hit as f64 / n as f64);
        }
    }
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for DownstreamConfig {
    fn default() -> Self {
        Self { hidden: 100, epochs: 20, batch_size: 256, learning_rate: 1e-3 }
    }
}

/// A trained 1-hidden-layer softmax classifier.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub mlp: Mlp,
    pub classes: usize,
}

impl Classifier {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        let logits = self.mlp.predict(x)?;
        Ok(logits
            .rows()
            .into_iter()
            .map(|r| r.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b }).0)
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct Downstream {
    pub classifier: Classifier,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
}

/// Fits a classifier on the train split and scores it on the test split.
pub fn train_downstream(
    train_x: ArrayView2<f64>,
    train_y: &[usize],
    test_x: ArrayView2<f64>,
    test_y: &[usize],
    cfg: &DownstreamConfig,
    seed: u64,
) -> Result<Downstream> {
    if train_x.nrows() == 0 || train_x.nrows() != train_y.len() || test_x.nrows() != test_y.len() {
        return Err(Error::DimensionMismatch("representations and labels differ in length".into()));
    }
    if train_x.ncols() != test_x.ncols() {
        return Err(Error::DimensionMismatch("train and test representations differ in width".into()));
    }
    let classes = train_y.iter().max().copied().unwrap_or(0) + 1;
    if classes < 2 || train_y.iter().all(|&y| y == train_y[0]) {
        return Err(Error::DegenerateLabels(format!("all {} training labels equal {}", train_y.len(), train_y[0])));
    }
    if cfg.batch_size == 0 || cfg.hidden == 0 {
        return Err(Error::InvalidParameter("downstream batch size and width must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = MlpSpec::hidden(train_x.ncols(), &[cfg.hidden], classes, Activation::Relu, Activation::Identity)?;
    let mut mlp = Mlp::new(spec, &mut rng)?;
    let mut adam = Adam::new(cfg.learning_rate);
    let mut order: Vec<usize> = (0..train_x.nrows()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mut g = Graph::new();
            let bound = mlp.bind(&mut g);
            let x = g.constant(train_x.select(Axis(0), chunk));
            let logits = mlp.forward(&mut g, &bound, x)?;
            let lp = g.log_softmax(logits);
            let ys: Vec<usize> = chunk.iter().map(|&i| train_y[i]).collect();
            let picked = g.gather(lp, &ys)?;
            let m = g.mean(picked);
            let loss = g.neg(m);
            if !g.scalar_value(loss).is_finite() {
                return Err(Error::NonFinite("downstream classifier loss".into()));
            }
            let mut grads = g.backward(loss)?;
            let grads: Vec<Array2<f64>> = bound.iter().map(|&v| grads.take(v)).collect();
            adam.step(&mut mlp.params_mut(), &grads)?;
        }
    }
    let classifier = Classifier { mlp, classes };
    let preds = classifier.predict(test_x)?;
    Ok(Downstream {
        accuracy: accuracy(&preds, test_y)?,
        balanced_accuracy: balanced_accuracy(&preds, test_y)?,
        classifier,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitiveAccuracy {
    /// Mean per-group recall of the attacker.
    pub balanced: f64,
    pub plain: f64,
}

/// Accuracy of an attacker that reconstructs `S` from the representation.
pub fn sensitive_accuracy(
    train_z: ArrayView2<f64>,
    train_s: &[usize],
    test_z: ArrayView2<f64>,
    test_s: &[usize],
    cfg: &DownstreamConfig,
    seed: u64,
) -> Result<SensitiveAccuracy> {
    let d = train_downstream(train_z, train_s, test_z, test_s, cfg, seed)?;
    Ok(SensitiveAccuracy { balanced: d.balanced_accuracy, plain: d.accuracy })
}

/// Information between a randomized representation and a label: plug-in
/// over joint code symbols for discrete models, MINE for continuous ones.
pub fn label_information(
    model: &EncoderModel,
    encoded: &Encoded,
    labels: &[usize],
    mine: &MineConfig,
    seed: u64,
) -> Result<Nats> {
    if labels.len() != encoded.z.nrows() {
        return Err(Error::DimensionMismatch("labels and representations differ in length".into()));
    }
    match model.spec.mode {
        Mode::Discrete => {
            let k = model.spec.codebook_size;
            let symbols = encoded.joint_symbols(k).expect("discrete encoding has indices");
            let nz = k.pow(model.spec.d as u32);
            let nl = labels.iter().max().map_or(1, |m| m + 1);
            let pairs: Vec<(usize, usize)> = labels.iter().copied().zip(symbols).collect();
            plugin_mi(&pairs, nl, nz, 0.0)
        }
        Mode::Continuous => {
            let b = Array2::from_shape_fn((labels.len(), 1), |(r, _)| labels[r] as f64);
            mine_estimate(encoded.z.view(), b.view(), mine, seed)
        }
    }
}

/// Metrics for one evaluation seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub delta_dp: f64,
    pub delta_eo: f64,
    pub leakage_isz_nats: f64,
    /// Balanced accuracy of the attacker (0.5 = no signal).
    pub sensitive_accuracy: f64,
    pub sensitive_accuracy_plain: f64,
}

impl EvalReport {
    pub const FIELDS: [&'static str; 6] =
        ["accuracy", "delta_dp", "delta_eo", "leakage_isz_nats", "sensitive_accuracy", "sensitive_accuracy_plain"];

    pub fn values(&self) -> [f64; 6] {
        [
            self.accuracy,
            self.delta_dp,
            self.delta_eo,
            self.leakage_isz_nats,
            self.sensitive_accuracy,
            self.sensitive_accuracy_plain,
        ]
    }

    /// Fractions and gaps in `[0, 1]`, leakage finite and non-negative.
    pub fn in_range(&self) -> bool {
        let v = self.values();
        v.iter().enumerate().all(|(i, &x)| if i == 3 { x.is_finite() && x >= 0.0 } else { (0.0..=1.0).contains(&x) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub std: f64,
    pub median: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = match sorted.len() {
            0 => f64::NAN,
            m if m % 2 == 1 => sorted[m / 2],
            m => 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]),
        };
        Self { mean, std, median }
    }
}

/// Per-seed reports plus their aggregate, as written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub seeds: Vec<u64>,
    pub runs: Vec<EvalReport>,
    pub mean_std: std::collections::BTreeMap<String, MeanStd>,
}

impl AggregateReport {
    pub fn new(seeds: Vec<u64>, runs: Vec<EvalReport>) -> Self {
        let mean_std = EvalReport::FIELDS
            .iter()
            .enumerate()
            .map(|(i, f)| (f.to_string(), MeanStd::of(&runs.iter().map(|r| r.values()[i]).collect::<Vec<_>>())))
            .collect();
        Self { seeds, runs, mean_std }
    }

    pub fn median(&self, field: &str) -> Option<f64> {
        self.mean_std.get(field).map(|m| m.median)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub attacker: DownstreamConfig,
    pub mine: MineConfig,
}

/// Evaluates a trained model on one frozen mechanism draw per seed.
///
/// Task predictions come from the utility decoder on the randomized test
/// representation; the attacker is fit on the randomized train
/// representation and scored on the test one.
pub fn evaluate_once(
    model: &EncoderModel,
    train: &TabularDataset,
    test: &TabularDataset,
    train_cfg: &TrainConfig,
    eval: &EvalConfig,
    seed: u64,
) -> Result<EvalReport> {
    let mech = Mechanism::for_model(&model.spec, train_cfg)?;
    let z_test = model.embed_dataset(test.features.view(), &mech, seed)?;
    let z_train = model.embed_dataset(train.features.view(), &mech, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let preds = model.predict_utility(z_test.z.view())?;
    let sens = sensitive_accuracy(z_train.z.view(), &train.s, z_test.z.view(), &test.s, &eval.attacker, seed)?;
    let leakage = label_information(model, &z_test, &test.s, &eval.mine, seed)?;
    Ok(EvalReport {
        accuracy: accuracy(&preds, &test.u)?,
        delta_dp: delta_dp(&preds, &test.s)?,
        delta_eo: delta_eo(&preds, &test.s, &test.u)?,
        leakage_isz_nats: leakage.get(),
        sensitive_accuracy: sens.balanced,
        sensitive_accuracy_plain: sens.plain,
    })
}

pub fn full_report(
    model: &EncoderModel,
    train: &TabularDataset,
    test: &TabularDataset,
    train_cfg: &TrainConfig,
    eval: &EvalConfig,
    seeds: &[u64],
) -> Result<AggregateReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("full_report needs at least one seed".into()));
    }
    let runs =
        seeds.iter().map(|&s| evaluate_once(model, train, test, train_cfg, eval, s)).collect::<Result<Vec<_>>>()?;
    Ok(AggregateReport::new(seeds.to_vec(), runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn dp_examples() {
        assert_eq!(delta_dp(&[1, 1, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.0);
        assert_eq!(delta_dp(&[0, 1, 0, 1], &[0, 1, 0, 1]).unwrap(), 1.0);
        // (Û,S): (1,0)x3, (0,0)x1, (1,1)x1, (0,1)x3
        let preds = [1, 1, 1, 0, 1, 0, 0, 0];
        let s = [0, 0, 0, 0, 1, 1, 1, 1];
        assert_eq!(delta_dp(&preds, &s).unwrap(), 0.5);
        assert!(matches!(delta_dp(&[1, 0], &[0, 0]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn eo_examples() {
        let u = [0, 1, 0, 1, 1, 1, 0, 0];
        let s = [0, 0, 1, 1, 0, 1, 1, 0];
        assert_eq!(delta_eo(&u, &s, &u).unwrap(), 0.0);
        assert_eq!(delta_eo(&[1; 8], &s, &u).unwrap(), 0.0);
        // u=1 cells: s=0 rows {1,4} predict (1,0) -> 0.5; s=1 rows {3,5} predict (1,1) -> 1
        let preds = [0, 1, 0, 1, 0, 1, 0, 0];
        assert_eq!(delta_eo(&preds, &s, &u).unwrap(), 0.5);
        assert!(matches!(delta_eo(&[0, 1], &[0, 1], &[0, 0]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn gaps_invariant_to_flipping_s() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let p: Vec<usize> = (0..40).map(|_| rng.random_range(0..2)).collect();
            let s: Vec<usize> = (0..40).map(|i| i % 2).collect();
            let u: Vec<usize> = (0..40).map(|i| (i / 2) % 2).collect();
            let flipped: Vec<usize> = s.iter().map(|v| 1 - v).collect();
            assert_eq!(delta_dp(&p, &s).unwrap(), delta_dp(&p, &flipped).unwrap());
            assert_eq!(delta_eo(&p, &s, &u).unwrap(), delta_eo(&p, &flipped, &u).unwrap());
        }
    }

    fn blobs(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let x =
            Array2::from_shape_fn((n, 2), |(r, _)| if y[r] == 1 { 3.0 } else { -3.0 } + rng.random_range(-1.0..1.0));
        (x, y)
    }

    #[test]
    fn separable_blobs_classified() {
        let (xa, ya) = blobs(1000, 1);
        let (xb, yb) = blobs(500, 2);
        let d = train_downstream(xa.view(), &ya, xb.view(), &yb, &DownstreamConfig::default(), 0).unwrap();
        assert!(d.accuracy >= 0.99);
    }

    #[test]
    fn constant_labels_are_degenerate() {
        let (xa, _) = blobs(50, 1);
        let r = train_downstream(xa.view(), &[1; 50], xa.view(), &[1; 50], &DownstreamConfig::default(), 0);
        assert!(matches!(r, Err(Error::DegenerateLabels(_))));
    }

    #[test]
    fn attacker_on_noise_and_on_leak() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s_tr: Vec<usize> = (0..2000).map(|_| rng.random_range(0..2)).collect();
        let s_te: Vec<usize> = (0..2000).map(|_| rng.random_range(0..2)).collect();
        let noise = |rng: &mut ChaCha8Rng| Array2::from_shape_simple_fn((2000, 2), || rng.random_range(-1.0..1.0));
        let (a, b) = (noise(&mut rng), noise(&mut rng));
        let cfg = DownstreamConfig { epochs: 5, ..Default::default() };
        let acc = sensitive_accuracy(a.view(), &s_tr, b.view(), &s_te, &cfg, 0).unwrap();
        assert!((acc.balanced - 0.5).abs() < 0.03, "{acc:?}");
        let leak = |s: &[usize]| Array2::from_shape_fn((s.len(), 2), |(r, c)| if s[r] == c { 1.0 } else { -1.0 });
        let acc =
            sensitive_accuracy(leak(&s_tr).view(), &s_tr, leak(&s_te).view(), &s_te, &DownstreamConfig::default(), 0)
                .unwrap();
        assert!(acc.plain > 0.99);
    }

    #[test]
    fn aggregate_statistics() {
        let r = |a| EvalReport {
            accuracy: a,
            delta_dp: 0.1,
            delta_eo: 0.2,
            leakage_isz_nats: 0.0,
            sensitive_accuracy: 0.5,
            sensitive_accuracy_plain: 0.6,
        };
        let agg = AggregateReport::new(vec![1, 2, 3], vec![r(0.7), r(0.9), r(0.8)]);
        assert_eq!(agg.median("accuracy"), Some(0.8));
        assert!((agg.mean_std["accuracy"].mean - 0.8).abs() < 1e-12);
        assert!(agg.runs.iter().all(EvalReport::in_range));
        let json = serde_json::to_string(&agg).unwrap();
        assert!(json.contains("leakage_isz_nats") && json.contains("mean_std"));
    }
}
