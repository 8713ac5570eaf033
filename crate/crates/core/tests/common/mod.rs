//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use fairldp::autodiff::{Graph, Parameterized, Var};
use fairldp::datasets::{fetch_uci_adult, preprocess_adult, FeatureLayout, TabularDataset};
use fairldp::encoder::{EncoderModel, Mechanism, MechanismNoise, Mode, ModelSpec, TrainConfig};
use fairldp::Result;
use ndarray::{s, Array2, ArrayView2};

pub const FD_STEP: f64 = 1e-6;

pub fn cache_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/cache")
}

pub fn adult() -> (TabularDataset, TabularDataset) {
    let files = fetch_uci_adult(&cache_dir(), None).expect("adult files cached in data/cache");
    let train = std::fs::read_to_string(files.train).unwrap();
    let test = std::fs::read_to_string(files.test).unwrap();
    preprocess_adult(&train, &test).unwrap()
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, or the absolute difference when both are tiny.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of `f` at `x0`, entry by entry.
pub fn central_differences(x0: &[f64], f: &mut dyn FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x0.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + FD_STEP;
            let up = f(&x);
            x[i] = orig - FD_STEP;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub type OpBuilder = dyn Fn(&mut Graph, &[Var]) -> Result<Var>;

/// Relative error between backprop and central differences for
/// `loss = Σ W ⊙ op(inputs)`, over every input entry.
pub fn check_op(inputs: &[Array2<f64>], weight_seed: u64, build: &OpBuilder) -> f64 {
    let shapes: Vec<(usize, usize)> = inputs.iter().map(|a| a.dim()).collect();
    let eval = |vals: &[Array2<f64>], want_grad: bool| -> (f64, Vec<f64>) {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|v| g.param(v.clone())).collect();
        let out = build(&mut g, &vars).unwrap();
        let (r, c) = g.shape(out);
        let mut state = weight_seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let w = Array2::from_shape_simple_fn((r, c), || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        });
        let wv = g.constant(w);
        let prod = g.mul(out, wv).unwrap();
        let loss = g.sum(prod);
        let value = g.scalar_value(loss);
        if !want_grad {
            return (value, vec![]);
        }
        let grads = g.backward(loss).unwrap();
        (value, vars.iter().flat_map(|&v| grads.get(v).into_iter()).collect())
    };
    let (_, analytic) = eval(inputs, true);
    let flat: Vec<f64> = inputs.iter().flat_map(|a| a.iter().copied()).collect();
    let numeric = central_differences(&flat, &mut |x| {
        let mut off = 0;
        let vals: Vec<Array2<f64>> = shapes
            .iter()
            .map(|&(r, c)| {
                let a = Array2::from_shape_vec((r, c), x[off..off + r * c].to_vec()).unwrap();
                off += r * c;
                a
            })
            .collect();
        eval(&vals, false).0
    });
    rel_err(&analytic, &numeric)
}

fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

fn nearest(block: &[f64], codebook: &Array2<f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, row) in codebook.rows().into_iter().enumerate() {
        let d: f64 = row.iter().zip(block).map(|(e, f)| (f - e).powi(2)).sum();
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

/// Independent plain-array evaluation of the training loss.
///
/// `anchor` fixes everything the gradient treats as constant: the code
/// assignment, the straight-through offset `E₀[ĩ] - f₀` and the stop-gradient
/// halves of the two vq terms. At `model == anchor` the value equals the
/// loss, and its derivative is what backprop is expected to return.
#[allow(clippy::too_many_arguments)]
pub fn oracle_loss(
    model: &EncoderModel,
    anchor: &EncoderModel,
    x: ArrayView2<f64>,
    u: &[usize],
    s: &[usize],
    cfg: &TrainConfig,
    mech: &Mechanism,
    noise: &MechanismNoise,
) -> f64 {
    let spec = &model.spec;
    let n = x.nrows();
    let f = model.encoder.predict(x).unwrap();
    let (z, vq) = match (spec.mode, mech, noise) {
        (Mode::Continuous, Mechanism::Laplace(m), MechanismNoise::Laplace(eta)) => {
            (f.mapv(|v| m.t() * v.tanh()) + eta, 0.0)
        }
        (Mode::Discrete, Mechanism::Rr(rr), MechanismNoise::Rr { keep, pick }) => {
            let f0 = anchor.encoder.predict(x).unwrap();
            let e0 = anchor.codebook.as_ref().unwrap();
            let e = model.codebook.as_ref().unwrap();
            let dd = spec.code_dim;
            let mut z = Array2::zeros((n, spec.d * dd));
            let (mut cb, mut cm) = (0.0, 0.0);
            for r in 0..n {
                for i in 0..spec.d {
                    let blk0: Vec<f64> = (0..dd).map(|c| f0[(r, i * dd + c)]).collect();
                    let idx = nearest(&blk0, e0);
                    let noisy = if keep[(r, i)] < rr.keep_prob() {
                        idx
                    } else if pick[(r, i)] >= idx {
                        pick[(r, i)] + 1
                    } else {
                        pick[(r, i)]
                    };
                    for c in 0..dd {
                        let col = i * dd + c;
                        z[(r, col)] = e0[(noisy, c)] + f[(r, col)] - f0[(r, col)];
                        cb += (f0[(r, col)] - e[(idx, c)]).powi(2);
                        cm += (f[(r, col)] - e0[(idx, c)]).powi(2);
                    }
                }
            }
            (z, (cb + cfg.vq_lambda * cm) / n as f64)
        }
        _ => panic!("mode and mechanism disagree"),
    };
    let logits = model.utility.predict(z.view()).unwrap();
    let util: f64 = (0..n).map(|r| -log_softmax_row(&logits.row(r).to_vec())[u[r]]).sum::<f64>() / n as f64;
    let onehot = Array2::from_shape_fn((n, spec.card_s), |(r, c)| if s[r] == c { 1.0 } else { 0.0 });
    let side_in = ndarray::concatenate(ndarray::Axis(1), &[z.view(), onehot.view()]).unwrap();
    let out = model.side.predict(side_in.view()).unwrap();
    let layout = &spec.layout;
    let mut recon = 0.0;
    for r in 0..n {
        for c in 0..layout.numeric {
            recon += 0.5 * (out[(r, c)] - x[(r, c)]).powi(2);
        }
        let mut start = layout.numeric;
        for &w in &layout.groups {
            let target = (0..w).max_by(|&a, &b| x[(r, start + a)].total_cmp(&x[(r, start + b)])).unwrap();
            let lp = log_softmax_row(&out.slice(s![r, start..start + w]).to_vec());
            recon -= lp[target];
            start += w;
        }
    }
    recon / n as f64 + cfg.beta * util + vq
}

pub fn flat_params(model: &EncoderModel) -> Vec<f64> {
    model.params().iter().flat_map(|p| p.iter().copied()).collect()
}

pub fn set_params(model: &mut EncoderModel, flat: &[f64]) {
    let mut off = 0;
    for p in model.params_mut() {
        for v in p.iter_mut() {
            *v = flat[off];
            off += 1;
        }
    }
}

/// Mixed numeric / categorical toy batch: 2 numeric columns, one group of 3.
pub fn mixed_batch(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>, Vec<usize>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, 5));
    for r in 0..n {
        x[(r, 0)] = rng.random_range(-1.5..1.5);
        x[(r, 1)] = rng.random_range(-1.5..1.5);
        x[(r, 2 + rng.random_range(0..3))] = 1.0;
    }
    let u = (0..n).map(|_| rng.random_range(0..2)).collect();
    let s = (0..n).map(|_| rng.random_range(0..2)).collect();
    (x, u, s)
}

pub fn small_model(mode: Mode, seed: u64) -> EncoderModel {
    let mut spec = ModelSpec::new(mode, FeatureLayout { numeric: 2, groups: vec![3] });
    spec.hidden = 8;
    spec.code_dim = 3;
    EncoderModel::new(spec, seed).unwrap()
}

/// Relative error of the full loss gradient against central differences of
/// [`oracle_loss`] with one frozen mechanism draw.
pub fn full_loss_gradient_error(mode: Mode, seed: u64) -> f64 {
    use fairldp::encoder::{loss_and_gradients, Batch};
    use rand::SeedableRng;
    let model = small_model(mode, seed);
    let (x, u, s) = mixed_batch(12, seed + 100);
    let cfg = TrainConfig { beta: 1.7, epsilon: 3.0, ..Default::default() };
    let mech = Mechanism::for_model(&model.spec, &cfg).unwrap();
    let noise =
        MechanismNoise::draw(&model.spec, &mech, 12, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let (loss, grads) =
        loss_and_gradients(&model, Batch { x: x.view(), u: &u, s: &s }, &cfg, &mech, std::slice::from_ref(&noise))
            .unwrap();
    let at_anchor = oracle_loss(&model, &model, x.view(), &u, &s, &cfg, &mech, &noise);
    assert!((at_anchor - loss.total).abs() < 1e-9 * loss.total.abs().max(1.0), "{at_anchor} vs {}", loss.total);
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.iter().copied()).collect();
    let mut probe = model.clone();
    let numeric = central_differences(&flat_params(&model), &mut |p| {
        set_params(&mut probe, p);
        oracle_loss(&probe, &model, x.view(), &u, &s, &cfg, &mech, &noise)
    });
    rel_err(&analytic, &numeric)
}

fn grid(r: usize, c: usize, seed: u64, lo: f64, hi: f64) -> Array2<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((r, c), || rng.random_range(lo..hi))
}

/// Values in `[0.1, 2) ∪ (-2, -0.1]`, away from the kinks at 0.
fn off_kink(r: usize, c: usize, seed: u64) -> Array2<f64> {
    grid(r, c, seed, 0.1, 2.0).mapv(|v| v) * grid(r, c, seed + 1, -1.0, 1.0).mapv(f64::signum)
}

pub struct OpCase {
    pub name: &'static str,
    pub inputs: Vec<Array2<f64>>,
    pub build: Box<OpBuilder>,
}

fn case(
    name: &'static str,
    inputs: Vec<Array2<f64>>,
    build: impl Fn(&mut Graph, &[Var]) -> Result<Var> + 'static,
) -> OpCase {
    OpCase { name, inputs, build: Box::new(build) }
}

/// Every differentiable graph op, including the broadcasting forms.
/// `stop_gradient` and `straight_through` have no finite-difference
/// counterpart; the full-loss oracle covers them.
pub fn op_cases() -> Vec<OpCase> {
    vec![
        case("matmul", vec![grid(3, 4, 1, -1.0, 1.0), grid(4, 2, 2, -1.0, 1.0)], |g, v| g.matmul(v[0], v[1])),
        case("add", vec![grid(3, 4, 3, -1.0, 1.0), grid(3, 4, 4, -1.0, 1.0)], |g, v| g.add(v[0], v[1])),
        case("add_row_broadcast", vec![grid(3, 4, 5, -1.0, 1.0), grid(1, 4, 6, -1.0, 1.0)], |g, v| g.add(v[0], v[1])),
        case("sub_col_broadcast", vec![grid(3, 4, 7, -1.0, 1.0), grid(3, 1, 8, -1.0, 1.0)], |g, v| g.sub(v[0], v[1])),
        case("mul_scalar_broadcast", vec![grid(3, 4, 9, -1.0, 1.0), grid(1, 1, 10, -1.0, 1.0)], |g, v| {
            g.mul(v[0], v[1])
        }),
        case("mul", vec![grid(3, 4, 11, -1.0, 1.0), grid(3, 4, 12, -1.0, 1.0)], |g, v| g.mul(v[0], v[1])),
        case("div", vec![grid(3, 4, 13, -1.0, 1.0), grid(3, 4, 14, 0.5, 2.0)], |g, v| g.div(v[0], v[1])),
        case("scale", vec![grid(2, 3, 15, -1.0, 1.0)], |g, v| Ok(g.scale(v[0], -2.5))),
        case("neg", vec![grid(2, 3, 16, -1.0, 1.0)], |g, v| Ok(g.neg(v[0]))),
        case("add_scalar", vec![grid(2, 3, 17, -1.0, 1.0)], |g, v| Ok(g.add_scalar(v[0], 0.3))),
        case("relu", vec![off_kink(3, 4, 18)], |g, v| Ok(g.relu(v[0]))),
        case("relu6", vec![off_kink(3, 4, 20).mapv(|x| x * 4.0)], |g, v| Ok(g.relu6(v[0]))),
        case("tanh", vec![grid(3, 4, 22, -2.0, 2.0)], |g, v| Ok(g.tanh(v[0]))),
        case("sigmoid", vec![grid(3, 4, 23, -3.0, 3.0)], |g, v| Ok(g.sigmoid(v[0]))),
        case("exp", vec![grid(3, 4, 24, -1.0, 1.0)], |g, v| Ok(g.exp(v[0]))),
        case("log", vec![grid(3, 4, 25, 0.2, 3.0)], |g, v| g.log(v[0])),
        case("square", vec![grid(3, 4, 26, -2.0, 2.0)], |g, v| Ok(g.square(v[0]))),
        case("softmax", vec![grid(3, 4, 27, -2.0, 2.0)], |g, v| Ok(g.softmax(v[0]))),
        case("log_softmax", vec![grid(3, 4, 28, -2.0, 2.0)], |g, v| Ok(g.log_softmax(v[0]))),
        case("sum", vec![grid(3, 4, 29, -1.0, 1.0)], |g, v| {
            let t = g.tanh(v[0]);
            Ok(g.sum(t))
        }),
        case("mean", vec![grid(3, 4, 30, -1.0, 1.0)], |g, v| {
            let t = g.square(v[0]);
            Ok(g.mean(t))
        }),
        case("sum_cols", vec![grid(3, 4, 31, -1.0, 1.0)], |g, v| Ok(g.sum_cols(v[0]))),
        case("sum_rows", vec![grid(3, 4, 32, -1.0, 1.0)], |g, v| Ok(g.sum_rows(v[0]))),
        case("log_mean_exp", vec![grid(5, 2, 33, -2.0, 2.0)], |g, v| Ok(g.log_mean_exp(v[0]))),
        case("concat", vec![grid(3, 2, 34, -1.0, 1.0), grid(3, 3, 35, -1.0, 1.0)], |g, v| g.concat(&[v[0], v[1]])),
        case("slice_cols", vec![grid(3, 5, 36, -1.0, 1.0)], |g, v| g.slice_cols(v[0], 1, 3)),
        case("clamp", vec![off_kink(3, 4, 37)], |g, v| Ok(g.clamp(v[0], -1.0, 1.0))),
        case("gather", vec![grid(4, 3, 39, -1.0, 1.0)], |g, v| g.gather(v[0], &[2, 0, 1, 2])),
        case(
            "mlp_chain",
            vec![grid(4, 3, 40, -1.0, 1.0), grid(3, 5, 41, -1.0, 1.0), grid(1, 5, 42, -0.5, 0.5)],
            |g, v| {
                let h = g.matmul(v[0], v[1])?;
                let h = g.add(h, v[2])?;
                let h = g.tanh(h);
                Ok(g.log_softmax(h))
            },
        ),
    ]
}

/// The enumerable toy: `|U| = |S| = |X| = 2`, inputs one-hot in `X`.
pub fn toy_source(seed: u64) -> fairldp::JointSource64 {
    use rand::SeedableRng;
    fairldp::discrete::random_source(2, 2, 2, 1.0, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
}

/// Discrete model with `K = 2`, `d = 1` on the toy alphabets.
pub fn toy_model(seed: u64) -> EncoderModel {
    let mut spec = ModelSpec::new(Mode::Discrete, FeatureLayout { numeric: 0, groups: vec![2] });
    spec.d = 1;
    spec.codebook_size = 2;
    spec.code_dim = 2;
    spec.hidden = 8;
    EncoderModel::new(spec, seed).unwrap()
}

/// `n` draws of the toy source as a one-hot batch.
pub fn toy_batch(src: &fairldp::JointSource64, n: usize, seed: u64) -> (Array2<f64>, Vec<usize>, Vec<usize>) {
    let rows = src.sample(n, seed).unwrap();
    let mut x = Array2::zeros((n, src.card_x()));
    let mut u = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for (r, &(ui, si, xi)) in rows.iter().enumerate() {
        x[(r, xi)] = 1.0;
        u.push(ui);
        s.push(si);
    }
    (x, u, s)
}
