//! Property tests over randomly generated inputs.

use fairldp::discrete::{induced_joint, random_channel, random_source};
use fairldp::encoder::{nearest_code, quantize};
use fairldp::fairness::{delta_dp, delta_eo};
use fairldp::info::{mutual_information, plugin_mi};
use fairldp::ldp::{rr_channel, verify_ldp, LaplaceMechanism, RandomizedResponse};
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Labelled binary vectors in which both `S` groups (and both `U` groups
/// inside each `S` group) are non-empty.
fn labelled(n: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>, Vec<usize>)> {
    (prop::collection::vec(0usize..2, n), prop::collection::vec(0usize..2, n), prop::collection::vec(0usize..2, n))
        .prop_map(move |(p, mut s, mut u)| {
            for (i, (sv, uv)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                s[i] = sv;
                u[i] = uv;
            }
            (p, s, u)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gaps_symmetric_in_the_sensitive_label((p, s, u) in labelled(30)) {
        let flipped: Vec<usize> = s.iter().map(|v| 1 - v).collect();
        prop_assert_eq!(delta_dp(&p, &s).unwrap(), delta_dp(&p, &flipped).unwrap());
        prop_assert_eq!(delta_eo(&p, &s, &u).unwrap(), delta_eo(&p, &flipped, &u).unwrap());
        let dp = delta_dp(&p, &s).unwrap();
        prop_assert!((0.0..=1.0).contains(&dp));
    }

    #[test]
    fn perfect_predictions_have_no_odds_gap((_, s, u) in labelled(30)) {
        prop_assert_eq!(delta_eo(&u, &s, &u).unwrap(), 0.0);
    }

    #[test]
    fn quantize_picks_the_nearest_row(
        f in prop::collection::vec(-2.0f64..2.0, 3),
        rows in prop::collection::vec(-2.0f64..2.0, 12),
    ) {
        let codebook = Array2::from_shape_vec((4, 3), rows).unwrap();
        let dist = |k: usize| (0..3).map(|c| (f[c] - codebook[(k, c)]).powi(2)).sum::<f64>();
        // first index among the minimizers
        let mut best = 0;
        for k in 1..4 {
            if dist(k) < dist(best) {
                best = k;
            }
        }
        let q = quantize(&f, &codebook).unwrap();
        prop_assert_eq!(q.index, best);
        prop_assert_eq!(nearest_code(&f, &codebook), best);
        prop_assert!((q.codebook_loss - dist(best)).abs() < 1e-12);
        prop_assert_eq!(q.embedding.to_vec(), codebook.row(best).to_vec());
    }

    #[test]
    fn laplace_input_is_truncated(eps in 0.1f64..10.0, t in 0.1f64..2.0, seed in any::<u64>()) {
        use fairldp::encoder::{EncoderModel, Mechanism, ModelSpec, Mode, TrainConfig};
        use fairldp::datasets::FeatureLayout;
        let mut spec = ModelSpec::new(Mode::Continuous, FeatureLayout::all_numeric(3));
        spec.hidden = 4;
        let model = EncoderModel::<f64>::new(spec, seed).unwrap();
        let cfg = TrainConfig { epsilon: eps, t, ..Default::default() };
        let mech = Mechanism::for_model(&model.spec, &cfg).unwrap();
        let x = Array2::from_shape_fn((16, 3), |(r, c)| (r as f64 - 8.0) * (c as f64 + 1.0) * 10.0);
        let enc = model.embed_dataset(x.view(), &mech, seed).unwrap();
        prop_assert!(enc.zhat.iter().all(|v| v.abs() <= t));
        let m = LaplaceMechanism::new(eps, t, 2).unwrap();
        prop_assert!((m.scale() - 2.0 * t * 2.0 / eps).abs() < 1e-12);
    }

    #[test]
    fn rr_channel_matches_the_product_form(eps in 0.0f64..6.0, k in 2usize..5, d in 1usize..4) {
        let mech = RandomizedResponse::new(eps, k, d).unwrap();
        let ch = rr_channel::<f64>(&mech).unwrap();
        let w = (eps / d as f64).exp();
        let keep = w / (w + (k - 1) as f64);
        let flip = (1.0 - keep) / (k - 1) as f64;
        let digits = |mut v: usize| {
            let mut out = vec![0; d];
            for slot in out.iter_mut().rev() {
                *slot = v % k;
                v /= k;
            }
            out
        };
        for a in 0..ch.in_card() {
            let mut total = 0.0;
            for b in 0..ch.out_card() {
                let expect: f64 = digits(a).iter().zip(digits(b)).map(|(x, y)| if *x == y { keep } else { flip }).product();
                prop_assert!((ch.prob(a, b) - expect).abs() < 1e-12);
                total += ch.prob(a, b);
            }
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
        prop_assert!(verify_ldp(&ch, eps).pass);
    }

    #[test]
    fn composed_leakage_bounded_by_budget(
        eps in 0.0f64..3.0, nx in 2usize..5, k in 2usize..5, seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = random_source::<f64, _>(2, 2, nx, 1.0, &mut rng);
        let enc = random_channel::<f64, _>(nx, k, 0.5, &mut rng);
        let mech = rr_channel::<f64>(&RandomizedResponse::new(eps, k, 1).unwrap()).unwrap();
        let composed = enc.compose(&mech).unwrap();
        let ixz = mutual_information(induced_joint(&src, &composed).unwrap().joint_xz().view()).unwrap().get();
        prop_assert!(ixz <= eps + 1e-9, "I(X;Z) = {} > {}", ixz, eps);
        prop_assert!(verify_ldp(&composed, eps).max_log_ratio <= eps + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn plugin_estimate_converges(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let joint = random_channel::<f64, _>(1, 6, 1.0, &mut rng).rows().clone().into_shape_with_order((2, 3)).unwrap();
        let exact = mutual_information(joint.view()).unwrap().get();
        let cells: Vec<f64> = joint.iter().copied().collect();
        let pairs: Vec<(usize, usize)> = (0..100_000)
            .map(|_| {
                let mut r: f64 = rand::Rng::random(&mut rng);
                let mut c = 0;
                while c < 5 && r >= cells[c] {
                    r -= cells[c];
                    c += 1;
                }
                (c / 3, c % 3)
            })
            .collect();
        let est = plugin_mi(&pairs, 2, 3, 0.0).unwrap().get();
        prop_assert!((est - exact).abs() < 0.02, "{} vs {}", est, exact);
    }
}
