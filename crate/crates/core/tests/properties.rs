use std::sync::Arc;

use bgan::config::{Experiment, ExperimentConfig};
use bgan::datagen::{self, Dataset, IdxArray};
use bgan::eval;
use bgan::netcore::{self, init_params, Batch, Init, NetworkSpec, OutputHead};
use bgan::posterior::{self, PriorSpec};
use bgan::predict::{argmax, Predictor};
use bgan::sghmc::{self, lr_schedule, ChainState, SghmcConfig};
use proptest::prelude::*;

fn points(rows: usize) -> impl Strategy<Value = Batch> {
    prop::collection::vec(-50.0f64..50.0, rows * 2).prop_map(move |v| Batch::new(rows, 2, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forward_is_row_independent(seed in any::<u64>(), rows in 1usize..6) {
        let spec = Arc::new(NetworkSpec::relu(&[3, 5, 2], OutputHead::Softmax).unwrap());
        let p = init_params(spec, Init::Prior { sigma: 0.8 }, seed).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let x = Batch::standard_normal(rows, 3, &mut rng);
        let all = netcore::forward(&p, &x).unwrap();
        for i in 0..rows {
            let one = netcore::forward(&p, &x.select_rows(&[i])).unwrap();
            for (a, b) in one.row(0).iter().zip(all.row(i)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let s: f64 = all.row(i).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn prior_gradient_is_scaled_negation(seed in any::<u64>(), sigma in 0.1f64..10.0) {
        let spec = Arc::new(NetworkSpec::relu(&[2, 3, 1], OutputHead::Sigmoid).unwrap());
        let p = init_params(spec, Init::Prior { sigma: 1.0 }, seed).unwrap();
        let g = posterior::log_prior_grad(&p, sigma);
        for (gi, ti) in g.values().iter().zip(p.values()) {
            prop_assert_eq!(*gi, -ti / (sigma * sigma));
        }
        prop_assert!(PriorSpec::isotropic(sigma).is_ok());
    }

    #[test]
    fn schedule_is_monotone_and_bounded(gamma in 1e-6f64..10.0, n in 1u64..100_000, d in 0u64..200_000) {
        let eta = lr_schedule(gamma, d, n);
        prop_assert!(eta >= gamma / n as f64 * (1.0 - 1e-15));
        prop_assert!(eta <= gamma);
        prop_assert!(lr_schedule(gamma, d + 1, n) <= eta);
    }

    #[test]
    fn unit_friction_is_gradient_ascent(
        start in prop::collection::vec(-5.0f64..5.0, 1..6),
        eta in 1e-4f64..0.5,
        steps in 1usize..30,
    ) {
        let cfg = SghmcConfig { alpha: 1.0, noise_enabled: false, burn_in_iters: 0, ..SghmcConfig::default() };
        let mut theta = start.clone();
        let mut reference = start;
        let mut st = ChainState::new(theta.len(), &cfg, 0);
        for _ in 0..steps {
            let g: Vec<f64> = theta.iter().map(|t| -t.sin()).collect();
            sghmc::sghmc_step(&mut theta, &mut st, &g, &cfg, eta).unwrap();
            for r in reference.iter_mut() {
                *r += eta * -r.sin();
            }
            prop_assert_eq!(&theta, &reference);
        }
    }

    #[test]
    fn jsd_is_symmetric_and_bounded(a in points(30), b in points(40)) {
        let ab = eval::jsd(&a, &b).unwrap();
        let ba = eval::jsd(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=std::f64::consts::LN_2).contains(&ab));
        prop_assert_eq!(eval::jsd(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn pca_components_are_orthonormal(seed in any::<u64>()) {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let x = Batch::standard_normal(40, 5, &mut rng);
        let p = eval::pca_fit(&x).unwrap();
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        prop_assert!((dot(&p.components[0], &p.components[0]) - 1.0).abs() < 1e-10);
        prop_assert!((dot(&p.components[1], &p.components[1]) - 1.0).abs() < 1e-10);
        prop_assert!(dot(&p.components[0], &p.components[1]).abs() < 1e-10);
        prop_assert!(p.explained_variance_ratio[0] >= p.explained_variance_ratio[1]);
        let y = eval::pca_apply(&p, &x).unwrap();
        prop_assert_eq!((y.rows(), y.cols()), (40, 2));
    }

    #[test]
    fn cluster_labels_are_consistent(pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 4..30), seed in any::<u64>()) {
        let pts: Vec<[f64; 2]> = pts.into_iter().map(|(a, b)| [a, b]).collect();
        let fit = eval::cluster_count(&pts, seed);
        prop_assert_eq!(fit.labels.len(), pts.len());
        prop_assert!(fit.k_best >= 1 && fit.k_best <= 6);
        prop_assert!(fit.labels.iter().all(|&l| l < fit.k_best));
        prop_assert!((-1.0..=1.0).contains(&fit.silhouette));
    }

    #[test]
    fn split_partitions_and_balances(per_class in prop::collection::vec(1usize..20, 2..5), extra in 0usize..10, seed in any::<u64>()) {
        let k = per_class.len();
        let mut labels = Vec::new();
        for (c, &n) in per_class.iter().enumerate() {
            labels.extend(std::iter::repeat_n(c + 1, n));
        }
        let n = labels.len();
        let n_labeled = (k + extra).min(n);
        let ds = Dataset {
            x: Batch::new(n, 1, (0..n).map(|i| i as f64).collect()).unwrap(),
            labels: Some(labels.clone()),
            image_dims: None,
        };
        let split = datagen::make_split(&ds, n_labeled, seed).unwrap();
        let mut all: Vec<usize> = split.labeled_indices.iter().chain(&split.unlabeled_indices).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(split.labeled.len(), n_labeled);
        // balanced within one, except where a class ran out
        let counts: Vec<usize> = (1..=k).map(|c| split.labeled.y.iter().filter(|&&y| y == c).count()).collect();
        let hi = *counts.iter().max().unwrap();
        for (c, &cnt) in counts.iter().enumerate() {
            prop_assert!(cnt <= per_class[c]);
            if cnt < per_class[c] {
                prop_assert!(cnt + 1 >= hi);
            }
        }
    }

    #[test]
    fn idx_round_trip(rows in 1usize..5, cols in 1usize..5, n in 1usize..6, seed in any::<u64>()) {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let data: Vec<u8> = (0..n * rows * cols).map(|_| rand::Rng::random::<u8>(&mut rng)).collect();
        let a = IdxArray { dims: vec![n, rows, cols], data };
        let bytes = datagen::encode_idx(&a);
        prop_assert_eq!(datagen::parse_idx(&bytes, 0x0803).unwrap(), a);
        prop_assert!(datagen::parse_idx(&bytes[..bytes.len() - 1], 0x0803).is_err());
    }

    #[test]
    fn bma_of_copies_equals_single(seed in any::<u64>(), copies in 1usize..5) {
        let spec = Arc::new(NetworkSpec::relu(&[3, 4, 4], OutputHead::Softmax).unwrap());
        let p = init_params(spec, Init::Prior { sigma: 1.0 }, seed).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed ^ 1);
        let x = Batch::standard_normal(7, 3, &mut rng);
        let single = Predictor::new(vec![p.clone()]).unwrap().predict_bma(&x).unwrap();
        let many = Predictor::new(vec![p; copies]).unwrap().predict_bma(&x).unwrap();
        for (a, b) in single.as_slice().iter().zip(many.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_takes_first_maximum(v in prop::collection::vec(0u8..4, 1..10)) {
        let row: Vec<f64> = v.iter().map(|&x| x as f64).collect();
        let i = argmax(&row);
        let max = row.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert_eq!(row[i], max);
        prop_assert!(row[..i].iter().all(|&x| x < max));
    }

    #[test]
    fn config_text_round_trips(seed in any::<u64>(), alpha in 0.001f64..1.0, hidden in prop::collection::vec(1usize..2000, 1..3)) {
        let mut c = ExperimentConfig::defaults(Experiment::SynthSemi);
        c.seed = seed;
        c.alpha = alpha;
        c.net.gen_hidden = hidden;
        prop_assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }
}
