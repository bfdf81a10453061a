mod common;

use lorafl::fl::{self, Mlp, SyntheticConfig, TrainConfig};
use lorafl::rng::{self, Stream};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn fedavg_matches_brute_force_mean() {
    let mut r = rng::stream(11, Stream::MonteCarlo, &[]);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let clients = r.random_range(1..=12);
        let len = r.random_range(1..=200);
        let updates: Vec<(Vec<f64>, usize)> = (0..clients)
            .map(|_| ((0..len).map(|_| r.random_range(-5.0..5.0)).collect(), r.random_range(1..=500)))
            .collect();
        let refs: Vec<(&[f64], usize)> = updates.iter().map(|(v, n)| (v.as_slice(), *n)).collect();
        let got = fl::fedavg(&refs).unwrap();
        worst = worst.max(common::fedavg_error(&updates, &got));
    }
    assert!(worst <= 1e-12, "worst relative error {worst:e}");
}

#[test]
fn gradients_match_central_differences() {
    let mut r = rng::stream(12, Stream::MonteCarlo, &[]);
    for batch in 0..10 {
        let dims = vec![r.random_range(2..=8), r.random_range(2..=10), r.random_range(2..=6), r.random_range(2..=5)];
        let model = Mlp::new(dims.clone()).unwrap();
        let params: Vec<f64> = model.init(&mut r).iter().map(|&w| w as f64 + r.random_range(-0.05..0.05)).collect();
        let n = r.random_range(1..=16);
        let xs: Vec<f64> = (0..n * dims[0]).map(|_| r.random_range(-2.0..2.0)).collect();
        let ys: Vec<usize> = (0..n).map(|_| r.random_range(0..model.classes())).collect();
        let (_, grad) = model.loss_and_grad(&params, &xs, &ys);
        let fd = common::numeric_gradient(&model, &params, &xs, &ys, 1e-6);
        let err = common::gradient_error(&grad, &fd);
        assert!(err <= 1e-4, "batch {batch} dims {dims:?}: relative error {err:e}");
    }
}

proptest! {
    #[test]
    fn fedavg_stays_inside_the_envelope(
        updates in prop::collection::vec((prop::collection::vec(-100.0f64..100.0, 5), 1usize..1000), 1..10)
    ) {
        let refs: Vec<(&[f64], usize)> = updates.iter().map(|(v, n)| (v.as_slice(), *n)).collect();
        let avg = fl::fedavg(&refs).unwrap();
        for j in 0..5 {
            let lo = updates.iter().map(|(v, _)| v[j]).fold(f64::INFINITY, f64::min);
            let hi = updates.iter().map(|(v, _)| v[j]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(avg[j] >= lo - 1e-9 && avg[j] <= hi + 1e-9);
        }
    }

    #[test]
    fn fedavg_of_one_update_is_identity(v in prop::collection::vec(-1e3f32..1e3, 1..50), n in 1usize..100) {
        prop_assert_eq!(fl::fedavg(&[(v.as_slice(), n)]).unwrap(), v);
    }

    #[test]
    fn sampling_draws_distinct_clients(n in 1usize..40, m in 1usize..10, seed in any::<u64>()) {
        let mut r = rng::stream(seed, Stream::Sampling, &[1]);
        match fl::sample_clients(n, m, 8, &mut r) {
            Ok(s) => {
                prop_assert!(m <= n && m <= 8);
                prop_assert_eq!(s.len(), m);
                let mut sorted = s.clone();
                sorted.sort();
                sorted.dedup();
                prop_assert_eq!(sorted.len(), m);
                prop_assert!(s.iter().all(|&i| i < n));
            }
            Err(_) => prop_assert!(m > n || m > 8),
        }
    }

    #[test]
    fn partition_is_balanced(samples in 20usize..2000, clients in 1usize..20, seed in any::<u64>()) {
        let shards = fl::partition(samples, clients, &mut rng::stream(seed, Stream::Partition, &[])).unwrap();
        prop_assert_eq!(shards.len(), clients);
        let mut all: Vec<usize> = shards.iter().flatten().copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..samples).collect::<Vec<_>>());
        let sizes: Vec<usize> = shards.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}

#[test]
fn local_training_lowers_the_loss_and_is_seeded() {
    let data = SyntheticConfig { train_samples: 400, test_samples: 100, ..Default::default() };
    let (train, _) = data.generate(&mut rng::stream(5, Stream::Dataset, &[]));
    let cfg = TrainConfig::default();
    let model = cfg.model(train.dim, train.classes).unwrap();
    let init = fl::init_global(&model, 5);
    let idx: Vec<usize> = (0..400).collect();
    let run = |seed| fl::local_train(&model, &init, &train, &idx, &cfg, &mut rng::stream(seed, Stream::Training, &[1, 0])).unwrap();
    let a = run(1);
    assert_eq!(a, run(1));
    assert_ne!(a, run(2));
    let (_, before) = fl::evaluate(&model, &init, &train).unwrap();
    let (_, after) = fl::evaluate(&model, &a, &train).unwrap();
    assert!(after < before, "{after} >= {before}");
}
