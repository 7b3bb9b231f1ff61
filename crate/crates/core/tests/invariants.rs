use eventsom::report::{spearman, Binning, Scaling};
use eventsom::som::{batch_epoch_with, best_matching_unit, initialize, schedules, SomParams};
use eventsom::synth::{generate_scenario, GroupKind, GroupSpec, ScenarioSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(seed: u64, n: usize, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn tickers(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("T{i}")).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn labels_are_best_matching_units(seed in 0u64..10_000, rows in 2usize..6, cols in 2usize..6) {
        let (n, dim) = (40, 3);
        let data = cloud(seed, n, dim);
        let params = SomParams { rows, cols, iterations: 5, ..SomParams::default() };
        let mut map = initialize(&data, dim, tickers(n), &params).unwrap();
        for t in 0..params.iterations {
            let (lambda, radius) = schedules(t, &params);
            let e = batch_epoch_with(&mut map, &data, lambda, radius);
            prop_assert!(e.is_finite() && e >= 0.0);
        }
        prop_assert_eq!(map.counts().iter().sum::<usize>(), n);
        for (k, x) in data.chunks(dim).enumerate() {
            let (i, j) = best_matching_unit(x, &map).unwrap();
            prop_assert_eq!(map.labels[k], map.cell(i, j));
            let dist = |c: usize| -> f64 {
                map.reference(c).iter().zip(x).map(|(r, v)| (r - v).powi(2)).sum::<f64>().sqrt()
            };
            let d = dist(map.cell(i, j));
            prop_assert!((map.distances[k] - d).abs() <= 1e-9);
            for c in 0..map.n_cells() {
                prop_assert!(d <= dist(c) + 1e-12);
            }
        }
    }

    #[test]
    fn schedules_never_increase(lambda_init in 0.02f64..1.0, xi_start in 1.0f64..10.0, iterations in 1usize..300) {
        let params = SomParams { lambda_init, xi_start, iterations, ..SomParams::default() };
        let mut prev = schedules(0, &params);
        for t in 1..iterations {
            let cur = schedules(t, &params);
            prop_assert!(cur.0 <= prev.0 && cur.1 <= prev.1);
            prop_assert!(cur.0 >= 0.01 && cur.1 >= 1);
            prev = cur;
        }
    }

    #[test]
    fn binning_is_monotone(seed in 0u64..10_000, bins in 2usize..12, linear in any::<bool>()) {
        let values = cloud(seed, 30, 1);
        let scaling = if linear { Scaling::Linear } else { Scaling::Quantile };
        let b = Binning::new(&values, bins, scaling).unwrap();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        for w in sorted.windows(2) {
            prop_assert!(b.bin_of(w[0]) <= b.bin_of(w[1]));
        }
        prop_assert!(sorted.iter().all(|&v| b.bin_of(v) < bins));
    }

    #[test]
    fn spearman_is_rank_invariant(seed in 0u64..10_000) {
        let a = cloud(seed, 25, 1);
        let b = cloud(seed + 1, 25, 1);
        let r = spearman(&a, &b).unwrap();
        let a3: Vec<f64> = a.iter().map(|v| v.powi(3) + 7.0).collect();
        prop_assert!((spearman(&a3, &b).unwrap() - r).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&r));
        prop_assert!((spearman(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn scenario_generation_is_seed_deterministic() {
    let spec = ScenarioSpec {
        n_securities: 40,
        groups: vec![GroupSpec { kind: GroupKind::Rate, fraction: 0.25, magnitude: 0.8, timing: Some(0) }],
        seed: 11,
        ..ScenarioSpec::default()
    };
    let a = generate_scenario(&spec).unwrap();
    let b = generate_scenario(&spec).unwrap();
    assert_eq!(bits(&a.returns), bits(&b.returns));
    assert_eq!(a.truth, b.truth);
    let c = generate_scenario(&ScenarioSpec { seed: 12, ..spec }).unwrap();
    assert_ne!(bits(&a.returns), bits(&c.returns));
}

fn bits(rows: &[Vec<f64>]) -> Vec<Vec<u64>> {
    rows.iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect()
}
