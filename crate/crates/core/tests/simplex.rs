use clustergcf::cluster::{self, ClusterNetParams, NoiseMode};
use clustergcf::dense::DenseMatrix;
use clustergcf::seed;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gumbel_softmax_rows_are_strictly_inside_the_simplex(
        seed_value in any::<u64>(),
        log_tau in -2.0f64..=2.0,
        c in 1usize..=4,
        scale in prop_oneof![Just(0.1), Just(1.0), Just(30.0)],
    ) {
        let tau = 10f64.powf(log_tau);
        let mut rng = seed::rng_for(seed_value, "simplex", &[]);
        let (n, d) = (8, 3);
        let mut p = ClusterNetParams::zeros(d, c, tau);
        p.w1 = DenseMatrix::from_fn(d, d, |_, _| rng.gen_range(-scale..scale));
        p.w2 = DenseMatrix::from_fn(d, c, |_, _| rng.gen_range(-scale..scale));
        let e0 = DenseMatrix::from_fn(n, d, |_, _| rng.gen_range(-scale..scale));
        let e1 = DenseMatrix::from_fn(n, d, |_, _| rng.gen_range(-scale..scale));
        for mode in [NoiseMode::Train, NoiseMode::Eval] {
            let (a, _) = cluster::assign_clusters(&e0, &e1, &p, &mut rng, mode).unwrap();
            for r in 0..n {
                let row = a.probs.row(r);
                let sum: f64 = row.iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-6, "row sum {}", sum);
                if c == 1 {
                    prop_assert_eq!(row[0], 1.0);
                } else {
                    prop_assert!(row.iter().all(|&x| x > 0.0 && x < 1.0), "{:?}", row);
                }
            }
        }
    }
}
