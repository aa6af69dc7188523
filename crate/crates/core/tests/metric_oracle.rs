use clustergcf::evaluation::evaluate_scores;
use clustergcf::reference::naive_metrics;
use clustergcf::seed;
use rand::seq::index::sample;
use rand::Rng;

#[test]
fn fast_metrics_equal_naive_ranking_bit_for_bit() {
    for trial in 0..200u64 {
        let mut rng = seed::rng_for(trial, "metrics", &[]);
        let n_users = rng.gen_range(1..=50);
        let n_items = rng.gen_range(2..=60);
        // A coarse score grid makes ties common.
        let levels = rng.gen_range(2..8);
        let scores: Vec<Vec<f64>> = (0..n_users)
            .map(|_| (0..n_items).map(|_| rng.gen_range(0..levels) as f64 * 0.37).collect())
            .collect();
        let mut excluded = Vec::new();
        let mut targets = Vec::new();
        for _ in 0..n_users {
            let amount = rng.gen_range(0..n_items);
            let mut picked: Vec<u32> = sample(&mut rng, n_items, amount).into_iter().map(|i| i as u32).collect();
            let n_ex = rng.gen_range(0..=picked.len());
            let mut t = picked.split_off(n_ex);
            picked.sort_unstable();
            t.sort_unstable();
            excluded.push(picked);
            targets.push(t);
        }
        if targets.iter().all(Vec::is_empty) {
            continue;
        }
        for k in [1, 5, 20] {
            let fast = evaluate_scores(n_users, |u| Ok(scores[u as usize].clone()), &excluded, &targets, k).unwrap();
            let (mut r, mut h, mut n, mut count) = (0.0, 0.0, 0.0, 0);
            for u in 0..n_users {
                if targets[u].is_empty() {
                    continue;
                }
                let (ru, hu, nu) = naive_metrics(&scores[u], &excluded[u], &targets[u], k);
                r += ru;
                h += hu;
                n += nu;
                count += 1;
            }
            let c = count as f64;
            assert_eq!(fast.n_users_evaluated, count);
            assert_eq!(fast.recall, r / c, "trial {trial} k {k}");
            assert_eq!(fast.hr, h / c, "trial {trial} k {k}");
            assert_eq!(fast.ndcg, n / c, "trial {trial} k {k}");
        }
    }
}
