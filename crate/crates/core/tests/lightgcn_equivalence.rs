use clustergcf::cluster::NoiseMode;
use clustergcf::dense::DenseMatrix;
use clustergcf::propagation::{self, PropagationConfig};
use clustergcf::reference::{self, NodeGraph, SmallCase};
use clustergcf::training::{self, L2Penalty};
use clustergcf::{seed, BprTriplet};

/// Loss and gradient of the BPR objective with respect to the final
/// embeddings, written out directly.
fn bpr_with_grad(fin: &DenseMatrix, n_users: usize, batch: &[BprTriplet]) -> (f64, DenseMatrix) {
    let mut grad = DenseMatrix::zeros(fin.n_rows(), fin.n_cols());
    let mut loss = 0.0;
    let b = batch.len() as f64;
    for t in batch {
        let (u, p, n) = (t.user as usize, n_users + t.pos_item as usize, n_users + t.neg_item as usize);
        let m: f64 = (0..fin.n_cols()).map(|j| fin.get(u, j) * (fin.get(p, j) - fin.get(n, j))).sum();
        loss += (1.0 + (-m).exp()).ln() / b;
        let g = -1.0 / (1.0 + m.exp()) / b;
        for j in 0..fin.n_cols() {
            let (eu, ep, en) = (fin.get(u, j), fin.get(p, j), fin.get(n, j));
            grad.set(u, j, grad.get(u, j) + g * (ep - en));
            grad.set(p, j, grad.get(p, j) + g * eu);
            grad.set(n, j, grad.get(n, j) - g * eu);
        }
    }
    (loss, grad)
}

#[test]
fn one_cluster_reduces_to_lightgcn() {
    for layers in 1..=6 {
        for s in 1..=3 {
            let mut rng = seed::rng_for(layers as u64, "lightgcn", &[s as u64]);
            let prop = PropagationConfig::new(layers, 1, s).unwrap();
            let case = SmallCase::random(9, 8, 4, prop, 0.3, 16, &mut rng).unwrap();
            let n_users = case.graph.n_users();
            let g = NodeGraph::new(n_users, 8, &case.edges);

            let trace = propagation::forward(&case.graph, &case.params, &prop, &mut rng, NoiseMode::Train).unwrap();
            let oracle = reference::lightgcn_layers(&g, &case.params.e0, layers);
            for (k, (got, want)) in trace.layers.iter().zip(&oracle).enumerate() {
                assert!(got.max_abs_diff(want) <= 1e-12, "K={layers} s={s} layer {k}");
            }
            let oracle_final = reference::mean_layers(&oracle);
            assert!(trace.final_emb.max_abs_diff(&oracle_final) <= 1e-12);

            let lambda = 1e-3;
            let penalty = L2Penalty { lambda, include_cluster_weights: false };
            let loss = training::bpr_loss(&trace, &case.batch, &penalty, &case.params, n_users).unwrap();
            let grads = training::backward(&trace, &case.batch, &prop, &case.graph, &case.params, &penalty).unwrap();

            let (ref_bpr, d_final) = bpr_with_grad(&oracle_final, n_users, &case.batch);
            let mut ref_grad = reference::lightgcn_e0_grad(&g, &d_final, layers);
            let mut touched: Vec<usize> = case
                .batch
                .iter()
                .flat_map(|t| [t.user as usize, n_users + t.pos_item as usize, n_users + t.neg_item as usize])
                .collect();
            touched.sort_unstable();
            touched.dedup();
            let mut sq = 0.0;
            for &r in &touched {
                for j in 0..4 {
                    let x = case.params.e0.get(r, j);
                    sq += x * x;
                    ref_grad.set(r, j, ref_grad.get(r, j) + 2.0 * lambda * x);
                }
            }
            assert!((loss.total() - (ref_bpr + lambda * sq)).abs() <= 1e-10);
            assert!(grads.e0.max_abs_diff(&ref_grad) <= 1e-10, "K={layers} s={s}");
            assert!(grads.cluster.w1.as_slice().iter().all(|&v| v == 0.0));
            assert!(grads.cluster.w2.as_slice().iter().all(|&v| v == 0.0));
        }
    }
}
