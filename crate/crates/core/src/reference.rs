//! Slow, direct implementations used to cross-check the optimized kernels.
//!
//! Everything here works node by node on adjacency lists and plain nested
//! vectors; none of it goes through the sparse or dense matrix kernels.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::cluster::{self, ClusterNetParams};
use crate::dataset::BprTriplet;
use crate::dense::DenseMatrix;
use crate::error::Result;
use crate::graph::BipartiteGraph;
use crate::propagation::{self, PropagationConfig};
use crate::training::{self, L2Penalty, ModelParams};

/// Adjacency lists over global node ids (users first, then items).
#[derive(Debug, Clone)]
pub struct NodeGraph {
    pub n_users: usize,
    pub neighbors: Vec<Vec<usize>>,
}

impl NodeGraph {
    pub fn new(n_users: usize, n_items: usize, edges: &[(u32, u32)]) -> Self {
        let mut neighbors = vec![Vec::new(); n_users + n_items];
        for &(u, i) in edges {
            let (u, i) = (u as usize, n_users + i as usize);
            neighbors[u].push(i);
            neighbors[i].push(u);
        }
        NodeGraph { n_users, neighbors }
    }

    pub fn n_nodes(&self) -> usize {
        self.neighbors.len()
    }

    fn weight(&self, a: usize, b: usize) -> f64 {
        1.0 / ((self.neighbors[a].len() * self.neighbors[b].len()) as f64).sqrt()
    }

    /// `out[v] = sum over w in N(v) of scale(w) * x[w] / sqrt(|N(v)| |N(w)|)`.
    fn aggregate(&self, x: &[Vec<f64>], scale: impl Fn(usize) -> f64) -> Vec<Vec<f64>> {
        (0..self.n_nodes())
            .map(|v| {
                let mut acc = vec![0.0; x[v].len()];
                for &w in &self.neighbors[v] {
                    let c = scale(w) * self.weight(v, w);
                    for (a, xw) in acc.iter_mut().zip(&x[w]) {
                        *a += c * xw;
                    }
                }
                acc
            })
            .collect()
    }
}

fn to_rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.n_rows()).map(|r| m.row(r).to_vec()).collect()
}

fn to_matrix(rows: &[Vec<f64>], d: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows.len(), d, |r, c| rows[r][c])
}

/// Layers `E^(0..=K)` by per-node sums. Below `start_layer` (or when
/// `probs` is `None`) every neighbor contributes fully; from `start_layer`
/// on, each cluster keeps its own embedding per node, neighbor messages are
/// weighted by the neighbor's membership in that cluster, and a layer is the
/// sum over clusters.
pub fn node_form_layers(
    g: &NodeGraph,
    e0: &DenseMatrix,
    layers: usize,
    start_layer: usize,
    probs: Option<&DenseMatrix>,
) -> Vec<DenseMatrix> {
    let d = e0.n_cols();
    let mut out = vec![to_rows(e0)];
    let clustered_from = if probs.is_some() { start_layer } else { usize::MAX };
    let mut chains: Vec<Vec<Vec<f64>>> = Vec::new();
    for k in 1..=layers {
        if k < clustered_from {
            let next = g.aggregate(&out[k - 1], |_| 1.0);
            out.push(next);
            continue;
        }
        let p = probs.expect("clustered layers need probabilities");
        if k == clustered_from {
            chains = vec![out[k - 1].clone(); p.n_cols()];
        }
        for (c, chain) in chains.iter_mut().enumerate() {
            *chain = g.aggregate(chain, |w| p.get(w, c));
        }
        let layer: Vec<Vec<f64>> = (0..g.n_nodes())
            .map(|v| {
                (0..d)
                    .map(|j| chains.iter().map(|chain| chain[v][j]).sum())
                    .collect()
            })
            .collect();
        out.push(layer);
    }
    out.iter().map(|rows| to_matrix(rows, d)).collect()
}

/// Plain LightGCN layers: repeated full-graph aggregation.
pub fn lightgcn_layers(g: &NodeGraph, e0: &DenseMatrix, layers: usize) -> Vec<DenseMatrix> {
    node_form_layers(g, e0, layers, usize::MAX, None)
}

/// Element-wise mean of the layers.
pub fn mean_layers(layers: &[DenseMatrix]) -> DenseMatrix {
    let (n, d) = layers[0].shape();
    let w = 1.0 / layers.len() as f64;
    DenseMatrix::from_fn(n, d, |r, c| layers.iter().map(|l| w * l.get(r, c)).sum())
}

/// Gradient of a LightGCN objective with respect to `E^(0)`, given the
/// gradient with respect to the mean-of-layers output. The normalized
/// adjacency is symmetric, so the adjoint of one layer is one aggregation.
pub fn lightgcn_e0_grad(g: &NodeGraph, d_final: &DenseMatrix, layers: usize) -> DenseMatrix {
    let d = d_final.n_cols();
    let w = 1.0 / (layers + 1) as f64;
    let mut power = to_rows(d_final);
    let mut acc: Vec<Vec<f64>> = power.iter().map(|r| r.iter().map(|v| w * v).collect()).collect();
    for _ in 0..layers {
        power = g.aggregate(&power, |_| 1.0);
        for (a, p) in acc.iter_mut().zip(&power) {
            for (x, y) in a.iter_mut().zip(p) {
                *x += w * y;
            }
        }
    }
    to_matrix(&acc, d)
}

/// Every candidate item (not in `excluded`) in rank order: higher score
/// first, lower id first among equal scores.
pub fn full_ranking(scores: &[f64], excluded: &[u32]) -> Vec<u32> {
    let mut items: Vec<u32> = (0..scores.len() as u32)
        .filter(|i| !excluded.contains(i))
        .collect();
    items.sort_by(|&a, &b| match scores[b as usize].partial_cmp(&scores[a as usize]) {
        Some(Ordering::Equal) | None => a.cmp(&b),
        Some(o) => o,
    });
    items
}

/// `(recall, hit, ndcg)` at `k` for one user.
pub fn naive_metrics(scores: &[f64], excluded: &[u32], targets: &[u32], k: usize) -> (f64, f64, f64) {
    let ranked = full_ranking(scores, excluded);
    let top = &ranked[..k.min(ranked.len())];
    let mut hits = 0;
    let mut dcg = 0.0;
    for (pos, item) in top.iter().enumerate() {
        if targets.contains(item) {
            hits += 1;
            dcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let mut idcg = 0.0;
    for pos in 0..targets.len().min(k) {
        idcg += 1.0 / ((pos + 2) as f64).log2();
    }
    let hit = if hits > 0 { 1.0 } else { 0.0 };
    (hits as f64 / targets.len() as f64, hit, dcg / idcg)
}

/// Central differences `(f(x + h e_j) - f(x - h e_j)) / 2h` for every `j`.
pub fn central_differences(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|j| {
            probe[j] = x[j] + h;
            let up = f(&probe);
            probe[j] = x[j] - h;
            let down = f(&probe);
            probe[j] = x[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest violation of `|a - n| <= max(abs_floor, rel * max(|a|, |n|))`,
/// reported as `(index, analytic, numeric)`.
pub fn worst_mismatch(analytic: &[f64], numeric: &[f64], rel: f64, abs_floor: f64) -> Option<(usize, f64, f64)> {
    analytic
        .iter()
        .zip(numeric)
        .enumerate()
        .filter(|(_, (a, n))| {
            let diff = (*a - *n).abs();
            diff > abs_floor && diff > rel * a.abs().max(n.abs())
        })
        .max_by(|x, y| {
            let dx = (x.1 .0 - x.1 .1).abs();
            let dy = (y.1 .0 - y.1 .1).abs();
            dx.total_cmp(&dy)
        })
        .map(|(j, (a, n))| (j, *a, *n))
}

/// Random bipartite edge list in which every user and item has at least one
/// edge and no pair repeats.
pub fn random_edges<R: Rng + ?Sized>(n_users: usize, n_items: usize, rng: &mut R) -> Vec<(u32, u32)> {
    let mut adj = vec![vec![false; n_items]; n_users];
    let mut items: Vec<usize> = (0..n_items).collect();
    items.shuffle(rng);
    for (pos, &i) in items.iter().enumerate() {
        adj[pos % n_users][i] = true;
    }
    for row in adj.iter_mut() {
        if !row.iter().any(|&x| x) {
            row[rng.gen_range(0..n_items)] = true;
        }
        for cell in row.iter_mut() {
            if rng.gen_bool(0.25) {
                *cell = true;
            }
        }
    }
    let mut edges = Vec::new();
    for (u, row) in adj.iter().enumerate() {
        for (i, &x) in row.iter().enumerate() {
            if x {
                edges.push((u as u32, i as u32));
            }
        }
    }
    edges
}

/// A small model instance with frozen Gumbel noise, for gradient checks.
#[derive(Debug, Clone)]
pub struct SmallCase {
    pub edges: Vec<(u32, u32)>,
    pub graph: BipartiteGraph,
    pub prop: PropagationConfig,
    pub params: ModelParams,
    pub noise: DenseMatrix,
    pub batch: Vec<BprTriplet>,
}

impl SmallCase {
    /// Parameters uniform in [-0.5, 0.5]; `batch_size` triplets with a
    /// training positive and a non-neighbor negative. The batch is empty when
    /// every user is linked to every item.
    pub fn random<R: Rng + ?Sized>(
        n_users: usize,
        n_items: usize,
        dim: usize,
        prop: PropagationConfig,
        tau: f64,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let edges = random_edges(n_users, n_items, rng);
        let graph = BipartiteGraph::from_edges(n_users, n_items, &edges)?;
        let n = n_users + n_items;
        let c = prop.n_clusters;
        let mut uniform = |rows: usize, cols: usize| DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-0.5..0.5));
        let e0 = uniform(n, dim);
        let w1 = uniform(dim, dim);
        let w2 = uniform(dim, c);
        let b1 = uniform(1, dim).as_slice().to_vec();
        let b2 = uniform(1, c).as_slice().to_vec();
        let params = ModelParams {
            e0,
            cluster: ClusterNetParams {
                w1,
                b1,
                w2,
                b2,
                leaky_slope: cluster::DEFAULT_LEAKY_SLOPE,
                tau,
            },
        };
        let noise = cluster::sample_gumbel(n, c, rng);
        let open: Vec<(u32, u32)> = edges
            .iter()
            .copied()
            .filter(|&(u, _)| edges.iter().filter(|e| e.0 == u).count() < n_items)
            .collect();
        let mut batch = Vec::with_capacity(batch_size);
        while batch.len() < batch_size && !open.is_empty() {
            let &(user, pos_item) = open.choose(rng).expect("nonempty");
            let neg_item = rng.gen_range(0..n_items as u32);
            if !edges.contains(&(user, neg_item)) {
                batch.push(BprTriplet { user, pos_item, neg_item });
            }
        }
        Ok(SmallCase {
            edges,
            graph,
            prop,
            params,
            noise,
            batch,
        })
    }

    pub fn loss_at(&self, flat: &[f64], penalty: &L2Penalty) -> Result<f64> {
        let mut p = self.params.clone();
        p.set_flat(flat);
        let trace = propagation::forward_with_noise(&self.graph, &p, &self.prop, Some(&self.noise))?;
        Ok(training::bpr_loss(&trace, &self.batch, penalty, &p, self.graph.n_users())?.total())
    }

    /// `(analytic, numeric)` gradients over the flat parameter vector.
    pub fn gradients(&self, penalty: &L2Penalty, h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let trace = propagation::forward_with_noise(&self.graph, &self.params, &self.prop, Some(&self.noise))?;
        let analytic = training::backward(&trace, &self.batch, &self.prop, &self.graph, &self.params, penalty)?.to_flat();
        let numeric = central_differences(
            |x| self.loss_at(x, penalty).expect("finite loss"),
            &self.params.to_flat(),
            h,
        );
        Ok((analytic, numeric))
    }
}
