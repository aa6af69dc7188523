//! Forward model.
//!
//! Layers below the start layer `s` are plain convolutions on the full graph
//! (`E^(k) = L E^(k-1)`). From layer `s` on, every cluster `c` runs its own
//! chain `E_c^(k) = L (P_c ⊙ E_c^(k-1))`, seeded with the shared `E^(s-1)`,
//! and the layer embedding is the sum of the chains. The final embedding is
//! the uniform average of all `K + 1` layer embeddings and scores are dot
//! products.
//!
//! With a single cluster every probability is exactly one and the model is
//! LightGCN.

use rand::Rng;
use rayon::prelude::*;

use crate::cluster::{self, ClusterAssignment, ClusterTrace, NoiseMode};
use crate::dense::{dot, DenseMatrix};
use crate::error::{invalid_arg, Error, Result};
use crate::graph::BipartiteGraph;
use crate::sparse::{row_scale, spmm, CsrMatrix};
use crate::training::ModelParams;

pub const MAX_LAYERS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PropagationConfig {
    /// Total number of convolution layers `K`.
    pub layers: usize,
    pub n_clusters: usize,
    /// First layer that runs on the cluster-specific graphs: 1 (`_F`
    /// variant), 2 (default) or 3 (`_T` variant).
    pub start_layer: usize,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            layers: 6,
            n_clusters: 2,
            start_layer: 2,
        }
    }
}

impl PropagationConfig {
    pub fn new(layers: usize, n_clusters: usize, start_layer: usize) -> Result<Self> {
        let cfg = PropagationConfig {
            layers,
            n_clusters,
            start_layer,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `K = 0` is accepted and means plain matrix factorization.
    pub fn validate(&self) -> Result<()> {
        if self.layers > MAX_LAYERS {
            return Err(invalid_arg!("layers must be at most {MAX_LAYERS}, got {}", self.layers));
        }
        if self.n_clusters == 0 {
            return Err(invalid_arg!("need at least one cluster"));
        }
        if !(1..=3).contains(&self.start_layer) {
            return Err(invalid_arg!("start layer must be 1, 2 or 3, got {}", self.start_layer));
        }
        Ok(())
    }

    /// Layer weight `1 / (K + 1)`.
    pub fn alpha(&self) -> f64 {
        1.0 / (self.layers as f64 + 1.0)
    }

    /// Whether any layer runs on the cluster-specific graphs.
    pub fn uses_clusters(&self) -> bool {
        self.layers >= self.start_layer
    }

    pub fn variant_name(&self) -> &'static str {
        if self.n_clusters == 1 {
            return "lightgcn-equivalent";
        }
        match self.start_layer {
            1 => "clustergcf-f",
            2 => "clustergcf",
            _ => "clustergcf-t",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusteringState {
    pub assignment: ClusterAssignment,
    pub trace: ClusterTrace,
    /// Full-graph `L E^(0)` used as the clustering feature when the clustered
    /// chain starts at layer 1 (otherwise it is `layers[1]`).
    pub feature_e1: Option<DenseMatrix>,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `E^(0) ..= E^(K)`.
    pub layers: Vec<DenseMatrix>,
    /// `chains[c][k - s]` holds `E_c^(k)` for `k` in `s..=K`.
    pub chains: Vec<Vec<DenseMatrix>>,
    pub clustering: Option<ClusteringState>,
    pub final_emb: DenseMatrix,
}

fn diverged(layer: usize, e: Error) -> Error {
    match e {
        Error::NumericOverflow(m) => Error::NumericDivergence(format!("layer {layer}: {m}")),
        other => other,
    }
}

fn conv(l: &CsrMatrix, x: &DenseMatrix, layer: usize) -> Result<DenseMatrix> {
    spmm(l, x).map_err(|e| diverged(layer, e))
}

/// `L (P_c ⊙ X)`
fn cluster_conv(l: &CsrMatrix, x: &DenseMatrix, pc: &[f64], layer: usize) -> Result<DenseMatrix> {
    conv(l, &row_scale(x, pc)?, layer)
}

fn sum_chains(chains: &[Vec<DenseMatrix>], idx: usize) -> DenseMatrix {
    let mut acc = chains[0][idx].clone();
    for chain in &chains[1..] {
        acc.add_assign(&chain[idx]);
    }
    acc
}

/// Uniform layer combination, accumulated in layer order.
pub fn combine_layers(layers: &[DenseMatrix]) -> DenseMatrix {
    let alpha = 1.0 / layers.len() as f64;
    let (n, d) = layers[0].shape();
    let mut out = DenseMatrix::zeros(n, d);
    for e in layers {
        out.axpy(alpha, e);
    }
    out
}

/// Layers `1..s` on the full graph, followed by the cluster chains. `probs`
/// may be `None` only when no layer is clustered.
fn run_layers(
    l: &CsrMatrix,
    e0: &DenseMatrix,
    cfg: &PropagationConfig,
    mut layers: Vec<DenseMatrix>,
    probs: Option<&DenseMatrix>,
) -> Result<(Vec<DenseMatrix>, Vec<Vec<DenseMatrix>>)> {
    if layers.is_empty() {
        layers.push(e0.clone());
    }
    let k_max = cfg.layers;
    let s = cfg.start_layer;
    while layers.len() <= k_max.min(s - 1) {
        let k = layers.len();
        let next = conv(l, &layers[k - 1], k)?;
        layers.push(next);
    }
    if !cfg.uses_clusters() {
        return Ok((layers, Vec::new()));
    }
    let probs = probs.ok_or_else(|| Error::InvalidState("cluster probabilities missing".into()))?;
    if probs.shape() != (e0.n_rows(), cfg.n_clusters) {
        return Err(invalid_arg!(
            "assignment is {:?}, expected {}x{}",
            probs.shape(),
            e0.n_rows(),
            cfg.n_clusters
        ));
    }
    let start = &layers[s - 1];
    let chains: Vec<Vec<DenseMatrix>> = (0..cfg.n_clusters)
        .into_par_iter()
        .map(|c| {
            let pc = probs.column(c);
            let mut chain: Vec<DenseMatrix> = Vec::with_capacity(k_max + 1 - s);
            for k in s..=k_max {
                let src = chain.last().unwrap_or(start);
                let next = cluster_conv(l, src, &pc, k)?;
                chain.push(next);
            }
            Ok(chain)
        })
        .collect::<Result<_>>()?;
    for idx in 0..=(k_max - s) {
        layers.push(sum_chains(&chains, idx));
    }
    Ok((layers, chains))
}

fn check_shapes(graph: &BipartiteGraph, params: &ModelParams, cfg: &PropagationConfig) -> Result<()> {
    cfg.validate()?;
    if params.e0.n_rows() != graph.n_nodes() {
        return Err(invalid_arg!(
            "embedding table has {} rows for {} nodes",
            params.e0.n_rows(),
            graph.n_nodes()
        ));
    }
    if params.e0.n_cols() != params.cluster.dim() {
        return Err(invalid_arg!(
            "embedding dim {} does not match cluster net dim {}",
            params.e0.n_cols(),
            params.cluster.dim()
        ));
    }
    if params.cluster.n_clusters() != cfg.n_clusters {
        return Err(invalid_arg!(
            "cluster net has {} outputs, config wants {}",
            params.cluster.n_clusters(),
            cfg.n_clusters
        ));
    }
    Ok(())
}

/// Runs the model. In [`NoiseMode::Train`] fresh Gumbel noise is drawn from
/// `rng`; the draws are kept in the trace so the step can be replayed.
pub fn forward<R: Rng + ?Sized>(
    graph: &BipartiteGraph,
    params: &ModelParams,
    cfg: &PropagationConfig,
    rng: &mut R,
    mode: NoiseMode,
) -> Result<ForwardTrace> {
    let noise = match mode {
        NoiseMode::Train if cfg.uses_clusters() => Some(cluster::sample_gumbel(
            graph.n_nodes(),
            cfg.n_clusters,
            rng,
        )),
        _ => None,
    };
    forward_with_noise(graph, params, cfg, noise.as_ref())
}

/// Forward pass with explicit Gumbel noise (`None` = evaluation mode).
pub fn forward_with_noise(
    graph: &BipartiteGraph,
    params: &ModelParams,
    cfg: &PropagationConfig,
    noise: Option<&DenseMatrix>,
) -> Result<ForwardTrace> {
    check_shapes(graph, params, cfg)?;
    let l = graph.laplacian();
    let e0 = &params.e0;
    let s = cfg.start_layer;

    let mut layers = vec![e0.clone()];
    let mut clustering = None;
    if cfg.uses_clusters() {
        // Full-graph layers below s, then the clustering feature E^(1).
        while layers.len() < s {
            let k = layers.len();
            let next = conv(l, &layers[k - 1], k)?;
            layers.push(next);
        }
        let feature_e1 = if s == 1 { Some(conv(l, e0, 1)?) } else { None };
        let e1 = feature_e1.as_ref().unwrap_or_else(|| &layers[1]);
        let (assignment, trace) = cluster::assign_clusters_with_noise(e0, e1, &params.cluster, noise)?;
        clustering = Some(ClusteringState {
            assignment,
            trace,
            feature_e1,
        });
    }
    let probs = clustering.as_ref().map(|c| &c.assignment.probs);
    let (layers, chains) = run_layers(l, e0, cfg, layers, probs)?;
    let final_emb = combine_layers(&layers);
    if !final_emb.is_finite() {
        return Err(Error::NumericDivergence("final embedding is not finite".into()));
    }
    Ok(ForwardTrace {
        layers,
        chains,
        clustering,
        final_emb,
    })
}

/// Propagation with a fixed probability matrix, bypassing the cluster net.
/// Returns `(layers, chains, final)`.
pub fn propagate_with_probs(
    graph: &BipartiteGraph,
    e0: &DenseMatrix,
    cfg: &PropagationConfig,
    probs: &DenseMatrix,
) -> Result<(Vec<DenseMatrix>, Vec<Vec<DenseMatrix>>, DenseMatrix)> {
    cfg.validate()?;
    if e0.n_rows() != graph.n_nodes() {
        return Err(invalid_arg!("embedding rows do not match node count"));
    }
    let (layers, chains) = run_layers(graph.laplacian(), e0, cfg, Vec::new(), Some(probs))?;
    let fin = combine_layers(&layers);
    Ok((layers, chains, fin))
}

/// Noise-free final embeddings without retaining intermediate layers: two
/// buffers per chain plus the running combination.
pub fn infer_final(
    graph: &BipartiteGraph,
    params: &ModelParams,
    cfg: &PropagationConfig,
) -> Result<(DenseMatrix, Option<ClusterAssignment>)> {
    check_shapes(graph, params, cfg)?;
    let l = graph.laplacian();
    let e0 = &params.e0;
    let alpha = cfg.alpha();
    let s = cfg.start_layer;
    let (n, d) = e0.shape();

    let mut acc = DenseMatrix::zeros(n, d);
    acc.axpy(alpha, e0);
    let mut cur = e0.clone();
    let mut assignment = None;
    for k in 1..=cfg.layers.min(s - 1) {
        cur = conv(l, &cur, k)?;
        acc.axpy(alpha, &cur);
        if k == 1 && cfg.uses_clusters() {
            assignment = Some(cluster::assign_clusters_with_noise(e0, &cur, &params.cluster, None)?.0);
        }
    }
    if cfg.uses_clusters() {
        if s == 1 {
            let e1 = conv(l, e0, 1)?;
            assignment = Some(cluster::assign_clusters_with_noise(e0, &e1, &params.cluster, None)?.0);
        }
        let probs = &assignment.as_ref().expect("assignment computed above").probs;
        let columns: Vec<Vec<f64>> = (0..cfg.n_clusters).map(|c| probs.column(c)).collect();
        let mut chains: Vec<DenseMatrix> = vec![cur; cfg.n_clusters];
        for k in s..=cfg.layers {
            chains = chains
                .par_iter()
                .zip(columns.par_iter())
                .map(|(x, pc)| cluster_conv(l, x, pc, k))
                .collect::<Result<_>>()?;
            let mut layer = chains[0].clone();
            for chain in &chains[1..] {
                layer.add_assign(chain);
            }
            acc.axpy(alpha, &layer);
        }
    }
    if !acc.is_finite() {
        return Err(Error::NumericDivergence("final embedding is not finite".into()));
    }
    Ok((acc, assignment))
}

/// `e_u · e_i`; item rows are offset by `n_users`.
pub fn score(final_emb: &DenseMatrix, n_users: usize, user: u32, item: u32) -> Result<f64> {
    let (u, i) = (user as usize, n_users + item as usize);
    if u >= n_users || i >= final_emb.n_rows() {
        return Err(invalid_arg!("user {user} or item {item} out of range"));
    }
    Ok(dot(final_emb.row(u), final_emb.row(i)))
}

/// Scores of one user against every item.
pub fn score_all_items(final_emb: &DenseMatrix, n_users: usize, user: u32) -> Result<Vec<f64>> {
    let u = user as usize;
    if u >= n_users || n_users > final_emb.n_rows() {
        return Err(invalid_arg!("user {user} out of range"));
    }
    let eu = final_emb.row(u);
    Ok((n_users..final_emb.n_rows())
        .map(|r| dot(eu, final_emb.row(r)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(PropagationConfig::new(9, 2, 2).is_err());
        assert!(PropagationConfig::new(3, 0, 2).is_err());
        assert!(PropagationConfig::new(3, 2, 0).is_err());
        assert!(PropagationConfig::new(3, 2, 4).is_err());
        let cfg = PropagationConfig::new(3, 2, 2).unwrap();
        assert_eq!(cfg.alpha(), 0.25);
        assert!(!PropagationConfig::new(1, 2, 2).unwrap().uses_clusters());
        assert_eq!(PropagationConfig::new(3, 1, 2).unwrap().variant_name(), "lightgcn-equivalent");
    }

    #[test]
    fn score_examples() {
        let f = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![0.0, 0.0], vec![-2.0, 1.0]]).unwrap();
        assert_eq!(score(&f, 1, 0, 0).unwrap(), 11.0);
        assert_eq!(score(&f, 1, 0, 1).unwrap(), 0.0);
        assert_eq!(score(&f, 1, 0, 2).unwrap(), 0.0);
        assert!(score(&f, 1, 1, 0).is_err());
        assert!(score(&f, 1, 0, 3).is_err());
    }

    #[test]
    fn score_all_items_examples() {
        let f = DenseMatrix::from_rows(&[vec![3.0, 5.0], vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(score_all_items(&f, 2, 0).unwrap(), vec![3.0, 5.0]);
        assert_eq!(score_all_items(&f, 2, 1).unwrap(), vec![0.0, 0.0]);
        assert!(score_all_items(&f, 2, 2).is_err());
        let g = DenseMatrix::from_fn(7, 3, |r, c| (r as f64 - 2.5) * (c as f64 + 0.5));
        let all = score_all_items(&g, 3, 1).unwrap();
        for (i, v) in all.iter().enumerate() {
            assert!((v - score(&g, 3, 1, i as u32).unwrap()).abs() <= 1e-12);
        }
    }
}
