//! BPR objective, exact reverse-mode gradients, Adam and the epoch loop.
//!
//! The gradient flows along two paths: through the embedding chains (the
//! adjoint of `L X` is `Lᵀ G = L G` since `L` is symmetric) and through the cluster probabilities, whose
//! adjoint at each clustered layer is the row-wise dot product of the
//! incoming adjoint with the pre-scale embedding. The latter is pulled back
//! through the cluster net into `E^(0)` and, via the clustering feature, into
//! `L E^(0)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{self, ClusterNetGrads, ClusterNetParams, NoiseMode};
use crate::dataset::{read_u64, BprTriplet, InteractionDataset, NegativeSampler, ReadError, Split};
use crate::dense::{dot, DenseMatrix};
use crate::error::{invalid_arg, Error, Result};
use crate::evaluation::{self, EvalResult};
use crate::graph::BipartiteGraph;
use crate::propagation::{self, ForwardTrace, PropagationConfig};
use crate::seed;
use crate::sparse::{row_scale, spmm};

pub const DEFAULT_TAU: f64 = 0.1;
pub const CHECKPOINT_MAGIC: &[u8; 9] = b"CGCFCKPT1";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Ego embeddings, users first then items.
    pub e0: DenseMatrix,
    pub cluster: ClusterNetParams,
}

impl ModelParams {
    pub fn dim(&self) -> usize {
        self.e0.n_cols()
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn tensors(&self) -> [&[f64]; 5] {
        [
            self.e0.as_slice(),
            self.cluster.w1.as_slice(),
            &self.cluster.b1,
            self.cluster.w2.as_slice(),
            &self.cluster.b2,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.e0.as_mut_slice(),
            self.cluster.w1.as_mut_slice(),
            &mut self.cluster.b1,
            self.cluster.w2.as_mut_slice(),
            &mut self.cluster.b2,
        ]
    }

    /// Flat copy of every parameter in a fixed order (E0, W1, b1, W2, b2).
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// Inverse of [`ModelParams::to_flat`].
    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let mut off = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[off..off + t.len()]);
            off += t.len();
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Xavier-uniform initialization; biases start at zero. Embedding rows are
/// treated as `1 x d` for the fan computation.
pub fn init_params(n_nodes: usize, dim: usize, n_clusters: usize, seed: u64) -> Result<ModelParams> {
    if dim == 0 || n_clusters == 0 {
        return Err(invalid_arg!("need d >= 1 and C >= 1"));
    }
    let mut rng = seed::rng_for(seed, seed::LABEL_INIT, &[]);
    let mut xavier = |rows: usize, cols: usize, fan_in: usize, fan_out: usize| {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        DenseMatrix::from_fn(rows, cols, |_, _| dist.sample(&mut rng))
    };
    let e0 = xavier(n_nodes, dim, 1, dim);
    let w1 = xavier(dim, dim, dim, dim);
    let w2 = xavier(dim, n_clusters, dim, n_clusters);
    Ok(ModelParams {
        e0,
        cluster: ClusterNetParams {
            w1,
            b1: vec![0.0; dim],
            w2,
            b2: vec![0.0; n_clusters],
            leaky_slope: cluster::DEFAULT_LEAKY_SLOPE,
            tau: DEFAULT_TAU,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub e0: DenseMatrix,
    pub cluster: ClusterNetGrads,
}

impl Gradients {
    pub fn to_flat(&self) -> Vec<f64> {
        [
            self.e0.as_slice(),
            self.cluster.w1.as_slice(),
            &self.cluster.b1,
            self.cluster.w2.as_slice(),
            &self.cluster.b2,
        ]
        .concat()
    }
}

/// L2 penalty `lambda * ||Theta||^2`. Theta covers the ego embeddings of every
/// distinct user and item touched by the batch, plus (optionally) the cluster
/// net weights and biases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L2Penalty {
    pub lambda: f64,
    pub include_cluster_weights: bool,
}

impl L2Penalty {
    pub fn new(lambda: f64) -> Self {
        L2Penalty {
            lambda,
            include_cluster_weights: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    /// Mean of `-ln sigmoid(r_pos - r_neg)` over the batch.
    pub bpr: f64,
    pub regularization: f64,
}

impl LossValue {
    pub fn total(&self) -> f64 {
        self.bpr + self.regularization
    }
}

/// `-ln sigmoid(-x)`, stable for large `|x|`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn touched_nodes(batch: &[BprTriplet], n_users: usize) -> Vec<usize> {
    let mut nodes: Vec<usize> = batch
        .iter()
        .flat_map(|t| {
            [
                t.user as usize,
                n_users + t.pos_item as usize,
                n_users + t.neg_item as usize,
            ]
        })
        .collect();
    nodes.sort_unstable();
    nodes.dedup();
    nodes
}

fn margin(final_emb: &DenseMatrix, n_users: usize, t: &BprTriplet) -> f64 {
    let eu = final_emb.row(t.user as usize);
    dot(eu, final_emb.row(n_users + t.pos_item as usize))
        - dot(eu, final_emb.row(n_users + t.neg_item as usize))
}

pub fn bpr_loss(
    trace: &ForwardTrace,
    batch: &[BprTriplet],
    penalty: &L2Penalty,
    params: &ModelParams,
    n_users: usize,
) -> Result<LossValue> {
    if batch.is_empty() {
        return Err(invalid_arg!("empty batch"));
    }
    let fin = &trace.final_emb;
    let bpr = batch
        .iter()
        .map(|t| softplus(-margin(fin, n_users, t)))
        .sum::<f64>()
        / batch.len() as f64;
    let mut sq: f64 = touched_nodes(batch, n_users)
        .into_iter()
        .map(|r| params.e0.row(r).iter().map(|v| v * v).sum::<f64>())
        .sum();
    if penalty.include_cluster_weights {
        sq += params.cluster.squared_norm();
    }
    Ok(LossValue {
        bpr,
        regularization: penalty.lambda * sq,
    })
}

/// Exact gradient of [`bpr_loss`] with respect to every parameter, for the
/// noise recorded in `trace`.
pub fn backward(
    trace: &ForwardTrace,
    batch: &[BprTriplet],
    cfg: &PropagationConfig,
    graph: &BipartiteGraph,
    params: &ModelParams,
    penalty: &L2Penalty,
) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(invalid_arg!("empty batch"));
    }
    let n_users = graph.n_users();
    let k_max = cfg.layers;
    let s = cfg.start_layer;
    let l = graph.laplacian();
    if trace.layers.len() != k_max + 1 {
        return Err(Error::InvalidState(format!(
            "trace has {} layers, config has {}",
            trace.layers.len(),
            k_max + 1
        )));
    }
    let fin = &trace.final_emb;
    let (n, d) = fin.shape();

    let mut d_final = DenseMatrix::zeros(n, d);
    let inv_b = 1.0 / batch.len() as f64;
    for t in batch {
        let (u, ip, ineg) = (
            t.user as usize,
            n_users + t.pos_item as usize,
            n_users + t.neg_item as usize,
        );
        let g = -sigmoid(-margin(fin, n_users, t)) * inv_b;
        let (eu, ep, en) = (fin.row(u).to_vec(), fin.row(ip).to_vec(), fin.row(ineg).to_vec());
        for (j, v) in d_final.row_mut(u).iter_mut().enumerate() {
            *v += g * (ep[j] - en[j]);
        }
        for (v, x) in d_final.row_mut(ip).iter_mut().zip(&eu) {
            *v += g * x;
        }
        for (v, x) in d_final.row_mut(ineg).iter_mut().zip(&eu) {
            *v -= g * x;
        }
    }

    let alpha = cfg.alpha();
    let mut d_layers: Vec<DenseMatrix> = (0..=k_max)
        .map(|_| {
            let mut m = d_final.clone();
            m.scale(alpha);
            m
        })
        .collect();

    let mut cluster_grads = ClusterNetGrads::zeros_like(&params.cluster);
    if cfg.uses_clusters() {
        let state = trace
            .clustering
            .as_ref()
            .ok_or_else(|| Error::InvalidState("trace lacks the cluster assignment".into()))?;
        if trace.chains.len() != cfg.n_clusters
            || trace.chains.iter().any(|c| c.len() != k_max + 1 - s)
        {
            return Err(Error::InvalidState("trace lacks cluster chain intermediates".into()));
        }
        let probs = &state.assignment.probs;
        // Per cluster: adjoint of the probability column and the adjoint that
        // reaches the shared chain seed E^(s-1).
        let per_cluster: Vec<(Vec<f64>, DenseMatrix)> = (0..cfg.n_clusters)
            .into_par_iter()
            .map(|c| {
                let pc = probs.column(c);
                let chain = &trace.chains[c];
                let mut d_pc = vec![0.0; n];
                let mut g = d_layers[k_max].clone();
                for k in (s..=k_max).rev() {
                    // L is symmetric, so its adjoint is another spmm.
                    let z = spmm(l, &g)?;
                    let src = if k == s { &trace.layers[s - 1] } else { &chain[k - 1 - s] };
                    for (acc, v) in d_pc.iter_mut().zip(z.row_dots(src)) {
                        *acc += v;
                    }
                    let scaled = row_scale(&z, &pc)?;
                    if k > s {
                        g = d_layers[k - 1].clone();
                        g.add_assign(&scaled);
                    } else {
                        g = scaled;
                    }
                }
                Ok((d_pc, g))
            })
            .collect::<Result<_>>()?;
        let mut d_probs = DenseMatrix::zeros(n, cfg.n_clusters);
        for (c, (d_pc, to_seed)) in per_cluster.into_iter().enumerate() {
            for (r, v) in d_pc.into_iter().enumerate() {
                d_probs.set(r, c, v);
            }
            d_layers[s - 1].add_assign(&to_seed);
        }

        let (grads, d_input) =
            cluster::cluster_backward(&params.cluster, &state.trace, &state.assignment, &d_probs)?;
        cluster_grads = grads;
        // The fused input is E^(0) + E^(1).
        d_layers[0].add_assign(&d_input);
        if s >= 2 {
            d_layers[1].add_assign(&d_input);
        } else {
            d_layers[0].add_assign(&spmm(l, &d_input)?);
        }
    }

    for k in (1..=k_max.min(s - 1)).rev() {
        let back = spmm(l, &d_layers[k])?;
        d_layers[k - 1].add_assign(&back);
    }

    let mut d_e0 = d_layers.swap_remove(0);
    let lambda2 = 2.0 * penalty.lambda;
    if lambda2 != 0.0 {
        for r in touched_nodes(batch, n_users) {
            let e = params.e0.row(r).to_vec();
            for (g, x) in d_e0.row_mut(r).iter_mut().zip(e) {
                *g += lambda2 * x;
            }
        }
        if penalty.include_cluster_weights {
            let p = &params.cluster;
            cluster_grads.w1.axpy(lambda2, &p.w1);
            cluster_grads.w2.axpy(lambda2, &p.w2);
            for (g, x) in cluster_grads.b1.iter_mut().zip(&p.b1) {
                *g += lambda2 * x;
            }
            for (g, x) in cluster_grads.b2.iter_mut().zip(&p.b2) {
                *g += lambda2 * x;
            }
        }
    }
    Ok(Gradients {
        e0: d_e0,
        cluster: cluster_grads,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update over all parameters.
pub fn adam_step(params: &mut ModelParams, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    let g = grads.to_flat();
    if g.len() != state.m.len() || g.len() != params.n_params() {
        return Err(invalid_arg!(
            "adam: {} gradients, {} moments, {} params",
            g.len(),
            state.m.len(),
            params.n_params()
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let mut off = 0;
    for tensor in params.tensors_mut() {
        for p in tensor.iter_mut() {
            let gi = g[off];
            let m = &mut state.m[off];
            let v = &mut state.v[off];
            *m = b1 * *m + (1.0 - b1) * gi;
            *v = b2 * *v + (1.0 - b2) * gi * gi;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
            off += 1;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lambda: f64,
    pub reg_cluster_weights: bool,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Evaluate on validation every this many epochs.
    pub eval_every: usize,
    /// Stop after this many evaluations without improvement.
    pub patience: usize,
    pub eval_k: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            lambda: 1e-4,
            reg_cluster_weights: true,
            batch_size: 1024,
            max_epochs: 400,
            eval_every: 10,
            patience: 5,
            eval_k: 20,
            seed: 2024,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid_arg!("learning_rate must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid_arg!("lambda must be non-negative"));
        }
        if self.batch_size == 0 || self.eval_every == 0 || self.patience == 0 || self.eval_k == 0 {
            return Err(invalid_arg!("batch_size, eval_every, patience and eval_k must be >= 1"));
        }
        Ok(())
    }

    pub fn penalty(&self) -> L2Penalty {
        L2Penalty {
            lambda: self.lambda,
            include_cluster_weights: self.reg_cluster_weights,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogRecord {
    Epoch {
        epoch: usize,
        mean_loss: f64,
        lr: f64,
    },
    Eval {
        epoch: usize,
        recall: f64,
        hr: f64,
        ndcg: f64,
        best_so_far: f64,
    },
}

/// Where the per-step random streams resume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngCursor {
    pub seed: u64,
    pub epoch: u64,
    pub batch: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation checkpoint.
    pub params: ModelParams,
    pub adam: AdamState,
    pub cursor: RngCursor,
    pub log: Vec<LogRecord>,
    pub best_epoch: usize,
    pub best_validation: Option<EvalResult>,
}

/// Negative-sampling stream for one step.
pub fn step_sampler_rng(seed: u64, epoch: u64, batch: u64) -> seed::Rng {
    seed::rng_for(seed, seed::LABEL_NEGSAMPLE, &[epoch, batch])
}

/// Gumbel stream for one step.
pub fn step_noise_rng(seed: u64, epoch: u64, batch: u64) -> seed::Rng {
    seed::rng_for(seed, seed::LABEL_GUMBEL, &[epoch, batch])
}

/// Mini-batch training with periodic validation and early stopping.
/// Returns the parameters with the best validation Recall@K.
pub fn train(
    ds: &InteractionDataset,
    graph: &BipartiteGraph,
    cfg: &TrainConfig,
    prop: &PropagationConfig,
    init: ModelParams,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    prop.validate()?;
    let mut params = init;
    let mut adam = AdamState::new(params.n_params());
    let sampler = NegativeSampler::new(ds);
    let penalty = cfg.penalty();
    let n_users = ds.n_users;
    let n_batches = ds.train.len().div_ceil(cfg.batch_size);

    let mut log = Vec::new();
    let mut best = (params.clone(), adam.clone(), RngCursor { seed: cfg.seed, epoch: 1, batch: 0 });
    let mut best_recall = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut best_eval = None;
    let mut stale = 0;
    let has_validation = !ds.validation.is_empty();

    for epoch in 1..=cfg.max_epochs {
        let mut loss_sum = 0.0;
        for b in 0..n_batches {
            let ctx = |e: Error| match e {
                Error::NumericDivergence(m) | Error::NumericOverflow(m) => {
                    Error::NumericDivergence(format!("epoch {epoch} batch {b}: {m}"))
                }
                other => other,
            };
            let batch = sampler.sample_batch(
                cfg.batch_size,
                &mut step_sampler_rng(cfg.seed, epoch as u64, b as u64),
            )?;
            let mut noise_rng = step_noise_rng(cfg.seed, epoch as u64, b as u64);
            let trace = propagation::forward(graph, &params, prop, &mut noise_rng, NoiseMode::Train)
                .map_err(ctx)?;
            let loss = bpr_loss(&trace, &batch, &penalty, &params, n_users)?;
            if !loss.total().is_finite() {
                return Err(ctx(Error::NumericDivergence("loss is not finite".into())));
            }
            loss_sum += loss.total();
            let grads = backward(&trace, &batch, prop, graph, &params, &penalty).map_err(ctx)?;
            adam_step(&mut params, &grads, &mut adam, cfg.learning_rate)?;
            if !params.is_finite() {
                return Err(ctx(Error::NumericDivergence("parameters are not finite".into())));
            }
        }
        log.push(LogRecord::Epoch {
            epoch,
            mean_loss: loss_sum / n_batches as f64,
            lr: cfg.learning_rate,
        });

        let last = epoch == cfg.max_epochs;
        if has_validation && (epoch % cfg.eval_every == 0 || last) {
            let (fin, _) = propagation::infer_final(graph, &params, prop)?;
            let res = evaluation::evaluate(&fin, ds, Split::Validation, cfg.eval_k)?;
            if res.recall > best_recall {
                best_recall = res.recall;
                best_epoch = epoch;
                best = (
                    params.clone(),
                    adam.clone(),
                    RngCursor { seed: cfg.seed, epoch: epoch as u64 + 1, batch: 0 },
                );
                best_eval = Some(res.clone());
                stale = 0;
            } else {
                stale += 1;
            }
            log.push(LogRecord::Eval {
                epoch,
                recall: res.recall,
                hr: res.hr,
                ndcg: res.ndcg,
                best_so_far: best_recall,
            });
            if stale >= cfg.patience {
                break;
            }
        } else if !has_validation {
            best = (
                params.clone(),
                adam.clone(),
                RngCursor { seed: cfg.seed, epoch: epoch as u64 + 1, batch: 0 },
            );
            best_epoch = epoch;
        }
    }
    let (params, adam, cursor) = best;
    Ok(TrainOutcome {
        params,
        adam,
        cursor,
        log,
        best_epoch,
        best_validation: best_eval,
    })
}

/// Everything needed to resume or inspect a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub n_users: usize,
    pub n_items: usize,
    pub prop: PropagationConfig,
    pub params: ModelParams,
    pub adam: AdamState,
    pub cursor: RngCursor,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let p = &self.params;
        w.write_all(CHECKPOINT_MAGIC)?;
        for v in [
            self.n_users,
            self.n_items,
            p.dim(),
            self.prop.n_clusters,
            self.prop.layers,
            self.prop.start_layer,
        ] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&p.cluster.tau.to_le_bytes())?;
        w.write_all(&p.cluster.leaky_slope.to_le_bytes())?;
        for t in p.tensors() {
            for v in t {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.write_all(&self.adam.step.to_le_bytes())?;
        for v in [self.adam.beta1, self.adam.beta2, self.adam.epsilon] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in self.adam.m.iter().chain(&self.adam.v) {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [self.cursor.seed, self.cursor.epoch, self.cursor.batch] {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        Self::read_from(&mut r).map_err(|e| match e {
            ReadError::Io(e) => Error::io(path, e),
            ReadError::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        })
    }

    fn read_from(r: &mut impl Read) -> Result<Self, ReadError> {
        let mut magic = [0u8; 9];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(ReadError::Format("not a checkpoint (bad magic)".into()));
        }
        let mut header = [0usize; 6];
        for h in header.iter_mut() {
            *h = read_u64(r)? as usize;
        }
        let [n_users, n_items, dim, n_clusters, layers, start_layer] = header;
        let prop = PropagationConfig::new(layers, n_clusters, start_layer)
            .map_err(|e| ReadError::Format(e.to_string()))?;
        if dim == 0 || n_users.saturating_add(n_items) > (1 << 32) || dim > (1 << 16) {
            return Err(ReadError::Format("implausible checkpoint dimensions".into()));
        }
        let tau = read_f64(r)?;
        let leaky_slope = read_f64(r)?;
        let mut params = ModelParams {
            e0: DenseMatrix::zeros(n_users + n_items, dim),
            cluster: ClusterNetParams {
                w1: DenseMatrix::zeros(dim, dim),
                b1: vec![0.0; dim],
                w2: DenseMatrix::zeros(dim, n_clusters),
                b2: vec![0.0; n_clusters],
                leaky_slope,
                tau,
            },
        };
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                *v = read_f64(r)?;
            }
        }
        let n = params.n_params();
        let mut adam = AdamState::new(n);
        adam.step = read_u64(r)?;
        adam.beta1 = read_f64(r)?;
        adam.beta2 = read_f64(r)?;
        adam.epsilon = read_f64(r)?;
        for v in adam.m.iter_mut().chain(adam.v.iter_mut()) {
            *v = read_f64(r)?;
        }
        let cursor = RngCursor {
            seed: read_u64(r)?,
            epoch: read_u64(r)?,
            batch: read_u64(r)?,
        };
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(ReadError::Format("trailing bytes after checkpoint".into()));
        }
        params
            .cluster
            .validate()
            .map_err(|e| ReadError::Format(e.to_string()))?;
        Ok(Checkpoint {
            n_users,
            n_items,
            prop,
            params,
            adam,
            cursor,
        })
    }
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}
