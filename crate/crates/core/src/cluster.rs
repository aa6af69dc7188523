//! Soft node clustering.
//!
//! Every node's ID embedding and first-layer embedding are fused by a
//! LeakyReLU affine layer, projected to one logit per cluster, and turned
//! into a probability row with a Gumbel-Softmax. No straight-through
//! estimator is used; the soft probabilities themselves weight the
//! cluster-specific graphs.

use rand::Rng;
use rayon::prelude::*;

use crate::dense::DenseMatrix;
use crate::error::{invalid_arg, Result};

/// Default negative slope of the LeakyReLU activations.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

/// Uniform draws are clamped to `[U_CLAMP, 1 - U_CLAMP]` before the
/// double-log transform.
pub const U_CLAMP: f64 = 1e-12;

/// Bounds keeping every probability strictly inside `(0, 1)` when `C >= 2`.
const PROB_FLOOR: f64 = f64::MIN_POSITIVE;
const PROB_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// Fresh Gumbel noise per entry.
    Train,
    /// No noise; deterministic tempered softmax.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterNetParams {
    /// `d x d`; applied as `W1 · x` to each node's column vector.
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    /// `d x C`; logits are `F · W2 + b2`.
    pub w2: DenseMatrix,
    pub b2: Vec<f64>,
    pub leaky_slope: f64,
    pub tau: f64,
}

impl ClusterNetParams {
    pub fn zeros(dim: usize, n_clusters: usize, tau: f64) -> Self {
        ClusterNetParams {
            w1: DenseMatrix::zeros(dim, dim),
            b1: vec![0.0; dim],
            w2: DenseMatrix::zeros(dim, n_clusters),
            b2: vec![0.0; n_clusters],
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            tau,
        }
    }

    pub fn dim(&self) -> usize {
        self.w1.n_rows()
    }

    pub fn n_clusters(&self) -> usize {
        self.w2.n_cols()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let c = self.n_clusters();
        if d == 0 || c == 0 {
            return Err(invalid_arg!("cluster net needs d >= 1 and C >= 1"));
        }
        if self.w1.shape() != (d, d) || self.b1.len() != d {
            return Err(invalid_arg!("W1/b1 must be {d}x{d} and {d}"));
        }
        if self.w2.n_rows() != d || self.b2.len() != c {
            return Err(invalid_arg!("W2/b2 must be {d}x{c} and {c}"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid_arg!("temperature must be positive, got {}", self.tau));
        }
        let finite = self.w1.is_finite()
            && self.w2.is_finite()
            && self.b1.iter().chain(&self.b2).all(|v| v.is_finite())
            && self.leaky_slope.is_finite();
        if !finite {
            return Err(invalid_arg!("cluster net parameters must be finite"));
        }
        Ok(())
    }

    /// Sum of squares over all weights and biases.
    pub fn squared_norm(&self) -> f64 {
        self.w1.frobenius_sq()
            + self.w2.frobenius_sq()
            + self.b1.iter().map(|v| v * v).sum::<f64>()
            + self.b2.iter().map(|v| v * v).sum::<f64>()
    }
}

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        slope
    }
}

fn leaky_relu_matrix(pre: &DenseMatrix, slope: f64) -> DenseMatrix {
    let data = pre.as_slice().iter().map(|&x| leaky_relu(x, slope)).collect();
    DenseMatrix::from_vec(pre.n_rows(), pre.n_cols(), data).expect("shape preserved")
}

fn add_bias(m: &mut DenseMatrix, bias: &[f64]) {
    for r in 0..m.n_rows() {
        for (v, b) in m.row_mut(r).iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Fused node features: `F = LeakyReLU(W1 · (e0 + e1) + b1)` per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeatures {
    pub input: DenseMatrix,
    pub pre: DenseMatrix,
    pub post: DenseMatrix,
}

pub fn fuse_features(
    e0: &DenseMatrix,
    e1: &DenseMatrix,
    p: &ClusterNetParams,
) -> Result<FusedFeatures> {
    if e0.shape() != e1.shape() || e0.n_cols() != p.dim() {
        return Err(invalid_arg!(
            "fuse_features: E0 {:?}, E1 {:?}, d = {}",
            e0.shape(),
            e1.shape(),
            p.dim()
        ));
    }
    let mut input = e0.clone();
    input.add_assign(e1);
    let mut pre = input.matmul_transposed(&p.w1)?;
    add_bias(&mut pre, &p.b1);
    let post = leaky_relu_matrix(&pre, p.leaky_slope);
    Ok(FusedFeatures { input, pre, post })
}

/// Cluster logits: `H = LeakyReLU(F · W2 + b2)`, one column per cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterLogits {
    pub pre: DenseMatrix,
    pub post: DenseMatrix,
}

pub fn cluster_logits(fused: &DenseMatrix, p: &ClusterNetParams) -> Result<ClusterLogits> {
    if fused.n_cols() != p.dim() {
        return Err(invalid_arg!(
            "cluster_logits: F has {} columns, d = {}",
            fused.n_cols(),
            p.dim()
        ));
    }
    let mut pre = fused.matmul(&p.w2)?;
    add_bias(&mut pre, &p.b2);
    let post = leaky_relu_matrix(&pre, p.leaky_slope);
    Ok(ClusterLogits { pre, post })
}

/// Soft assignment of every node to every cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// `(N+M) x C`, rows sum to one.
    pub probs: DenseMatrix,
    /// The Gumbel draws used for this assignment (all zero in eval mode).
    pub noise: DenseMatrix,
}

impl ClusterAssignment {
    pub fn n_clusters(&self) -> usize {
        self.probs.n_cols()
    }

    /// Probability vector `P_c` over all nodes.
    pub fn cluster_column(&self, c: usize) -> Vec<f64> {
        self.probs.column(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTrace {
    pub fused: FusedFeatures,
    pub logits: ClusterLogits,
}

/// Standard Gumbel draws `-ln(-ln U)`, `U ~ Uniform(0, 1)` clamped away from
/// the endpoints.
pub fn sample_gumbel<R: Rng + ?Sized>(n_rows: usize, n_cols: usize, rng: &mut R) -> DenseMatrix {
    DenseMatrix::from_fn(n_rows, n_cols, |_, _| {
        let u: f64 = rng.gen::<f64>().clamp(U_CLAMP, 1.0 - U_CLAMP);
        -(-u.ln()).ln()
    })
}

/// Row-wise `softmax((H + g) / tau)` for a given noise matrix (`None` = zero).
pub fn tempered_softmax(h: &DenseMatrix, noise: Option<&DenseMatrix>, tau: f64) -> Result<DenseMatrix> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid_arg!("temperature must be positive, got {tau}"));
    }
    if let Some(g) = noise {
        if g.shape() != h.shape() {
            return Err(invalid_arg!(
                "noise shape {:?} does not match logits {:?}",
                g.shape(),
                h.shape()
            ));
        }
    }
    let c = h.n_cols();
    let mut probs = DenseMatrix::zeros(h.n_rows(), c);
    if c == 0 {
        return Ok(probs);
    }
    probs
        .as_mut_slice()
        .par_chunks_mut(c)
        .with_min_len(64)
        .enumerate()
        .for_each(|(r, out)| {
            if c == 1 {
                out[0] = 1.0;
                return;
            }
            let hr = h.row(r);
            for (j, o) in out.iter_mut().enumerate() {
                let g = noise.map_or(0.0, |g| g.get(r, j));
                *o = (hr[j] + g) / tau;
            }
            let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for o in out.iter_mut() {
                *o = (*o - max).exp();
                sum += *o;
            }
            for o in out.iter_mut() {
                *o = (*o / sum).clamp(PROB_FLOOR, PROB_CEIL);
            }
        });
    Ok(probs)
}

pub fn gumbel_softmax<R: Rng + ?Sized>(
    h: &DenseMatrix,
    tau: f64,
    rng: &mut R,
    mode: NoiseMode,
) -> Result<ClusterAssignment> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid_arg!("temperature must be positive, got {tau}"));
    }
    let noise = match mode {
        NoiseMode::Train => sample_gumbel(h.n_rows(), h.n_cols(), rng),
        NoiseMode::Eval => DenseMatrix::zeros(h.n_rows(), h.n_cols()),
    };
    assign_with_noise(h, tau, noise)
}

/// Softmax with an explicit noise matrix, used to replay a training step.
pub fn assign_with_noise(h: &DenseMatrix, tau: f64, noise: DenseMatrix) -> Result<ClusterAssignment> {
    let probs = tempered_softmax(h, Some(&noise), tau)?;
    Ok(ClusterAssignment { probs, noise })
}

/// Full pipeline `fuse_features -> cluster_logits -> gumbel_softmax`.
pub fn assign_clusters<R: Rng + ?Sized>(
    e0: &DenseMatrix,
    e1: &DenseMatrix,
    p: &ClusterNetParams,
    rng: &mut R,
    mode: NoiseMode,
) -> Result<(ClusterAssignment, ClusterTrace)> {
    p.validate()?;
    let fused = fuse_features(e0, e1, p)?;
    let logits = cluster_logits(&fused.post, p)?;
    let assignment = gumbel_softmax(&logits.post, p.tau, rng, mode)?;
    Ok((assignment, ClusterTrace { fused, logits }))
}

/// Same as [`assign_clusters`] with a fixed noise matrix (`None` = eval).
pub fn assign_clusters_with_noise(
    e0: &DenseMatrix,
    e1: &DenseMatrix,
    p: &ClusterNetParams,
    noise: Option<&DenseMatrix>,
) -> Result<(ClusterAssignment, ClusterTrace)> {
    p.validate()?;
    let fused = fuse_features(e0, e1, p)?;
    let logits = cluster_logits(&fused.post, p)?;
    let noise = match noise {
        Some(g) => g.clone(),
        None => DenseMatrix::zeros(logits.post.n_rows(), logits.post.n_cols()),
    };
    let assignment = assign_with_noise(&logits.post, p.tau, noise)?;
    Ok((assignment, ClusterTrace { fused, logits }))
}

/// Gradients of the cluster network weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterNetGrads {
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    pub w2: DenseMatrix,
    pub b2: Vec<f64>,
}

impl ClusterNetGrads {
    pub fn zeros_like(p: &ClusterNetParams) -> Self {
        ClusterNetGrads {
            w1: DenseMatrix::zeros(p.w1.n_rows(), p.w1.n_cols()),
            b1: vec![0.0; p.b1.len()],
            w2: DenseMatrix::zeros(p.w2.n_rows(), p.w2.n_cols()),
            b2: vec![0.0; p.b2.len()],
        }
    }
}

/// Pulls the adjoint of the probabilities back through softmax, both
/// LeakyReLU layers and both affine maps. Returns the weight gradients and
/// the adjoint of the fused input `e0 + e1`.
pub fn cluster_backward(
    p: &ClusterNetParams,
    trace: &ClusterTrace,
    assignment: &ClusterAssignment,
    d_probs: &DenseMatrix,
) -> Result<(ClusterNetGrads, DenseMatrix)> {
    let probs = &assignment.probs;
    if d_probs.shape() != probs.shape() {
        return Err(invalid_arg!(
            "probability adjoint {:?} does not match {:?}",
            d_probs.shape(),
            probs.shape()
        ));
    }
    let slope = p.leaky_slope;
    let (n, c) = probs.shape();
    // softmax: dz_j = p_j (dp_j - sum_l p_l dp_l) / tau, then through LeakyReLU.
    let mut d_logit_pre = DenseMatrix::zeros(n, c);
    for r in 0..n {
        let pr = probs.row(r);
        let dp = d_probs.row(r);
        let inner: f64 = pr.iter().zip(dp).map(|(a, b)| a * b).sum();
        let pre = trace.logits.pre.row(r);
        for (j, out) in d_logit_pre.row_mut(r).iter_mut().enumerate() {
            let dz = pr[j] * (dp[j] - inner) / p.tau;
            *out = dz * leaky_relu_grad(pre[j], slope);
        }
    }
    let w2 = trace.fused.post.transpose_matmul(&d_logit_pre)?;
    let b2 = d_logit_pre.column_sums();
    let mut d_fused_pre = d_logit_pre.matmul_transposed(&p.w2)?;
    for (v, &x) in d_fused_pre
        .as_mut_slice()
        .iter_mut()
        .zip(trace.fused.pre.as_slice())
    {
        *v *= leaky_relu_grad(x, slope);
    }
    let w1 = d_fused_pre.transpose_matmul(&trace.fused.input)?;
    let b1 = d_fused_pre.column_sums();
    let d_input = d_fused_pre.matmul(&p.w1)?;
    Ok((ClusterNetGrads { w1, b1, w2, b2 }, d_input))
}
