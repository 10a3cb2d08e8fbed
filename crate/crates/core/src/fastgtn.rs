//! FastGTN autoencoder used as a relation-importance explainer.
//!
//! Each (layer, channel) mixes the row-normalized adjacency of every relation
//! plus an identity self-loop with softmax-normalized weights:
//!
//! ```text
//! H^(l,c) = relu( sum_r alpha^(c)_(l,r) A_r H^(l-1,c) W^(l,c) )
//! ```
//!
//! Channels are averaged and decoded back to the input width; training
//! minimizes the reconstruction MSE on paper nodes. The learned mixing
//! weights, averaged over layers and channels, are the relation weights
//! used to score metapaths.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::Adam;
use crate::graph::{EdgeKind, HetGraph, NodeKind};
use crate::math::{softmax, softmax_backward, Matrix};
use crate::table::{EmbeddingTable, TableError};

/// Mixing slots per (layer, channel): the two edge kinds, then the self-loop.
pub const MIX_SLOTS: usize = 3;
pub const SELF_LOOP: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FastGtnConfig {
    pub layers: usize,
    pub channels: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Apply the rectifier after each layer.
    pub activation: bool,
}

impl Default for FastGtnConfig {
    fn default() -> Self {
        Self {
            layers: 7,
            channels: 8,
            hidden_dim: 64,
            epochs: 50,
            learning_rate: 3e-3,
            seed: 0,
            activation: true,
        }
    }
}

impl FastGtnConfig {
    pub fn validate(&self) -> Result<(), FastGtnError> {
        if self.layers == 0 || self.channels == 0 || self.hidden_dim == 0 {
            return Err(FastGtnError::Config("layers, channels and hidden_dim must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(FastGtnError::Config("learning_rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FastGtnError {
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(&'static str),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("graph has no paper nodes")]
    NoPapers,
    #[error("non-finite loss {loss} at epoch {epoch}")]
    NonFinite { epoch: usize, loss: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastGtnParams {
    pub layers: usize,
    pub channels: usize,
    pub activation: bool,
    /// `(layers * channels) x 3` pre-softmax mixing logits; row `l * channels + c`.
    pub mixing_logits: Matrix,
    /// `W^(l,c)`, indexed `l * channels + c`.
    pub transforms: Vec<Matrix>,
    /// `hidden x in_dim`.
    pub decoder: Matrix,
}

impl FastGtnParams {
    /// Zero logits (uniform mixing) and seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) matrices.
    pub fn init(config: &FastGtnConfig, in_dim: usize) -> Result<Self, FastGtnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = config.hidden_dim;
        let mut transforms = Vec::with_capacity(config.layers * config.channels);
        for l in 0..config.layers {
            let rows = if l == 0 { in_dim } else { h };
            for _ in 0..config.channels {
                transforms.push(Matrix::uniform_fan_in(rows, h, &mut rng));
            }
        }
        Ok(Self {
            layers: config.layers,
            channels: config.channels,
            activation: config.activation,
            mixing_logits: Matrix::zeros(config.layers * config.channels, MIX_SLOTS),
            transforms,
            decoder: Matrix::uniform_fan_in(h, in_dim, &mut rng),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.decoder.cols()
    }

    /// Softmax of one (layer, channel) logit row.
    pub fn mixing_weights(&self, layer: usize, channel: usize) -> Vec<f64> {
        softmax(self.mixing_logits.row(layer * self.channels + channel))
    }

    fn check(&self, in_dim: usize) -> Result<(), FastGtnError> {
        let n = self.layers * self.channels;
        if self.mixing_logits.rows() != n || self.mixing_logits.cols() != MIX_SLOTS {
            return Err(FastGtnError::Shape("mixing logits"));
        }
        if self.transforms.len() != n {
            return Err(FastGtnError::Shape("transform count"));
        }
        if self.decoder.cols() != in_dim {
            return Err(FastGtnError::Shape("decoder width differs from input width"));
        }
        let mut width = in_dim;
        for l in 0..self.layers {
            let out = self.transforms[l * self.channels].cols();
            for c in 0..self.channels {
                let w = &self.transforms[l * self.channels + c];
                if w.rows() != width || w.cols() != out {
                    return Err(FastGtnError::Shape("transform chain"));
                }
            }
            width = out;
        }
        if self.decoder.rows() != width {
            return Err(FastGtnError::Shape("decoder height differs from hidden width"));
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        Self {
            layers: self.layers,
            channels: self.channels,
            activation: self.activation,
            mixing_logits: z(&self.mixing_logits),
            transforms: self.transforms.iter().map(z).collect(),
            decoder: z(&self.decoder),
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![self.mixing_logits.as_slice()];
        out.extend(self.transforms.iter().map(Matrix::as_slice));
        out.push(self.decoder.as_slice());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.mixing_logits.as_mut_slice()];
        out.extend(self.transforms.iter_mut().map(Matrix::as_mut_slice));
        out.push(self.decoder.as_mut_slice());
        out
    }
}

/// Row-normalized adjacency of each edge kind, ignoring direction.
#[derive(Debug, Clone)]
pub struct RelationAdjacency {
    lists: [Vec<Vec<usize>>; 2],
}

impl RelationAdjacency {
    pub fn new(g: &HetGraph) -> Self {
        let build = |r: EdgeKind| {
            (0..g.node_count())
                .map(|i| g.undirected_indices(i, r).to_vec())
                .collect()
        };
        Self {
            lists: [build(EdgeKind::PaperVenue), build(EdgeKind::PaperAuthor)],
        }
    }

    /// `A_r X`: each row becomes the mean of its neighbors' rows.
    fn apply(&self, r: usize, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for (i, nbrs) in self.lists[r].iter().enumerate() {
            if nbrs.is_empty() {
                continue;
            }
            let w = 1.0 / nbrs.len() as f64;
            let row = out.row_mut(i);
            for &j in nbrs {
                for (o, &v) in row.iter_mut().zip(x.row(j)) {
                    *o += w * v;
                }
            }
        }
        out
    }

    /// `A_r^T G`.
    fn apply_transpose(&self, r: usize, g: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(g.rows(), g.cols());
        for (i, nbrs) in self.lists[r].iter().enumerate() {
            if nbrs.is_empty() {
                continue;
            }
            let w = 1.0 / nbrs.len() as f64;
            let gi = g.row(i);
            for &j in nbrs {
                for (o, &v) in out.row_mut(j).iter_mut().zip(gi) {
                    *o += w * v;
                }
            }
        }
        out
    }
}

struct StepCache {
    prev: Matrix,
    neighbor_means: [Matrix; 2],
    mixed: Matrix,
    pre: Matrix,
}

struct Trace {
    steps: Vec<Vec<StepCache>>,
    merged: Matrix,
    output: Matrix,
}

fn run(adj: &RelationAdjacency, x: &Matrix, p: &FastGtnParams) -> Trace {
    let mut steps: Vec<Vec<StepCache>> = (0..p.channels).map(|_| Vec::new()).collect();
    let mut merged: Option<Matrix> = None;
    for (c, channel_steps) in steps.iter_mut().enumerate() {
        let mut h = x.clone();
        for l in 0..p.layers {
            let alpha = p.mixing_weights(l, c);
            let neighbor_means = [adj.apply(0, &h), adj.apply(1, &h)];
            let mut mixed = h.clone();
            mixed.as_mut_slice().iter_mut().for_each(|v| *v *= alpha[SELF_LOOP]);
            for r in 0..2 {
                mixed.add_scaled(&neighbor_means[r], alpha[r]);
            }
            let pre = mixed.matmul(&p.transforms[l * p.channels + c]);
            let mut next = pre.clone();
            if p.activation {
                next.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
            }
            channel_steps.push(StepCache {
                prev: h,
                neighbor_means,
                mixed,
                pre,
            });
            h = next;
        }
        match &mut merged {
            Some(m) => m.add_scaled(&h, 1.0),
            None => merged = Some(h),
        }
    }
    let mut merged = merged.expect("at least one channel");
    let inv = 1.0 / p.channels as f64;
    merged.as_mut_slice().iter_mut().for_each(|v| *v *= inv);
    let output = merged.matmul(&p.decoder);
    Trace {
        steps,
        merged,
        output,
    }
}

/// Decoded node representations, in the same width as `h0`.
pub fn fastgtn_forward(
    g: &HetGraph,
    h0: &EmbeddingTable,
    p: &FastGtnParams,
) -> Result<EmbeddingTable, FastGtnError> {
    let x = h0.aligned_to(g)?;
    p.check(x.cols())?;
    let trace = run(&RelationAdjacency::new(g), &x, p);
    Ok(EmbeddingTable::from_graph_rows(g, trace.output))
}

fn reconstruction(output: &Matrix, target: &Matrix, papers: &[usize]) -> (f64, Matrix) {
    let mut grad = Matrix::zeros(output.rows(), output.cols());
    if papers.is_empty() {
        return (0.0, grad);
    }
    let denom = (papers.len() * output.cols()) as f64;
    let mut loss = 0.0;
    for &p in papers {
        for (c, (o, t)) in output.row(p).iter().zip(target.row(p)).enumerate() {
            let d = o - t;
            loss += d * d;
            grad.set(p, c, 2.0 * d / denom);
        }
    }
    (loss / denom, grad)
}

fn backward(
    adj: &RelationAdjacency,
    trace: &Trace,
    p: &FastGtnParams,
    d_out: &Matrix,
) -> FastGtnParams {
    let mut grads = p.zeros_like();
    grads.decoder = trace.merged.tmatmul(d_out);
    let mut d_merged = d_out.matmul_t(&p.decoder);
    let inv = 1.0 / p.channels as f64;
    d_merged.as_mut_slice().iter_mut().for_each(|v| *v *= inv);

    for (c, steps) in trace.steps.iter().enumerate() {
        let mut dh = d_merged.clone();
        for l in (0..p.layers).rev() {
            let s = &steps[l];
            let idx = l * p.channels + c;
            let mut dpre = dh;
            if p.activation {
                for (d, &z) in dpre.as_mut_slice().iter_mut().zip(s.pre.as_slice()) {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            grads.transforms[idx] = s.mixed.tmatmul(&dpre);
            let dmixed = dpre.matmul_t(&p.transforms[idx]);

            let alpha = p.mixing_weights(l, c);
            let frob = |a: &Matrix| -> f64 {
                a.as_slice().iter().zip(dmixed.as_slice()).map(|(x, y)| x * y).sum()
            };
            let dalpha = [
                frob(&s.neighbor_means[0]),
                frob(&s.neighbor_means[1]),
                frob(&s.prev),
            ];
            let dlogits = softmax_backward(&alpha, &dalpha);
            grads.mixing_logits.row_mut(idx).copy_from_slice(&dlogits);

            if l == 0 {
                break;
            }
            let mut dprev = dmixed.clone();
            dprev.as_mut_slice().iter_mut().for_each(|v| *v *= alpha[SELF_LOOP]);
            for r in 0..2 {
                if alpha[r] != 0.0 {
                    dprev.add_scaled(&adj.apply_transpose(r, &dmixed), alpha[r]);
                }
            }
            dh = dprev;
        }
    }
    grads
}

/// Reconstruction loss on paper rows and its parameter gradients.
pub fn reconstruction_loss_and_grad(
    g: &HetGraph,
    h: &EmbeddingTable,
    p: &FastGtnParams,
) -> Result<(f64, FastGtnParams), FastGtnError> {
    let x = h.aligned_to(g)?;
    p.check(x.cols())?;
    let adj = RelationAdjacency::new(g);
    let papers: Vec<usize> = g.indices_of_kind(NodeKind::Paper).collect();
    let trace = run(&adj, &x, p);
    let (loss, d_out) = reconstruction(&trace.output, &x, &papers);
    Ok((loss, backward(&adj, &trace, p, &d_out)))
}

pub fn reconstruction_loss(
    g: &HetGraph,
    h: &EmbeddingTable,
    p: &FastGtnParams,
) -> Result<f64, FastGtnError> {
    let x = h.aligned_to(g)?;
    p.check(x.cols())?;
    let papers: Vec<usize> = g.indices_of_kind(NodeKind::Paper).collect();
    let trace = run(&RelationAdjacency::new(g), &x, p);
    Ok(reconstruction(&trace.output, &x, &papers).0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FastGtnTraining {
    pub params: FastGtnParams,
    /// Loss per epoch before that epoch's update.
    pub loss_history: Vec<f64>,
    /// Loss after the last update.
    pub final_loss: f64,
}

/// Trains the autoencoder to reconstruct frozen paper embeddings.
pub fn train_reconstruction(
    g: &HetGraph,
    h: &EmbeddingTable,
    config: &FastGtnConfig,
) -> Result<FastGtnTraining, FastGtnError> {
    config.validate()?;
    let x = h.aligned_to(g)?;
    let papers: Vec<usize> = g.indices_of_kind(NodeKind::Paper).collect();
    if papers.is_empty() {
        return Err(FastGtnError::NoPapers);
    }
    let mut params = FastGtnParams::init(config, x.cols())?;
    let adj = RelationAdjacency::new(g);
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let mut adam = Adam::new(config.learning_rate, &sizes);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let trace = run(&adj, &x, &params);
        let (loss, d_out) = reconstruction(&trace.output, &x, &papers);
        if !loss.is_finite() {
            return Err(FastGtnError::NonFinite { epoch, loss });
        }
        history.push(loss);
        let grads = backward(&adj, &trace, &params, &d_out);
        let views = grads.tensors();
        adam.step(&mut params.tensors_mut(), &views);
    }
    let final_loss = reconstruction(&run(&adj, &x, &params).output, &x, &papers).0;
    Ok(FastGtnTraining {
        params,
        loss_history: history,
        final_loss,
    })
}

/// Finite-difference check of the reconstruction gradient w.r.t. the mixing
/// logits. Returns the max relative error (floor 1e-6 on the denominator).
pub fn mixing_gradient_check(
    g: &HetGraph,
    h: &EmbeddingTable,
    p: &FastGtnParams,
) -> Result<f64, FastGtnError> {
    const STEP: f64 = 1e-4;
    let (_, grads) = reconstruction_loss_and_grad(g, h, p)?;
    let mut probe = p.clone();
    let mut worst: f64 = 0.0;
    for (e, &a) in grads.mixing_logits.as_slice().iter().enumerate() {
        let orig = probe.mixing_logits.as_slice()[e];
        probe.mixing_logits.as_mut_slice()[e] = orig + STEP;
        let plus = reconstruction_loss(g, h, &probe)?;
        probe.mixing_logits.as_mut_slice()[e] = orig - STEP;
        let minus = reconstruction_loss(g, h, &probe)?;
        probe.mixing_logits.as_mut_slice()[e] = orig;
        let numeric = (plus - minus) / (2.0 * STEP);
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
    }
    Ok(worst)
}

/// Nonnegative weight per edge kind, summing to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationWeightVector {
    weights: [f64; 2],
}

impl RelationWeightVector {
    /// Normalizes the given nonnegative weights to sum to one.
    pub fn new(paper_venue: f64, paper_author: f64) -> Self {
        let sum = paper_venue + paper_author;
        if !(sum > 0.0) || !sum.is_finite() {
            return Self::uniform();
        }
        Self {
            weights: [paper_venue / sum, paper_author / sum],
        }
    }

    /// Raw weights without renormalization (e.g. a rescaled vector).
    pub fn from_raw(paper_venue: f64, paper_author: f64) -> Self {
        Self {
            weights: [paper_venue, paper_author],
        }
    }

    pub fn uniform() -> Self {
        Self {
            weights: [0.5, 0.5],
        }
    }

    pub fn get(&self, kind: EdgeKind) -> f64 {
        self.weights[kind.index()]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_raw(self.weights[0] * factor, self.weights[1] * factor)
    }

    pub fn iter(&self) -> impl Iterator<Item = (EdgeKind, f64)> + '_ {
        EdgeKind::ALL.into_iter().map(|k| (k, self.get(k)))
    }
}

/// Relation weights with the full per-(layer, channel) distributions kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationWeightReport {
    pub weights: RelationWeightVector,
    /// `layers * channels` rows of `[paper_venue, paper_author, self_loop]`.
    pub per_layer_channel: Vec<[f64; MIX_SLOTS]>,
}

/// Softmax each (layer, channel) row, average all rows, drop the self-loop
/// and renormalize over the edge kinds.
pub fn extract_relation_weights(p: &FastGtnParams) -> RelationWeightReport {
    let rows: Vec<[f64; MIX_SLOTS]> = (0..p.mixing_logits.rows())
        .map(|i| {
            let s = softmax(p.mixing_logits.row(i));
            [s[0], s[1], s[2]]
        })
        .collect();
    let n = rows.len().max(1) as f64;
    let mut mean = [0.0; MIX_SLOTS];
    for r in &rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    RelationWeightReport {
        weights: RelationWeightVector::new(mean[0], mean[1]),
        per_layer_channel: rows,
    }
}
