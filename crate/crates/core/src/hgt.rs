//! Heterogeneous graph transformer with hand-written backpropagation.
//!
//! Layer `l` computes, for every node `i` with neighbors,
//!
//! ```text
//! h_i = sum_{(j, r) incident to i} alpha_{i,j,r} * W_r (V_{kind j} h_j)
//! alpha_{i,j,r} = softmax_{(j,r)} ( mu_r * <Q_{kind i} h_i, K_{kind j} h_j> / sqrt(d_head) )
//! ```
//!
//! per head. With `residual` enabled the aggregate goes through GELU and a
//! per-kind output projection before being added to the layer input. Nodes
//! without neighbors pass their input through unchanged. Relations are edge
//! kinds taken in both directions (a venue attends over its papers, a paper
//! over its venue and authors).

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::Adam;
use crate::graph::{EdgeKind, HetGraph, NodeKind};
use crate::math::{dot, gelu, gelu_grad, sigmoid, softmax_backward, softmax_in_place, softplus, Matrix};
use crate::table::{EmbeddingTable, NodeFeatureTable, TableError};

const KINDS: usize = 3;
const RELATIONS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HgtConfig {
    pub layers: usize,
    pub heads: usize,
    /// Requested hidden size. The effective size is rounded down to a
    /// multiple of `heads`; see [`HgtConfig::effective_hidden`].
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negative_samples_per_positive: usize,
    pub seed: u64,
    /// GELU + output projection + residual after each layer. Off gives the
    /// bare attention aggregation.
    pub residual: bool,
}

impl Default for HgtConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            heads: 8,
            hidden_dim: 387,
            epochs: 100,
            learning_rate: 1e-3,
            negative_samples_per_positive: 1,
            seed: 0,
            residual: true,
        }
    }
}

impl HgtConfig {
    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.heads.max(1)
    }

    pub fn effective_hidden(&self) -> usize {
        self.head_dim() * self.heads
    }

    pub fn validate(&self) -> Result<(), HgtError> {
        if self.layers == 0 || self.heads == 0 || self.hidden_dim == 0 {
            return Err(HgtError::Config("layers, heads and hidden_dim must be positive"));
        }
        if self.head_dim() == 0 {
            return Err(HgtError::Config("hidden_dim must be at least heads"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(HgtError::Config("learning_rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HgtError {
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("feature width {got} does not match parameter input width {expected}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("graph has no venues")]
    NoVenues,
    #[error("graph has no paper-venue edges")]
    NoPositives,
    #[error("non-finite loss {loss} at epoch {epoch}")]
    NonFinite { epoch: usize, loss: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HgtLayer {
    pub query: [Matrix; KINDS],
    pub key: [Matrix; KINDS],
    pub value: [Matrix; KINDS],
    pub output: [Matrix; KINDS],
    /// `W_r`, indexed by [`EdgeKind::index`].
    pub relation: [Matrix; RELATIONS],
    /// Attention scaling `mu_r`.
    pub scale: [f64; RELATIONS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HgtParams {
    pub heads: usize,
    pub residual: bool,
    /// Per-kind input projection, `hidden x in_dim`.
    pub input: [Matrix; KINDS],
    pub layers: Vec<HgtLayer>,
}

fn per_kind<F: FnMut() -> Matrix>(mut f: F) -> [Matrix; KINDS] {
    [f(), f(), f()]
}

impl HgtParams {
    /// Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization; `mu_r = 1`.
    pub fn init(config: &HgtConfig, in_dim: usize) -> Result<Self, HgtError> {
        config.validate()?;
        let d = config.effective_hidden();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let input = per_kind(|| Matrix::uniform_fan_in(d, in_dim, &mut rng));
        let layers = (0..config.layers)
            .map(|_| HgtLayer {
                query: per_kind(|| Matrix::uniform_fan_in(d, d, &mut rng)),
                key: per_kind(|| Matrix::uniform_fan_in(d, d, &mut rng)),
                value: per_kind(|| Matrix::uniform_fan_in(d, d, &mut rng)),
                output: per_kind(|| Matrix::uniform_fan_in(d, d, &mut rng)),
                relation: [
                    Matrix::uniform_fan_in(d, d, &mut rng),
                    Matrix::uniform_fan_in(d, d, &mut rng),
                ],
                scale: [1.0; RELATIONS],
            })
            .collect();
        Ok(Self {
            heads: config.heads,
            residual: config.residual,
            input,
            layers,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.input[0].cols()
    }

    pub fn hidden(&self) -> usize {
        self.input[0].rows()
    }

    pub fn head_dim(&self) -> usize {
        self.hidden() / self.heads
    }

    /// Same shapes, all zeros (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        let zk = |a: &[Matrix; KINDS]| [z(&a[0]), z(&a[1]), z(&a[2])];
        Self {
            heads: self.heads,
            residual: self.residual,
            input: zk(&self.input),
            layers: self
                .layers
                .iter()
                .map(|l| HgtLayer {
                    query: zk(&l.query),
                    key: zk(&l.key),
                    value: zk(&l.value),
                    output: zk(&l.output),
                    relation: [z(&l.relation[0]), z(&l.relation[1])],
                    scale: [0.0; RELATIONS],
                })
                .collect(),
        }
    }

    /// Flat views of every trainable tensor in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.input.iter().map(Matrix::as_slice).collect();
        for l in &self.layers {
            for group in [&l.query, &l.key, &l.value, &l.output] {
                out.extend(group.iter().map(Matrix::as_slice));
            }
            out.extend(l.relation.iter().map(Matrix::as_slice));
            out.push(&l.scale[..]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.input.iter_mut().map(Matrix::as_mut_slice).collect();
        for l in &mut self.layers {
            for group in [&mut l.query, &mut l.key, &mut l.value, &mut l.output] {
                out.extend(group.iter_mut().map(Matrix::as_mut_slice));
            }
            out.extend(l.relation.iter_mut().map(Matrix::as_mut_slice));
            out.push(&mut l.scale[..]);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Incoming (neighbor, relation) pairs for every node, sorted by relation then neighbor.
#[derive(Debug, Clone)]
pub struct Incidence {
    kinds: Vec<usize>,
    lists: Vec<Vec<(usize, usize)>>,
}

impl Incidence {
    pub fn new(g: &HetGraph) -> Self {
        let kinds = g.nodes().iter().map(|n| n.kind().index()).collect();
        let lists = (0..g.node_count())
            .map(|i| {
                EdgeKind::ALL
                    .iter()
                    .flat_map(|&r| {
                        g.undirected_indices(i, r)
                            .iter()
                            .map(move |&j| (j, r.index()))
                    })
                    .collect()
            })
            .collect();
        Self { kinds, lists }
    }

    pub fn of(&self, i: usize) -> &[(usize, usize)] {
        &self.lists[i]
    }
}

struct LayerCache {
    input: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    /// `W_r v_j` for every node, per relation.
    msg: [Matrix; RELATIONS],
    /// Per node: `incidences x heads` attention weights, row-major.
    alpha: Vec<Vec<f64>>,
    agg: Matrix,
    act: Matrix,
}

/// Forward pass with the intermediates needed for backpropagation.
pub struct ForwardTrace {
    features: Matrix,
    caches: Vec<LayerCache>,
    output: Matrix,
}

impl ForwardTrace {
    /// Final node representations in graph order.
    pub fn output(&self) -> &Matrix {
        &self.output
    }

    /// Attention weights of `node` at `layer`: one entry per incident
    /// `(neighbor, relation)` pair, each holding one weight per head.
    pub fn attention(&self, layer: usize, node: usize, heads: usize) -> Vec<&[f64]> {
        self.caches[layer].alpha[node].chunks(heads).collect()
    }
}

fn project_rows(x: &Matrix, weights: &[Matrix; KINDS], kinds: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), weights[0].rows());
    for i in 0..x.rows() {
        let y = weights[kinds[i]].mul_vec(x.row(i));
        out.row_mut(i).copy_from_slice(&y);
    }
    out
}

fn check_dims(params: &HgtParams, feats: &Matrix) -> Result<(), HgtError> {
    if feats.cols() != params.in_dim() {
        return Err(HgtError::Dimension {
            expected: params.in_dim(),
            got: feats.cols(),
        });
    }
    if params.heads == 0 || !params.hidden().is_multiple_of(params.heads) {
        return Err(HgtError::Config("hidden size must be a multiple of heads"));
    }
    Ok(())
}

/// Runs the encoder on features already aligned to graph order.
pub fn forward_trace(
    inc: &Incidence,
    features: &Matrix,
    params: &HgtParams,
) -> Result<ForwardTrace, HgtError> {
    check_dims(params, features)?;
    let kinds = &inc.kinds;
    let n = features.rows();
    let heads = params.heads;
    let dk = params.head_dim();
    let inv_sqrt = 1.0 / libm::sqrt(dk as f64);

    let mut h = project_rows(features, &params.input, kinds);
    let mut caches = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let q = project_rows(&h, &layer.query, kinds);
        let k = project_rows(&h, &layer.key, kinds);
        let v = project_rows(&h, &layer.value, kinds);
        let msg = [v.matmul_t(&layer.relation[0]), v.matmul_t(&layer.relation[1])];

        let d = h.cols();
        let mut agg = Matrix::zeros(n, d);
        let mut alpha = Vec::with_capacity(n);
        for i in 0..n {
            let list = inc.of(i);
            let mut a = vec![0.0; list.len() * heads];
            if list.is_empty() {
                alpha.push(a);
                continue;
            }
            for hd in 0..heads {
                let span = hd * dk..(hd + 1) * dk;
                let mut scores: Vec<f64> = list
                    .iter()
                    .map(|&(j, r)| {
                        layer.scale[r] * inv_sqrt * dot(&q.row(i)[span.clone()], &k.row(j)[span.clone()])
                    })
                    .collect();
                softmax_in_place(&mut scores);
                let out = &mut agg.row_mut(i)[span.clone()];
                for (e, (&(j, r), &w)) in list.iter().zip(&scores).enumerate() {
                    a[e * heads + hd] = w;
                    for (o, &m) in out.iter_mut().zip(&msg[r].row(j)[span.clone()]) {
                        *o += w * m;
                    }
                }
            }
            alpha.push(a);
        }

        let mut act = Matrix::zeros(n, d);
        let mut next = h.clone();
        for i in 0..n {
            if inc.of(i).is_empty() {
                continue;
            }
            if params.residual {
                let a: Vec<f64> = agg.row(i).iter().map(|&z| gelu(z)).collect();
                let o = layer.output[kinds[i]].mul_vec(&a);
                for (x, y) in next.row_mut(i).iter_mut().zip(&o) {
                    *x += y;
                }
                act.row_mut(i).copy_from_slice(&a);
            } else {
                next.row_mut(i).copy_from_slice(agg.row(i));
            }
        }
        caches.push(LayerCache {
            input: h,
            q,
            k,
            v,
            msg,
            alpha,
            agg,
            act,
        });
        h = next;
    }
    Ok(ForwardTrace {
        features: features.clone(),
        caches,
        output: h,
    })
}

/// Gradients of a scalar loss w.r.t. every parameter, given `d loss / d output`.
pub fn backward(
    inc: &Incidence,
    trace: &ForwardTrace,
    params: &HgtParams,
    d_output: &Matrix,
) -> HgtParams {
    let kinds = &inc.kinds;
    let heads = params.heads;
    let dk = params.head_dim();
    let inv_sqrt = 1.0 / libm::sqrt(dk as f64);
    let mut grads = params.zeros_like();
    let mut dh = d_output.clone();

    for (li, (layer, cache)) in params.layers.iter().zip(&trace.caches).enumerate().rev() {
        let n = dh.rows();
        let d = dh.cols();
        let g = &mut grads.layers[li];
        let mut din = Matrix::zeros(n, d);
        let mut dagg = Matrix::zeros(n, d);
        for i in 0..n {
            if inc.of(i).is_empty() {
                for (a, &b) in din.row_mut(i).iter_mut().zip(dh.row(i)) {
                    *a += b;
                }
                continue;
            }
            if params.residual {
                for (a, &b) in din.row_mut(i).iter_mut().zip(dh.row(i)) {
                    *a += b;
                }
                g.output[kinds[i]].add_outer(dh.row(i), cache.act.row(i), 1.0);
                let da = layer.output[kinds[i]].tmul_vec(dh.row(i));
                for ((o, &z), &dav) in dagg.row_mut(i).iter_mut().zip(cache.agg.row(i)).zip(&da) {
                    *o = dav * gelu_grad(z);
                }
            } else {
                dagg.row_mut(i).copy_from_slice(dh.row(i));
            }
        }

        let mut dq = Matrix::zeros(n, d);
        let mut dk_m = Matrix::zeros(n, d);
        let mut dmsg = [Matrix::zeros(n, d), Matrix::zeros(n, d)];
        for i in 0..n {
            let list = inc.of(i);
            if list.is_empty() {
                continue;
            }
            let alpha = &cache.alpha[i];
            for hd in 0..heads {
                let span = hd * dk..(hd + 1) * dk;
                let dout = &dagg.row(i)[span.clone()];
                let p: Vec<f64> = (0..list.len()).map(|e| alpha[e * heads + hd]).collect();
                let dp: Vec<f64> = list
                    .iter()
                    .map(|&(j, r)| dot(dout, &cache.msg[r].row(j)[span.clone()]))
                    .collect();
                for (e, &(j, r)) in list.iter().enumerate() {
                    for (m, &o) in dmsg[r].row_mut(j)[span.clone()].iter_mut().zip(dout) {
                        *m += p[e] * o;
                    }
                }
                let ds = softmax_backward(&p, &dp);
                for (e, &(j, r)) in list.iter().enumerate() {
                    let qi = &cache.q.row(i)[span.clone()];
                    let kj = &cache.k.row(j)[span.clone()];
                    g.scale[r] += ds[e] * inv_sqrt * dot(qi, kj);
                    let c = ds[e] * layer.scale[r] * inv_sqrt;
                    if c == 0.0 {
                        continue;
                    }
                    for (x, &y) in dq.row_mut(i)[span.clone()].iter_mut().zip(kj) {
                        *x += c * y;
                    }
                    for (x, &y) in dk_m.row_mut(j)[span.clone()].iter_mut().zip(qi) {
                        *x += c * y;
                    }
                }
            }
        }

        // msg_r = V W_r^T  =>  dW_r = dmsg_r^T V, dV = dmsg_r W_r
        let mut dv = Matrix::zeros(n, d);
        for r in 0..RELATIONS {
            g.relation[r].add_scaled(&dmsg[r].tmatmul(&cache.v), 1.0);
            dv.add_scaled(&dmsg[r].matmul(&layer.relation[r]), 1.0);
        }
        for i in 0..n {
            let x = cache.input.row(i);
            let kd = kinds[i];
            for (dmat, gmat, w) in [
                (&dq, &mut g.query, &layer.query),
                (&dk_m, &mut g.key, &layer.key),
                (&dv, &mut g.value, &layer.value),
            ] {
                let row = dmat.row(i);
                if row.iter().all(|&v| v == 0.0) {
                    continue;
                }
                gmat[kd].add_outer(row, x, 1.0);
                let back = w[kd].tmul_vec(row);
                for (a, b) in din.row_mut(i).iter_mut().zip(&back) {
                    *a += b;
                }
            }
        }
        dh = din;
    }

    for i in 0..dh.rows() {
        grads.input[kinds[i]].add_outer(dh.row(i), trace.features.row(i), 1.0);
    }
    grads
}

/// Runs the encoder and wraps the result as an embedding table.
pub fn hgt_forward(
    g: &HetGraph,
    feats: &NodeFeatureTable,
    params: &HgtParams,
) -> Result<EmbeddingTable, HgtError> {
    let x = feats.aligned_to(g)?;
    let trace = forward_trace(&Incidence::new(g), &x, params)?;
    Ok(EmbeddingTable::from_graph_rows(g, trace.output))
}

/// Labeled (paper, venue) pairs in graph indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinkBatch {
    pub pairs: Vec<(usize, usize, f64)>,
}

impl LinkBatch {
    /// Every observed paper-venue edge as a positive, plus `negatives`
    /// uniformly drawn corrupted venues per positive.
    pub fn sample(g: &HetGraph, negatives: usize, rng: &mut ChaCha8Rng) -> Self {
        let venues: Vec<usize> = g.indices_of_kind(NodeKind::Venue).collect();
        let mut pairs = Vec::new();
        for p in g.indices_of_kind(NodeKind::Paper) {
            let Some(v) = g.venue_of(p) else { continue };
            pairs.push((p, v, 1.0));
            if venues.len() < 2 {
                continue;
            }
            for _ in 0..negatives {
                let corrupt = loop {
                    let c = *venues.choose(rng).expect("non-empty");
                    if c != v {
                        break c;
                    }
                };
                pairs.push((p, corrupt, 0.0));
            }
        }
        Self { pairs }
    }
}

/// Mean binary cross-entropy of `sigmoid(<h_p, h_v>)` and its gradient
/// w.r.t. the node representations.
pub fn link_loss(h: &Matrix, batch: &LinkBatch) -> (f64, Matrix) {
    let mut grad = Matrix::zeros(h.rows(), h.cols());
    if batch.pairs.is_empty() {
        return (0.0, grad);
    }
    let n = batch.pairs.len() as f64;
    let mut loss = 0.0;
    for &(p, v, y) in &batch.pairs {
        let logit = dot(h.row(p), h.row(v));
        loss += softplus(logit) - y * logit;
        let coef = (sigmoid(logit) - y) / n;
        let hv = h.row(v).to_vec();
        let hp = h.row(p).to_vec();
        for (g, x) in grad.row_mut(p).iter_mut().zip(&hv) {
            *g += coef * x;
        }
        for (g, x) in grad.row_mut(v).iter_mut().zip(&hp) {
            *g += coef * x;
        }
    }
    (loss / n, grad)
}

/// Loss and parameter gradients for one batch.
pub fn loss_and_grad(
    inc: &Incidence,
    features: &Matrix,
    params: &HgtParams,
    batch: &LinkBatch,
) -> Result<(f64, HgtParams), HgtError> {
    let trace = forward_trace(inc, features, params)?;
    let (loss, d_out) = link_loss(trace.output(), batch);
    Ok((loss, backward(inc, &trace, params, &d_out)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HgtTraining {
    pub params: HgtParams,
    pub embeddings: EmbeddingTable,
    /// Mean loss per epoch, measured before that epoch's update.
    pub loss_history: Vec<f64>,
}

/// Full-batch link-prediction training on paper-venue edges with Adam.
pub fn train_link_prediction(
    g: &HetGraph,
    feats: &NodeFeatureTable,
    config: &HgtConfig,
) -> Result<HgtTraining, HgtError> {
    config.validate()?;
    if g.indices_of_kind(NodeKind::Venue).next().is_none() {
        return Err(HgtError::NoVenues);
    }
    if g.stats().paper_venue == 0 {
        return Err(HgtError::NoPositives);
    }
    let x = feats.aligned_to(g)?;
    let mut params = HgtParams::init(config, x.cols())?;
    let inc = Incidence::new(g);
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let mut adam = Adam::new(config.learning_rate, &sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_11d7);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let batch = LinkBatch::sample(g, config.negative_samples_per_positive, &mut rng);
        let (loss, grads) = loss_and_grad(&inc, &x, &params, &batch)?;
        if !loss.is_finite() {
            return Err(HgtError::NonFinite { epoch, loss });
        }
        history.push(loss);
        let grad_views = grads.tensors();
        adam.step(&mut params.tensors_mut(), &grad_views);
    }
    let trace = forward_trace(&inc, &x, &params)?;
    Ok(HgtTraining {
        embeddings: EmbeddingTable::from_graph_rows(g, trace.output),
        params,
        loss_history: history,
    })
}

/// Central finite-difference check of [`loss_and_grad`] over every parameter.
/// Returns the maximum of `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)`.
pub fn gradient_check(
    params: &HgtParams,
    g: &HetGraph,
    feats: &NodeFeatureTable,
    batch: &LinkBatch,
) -> Result<f64, HgtError> {
    const STEP: f64 = 1e-4;
    let x = feats.aligned_to(g)?;
    let inc = Incidence::new(g);
    let (_, analytic) = loss_and_grad(&inc, &x, params, batch)?;
    let analytic: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.to_vec()).collect();

    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (t, grads) in analytic.iter().enumerate() {
        for (e, &a) in grads.iter().enumerate() {
            let orig = probe.tensors()[t][e];
            probe.tensors_mut()[t][e] = orig + STEP;
            let plus = link_loss(forward_trace(&inc, &x, &probe)?.output(), batch).0;
            probe.tensors_mut()[t][e] = orig - STEP;
            let minus = link_loss(forward_trace(&inc, &x, &probe)?.output(), batch).0;
            probe.tensors_mut()[t][e] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// Area under the ROC curve of `<h_p, h_v>` for true venues against every
/// other venue, with ties counted as one half.
pub fn venue_ranking_auc(g: &HetGraph, emb: &EmbeddingTable) -> Result<f64, HgtError> {
    let h = emb.aligned_to(g)?;
    let venues: Vec<usize> = g.indices_of_kind(NodeKind::Venue).collect();
    let (mut wins, mut total) = (0.0, 0.0);
    for p in g.indices_of_kind(NodeKind::Paper) {
        let Some(v) = g.venue_of(p) else { continue };
        let pos = dot(h.row(p), h.row(v));
        for &c in venues.iter().filter(|&&c| c != v) {
            let neg = dot(h.row(p), h.row(c));
            total += 1.0;
            if pos > neg {
                wins += 1.0;
            } else if pos == neg {
                wins += 0.5;
            }
        }
    }
    Ok(if total == 0.0 { 1.0 } else { wins / total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_features, HashEmbedder};
    use crate::fixtures::{toy_graph, triad_graph};

    fn small_config(residual: bool) -> HgtConfig {
        HgtConfig {
            layers: 2,
            heads: 2,
            hidden_dim: 4,
            epochs: 0,
            learning_rate: 1e-2,
            negative_samples_per_positive: 1,
            seed: 3,
            residual,
        }
    }

    #[test]
    fn paper_config_rounds_hidden_to_heads() {
        let c = HgtConfig::default();
        assert_eq!((c.layers, c.heads, c.epochs), (2, 8, 100));
        assert_eq!(c.learning_rate, 1e-3);
        assert_eq!(c.head_dim(), 48);
        assert_eq!(c.effective_hidden(), 384);
    }

    #[test]
    fn embedding_dim_equals_effective_hidden() {
        let g = toy_graph();
        let (f, _) = build_features(&g, &HashEmbedder::new(6, 0)).unwrap();
        let params = HgtParams::init(&HgtConfig { hidden_dim: 16, ..HgtConfig::default() }, f.dim()).unwrap();
        let emb = hgt_forward(&g, &f, &params).unwrap();
        assert_eq!(emb.dim(), 16);
        assert_eq!(emb.len(), g.node_count());
    }

    #[test]
    fn single_neighbor_attention_is_exactly_one() {
        let g = triad_graph();
        let (f, _) = build_features(&g, &HashEmbedder::new(4, 0)).unwrap();
        let params = HgtParams::init(&small_config(true), f.dim()).unwrap();
        let x = f.aligned_to(&g).unwrap();
        let trace = forward_trace(&Incidence::new(&g), &x, &params).unwrap();
        let author = g.index_of(&"A1".into()).unwrap();
        for w in trace.attention(0, author, params.heads) {
            assert!(w.iter().all(|&a| a == 1.0));
        }
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let g = toy_graph();
        let (f, _) = build_features(&g, &HashEmbedder::new(6, 0)).unwrap();
        let params = HgtParams::init(&small_config(true), 5).unwrap();
        assert!(matches!(
            hgt_forward(&g, &f, &params),
            Err(HgtError::Dimension { expected: 5, got: 8 })
        ));
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let g = toy_graph();
        let (f, _) = build_features(&g, &HashEmbedder::new(6, 0)).unwrap();
        let c = small_config(true);
        let out = train_link_prediction(&g, &f, &c).unwrap();
        assert_eq!(out.params, HgtParams::init(&c, f.dim()).unwrap());
        assert!(out.loss_history.is_empty());
    }

    #[test]
    fn empty_batch_gives_zero_relation_gradients() {
        let g = toy_graph();
        let (f, _) = build_features(&g, &HashEmbedder::new(6, 0)).unwrap();
        let params = HgtParams::init(&small_config(true), f.dim()).unwrap();
        let x = f.aligned_to(&g).unwrap();
        let (loss, grads) =
            loss_and_grad(&Incidence::new(&g), &x, &params, &LinkBatch::default()).unwrap();
        assert_eq!(loss, 0.0);
        for l in &grads.layers {
            assert!(l.relation.iter().all(|m| m.as_slice().iter().all(|&v| v == 0.0)));
        }
    }

    #[test]
    fn gradient_check_bare_and_residual() {
        let g = toy_graph();
        let (f, _) = build_features(&g, &HashEmbedder::new(5, 2)).unwrap();
        for residual in [false, true] {
            let params = HgtParams::init(&small_config(residual), f.dim()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let batch = LinkBatch::sample(&g, 1, &mut rng);
            let err = gradient_check(&params, &g, &f, &batch).unwrap();
            assert!(err <= 1e-4, "residual={residual}: {err}");
        }
    }

    #[test]
    fn missing_venues_is_an_error() {
        let g = HetGraph::build(alloc::vec![], alloc::vec![]).unwrap();
        let f = NodeFeatureTable::from_graph_rows(&g, Matrix::zeros(0, 3));
        assert_eq!(
            train_link_prediction(&g, &f, &small_config(true)),
            Err(HgtError::NoVenues)
        );
    }
}
