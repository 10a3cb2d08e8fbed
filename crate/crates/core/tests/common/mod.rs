//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::BTreeSet;

use hetgcot_core::hgt::HgtParams;
use hetgcot_core::llm::{RankedAnswer, RankedItem};
use hetgcot_core::math::Matrix;
use hetgcot_core::metapath::{MetapathInstance, MetapathTemplate};
use hetgcot_core::{HetGraph, NodeId, NodeKind};

fn matvec(m: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|r| (0..m.cols()).map(|c| m.get(r, c) * x[c]).sum())
        .collect()
}

fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
}

/// Straight transcription of the HGT layer: per-kind projections, per-head
/// softmax over incident (neighbor, relation) pairs scaled by
/// `mu_r / sqrt(d_head)`, messages `W_r v_j`, then either `h + O gelu(agg)`
/// (residual) or `agg`. Nodes without neighbors pass through unchanged.
pub fn hgt_reference(g: &HetGraph, x: &[Vec<f64>], p: &HgtParams) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let kind = |i: usize| g.node_at(i).kind().index();
    let mut incident: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for e in g.edges() {
        let a = g.index_of(&e.src).unwrap();
        let b = g.index_of(&e.dst).unwrap();
        incident[a].push((b, e.kind.index()));
        incident[b].push((a, e.kind.index()));
    }
    let mut h: Vec<Vec<f64>> = (0..n).map(|i| matvec(&p.input[kind(i)], &x[i])).collect();
    let heads = p.heads;
    for layer in &p.layers {
        let d = h[0].len();
        let dk = d / heads;
        let q: Vec<Vec<f64>> = (0..n).map(|i| matvec(&layer.query[kind(i)], &h[i])).collect();
        let k: Vec<Vec<f64>> = (0..n).map(|i| matvec(&layer.key[kind(i)], &h[i])).collect();
        let v: Vec<Vec<f64>> = (0..n).map(|i| matvec(&layer.value[kind(i)], &h[i])).collect();
        let mut next = h.clone();
        for i in 0..n {
            if incident[i].is_empty() {
                continue;
            }
            let mut agg = vec![0.0; d];
            for hd in 0..heads {
                let lo = hd * dk;
                let scores: Vec<f64> = incident[i]
                    .iter()
                    .map(|&(j, r)| {
                        let s: f64 = (lo..lo + dk).map(|t| q[i][t] * k[j][t]).sum();
                        layer.scale[r] * s / (dk as f64).sqrt()
                    })
                    .collect();
                let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let ex: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                let z: f64 = ex.iter().sum();
                for (e, &(j, r)) in incident[i].iter().enumerate() {
                    let msg = matvec(&layer.relation[r], &v[j]);
                    for t in lo..lo + dk {
                        agg[t] += ex[e] / z * msg[t];
                    }
                }
            }
            next[i] = if p.residual {
                let a: Vec<f64> = agg.iter().map(|&z| gelu(z)).collect();
                let o = matvec(&layer.output[kind(i)], &a);
                h[i].iter().zip(&o).map(|(x, y)| x + y).collect()
            } else {
                agg
            };
        }
        h = next;
    }
    h
}

/// Every node tuple matching the template's kinds, joined by visible edges,
/// without repeats, with some seed at its anchor position. Uses only the
/// raw edge list.
pub fn exhaustive_instances(
    g: &HetGraph,
    t: MetapathTemplate,
    seeds: &[NodeId],
    hidden: &BTreeSet<(NodeId, NodeId)>,
) -> BTreeSet<Vec<NodeId>> {
    let kinds = t.kind_sequence();
    let mut edges: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    for e in g.edges() {
        if hidden.contains(&(e.src.clone(), e.dst.clone())) {
            continue;
        }
        edges.insert((e.src.clone(), e.dst.clone()));
        edges.insert((e.dst.clone(), e.src.clone()));
    }
    let by_kind = |k: NodeKind| -> Vec<NodeId> { g.ids_of_kind(k).cloned().collect() };
    let mut tuples: Vec<Vec<NodeId>> = vec![Vec::new()];
    for &k in kinds {
        let options = by_kind(k);
        let mut grown = Vec::new();
        for tuple in &tuples {
            for o in &options {
                if tuple.contains(o) {
                    continue;
                }
                if let Some(last) = tuple.last() {
                    if !edges.contains(&(last.clone(), o.clone())) {
                        continue;
                    }
                }
                let mut t2 = tuple.clone();
                t2.push(o.clone());
                grown.push(t2);
            }
        }
        tuples = grown;
    }
    let org = |id: &NodeId| g.node(id).and_then(|n| n.organization()).is_some();
    tuples
        .into_iter()
        .filter(|tuple| {
            seeds.iter().any(|s| {
                let Some(sk) = g.kind_of(s) else { return false };
                let Some(anchor) = kinds.iter().position(|&k| k == sk) else {
                    return false;
                };
                &tuple[anchor] == s
            })
        })
        .filter(|tuple| t != MetapathTemplate::Oapvpao || (org(&tuple[0]) && org(tuple.last().unwrap())))
        .collect()
}

/// Sorts each template's instances by descending score then node sequence
/// with a plain comparison sort and keeps the first `k`.
pub fn brute_force_top_k(instances: &[MetapathInstance], k: usize) -> Vec<Vec<NodeId>> {
    let mut out = Vec::new();
    for t in MetapathTemplate::ALL {
        let mut group: Vec<&MetapathInstance> = instances.iter().filter(|m| m.template == t).collect();
        for i in 0..group.len() {
            for j in 0..group.len() - 1 - i {
                let a = group[j];
                let b = group[j + 1];
                let swap = a.norm_score < b.norm_score || (a.norm_score == b.norm_score && a.nodes > b.nodes);
                if swap {
                    group.swap(j, j + 1);
                }
            }
        }
        out.extend(group.into_iter().take(k).map(|m| m.nodes.clone()));
    }
    out
}

/// A ranked answer whose entries are node ids; `"?"` stands for an unmatched entry.
pub fn ranked(pred: &[&str]) -> RankedAnswer {
    RankedAnswer {
        items: pred
            .iter()
            .enumerate()
            .map(|(i, &p)| RankedItem {
                rank: i + 1,
                answer: p.to_string(),
                candidate: (p != "?").then(|| NodeId::from(p)),
                tier: None,
            })
            .collect(),
    }
}

pub struct MetricCase {
    pub gold: &'static [&'static str],
    pub pred: &'static [&'static str],
    pub hit: f64,
    pub h1: f64,
    pub f1: f64,
    pub ndcg: f64,
}

/// Hand-computed metric values. `l3 = 1/log2(3)` is the rank-2 discount and
/// `0.5` the rank-3 discount.
pub fn metric_cases() -> Vec<MetricCase> {
    let l3 = 1.0 / 3f64.log2();
    let c = |gold, pred, hit, h1, f1, ndcg| MetricCase {
        gold,
        pred,
        hit,
        h1,
        f1,
        ndcg,
    };
    vec![
        c(&["X"], &["X", "Y", "Z"], 1.0, 1.0, 0.5, 1.0),
        c(&["X"], &["Y", "Z", "X"], 1.0, 0.0, 0.5, 0.5),
        c(&["X"], &["X"], 1.0, 1.0, 1.0, 1.0),
        c(&["X"], &["Y", "Z", "W"], 0.0, 0.0, 0.0, 0.0),
        c(&["X"], &["Y", "X", "Z"], 1.0, 0.0, 0.5, l3),
        c(&["X", "Y"], &["X", "Y", "Z"], 1.0, 1.0, 0.8, 1.0),
        c(&["X", "Y"], &["Z", "X", "Y"], 1.0, 0.0, 0.8, (l3 + 0.5) / (1.0 + l3)),
        c(&["X", "Y", "Z"], &["X", "W", "V"], 1.0, 1.0, 1.0 / 3.0, 1.0 / (1.0 + l3 + 0.5)),
        c(&["X", "Y", "Z"], &["Z", "Y", "X"], 1.0, 1.0, 1.0, 1.0),
        c(&["X"], &["?", "X", "?"], 1.0, 0.0, 0.5, l3),
        c(&["X", "Y"], &["Y"], 1.0, 1.0, 2.0 / 3.0, 1.0),
        c(&["X", "Y", "Z"], &["W", "V", "Y"], 1.0, 0.0, 1.0 / 3.0, 0.5 / (1.0 + l3 + 0.5)),
    ]
}

/// Population mean and variance.
pub fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n)
}
