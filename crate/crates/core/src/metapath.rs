//! Metapath mining: seed selection, typed walk enumeration, length-normalized
//! scoring and per-template top-k selection.
//!
//! The length `L` of an instance is its number of graph edges. OAPVPAO
//! instances are APVPA walks whose endpoint authors both carry an
//! organization attribute; the organization hops are attribute lookups and
//! do not count as edges.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::fastgtn::RelationWeightVector;
use crate::graph::{EdgeKind, HetGraph, NodeId, NodeKind};
use crate::math::cosine;
use crate::table::EmbeddingTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetapathTemplate {
    #[serde(rename = "APVPA")]
    Apvpa,
    #[serde(rename = "VPAPV")]
    Vpapv,
    #[serde(rename = "APA")]
    Apa,
    #[serde(rename = "OAPVPAO")]
    Oapvpao,
}

impl MetapathTemplate {
    pub const ALL: [MetapathTemplate; 4] = [
        MetapathTemplate::Apvpa,
        MetapathTemplate::Vpapv,
        MetapathTemplate::Apa,
        MetapathTemplate::Oapvpao,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetapathTemplate::Apvpa => "APVPA",
            MetapathTemplate::Vpapv => "VPAPV",
            MetapathTemplate::Apa => "APA",
            MetapathTemplate::Oapvpao => "OAPVPAO",
        }
    }

    /// Graph node kinds an instance traverses, in order.
    pub fn kind_sequence(self) -> &'static [NodeKind] {
        use NodeKind::{Author as A, Paper as P, Venue as V};
        match self {
            MetapathTemplate::Apvpa | MetapathTemplate::Oapvpao => &[A, P, V, P, A],
            MetapathTemplate::Vpapv => &[V, P, A, P, V],
            MetapathTemplate::Apa => &[A, P, A],
        }
    }

    /// Parses a template name. Letter sequences that are not one of the four
    /// templates are rejected; sequences with an illegal hop say so.
    pub fn parse(name: &str) -> Result<Self, MetapathError> {
        let t = match name.to_ascii_uppercase().as_str() {
            "APVPA" => MetapathTemplate::Apvpa,
            "VPAPV" => MetapathTemplate::Vpapv,
            "APA" => MetapathTemplate::Apa,
            "OAPVPAO" => MetapathTemplate::Oapvpao,
            other => {
                let kinds: Option<Vec<NodeKind>> = other
                    .chars()
                    .filter(|&c| c != 'O')
                    .map(|c| match c {
                        'A' => Some(NodeKind::Author),
                        'P' => Some(NodeKind::Paper),
                        'V' => Some(NodeKind::Venue),
                        _ => None,
                    })
                    .collect();
                let illegal = kinds.is_some_and(|k| {
                    k.windows(2).any(|w| EdgeKind::between(w[0], w[1]).is_none())
                });
                return Err(if illegal {
                    MetapathError::IllegalTemplate(String::from(name))
                } else {
                    MetapathError::UnknownTemplate(String::from(name))
                });
            }
        };
        Ok(t)
    }

    /// Edge kind of every hop.
    pub fn edge_kinds(self) -> Vec<EdgeKind> {
        self.kind_sequence()
            .windows(2)
            .map(|w| EdgeKind::between(w[0], w[1]).expect("templates only use legal hops"))
            .collect()
    }
}

impl fmt::Display for MetapathTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetapathError {
    #[error("unknown metapath template {0}")]
    UnknownTemplate(String),
    #[error("template {0} contains a hop with no edge kind in this schema")]
    IllegalTemplate(String),
    #[error("node {0} has no embedding")]
    MissingEmbedding(NodeId),
    #[error("top_n and enumeration limits must be at least 1")]
    ZeroLimit,
    #[error("no weight for edge kind {0}")]
    MissingWeight(&'static str),
    #[error("gamma must lie in [0, 1], got {0}")]
    Gamma(f64),
    #[error("k must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetapathEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetapathInstance {
    pub template: MetapathTemplate,
    pub nodes: Vec<NodeId>,
    /// Hops between consecutive nodes, in walk order.
    pub edges: Vec<MetapathEdge>,
    /// Endpoint organizations; set only for OAPVPAO.
    pub organizations: Option<(String, String)>,
    pub raw_score: f64,
    pub norm_score: f64,
}

impl MetapathInstance {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Query plus ranked similar nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedPool {
    pub query: NodeId,
    pub seeds: Vec<(NodeId, f64)>,
    /// Nodes whose embedding (or the query's) had zero norm; scored 0.
    pub zero_norm: Vec<NodeId>,
}

impl SeedPool {
    /// A pool of explicitly chosen seeds, kept in the given order.
    pub fn fixed(query: NodeId, seeds: Vec<(NodeId, f64)>) -> Self {
        Self {
            query,
            seeds,
            zero_norm: Vec::new(),
        }
    }
}

fn by_score_then_id(a: &(NodeId, f64), b: &(NodeId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// The `top_n` nodes of `kind` (query excluded) most cosine-similar to the query.
pub fn select_seeds(
    g: &HetGraph,
    emb: &EmbeddingTable,
    query: &NodeId,
    kind: NodeKind,
    top_n: usize,
) -> Result<SeedPool, MetapathError> {
    if top_n == 0 {
        return Err(MetapathError::ZeroLimit);
    }
    let q = emb
        .get(query)
        .ok_or_else(|| MetapathError::MissingEmbedding(query.clone()))?;
    let mut zero_norm = Vec::new();
    let mut scored = Vec::new();
    for id in g.ids_of_kind(kind).filter(|id| *id != query) {
        let v = emb
            .get(id)
            .ok_or_else(|| MetapathError::MissingEmbedding(id.clone()))?;
        let sim = match cosine(q, v) {
            Some(s) => s,
            None => {
                zero_norm.push(id.clone());
                0.0
            }
        };
        scored.push((id.clone(), sim));
    }
    scored.sort_by(by_score_then_id);
    scored.truncate(top_n);
    Ok(SeedPool {
        query: query.clone(),
        seeds: scored,
        zero_norm,
    })
}

/// Caps and masks for [`enumerate_instances`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnumerationOptions {
    pub max_per_seed: usize,
    pub max_total: usize,
    /// Edges treated as absent, as `(paper, other)` pairs.
    pub hidden_edges: BTreeSet<(NodeId, NodeId)>,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self {
            max_per_seed: 200,
            max_total: 200,
            hidden_edges: BTreeSet::new(),
        }
    }
}

impl EnumerationOptions {
    pub fn with_caps(max_per_seed: usize, max_total: usize) -> Self {
        Self {
            max_per_seed,
            max_total,
            ..Self::default()
        }
    }
}

struct Walker<'a> {
    g: &'a HetGraph,
    kinds: &'a [NodeKind],
    hops: Vec<EdgeKind>,
    order: Vec<usize>,
    hidden: BTreeSet<(usize, usize)>,
    need_orgs: bool,
    slots: Vec<usize>,
    found: Vec<Vec<usize>>,
    cap: usize,
}

impl Walker<'_> {
    fn visible(&self, a: usize, b: usize) -> bool {
        let (p, o) = if self.g.node_at(a).kind() == NodeKind::Paper {
            (a, b)
        } else {
            (b, a)
        };
        !self.hidden.contains(&(p, o))
    }

    fn dfs(&mut self, step: usize) {
        if self.found.len() >= self.cap {
            return;
        }
        if step == self.order.len() {
            if self.need_orgs {
                let first = self.g.node_at(self.slots[0]);
                let last = self.g.node_at(self.slots[self.slots.len() - 1]);
                if first.organization().is_none() || last.organization().is_none() {
                    return;
                }
            }
            self.found.push(self.slots.clone());
            return;
        }
        let pos = self.order[step];
        let anchor = self.order[0];
        let (from, hop) = if pos < anchor {
            (pos + 1, self.hops[pos])
        } else {
            (pos - 1, self.hops[pos - 1])
        };
        let from_node = self.slots[from];
        let placed: Vec<usize> = self.order[..step].iter().map(|&p| self.slots[p]).collect();
        for &next in self.g.undirected_indices(from_node, hop) {
            if self.g.node_at(next).kind() != self.kinds[pos]
                || placed.contains(&next)
                || !self.visible(from_node, next)
            {
                continue;
            }
            self.slots[pos] = next;
            self.dfs(step + 1);
            if self.found.len() >= self.cap {
                return;
            }
        }
    }
}

fn instance_from(g: &HetGraph, t: MetapathTemplate, nodes: &[usize]) -> MetapathInstance {
    let hops = t.edge_kinds();
    let ids: Vec<NodeId> = nodes.iter().map(|&i| g.node_at(i).id.clone()).collect();
    let edges = ids
        .windows(2)
        .zip(&hops)
        .map(|(w, &kind)| MetapathEdge {
            src: w[0].clone(),
            dst: w[1].clone(),
            kind,
        })
        .collect();
    let organizations = (t == MetapathTemplate::Oapvpao).then(|| {
        let org = |i: usize| String::from(g.node_at(i).organization().unwrap_or_default());
        (org(nodes[0]), org(nodes[nodes.len() - 1]))
    });
    MetapathInstance {
        template: t,
        nodes: ids,
        edges,
        organizations,
        raw_score: 0.0,
        norm_score: 0.0,
    }
}

/// Depth-bounded typed walks through each seed following the template.
///
/// A seed is placed at the first template position of its kind and the walk
/// extends left to the start, then right to the end, visiting neighbors in
/// sorted order. Nodes never repeat within an instance. Seeds whose kind does
/// not occur in the template yield nothing. Identical node sequences reached
/// from different seeds are kept once.
pub fn enumerate_instances(
    g: &HetGraph,
    t: MetapathTemplate,
    seeds: &SeedPool,
    opts: &EnumerationOptions,
) -> Result<Vec<MetapathInstance>, MetapathError> {
    if opts.max_per_seed == 0 || opts.max_total == 0 {
        return Err(MetapathError::ZeroLimit);
    }
    let kinds = t.kind_sequence();
    let hidden: BTreeSet<(usize, usize)> = opts
        .hidden_edges
        .iter()
        .filter_map(|(a, b)| Some((g.index_of(a)?, g.index_of(b)?)))
        .collect();
    let mut out = Vec::new();
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    for (seed, _) in &seeds.seeds {
        if out.len() >= opts.max_total {
            break;
        }
        let Some(si) = g.index_of(seed) else { continue };
        let Some(anchor) = kinds.iter().position(|&k| k == g.node_at(si).kind()) else {
            continue;
        };
        let mut order = vec![anchor];
        order.extend((0..anchor).rev());
        order.extend(anchor + 1..kinds.len());
        let mut slots = vec![usize::MAX; kinds.len()];
        slots[anchor] = si;
        let mut walker = Walker {
            g,
            kinds,
            hops: t.edge_kinds(),
            order,
            hidden: hidden.clone(),
            need_orgs: t == MetapathTemplate::Oapvpao,
            slots,
            found: Vec::new(),
            cap: opts.max_per_seed,
        };
        walker.dfs(1);
        for path in walker.found {
            if out.len() >= opts.max_total {
                break;
            }
            if seen.insert(path.clone()) {
                out.push(instance_from(g, t, &path));
            }
        }
    }
    Ok(out)
}

/// `raw = sum of edge weights`, `norm = raw / L^gamma` with `L` the edge count.
pub fn score_instance(
    m: &MetapathInstance,
    w: &RelationWeightVector,
    gamma: f64,
) -> Result<MetapathInstance, MetapathError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(MetapathError::Gamma(gamma));
    }
    let mut raw = 0.0;
    for e in &m.edges {
        let weight = w.get(e.kind);
        if weight.is_nan() {
            return Err(MetapathError::MissingWeight(e.kind.key()));
        }
        raw += weight;
    }
    let len = m.edges.len().max(1) as f64;
    let mut scored = m.clone();
    scored.raw_score = raw;
    scored.norm_score = raw / libm::pow(len, gamma);
    Ok(scored)
}

/// Highest-scoring instances per template.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Selection {
    pub per_template: BTreeMap<MetapathTemplate, Vec<MetapathInstance>>,
}

impl Selection {
    pub fn get(&self, t: MetapathTemplate) -> &[MetapathInstance] {
        self.per_template.get(&t).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = &MetapathInstance> {
        self.per_template.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.per_template.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_norm_score(&self) -> f64 {
        self.iter().map(|m| m.norm_score).fold(0.0, f64::max)
    }

    /// Keeps only the listed templates.
    pub fn restricted_to(&self, templates: &[MetapathTemplate]) -> Self {
        Self {
            per_template: self
                .per_template
                .iter()
                .filter(|(t, _)| templates.contains(t))
                .map(|(t, v)| (*t, v.clone()))
                .collect(),
        }
    }
}

/// Descending score; ties by node sequence, then organizations.
pub fn instance_order(a: &MetapathInstance, b: &MetapathInstance) -> Ordering {
    b.norm_score
        .total_cmp(&a.norm_score)
        .then_with(|| a.nodes.cmp(&b.nodes))
        .then_with(|| a.organizations.cmp(&b.organizations))
}

/// Top `k` instances of each template, chosen independently per template.
pub fn stratified_top_k(instances: &[MetapathInstance], k: usize) -> Result<Selection, MetapathError> {
    if k == 0 {
        return Err(MetapathError::ZeroK);
    }
    let mut per_template: BTreeMap<MetapathTemplate, Vec<MetapathInstance>> = BTreeMap::new();
    for m in instances {
        per_template.entry(m.template).or_default().push(m.clone());
    }
    for list in per_template.values_mut() {
        list.sort_by(instance_order);
        list.truncate(k);
    }
    Ok(Selection { per_template })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::toy_graph;
    use crate::graph::{EdgeRecord, NodeRecord, PaperAttrs};
    use crate::math::Matrix;

    fn apa_graph() -> HetGraph {
        let nodes = vec![
            NodeRecord::paper("P1", PaperAttrs::default()),
            NodeRecord::paper("P2", PaperAttrs::default()),
            NodeRecord::author("A1", "Alice", "MIT"),
            NodeRecord::author("A2", "Bob", "MIT"),
            NodeRecord::author("A3", "Carol", ""),
            NodeRecord::venue("V1", "TKDE"),
        ];
        let edges = vec![
            EdgeRecord::new("P1", "V1", EdgeKind::PaperVenue),
            EdgeRecord::new("P2", "V1", EdgeKind::PaperVenue),
            EdgeRecord::new("P1", "A1", EdgeKind::PaperAuthor),
            EdgeRecord::new("P1", "A2", EdgeKind::PaperAuthor),
            EdgeRecord::new("P2", "A1", EdgeKind::PaperAuthor),
            EdgeRecord::new("P2", "A3", EdgeKind::PaperAuthor),
        ];
        HetGraph::build(nodes, edges).unwrap()
    }

    fn pool(ids: &[&str]) -> SeedPool {
        SeedPool::fixed(
            "Q".into(),
            ids.iter().map(|&s| (NodeId::from(s), 1.0)).collect(),
        )
    }

    fn ids(m: &MetapathInstance) -> Vec<&str> {
        m.nodes.iter().map(NodeId::as_str).collect()
    }

    #[test]
    fn apa_from_a1() {
        let g = apa_graph();
        let got = enumerate_instances(&g, MetapathTemplate::Apa, &pool(&["A1"]), &EnumerationOptions::default())
            .unwrap();
        let paths: Vec<Vec<&str>> = got.iter().map(ids).collect();
        assert_eq!(paths, vec![vec!["A1", "P1", "A2"], vec!["A1", "P2", "A3"]]);
        assert_eq!(got[0].edges[0].kind, EdgeKind::PaperAuthor);
    }

    #[test]
    fn caps_and_isolated_seeds() {
        let g = apa_graph();
        let capped = enumerate_instances(
            &g,
            MetapathTemplate::Apa,
            &pool(&["A1"]),
            &EnumerationOptions::with_caps(10, 1),
        )
        .unwrap();
        assert_eq!(capped.len(), 1);

        let nodes = vec![
            NodeRecord::paper("P1", PaperAttrs::default()),
            NodeRecord::author("A9", "Lonely", ""),
            NodeRecord::venue("V1", "v"),
        ];
        let g = HetGraph::build(nodes, vec![EdgeRecord::new("P1", "V1", EdgeKind::PaperVenue)]).unwrap();
        let none = enumerate_instances(&g, MetapathTemplate::Apa, &pool(&["A9"]), &EnumerationOptions::default())
            .unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn oapvpao_requires_both_organizations() {
        let g = apa_graph();
        let all = enumerate_instances(&g, MetapathTemplate::Oapvpao, &pool(&["A1", "A2", "A3"]), &EnumerationOptions::default())
            .unwrap();
        assert!(!all.is_empty());
        for m in &all {
            assert!(!ids(m).contains(&"A3"));
            assert_eq!(m.organizations, Some(("MIT".into(), "MIT".into())));
            assert_eq!(m.edges.len(), 4);
        }
    }

    #[test]
    fn hidden_edges_are_not_walked() {
        let g = apa_graph();
        let mut opts = EnumerationOptions::default();
        opts.hidden_edges.insert(("P2".into(), "A3".into()));
        let got = enumerate_instances(&g, MetapathTemplate::Apa, &pool(&["A1"]), &opts).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(ids(&got[0]), vec!["A1", "P1", "A2"]);
    }

    #[test]
    fn paper_seed_anchors_inside_the_walk() {
        let g = toy_graph();
        let got = enumerate_instances(&g, MetapathTemplate::Apvpa, &pool(&["P1"]), &EnumerationOptions::default())
            .unwrap();
        for m in &got {
            assert_eq!(m.nodes[1].as_str(), "P1");
        }
        // A in {A1, A2}, V1, P2, A1 -> A2-P1-V1-P2-A1 only (A1 repeats otherwise)
        let paths: Vec<Vec<&str>> = got.iter().map(ids).collect();
        assert_eq!(paths, vec![vec!["A2", "P1", "V1", "P2", "A1"]]);
    }

    #[test]
    fn template_parsing() {
        assert_eq!(MetapathTemplate::parse("apvpa"), Ok(MetapathTemplate::Apvpa));
        assert!(matches!(MetapathTemplate::parse("AVA"), Err(MetapathError::IllegalTemplate(_))));
        assert!(matches!(MetapathTemplate::parse("APAPA"), Err(MetapathError::UnknownTemplate(_))));
        assert_eq!(
            MetapathTemplate::Apvpa.edge_kinds(),
            vec![EdgeKind::PaperAuthor, EdgeKind::PaperVenue, EdgeKind::PaperVenue, EdgeKind::PaperAuthor]
        );
    }

    #[test]
    fn seeds_rank_by_cosine() {
        let g = toy_graph();
        // id order: A1 A2 P1 P2 P3 V1 V2
        let m = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
        ]);
        let emb = EmbeddingTable::from_graph_rows(&g, m);
        let pool = select_seeds(&g, &emb, &"A1".into(), NodeKind::Paper, 10).unwrap();
        let order: Vec<&str> = pool.seeds.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(order, vec!["P1", "P2", "P3"]);
        assert_eq!(pool.seeds[0].1, 1.0);
        assert_eq!(pool.zero_norm, vec![NodeId::from("P3")]);

        let venues = select_seeds(&g, &emb, &"P1".into(), NodeKind::Venue, 1).unwrap();
        assert_eq!(venues.seeds, vec![(NodeId::from("V1"), 1.0)]);
        assert_eq!(
            select_seeds(&g, &emb, &"P1".into(), NodeKind::Venue, 0),
            Err(MetapathError::ZeroLimit)
        );
    }

    fn apvpa_instance() -> MetapathInstance {
        let g = toy_graph();
        instance_from(
            &g,
            MetapathTemplate::Apvpa,
            &[
                g.index_of(&"A2".into()).unwrap(),
                g.index_of(&"P1".into()).unwrap(),
                g.index_of(&"V1".into()).unwrap(),
                g.index_of(&"P2".into()).unwrap(),
                g.index_of(&"A1".into()).unwrap(),
            ],
        )
    }

    #[test]
    fn scoring_hand_arithmetic() {
        let w = RelationWeightVector::from_raw(0.3, 0.2);
        let m = score_instance(&apvpa_instance(), &w, 1.0).unwrap();
        assert!((m.raw_score - 1.0).abs() < 1e-12);
        assert!((m.norm_score - 0.25).abs() < 1e-12);
        let m0 = score_instance(&apvpa_instance(), &w, 0.0).unwrap();
        assert_eq!(m0.norm_score, m0.raw_score);
        assert!(matches!(score_instance(&apvpa_instance(), &w, 1.5), Err(MetapathError::Gamma(_))));
        let nan = RelationWeightVector::from_raw(f64::NAN, 0.2);
        assert_eq!(
            score_instance(&apvpa_instance(), &nan, 0.5),
            Err(MetapathError::MissingWeight("paper_venue"))
        );
    }

    #[test]
    fn stratified_keeps_each_template() {
        let mk = |t, name: &str, score| MetapathInstance {
            template: t,
            nodes: vec![NodeId::from(name)],
            edges: vec![],
            organizations: None,
            raw_score: score,
            norm_score: score,
        };
        let pool = vec![
            mk(MetapathTemplate::Apa, "a", 9.0),
            mk(MetapathTemplate::Apa, "b", 8.0),
            mk(MetapathTemplate::Apa, "c", 7.0),
            mk(MetapathTemplate::Vpapv, "x", 0.1),
            mk(MetapathTemplate::Vpapv, "y", 0.3),
            mk(MetapathTemplate::Vpapv, "z", 0.3),
        ];
        let sel = stratified_top_k(&pool, 2).unwrap();
        let apa: Vec<&str> = sel.get(MetapathTemplate::Apa).iter().map(|m| m.nodes[0].as_str()).collect();
        let vp: Vec<&str> = sel.get(MetapathTemplate::Vpapv).iter().map(|m| m.nodes[0].as_str()).collect();
        assert_eq!(apa, vec!["a", "b"]);
        assert_eq!(vp, vec!["y", "z"]);
        assert!(sel.get(MetapathTemplate::Apvpa).is_empty());
        assert_eq!(stratified_top_k(&pool, 5).unwrap().get(MetapathTemplate::Apa).len(), 3);
        assert_eq!(stratified_top_k(&pool, 0), Err(MetapathError::ZeroK));
    }
}
