//! Typed scholarly graph: papers, authors and venues joined by
//! paper-venue and paper-author edges.
//!
//! Nodes are stored sorted by [`NodeId`]; every node also has a dense index
//! in that order, which the encoders use as their row index. Adjacency lists
//! are kept sorted so every downstream computation is deterministic.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Opaque, non-empty node identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Result<Self, GraphError> {
        let id = id.into();
        if id.is_empty() {
            return Err(GraphError::EmptyId);
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    /// Panics on an empty string; use [`NodeId::new`] for untrusted input.
    fn from(s: &str) -> Self {
        Self::new(s).expect("node id must be non-empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Paper,
    Author,
    Venue,
}

impl NodeKind {
    pub const ALL: [NodeKind; 3] = [NodeKind::Paper, NodeKind::Author, NodeKind::Venue];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Paper => "paper",
            NodeKind::Author => "author",
            NodeKind::Venue => "venue",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "paper" => Some(NodeKind::Paper),
            "author" => Some(NodeKind::Author),
            "venue" => Some(NodeKind::Venue),
            _ => None,
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    #[serde(rename = "paper-venue")]
    PaperVenue,
    #[serde(rename = "paper-author")]
    PaperAuthor,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 2] = [EdgeKind::PaperVenue, EdgeKind::PaperAuthor];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Wire name used in edge files (`type: 'paper-venue'`).
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::PaperVenue => "paper-venue",
            EdgeKind::PaperAuthor => "paper-author",
        }
    }

    /// Snake-case key used in weight files and reports.
    pub fn key(self) -> &'static str {
        match self {
            EdgeKind::PaperVenue => "paper_venue",
            EdgeKind::PaperAuthor => "paper_author",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "paper-venue" | "paper_venue" => Some(EdgeKind::PaperVenue),
            "paper-author" | "paper_author" => Some(EdgeKind::PaperAuthor),
            _ => None,
        }
    }

    pub fn dst_kind(self) -> NodeKind {
        match self {
            EdgeKind::PaperVenue => NodeKind::Venue,
            EdgeKind::PaperAuthor => NodeKind::Author,
        }
    }

    /// Edge kind joining two node kinds, in either order.
    pub fn between(a: NodeKind, b: NodeKind) -> Option<Self> {
        match (a, b) {
            (NodeKind::Paper, NodeKind::Venue) | (NodeKind::Venue, NodeKind::Paper) => {
                Some(EdgeKind::PaperVenue)
            }
            (NodeKind::Paper, NodeKind::Author) | (NodeKind::Author, NodeKind::Paper) => {
                Some(EdgeKind::PaperAuthor)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Follow edges from `src` to `dst`.
    Out,
    /// Follow edges from `dst` back to `src`.
    In,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PaperAttrs {
    pub title: String,
    pub year: Option<u16>,
    pub cited_count: u64,
    pub fwci: Option<f64>,
    pub keywords: Vec<String>,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NodeAttrs {
    Paper(PaperAttrs),
    Author { name: String, organization: String },
    Venue { name: String },
}

impl NodeAttrs {
    pub fn kind(&self) -> NodeKind {
        match self {
            NodeAttrs::Paper(_) => NodeKind::Paper,
            NodeAttrs::Author { .. } => NodeKind::Author,
            NodeAttrs::Venue { .. } => NodeKind::Venue,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub attrs: NodeAttrs,
}

impl NodeRecord {
    pub fn paper(id: &str, attrs: PaperAttrs) -> Self {
        Self {
            id: id.into(),
            attrs: NodeAttrs::Paper(attrs),
        }
    }

    pub fn author(id: &str, name: &str, organization: &str) -> Self {
        Self {
            id: id.into(),
            attrs: NodeAttrs::Author {
                name: name.to_string(),
                organization: organization.to_string(),
            },
        }
    }

    pub fn venue(id: &str, name: &str) -> Self {
        Self {
            id: id.into(),
            attrs: NodeAttrs::Venue {
                name: name.to_string(),
            },
        }
    }

    pub fn kind(&self) -> NodeKind {
        self.attrs.kind()
    }

    /// Human-readable label: paper title, author or venue name.
    /// Empty when the attribute is missing.
    pub fn display_name(&self) -> &str {
        match &self.attrs {
            NodeAttrs::Paper(p) => &p.title,
            NodeAttrs::Author { name, .. } | NodeAttrs::Venue { name } => name,
        }
    }

    pub fn as_paper(&self) -> Option<&PaperAttrs> {
        match &self.attrs {
            NodeAttrs::Paper(p) => Some(p),
            _ => None,
        }
    }

    pub fn organization(&self) -> Option<&str> {
        match &self.attrs {
            NodeAttrs::Author { organization, .. } if !organization.is_empty() => {
                Some(organization)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
}

impl EdgeRecord {
    pub fn new(src: &str, dst: &str, kind: EdgeKind) -> Self {
        Self {
            src: src.into(),
            dst: dst.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("node id must be non-empty")]
    EmptyId,
    #[error("duplicate node id {id} (record {position})")]
    DuplicateNode { id: NodeId, position: usize },
    #[error("edge record {position}: endpoint {id} does not exist")]
    DanglingEndpoint { id: NodeId, position: usize },
    #[error("edge record {position}: {kind} edge {src} -> {dst} connects {src_kind} to {dst_kind}")]
    KindMismatch {
        position: usize,
        kind: &'static str,
        src: NodeId,
        dst: NodeId,
        src_kind: &'static str,
        dst_kind: &'static str,
    },
    #[error("edge record {position}: duplicate edge {src} -> {dst}")]
    DuplicateEdge {
        position: usize,
        src: NodeId,
        dst: NodeId,
    },
    #[error("papers without exactly one venue edge: {}", format_venue_violations(.0))]
    VenueCount(Vec<(NodeId, usize)>),
    #[error("unknown node {0}")]
    NotFound(NodeId),
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    BadRatio(f64),
    #[error("graph has no papers to split")]
    NoPapers,
}

fn format_venue_violations(v: &[(NodeId, usize)]) -> String {
    let mut out = String::new();
    for (i, (id, n)) in v.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(id.as_str());
        out.push_str(" (");
        out.push_str(&n.to_string());
        out.push(')');
    }
    out
}

/// A record dropped by lenient construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub position: usize,
    pub error: GraphError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub papers: usize,
    pub authors: usize,
    pub venues: usize,
    pub paper_venue: usize,
    pub paper_author: usize,
}

/// Validated, immutable heterogeneous graph.
#[derive(Debug, Clone, PartialEq)]
pub struct HetGraph {
    nodes: Vec<NodeRecord>,
    index: BTreeMap<NodeId, usize>,
    edges: Vec<EdgeRecord>,
    // [edge kind][node] -> sorted node indices
    out_adj: [Vec<Vec<usize>>; 2],
    in_adj: [Vec<Vec<usize>>; 2],
}

impl HetGraph {
    /// Builds and validates a graph. Any bad record aborts construction.
    pub fn build(nodes: Vec<NodeRecord>, edges: Vec<EdgeRecord>) -> Result<Self, GraphError> {
        let (graph, rejections) = Self::assemble(nodes, edges, false)?;
        debug_assert!(rejections.is_empty());
        Ok(graph)
    }

    /// Like [`HetGraph::build`], but drops duplicate nodes and invalid edges
    /// and reports them. The one-venue-per-paper rule is still enforced.
    pub fn build_lenient(
        nodes: Vec<NodeRecord>,
        edges: Vec<EdgeRecord>,
    ) -> Result<(Self, Vec<Rejection>), GraphError> {
        Self::assemble(nodes, edges, true)
    }

    fn assemble(
        nodes: Vec<NodeRecord>,
        edges: Vec<EdgeRecord>,
        lenient: bool,
    ) -> Result<(Self, Vec<Rejection>), GraphError> {
        let mut rejections = Vec::new();
        let mut reject = |position: usize, error: GraphError| -> Result<(), GraphError> {
            if lenient {
                rejections.push(Rejection { position, error });
                Ok(())
            } else {
                Err(error)
            }
        };

        let mut by_id: BTreeMap<NodeId, NodeRecord> = BTreeMap::new();
        for (position, node) in nodes.into_iter().enumerate() {
            if by_id.contains_key(&node.id) {
                reject(
                    position,
                    GraphError::DuplicateNode {
                        id: node.id.clone(),
                        position,
                    },
                )?;
                continue;
            }
            by_id.insert(node.id.clone(), node);
        }
        let nodes: Vec<NodeRecord> = by_id.into_values().collect();
        let index: BTreeMap<NodeId, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();

        let mut seen: BTreeSet<(usize, usize)> = BTreeSet::new();
        let mut kept = Vec::with_capacity(edges.len());
        for (position, edge) in edges.into_iter().enumerate() {
            let Some(&s) = index.get(&edge.src) else {
                reject(
                    position,
                    GraphError::DanglingEndpoint {
                        id: edge.src.clone(),
                        position,
                    },
                )?;
                continue;
            };
            let Some(&d) = index.get(&edge.dst) else {
                reject(
                    position,
                    GraphError::DanglingEndpoint {
                        id: edge.dst.clone(),
                        position,
                    },
                )?;
                continue;
            };
            let (sk, dk) = (nodes[s].kind(), nodes[d].kind());
            if sk != NodeKind::Paper || dk != edge.kind.dst_kind() {
                reject(
                    position,
                    GraphError::KindMismatch {
                        position,
                        kind: edge.kind.as_str(),
                        src: edge.src.clone(),
                        dst: edge.dst.clone(),
                        src_kind: sk.as_str(),
                        dst_kind: dk.as_str(),
                    },
                )?;
                continue;
            }
            if !seen.insert((s, d)) {
                reject(
                    position,
                    GraphError::DuplicateEdge {
                        position,
                        src: edge.src.clone(),
                        dst: edge.dst.clone(),
                    },
                )?;
                continue;
            }
            kept.push((s, d, edge));
        }

        let n = nodes.len();
        let mut out_adj = [alloc::vec![Vec::new(); n], alloc::vec![Vec::new(); n]];
        let mut in_adj = [alloc::vec![Vec::new(); n], alloc::vec![Vec::new(); n]];
        for (s, d, e) in &kept {
            out_adj[e.kind.index()][*s].push(*d);
            in_adj[e.kind.index()][*d].push(*s);
        }
        for lists in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            lists.iter_mut().for_each(|l| l.sort_unstable());
        }

        let violations: Vec<(NodeId, usize)> = nodes
            .iter()
            .enumerate()
            .filter(|(_, node)| node.kind() == NodeKind::Paper)
            .filter_map(|(i, node)| {
                let c = out_adj[EdgeKind::PaperVenue.index()][i].len();
                (c != 1).then(|| (node.id.clone(), c))
            })
            .collect();
        if !violations.is_empty() {
            return Err(GraphError::VenueCount(violations));
        }

        let mut edges: Vec<EdgeRecord> = kept.into_iter().map(|(_, _, e)| e).collect();
        edges.sort();
        Ok((
            Self {
                nodes,
                index,
                edges,
                out_adj,
                in_adj,
            },
            rejections,
        ))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Nodes sorted by id; position equals the dense index.
    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    /// Edges sorted by (src, dst, kind).
    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn index_of(&self, id: &NodeId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn try_index(&self, id: &NodeId) -> Result<usize, GraphError> {
        self.index_of(id).ok_or_else(|| GraphError::NotFound(id.clone()))
    }

    pub fn node(&self, id: &NodeId) -> Option<&NodeRecord> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    pub fn node_at(&self, idx: usize) -> &NodeRecord {
        &self.nodes[idx]
    }

    /// `phi`: node kind lookup.
    pub fn kind_of(&self, id: &NodeId) -> Option<NodeKind> {
        self.node(id).map(NodeRecord::kind)
    }

    /// `psi`: edge kind between two nodes, if an edge joins them (either direction).
    pub fn edge_kind(&self, a: &NodeId, b: &NodeId) -> Option<EdgeKind> {
        let (ia, ib) = (self.index_of(a)?, self.index_of(b)?);
        EdgeKind::ALL.into_iter().find(|k| {
            self.out_adj[k.index()][ia].binary_search(&ib).is_ok()
                || self.out_adj[k.index()][ib].binary_search(&ia).is_ok()
        })
    }

    pub fn ids_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &NodeId> {
        self.nodes
            .iter()
            .filter(move |n| n.kind() == kind)
            .map(|n| &n.id)
    }

    pub fn indices_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.kind() == kind)
            .map(|(i, _)| i)
    }

    /// Neighbor ids under `rel` in the given direction, sorted by id.
    pub fn neighbors(
        &self,
        n: &NodeId,
        rel: EdgeKind,
        direction: Direction,
    ) -> Result<Vec<NodeId>, GraphError> {
        let i = self.try_index(n)?;
        Ok(self
            .neighbor_indices(i, rel, direction)
            .iter()
            .map(|&j| self.nodes[j].id.clone())
            .collect())
    }

    pub fn neighbor_indices(&self, i: usize, rel: EdgeKind, direction: Direction) -> &[usize] {
        match direction {
            Direction::Out => &self.out_adj[rel.index()][i],
            Direction::In => &self.in_adj[rel.index()][i],
        }
    }

    /// Neighbors under `rel` ignoring direction, sorted. Since every edge
    /// starts at a paper, at most one direction is non-empty for any node.
    pub fn undirected_indices(&self, i: usize, rel: EdgeKind) -> &[usize] {
        let out = &self.out_adj[rel.index()][i];
        if out.is_empty() {
            &self.in_adj[rel.index()][i]
        } else {
            out
        }
    }

    /// The venue index of a paper.
    pub fn venue_of(&self, paper: usize) -> Option<usize> {
        self.out_adj[EdgeKind::PaperVenue.index()][paper].first().copied()
    }

    pub fn stats(&self) -> GraphStats {
        let mut s = GraphStats {
            nodes: self.nodes.len(),
            edges: self.edges.len(),
            ..GraphStats::default()
        };
        for n in &self.nodes {
            match n.kind() {
                NodeKind::Paper => s.papers += 1,
                NodeKind::Author => s.authors += 1,
                NodeKind::Venue => s.venues += 1,
            }
        }
        for e in &self.edges {
            match e.kind {
                EdgeKind::PaperVenue => s.paper_venue += 1,
                EdgeKind::PaperAuthor => s.paper_author += 1,
            }
        }
        s
    }

    /// Deterministic train/test partition of paper ids. The training side
    /// receives `ceil(ratio * papers)` ids.
    pub fn split(&self, ratio: f64, seed: u64) -> Result<Split, GraphError> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(GraphError::BadRatio(ratio));
        }
        let mut papers: Vec<NodeId> = self.ids_of_kind(NodeKind::Paper).cloned().collect();
        if papers.is_empty() {
            return Err(GraphError::NoPapers);
        }
        let n_train = train_size(papers.len(), ratio);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        papers.shuffle(&mut rng);
        let test = papers.split_off(n_train);
        Ok(Split {
            train: papers.into_iter().collect(),
            test: test.into_iter().collect(),
        })
    }
}

/// `ceil(ratio * n)` computed without floating drift on exact products.
pub fn train_size(n: usize, ratio: f64) -> usize {
    let exact = ratio * n as f64;
    let rounded = libm::round(exact);
    let size = if (exact - rounded).abs() < 1e-9 {
        rounded
    } else {
        libm::ceil(exact)
    };
    (size as usize).min(n)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: BTreeSet<NodeId>,
    pub test: BTreeSet<NodeId>,
}

/// A graph with some `(paper, other)` edges treated as absent.
#[derive(Debug, Clone)]
pub struct MaskedView<'a> {
    g: &'a HetGraph,
    hidden: BTreeSet<(usize, usize)>,
}

impl<'a> MaskedView<'a> {
    /// Pairs naming unknown nodes are ignored.
    pub fn new(g: &'a HetGraph, hidden: &BTreeSet<(NodeId, NodeId)>) -> Self {
        let hidden = hidden
            .iter()
            .filter_map(|(a, b)| Some((g.index_of(a)?, g.index_of(b)?)))
            .collect();
        Self { g, hidden }
    }

    pub fn graph(&self) -> &'a HetGraph {
        self.g
    }

    pub fn visible(&self, paper: usize, other: usize) -> bool {
        !self.hidden.contains(&(paper, other))
    }

    pub fn authors_of(&self, paper: usize) -> Vec<usize> {
        self.g
            .neighbor_indices(paper, EdgeKind::PaperAuthor, Direction::Out)
            .iter()
            .copied()
            .filter(|&a| self.visible(paper, a))
            .collect()
    }

    pub fn papers_of(&self, other: usize) -> Vec<usize> {
        let rel = match self.g.node_at(other).kind() {
            NodeKind::Author => EdgeKind::PaperAuthor,
            NodeKind::Venue => EdgeKind::PaperVenue,
            NodeKind::Paper => return Vec::new(),
        };
        self.g
            .neighbor_indices(other, rel, Direction::In)
            .iter()
            .copied()
            .filter(|&p| self.visible(p, other))
            .collect()
    }

    pub fn venue_of(&self, paper: usize) -> Option<usize> {
        self.g.venue_of(paper).filter(|&v| self.visible(paper, v))
    }
}
