//! Small deterministic graphs used by tests, examples and the acceptance suite.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{EdgeKind, EdgeRecord, HetGraph, NodeRecord, PaperAttrs};

/// Three papers, two authors, two venues.
///
/// ```text
/// P1 -> V1, P2 -> V1, P3 -> V2
/// P1 -> A1, P1 -> A2, P2 -> A1, P3 -> A2
/// ```
pub fn toy_graph() -> HetGraph {
    let nodes = vec![
        NodeRecord::paper(
            "P1",
            PaperAttrs {
                title: "Graph Reasoning with Language Models".into(),
                year: Some(2023),
                cited_count: 12,
                fwci: Some(1.5),
                keywords: vec!["graph".into(), "llm".into()],
                abstract_text: "We combine graph structure with language model reasoning.".into(),
            },
        ),
        NodeRecord::paper(
            "P2",
            PaperAttrs {
                title: "Heterogeneous Graph Transformers".into(),
                year: Some(2021),
                cited_count: 40,
                fwci: Some(2.1),
                keywords: vec!["gnn".into(), "attention".into()],
                abstract_text: "Type-aware attention for heterogeneous graphs.".into(),
            },
        ),
        NodeRecord::paper(
            "P3",
            PaperAttrs {
                title: "Metapath Embeddings".into(),
                year: Some(2020),
                cited_count: 7,
                fwci: None,
                keywords: vec!["metapath".into()],
                abstract_text: "Random walks guided by metapaths.".into(),
            },
        ),
        NodeRecord::author("A1", "Alice", "MIT"),
        NodeRecord::author("A2", "Bob", "Stanford"),
        NodeRecord::venue("V1", "TKDE"),
        NodeRecord::venue("V2", "KDD"),
    ];
    let edges = vec![
        EdgeRecord::new("P1", "V1", EdgeKind::PaperVenue),
        EdgeRecord::new("P2", "V1", EdgeKind::PaperVenue),
        EdgeRecord::new("P3", "V2", EdgeKind::PaperVenue),
        EdgeRecord::new("P1", "A1", EdgeKind::PaperAuthor),
        EdgeRecord::new("P1", "A2", EdgeKind::PaperAuthor),
        EdgeRecord::new("P2", "A1", EdgeKind::PaperAuthor),
        EdgeRecord::new("P3", "A2", EdgeKind::PaperAuthor),
    ];
    HetGraph::build(nodes, edges).expect("toy graph is valid")
}

/// One paper, one author, one venue.
pub fn triad_graph() -> HetGraph {
    let nodes = vec![
        NodeRecord::paper(
            "P1",
            PaperAttrs {
                title: "Only Paper".into(),
                year: Some(2022),
                cited_count: 3,
                fwci: Some(0.5),
                ..PaperAttrs::default()
            },
        ),
        NodeRecord::author("A1", "Ann", "ETH"),
        NodeRecord::venue("V1", "WWW"),
    ];
    let edges = vec![
        EdgeRecord::new("P1", "V1", EdgeKind::PaperVenue),
        EdgeRecord::new("P1", "A1", EdgeKind::PaperAuthor),
    ];
    HetGraph::build(nodes, edges).expect("triad graph is valid")
}

/// Shape of a generated graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub papers: usize,
    pub authors: usize,
    pub venues: usize,
    pub max_authors_per_paper: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            papers: 20,
            authors: 12,
            venues: 3,
            max_authors_per_paper: 3,
            seed: 17,
        }
    }
}

const TOPICS: &[&[&str]] = &[
    &["graph", "neural", "network", "node", "embedding", "message"],
    &["language", "model", "prompt", "reasoning", "token", "chain"],
    &["database", "query", "index", "transaction", "storage", "join"],
    &["vision", "image", "pixel", "segmentation", "camera", "detection"],
    &["security", "attack", "privacy", "encryption", "malware", "threat"],
    &["robot", "control", "motion", "planning", "sensor", "manipulation"],
];

const ORGS: &[&str] = &["MIT", "Stanford", "ETH Zurich", "Tsinghua", "Oxford", "CMU"];

/// Venue-clustered random graph: each venue has its own topic vocabulary,
/// authors have a home venue, and papers draw most authors from their
/// venue's community. Every paper has exactly one venue and at least one author.
pub fn synthetic_graph(spec: SyntheticSpec) -> HetGraph {
    assert!(spec.venues >= 1 && spec.authors >= 1 && spec.max_authors_per_paper >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut nodes = Vec::new();
    let mut edges = Vec::new();

    for v in 0..spec.venues {
        let topic = TOPICS[v % TOPICS.len()];
        nodes.push(NodeRecord::venue(
            &format!("V{v:03}"),
            &format!("Journal of {}{}", capitalize(topic[0]), suffix(v)),
        ));
    }
    let home: Vec<usize> = (0..spec.authors).map(|a| a % spec.venues).collect();
    for a in 0..spec.authors {
        let org = ORGS[(a / spec.venues.max(1)) % ORGS.len()];
        nodes.push(NodeRecord::author(
            &format!("A{a:03}"),
            &format!("Author {a}"),
            org,
        ));
    }
    for p in 0..spec.papers {
        let v = p % spec.venues;
        let topic = TOPICS[v % TOPICS.len()];
        let words: Vec<&str> = (0..3).map(|_| *topic.choose(&mut rng).unwrap()).collect();
        let title = format!("{} {} {} study {p}", capitalize(words[0]), words[1], words[2]);
        let keywords = topic.choose_multiple(&mut rng, 2).map(|w| String::from(*w)).collect();
        let pid = format!("P{p:03}");
        nodes.push(NodeRecord::paper(
            &pid,
            PaperAttrs {
                title,
                year: Some(2015 + (p % 10) as u16),
                cited_count: rng.random_range(0..200),
                fwci: Some(libm::round(rng.random_range(0.0..4.0) * 100.0) / 100.0),
                keywords,
                abstract_text: format!("We study {} and {}.", words[0], words[2]),
            },
        ));
        edges.push(EdgeRecord::new(&pid, &format!("V{v:03}"), EdgeKind::PaperVenue));

        let community: Vec<usize> = (0..spec.authors).filter(|&a| home[a] == v).collect();
        let pool: &[usize] = if community.is_empty() {
            &[]
        } else {
            &community
        };
        let n_auth = rng.random_range(1..=spec.max_authors_per_paper);
        let mut chosen: Vec<usize> = Vec::new();
        for _ in 0..n_auth {
            let a = if !pool.is_empty() && rng.random_bool(0.85) {
                *pool.choose(&mut rng).unwrap()
            } else {
                rng.random_range(0..spec.authors)
            };
            if !chosen.contains(&a) {
                chosen.push(a);
            }
        }
        for a in chosen {
            edges.push(EdgeRecord::new(&pid, &format!("A{a:03}"), EdgeKind::PaperAuthor));
        }
    }
    HetGraph::build(nodes, edges).expect("synthetic graph is valid")
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn suffix(v: usize) -> String {
    if v < TOPICS.len() {
        String::new()
    } else {
        format!(" {}", v / TOPICS.len() + 1)
    }
}
