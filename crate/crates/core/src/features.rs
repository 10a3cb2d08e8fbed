//! Initial node features: `LayerNorm(concat(text embedding, numerics))`.
//!
//! Papers contribute `[cited_count, fwci]` as numerics. Authors and venues
//! get `[0, 0]` so every node kind shares one width (`d_text + 2`).

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{HetGraph, NodeAttrs, NodeId, NodeRecord};
use crate::math::Matrix;
use crate::table::NodeFeatureTable;

pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Numeric attributes appended to the text vector.
pub const NUMERIC_FEATURES: usize = 2;

/// Failure reported by a text embedder.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct EmbedError(pub String);

/// Maps text to a fixed-width vector. Implementations must be deterministic
/// and always return `dimension()` values.
pub trait TextEmbedder {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
}

impl<T: TextEmbedder + ?Sized> TextEmbedder for &T {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        (**self).embed(text)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("embedding node {id}: {source}")]
    Embed { id: NodeId, source: EmbedError },
    #[error("embedder returned {got} values for node {id}, expected {expected}")]
    Dimension {
        id: NodeId,
        expected: usize,
        got: usize,
    },
    #[error("node {id}: {field} is not a finite number")]
    NonNumeric { id: NodeId, field: &'static str },
    #[error("embedder dimension must be positive")]
    ZeroDimension,
}

/// Seeded pseudo-random projection of lower-cased alphanumeric tokens.
///
/// Each token hashes to its own unit-variance random vector; a text is the
/// sum of its token vectors scaled by `1/sqrt(token count)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    fn token_vector(&self, token: &str, out: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()) ^ self.seed);
        let bound = libm::sqrt(3.0);
        for v in out.iter_mut() {
            *v += rng.random_range(-bound..bound);
        }
    }
}

impl TextEmbedder for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let mut out = alloc::vec![0.0; self.dim];
        let mut count = 0usize;
        let lowered = text.to_lowercase();
        for token in lowered
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            self.token_vector(token, &mut out);
            count += 1;
        }
        if count > 0 {
            let scale = 1.0 / libm::sqrt(count as f64);
            out.iter_mut().for_each(|v| *v *= scale);
        }
        Ok(out)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Text fed to the embedder: papers use title, abstract and keywords;
/// venues their name; authors name and organization. Empty parts are
/// skipped and the rest joined by single spaces.
pub fn node_text(node: &NodeRecord) -> String {
    let mut parts: Vec<&str> = Vec::new();
    match &node.attrs {
        NodeAttrs::Paper(p) => {
            parts.push(&p.title);
            parts.push(&p.abstract_text);
            parts.extend(p.keywords.iter().map(String::as_str));
        }
        NodeAttrs::Venue { name } => parts.push(name),
        NodeAttrs::Author { name, organization } => {
            parts.push(name);
            parts.push(organization);
        }
    }
    let mut out = String::new();
    for p in parts.into_iter().filter(|p| !p.is_empty()) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(p);
    }
    out
}

pub fn embed_text<E: TextEmbedder>(e: &E, node: &NodeRecord) -> Result<Vec<f64>, FeatureError> {
    let v = e.embed(&node_text(node)).map_err(|source| FeatureError::Embed {
        id: node.id.clone(),
        source,
    })?;
    if v.len() != e.dimension() {
        return Err(FeatureError::Dimension {
            id: node.id.clone(),
            expected: e.dimension(),
            got: v.len(),
        });
    }
    Ok(v)
}

/// `(x - mean) / sqrt(var + eps)` with the population variance.
pub fn layer_norm(x: &mut [f64], eps: f64) {
    if x.is_empty() {
        return;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let denom = libm::sqrt(var + eps);
    x.iter_mut().for_each(|v| *v = (*v - mean) / denom);
}

/// Numeric block for a node, or an error for non-finite values.
fn numerics(node: &NodeRecord, missing_fwci: &mut Vec<NodeId>) -> Result<[f64; 2], FeatureError> {
    let NodeAttrs::Paper(p) = &node.attrs else {
        return Ok([0.0, 0.0]);
    };
    let fwci = match p.fwci {
        Some(v) if v.is_finite() => v,
        Some(_) => {
            return Err(FeatureError::NonNumeric {
                id: node.id.clone(),
                field: "fwci",
            })
        }
        None => {
            missing_fwci.push(node.id.clone());
            0.0
        }
    };
    Ok([p.cited_count as f64, fwci])
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureReport {
    /// Papers whose fwci was absent and defaulted to 0.
    pub missing_fwci: Vec<NodeId>,
}

pub fn build_features<E: TextEmbedder>(
    g: &HetGraph,
    e: &E,
) -> Result<(NodeFeatureTable, FeatureReport), FeatureError> {
    let d_text = e.dimension();
    if d_text == 0 {
        return Err(FeatureError::ZeroDimension);
    }
    let dim = d_text + NUMERIC_FEATURES;
    let mut data = Matrix::zeros(g.node_count(), dim);
    let mut report = FeatureReport::default();
    for (i, node) in g.nodes().iter().enumerate() {
        let text = embed_text(e, node)?;
        let nums = numerics(node, &mut report.missing_fwci)?;
        let row = data.row_mut(i);
        row[..d_text].copy_from_slice(&text);
        row[d_text..].copy_from_slice(&nums);
        layer_norm(row, LAYER_NORM_EPS);
    }
    Ok((NodeFeatureTable::from_graph_rows(g, data), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::toy_graph;
    use crate::graph::{EdgeKind, EdgeRecord, PaperAttrs};
    use alloc::vec;

    /// Counts of 'a'..='z' in the lower-cased text.
    struct CharHistogram;

    impl TextEmbedder for CharHistogram {
        fn dimension(&self) -> usize {
            26
        }
        fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
            let mut v = vec![0.0; 26];
            for c in text.to_lowercase().chars() {
                if c.is_ascii_lowercase() {
                    v[(c as u8 - b'a') as usize] += 1.0;
                }
            }
            Ok(v)
        }
    }

    struct Failing;
    impl TextEmbedder for Failing {
        fn dimension(&self) -> usize {
            4
        }
        fn embed(&self, _: &str) -> Result<Vec<f64>, EmbedError> {
            Err(EmbedError("model offline".into()))
        }
    }

    fn paper(title: &str) -> NodeRecord {
        NodeRecord::paper(
            "P",
            PaperAttrs {
                title: title.into(),
                ..PaperAttrs::default()
            },
        )
    }

    #[test]
    fn histogram_of_title() {
        let v = embed_text(&CharHistogram, &paper("ab")).unwrap();
        let mut expected = vec![0.0; 26];
        expected[0] = 1.0;
        expected[1] = 1.0;
        assert_eq!(v, expected);
    }

    #[test]
    fn embedding_is_deterministic_and_input_only() {
        let e = HashEmbedder::new(16, 3);
        let a = embed_text(&e, &paper("A")).unwrap();
        assert_eq!(a, embed_text(&e, &paper("A")).unwrap());
        let mut other = paper("A");
        other.id = "Q".into();
        assert_eq!(a, embed_text(&e, &other).unwrap());
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn node_text_concatenation() {
        let p = NodeRecord::paper(
            "P",
            PaperAttrs {
                title: "Graph".into(),
                abstract_text: "".into(),
                keywords: vec!["gnn".into(), "llm".into()],
                ..PaperAttrs::default()
            },
        );
        assert_eq!(node_text(&p), "Graph gnn llm");
        assert_eq!(node_text(&NodeRecord::author("A", "Ann", "MIT")), "Ann MIT");
        assert_eq!(node_text(&NodeRecord::venue("V", "TKDE")), "TKDE");
    }

    #[test]
    fn layer_norm_hand_oracle() {
        let mut x = [1.0, 2.0, 3.0];
        layer_norm(&mut x, LAYER_NORM_EPS);
        let sigma = (2.0f64 / 3.0 + 1e-5).sqrt();
        for (got, raw) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - (raw - 2.0) / sigma).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_vector_normalizes_to_zero() {
        let mut x = [4.0; 5];
        layer_norm(&mut x, LAYER_NORM_EPS);
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn table_dim_is_text_plus_two() {
        let g = toy_graph();
        let (t, _) = build_features(&g, &HashEmbedder::new(768, 0)).unwrap();
        assert_eq!(t.dim(), 770);
        assert_eq!(t.len(), g.node_count());
    }

    #[test]
    fn one_d_text_toy_matches_hand_layer_norm() {
        // d_text = 1 with text value 1, cited_count 2, fwci 3.
        struct One;
        impl TextEmbedder for One {
            fn dimension(&self) -> usize {
                1
            }
            fn embed(&self, _: &str) -> Result<Vec<f64>, EmbedError> {
                Ok(vec![1.0])
            }
        }
        let nodes = vec![
            NodeRecord::paper(
                "P1",
                PaperAttrs {
                    cited_count: 2,
                    fwci: Some(3.0),
                    ..PaperAttrs::default()
                },
            ),
            NodeRecord::venue("V1", "v"),
        ];
        let g = HetGraph::build(nodes, vec![EdgeRecord::new("P1", "V1", EdgeKind::PaperVenue)])
            .unwrap();
        let (t, _) = build_features(&g, &One).unwrap();
        let sigma = (2.0f64 / 3.0 + 1e-5).sqrt();
        let row = t.get(&"P1".into()).unwrap();
        for (got, raw) in row.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - (raw - 2.0) / sigma).abs() < 1e-9);
        }
    }

    #[test]
    fn missing_fwci_is_reported_and_nan_rejected() {
        let g = toy_graph();
        let (_, report) = build_features(&g, &HashEmbedder::new(8, 0)).unwrap();
        assert_eq!(report.missing_fwci, vec![NodeId::from("P3")]);

        let nodes = vec![
            NodeRecord::paper(
                "P1",
                PaperAttrs {
                    fwci: Some(f64::NAN),
                    ..PaperAttrs::default()
                },
            ),
            NodeRecord::venue("V1", "v"),
        ];
        let g = HetGraph::build(nodes, vec![EdgeRecord::new("P1", "V1", EdgeKind::PaperVenue)])
            .unwrap();
        assert!(matches!(
            build_features(&g, &HashEmbedder::new(8, 0)),
            Err(FeatureError::NonNumeric { field: "fwci", .. })
        ));
    }

    #[test]
    fn embedder_failure_carries_node_id() {
        let g = toy_graph();
        let err = build_features(&g, &Failing).unwrap_err();
        assert_eq!(
            err,
            FeatureError::Embed {
                id: "A1".into(),
                source: EmbedError("model offline".into())
            }
        );
    }

    #[test]
    fn cited_count_change_is_local() {
        let g = toy_graph();
        let e = HashEmbedder::new(8, 1);
        let (before, _) = build_features(&g, &e).unwrap();
        let mut nodes = g.nodes().to_vec();
        if let NodeAttrs::Paper(p) = &mut nodes.iter_mut().find(|n| n.id.as_str() == "P2").unwrap().attrs {
            p.cited_count += 100;
        }
        let g2 = HetGraph::build(nodes, g.edges().to_vec()).unwrap();
        let (after, _) = build_features(&g2, &e).unwrap();
        for (id, row) in before.iter() {
            let changed = after.get(id).unwrap() != row;
            assert_eq!(changed, id.as_str() == "P2", "{id}");
        }
    }
}
