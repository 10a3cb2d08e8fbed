//! Rendering metapath instances as confidence-tagged sentences.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::graph::{HetGraph, NodeId};
use crate::metapath::{MetapathInstance, MetapathTemplate, Selection};
use crate::text::{fill_pairs, TemplateError};

pub const APVPA_TEMPLATE: &str = include_str!("../../../templates/naturalization/apvpa.txt");
pub const VPAPV_TEMPLATE: &str = include_str!("../../../templates/naturalization/vpapv.txt");
pub const APA_TEMPLATE: &str = include_str!("../../../templates/naturalization/apa.txt");
pub const OAPVPAO_TEMPLATE: &str = include_str!("../../../templates/naturalization/oapvpao.txt");

/// Stands in for a node without a usable name.
pub const UNNAMED: &str = "(unnamed)";
pub const NO_PATHS: &str = "(no paths found)";

pub fn sentence_template(t: MetapathTemplate) -> &'static str {
    let raw = match t {
        MetapathTemplate::Apvpa => APVPA_TEMPLATE,
        MetapathTemplate::Vpapv => VPAPV_TEMPLATE,
        MetapathTemplate::Apa => APA_TEMPLATE,
        MetapathTemplate::Oapvpao => OAPVPAO_TEMPLATE,
    };
    raw.trim_end()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NaturalizeError {
    #[error("confidence scale must be a positive finite number, got {0}")]
    Scale(f64),
    #[error("instance references unknown node {0}")]
    UnknownNode(NodeId),
    #[error("instance of {template} has {got} nodes, expected {expected}")]
    Shape {
        template: MetapathTemplate,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub text: String,
    /// Nodes rendered with the placeholder name.
    pub unnamed: Vec<NodeId>,
}

/// `norm_score / scale`, printed with two decimals.
pub fn confidence(norm_score: f64, scale: f64) -> Result<String, NaturalizeError> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(NaturalizeError::Scale(scale));
    }
    Ok(format!("{:.2}", norm_score / scale))
}

pub fn naturalize(
    m: &MetapathInstance,
    g: &HetGraph,
    scale: f64,
) -> Result<Sentence, NaturalizeError> {
    let conf = confidence(m.norm_score, scale)?;
    let expected = m.template.kind_sequence().len();
    if m.nodes.len() != expected {
        return Err(NaturalizeError::Shape {
            template: m.template,
            expected,
            got: m.nodes.len(),
        });
    }
    let mut unnamed = Vec::new();
    let mut names = Vec::with_capacity(m.nodes.len());
    for id in &m.nodes {
        let node = g.node(id).ok_or_else(|| NaturalizeError::UnknownNode(id.clone()))?;
        let name = node.display_name().trim();
        if name.is_empty() {
            unnamed.push(id.clone());
            names.push(UNNAMED.to_string());
        } else {
            names.push(name.to_string());
        }
    }
    let n = |i: usize| names[i].as_str();
    let (org1, org2) = match &m.organizations {
        Some((a, b)) => (a.as_str(), b.as_str()),
        None => (UNNAMED, UNNAMED),
    };
    let template = sentence_template(m.template);
    let text = match m.template {
        MetapathTemplate::Apvpa | MetapathTemplate::Oapvpao => fill_pairs(
            template,
            &[
                ("confidence", &conf),
                ("author1", n(0)),
                ("paper1", n(1)),
                ("venue", n(2)),
                ("paper2", n(3)),
                ("author2", n(4)),
                ("org1", org1),
                ("org2", org2),
            ],
        )?,
        MetapathTemplate::Vpapv => fill_pairs(
            template,
            &[
                ("confidence", &conf),
                ("venue1", n(0)),
                ("paper1", n(1)),
                ("author", n(2)),
                ("paper2", n(3)),
                ("venue2", n(4)),
            ],
        )?,
        MetapathTemplate::Apa => fill_pairs(
            template,
            &[
                ("confidence", &conf),
                ("author1", n(0)),
                ("paper", n(1)),
                ("author2", n(2)),
            ],
        )?,
    };
    Ok(Sentence { text, unnamed })
}

pub fn block_header(t: MetapathTemplate) -> String {
    format!("{} Metapaths with confidence score:", t.name())
}

/// A template's block: header line, then one sentence per instance in
/// descending score order, or a single placeholder line when empty.
pub fn render_context_block(
    t: MetapathTemplate,
    selection: &Selection,
    g: &HetGraph,
    scale: f64,
) -> Result<(String, Vec<NodeId>), NaturalizeError> {
    let mut lines = Vec::new();
    let mut unnamed = Vec::new();
    let mut items: Vec<&MetapathInstance> = selection.get(t).iter().collect();
    items.sort_by(|a, b| crate::metapath::instance_order(a, b));
    for m in items {
        let s = naturalize(m, g, scale)?;
        lines.push(s.text);
        unnamed.extend(s.unnamed);
    }
    if lines.is_empty() {
        lines.push(NO_PATHS.to_string());
    }
    let mut out = block_header(t);
    for l in lines {
        out.push('\n');
        out.push_str(&l);
    }
    Ok((out, unnamed))
}

/// Scale used for every block of one query: the largest selected score,
/// or 1 when nothing scored above zero.
pub fn selection_scale(selection: &Selection) -> f64 {
    let max = selection.max_norm_score();
    if max > 0.0 && max.is_finite() {
        max
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeKind, EdgeRecord, NodeRecord, PaperAttrs};
    use crate::metapath::{stratified_top_k, MetapathEdge};
    use alloc::vec;

    fn graph() -> HetGraph {
        let paper = |id: &str, title: &str| {
            NodeRecord::paper(
                id,
                PaperAttrs {
                    title: title.into(),
                    ..PaperAttrs::default()
                },
            )
        };
        HetGraph::build(
            vec![
                paper("P1", "P1"),
                paper("P2", ""),
                NodeRecord::author("A1", "Alice", "MIT"),
                NodeRecord::author("A2", "Bob", ""),
                NodeRecord::venue("V1", "TKDE"),
            ],
            vec![
                EdgeRecord::new("P1", "V1", EdgeKind::PaperVenue),
                EdgeRecord::new("P2", "V1", EdgeKind::PaperVenue),
                EdgeRecord::new("P1", "A1", EdgeKind::PaperAuthor),
                EdgeRecord::new("P1", "A2", EdgeKind::PaperAuthor),
                EdgeRecord::new("P2", "A2", EdgeKind::PaperAuthor),
            ],
        )
        .unwrap()
    }

    fn inst(t: MetapathTemplate, nodes: &[&str], score: f64) -> MetapathInstance {
        let ids: Vec<NodeId> = nodes.iter().map(|&s| NodeId::from(s)).collect();
        let edges = ids
            .windows(2)
            .zip(t.edge_kinds())
            .map(|(w, kind)| MetapathEdge {
                src: w[0].clone(),
                dst: w[1].clone(),
                kind,
            })
            .collect();
        MetapathInstance {
            template: t,
            nodes: ids,
            edges,
            organizations: None,
            raw_score: score,
            norm_score: score,
        }
    }

    #[test]
    fn apa_golden() {
        let m = inst(MetapathTemplate::Apa, &["A1", "P1", "A2"], 0.25);
        let s = naturalize(&m, &graph(), 0.5).unwrap();
        assert_eq!(s.text, "[confidence 0.50] Author Alice co-authored paper P1 with author Bob.");
        assert!(s.unnamed.is_empty());
    }

    #[test]
    fn other_goldens() {
        let g = graph();
        let m = inst(MetapathTemplate::Apvpa, &["A1", "P1", "V1", "P2", "A2"], 1.0);
        assert_eq!(
            naturalize(&m, &g, 1.0).unwrap().text,
            "[confidence 1.00] Author Alice published in venue TKDE (paper P1) where author Bob also publishes (paper (unnamed))."
        );
        let mut o = inst(MetapathTemplate::Oapvpao, &["A1", "P1", "V1", "P2", "A2"], 0.5);
        o.organizations = Some(("MIT".into(), "ETH".into()));
        assert_eq!(
            naturalize(&o, &g, 1.0).unwrap().text,
            "[confidence 0.50] Author Alice affiliated with MIT published in venue TKDE (paper P1) where author Bob affiliated with ETH also publishes (paper (unnamed))."
        );
    }

    #[test]
    fn unnamed_and_bad_scale() {
        let g = graph();
        let m = inst(MetapathTemplate::Apa, &["A2", "P2", "A2"], 0.1);
        let s = naturalize(&m, &g, 1.0).unwrap();
        assert!(s.text.contains("paper (unnamed)"));
        assert_eq!(s.unnamed, vec![NodeId::from("P2")]);
        assert_eq!(naturalize(&m, &g, 0.0), Err(NaturalizeError::Scale(0.0)));
        assert!(matches!(naturalize(&m, &g, f64::NAN), Err(NaturalizeError::Scale(_))));
    }

    #[test]
    fn block_is_header_plus_sentences() {
        let g = graph();
        let a = inst(MetapathTemplate::Apa, &["A1", "P1", "A2"], 0.2);
        let b = inst(MetapathTemplate::Apa, &["A2", "P1", "A1"], 0.4);
        let sel = stratified_top_k(&[a.clone(), b.clone()], 5).unwrap();
        let (block, _) = render_context_block(MetapathTemplate::Apa, &sel, &g, 0.4).unwrap();
        let expected = format!(
            "APA Metapaths with confidence score:\n{}\n{}",
            naturalize(&b, &g, 0.4).unwrap().text,
            naturalize(&a, &g, 0.4).unwrap().text
        );
        assert_eq!(block, expected);
        let (empty, _) = render_context_block(MetapathTemplate::Vpapv, &sel, &g, 0.4).unwrap();
        assert_eq!(empty, "VPAPV Metapaths with confidence score:\n(no paths found)");
        assert_eq!(selection_scale(&sel), 0.4);
        assert_eq!(selection_scale(&Selection::default()), 1.0);
    }
}
