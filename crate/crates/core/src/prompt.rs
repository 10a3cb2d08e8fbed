//! Multi-step chain-of-thought prompts for the three QA tasks, and the
//! weighted fine-tuning export built from them.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::{HetGraph, MaskedView, NodeId, NodeKind};
use crate::metapath::MetapathTemplate;
use crate::naturalize::{block_header, NO_PATHS, UNNAMED};
use crate::text::{fill, TemplateError};

pub const JOURNAL_TEMPLATE: &str = include_str!("../../../templates/prompts/journal_recommendation.txt");
pub const AUTHORSHIP_TEMPLATE: &str = include_str!("../../../templates/prompts/authorship_identification.txt");
pub const COLLABORATION_TEMPLATE: &str = include_str!("../../../templates/prompts/collaboration_discovery.txt");

/// Placeholder for attributes the graph does not provide.
pub const UNKNOWN: &str = "(unknown)";

const STEP_SEPARATOR: &str = "\n\n---\n\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaTask {
    JournalRecommendation,
    AuthorshipIdentification,
    CollaborationDiscovery,
}

impl QaTask {
    pub const ALL: [QaTask; 3] = [
        QaTask::JournalRecommendation,
        QaTask::AuthorshipIdentification,
        QaTask::CollaborationDiscovery,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QaTask::JournalRecommendation => "journal_recommendation",
            QaTask::AuthorshipIdentification => "authorship_identification",
            QaTask::CollaborationDiscovery => "collaboration_discovery",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.replace('-', "_");
        Self::ALL.into_iter().find(|t| t.name() == s)
    }

    pub fn step_count(self) -> usize {
        match self {
            QaTask::JournalRecommendation => 4,
            _ => 3,
        }
    }

    pub fn answer_slots(self) -> usize {
        3
    }

    /// Kind of the node a query is about.
    pub fn query_kind(self) -> NodeKind {
        match self {
            QaTask::JournalRecommendation => NodeKind::Paper,
            _ => NodeKind::Author,
        }
    }

    pub fn candidate_kind(self) -> NodeKind {
        match self {
            QaTask::JournalRecommendation => NodeKind::Venue,
            QaTask::AuthorshipIdentification => NodeKind::Paper,
            QaTask::CollaborationDiscovery => NodeKind::Author,
        }
    }

    /// Fixed candidate list length, if the task prescribes one.
    pub fn fixed_candidate_count(self) -> Option<usize> {
        match self {
            QaTask::JournalRecommendation => None,
            _ => Some(5),
        }
    }

    pub fn template_source(self) -> &'static str {
        match self {
            QaTask::JournalRecommendation => JOURNAL_TEMPLATE,
            QaTask::AuthorshipIdentification => AUTHORSHIP_TEMPLATE,
            QaTask::CollaborationDiscovery => COLLABORATION_TEMPLATE,
        }
    }

    pub fn template(self) -> PromptTemplate {
        PromptTemplate::parse(self.template_source()).expect("bundled prompt templates parse")
    }

    /// Metapath templates whose blocks appear somewhere in this task's prompt.
    pub fn metapath_templates(self) -> Vec<MetapathTemplate> {
        self.template()
            .steps
            .iter()
            .flat_map(|s| s.templates.iter().copied())
            .collect()
    }
}

impl fmt::Display for QaTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error("candidate list is empty")]
    EmptyCandidates,
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("node {id} is a {got}, expected a {expected}")]
    WrongKind {
        id: NodeId,
        expected: NodeKind,
        got: NodeKind,
    },
    #[error("candidate {0} is listed twice")]
    DuplicateCandidate(NodeId),
    #[error("step {0} does not exist")]
    NoSuchStep(usize),
    #[error("the answer step cannot be dropped")]
    DropAnswerStep,
    #[error("malformed prompt template: {0}")]
    Malformed(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepSection {
    pub name: String,
    /// Metapath blocks rendered into this step's `{metapaths}` slot.
    pub templates: Vec<MetapathTemplate>,
    pub body: String,
}

/// A parsed prompt template file: `=== section ===` headers followed by text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub system: String,
    pub user: String,
    pub steps: Vec<StepSection>,
    pub zero_shot: String,
    pub paper_description: String,
    pub collaborator: Option<String>,
    pub candidate: String,
    pub answer_header: String,
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut sections: Vec<(String, String)> = Vec::new();
        for line in text.lines() {
            let trimmed = line.trim();
            if let Some(inner) = trimmed.strip_prefix("===").and_then(|r| r.strip_suffix("===")) {
                sections.push((inner.trim().to_string(), String::new()));
            } else if let Some((_, body)) = sections.last_mut() {
                body.push_str(line);
                body.push('\n');
            } else if !trimmed.is_empty() {
                return Err(PromptError::Malformed(format!("text before first section: {trimmed}")));
            }
        }
        let mut named: BTreeMap<String, String> = BTreeMap::new();
        let mut steps = Vec::new();
        for (header, body) in sections {
            let body = body.trim().to_string();
            if let Some(rest) = header.strip_prefix("step ") {
                let (name, templates) = match rest.split_once('|') {
                    Some((n, ts)) => {
                        let ts = ts
                            .split_whitespace()
                            .map(|t| {
                                MetapathTemplate::parse(t)
                                    .map_err(|e| PromptError::Malformed(e.to_string()))
                            })
                            .collect::<Result<Vec<_>, _>>()?;
                        (n.trim(), ts)
                    }
                    None => (rest.trim(), Vec::new()),
                };
                steps.push(StepSection {
                    name: name.to_string(),
                    templates,
                    body,
                });
            } else if named.insert(header.clone(), body).is_some() {
                return Err(PromptError::Malformed(format!("section {header} repeated")));
            }
        }
        let mut take = |key: &str| {
            named
                .remove(key)
                .ok_or_else(|| PromptError::Malformed(format!("missing section {key}")))
        };
        let template = Self {
            system: take("system")?,
            user: take("user")?,
            zero_shot: take("zero-shot")?,
            paper_description: take("paper-description")?,
            candidate: take("candidate")?,
            answer_header: take("answer-header")?,
            collaborator: named.remove("collaborator"),
            steps,
        };
        if let Some(extra) = named.keys().next() {
            return Err(PromptError::Malformed(format!("unknown section {extra}")));
        }
        if template.steps.is_empty() {
            return Err(PromptError::Malformed("no step sections".into()));
        }
        Ok(template)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    #[default]
    ChainOfThought,
    /// Omit the given 1-based step; later steps are renumbered.
    DropStep(usize),
    /// No steps and no graph context: description and candidates only.
    ZeroShot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: NodeId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub task: QaTask,
    pub query: NodeId,
    pub system_message: String,
    pub user_message: String,
    pub candidates: Vec<Candidate>,
    /// Names of the steps included, in order.
    pub steps: Vec<String>,
    pub answer_header: String,
    pub warnings: Vec<String>,
}

impl PromptBundle {
    pub fn char_count(&self) -> usize {
        self.system_message.chars().count() + self.user_message.chars().count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptRequest {
    pub query: NodeId,
    /// Rendered metapath blocks; templates without an entry render as empty blocks.
    pub contexts: BTreeMap<MetapathTemplate, String>,
    pub candidates: Vec<NodeId>,
    /// Edges hidden from the query, as `(paper, other)` pairs.
    pub hidden_edges: BTreeSet<(NodeId, NodeId)>,
    pub mode: PromptMode,
}

impl PromptRequest {
    pub fn new(query: NodeId, candidates: Vec<NodeId>) -> Self {
        Self {
            query,
            contexts: BTreeMap::new(),
            candidates,
            hidden_edges: BTreeSet::new(),
            mode: PromptMode::ChainOfThought,
        }
    }
}

struct Ctx<'a> {
    view: MaskedView<'a>,
    warnings: Vec<String>,
}

impl Ctx<'_> {
    fn or_unknown(&mut self, value: String, what: &str, id: &NodeId) -> String {
        if value.trim().is_empty() {
            self.warnings.push(format!("{id}: missing {what}"));
            UNKNOWN.to_string()
        } else {
            value
        }
    }

    fn paper_description(&mut self, t: &PromptTemplate, paper: usize) -> Result<String, PromptError> {
        let g = self.view.graph();
        let node = g.node_at(paper);
        let id = node.id.clone();
        let attrs = node.as_paper().cloned().unwrap_or_default();
        let authors: Vec<String> = self
            .view
            .authors_of(paper)
            .into_iter()
            .map(|a| g.node_at(a).display_name().to_string())
            .filter(|n| !n.trim().is_empty())
            .collect();
        let title = self.or_unknown(attrs.title.clone(), "title", &id);
        let fwci = match attrs.fwci {
            Some(f) if f.is_finite() => format!("{f}"),
            _ => self.or_unknown(String::new(), "fwci", &id),
        };
        let authors = self.or_unknown(authors.join(", "), "authors", &id);
        let year = match attrs.year {
            Some(y) => format!("{y}"),
            None => self.or_unknown(String::new(), "year", &id),
        };
        let keywords = self.or_unknown(attrs.keywords.join(", "), "keywords", &id);
        let abstract_text = self.or_unknown(attrs.abstract_text.clone(), "abstract", &id);
        let cited = format!("{}", attrs.cited_count);
        let pairs = [
            ("id", id.as_str()),
            ("title", title.as_str()),
            ("cited", cited.as_str()),
            ("fwci", fwci.as_str()),
            ("authors", authors.as_str()),
            ("year", year.as_str()),
            ("keywords", keywords.as_str()),
            ("abstract", abstract_text.as_str()),
        ];
        Ok(crate::text::fill_pairs(&t.paper_description, &pairs)?)
    }

    /// Top venues of an author's other visible papers, most frequent first.
    fn frequent_venues(&self, author: usize, exclude_paper: usize) -> Vec<String> {
        let g = self.view.graph();
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for p in self.view.papers_of(author) {
            if p == exclude_paper {
                continue;
            }
            if let Some(v) = self.view.venue_of(p) {
                *counts.entry(v).or_default() += 1;
            }
        }
        let mut ranked: Vec<(usize, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| {
            b.1.cmp(&a.1)
                .then_with(|| g.node_at(a.0).display_name().cmp(g.node_at(b.0).display_name()))
        });
        ranked
            .into_iter()
            .take(3)
            .map(|(v, _)| g.node_at(v).display_name().to_string())
            .collect()
    }

    fn collaboration(&mut self, t: &PromptTemplate, paper: usize) -> Result<String, PromptError> {
        let Some(line) = &t.collaborator else {
            return Ok(String::new());
        };
        let g = self.view.graph();
        let mut lines = Vec::new();
        for a in self.view.authors_of(paper) {
            let node = g.node_at(a);
            let name = self.or_unknown(node.display_name().to_string(), "name", &node.id);
            let org = self.or_unknown(
                node.organization().unwrap_or_default().to_string(),
                "organization",
                &node.id,
            );
            let venues = self.frequent_venues(a, paper);
            let venues = if venues.is_empty() {
                String::from("(none known)")
            } else {
                venues.join(", ")
            };
            lines.push(crate::text::fill_pairs(
                line,
                &[("name", &name), ("organization", &org), ("venues", &venues)],
            )?);
        }
        if lines.is_empty() {
            lines.push(String::from("(no collaboration information)"));
        }
        Ok(lines.join("\n"))
    }

    /// The paper described for an author query: their most cited visible paper.
    fn representative_paper(&self, author: usize) -> Option<usize> {
        let g = self.view.graph();
        self.view.papers_of(author).into_iter().max_by(|&a, &b| {
            let ca = g.node_at(a).as_paper().map_or(0, |p| p.cited_count);
            let cb = g.node_at(b).as_paper().map_or(0, |p| p.cited_count);
            ca.cmp(&cb).then_with(|| g.node_at(b).id.cmp(&g.node_at(a).id))
        })
    }
}

fn candidate_list(
    g: &HetGraph,
    task: QaTask,
    ids: &[NodeId],
    warnings: &mut Vec<String>,
) -> Result<Vec<Candidate>, PromptError> {
    if ids.is_empty() {
        return Err(PromptError::EmptyCandidates);
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id) {
            return Err(PromptError::DuplicateCandidate(id.clone()));
        }
        let node = g.node(id).ok_or_else(|| PromptError::UnknownNode(id.clone()))?;
        if node.kind() != task.candidate_kind() {
            return Err(PromptError::WrongKind {
                id: id.clone(),
                expected: task.candidate_kind(),
                got: node.kind(),
            });
        }
        let name = node.display_name().trim();
        let name = if name.is_empty() {
            warnings.push(format!("{id}: missing name"));
            UNNAMED.to_string()
        } else {
            name.to_string()
        };
        out.push(Candidate { id: id.clone(), name });
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for c in &out {
        *counts.entry(c.name.to_lowercase()).or_default() += 1;
    }
    for c in &mut out {
        if counts[&c.name.to_lowercase()] > 1 {
            c.name = format!("{} ({})", c.name, c.id);
        }
    }
    Ok(out)
}

fn metapath_blocks(templates: &[MetapathTemplate], contexts: &BTreeMap<MetapathTemplate, String>) -> String {
    templates
        .iter()
        .map(|t| {
            contexts
                .get(t)
                .cloned()
                .unwrap_or_else(|| format!("{}\n{}", block_header(*t), NO_PATHS))
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Assembles the prompt for one query. Pure: equal inputs give byte-equal output.
pub fn build_prompt(g: &HetGraph, task: QaTask, req: &PromptRequest) -> Result<PromptBundle, PromptError> {
    let template = task.template();
    let qi = g
        .index_of(&req.query)
        .ok_or_else(|| PromptError::UnknownNode(req.query.clone()))?;
    let qkind = g.node_at(qi).kind();
    if qkind != task.query_kind() {
        return Err(PromptError::WrongKind {
            id: req.query.clone(),
            expected: task.query_kind(),
            got: qkind,
        });
    }
    let mut ctx = Ctx {
        view: MaskedView::new(g, &req.hidden_edges),
        warnings: Vec::new(),
    };
    let candidates = candidate_list(g, task, &req.candidates, &mut ctx.warnings)?;
    let candidate_text = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let index = format!("{}", i + 1);
            crate::text::fill_pairs(&template.candidate, &[("index", &index), ("name", &c.name)])
        })
        .collect::<Result<Vec<_>, _>>()?
        .join("\n");

    let (described, target) = match task {
        QaTask::JournalRecommendation => (Some(qi), String::new()),
        _ => {
            let name = ctx.or_unknown(g.node_at(qi).display_name().to_string(), "name", &req.query);
            (ctx.representative_paper(qi), name)
        }
    };
    let paper_description = match described {
        Some(p) => ctx.paper_description(&template, p)?,
        None => String::from("(no known papers)"),
    };
    let collaboration = match task {
        QaTask::JournalRecommendation => ctx.collaboration(&template, qi)?,
        _ => String::new(),
    };

    let slots = |step: &str, metapaths: &str| -> Vec<(String, String)> {
        [
            ("step", step),
            ("metapaths", metapaths),
            ("paper_description", paper_description.as_str()),
            ("collaboration", collaboration.as_str()),
            ("candidates", candidate_text.as_str()),
            ("target", target.as_str()),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
    };
    let render = |body: &str, slots: &[(String, String)]| {
        fill(body, |name| {
            slots.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
        })
    };

    let (user_message, steps) = match req.mode {
        PromptMode::ZeroShot => (render(&template.zero_shot, &slots("", ""))?, Vec::new()),
        mode => {
            let dropped = match mode {
                PromptMode::DropStep(n) => {
                    if n == 0 || n > template.steps.len() {
                        return Err(PromptError::NoSuchStep(n));
                    }
                    if n == template.steps.len() {
                        return Err(PromptError::DropAnswerStep);
                    }
                    Some(n - 1)
                }
                _ => None,
            };
            let mut sections = Vec::new();
            let mut names = Vec::new();
            for (i, step) in template.steps.iter().enumerate() {
                if Some(i) == dropped {
                    continue;
                }
                let number = format!("{}", names.len() + 1);
                let blocks = metapath_blocks(&step.templates, &req.contexts);
                sections.push(render(&step.body, &slots(&number, &blocks))?);
                names.push(step.name.clone());
            }
            let mut user = template.user.clone();
            user.push_str("\n\n");
            user.push_str(&sections.join(STEP_SEPARATOR));
            (user, names)
        }
    };

    Ok(PromptBundle {
        task,
        query: req.query.clone(),
        system_message: template.system.clone(),
        user_message,
        candidates,
        steps,
        answer_header: template.answer_header.clone(),
        warnings: ctx.warnings,
    })
}

/// The assistant response format: header, then one numbered line per answer.
pub fn format_answer(task: QaTask, names: &[&str]) -> String {
    let mut out = task.template().answer_header;
    for (i, n) in names.iter().enumerate() {
        out.push_str(&format!("\n{}. {}", i + 1, n));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneExample {
    pub prompt: PromptBundle,
    pub target_answer: Vec<NodeId>,
    pub sample_weight: f64,
}

/// One serialized line of the fine-tuning file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneRecord {
    pub system: String,
    pub user: String,
    pub assistant: String,
    pub weight: f64,
}

impl FinetuneExample {
    pub fn record(&self) -> FinetuneRecord {
        let names: Vec<&str> = self
            .target_answer
            .iter()
            .filter_map(|id| self.prompt.candidates.iter().find(|c| &c.id == id))
            .map(|c| c.name.as_str())
            .collect();
        FinetuneRecord {
            system: self.prompt.system_message.clone(),
            user: self.prompt.user_message.clone(),
            assistant: format_answer(self.prompt.task, &names),
            weight: self.sample_weight,
        }
    }
}

/// A prompt with its gold answer and the summed score of the metapaths it includes.
#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneInput {
    pub prompt: PromptBundle,
    pub gold: Vec<NodeId>,
    pub raw_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedExample {
    pub query: NodeId,
    pub reason: String,
}

/// Keeps inputs whose gold answers are all candidates and whose weight is
/// positive, then rescales weights to mean 1.
pub fn export_finetune_dataset(inputs: Vec<FinetuneInput>) -> (Vec<FinetuneExample>, Vec<SkippedExample>) {
    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    for input in inputs {
        let missing = input
            .gold
            .iter()
            .find(|id| !input.prompt.candidates.iter().any(|c| &c.id == *id));
        let reason = if input.gold.is_empty() {
            Some(String::from("no gold answer"))
        } else if let Some(id) = missing {
            Some(format!("gold answer {id} is not a candidate"))
        } else if !(input.raw_weight > 0.0) || !input.raw_weight.is_finite() {
            Some(format!("non-positive weight {}", input.raw_weight))
        } else {
            None
        };
        match reason {
            Some(reason) => skipped.push(SkippedExample {
                query: input.prompt.query.clone(),
                reason,
            }),
            None => kept.push(input),
        }
    }
    let mean = if kept.is_empty() {
        1.0
    } else {
        kept.iter().map(|i| i.raw_weight).sum::<f64>() / kept.len() as f64
    };
    let examples = kept
        .into_iter()
        .map(|i| FinetuneExample {
            prompt: i.prompt,
            target_answer: i.gold,
            sample_weight: i.raw_weight / mean,
        })
        .collect();
    (examples, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::toy_graph;
    use alloc::vec;

    fn journal_request() -> PromptRequest {
        let mut req = PromptRequest::new("P1".into(), vec!["V2".into(), "V1".into()]);
        req.hidden_edges.insert(("P1".into(), "V1".into()));
        req
    }

    #[test]
    fn bundled_templates_parse() {
        for task in QaTask::ALL {
            let t = task.template();
            assert_eq!(t.steps.len(), task.step_count(), "{task}");
        }
        let names: Vec<String> = QaTask::JournalRecommendation
            .template()
            .steps
            .into_iter()
            .map(|s| s.name)
            .collect();
        assert_eq!(
            names,
            vec!["Graph Structure Analysis", "Content Analysis", "Collaboration Analysis", "Answer Generation"]
        );
        assert_eq!(
            QaTask::JournalRecommendation.metapath_templates(),
            vec![MetapathTemplate::Apvpa, MetapathTemplate::Vpapv, MetapathTemplate::Apa, MetapathTemplate::Oapvpao]
        );
        assert_eq!(
            QaTask::CollaborationDiscovery.metapath_templates(),
            vec![MetapathTemplate::Apvpa, MetapathTemplate::Vpapv]
        );
    }

    #[test]
    fn malformed_templates() {
        assert!(matches!(PromptTemplate::parse("hello"), Err(PromptError::Malformed(_))));
        assert!(matches!(PromptTemplate::parse("=== system ===\nx"), Err(PromptError::Malformed(_))));
        let bad_template = JOURNAL_TEMPLATE.replace("| APA OAPVPAO", "| AVA");
        assert!(matches!(PromptTemplate::parse(&bad_template), Err(PromptError::Malformed(_))));
    }

    #[test]
    fn journal_prompt_contents() {
        let g = toy_graph();
        let b = build_prompt(&g, QaTask::JournalRecommendation, &journal_request()).unwrap();
        assert!(b.user_message.contains("- 1. KDD\n- 2. TKDE"));
        assert!(b.user_message.contains(
            "Paper P1, titled Graph Reasoning with Language Models, has 12 citations, FWCI (Field-Weighted Citation Impact) of 1.5, authored by Alice, Bob, published in 2023, topics: graph, llm, abstract: We combine graph structure with language model reasoning."
        ));
        // P1's venue edge is hidden, so Alice's venues come from P2 only.
        assert!(b.user_message.contains(
            "Author Alice is affiliated with MIT, mainly publishes papers in journals such as TKDE."
        ));
        assert!(b.user_message.contains("APVPA Metapaths with confidence score:\n(no paths found)"));
        let steps: Vec<usize> = ["Step 1:", "Step 2:", "Step 3:", "Step 4:"]
            .iter()
            .map(|s| b.user_message.find(s).unwrap())
            .collect();
        assert!(steps.windows(2).all(|w| w[0] < w[1]));
        assert!(b.warnings.is_empty());
    }

    #[test]
    fn missing_attributes_become_placeholders() {
        let g = toy_graph();
        let mut req = journal_request();
        req.query = "P3".into();
        let b = build_prompt(&g, QaTask::JournalRecommendation, &req).unwrap();
        assert!(b.user_message.contains("FWCI (Field-Weighted Citation Impact) of (unknown)"));
        assert_eq!(b.warnings, vec![String::from("P3: missing fwci")]);
    }

    #[test]
    fn drop_step_and_zero_shot() {
        let g = toy_graph();
        let mut req = journal_request();
        req.mode = PromptMode::DropStep(1);
        let b = build_prompt(&g, QaTask::JournalRecommendation, &req).unwrap();
        assert_eq!(b.steps, vec!["Content Analysis", "Collaboration Analysis", "Answer Generation"]);
        assert!(!b.user_message.contains("\nAPVPA Metapaths"));
        assert!(!b.user_message.contains("\nVPAPV Metapaths"));
        assert!(b.user_message.contains("Step 1: Identify the core themes"));
        req.mode = PromptMode::DropStep(4);
        assert_eq!(
            build_prompt(&g, QaTask::JournalRecommendation, &req),
            Err(PromptError::DropAnswerStep)
        );
        req.mode = PromptMode::DropStep(9);
        assert_eq!(build_prompt(&g, QaTask::JournalRecommendation, &req), Err(PromptError::NoSuchStep(9)));
        req.mode = PromptMode::ZeroShot;
        let z = build_prompt(&g, QaTask::JournalRecommendation, &req).unwrap();
        assert!(z.steps.is_empty());
        assert!(!z.user_message.contains("Metapaths"));
        assert!(z.user_message.contains("- 2. TKDE"));
    }

    #[test]
    fn candidate_errors() {
        let g = toy_graph();
        let mut req = journal_request();
        req.candidates.clear();
        assert_eq!(build_prompt(&g, QaTask::JournalRecommendation, &req), Err(PromptError::EmptyCandidates));
        req.candidates = vec!["V1".into(), "V1".into()];
        assert!(matches!(
            build_prompt(&g, QaTask::JournalRecommendation, &req),
            Err(PromptError::DuplicateCandidate(_))
        ));
        req.candidates = vec!["A1".into()];
        assert!(matches!(
            build_prompt(&g, QaTask::JournalRecommendation, &req),
            Err(PromptError::WrongKind { .. })
        ));
    }

    #[test]
    fn author_task_describes_top_cited_visible_paper() {
        let g = toy_graph();
        let mut req = PromptRequest::new("A1".into(), vec!["P3".into(), "P2".into()]);
        req.hidden_edges.insert(("P2".into(), "A1".into()));
        let b = build_prompt(&g, QaTask::AuthorshipIdentification, &req).unwrap();
        // P2 (40 citations) is hidden, so P1 is described.
        assert!(b.user_message.contains("Paper P1, titled Graph Reasoning"));
        assert!(b.user_message.contains("papers written by author Alice"));
        assert!(b.user_message.contains("- Metapath Embeddings\n- Heterogeneous Graph Transformers"));
    }

    #[test]
    fn answer_format() {
        assert_eq!(
            format_answer(QaTask::JournalRecommendation, &["A", "B", "C"]),
            "Recommended Journals:\n1. A\n2. B\n3. C"
        );
    }

    fn input(weight: f64, gold: &str) -> FinetuneInput {
        let g = toy_graph();
        FinetuneInput {
            prompt: build_prompt(&g, QaTask::JournalRecommendation, &journal_request()).unwrap(),
            gold: vec![gold.into()],
            raw_weight: weight,
        }
    }

    #[test]
    fn finetune_weights() {
        let (one, _) = export_finetune_dataset(vec![input(0.3, "V1")]);
        assert_eq!(one[0].sample_weight, 1.0);
        let (two, skipped) = export_finetune_dataset(vec![
            input(0.2, "V1"),
            input(0.6, "V2"),
            input(0.5, "V9"),
            input(0.0, "V1"),
        ]);
        assert!((two[0].sample_weight - 0.5).abs() < 1e-12);
        assert!((two[1].sample_weight - 1.5).abs() < 1e-12);
        assert_eq!(skipped.len(), 2);
        assert_eq!(two[0].record().assistant, "Recommended Journals:\n1. TKDE");
    }
}
