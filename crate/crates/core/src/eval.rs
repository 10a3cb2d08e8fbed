//! Ranking metrics: Hit, H@1, F1 and NDCG with binary gains.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::graph::NodeId;
use crate::llm::RankedAnswer;
use crate::prompt::QaTask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaRecord {
    pub query: NodeId,
    pub task: QaTask,
    pub gold: BTreeSet<NodeId>,
    pub predicted: RankedAnswer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordScore {
    pub query: NodeId,
    pub hit: f64,
    pub h1: f64,
    pub f1: f64,
    pub ndcg: f64,
    /// Set when there was no prediction to score.
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("cannot aggregate an empty record list")]
    NoRecords,
    #[error("record {0} has an empty gold set")]
    EmptyGold(NodeId),
}

fn discount(rank: usize) -> f64 {
    1.0 / libm::log2(rank as f64 + 1.0)
}

/// Unmatched predictions count toward `|pred|` and never as gold.
pub fn score_record(r: &QaRecord) -> Result<RecordScore, EvalError> {
    if r.gold.is_empty() {
        return Err(EvalError::EmptyGold(r.query.clone()));
    }
    let pred = r.predicted.ids();
    if pred.is_empty() {
        return Ok(RecordScore {
            query: r.query.clone(),
            hit: 0.0,
            h1: 0.0,
            f1: 0.0,
            ndcg: 0.0,
            empty: true,
        });
    }
    let mut seen = BTreeSet::new();
    let relevant: Vec<bool> = pred
        .iter()
        .map(|p| p.is_some_and(|id| r.gold.contains(id) && seen.insert(id)))
        .collect();
    let found = relevant.iter().filter(|&&b| b).count() as f64;
    let precision = found / pred.len() as f64;
    let recall = found / r.gold.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let dcg: f64 = relevant
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| discount(i + 1))
        .sum();
    let ideal = r.gold.len().min(pred.len());
    let idcg: f64 = (1..=ideal).map(discount).sum();
    Ok(RecordScore {
        query: r.query.clone(),
        hit: if found > 0.0 { 1.0 } else { 0.0 },
        h1: if relevant[0] { 1.0 } else { 0.0 },
        f1,
        ndcg: dcg / idcg,
        empty: false,
    })
}

/// Percentages rounded to two decimals. F1 is averaged per query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub hit: f64,
    pub h_at_1: f64,
    pub f1: f64,
    pub ndcg: f64,
    pub f1_averaging: String,
    pub rows: Vec<RecordScore>,
}

pub fn round2(x: f64) -> f64 {
    libm::round(x * 100.0) / 100.0
}

/// Aggregates already-scored rows.
pub fn aggregate_scores(rows: Vec<RecordScore>) -> Result<EvalReport, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&RecordScore) -> f64| round2(100.0 * rows.iter().map(f).sum::<f64>() / n);
    Ok(EvalReport {
        n: rows.len(),
        hit: mean(|r| r.hit),
        h_at_1: mean(|r| r.h1),
        f1: mean(|r| r.f1),
        ndcg: mean(|r| r.ndcg),
        f1_averaging: String::from("per_query"),
        rows,
    })
}

pub fn aggregate(records: &[QaRecord]) -> Result<EvalReport, EvalError> {
    let rows = records.iter().map(score_record).collect::<Result<Vec<_>, _>>()?;
    aggregate_scores(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::RankedItem;
    use alloc::string::ToString;

    fn record(gold: &[&str], pred: &[&str]) -> QaRecord {
        QaRecord {
            query: "Q".into(),
            task: QaTask::JournalRecommendation,
            gold: gold.iter().map(|&g| NodeId::from(g)).collect(),
            predicted: RankedAnswer {
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
            },
        }
    }

    #[test]
    fn hand_cases() {
        let s = score_record(&record(&["X"], &["X", "Y", "Z"])).unwrap();
        assert_eq!((s.hit, s.h1), (1.0, 1.0));
        assert!((s.f1 - 0.5).abs() < 1e-12);
        assert!((s.ndcg - 1.0).abs() < 1e-12);
        let s = score_record(&record(&["X"], &["Y", "Z", "X"])).unwrap();
        assert_eq!((s.hit, s.h1), (1.0, 0.0));
        assert!((s.ndcg - 0.5).abs() < 1e-12);
        let s = score_record(&record(&["X"], &["X"])).unwrap();
        assert_eq!((s.hit, s.h1, s.f1, s.ndcg), (1.0, 1.0, 1.0, 1.0));
        let s = score_record(&record(&["X"], &[])).unwrap();
        assert!(s.empty);
        assert_eq!((s.hit, s.f1, s.ndcg), (0.0, 0.0, 0.0));
        assert!(matches!(score_record(&record(&[], &["X"])), Err(EvalError::EmptyGold(_))));
    }

    #[test]
    fn aggregate_means() {
        let r = aggregate(&[record(&["X"], &["X"]), record(&["X"], &["Y"])]).unwrap();
        assert_eq!(r.hit, 50.0);
        assert_eq!(r.n, 2);
        assert_eq!(aggregate(&[]), Err(EvalError::NoRecords));
        assert_eq!(round2(66.666_666), 66.67);
    }
}
