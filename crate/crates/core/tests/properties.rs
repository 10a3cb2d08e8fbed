mod common;

use std::collections::BTreeMap;

use common::{mean_var, ranked};
use hetgcot_core::eval::{aggregate, score_record, QaRecord};
use hetgcot_core::fastgtn::RelationWeightVector;
use hetgcot_core::features::layer_norm;
use hetgcot_core::fixtures::{synthetic_graph, SyntheticSpec};
use hetgcot_core::hgt::{hgt_forward, HgtConfig, HgtParams};
use hetgcot_core::llm::parse_ranked;
use hetgcot_core::math::Matrix;
use hetgcot_core::metapath::{score_instance, MetapathEdge, MetapathInstance, MetapathTemplate};
use hetgcot_core::prompt::{format_answer, Candidate, QaTask};
use hetgcot_core::{Direction, EdgeKind, EdgeRecord, HetGraph, NodeFeatureTable, NodeId, NodeRecord};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec() -> impl Strategy<Value = SyntheticSpec> {
    (2usize..25, 1usize..10, 1usize..5, 1usize..4, any::<u64>()).prop_map(|(papers, authors, venues, m, seed)| {
        SyntheticSpec {
            papers,
            authors,
            venues,
            max_authors_per_paper: m,
            seed,
        }
    })
}

fn apvpa(len_edges: usize, raw_parts: &[EdgeKind]) -> MetapathInstance {
    let nodes: Vec<NodeId> = (0..=len_edges).map(|i| NodeId::from(format!("N{i}").as_str())).collect();
    let edges = nodes
        .windows(2)
        .zip(raw_parts)
        .map(|(w, &kind)| MetapathEdge {
            src: w[0].clone(),
            dst: w[1].clone(),
            kind,
        })
        .collect();
    MetapathInstance {
        template: MetapathTemplate::Apvpa,
        nodes,
        edges,
        organizations: None,
        raw_score: 0.0,
        norm_score: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn out_and_in_neighbors_agree(s in spec()) {
        let g = synthetic_graph(s);
        for e in g.edges() {
            prop_assert!(g.neighbors(&e.src, e.kind, Direction::Out).unwrap().contains(&e.dst));
            prop_assert!(g.neighbors(&e.dst, e.kind, Direction::In).unwrap().contains(&e.src));
        }
        let total: usize = g
            .nodes()
            .iter()
            .map(|n| {
                EdgeKind::ALL
                    .iter()
                    .map(|&k| g.neighbors(&n.id, k, Direction::Out).unwrap().len())
                    .sum::<usize>()
            })
            .sum();
        prop_assert_eq!(total, g.edge_count());
    }

    #[test]
    fn build_ignores_input_order(s in spec(), shuffle_seed in any::<u64>()) {
        let g = synthetic_graph(s);
        let mut nodes: Vec<NodeRecord> = g.nodes().to_vec();
        let mut edges: Vec<EdgeRecord> = g.edges().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
        nodes.shuffle(&mut rng);
        edges.shuffle(&mut rng);
        prop_assert_eq!(HetGraph::build(nodes, edges).unwrap(), g);
    }

    #[test]
    fn layer_norm_standardizes(x in prop::collection::vec(-1e3f64..1e3, 8..64)) {
        let (_, v0) = mean_var(&x);
        prop_assume!(v0 > 1.0);
        let mut y = x.clone();
        layer_norm(&mut y, 1e-5);
        let (m, v) = mean_var(&y);
        prop_assert!(m.abs() <= 1e-6);
        prop_assert!((v - 1.0).abs() <= 1e-3);
    }

    #[test]
    fn normalized_score_falls_with_gamma(
        kinds in prop::collection::vec(any::<bool>(), 1..8),
        pv in 0.0f64..1.0,
        g1 in 0.0f64..1.0,
        g2 in 0.0f64..1.0,
    ) {
        let kinds: Vec<EdgeKind> = kinds
            .into_iter()
            .map(|b| if b { EdgeKind::PaperVenue } else { EdgeKind::PaperAuthor })
            .collect();
        let m = apvpa(kinds.len(), &kinds);
        let w = RelationWeightVector::new(pv, 1.0 - pv);
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let a = score_instance(&m, &w, lo).unwrap();
        let b = score_instance(&m, &w, hi).unwrap();
        prop_assert!(b.norm_score <= a.norm_score + 1e-12);
        prop_assert_eq!(a.raw_score, b.raw_score);
    }

    #[test]
    fn metric_invariants(
        gold in prop::collection::btree_set(0u8..6, 1..4),
        pred in prop::collection::vec(0u8..8, 0..5),
    ) {
        let name = |i: u8| format!("N{i}");
        let names: Vec<String> = pred.iter().map(|&i| name(i)).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let r = QaRecord {
            query: "Q".into(),
            task: QaTask::CollaborationDiscovery,
            gold: gold.iter().map(|&i| NodeId::from(name(i).as_str())).collect(),
            predicted: ranked(&refs),
        };
        let s = score_record(&r).unwrap();
        prop_assert!(s.f1 <= 1.0 + 1e-12 && s.f1 >= 0.0);
        prop_assert!(s.hit >= s.h1);
        prop_assert!(s.ndcg >= 0.0 && s.ndcg <= 1.0 + 1e-12);
    }

    #[test]
    fn ndcg_is_one_when_gold_leads(gold_n in 1usize..4, extra in 0usize..3) {
        let gold: Vec<String> = (0..gold_n).map(|i| format!("G{i}")).collect();
        let mut pred = gold.clone();
        pred.extend((0..extra).map(|i| format!("X{i}")));
        let refs: Vec<&str> = pred.iter().map(String::as_str).collect();
        let r = QaRecord {
            query: "Q".into(),
            task: QaTask::CollaborationDiscovery,
            gold: gold.iter().map(|g| NodeId::from(g.as_str())).collect(),
            predicted: ranked(&refs),
        };
        prop_assert!((score_record(&r).unwrap().ndcg - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn aggregate_ignores_record_order(
        cases in prop::collection::vec((0u8..4, prop::collection::vec(0u8..5, 1..4)), 1..12),
        seed in any::<u64>(),
    ) {
        let records: Vec<QaRecord> = cases
            .iter()
            .map(|(g, p)| {
                let names: Vec<String> = p.iter().map(|i| format!("N{i}")).collect();
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                QaRecord {
                    query: "Q".into(),
                    task: QaTask::JournalRecommendation,
                    gold: [NodeId::from(format!("N{g}").as_str())].into_iter().collect(),
                    predicted: ranked(&refs),
                }
            })
            .collect();
        let mut shuffled = records.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = aggregate(&records).unwrap();
        let b = aggregate(&shuffled).unwrap();
        prop_assert_eq!((a.hit, a.h_at_1, a.f1, a.ndcg), (b.hit, b.h_at_1, b.f1, b.ndcg));
    }

    #[test]
    fn parse_inverts_format(
        names in prop::collection::btree_set("[A-Z][a-z]{1,8}( [A-Z][a-z]{1,8}){0,3}", 5..8),
        pick in prop::collection::vec(any::<prop::sample::Index>(), 3),
        task in prop::sample::select(QaTask::ALL.to_vec()),
    ) {
        let names: Vec<String> = names.into_iter().collect();
        let candidates: Vec<Candidate> = names
            .iter()
            .enumerate()
            .map(|(i, n)| Candidate { id: NodeId::from(format!("C{i}").as_str()), name: n.clone() })
            .collect();
        let mut chosen: Vec<usize> = Vec::new();
        for ix in pick {
            let mut i = ix.index(names.len());
            while chosen.contains(&i) {
                i = (i + 1) % names.len();
            }
            chosen.push(i);
        }
        let triple: Vec<&str> = chosen.iter().map(|&i| names[i].as_str()).collect();
        let text = format_answer(task, &triple);
        let header = task.template().answer_header;
        let parsed = parse_ranked(&text, Some(&header), &candidates).unwrap();
        let ids: Vec<NodeId> = parsed.items.iter().map(|i| i.candidate.clone().unwrap()).collect();
        let want: Vec<NodeId> = chosen.iter().map(|&i| candidates[i].id.clone()).collect();
        prop_assert_eq!(ids, want);
    }

    #[test]
    fn hgt_is_equivariant_under_relabeling(seed in any::<u64>()) {
        let g = synthetic_graph(SyntheticSpec { papers: 8, authors: 5, venues: 2, max_authors_per_paper: 2, seed });
        // Reverse-sorting relabel: changes every node's dense index.
        let n = g.node_count();
        let relabel: BTreeMap<NodeId, NodeId> = g
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.clone(), NodeId::from(format!("z{:03}", n - i).as_str())))
            .collect();
        let nodes: Vec<NodeRecord> = g
            .nodes()
            .iter()
            .map(|r| NodeRecord { id: relabel[&r.id].clone(), attrs: r.attrs.clone() })
            .collect();
        let edges: Vec<EdgeRecord> = g
            .edges()
            .iter()
            .map(|e| EdgeRecord { src: relabel[&e.src].clone(), dst: relabel[&e.dst].clone(), kind: e.kind })
            .collect();
        let h = HetGraph::build(nodes, edges).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let ids: Vec<NodeId> = g.nodes().iter().map(|r| r.id.clone()).collect();
        let new_ids: Vec<NodeId> = ids.iter().map(|id| relabel[id].clone()).collect();
        let fa = NodeFeatureTable::new(ids.clone(), Matrix::from_rows(&rows)).unwrap();
        let fb = NodeFeatureTable::new(new_ids, Matrix::from_rows(&rows)).unwrap();
        let config = HgtConfig { layers: 2, heads: 2, hidden_dim: 4, seed, ..HgtConfig::default() };
        let params = HgtParams::init(&config, 3).unwrap();
        let ea = hgt_forward(&g, &fa, &params).unwrap();
        let eb = hgt_forward(&h, &fb, &params).unwrap();
        for id in &ids {
            let a = ea.get(id).unwrap();
            let b = eb.get(&relabel[id]).unwrap();
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }
}
