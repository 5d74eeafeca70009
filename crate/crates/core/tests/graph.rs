use proptest::prelude::*;
use spikecore::harness::graph::MAX_TOPICS;
use spikecore::harness::*;
use spikecore::oracle::oracle_run;

/// Paper 0 (held out) cites papers 1 and 2, both on topic "b". A chain
/// 1 - 3 - 4 - 5 hangs off paper 1 with other topics.
pub fn six_node_graph() -> (CitationGraph, GraphSplit) {
    let labels = "paper,topic\nq,b\np1,b\np2,b\np3,a\np4,c\np5,d\n";
    let edges = "q p1\nq p2\np1 p3\np3 p4\np4 p5\n";
    (parse_citation(labels, edges, None).unwrap(), GraphSplit { test: vec![0] })
}

#[test]
fn six_node_example_predicts_cited_topic() {
    let (graph, split) = six_node_graph();
    let params = GraphParams::default();
    let net = build_graph_network(&graph, &split, &params).unwrap();
    assert_eq!(net.config.n, 10);
    let (pred, trace) = classify_node(&net, 0, &params);
    assert_eq!(graph.topic_names[pred.predicted], "b", "{pred:?}");
    assert!(!pred.tied && pred.reachable);
    // The same run on the scalar oracle gives the same weights.
    let oracle = oracle_run(&net.config_for(0), &params.stimulus(), params.t_end()).unwrap();
    assert_eq!(oracle, trace);
}

#[test]
fn isolated_test_paper_is_flagged() {
    let labels = "a,x\nb,y\nc,x\n";
    let graph = parse_citation(labels, "b c\n", None).unwrap();
    let split = GraphSplit { test: vec![0] };
    let params = GraphParams::default();
    let net = build_graph_network(&graph, &split, &params).unwrap();
    let (pred, _) = classify_node(&net, 0, &params);
    assert!(!pred.reachable);
    assert!(pred.tied);
    assert_eq!(pred.predicted, 0);
}

#[test]
fn classification_only_touches_the_test_papers_links() {
    let (graph, split) = six_node_graph();
    let params = GraphParams::default();
    let net = build_graph_network(&graph, &split, &params).unwrap();
    let (_, trace) = classify_node(&net, 0, &params);
    let after = trace.final_weights.unwrap().w_aa;
    for r in 0..net.config.n {
        for c in 0..net.config.n {
            let plastic = (r == 0 && c >= net.papers) || (c == 0 && r >= net.papers);
            if !plastic {
                assert_eq!(after[(r, c)], net.config.w_aa[(r, c)], "({r},{c})");
            }
        }
    }
}

#[test]
fn capacity_is_enforced() {
    let labels: String = (0..100).map(|i| format!("p{i},t{}\n", i % 3)).collect();
    let graph = parse_citation(&labels, "", None).unwrap();
    let err = build_graph_network(&graph, &GraphSplit { test: vec![] }, &GraphParams::default()).unwrap_err();
    assert!(matches!(err, DataError::Capacity { papers: 100, topics: 3, .. }));
}

#[test]
fn divergence_report_tracks_both_models() {
    let (graph, split) = six_node_graph();
    let params = GraphParams::default();
    let net = build_graph_network(&graph, &split, &params).unwrap();
    let report = divergence_report(&net, 0, &params, 8);
    assert_eq!(report.times.len(), report.fixed.len());
    assert_eq!(report.fixed.len(), report.float.len());
    assert!(report.diverged());
}

fn random_graph() -> impl Strategy<Value = CitationGraph> {
    (4usize..40, 1usize..=MAX_TOPICS, any::<u64>()).prop_flat_map(|(n, topics, _)| {
        (
            prop::collection::vec(0..topics, n),
            prop::collection::vec((0..n, 0..n), 0..n * 3),
            Just(n),
            Just(topics),
        )
            .prop_map(|(labels, edges, n, topics)| {
                CitationGraph::new(
                    (0..n).map(|i| format!("p{i}")).collect(),
                    labels,
                    (0..topics).map(|t| format!("t{t}")).collect(),
                    edges,
                )
                .unwrap()
            })
    })
}

proptest! {
    #[test]
    fn reduction_is_connected_and_keeps_topics(graph in random_graph(), frac in 0.0f64..1.0) {
        let target = ((graph.len() as f64) * frac) as usize;
        match microseer_reduce(&graph, target) {
            Ok(r) => {
                prop_assert_eq!(r.len(), target);
                prop_assert!(r.is_connected());
                prop_assert_eq!(r.topics_present(), graph.topics_present());
            }
            Err(DataError::Infeasible { .. }) => {}
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}
