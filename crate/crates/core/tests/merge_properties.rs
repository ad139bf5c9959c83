mod common;

use std::collections::BTreeSet;

use common::merge_oracle::{as_dag, brute_force_merge, longest_to_output, Vertex};
use proptest::prelude::*;
use spdnn::arch_graph::{
    contract_by_label, graph_to_network, order_preservation_check, spdnn_merge, ArchGraph, NodeLabel,
    OpLabel, ParentSet,
};
use spdnn::param_budget::{
    assign_channels, budget_polynomial, count_params, network_template, solve_channel_base,
    BudgetError, BudgetPolynomial, ChannelRule,
};

fn conv(k: u32) -> OpLabel {
    OpLabel::conv(k).unwrap()
}

fn chains(kernels: &[&[u32]]) -> Vec<Vec<OpLabel>> {
    kernels.iter().map(|ks| ks.iter().map(|k| conv(*k)).collect()).collect()
}

fn parent_sets() -> impl Strategy<Value = Vec<Vec<OpLabel>>> {
    let kernel = prop::sample::select(vec![3u32, 5, 7, 9, 11, 13, 15]).prop_map(conv);
    prop::collection::vec(prop::collection::vec(kernel, 1..=10), 1..=6)
}

#[test]
fn diamond_matches_hand_contraction() {
    let seqs = chains(&[&[3, 5], &[3, 7]]);
    let merged = spdnn_merge(&ParentSet::from_op_sequences(&seqs).unwrap()).unwrap();
    let v = |k: u32, d: u32| Vertex::Op(conv(k), d);
    let want_edges: BTreeSet<_> = [
        (Vertex::Input, v(3, 2)),
        (v(3, 2), v(5, 1)),
        (v(3, 2), v(7, 1)),
        (v(5, 1), Vertex::Output),
        (v(7, 1), Vertex::Output),
    ]
    .into_iter()
    .collect();
    assert_eq!(as_dag(&merged).edges, want_edges);
}

#[test]
fn four_parents_match_hand_and_brute_force() {
    let seqs = chains(&[&[3, 5, 3], &[3, 7, 5, 3], &[3, 5, 7, 5, 3], &[3, 7, 9, 7, 3]]);
    let merged = spdnn_merge(&ParentSet::from_op_sequences(&seqs).unwrap()).unwrap();
    let v = |k: u32, d: u32| Vertex::Op(conv(k), d);
    // Ranks worked out by hand from the first contraction.
    let hand: BTreeSet<_> = [
        (Vertex::Input, v(3, 5)),
        (v(3, 5), v(5, 4)),
        (v(3, 5), v(7, 4)),
        (v(5, 4), v(3, 1)),
        (v(5, 4), v(7, 3)),
        (v(7, 4), v(5, 2)),
        (v(7, 4), v(9, 3)),
        (v(7, 3), v(5, 2)),
        (v(9, 3), v(7, 2)),
        (v(5, 2), v(3, 1)),
        (v(7, 2), v(3, 1)),
        (v(3, 1), Vertex::Output),
    ]
    .into_iter()
    .collect();
    let got = as_dag(&merged);
    assert_eq!(got.edges, hand);
    assert_eq!(got.vertices.len(), 10);
    assert_eq!(got, brute_force_merge(&seqs));
    assert!(order_preservation_check(&ParentSet::from_op_sequences(&seqs).unwrap(), &merged));
}

#[test]
fn removing_a_needed_edge_breaks_order_preservation() {
    let seqs = chains(&[&[3, 5, 3], &[3, 7, 5, 3], &[3, 5, 7, 5, 3], &[3, 7, 9, 7, 3]]);
    let parents = ParentSet::from_op_sequences(&seqs).unwrap();
    let merged = spdnn_merge(&parents).unwrap();
    // The only 9C node has a single successor; cutting that edge strands the
    // fourth parent's 9C -> 7C step.
    let nine = merged.nodes().find(|n| n.op == Some(conv(9))).unwrap().id.clone();
    let next = merged.successors(&nine)[0].to_string();
    let cut = merged.without_edge(&nine, &next);
    assert!(!order_preservation_check(&parents, &cut));
}

fn internal(g: &ArchGraph) -> usize {
    g.node_count() - 2
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn merge_invariants(seqs in parent_sets()) {
        let parents = ParentSet::from_op_sequences(&seqs).unwrap();
        let merged = spdnn_merge(&parents).unwrap();
        prop_assert!(merged.validate().is_ok());
        prop_assert!(merged.topological_order().is_some());
        let sources = merged.nodes().filter(|n| merged.predecessors(&n.id).is_empty()).count();
        let sinks = merged.nodes().filter(|n| merged.successors(&n.id).is_empty()).count();
        prop_assert_eq!((sources, sinks), (1, 1));

        prop_assert!(order_preservation_check(&parents, &merged));

        let again = contract_by_label(&merged, NodeLabel::by_output_distance).unwrap();
        prop_assert_eq!(&again, &merged);

        let labels: BTreeSet<_> = merged
            .internal_nodes()
            .map(|n| NodeLabel::by_output_distance(n).unwrap())
            .collect();
        prop_assert_eq!(labels.len(), internal(&merged));

        let total: usize = seqs.iter().map(Vec::len).sum();
        let deepest = seqs.iter().map(Vec::len).max().unwrap();
        prop_assert!(internal(&merged) <= total);
        prop_assert!(internal(&merged) >= deepest);

        for (a, b) in merged.edges() {
            let da = merged.node(a).unwrap().dist_out.unwrap();
            let db = merged.node(b).unwrap().dist_out.unwrap();
            prop_assert!(da >= db + 1);
        }

        let oracle = brute_force_merge(&seqs);
        prop_assert_eq!(as_dag(&merged), oracle.clone());
        let ranks = longest_to_output(&oracle);
        for n in merged.internal_nodes() {
            let v = Vertex::Op(n.op.unwrap(), n.dist_out.unwrap());
            prop_assert_eq!(ranks[&v], n.dist_out.unwrap());
        }
    }

    #[test]
    fn single_parent_is_preserved(seq in prop::collection::vec(
        prop::sample::select(vec![3u32, 5, 7, 9, 11, 13, 15]).prop_map(conv), 1..=10))
    {
        let parents = ParentSet::from_op_sequences(&[seq.clone()]).unwrap();
        let merged = spdnn_merge(&parents).unwrap();
        let order: Vec<_> = merged
            .topological_order()
            .unwrap()
            .into_iter()
            .filter_map(|id| merged.node(&id).unwrap().op)
            .collect();
        prop_assert_eq!(order, seq.clone());
        prop_assert_eq!(merged.edge_count(), seq.len() + 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn parameter_count_follows_polynomial(seqs in parent_sets(), chp in 1u64..=12) {
        let g = spdnn_merge(&ParentSet::from_op_sequences(&seqs).unwrap()).unwrap();
        let rule = ChannelRule::default();
        let template = network_template(&g, &rule).unwrap();
        let mixed = template
            .layers
            .iter()
            .any(|l| l.in_channels.base > 0 && l.in_channels.constant > 0);
        let poly = match budget_polynomial(&template) {
            Ok(p) => p,
            Err(BudgetError::NonLinearChannel(_)) if mixed => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(!mixed);
        let spec = template.instantiate(chp);
        prop_assert!(spec.validate().is_ok());
        prop_assert_eq!(count_params(&spec, false), poly.eval(chp));
        let direct = graph_to_network(&g, &assign_channels(&g, &rule, chp).unwrap()).unwrap();
        prop_assert_eq!(direct, spec);
    }

    #[test]
    fn larger_budget_never_shrinks_base(a in 1u64..20_000, b in 0u64..100, lo in 1u64..2_000_000, extra in 0u64..2_000_000) {
        let poly = BudgetPolynomial { a, b, c: 0 };
        let small = solve_channel_base(&poly, lo).unwrap();
        let large = solve_channel_base(&poly, lo + extra).unwrap();
        prop_assert!(small.chosen <= large.chosen);
        prop_assert!(poly.eval(small.chosen) <= lo || small.chosen == 0);
        prop_assert!(poly.eval(small.chosen + 1) > lo);
    }
}
