//! Step-by-step merge with plain sets, independent of the library's graph
//! type: label parent nodes by (op, depth), union identical labels, rank by
//! longest path to the output, union identical (op, rank) labels.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use spdnn::arch_graph::{ArchGraph, OpLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Vertex {
    Input,
    Output,
    Op(OpLabel, u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    pub vertices: BTreeSet<Vertex>,
    pub edges: BTreeSet<(Vertex, Vertex)>,
}

/// Longest edge count from each vertex to `Output`, by repeated relaxation.
pub fn longest_to_output(dag: &Dag) -> BTreeMap<Vertex, u32> {
    let mut dist: BTreeMap<Vertex, u32> = dag.vertices.iter().map(|v| (*v, 0)).collect();
    for _ in 0..dag.vertices.len() {
        for (a, b) in &dag.edges {
            let cand = dist[b] + 1;
            if cand > dist[a] {
                dist.insert(*a, cand);
            }
        }
    }
    dist
}

pub fn brute_force_merge(parents: &[Vec<OpLabel>]) -> Dag {
    // Steps 1-4: union of parents keyed by (op, distance from input).
    let mut first = Dag {
        vertices: [Vertex::Input, Vertex::Output].into_iter().collect(),
        edges: BTreeSet::new(),
    };
    for ops in parents {
        let mut prev = Vertex::Input;
        for (i, op) in ops.iter().enumerate() {
            let v = Vertex::Op(*op, i as u32 + 1);
            first.vertices.insert(v);
            first.edges.insert((prev, v));
            prev = v;
        }
        first.edges.insert((prev, Vertex::Output));
    }
    // Steps 5-7: relabel by (op, longest distance to output) and union again.
    let rank = longest_to_output(&first);
    let relabel = |v: Vertex| match v {
        Vertex::Op(op, _) => Vertex::Op(op, rank[&v]),
        other => other,
    };
    Dag {
        vertices: first.vertices.iter().map(|v| relabel(*v)).collect(),
        edges: first.edges.iter().map(|(a, b)| (relabel(*a), relabel(*b))).collect(),
    }
}

/// Library graph in the oracle's terms, keyed by (op, dist_out).
pub fn as_dag(g: &ArchGraph) -> Dag {
    let vertex = |id: &str| {
        if id == g.source() {
            Vertex::Input
        } else if id == g.sink() {
            Vertex::Output
        } else {
            let n = g.node(id).expect("edge endpoints exist");
            Vertex::Op(n.op.expect("internal op"), n.dist_out.expect("ranked"))
        }
    };
    Dag {
        vertices: g.nodes().map(|n| vertex(&n.id)).collect(),
        edges: g.edges().map(|(a, b)| (vertex(a), vertex(b))).collect(),
    }
}
