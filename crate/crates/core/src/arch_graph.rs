//! Layer graphs and the two-pass contraction merge.
//!
//! Parent networks are chains of convolution (or pooling) layers. Merging
//! places them in parallel between a shared input and output node, contracts
//! nodes that agree on `(operation, distance from input)`, then contracts
//! again on `(operation, longest distance to output)`. The result is a DAG
//! whose fan-in points become channel concatenations when translated back
//! into a [`NetworkSpec`].

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network_spec::{Activation, LayerSpec, NetworkSpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("graph contains a cycle")]
    Cycle,
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(String, String),
    #[error("edge references undefined node `{0}`")]
    UndefinedNode(String),
    #[error("node `{0}` has no in-edge but is not the input")]
    ExtraSource(String),
    #[error("node `{0}` has no out-edge but is not the output")]
    ExtraSink(String),
    #[error("node `{0}` does not lie on an input-to-output path")]
    Disconnected(String),
    #[error("the input node has an in-edge")]
    InputHasPredecessor,
    #[error("the output node has an out-edge")]
    OutputHasSuccessor,
    #[error("internal node `{0}` has no operation")]
    MissingOp(String),
    #[error("input and output must be distinct nodes")]
    SameTerminal,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid graph: {0}")]
    Validation(#[from] ValidationError),
    #[error("invalid parent: {0}")]
    InvalidParent(String),
    #[error("contraction produced a cycle through label `{0}`")]
    ContractionCycle(String),
    #[error("no channel count for node `{0}`")]
    MissingChannel(String),
    #[error("node `{0}` uses operation {1}, which cannot be translated into a convolution layer")]
    UnsupportedOp(String, OpLabel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    Conv,
    Pool,
}

/// Operation code of a layer, e.g. `7C` (7x7 convolution) or `2P` (2x2 pooling).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OpLabel {
    kind: OpKind,
    size: u32,
}

impl OpLabel {
    pub fn conv(kernel: u32) -> Result<Self, GraphError> {
        if kernel % 2 == 0 {
            return Err(GraphError::Parse(format!(
                "convolution kernel must be odd, got {kernel}"
            )));
        }
        Ok(Self {
            kind: OpKind::Conv,
            size: kernel,
        })
    }

    pub fn pool(window: u32) -> Result<Self, GraphError> {
        if window < 2 {
            return Err(GraphError::Parse(format!(
                "pool window must be at least 2, got {window}"
            )));
        }
        Ok(Self {
            kind: OpKind::Pool,
            size: window,
        })
    }

    pub fn kind(&self) -> OpKind {
        self.kind
    }

    pub fn size(&self) -> u32 {
        self.size
    }
}

impl fmt::Display for OpLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let code = match self.kind {
            OpKind::Conv => 'C',
            OpKind::Pool => 'P',
        };
        write!(f, "{}{}", self.size, code)
    }
}

impl FromStr for OpLabel {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || GraphError::Parse(format!("malformed operation `{s}`"));
        let code = s.chars().last().ok_or_else(bad)?;
        let digits = &s[..s.len() - code.len_utf8()];
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let size: u32 = digits.parse().map_err(|_| bad())?;
        match code {
            'C' => OpLabel::conv(size),
            'P' => OpLabel::pool(size),
            _ => Err(bad()),
        }
    }
}

impl Serialize for OpLabel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OpLabel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphNode {
    pub id: String,
    /// `None` only for the input and output nodes.
    pub op: Option<OpLabel>,
    pub dist_in: u32,
    pub dist_out: Option<u32>,
}

impl GraphNode {
    fn terminal(id: &str) -> Self {
        Self {
            id: id.to_string(),
            op: None,
            dist_in: 0,
            dist_out: None,
        }
    }
}

/// Which distance a contraction label is keyed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axis {
    FromInput,
    ToOutput,
}

/// Label used to decide which internal nodes collapse together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeLabel {
    pub op: OpLabel,
    pub axis: Axis,
    pub distance: u32,
}

impl NodeLabel {
    pub fn by_input_distance(node: &GraphNode) -> Option<Self> {
        Some(Self {
            op: node.op?,
            axis: Axis::FromInput,
            distance: node.dist_in,
        })
    }

    pub fn by_output_distance(node: &GraphNode) -> Option<Self> {
        Some(Self {
            op: node.op?,
            axis: Axis::ToOutput,
            distance: node.dist_out?,
        })
    }
}

impl fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let axis = match self.axis {
            Axis::FromInput => 'i',
            Axis::ToOutput => 'o',
        };
        write!(f, "{}@{}{}", self.op, axis, self.distance)
    }
}

/// Single-source, single-sink DAG of layer operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchGraph {
    nodes: BTreeMap<String, GraphNode>,
    edges: BTreeSet<(String, String)>,
    source: String,
    sink: String,
}

impl ArchGraph {
    /// Builds and validates a graph.
    pub fn new(
        nodes: impl IntoIterator<Item = GraphNode>,
        edges: impl IntoIterator<Item = (String, String)>,
        source: &str,
        sink: &str,
    ) -> Result<Self, GraphError> {
        let mut map = BTreeMap::new();
        for node in nodes {
            if map.contains_key(&node.id) {
                return Err(ValidationError::DuplicateId(node.id).into());
            }
            map.insert(node.id.clone(), node);
        }
        for terminal in [source, sink] {
            map.entry(terminal.to_string())
                .or_insert_with(|| GraphNode::terminal(terminal));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            for end in [&a, &b] {
                if !map.contains_key(end) {
                    return Err(ValidationError::UndefinedNode(end.clone()).into());
                }
            }
            if !set.insert((a.clone(), b.clone())) {
                return Err(ValidationError::DuplicateEdge(a, b).into());
            }
        }
        let graph = Self {
            nodes: map,
            edges: set,
            source: source.to_string(),
            sink: sink.to_string(),
        };
        graph.validate()?;
        Ok(graph)
    }

    /// A chain `input -> ops[0] -> ... -> output` with `dist_in` filled in.
    pub fn chain(ops: &[OpLabel]) -> Self {
        let mut nodes = Vec::with_capacity(ops.len());
        let mut edges = Vec::with_capacity(ops.len() + 1);
        let mut prev = "input".to_string();
        for (i, op) in ops.iter().enumerate() {
            let id = format!("n{}", i + 1);
            nodes.push(GraphNode {
                id: id.clone(),
                op: Some(*op),
                dist_in: i as u32 + 1,
                dist_out: None,
            });
            edges.push((prev, id.clone()));
            prev = id;
        }
        edges.push((prev, "output".to_string()));
        Self::new(nodes, edges, "input", "output").expect("a chain is always a valid graph")
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.source == self.sink {
            return Err(ValidationError::SameTerminal);
        }
        for node in self.nodes.values() {
            if node.op.is_none() && node.id != self.source && node.id != self.sink {
                return Err(ValidationError::MissingOp(node.id.clone()));
            }
        }
        if self.edges.iter().any(|(a, _)| *a == self.sink) {
            return Err(ValidationError::OutputHasSuccessor);
        }
        if self.edges.iter().any(|(_, b)| *b == self.source) {
            return Err(ValidationError::InputHasPredecessor);
        }
        for id in self.nodes.keys() {
            if *id != self.source && self.predecessors(id).is_empty() {
                return Err(ValidationError::ExtraSource(id.clone()));
            }
            if *id != self.sink && self.successors(id).is_empty() {
                return Err(ValidationError::ExtraSink(id.clone()));
            }
        }
        if self.topological_order().is_none() {
            return Err(ValidationError::Cycle);
        }
        // With one source, one sink and no cycles every node is on some
        // source-to-sink path; the reachability sweep confirms it.
        let reach = self.reachable_from(&self.source);
        if let Some(id) = self.nodes.keys().find(|id| !reach.contains(*id)) {
            return Err(ValidationError::Disconnected(id.clone()));
        }
        Ok(())
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn sink(&self) -> &str {
        &self.sink
    }

    pub fn node(&self, id: &str) -> Option<&GraphNode> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &GraphNode> {
        self.nodes.values()
    }

    /// Nodes other than the input and output.
    pub fn internal_nodes(&self) -> impl Iterator<Item = &GraphNode> {
        self.nodes
            .values()
            .filter(move |n| n.id != self.source && n.id != self.sink)
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn predecessors(&self, id: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|(_, b)| b == id)
            .map(|(a, _)| a.as_str())
            .collect()
    }

    pub fn successors(&self, id: &str) -> Vec<&str> {
        self.edges
            .iter()
            .filter(|(a, _)| a == id)
            .map(|(_, b)| b.as_str())
            .collect()
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.edges.contains(&(from.to_string(), to.to_string()))
    }

    /// Copy of the graph without one edge. The copy is not re-validated and
    /// may violate the single-source/sink invariants.
    pub fn without_edge(&self, from: &str, to: &str) -> ArchGraph {
        let mut g = self.clone();
        g.edges.remove(&(from.to_string(), to.to_string()));
        g
    }

    fn reachable_from(&self, start: &str) -> BTreeSet<String> {
        let adj = self.adjacency();
        let mut seen = BTreeSet::new();
        let mut stack = vec![start.to_string()];
        while let Some(id) = stack.pop() {
            if seen.insert(id.clone()) {
                if let Some(next) = adj.get(&id) {
                    stack.extend(next.iter().cloned());
                }
            }
        }
        seen
    }

    fn adjacency(&self) -> BTreeMap<String, Vec<String>> {
        let mut adj: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (a, b) in &self.edges {
            adj.entry(a.clone()).or_default().push(b.clone());
        }
        adj
    }

    /// Kahn's algorithm with lexicographic tie-breaking; `None` on a cycle.
    pub fn topological_order(&self) -> Option<Vec<String>> {
        self.topological_order_by(|id| id.to_string())
    }

    fn topological_order_by<K: Ord>(&self, key: impl Fn(&str) -> K) -> Option<Vec<String>> {
        let mut indegree: BTreeMap<&str, usize> =
            self.nodes.keys().map(|k| (k.as_str(), 0)).collect();
        for (_, b) in &self.edges {
            *indegree.get_mut(b.as_str()).expect("edge endpoints exist") += 1;
        }
        let adj = self.adjacency();
        let mut ready: BTreeSet<(K, String)> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(id, _)| (key(id), id.to_string()))
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(first) = ready.pop_first() {
            let id = first.1;
            if let Some(next) = adj.get(&id) {
                for b in next {
                    let d = indegree.get_mut(b.as_str()).expect("edge endpoints exist");
                    *d -= 1;
                    if *d == 0 {
                        ready.insert((key(b), b.clone()));
                    }
                }
            }
            order.push(id);
        }
        (order.len() == self.nodes.len()).then_some(order)
    }
}

/// Chain-shaped parent architectures to be merged.
#[derive(Debug, Clone, PartialEq)]
pub struct ParentSet {
    parents: Vec<ArchGraph>,
}

impl ParentSet {
    pub fn new(parents: Vec<ArchGraph>) -> Result<Self, GraphError> {
        if parents.is_empty() {
            return Err(GraphError::InvalidParent("parent set is empty".into()));
        }
        for (i, p) in parents.iter().enumerate() {
            chain_ops(p).map_err(|e| GraphError::InvalidParent(format!("parent {i}: {e}")))?;
        }
        Ok(Self { parents })
    }

    pub fn from_op_sequences(seqs: &[Vec<OpLabel>]) -> Result<Self, GraphError> {
        Self::new(seqs.iter().map(|s| ArchGraph::chain(s)).collect())
    }

    pub fn parents(&self) -> &[ArchGraph] {
        &self.parents
    }

    /// Internal operation sequence of each parent, input to output.
    pub fn op_sequences(&self) -> Vec<Vec<OpLabel>> {
        self.parents
            .iter()
            .map(|p| chain_ops(p).expect("validated on construction"))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }
}

fn chain_ops(g: &ArchGraph) -> Result<Vec<OpLabel>, String> {
    let mut ops = Vec::new();
    let mut current = g.source().to_string();
    let mut visited = 1;
    loop {
        let next = g.successors(&current);
        if next.len() != 1 {
            return Err(format!("node `{current}` has {} successors", next.len()));
        }
        let next = next[0].to_string();
        if g.predecessors(&next).len() != 1 {
            return Err(format!("node `{next}` has more than one predecessor"));
        }
        visited += 1;
        if next == g.sink() {
            break;
        }
        ops.push(g.node(&next).and_then(|n| n.op).ok_or("missing op")?);
        current = next;
    }
    if visited != g.node_count() {
        return Err("graph is not a simple chain".into());
    }
    Ok(ops)
}

/// Places every parent between one shared input and output node and tags each
/// internal node with its distance from the input.
pub fn label_by_input_distance(parents: &ParentSet) -> Result<ArchGraph, GraphError> {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for (pi, ops) in parents.op_sequences().iter().enumerate() {
        if ops.is_empty() {
            edges.push(("input".to_string(), "output".to_string()));
            continue;
        }
        let mut prev = "input".to_string();
        for (depth, op) in ops.iter().enumerate() {
            let id = format!("p{}.{}", pi, depth + 1);
            nodes.push(GraphNode {
                id: id.clone(),
                op: Some(*op),
                dist_in: depth as u32 + 1,
                dist_out: None,
            });
            edges.push((prev, id.clone()));
            prev = id;
        }
        edges.push((prev, "output".to_string()));
    }
    // Identical edges only arise from empty parents; collapse them.
    edges.sort();
    edges.dedup();
    ArchGraph::new(nodes, edges, "input", "output")
}

/// Merges all internal nodes that share a label, keeping every connection.
///
/// Input and output nodes keep their own reserved identity. Contracted nodes
/// are named after their label. Parallel edges collapse to one.
pub fn contract_by_label<F>(g: &ArchGraph, label_of: F) -> Result<ArchGraph, GraphError>
where
    F: Fn(&GraphNode) -> Option<NodeLabel>,
{
    let mut image: BTreeMap<&str, String> = BTreeMap::new();
    let mut groups: BTreeMap<String, (NodeLabel, Vec<&GraphNode>)> = BTreeMap::new();
    for node in g.nodes() {
        if node.id == g.source || node.id == g.sink {
            image.insert(&node.id, node.id.clone());
            continue;
        }
        let label = label_of(node).ok_or_else(|| {
            GraphError::Parse(format!("labeling is undefined on node `{}`", node.id))
        })?;
        let name = label.to_string();
        if name == g.source || name == g.sink {
            return Err(GraphError::Parse(format!(
                "label `{name}` collides with a reserved terminal id"
            )));
        }
        image.insert(&node.id, name.clone());
        groups.entry(name).or_insert((label, Vec::new())).1.push(node);
    }

    let mut nodes = vec![
        g.nodes[&g.source].clone(),
        g.nodes[&g.sink].clone(),
    ];
    for (name, (label, members)) in &groups {
        let dist_in = members.iter().map(|n| n.dist_in).min().unwrap_or(0);
        let first_out = members[0].dist_out;
        let dist_out = members
            .iter()
            .all(|n| n.dist_out == first_out)
            .then_some(first_out)
            .flatten();
        nodes.push(GraphNode {
            id: name.clone(),
            op: Some(label.op),
            dist_in,
            dist_out,
        });
    }

    let mut edges = BTreeSet::new();
    for (a, b) in &g.edges {
        let (ia, ib) = (&image[a.as_str()], &image[b.as_str()]);
        if ia == ib {
            return Err(GraphError::ContractionCycle(ia.clone()));
        }
        edges.insert((ia.clone(), ib.clone()));
    }

    match ArchGraph::new(nodes, edges, &g.source, &g.sink) {
        Ok(graph) => Ok(graph),
        Err(GraphError::Validation(ValidationError::Cycle)) => {
            Err(GraphError::ContractionCycle(find_cycle_label(&groups, g, &image)))
        }
        Err(e) => Err(e),
    }
}

fn find_cycle_label(
    groups: &BTreeMap<String, (NodeLabel, Vec<&GraphNode>)>,
    g: &ArchGraph,
    image: &BTreeMap<&str, String>,
) -> String {
    // Report the first multi-member group whose members end up on a cycle.
    let mut adj: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (a, b) in &g.edges {
        adj.entry(image[a.as_str()].as_str())
            .or_default()
            .insert(image[b.as_str()].as_str());
    }
    for name in groups.keys() {
        let mut stack: Vec<&str> = adj
            .get(name.as_str())
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        let mut seen = BTreeSet::new();
        while let Some(v) = stack.pop() {
            if v == name {
                return name.clone();
            }
            if seen.insert(v) {
                if let Some(next) = adj.get(v) {
                    stack.extend(next.iter().copied());
                }
            }
        }
    }
    "<unknown>".into()
}

/// Fills `dist_out` with the longest path length from each node to the sink.
pub fn assign_output_distance(g: &ArchGraph) -> ArchGraph {
    let order = g
        .topological_order()
        .expect("ArchGraph values are acyclic");
    let mut out = g.clone();
    let mut dist: BTreeMap<&str, u32> = BTreeMap::new();
    for id in order.iter().rev() {
        let d = g
            .successors(id)
            .iter()
            .map(|s| dist[s] + 1)
            .max()
            .unwrap_or(0);
        dist.insert(id, d);
    }
    for (id, node) in out.nodes.iter_mut() {
        node.dist_out = Some(dist[id.as_str()]);
    }
    out
}

/// Full merge: label by input distance, contract, label by output distance,
/// contract again. The returned graph carries `dist_out` on every node.
pub fn spdnn_merge(parents: &ParentSet) -> Result<ArchGraph, GraphError> {
    let union = label_by_input_distance(parents)?;
    let first = contract_by_label(&union, NodeLabel::by_input_distance)?;
    let ranked = assign_output_distance(&first);
    let second = contract_by_label(&ranked, NodeLabel::by_output_distance)?;
    Ok(assign_output_distance(&second))
}

/// True when, for every parent, some input-to-output path of `merged` visits
/// the parent's operations in order (as a subsequence).
pub fn order_preservation_check(parents: &ParentSet, merged: &ArchGraph) -> bool {
    let Some(order) = merged.topological_order() else {
        return false;
    };
    parents.op_sequences().iter().all(|seq| {
        // best[v]: longest prefix of `seq` matched on some source->v path.
        let mut best: BTreeMap<&str, Option<usize>> = BTreeMap::new();
        for id in &order {
            let reached = if id == merged.source() {
                Some(0)
            } else {
                merged
                    .predecessors(id)
                    .iter()
                    .filter_map(|p| best.get(p).copied().flatten())
                    .max()
            };
            let matched = reached.map(|m| {
                let op = merged.node(id).and_then(|n| n.op);
                if m < seq.len() && op == Some(seq[m]) {
                    m + 1
                } else {
                    m
                }
            });
            best.insert(id, matched);
        }
        best.get(merged.sink()).copied().flatten() == Some(seq.len())
    })
}

/// Emission order used for networks: Kahn's algorithm, ready nodes taken by
/// larger `dist_out` first, then by id.
pub fn emission_order(g: &ArchGraph) -> Vec<String> {
    let ranked;
    let g = if g.nodes().all(|n| n.dist_out.is_some()) {
        g
    } else {
        ranked = assign_output_distance(g);
        &ranked
    };
    g.topological_order_by(|id| std::cmp::Reverse(g.node(id).and_then(|n| n.dist_out)))
        .expect("ArchGraph values are acyclic")
}

/// Generic back-translation shared by concrete and symbolic channel maps.
pub(crate) fn emit_layers<C: Clone>(
    g: &ArchGraph,
    channels: &BTreeMap<String, C>,
    input_channels: C,
    output_channels: C,
    is_output_width: impl Fn(&C) -> bool,
    sum: impl Fn(&[C]) -> C,
) -> Result<NetworkSpec<C>, GraphError> {
    let order = emission_order(g);
    let position: BTreeMap<&str, usize> = order
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let ordered_preds = |id: &str| {
        let mut preds = g.predecessors(id);
        preds.sort_by_key(|p| position[p]);
        preds
    };
    let width_of = |id: &str| -> Result<C, GraphError> {
        if id == g.source() {
            Ok(input_channels.clone())
        } else {
            channels
                .get(id)
                .cloned()
                .ok_or_else(|| GraphError::MissingChannel(id.to_string()))
        }
    };

    let sink_preds = ordered_preds(g.sink());
    let direct_output = sink_preds.len() == 1
        && sink_preds[0] != g.source()
        && is_output_width(&width_of(sink_preds[0])?);

    let mut layers = Vec::new();
    for id in &order {
        if id == g.source() || id == g.sink() {
            continue;
        }
        let node = g.node(id).expect("ordered ids exist");
        let op = node.op.expect("internal nodes carry an op");
        if op.kind() != OpKind::Conv {
            return Err(GraphError::UnsupportedOp(id.clone(), op));
        }
        let inputs: Vec<String> = ordered_preds(id).iter().map(|s| s.to_string()).collect();
        let widths = inputs
            .iter()
            .map(|s| width_of(s))
            .collect::<Result<Vec<_>, _>>()?;
        let is_final = direct_output && sink_preds[0] == id;
        layers.push(LayerSpec {
            id: id.clone(),
            kernel: op.size() as usize,
            in_channels: sum(&widths),
            out_channels: width_of(id)?,
            activation: if is_final {
                Activation::Sigmoid
            } else {
                Activation::Relu
            },
            inputs,
            pool: false,
            unpool_from: None,
            batch_norm: false,
        });
    }
    if !direct_output {
        let inputs: Vec<String> = sink_preds.iter().map(|s| s.to_string()).collect();
        let widths = inputs
            .iter()
            .map(|s| width_of(s))
            .collect::<Result<Vec<_>, _>>()?;
        layers.push(LayerSpec {
            id: "head".to_string(),
            kernel: 1,
            in_channels: sum(&widths),
            out_channels: output_channels,
            activation: Activation::Sigmoid,
            inputs,
            pool: false,
            unpool_from: None,
            batch_norm: false,
        });
    }
    Ok(NetworkSpec {
        input_id: g.source().to_string(),
        output_id: g.sink().to_string(),
        input_channels,
        layers,
    })
}

/// Translates a merged graph back into a layer list. A node with several
/// predecessors reads the channel concatenation of their outputs. When the
/// output node has a single 1-channel predecessor, that layer is the output
/// layer; otherwise a 1x1 sigmoid head fuses the output's predecessors.
pub fn graph_to_network(
    g: &ArchGraph,
    channels: &BTreeMap<String, usize>,
) -> Result<NetworkSpec, GraphError> {
    let input_channels = channels.get(g.source()).copied().unwrap_or(1);
    emit_layers(g, channels, input_channels, 1, |c| *c == 1, |w| w.iter().sum())
}

// ---------------------------------------------------------------------------
// JSON document

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct NodeDoc {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<OpLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist_in: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist_out: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct GraphDoc {
    pub nodes: Vec<NodeDoc>,
    pub edges: Vec<(String, String)>,
    pub input: String,
    pub output: String,
}

impl ArchGraph {
    pub(crate) fn from_doc(doc: GraphDoc) -> Result<Self, GraphError> {
        let mut seen = BTreeSet::new();
        let mut nodes = Vec::new();
        for n in doc.nodes {
            if !seen.insert(n.id.clone()) {
                return Err(ValidationError::DuplicateId(n.id).into());
            }
            let terminal = n.id == doc.input || n.id == doc.output;
            if n.op.is_none() && !terminal {
                return Err(ValidationError::MissingOp(n.id).into());
            }
            if n.op.is_some() && terminal {
                return Err(GraphError::Parse(format!(
                    "terminal node `{}` must not carry an operation",
                    n.id
                )));
            }
            nodes.push(GraphNode {
                id: n.id,
                op: n.op,
                dist_in: n.dist_in.unwrap_or(0),
                dist_out: n.dist_out,
            });
        }
        let mut graph = ArchGraph::new(nodes, doc.edges, &doc.input, &doc.output)?;
        if graph.internal_nodes().all(|n| n.dist_in == 0) {
            graph.fill_chain_distances();
        }
        Ok(graph)
    }

    pub(crate) fn to_doc(&self) -> GraphDoc {
        let order = emission_order(self);
        let nodes = order
            .iter()
            .map(|id| {
                let n = &self.nodes[id];
                let terminal = *id == self.source || *id == self.sink;
                NodeDoc {
                    id: id.clone(),
                    op: n.op,
                    dist_in: (!terminal).then_some(n.dist_in),
                    dist_out: n.dist_out,
                }
            })
            .collect();
        GraphDoc {
            nodes,
            edges: self.edges.iter().cloned().collect(),
            input: self.source.clone(),
            output: self.sink.clone(),
        }
    }

    /// Sets `dist_in` to the shortest hop count from the input; on a chain this
    /// is the layer depth.
    fn fill_chain_distances(&mut self) {
        let mut dist: BTreeMap<String, u32> = BTreeMap::new();
        let mut queue = VecDeque::from([(self.source.clone(), 0u32)]);
        while let Some((id, d)) = queue.pop_front() {
            if dist.contains_key(&id) {
                continue;
            }
            dist.insert(id.clone(), d);
            for s in self.successors(&id) {
                queue.push_back((s.to_string(), d + 1));
            }
        }
        for (id, node) in self.nodes.iter_mut() {
            node.dist_in = dist.get(id).copied().unwrap_or(0);
        }
    }

    /// Parses an architecture document (JSON).
    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let doc: GraphDoc =
            serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
        Self::from_doc(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("graph documents serialize")
    }
}

/// Parses an architecture-spec document into a validated graph.
pub fn parse_arch_graph(text: &str) -> Result<ArchGraph, GraphError> {
    ArchGraph::from_json(text)
}

/// Parent-set file: either a list of architecture documents or a list of
/// operation-code sequences such as `["3C", "5C", "3C"]`.
pub fn parse_parent_set(text: &str) -> Result<ParentSet, GraphError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Ops(Vec<OpLabel>),
        Graph(GraphDoc),
    }
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum File {
        Wrapped { parents: Vec<Entry> },
        Bare(Vec<Entry>),
    }
    let file: File = serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
    let entries = match file {
        File::Wrapped { parents } | File::Bare(parents) => parents,
    };
    let graphs = entries
        .into_iter()
        .map(|e| match e {
            Entry::Ops(ops) => Ok(ArchGraph::chain(&ops)),
            Entry::Graph(doc) => ArchGraph::from_doc(doc),
        })
        .collect::<Result<Vec<_>, _>>()?;
    ParentSet::new(graphs)
}
