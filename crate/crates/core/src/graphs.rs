//! Open graphs, information flows, and the built-in graph library.
//!
//! An [`OpenGraph`] is a simple connected graph with designated input and
//! output vertex sets of equal size. A [`FlowSpec`] assigns each measured
//! (non-output) vertex a successor along which its state is teleported,
//! together with a total measurement order; the two standard causal-flow
//! conditions are checked by [`validate_flow`].
//!
//! Vertex labels of the built-ins follow the source figures: the H-shaped
//! six-vertex graph is labelled 1..6 with 1-3-5 the top rail, 2-4-6 the
//! bottom rail and 3-4 the bridge; the 2xN box clusters are labelled
//! row-major, top row first.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::patterns::{Circuit, Gate};

/// Vertex label. Built-ins use small integers matching the figure labels.
pub type VertexId = u32;

/// Construction errors for [`OpenGraph`].
#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge ({0}, {1}) appears more than once")]
    DuplicateEdge(VertexId, VertexId),
    #[error("self-loop on vertex {0}")]
    SelfLoop(VertexId),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("input set has {inputs} vertices but output set has {outputs}")]
    UnequalIoSize { inputs: usize, outputs: usize },
    #[error("vertex {0} is not declared")]
    UnknownVertex(VertexId),
    #[error("vertex {0} declared more than once")]
    DuplicateVertex(VertexId),
    #[error("graph has no vertices")]
    Empty,
    #[error("unknown builtin graph name `{0}`")]
    UnknownName(String),
    #[error("circuit contains a gate not supported by the graph mapping")]
    UnsupportedGate,
    #[error("entangling gate on wire {0} is not followed by any single-wire rotation")]
    DanglingEntangler(usize),
}

/// A simple connected graph with designated input/output sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawOpenGraph", into = "RawOpenGraph")]
pub struct OpenGraph {
    vertices: Vec<VertexId>,
    edges: Vec<(VertexId, VertexId)>,
    inputs: Vec<VertexId>,
    outputs: Vec<VertexId>,
    adjacency: BTreeMap<VertexId, BTreeSet<VertexId>>,
}

/// Wire form of [`OpenGraph`]; re-validated on deserialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawOpenGraph {
    pub vertices: Vec<VertexId>,
    pub edges: Vec<(VertexId, VertexId)>,
    pub inputs: Vec<VertexId>,
    pub outputs: Vec<VertexId>,
}

impl TryFrom<RawOpenGraph> for OpenGraph {
    type Error = GraphError;

    fn try_from(raw: RawOpenGraph) -> Result<Self, Self::Error> {
        OpenGraph::new(raw.vertices, raw.edges, raw.inputs, raw.outputs)
    }
}

impl From<OpenGraph> for RawOpenGraph {
    fn from(graph: OpenGraph) -> Self {
        RawOpenGraph {
            vertices: graph.vertices,
            edges: graph.edges,
            inputs: graph.inputs,
            outputs: graph.outputs,
        }
    }
}

impl OpenGraph {
    /// Validates and builds an open graph. Vertex ordering is preserved as
    /// given; edges are stored with endpoints sorted.
    pub fn new(
        vertices: Vec<VertexId>,
        edges: Vec<(VertexId, VertexId)>,
        inputs: Vec<VertexId>,
        outputs: Vec<VertexId>,
    ) -> Result<Self, GraphError> {
        if vertices.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut seen = BTreeSet::new();
        for &v in &vertices {
            if !seen.insert(v) {
                return Err(GraphError::DuplicateVertex(v));
            }
        }
        let mut adjacency: BTreeMap<VertexId, BTreeSet<VertexId>> =
            vertices.iter().map(|&v| (v, BTreeSet::new())).collect();
        let mut normalized = Vec::with_capacity(edges.len());
        let mut edge_set = BTreeSet::new();
        for &(a, b) in &edges {
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            for v in [a, b] {
                if !seen.contains(&v) {
                    return Err(GraphError::UnknownVertex(v));
                }
            }
            let e = (a.min(b), a.max(b));
            if !edge_set.insert(e) {
                return Err(GraphError::DuplicateEdge(e.0, e.1));
            }
            normalized.push(e);
            adjacency.get_mut(&e.0).unwrap().insert(e.1);
            adjacency.get_mut(&e.1).unwrap().insert(e.0);
        }
        for io in [&inputs, &outputs] {
            let mut io_seen = BTreeSet::new();
            for &v in io.iter() {
                if !seen.contains(&v) {
                    return Err(GraphError::UnknownVertex(v));
                }
                if !io_seen.insert(v) {
                    return Err(GraphError::DuplicateVertex(v));
                }
            }
        }
        if inputs.len() != outputs.len() {
            return Err(GraphError::UnequalIoSize {
                inputs: inputs.len(),
                outputs: outputs.len(),
            });
        }
        let graph = Self { vertices, edges: normalized, inputs, outputs, adjacency };
        if !graph.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(graph)
    }

    fn is_connected(&self) -> bool {
        let start = self.vertices[0];
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &u in &self.adjacency[&v] {
                if seen.insert(u) {
                    stack.push(u);
                }
            }
        }
        seen.len() == self.vertices.len()
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    pub fn inputs(&self) -> &[VertexId] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[VertexId] {
        &self.outputs
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.adjacency.contains_key(&v)
    }

    pub fn neighbors(&self, v: VertexId) -> impl Iterator<Item = VertexId> + '_ {
        self.adjacency.get(&v).into_iter().flatten().copied()
    }

    pub fn has_edge(&self, a: VertexId, b: VertexId) -> bool {
        self.adjacency.get(&a).is_some_and(|n| n.contains(&b))
    }

    /// Rebuilds the adjacency map after deserialization and re-validates.
    pub fn from_parts(
        vertices: Vec<VertexId>,
        edges: Vec<(VertexId, VertexId)>,
        inputs: Vec<VertexId>,
        outputs: Vec<VertexId>,
    ) -> Result<Self, GraphError> {
        Self::new(vertices, edges, inputs, outputs)
    }

    /// Brute-force isomorphism check, intended for graphs of at most ~10
    /// vertices. Input/output designations must map onto each other.
    pub fn is_isomorphic(&self, other: &OpenGraph) -> bool {
        if self.vertices.len() != other.vertices.len()
            || self.edges.len() != other.edges.len()
            || self.inputs.len() != other.inputs.len()
            || self.outputs.len() != other.outputs.len()
        {
            return false;
        }
        let mine = self.vertices.clone();
        let theirs = other.vertices.clone();
        let in_a: BTreeSet<_> = self.inputs.iter().copied().collect();
        let out_a: BTreeSet<_> = self.outputs.iter().copied().collect();
        let in_b: BTreeSet<_> = other.inputs.iter().copied().collect();
        let out_b: BTreeSet<_> = other.outputs.iter().copied().collect();
        let mut map: BTreeMap<VertexId, VertexId> = BTreeMap::new();
        let mut used = BTreeSet::new();
        fn place(
            idx: usize,
            mine: &[VertexId],
            theirs: &[VertexId],
            a: &OpenGraph,
            b: &OpenGraph,
            in_a: &BTreeSet<VertexId>,
            out_a: &BTreeSet<VertexId>,
            in_b: &BTreeSet<VertexId>,
            out_b: &BTreeSet<VertexId>,
            map: &mut BTreeMap<VertexId, VertexId>,
            used: &mut BTreeSet<VertexId>,
        ) -> bool {
            if idx == mine.len() {
                return true;
            }
            let v = mine[idx];
            for &w in theirs {
                if used.contains(&w)
                    || a.adjacency[&v].len() != b.adjacency[&w].len()
                    || in_a.contains(&v) != in_b.contains(&w)
                    || out_a.contains(&v) != out_b.contains(&w)
                {
                    continue;
                }
                let consistent = map
                    .iter()
                    .all(|(&p, &q)| a.has_edge(v, p) == b.has_edge(w, q));
                if !consistent {
                    continue;
                }
                map.insert(v, w);
                used.insert(w);
                if place(idx + 1, mine, theirs, a, b, in_a, out_a, in_b, out_b, map, used) {
                    return true;
                }
                map.remove(&v);
                used.remove(&w);
            }
            false
        }
        place(
            0, &mine, &theirs, self, other, &in_a, &out_a, &in_b, &out_b, &mut map, &mut used,
        )
    }
}

/// Successor assignment plus measurement order realizing one flow.
///
/// The successor map is defined exactly on the non-output vertices; its
/// complement of the range is the flow's input set. Both sets are derived,
/// so a `FlowSpec` fixes its own input/output designation, which may differ
/// from the graph's default one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub successor: BTreeMap<VertexId, VertexId>,
    pub order: Vec<VertexId>,
}

impl FlowSpec {
    pub fn new(successor: BTreeMap<VertexId, VertexId>, order: Vec<VertexId>) -> Self {
        Self { successor, order }
    }

    /// Output set: vertices with no successor, ascending.
    pub fn outputs(&self, graph: &OpenGraph) -> Vec<VertexId> {
        graph
            .vertices()
            .iter()
            .copied()
            .filter(|v| !self.successor.contains_key(v))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Input set: vertices that are nobody's successor, ascending.
    pub fn inputs(&self, graph: &OpenGraph) -> Vec<VertexId> {
        let range: BTreeSet<_> = self.successor.values().copied().collect();
        graph
            .vertices()
            .iter()
            .copied()
            .filter(|v| !range.contains(v))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// The vertex paths from each input to its output, sorted by output id.
    /// Only meaningful for validated flows.
    pub fn paths(&self, graph: &OpenGraph) -> Vec<Vec<VertexId>> {
        let mut paths: Vec<Vec<VertexId>> = self
            .inputs(graph)
            .into_iter()
            .map(|start| {
                let mut path = vec![start];
                while let Some(&next) = self.successor.get(path.last().unwrap()) {
                    path.push(next);
                }
                path
            })
            .collect();
        paths.sort_by_key(|p| *p.last().unwrap());
        paths
    }
}

/// A single violated flow condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowViolation {
    /// successor(v) is not adjacent to v.
    NonNeighborSuccessor { vertex: VertexId, successor: VertexId },
    /// Two vertices share a successor.
    NonInjectiveSuccessor { first: VertexId, second: VertexId, successor: VertexId },
    /// v does not precede its successor, or a neighbor of its successor.
    OrderViolation { vertex: VertexId, must_precede: VertexId },
    /// The flow references a vertex the graph does not have.
    UnknownVertex { vertex: VertexId },
    /// The measurement order is not exactly the successor domain.
    OrderDomainMismatch,
    /// A vertex is mapped onto a flow input.
    SuccessorIsInput { vertex: VertexId, successor: VertexId },
}

impl std::fmt::Display for FlowViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FlowViolation::NonNeighborSuccessor { vertex, successor } => {
                write!(f, "successor({vertex}) = {successor} is not a neighbor")
            }
            FlowViolation::NonInjectiveSuccessor { first, second, successor } => {
                write!(f, "vertices {first} and {second} both map to {successor}")
            }
            FlowViolation::OrderViolation { vertex, must_precede } => {
                write!(f, "vertex {vertex} must be measured before {must_precede}")
            }
            FlowViolation::UnknownVertex { vertex } => write!(f, "unknown vertex {vertex}"),
            FlowViolation::OrderDomainMismatch => {
                write!(f, "measurement order does not cover the measured vertices exactly once")
            }
            FlowViolation::SuccessorIsInput { vertex, successor } => {
                write!(f, "successor({vertex}) = {successor} is a flow input")
            }
        }
    }
}

/// Outcome of [`validate_flow`]: valid, or the list of violated conditions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowReport {
    pub violations: Vec<FlowViolation>,
}

impl FlowReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the causal-flow conditions: the successor of a measured vertex is
/// one of its neighbors, successors are distinct, every measured vertex
/// precedes its successor and every neighbor of its successor (output
/// vertices count as measured last).
pub fn validate_flow(graph: &OpenGraph, flow: &FlowSpec) -> FlowReport {
    let mut violations = Vec::new();
    for (&v, &s) in &flow.successor {
        for &x in [v, s].iter() {
            if !graph.contains(x) {
                violations.push(FlowViolation::UnknownVertex { vertex: x });
            }
        }
    }
    for &v in &flow.order {
        if !graph.contains(v) {
            violations.push(FlowViolation::UnknownVertex { vertex: v });
        }
    }
    if !violations.is_empty() {
        return FlowReport { violations };
    }

    let domain: BTreeSet<_> = flow.successor.keys().copied().collect();
    let order_set: BTreeSet<_> = flow.order.iter().copied().collect();
    if order_set != domain || flow.order.len() != domain.len() {
        violations.push(FlowViolation::OrderDomainMismatch);
    }

    let mut by_successor: BTreeMap<VertexId, VertexId> = BTreeMap::new();
    for (&v, &s) in &flow.successor {
        if let Some(&first) = by_successor.get(&s) {
            violations.push(FlowViolation::NonInjectiveSuccessor { first, second: v, successor: s });
        } else {
            by_successor.insert(s, v);
        }
        if !graph.has_edge(v, s) {
            violations.push(FlowViolation::NonNeighborSuccessor { vertex: v, successor: s });
        }
    }

    let inputs: BTreeSet<_> = flow.inputs(graph).into_iter().collect();
    for (&v, &s) in &flow.successor {
        if inputs.contains(&s) && s != v {
            // A successor that is nobody's... an input, under the derived
            // definition, can never be in the range; kept for explicitness
            // when callers construct flows with inconsistent parts.
            violations.push(FlowViolation::SuccessorIsInput { vertex: v, successor: s });
        }
    }

    // Position in the measurement order; outputs sort after everything.
    let position: BTreeMap<VertexId, usize> =
        flow.order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let pos = |v: VertexId| position.get(&v).copied().unwrap_or(usize::MAX);
    for (&v, &s) in &flow.successor {
        if pos(v) >= pos(s) {
            violations.push(FlowViolation::OrderViolation { vertex: v, must_precede: s });
        }
        for u in graph.neighbors(s) {
            if u != v && pos(v) >= pos(u) {
                violations.push(FlowViolation::OrderViolation { vertex: v, must_precede: u });
            }
        }
    }

    FlowReport { violations }
}

/// Builds a validated open graph; see [`OpenGraph::new`].
pub fn build_graph(
    vertices: Vec<VertexId>,
    edges: Vec<(VertexId, VertexId)>,
    inputs: Vec<VertexId>,
    outputs: Vec<VertexId>,
) -> Result<OpenGraph, GraphError> {
    OpenGraph::new(vertices, edges, inputs, outputs)
}

/// A flow shipped with a built-in graph, under a short stable name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedFlow {
    pub name: String,
    pub flow: FlowSpec,
}

/// Names accepted by [`builtin_graph`].
pub const BUILTIN_NAMES: [&str; 3] = ["H6", "BOX_2x4", "BOX_2x5"];

/// Returns a built-in graph and its two reference flows.
///
/// * `H6` — the six-vertex H-shaped graph; flow `a` teleports 1->3->5 and
///   2->4->6 (outputs {5, 6}), flow `b` runs the single chain 1->3->4->6
///   with 2 and 5 kept as passive rails (outputs {2, 5, 6}).
/// * `BOX_2x4`, `BOX_2x5` — full 2xN grid clusters; flow `lr` teleports
///   each row left to right (2 outputs, depth N), flow `tb` teleports each
///   column top to bottom (N outputs, depth 2).
pub fn builtin_graph(name: &str) -> Result<(OpenGraph, Vec<NamedFlow>), GraphError> {
    match name {
        "H6" => {
            let graph = OpenGraph::new(
                (1..=6).collect(),
                vec![(1, 3), (3, 5), (2, 4), (4, 6), (3, 4)],
                vec![1, 2],
                vec![5, 6],
            )?;
            let flow_a = FlowSpec::new(
                BTreeMap::from([(1, 3), (2, 4), (3, 5), (4, 6)]),
                vec![1, 2, 3, 4],
            );
            let flow_b = FlowSpec::new(BTreeMap::from([(1, 3), (3, 4), (4, 6)]), vec![1, 3, 4]);
            Ok((
                graph,
                vec![
                    NamedFlow { name: "a".into(), flow: flow_a },
                    NamedFlow { name: "b".into(), flow: flow_b },
                ],
            ))
        }
        "BOX_2x4" => box_cluster(4),
        "BOX_2x5" => box_cluster(5),
        other => Err(GraphError::UnknownName(other.to_string())),
    }
}

/// 2xN grid cluster: top row 1..=N, bottom row N+1..=2N.
fn box_cluster(n: u32) -> Result<(OpenGraph, Vec<NamedFlow>), GraphError> {
    let mut edges = Vec::new();
    for c in 1..n {
        edges.push((c, c + 1));
        edges.push((n + c, n + c + 1));
    }
    for c in 1..=n {
        edges.push((c, c + n));
    }
    let graph = OpenGraph::new(
        (1..=2 * n).collect(),
        edges,
        vec![1, n + 1],
        vec![n, 2 * n],
    )?;
    let mut lr_successor = BTreeMap::new();
    let mut lr_order = Vec::new();
    for c in 1..n {
        lr_successor.insert(c, c + 1);
        lr_successor.insert(n + c, n + c + 1);
        lr_order.push(c);
        lr_order.push(n + c);
    }
    let tb_successor: BTreeMap<_, _> = (1..=n).map(|c| (c, c + n)).collect();
    let tb_order: Vec<_> = (1..=n).collect();
    Ok((
        graph,
        vec![
            NamedFlow { name: "lr".into(), flow: FlowSpec::new(lr_successor, lr_order) },
            NamedFlow { name: "tb".into(), flow: FlowSpec::new(tb_successor, tb_order) },
        ],
    ))
}

/// Vertex bookkeeping convention for [`graph_from_circuit`].
///
/// The two conventions differ on whether the initial wire qubits are their
/// own vertices. `MergedInputs` identifies each wire's input vertex with the
/// vertex measured by the wire's first rotation, giving |V| = M for a
/// circuit of M single-wire rotations; `SeparateInputs` keeps one extra
/// vertex per wire, giving |V| = N + M. Both describe the same computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputConvention {
    MergedInputs,
    SeparateInputs,
}

/// Reconstructs the open graph and flow of a circuit built from J-rotations
/// and CZ gates on |+>^N.
///
/// Wire w's chain starts at input vertex w+1; each J on the wire measures
/// the wire's current vertex and appends a fresh one; each CZ adds an edge
/// between the current vertices of its two wires (the vertices measured by
/// the rotations that follow it). Under [`InputConvention::MergedInputs`]
/// the final rotation of each wire is the output basis rotation and appends
/// no vertex.
pub fn graph_from_circuit(
    circuit: &Circuit,
    convention: InputConvention,
) -> Result<(OpenGraph, FlowSpec), GraphError> {
    let n = circuit.wires;
    if n == 0 {
        return Err(GraphError::Empty);
    }
    let mut next_id: VertexId = n as VertexId + 1;
    let mut current: Vec<VertexId> = (1..=n as VertexId).collect();
    let mut edges: Vec<(VertexId, VertexId)> = Vec::new();
    let mut successor: BTreeMap<VertexId, VertexId> = BTreeMap::new();
    let mut order: Vec<VertexId> = Vec::new();
    // Wires whose current vertex was attached to a CZ since the last J.
    let mut cz_pending: Vec<bool> = vec![false; n];

    for gate in &circuit.gates {
        match *gate {
            Gate::J { wire, .. } => {
                if wire >= n {
                    return Err(GraphError::UnsupportedGate);
                }
                let v = current[wire];
                let fresh = next_id;
                next_id += 1;
                edges.push((v, fresh));
                successor.insert(v, fresh);
                order.push(v);
                current[wire] = fresh;
                cz_pending[wire] = false;
            }
            Gate::Cz { a, b } => {
                if a >= n || b >= n || a == b {
                    return Err(GraphError::UnsupportedGate);
                }
                edges.push((current[a].min(current[b]), current[a].max(current[b])));
                cz_pending[a] = true;
                cz_pending[b] = true;
            }
        }
    }

    let inputs: Vec<VertexId> = (1..=n as VertexId).collect();
    let mut outputs: Vec<VertexId> = current.clone();

    if convention == InputConvention::MergedInputs {
        // Drop the vertex appended by each wire's final rotation; its
        // predecessor becomes the output. A CZ after the final rotation
        // would leave an edge on the dropped vertex, which has no
        // measurement mapping.
        for (w, pending) in cz_pending.iter().enumerate() {
            if *pending {
                return Err(GraphError::DanglingEntangler(w));
            }
        }
        for w in 0..n {
            let last = current[w];
            if let Some(pred) = successor.iter().find(|(_, &s)| s == last).map(|(&v, _)| v) {
                successor.remove(&pred);
                order.retain(|&v| v != pred);
                edges.retain(|&(x, y)| (x, y) != (pred.min(last), pred.max(last)));
                outputs[w] = pred;
            }
            // A wire with no rotations keeps its input vertex as output.
        }
    }

    let kept: BTreeSet<VertexId> = inputs
        .iter()
        .copied()
        .chain(successor.keys().copied())
        .chain(successor.values().copied())
        .chain(outputs.iter().copied())
        .collect();
    let vertices: Vec<VertexId> = kept.into_iter().collect();
    let graph = OpenGraph::new(vertices, edges, inputs, outputs)?;
    Ok((graph, FlowSpec::new(successor, order)))
}
