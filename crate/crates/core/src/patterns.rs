//! Measurement patterns: compiling a (graph, flow, angles) triple into a
//! wire circuit, rewriting angle sets with randomization bits, and the
//! outcome relations connecting circuits compiled from the same graph
//! under different flows.
//!
//! Conventions used throughout:
//!
//! * `J(a) = H * Rz(a)` with `Rz(a) = diag(1, e^{-ia})`, so applying `J(a)`
//!   and reading out in the computational basis realizes an xy-plane
//!   measurement at angle `a`.
//! * A compiled circuit starts from |+> on every wire; wire `w` carries the
//!   teleportation path ending at the flow's `w`-th output vertex in
//!   ascending id order. Every vertex contributes exactly one `J` carrying
//!   its angle: measured vertices in flow order, output vertices as their
//!   final basis rotation.
//! * The compiled circuit realizes the branch in which every measured
//!   vertex yields outcome 0; other branches are reached by adding pi to
//!   the angles of the vertices to be flipped.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphs::{validate_flow, FlowReport, FlowSpec, OpenGraph, VertexId};

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("flow is not valid for this graph: {0:?}")]
    InvalidFlow(FlowReport),
    #[error("no angle given for vertex {0}")]
    MissingAngle(VertexId),
    #[error("randomization bits do not match the graph/flow shape: {0}")]
    BitsShapeMismatch(String),
    #[error("flows do not act on the same graph")]
    IncompatibleFlows,
    #[error("angle grid is empty")]
    EmptyGrid,
}

/// Reduces an angle to the canonical range [0, 2*pi).
pub fn canonical_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    if a == TAU {
        0.0
    } else {
        a
    }
}

/// One measurement angle per vertex, stored modulo 2*pi.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleSet {
    angles: BTreeMap<VertexId, f64>,
}

impl AngleSet {
    pub fn new(angles: BTreeMap<VertexId, f64>) -> Self {
        Self { angles: angles.into_iter().map(|(v, a)| (v, canonical_angle(a))).collect() }
    }

    /// The same angle on every vertex of `graph`.
    pub fn uniform(graph: &OpenGraph, angle: f64) -> Self {
        Self::new(graph.vertices().iter().map(|&v| (v, angle)).collect())
    }

    pub fn get(&self, v: VertexId) -> Option<f64> {
        self.angles.get(&v).copied()
    }

    pub fn set(&mut self, v: VertexId, angle: f64) {
        self.angles.insert(v, canonical_angle(angle));
    }

    pub fn iter(&self) -> impl Iterator<Item = (VertexId, f64)> + '_ {
        self.angles.iter().map(|(&v, &a)| (v, a))
    }

    pub fn covers(&self, graph: &OpenGraph) -> bool {
        graph.vertices().iter().all(|v| self.angles.contains_key(v))
    }

    /// Shifts the angles of `vertices` by pi where the corresponding bit is
    /// set, selecting the measurement branch with those outcomes flipped.
    pub fn with_branch_shifts(&self, shifts: &BTreeMap<VertexId, u8>) -> Self {
        let mut out = self.clone();
        for (&v, &bit) in shifts {
            if bit & 1 == 1 {
                if let Some(a) = out.get(v) {
                    out.set(v, a + PI);
                }
            }
        }
        out
    }
}

/// Stabilizer exponents `k` (one bit per vertex) and output mask bits `r`
/// (one bit per flow output).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomizationBits {
    pub k: BTreeMap<VertexId, u8>,
    pub r: BTreeMap<VertexId, u8>,
}

impl RandomizationBits {
    pub fn zero(graph: &OpenGraph, flow: &FlowSpec) -> Self {
        Self {
            k: graph.vertices().iter().map(|&v| (v, 0)).collect(),
            r: flow.outputs(graph).into_iter().map(|v| (v, 0)).collect(),
        }
    }

    pub fn random(graph: &OpenGraph, flow: &FlowSpec, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Self {
            k: graph.vertices().iter().map(|&v| (v, rng.gen_range(0..=1u8))).collect(),
            r: flow
                .outputs(graph)
                .into_iter()
                .map(|v| (v, rng.gen_range(0..=1u8)))
                .collect(),
        }
    }

    fn check_shape(&self, graph: &OpenGraph, flow: &FlowSpec) -> Result<(), PatternError> {
        let vertices: BTreeSet<_> = graph.vertices().iter().copied().collect();
        let k_domain: BTreeSet<_> = self.k.keys().copied().collect();
        if k_domain != vertices {
            return Err(PatternError::BitsShapeMismatch(
                "k must be defined on every vertex".into(),
            ));
        }
        let outputs: BTreeSet<_> = flow.outputs(graph).into_iter().collect();
        let r_domain: BTreeSet<_> = self.r.keys().copied().collect();
        if r_domain != outputs {
            return Err(PatternError::BitsShapeMismatch(
                "r must be defined exactly on the flow outputs".into(),
            ));
        }
        if self.k.values().chain(self.r.values()).any(|&b| b > 1) {
            return Err(PatternError::BitsShapeMismatch("bits must be 0 or 1".into()));
        }
        Ok(())
    }
}

/// A gate in a compiled circuit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "lowercase")]
pub enum Gate {
    /// `J(angle) = H * Rz(angle)` on one wire.
    J { wire: usize, angle: f64 },
    /// Controlled-Z between two wires.
    Cz { a: usize, b: usize },
}

/// An ordered gate list on `wires` wires, each initialized to |+>.
///
/// `wire_outputs[w]` records which output vertex wire `w` carries; wires are
/// ordered by ascending output vertex id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub wires: usize,
    pub gates: Vec<Gate>,
    pub wire_outputs: Vec<VertexId>,
}

impl Circuit {
    /// Number of J gates, a proxy for circuit depth bookkeeping.
    pub fn rotation_count(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, Gate::J { .. })).count()
    }
}

/// Compiles the all-zero-outcome branch of (graph, flow, angles) into a
/// circuit.
///
/// Measured vertices emit their `J` in flow order; an edge not consumed by
/// the flow becomes a CZ emitted as soon as both its endpoint qubits are
/// live on their wires; each output's basis rotation is emitted as soon as
/// all CZs touching that output are in place.
pub fn compile_to_circuit(
    graph: &OpenGraph,
    flow: &FlowSpec,
    angles: &AngleSet,
) -> Result<Circuit, PatternError> {
    let report = validate_flow(graph, flow);
    if !report.is_valid() {
        return Err(PatternError::InvalidFlow(report));
    }
    for &v in graph.vertices() {
        if angles.get(v).is_none() {
            return Err(PatternError::MissingAngle(v));
        }
    }

    let paths = flow.paths(graph);
    let wires = paths.len();
    let wire_outputs: Vec<VertexId> = paths.iter().map(|p| *p.last().unwrap()).collect();
    let outputs: BTreeSet<VertexId> = wire_outputs.iter().copied().collect();

    let mut path_edges: BTreeSet<(VertexId, VertexId)> = BTreeSet::new();
    for path in &paths {
        for pair in path.windows(2) {
            path_edges.insert((pair[0].min(pair[1]), pair[0].max(pair[1])));
        }
    }
    let cz_edges: BTreeSet<(VertexId, VertexId)> = graph
        .edges()
        .iter()
        .copied()
        .filter(|e| !path_edges.contains(e))
        .collect();

    let mut gates = Vec::new();
    let mut wire_of: BTreeMap<VertexId, usize> = BTreeMap::new();
    let mut emitted: BTreeSet<(VertexId, VertexId)> = BTreeSet::new();
    let mut rotated: BTreeSet<VertexId> = BTreeSet::new();

    let activate = |v: VertexId,
                        w: usize,
                        wire_of: &mut BTreeMap<VertexId, usize>,
                        emitted: &mut BTreeSet<(VertexId, VertexId)>,
                        gates: &mut Vec<Gate>| {
        wire_of.insert(v, w);
        for u in graph.neighbors(v) {
            let e = (u.min(v), u.max(v));
            if cz_edges.contains(&e) && !emitted.contains(&e) {
                if let Some(&wu) = wire_of.get(&u) {
                    gates.push(Gate::Cz { a: wu.min(w), b: wu.max(w) });
                    emitted.insert(e);
                }
            }
        }
    };

    let flush_outputs = |wire_of: &BTreeMap<VertexId, usize>,
                             emitted: &BTreeSet<(VertexId, VertexId)>,
                             rotated: &mut BTreeSet<VertexId>,
                             gates: &mut Vec<Gate>| {
        for (w, &o) in wire_outputs.iter().enumerate() {
            if rotated.contains(&o) || wire_of.get(&o) != Some(&w) {
                continue;
            }
            let ready = graph.neighbors(o).all(|u| {
                let e = (u.min(o), u.max(o));
                !cz_edges.contains(&e) || emitted.contains(&e)
            });
            if ready {
                gates.push(Gate::J { wire: w, angle: angles.get(o).unwrap() });
                rotated.insert(o);
            }
        }
    };

    for (w, path) in paths.iter().enumerate() {
        activate(path[0], w, &mut wire_of, &mut emitted, &mut gates);
    }
    flush_outputs(&wire_of, &emitted, &mut rotated, &mut gates);
    for &v in &flow.order {
        let w = wire_of.remove(&v).expect("measured vertex is live");
        gates.push(Gate::J { wire: w, angle: angles.get(v).unwrap() });
        activate(flow.successor[&v], w, &mut wire_of, &mut emitted, &mut gates);
        flush_outputs(&wire_of, &emitted, &mut rotated, &mut gates);
    }
    debug_assert_eq!(rotated.len(), outputs.len());

    Ok(Circuit { wires, gates, wire_outputs })
}

/// Rewrites an angle set with stabilizer bits `k` and output mask bits `r`:
///
/// ```text
/// a'_v = (-1)^{k_v} a_v + pi * (sum_{u in N(v)} k_u + r_v [v output])
/// ```
///
/// Measuring at the rewritten angles leaves the joint outcome distribution
/// unchanged except that each output bit is flipped by its `r` bit; see
/// [`outcome_mask`].
pub fn rewrite_angles(
    graph: &OpenGraph,
    flow: &FlowSpec,
    angles: &AngleSet,
    bits: &RandomizationBits,
) -> Result<AngleSet, PatternError> {
    bits.check_shape(graph, flow)?;
    let mut rewritten = BTreeMap::new();
    for &v in graph.vertices() {
        let a = angles.get(v).ok_or(PatternError::MissingAngle(v))?;
        let neighbor_sum: u32 = graph.neighbors(v).map(|u| u32::from(bits.k[&u])).sum();
        let r_bit = u32::from(bits.r.get(&v).copied().unwrap_or(0));
        let sign = if bits.k[&v] == 1 { -1.0 } else { 1.0 };
        rewritten.insert(v, sign * a + PI * f64::from(neighbor_sum + r_bit));
    }
    Ok(AngleSet::new(rewritten))
}

/// The XOR mask relating outcomes of the rewritten circuit back to the
/// original: `Pr_orig(b) = Pr_rewritten(b XOR mask)` over the flow outputs
/// in ascending order.
///
/// The mask is the `r` bits alone. The neighbor `k` contributions enter the
/// rewritten angles as pi shifts and therefore never show up at readout;
/// this is checked per instance against exact simulation by the test suite
/// rather than assumed.
pub fn outcome_mask(
    graph: &OpenGraph,
    flow: &FlowSpec,
    bits: &RandomizationBits,
) -> Result<Vec<u8>, PatternError> {
    bits.check_shape(graph, flow)?;
    Ok(flow.outputs(graph).into_iter().map(|v| bits.r[&v]).collect())
}

/// How two flows over one graph relate: shared outputs, the joint variable
/// set, and the scale factor connecting reference-branch probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSpec {
    /// Outputs of flow A, ascending.
    pub outputs_a: Vec<VertexId>,
    /// Outputs of flow B, ascending.
    pub outputs_b: Vec<VertexId>,
    /// Outputs in both sets, ascending (size n_c).
    pub shared_outputs: Vec<VertexId>,
    /// Union of the output sets, ascending (size n_v).
    pub variable_set: Vec<VertexId>,
    /// log2 of the factor: Pr_A(b) = 2^{scale_log2} * Pr_B(b padded).
    pub scale_log2: i32,
    /// Assumed outcomes (default 0) for vertices outside the variable set.
    pub reference_bits: BTreeMap<VertexId, u8>,
}

impl RelationSpec {
    /// `Pr_A = scale * Pr_B` on the reference branch.
    pub fn scale(&self) -> f64 {
        (self.scale_log2 as f64).exp2()
    }

    pub fn n_variable(&self) -> usize {
        self.variable_set.len()
    }

    /// log2 of the factor taking a normalized squared distance on the
    /// variable space to the probability scale of the smaller circuit
    /// (the scale on which scatter plots pair the two devices).
    pub fn reference_scale_log2(&self) -> i32 {
        let n_min = self.outputs_a.len().min(self.outputs_b.len());
        2 * (self.variable_set.len() as i32 - n_min as i32)
    }
}

/// Builds the [`RelationSpec`] for two flows over the same graph.
pub fn relate_outcomes(
    graph: &OpenGraph,
    flow_a: &FlowSpec,
    flow_b: &FlowSpec,
) -> Result<RelationSpec, PatternError> {
    for flow in [flow_a, flow_b] {
        let report = validate_flow(graph, flow);
        if !report.is_valid() {
            return Err(PatternError::InvalidFlow(report));
        }
    }
    let outputs_a = flow_a.outputs(graph);
    let outputs_b = flow_b.outputs(graph);
    let set_a: BTreeSet<_> = outputs_a.iter().copied().collect();
    let set_b: BTreeSet<_> = outputs_b.iter().copied().collect();
    let shared_outputs: Vec<_> = set_a.intersection(&set_b).copied().collect();
    let variable: BTreeSet<_> = set_a.union(&set_b).copied().collect();
    let reference_bits = graph
        .vertices()
        .iter()
        .copied()
        .filter(|v| !variable.contains(v))
        .map(|v| (v, 0u8))
        .collect();
    Ok(RelationSpec {
        scale_log2: outputs_b.len() as i32 - outputs_a.len() as i32,
        shared_outputs,
        variable_set: variable.into_iter().collect(),
        outputs_a,
        outputs_b,
        reference_bits,
    })
}

/// Draws one angle per vertex independently and uniformly from `grid`.
pub fn random_instance(
    graph: &OpenGraph,
    grid: &[f64],
    seed: u64,
) -> Result<AngleSet, PatternError> {
    if grid.is_empty() {
        return Err(PatternError::EmptyGrid);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let angles = graph
        .vertices()
        .iter()
        .map(|&v| (v, grid[rng.gen_range(0..grid.len())]))
        .collect();
    Ok(AngleSet::new(angles))
}

/// The eight-point angle grid, multiples of pi/4.
pub fn default_grid() -> Vec<f64> {
    (0..8).map(|i| f64::from(i) * PI / 4.0).collect()
}

/// Rounds to 12 significant decimal digits, the file precision for angles.
pub fn round_sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// One sampling instance on disk: a graph, a flow, angles in decimal
/// radians (12 significant digits), and optional randomization bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub graph: String,
    pub flow_id: String,
    #[serde(serialize_with = "serialize_angles")]
    pub angles: BTreeMap<VertexId, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<BTreeMap<VertexId, u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<BTreeMap<VertexId, u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn serialize_angles<S: serde::Serializer>(
    angles: &BTreeMap<VertexId, f64>,
    serializer: S,
) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = serializer.serialize_map(Some(angles.len()))?;
    for (v, a) in angles {
        map.serialize_entry(v, &round_sig12(*a))?;
    }
    map.end()
}

impl InstanceFile {
    /// Randomization bits, defaulting to all zeros where absent.
    pub fn bits(&self, graph: &OpenGraph, flow: &FlowSpec) -> RandomizationBits {
        let mut bits = RandomizationBits::zero(graph, flow);
        if let Some(k) = &self.k {
            bits.k.extend(k.iter().map(|(&v, &b)| (v, b)));
        }
        if let Some(r) = &self.r {
            bits.r.extend(r.iter().map(|(&v, &b)| (v, b)));
        }
        bits
    }
}
