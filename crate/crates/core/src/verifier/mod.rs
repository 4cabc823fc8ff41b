//! The squared l2-distance between device output vectors, computed exactly
//! and estimated from collision statistics, plus the sanity checks and
//! auxiliary analysis used in cross-check reports.
//!
//! Two flows over one graph are compared on the joint variable set (the
//! union of their output sets, `n_v` vertices). A device's probability
//! vector on that space places its output distribution at its own output
//! positions and spreads the remaining positions uniformly; for exact
//! references the remaining positions can instead be resolved branch by
//! branch ([`exact_joint_pvector`]), which is what an honest device sampling
//! with random fixes produces.

pub mod analysis;
pub mod regression;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphs::{FlowSpec, OpenGraph, VertexId};
use crate::patterns::{compile_to_circuit, AngleSet, RelationSpec};
use crate::simulator::{apply_noise, exact_distribution, CountsTable, NoiseModel, OutcomeDistribution};

pub use analysis::{fidelity_lower_bound, subsample_analysis, FidelityBound, SubsampleStat};
pub use regression::{total_least_squares, RegressionResult};

#[derive(Debug, Error)]
pub enum VerifierError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("probability vectors live on different variable sets")]
    VariableSetMismatch,
    #[error("at least {needed} samples required, got {got}")]
    InsufficientShots { needed: u64, got: u64 },
    #[error("samples do not match the relation: {0}")]
    RelationMismatch(String),
    #[error("degenerate regression input: {0}")]
    DegenerateInput(String),
    #[error("stabilizer expectation {0} outside [-1, 1]")]
    OutOfRangeExpectation(f64),
    #[error("subset size {size} exceeds the {available} available values")]
    SubsetTooLarge { size: usize, available: usize },
    #[error("{0}")]
    Upstream(String),
}

/// Which side of a [`RelationSpec`] a distribution belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn outputs<'a>(&self, rel: &'a RelationSpec) -> &'a [VertexId] {
        match self {
            Side::A => &rel.outputs_a,
            Side::B => &rel.outputs_b,
        }
    }
}

/// A normalized probability vector over the joint variable set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PVector {
    pub variable_set: Vec<VertexId>,
    pub probs: Vec<f64>,
    pub source: String,
}

impl PVector {
    pub fn n_variable(&self) -> usize {
        self.variable_set.len()
    }

    pub fn dot(&self, other: &PVector) -> Result<f64, VerifierError> {
        if self.variable_set != other.variable_set {
            return Err(VerifierError::VariableSetMismatch);
        }
        Ok(self.probs.iter().zip(&other.probs).map(|(a, b)| a * b).sum())
    }

    pub fn uniform(variable_set: Vec<VertexId>, source: &str) -> Self {
        let dim = 1usize << variable_set.len();
        Self { variable_set, probs: vec![1.0 / dim as f64; dim], source: source.into() }
    }
}

/// Positions (big-endian, most significant first) of `outputs` within the
/// ascending `variable_set`.
fn output_positions(outputs: &[VertexId], variable_set: &[VertexId]) -> Result<Vec<usize>, VerifierError> {
    outputs
        .iter()
        .map(|v| {
            variable_set
                .iter()
                .position(|x| x == v)
                .ok_or_else(|| VerifierError::ShapeMismatch(format!("vertex {v} not in variable set")))
        })
        .collect()
}

/// Restricts a full variable-set index to the device's output bits.
fn restrict_index(m: usize, n_v: usize, positions: &[usize]) -> u32 {
    let mut out = 0u32;
    for (bit, &pos) in positions.iter().enumerate() {
        if m >> (n_v - 1 - pos) & 1 == 1 {
            out |= 1 << (positions.len() - 1 - bit);
        }
    }
    out
}

/// Embeds an output distribution uniformly over the non-output variable
/// positions: `p(m) = 2^{-(n_v - n_O)} q(m restricted to the outputs)`.
pub fn build_pvector(
    distribution: &OutcomeDistribution,
    rel: &RelationSpec,
    side: Side,
) -> Result<PVector, VerifierError> {
    let outputs = side.outputs(rel);
    if distribution.n_bits != outputs.len() {
        return Err(VerifierError::ShapeMismatch(format!(
            "distribution has {} bits but the side has {} outputs",
            distribution.n_bits,
            outputs.len()
        )));
    }
    let n_v = rel.n_variable();
    let positions = output_positions(outputs, &rel.variable_set)?;
    let weight = ((outputs.len() as f64) - (n_v as f64)).exp2();
    let probs = (0..1usize << n_v)
        .map(|m| distribution.probs[restrict_index(m, n_v, &positions) as usize] * weight)
        .collect();
    Ok(PVector { variable_set: rel.variable_set.clone(), probs, source: format!("{side:?}") })
}

/// Exact branch-resolved probability vector of one flow on the variable
/// set, with the device's noise applied per branch.
///
/// Variable positions outside the flow's output set are measured vertices;
/// each assignment of their outcomes is one branch, realized by adding pi
/// to those vertices' angles. The result is the distribution an ideal-seed
/// device produces when sampling with uniformly random fixes, so
/// randomization bits (which cancel at unmasking) never enter here.
pub fn exact_joint_pvector(
    graph: &OpenGraph,
    flow: &FlowSpec,
    angles: &AngleSet,
    rel: &RelationSpec,
    side: Side,
    noise: &NoiseModel,
) -> Result<PVector, VerifierError> {
    let outputs = side.outputs(rel).to_vec();
    if flow.outputs(graph) != outputs {
        return Err(VerifierError::ShapeMismatch(
            "flow outputs do not match the relation side".into(),
        ));
    }
    let n_v = rel.n_variable();
    let positions = output_positions(&outputs, &rel.variable_set)?;
    let fix_vertices: Vec<VertexId> = rel
        .variable_set
        .iter()
        .copied()
        .filter(|v| !outputs.contains(v))
        .collect();
    let fix_positions = output_positions(&fix_vertices, &rel.variable_set)?;
    let weight = ((outputs.len() as f64) - (n_v as f64)).exp2();

    let mut probs = vec![0.0; 1usize << n_v];
    for branch in 0..1u32 << fix_vertices.len() {
        let mut shifts: BTreeMap<VertexId, u8> = rel.reference_bits.clone();
        for (i, &v) in fix_vertices.iter().enumerate() {
            shifts.insert(v, (branch >> (fix_vertices.len() - 1 - i) & 1) as u8);
        }
        let branch_angles = angles.with_branch_shifts(&shifts);
        let circuit = compile_to_circuit(graph, flow, &branch_angles)
            .map_err(|e| VerifierError::Upstream(e.to_string()))?;
        let q = apply_noise(
            &exact_distribution(&circuit).map_err(|e| VerifierError::Upstream(e.to_string()))?,
            noise,
        );
        let mut base = 0usize;
        for (i, &pos) in fix_positions.iter().enumerate() {
            if branch >> (fix_vertices.len() - 1 - i) & 1 == 1 {
                base |= 1 << (n_v - 1 - pos);
            }
        }
        for (i, &qv) in q.probs.iter().enumerate() {
            let mut m = base;
            for (bit, &pos) in positions.iter().enumerate() {
                if i >> (outputs.len() - 1 - bit) & 1 == 1 {
                    m |= 1 << (n_v - 1 - pos);
                }
            }
            probs[m] += qv * weight;
        }
    }
    Ok(PVector { variable_set: rel.variable_set.clone(), probs, source: format!("joint-{side:?}") })
}

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, std_error: 0.0 }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { value: self.value * factor, std_error: self.std_error * factor.abs() }
    }

    /// Uncertainty in the last digits, like `0.033(1)`.
    pub fn parenthesized(&self) -> String {
        format_uncertainty(self.value, self.std_error)
    }
}

/// How a term of the distance decomposition was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermMethod {
    Exact,
    Collision,
}

/// One term of `||p1 - p2||^2 = p1.p1 - 2 p1.p2 + p2.p2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermEstimate {
    pub value: f64,
    pub std_error: f64,
    pub method: TermMethod,
    pub samples: u64,
}

/// The assembled distance estimate and its three dot-product components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2Estimate {
    pub value: f64,
    pub std_error: f64,
    pub p11: TermEstimate,
    pub p12: TermEstimate,
    pub p22: TermEstimate,
}

/// Combines independently estimated components into the distance.
pub fn l2_from_components(p11: TermEstimate, p12: TermEstimate, p22: TermEstimate) -> L2Estimate {
    let value = p11.value - 2.0 * p12.value + p22.value;
    let std_error =
        (p11.std_error.powi(2) + 4.0 * p12.std_error.powi(2) + p22.std_error.powi(2)).sqrt();
    L2Estimate { value, std_error, p11, p12, p22 }
}

/// Exact squared l2-distance between two probability vectors on the same
/// variable set.
pub fn l2_exact(p1: &PVector, p2: &PVector) -> Result<L2Estimate, VerifierError> {
    let c11 = p1.dot(p1)?;
    let c12 = p1.dot(p2)?;
    let c22 = p2.dot(p2)?;
    let term = |value| TermEstimate { value, std_error: 0.0, method: TermMethod::Exact, samples: 0 };
    Ok(l2_from_components(term(c11), term(c12), term(c22)))
}

/// A multiset of assembled variable-set strings from one device.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StringMultiset {
    pub n_bits: usize,
    pub counts: BTreeMap<u32, u64>,
}

impl StringMultiset {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn merge(&mut self, other: &StringMultiset) {
        assert_eq!(self.n_bits, other.n_bits);
        for (&s, &c) in &other.counts {
            *self.counts.entry(s).or_insert(0) += c;
        }
    }
}

/// Lifts a device counts table onto the variable set: sampled output bits
/// land at the device's output positions, `fix_bits` fill the rest.
pub fn embed_counts(
    counts: &CountsTable,
    outputs: &[VertexId],
    fix_bits: &BTreeMap<VertexId, u8>,
    variable_set: &[VertexId],
) -> Result<StringMultiset, VerifierError> {
    if counts.n_bits != outputs.len() {
        return Err(VerifierError::ShapeMismatch(format!(
            "counts have {} bits but the device has {} outputs",
            counts.n_bits,
            outputs.len()
        )));
    }
    let n_v = variable_set.len();
    let positions = output_positions(outputs, variable_set)?;
    let mut base = 0u32;
    for (i, &v) in variable_set.iter().enumerate() {
        if outputs.contains(&v) {
            continue;
        }
        let bit = fix_bits.get(&v).copied().ok_or_else(|| {
            VerifierError::ShapeMismatch(format!("no fix bit for non-output vertex {v}"))
        })?;
        if bit & 1 == 1 {
            base |= 1 << (n_v - 1 - i);
        }
    }
    let mut out = BTreeMap::new();
    for (&s, &c) in &counts.counts {
        let mut m = base;
        for (bit, &pos) in positions.iter().enumerate() {
            if s >> (outputs.len() - 1 - bit) & 1 == 1 {
                m |= 1 << (n_v - 1 - pos);
            }
        }
        *out.entry(m).or_insert(0) += c;
    }
    Ok(StringMultiset { n_bits: n_v, counts: out })
}

/// Self-collision estimate: the unbiased all-pairs collision frequency
/// over raw strings, plus the same value carried to a variable space
/// `pad_bits` wider (uniform non-output outcomes halve the collision
/// probability per extra bit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEstimate {
    /// Collision probability among the strings as sampled.
    pub raw: Estimate,
    /// Scaled to the padded variable space: raw * 2^{-pad_bits}.
    pub embedded: Estimate,
    pub samples: u64,
    pub first_collision: Option<u64>,
}

/// Estimates `p.p` from one table of i.i.d. samples.
///
/// Uses sum c_s (c_s - 1) / (N (N - 1)) with a delete-one jackknife
/// standard error; `pad_bits` is `n_v - n_bits` of the target space.
pub fn self_collision_estimate(
    counts: &CountsTable,
    pad_bits: u32,
) -> Result<CollisionEstimate, VerifierError> {
    let raw = collision_from_counts(&counts.counts)?;
    Ok(CollisionEstimate {
        raw,
        embedded: raw.scaled((-(f64::from(pad_bits))).exp2()),
        samples: counts.total(),
        first_collision: counts.first_collision,
    })
}

/// Same estimator over an assembled multiset (already on the variable set).
pub fn self_collision_from_multiset(
    samples: &StringMultiset,
) -> Result<CollisionEstimate, VerifierError> {
    let raw = collision_from_counts(&samples.counts)?;
    Ok(CollisionEstimate { raw, embedded: raw, samples: samples.total(), first_collision: None })
}

fn collision_from_counts(counts: &BTreeMap<u32, u64>) -> Result<Estimate, VerifierError> {
    let n: u64 = counts.values().sum();
    if n < 2 {
        return Err(VerifierError::InsufficientShots { needed: 2, got: n });
    }
    let nf = n as f64;
    let pairs: f64 = counts.values().map(|&c| c as f64 * (c as f64 - 1.0)).sum();
    let theta = pairs / (nf * (nf - 1.0));
    if n == 2 {
        // One Bernoulli pair; no resampling error estimate exists.
        return Ok(Estimate { value: theta, std_error: 0.5 });
    }
    // Delete-one jackknife, grouped by distinct string.
    let replicate = |c: f64| (pairs - 2.0 * (c - 1.0)) / ((nf - 1.0) * (nf - 2.0));
    let mut mean = 0.0;
    for &c in counts.values() {
        mean += c as f64 * replicate(c as f64);
    }
    mean /= nf;
    let mut var = 0.0;
    for &c in counts.values() {
        var += c as f64 * (replicate(c as f64) - mean).powi(2);
    }
    var *= (nf - 1.0) / nf;
    Ok(Estimate { value: theta, std_error: var.sqrt() })
}

/// Estimates `p1.p2` from two independent sample multisets on the variable
/// set: the fraction of cross pairs that agree, with a two-sample
/// delete-one jackknife standard error.
pub fn cross_collision_estimate(
    a: &StringMultiset,
    b: &StringMultiset,
    rel: &RelationSpec,
) -> Result<Estimate, VerifierError> {
    if a.n_bits != rel.n_variable() || b.n_bits != rel.n_variable() {
        return Err(VerifierError::RelationMismatch(format!(
            "strings are {} and {} bits wide, relation needs {}",
            a.n_bits,
            b.n_bits,
            rel.n_variable()
        )));
    }
    let na = a.total();
    let nb = b.total();
    if na < 1 || nb < 1 {
        return Err(VerifierError::InsufficientShots { needed: 1, got: na.min(nb) });
    }
    let naf = na as f64;
    let nbf = nb as f64;
    let mut matches = 0.0;
    for (&s, &ca) in &a.counts {
        if let Some(&cb) = b.counts.get(&s) {
            matches += ca as f64 * cb as f64;
        }
    }
    let theta = matches / (naf * nbf);
    let mut var = 0.0;
    for (side, other, n_side) in [(a, b, naf), (b, a, nbf)] {
        if n_side < 2.0 {
            continue;
        }
        let mut mean = 0.0;
        let mut replicates = Vec::with_capacity(side.counts.len());
        for (&s, &c) in &side.counts {
            let partner = other.counts.get(&s).copied().unwrap_or(0) as f64;
            let theta_i = (matches - partner) / ((n_side - 1.0) * (naf * nbf / n_side));
            replicates.push((c as f64, theta_i));
            mean += c as f64 * theta_i;
        }
        mean /= n_side;
        let mut v = 0.0;
        for (c, theta_i) in replicates {
            v += c * (theta_i - mean).powi(2);
        }
        var += v * (n_side - 1.0) / n_side;
    }
    Ok(Estimate { value: theta, std_error: var.sqrt() })
}

/// Flags raised by comparing a self-collision value against the uniform
/// floor and the Porter-Thomas value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SanityFlag {
    UniformSuspect,
    PorterThomasLike,
    Other,
}

impl std::fmt::Display for SanityFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SanityFlag::UniformSuspect => write!(f, "uniform-suspect"),
            SanityFlag::PorterThomasLike => write!(f, "porter-thomas-like"),
            SanityFlag::Other => write!(f, "other"),
        }
    }
}

/// Classifies an output-space collision probability: the uniform floor is
/// `2^-n_O`, deep random circuits sit at twice that. Tolerance is three
/// standard errors; the uniform flag wins when both bands overlap.
pub fn sanity_classify(pp_estimate: &Estimate, n_outputs: usize) -> SanityFlag {
    let uniform = (-(n_outputs as f64)).exp2();
    let tolerance = 3.0 * pp_estimate.std_error;
    if (pp_estimate.value - uniform).abs() <= tolerance {
        SanityFlag::UniformSuspect
    } else if (pp_estimate.value - 2.0 * uniform).abs() <= tolerance {
        SanityFlag::PorterThomasLike
    } else {
        SanityFlag::Other
    }
}

/// Formats `value` with its uncertainty in parentheses over the last
/// digits, e.g. `0.033(1)`.
pub fn format_uncertainty(value: f64, err: f64) -> String {
    if !err.is_finite() || err <= 0.0 {
        return format!("{value}");
    }
    let exponent = err.log10().floor() as i32;
    let decimals = (-exponent).max(0) as usize;
    let mut digit = (err * 10f64.powi(decimals as i32)).round() as u64;
    let mut decimals = decimals;
    if digit >= 10 {
        // Rounding pushed the uncertainty to the next magnitude.
        if decimals > 0 {
            decimals -= 1;
            digit = (err * 10f64.powi(decimals as i32)).round() as u64;
        } else {
            return format!("{value:.0}({})", digit);
        }
    }
    format!("{value:.decimals$}({digit})")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::builtin_graph;
    use crate::patterns::{default_grid, random_instance, relate_outcomes};
    use crate::simulator::sample_distribution;
    use std::f64::consts::PI;

    fn worked_setup() -> (OpenGraph, FlowSpec, FlowSpec, RelationSpec, AngleSet) {
        let (g, flows) = builtin_graph("H6").unwrap();
        let fa = flows[0].flow.clone();
        let fb = flows[1].flow.clone();
        let rel = relate_outcomes(&g, &fa, &fb).unwrap();
        let angles = AngleSet::new(
            [
                (1, 3.0 * PI / 4.0),
                (2, 7.0 * PI / 3.0),
                (3, PI / 3.0),
                (4, 0.0),
                (5, 2.0 * PI / 3.0),
                (6, PI),
            ]
            .into(),
        );
        (g, fa, fb, rel, angles)
    }

    fn ca_distribution(g: &OpenGraph, fa: &FlowSpec, angles: &AngleSet) -> OutcomeDistribution {
        exact_distribution(&compile_to_circuit(g, fa, angles).unwrap()).unwrap()
    }

    #[test]
    fn embedding_spreads_uniformly() {
        let (g, fa, _, rel, angles) = worked_setup();
        let qa = ca_distribution(&g, &fa, &angles);
        let p = build_pvector(&qa, &rel, Side::A).unwrap();
        assert_eq!(p.probs.len(), 8);
        assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Variable set (2,5,6): bit 2 is the most significant; each (b5,b6)
        // value appears at both b2 values with half the weight.
        for i in 0..4 {
            assert!((p.probs[i] - qa.probs[i] / 2.0).abs() < 1e-15);
            assert!((p.probs[i + 4] - qa.probs[i] / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn embedding_with_equal_sets_is_identity() {
        let (g, fa, _, _, angles) = worked_setup();
        let rel = relate_outcomes(&g, &fa, &fa).unwrap();
        let qa = ca_distribution(&g, &fa, &angles);
        let p = build_pvector(&qa, &rel, Side::A).unwrap();
        assert_eq!(p.probs, qa.probs);
    }

    #[test]
    fn uniform_embeds_to_uniform() {
        let (g, fa, _, rel, _) = worked_setup();
        let _ = (g, fa);
        let uniform = OutcomeDistribution::uniform(2);
        let p = build_pvector(&uniform, &rel, Side::A).unwrap();
        for &x in &p.probs {
            assert!((x - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_detected() {
        let (_, _, _, rel, _) = worked_setup();
        let wrong = OutcomeDistribution::uniform(3);
        assert!(matches!(
            build_pvector(&wrong, &rel, Side::A),
            Err(VerifierError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn l2_exact_worked_example_against_uniform() {
        // Direct evaluation of the decomposition on the two-bit space:
        // sum q^2 - 1/4 for q = (0.207, 0.393, 0.043, 0.357).
        let (g, fa, _, _, angles) = worked_setup();
        let rel = relate_outcomes(&g, &fa, &fa).unwrap();
        let qa = ca_distribution(&g, &fa, &angles);
        let p1 = build_pvector(&qa, &rel, Side::A).unwrap();
        let p2 = PVector::uniform(rel.variable_set.clone(), "uniform");
        let l2 = l2_exact(&p1, &p2).unwrap();
        assert!((l2.value - 0.0766).abs() < 5e-4, "{}", l2.value);
        assert_eq!(l2.std_error, 0.0);
        assert!(
            (l2.value - (l2.p11.value - 2.0 * l2.p12.value + l2.p22.value)).abs() < 1e-12
        );
    }

    #[test]
    fn l2_exact_of_identical_vectors_is_zero() {
        let (g, fa, _, rel, angles) = worked_setup();
        let qa = ca_distribution(&g, &fa, &angles);
        let p = build_pvector(&qa, &rel, Side::A).unwrap();
        let l2 = l2_exact(&p, &p).unwrap();
        assert!(l2.value.abs() < 1e-15);
    }

    #[test]
    fn joint_pvectors_of_both_flows_agree_when_ideal() {
        let (g, fa, fb, rel, _) = worked_setup();
        for seed in 0..5 {
            let angles = random_instance(&g, &default_grid(), seed).unwrap();
            let pa =
                exact_joint_pvector(&g, &fa, &angles, &rel, Side::A, &NoiseModel::ideal()).unwrap();
            let pb =
                exact_joint_pvector(&g, &fb, &angles, &rel, Side::B, &NoiseModel::ideal()).unwrap();
            assert!((pa.probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            let l2 = l2_exact(&pa, &pb).unwrap();
            assert!(l2.value.abs() < 1e-12, "seed {seed}: {}", l2.value);
        }
    }

    #[test]
    fn self_collision_scaling_matches_exact_embedding() {
        // Output-space collision probability carried to the variable space
        // equals the exact dot product of the embedded vector.
        let (g, fa, _, rel, angles) = worked_setup();
        let qa = ca_distribution(&g, &fa, &angles);
        let p = build_pvector(&qa, &rel, Side::A).unwrap();
        let exact_pp = p.dot(&p).unwrap();
        let scaled = qa.collision_probability() * 0.5;
        assert!((exact_pp - scaled).abs() < 1e-12);
    }

    #[test]
    fn self_collision_estimator_hits_worked_value() {
        let (g, fa, _, _, angles) = worked_setup();
        let qa = ca_distribution(&g, &fa, &angles);
        let table = sample_distribution(&qa, 100_000, 5, "dev", "job").unwrap();
        let est = self_collision_estimate(&table, 0).unwrap();
        // sum q^2 = 0.3266 from the worked table.
        assert!(
            (est.raw.value - 0.3266).abs() <= 3.0 * est.raw.std_error,
            "{} +- {}",
            est.raw.value,
            est.raw.std_error
        );
        assert!(est.raw.std_error > 0.0);
    }

    #[test]
    fn degenerate_counts_give_collision_one() {
        let table = CountsTable {
            device_id: "dev".into(),
            circuit_ref: "job".into(),
            n_bits: 2,
            shots: 50,
            seed: 0,
            counts: [(3u32, 50u64)].into(),
            first_collision: Some(2),
        };
        let est = self_collision_estimate(&table, 1).unwrap();
        assert!((est.raw.value - 1.0).abs() < 1e-15);
        assert!((est.embedded.value - 0.5).abs() < 1e-15);
        assert_eq!(est.raw.std_error, 0.0);
        assert_eq!(est.first_collision, Some(2));
    }

    #[test]
    fn too_few_shots_rejected() {
        let table = CountsTable {
            device_id: "dev".into(),
            circuit_ref: "job".into(),
            n_bits: 1,
            shots: 1,
            seed: 0,
            counts: [(0u32, 1u64)].into(),
            first_collision: None,
        };
        assert!(matches!(
            self_collision_estimate(&table, 0),
            Err(VerifierError::InsufficientShots { .. })
        ));
    }

    #[test]
    fn uniform_sampler_approaches_global_minimum() {
        let uniform = OutcomeDistribution::uniform(2);
        let table = sample_distribution(&uniform, 200_000, 9, "dev", "job").unwrap();
        let est = self_collision_estimate(&table, 0).unwrap();
        assert!((est.raw.value - 0.25).abs() <= 3.0 * est.raw.std_error);
        assert_eq!(sanity_classify(&est.raw, 2), SanityFlag::UniformSuspect);
    }

    #[test]
    fn sanity_flags_match_reference_points() {
        let tight = |value| Estimate { value, std_error: 1e-4 };
        assert_eq!(sanity_classify(&tight(0.25), 2), SanityFlag::UniformSuspect);
        assert_eq!(sanity_classify(&tight(0.5), 2), SanityFlag::PorterThomasLike);
        assert_eq!(sanity_classify(&tight(0.3266), 2), SanityFlag::Other);
    }

    #[test]
    fn cross_estimate_with_uniform_side_hits_floor() {
        // If one side is uniform on the variable space, p1.p2 = 2^-n_v.
        let (g, fa, _, rel, angles) = worked_setup();
        let qa = ca_distribution(&g, &fa, &angles);
        let pa = build_pvector(&qa, &rel, Side::A).unwrap();
        let dist_a = OutcomeDistribution { n_bits: 3, probs: pa.probs.clone() };
        let uniform = OutcomeDistribution::uniform(3);
        let ta = sample_distribution(&dist_a, 60_000, 21, "a", "job").unwrap();
        let tb = sample_distribution(&uniform, 60_000, 22, "b", "job").unwrap();
        let ms = |t: &CountsTable| StringMultiset { n_bits: 3, counts: t.counts.clone() };
        let est = cross_collision_estimate(&ms(&ta), &ms(&tb), &rel).unwrap();
        assert!(
            (est.value - 0.125).abs() <= 3.0 * est.std_error,
            "{} +- {}",
            est.value,
            est.std_error
        );
    }

    #[test]
    fn cross_estimate_matches_exact_dot_product() {
        let (g, fa, fb, rel, angles) = worked_setup();
        let pa =
            exact_joint_pvector(&g, &fa, &angles, &rel, Side::A, &NoiseModel::ideal()).unwrap();
        let pb =
            exact_joint_pvector(&g, &fb, &angles, &rel, Side::B, &NoiseModel::ideal()).unwrap();
        let exact = pa.dot(&pb).unwrap();
        let da = OutcomeDistribution { n_bits: 3, probs: pa.probs.clone() };
        let db = OutcomeDistribution { n_bits: 3, probs: pb.probs.clone() };
        let ta = sample_distribution(&da, 80_000, 31, "a", "job").unwrap();
        let tb = sample_distribution(&db, 80_000, 32, "b", "job").unwrap();
        let ms = |t: &CountsTable| StringMultiset { n_bits: 3, counts: t.counts.clone() };
        let est = cross_collision_estimate(&ms(&ta), &ms(&tb), &rel).unwrap();
        assert!(
            (est.value - exact).abs() <= 3.0 * est.std_error,
            "{} vs {exact} +- {}",
            est.value,
            est.std_error
        );
    }

    #[test]
    fn relation_mismatch_detected() {
        let (_, _, _, rel, _) = worked_setup();
        let bad = StringMultiset { n_bits: 2, counts: [(0u32, 5u64)].into() };
        let good = StringMultiset { n_bits: 3, counts: [(0u32, 5u64)].into() };
        assert!(matches!(
            cross_collision_estimate(&bad, &good, &rel),
            Err(VerifierError::RelationMismatch(_))
        ));
    }

    #[test]
    fn uniform_floor_for_pvectors() {
        let (g, fa, fb, rel, _) = worked_setup();
        let floor = 0.125;
        for seed in 0..10 {
            let angles = random_instance(&g, &default_grid(), seed).unwrap();
            for (flow, side) in [(&fa, Side::A), (&fb, Side::B)] {
                let p =
                    exact_joint_pvector(&g, flow, &angles, &rel, side, &NoiseModel::ideal())
                        .unwrap();
                assert!(p.dot(&p).unwrap() >= floor - 1e-12);
            }
        }
        let u = PVector::uniform(rel.variable_set.clone(), "u");
        assert!((u.dot(&u).unwrap() - floor).abs() < 1e-15);
    }

    #[test]
    fn embed_counts_places_bits() {
        let counts = CountsTable {
            device_id: "dev".into(),
            circuit_ref: "job".into(),
            n_bits: 2,
            shots: 3,
            seed: 0,
            counts: [(0b10u32, 2u64), (0b01u32, 1u64)].into(),
            first_collision: None,
        };
        // Variable set (2,5,6), outputs (5,6), fix vertex 2 = 1.
        let ms = embed_counts(
            &counts,
            &[5, 6],
            &[(2u32, 1u8)].into(),
            &[2, 5, 6],
        )
        .unwrap();
        assert_eq!(ms.counts, [(0b110u32, 2u64), (0b101u32, 1u64)].into());
    }

    #[test]
    fn parenthesized_uncertainties() {
        assert_eq!(format_uncertainty(0.033, 0.001), "0.033(1)");
        assert_eq!(format_uncertainty(0.0504, 0.0006), "0.0504(6)");
        assert_eq!(format_uncertainty(1.04, 0.02), "1.04(2)");
        assert_eq!(format_uncertainty(0.145, 0.001), "0.145(1)");
        assert_eq!(format_uncertainty(0.5, 0.0), "0.5");
    }
}
