//! Experiment orchestration: instance generation, job construction with
//! per-shot random fixes, dispatch, persistence, and report assembly.
//!
//! For a device pair (A = fewer outputs) the three dot products of the
//! squared-distance decomposition are estimated from separate sampling
//! sessions per instance: a self session per device and a cross session
//! per device. Each session draws the device's non-output variable bits
//! fresh per shot (realized as a multinomial split over branch circuits,
//! which keeps the device contract at "circuit + shots + seed"), so the
//! sampled strings follow the branch-resolved joint distribution that
//! [`crate::verifier::exact_joint_pvector`] computes exactly.
//!
//! Reported distances sit on the probability scale of the smaller circuit
//! (normalized variable-space distances times `4^(n_v - n_O_A)`), the same
//! scale on which scatter plots pair the two devices.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::graphs::{builtin_graph, validate_flow, FlowSpec, OpenGraph, VertexId};
use crate::patterns::{
    random_instance, relate_outcomes, rewrite_angles, AngleSet, RandomizationBits, RelationSpec,
};
use crate::seed::{derive_seed, tag};
use crate::simulator::{apply_noise, exact_distribution, CountsTable};
use crate::verifier::{
    cross_collision_estimate, embed_counts, exact_joint_pvector, l2_exact, l2_from_components,
    sanity_classify, self_collision_from_multiset, total_least_squares, Estimate, Side,
    StringMultiset, TermEstimate, TermMethod,
};

use super::device::{DeviceRegistry, DeviceSpec, Job};
use super::{
    CrossCheckReport, ExclusionRecord, ExperimentPlan, HarnessError, InstanceResult, PairReport,
    RunMetadata,
};

/// Where job counts come from: live devices (optionally persisting) or a
/// persisted run directory.
pub(crate) enum Executor {
    Live { persist: Option<PathBuf> },
    Replay { dir: PathBuf },
}

impl Executor {
    fn run(&self, device: &DeviceSpec, job: &Job) -> Result<CountsTable, HarnessError> {
        match self {
            Executor::Live { persist } => {
                let table = device.run_job(job)?;
                if let Some(dir) = persist {
                    let path = dir.join(format!("{}.json", job.job_id));
                    std::fs::write(path, serde_json::to_string_pretty(&table)?)?;
                }
                Ok(table)
            }
            Executor::Replay { dir } => {
                let path = dir.join(format!("{}.json", job.job_id));
                let text =
                    std::fs::read_to_string(&path).map_err(|e| HarnessError::DeviceFailure {
                        device: device.device_id.clone(),
                        job: job.job_id.clone(),
                        message: format!("no stored counts at {}: {e}", path.display()),
                    })?;
                Ok(serde_json::from_str(&text)?)
            }
        }
    }
}

struct SideContext<'a> {
    device: &'a DeviceSpec,
    flow: &'a FlowSpec,
    letter: char,
    outputs: Vec<VertexId>,
    fix_vertices: Vec<VertexId>,
    mask: Vec<u8>,
    base_angles: AngleSet,
}

/// Per-instance per-side sampling context: randomization bits drawn from a
/// derived seed, angles rewritten, the verifier-side unmasking mask, and
/// the reference-bit shifts folded in.
fn build_side<'a>(
    ctx: &PairContext<'_>,
    device: &'a DeviceSpec,
    flow: &'a crate::graphs::NamedFlow,
    letter: char,
    side_idx: u64,
    instance: usize,
    angles: &AngleSet,
) -> Result<SideContext<'a>, HarnessError> {
    let plan = ctx.plan;
    let bits = RandomizationBits::random(
        ctx.graph,
        &flow.flow,
        derive_seed(
            plan.master_seed,
            &[tag("bits"), ctx.pair_index as u64, instance as u64, side_idx],
        ),
    );
    let rewritten = rewrite_angles(ctx.graph, &flow.flow, angles, &bits)?;
    let base_angles = rewritten.with_branch_shifts(&ctx.rel.reference_bits);
    let outputs = flow.flow.outputs(ctx.graph);
    let fix_vertices: Vec<VertexId> = ctx
        .rel
        .variable_set
        .iter()
        .copied()
        .filter(|v| !outputs.contains(v))
        .collect();
    let mask = crate::patterns::outcome_mask(ctx.graph, &flow.flow, &bits)?;
    Ok(SideContext { device, flow: &flow.flow, letter, outputs, fix_vertices, mask, base_angles })
}

struct PairContext<'a> {
    pair_index: usize,
    graph: &'a OpenGraph,
    rel: RelationSpec,
    plan: &'a ExperimentPlan,
}

impl<'a> PairContext<'a> {
    /// Samples one term session: multinomial split of `shots` over the
    /// side's fix branches, one job per realized branch, unmask, embed.
    fn sample_term(
        &self,
        side: &SideContext<'_>,
        term: &str,
        instance: usize,
        executor: &Executor,
    ) -> Result<StringMultiset, HarnessError> {
        let n_fix = side.fix_vertices.len();
        let term_seed = derive_seed(
            self.plan.master_seed,
            &[tag(term), self.pair_index as u64, instance as u64, side.letter as u64],
        );
        let mut rng = ChaCha12Rng::seed_from_u64(term_seed);
        let branches = 1u32 << n_fix;
        let mut tally: BTreeMap<u32, u64> = BTreeMap::new();
        if branches == 1 {
            tally.insert(0, self.plan.shots);
        } else {
            for _ in 0..self.plan.shots {
                *tally.entry(rng.gen_range(0..branches)).or_insert(0) += 1;
            }
        }
        let mut assembled =
            StringMultiset { n_bits: self.rel.n_variable(), counts: BTreeMap::new() };
        for (&branch, &shots) in &tally {
            if shots == 0 {
                continue;
            }
            let fix_bits: BTreeMap<VertexId, u8> = side
                .fix_vertices
                .iter()
                .enumerate()
                .map(|(i, &v)| (v, ((branch >> (n_fix - 1 - i)) & 1) as u8))
                .collect();
            let branch_angles = side.base_angles.with_branch_shifts(&fix_bits);
            let circuit = crate::patterns::compile_to_circuit(self.graph, side.flow, &branch_angles)?;
            let job = Job {
                job_id: job_id(self.pair_index, instance, side.letter, term, branch, n_fix),
                circuit,
                shots,
                seed: derive_seed(term_seed, &[u64::from(branch)]),
            };
            let table = executor.run(side.device, &job)?;
            let unmasked = table.xor_relabel(&side.mask);
            let embedded =
                embed_counts(&unmasked, &side.outputs, &fix_bits, &self.rel.variable_set)?;
            assembled.merge(&embedded);
        }
        Ok(assembled)
    }

    /// Reference-branch session (no fixes): the distribution the scatter
    /// plots and sanity checks read.
    fn sample_reference(
        &self,
        side: &SideContext<'_>,
        instance: usize,
        executor: &Executor,
    ) -> Result<CountsTable, HarnessError> {
        let term_seed = derive_seed(
            self.plan.master_seed,
            &[tag("ref"), self.pair_index as u64, instance as u64, side.letter as u64],
        );
        let circuit = crate::patterns::compile_to_circuit(self.graph, side.flow, &side.base_angles)?;
        let job = Job {
            job_id: job_id(self.pair_index, instance, side.letter, "ref", 0, 0),
            circuit,
            shots: self.plan.shots,
            seed: term_seed,
        };
        Ok(executor.run(side.device, &job)?.xor_relabel(&side.mask))
    }
}

pub(crate) fn job_id(
    pair_index: usize,
    instance: usize,
    letter: char,
    term: &str,
    branch: u32,
    n_fix: usize,
) -> String {
    if n_fix == 0 {
        format!("p{pair_index}_i{instance:04}_{letter}_{term}")
    } else {
        format!("p{pair_index}_i{instance:04}_{letter}_{term}_b{branch:0n_fix$b}")
    }
}

pub(crate) fn resolve_graph(
    name: &str,
) -> Result<(OpenGraph, Vec<crate::graphs::NamedFlow>), HarnessError> {
    Ok(builtin_graph(name)?)
}

fn validate_plan(
    plan: &ExperimentPlan,
    registry: &DeviceRegistry,
    graph: &OpenGraph,
    flows: &[crate::graphs::NamedFlow],
) -> Result<(), HarnessError> {
    let invalid = |msg: String| Err(HarnessError::PlanInvalid(msg));
    if plan.devices.len() < 2 {
        return invalid("at least two device slots are required".into());
    }
    if plan.comparison_subset == 0 || plan.comparison_subset > plan.instance_count {
        return invalid(format!(
            "comparison subset {} must lie in 1..={}",
            plan.comparison_subset, plan.instance_count
        ));
    }
    if plan.shots < 2 {
        return invalid("collision estimation needs at least 2 shots per session".into());
    }
    if plan.angle_grid.is_empty() {
        return invalid("angle grid is empty".into());
    }
    for slot in &plan.devices {
        let device = registry.get(&slot.device_id);
        let Some(device) = device else {
            return invalid(format!("device `{}` is not in the registry", slot.device_id));
        };
        if let Some(noise) = device.noise() {
            if let Err(msg) = noise.validate() {
                return invalid(format!("device `{}`: {msg}", slot.device_id));
            }
        }
        let Some(named) = flows.iter().find(|f| f.name == slot.flow) else {
            return invalid(format!(
                "flow `{}` is not defined for graph `{}`",
                slot.flow, plan.graph
            ));
        };
        let report = validate_flow(graph, &named.flow);
        if !report.is_valid() {
            return invalid(format!("flow `{}` is not valid: {:?}", slot.flow, report.violations));
        }
    }
    for i in 0..plan.devices.len() {
        for j in i + 1..plan.devices.len() {
            let fi = flows.iter().find(|f| f.name == plan.devices[i].flow).unwrap();
            let fj = flows.iter().find(|f| f.name == plan.devices[j].flow).unwrap();
            let wi = fi.flow.outputs(graph).len();
            let wj = fj.flow.outputs(graph).len();
            if wi == wj && !plan.allow_equal_widths {
                return invalid(format!(
                    "devices `{}` and `{}` run equal-width circuits; set allow_equal_widths to compare them",
                    plan.devices[i].device_id, plan.devices[j].device_id
                ));
            }
        }
    }
    for (&v, &bit) in &plan.reference_bits {
        if bit > 1 {
            return invalid(format!("reference bit for vertex {v} must be 0 or 1"));
        }
        if !graph.contains(v) {
            return invalid(format!("reference-bit vertex {v} is not in the graph"));
        }
    }
    Ok(())
}

/// Runs the full cross-check experiment described by `plan` against the
/// devices in `registry`, optionally persisting every artifact under
/// `out_dir` (plan, registry, per-job counts, report).
pub fn run_experiment(
    plan: &ExperimentPlan,
    registry: &DeviceRegistry,
    out_dir: Option<&Path>,
) -> Result<CrossCheckReport, HarnessError> {
    let executor = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir.join("counts"))?;
            std::fs::write(dir.join("plan.json"), serde_json::to_string_pretty(plan)?)?;
            std::fs::write(dir.join("registry.json"), serde_json::to_string_pretty(registry)?)?;
            Executor::Live { persist: Some(dir.join("counts")) }
        }
        None => Executor::Live { persist: None },
    };
    let report = execute(plan, registry, &executor)?;
    if let Some(dir) = out_dir {
        std::fs::write(dir.join("report.json"), report.to_canonical_json()?)?;
    }
    Ok(report)
}

/// Recomputes a report from a persisted run directory without touching any
/// device; byte-identical to the original for timestamp-free plans.
pub fn recompute_report(run_dir: &Path) -> Result<CrossCheckReport, HarnessError> {
    let plan: ExperimentPlan =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("plan.json"))?)?;
    let registry: DeviceRegistry =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("registry.json"))?)?;
    let executor = Executor::Replay { dir: run_dir.join("counts") };
    execute(&plan, &registry, &executor)
}

/// Runs both flows of the plan's graph on a single device and reports
/// their mutual distance.
pub fn self_verify(
    plan: &ExperimentPlan,
    registry: &DeviceRegistry,
    device_id: &str,
    out_dir: Option<&Path>,
) -> Result<CrossCheckReport, HarnessError> {
    let (_, flows) = resolve_graph(&plan.graph)?;
    if flows.len() < 2 {
        return Err(HarnessError::PlanInvalid(format!(
            "graph `{}` does not ship two flows",
            plan.graph
        )));
    }
    let mut self_plan = plan.clone();
    self_plan.devices = vec![
        super::PlanDevice { device_id: device_id.to_string(), flow: flows[0].name.clone() },
        super::PlanDevice { device_id: device_id.to_string(), flow: flows[1].name.clone() },
    ];
    run_experiment(&self_plan, registry, out_dir)
}

fn execute(
    plan: &ExperimentPlan,
    registry: &DeviceRegistry,
    executor: &Executor,
) -> Result<CrossCheckReport, HarnessError> {
    let (graph, flows) = resolve_graph(&plan.graph)?;
    validate_plan(plan, registry, &graph, &flows)?;
    let flow_of = |name: &str| flows.iter().find(|f| f.name == name).unwrap();

    let instances: Vec<AngleSet> = (0..plan.comparison_subset)
        .map(|t| {
            random_instance(
                &graph,
                &plan.angle_grid,
                derive_seed(plan.master_seed, &[tag("instance"), t as u64]),
            )
        })
        .collect::<Result<_, _>>()?;

    let mut pairs = Vec::new();
    let mut excluded = Vec::new();
    let mut self_estimates: BTreeMap<String, Vec<Estimate>> = BTreeMap::new();
    let mut self_widths: BTreeMap<String, usize> = BTreeMap::new();

    let mut pair_index = 0usize;
    for i in 0..plan.devices.len() {
        for j in i + 1..plan.devices.len() {
            let (slot_a, slot_b) = orient(plan, &graph, &flows, i, j);
            let device_a = registry.get(&slot_a.device_id).unwrap();
            let device_b = registry.get(&slot_b.device_id).unwrap();
            let flow_a = flow_of(&slot_a.flow);
            let flow_b = flow_of(&slot_b.flow);
            let mut rel = relate_outcomes(&graph, &flow_a.flow, &flow_b.flow)?;
            for (&v, &bit) in &plan.reference_bits {
                if rel.variable_set.contains(&v) {
                    return Err(HarnessError::PlanInvalid(format!(
                        "reference-bit vertex {v} is an output of pair {} / {}",
                        slot_a.device_id, slot_b.device_id
                    )));
                }
                rel.reference_bits.insert(v, bit);
            }
            let ctx = PairContext { pair_index, graph: &graph, rel, plan };
            let pair_report = run_pair(
                &ctx,
                device_a,
                device_b,
                flow_a,
                flow_b,
                &instances,
                executor,
                &mut excluded,
                &mut self_estimates,
                &mut self_widths,
            )?;
            pairs.push(pair_report);
            pair_index += 1;
        }
    }

    // Per-device mean over all pair comparisons.
    let mut device_means = BTreeMap::new();
    for slot in &plan.devices {
        let values: Vec<&PairReport> = pairs
            .iter()
            .filter(|p| p.pair.0 == slot.device_id || p.pair.1 == slot.device_id)
            .collect();
        if values.is_empty() {
            continue;
        }
        let mean =
            values.iter().map(|p| p.aggregate.value).sum::<f64>() / values.len() as f64;
        let err = (values.iter().map(|p| p.aggregate.std_error.powi(2)).sum::<f64>()).sqrt()
            / values.len() as f64;
        device_means.insert(slot.device_id.clone(), Estimate { value: mean, std_error: err });
    }

    // Exact device-vs-theory column (same circuit, so no rescaling).
    let mut device_theory = BTreeMap::new();
    if plan.with_theory {
        for slot in &plan.devices {
            let device = registry.get(&slot.device_id).unwrap();
            let Some(noise) = device.noise() else { continue };
            let flow = flow_of(&slot.flow);
            let mut values = Vec::new();
            for angles in &instances {
                let circuit = crate::patterns::compile_to_circuit(&graph, &flow.flow, angles)?;
                let ideal = exact_distribution(&circuit)?;
                let noisy = apply_noise(&ideal, noise);
                let l2: f64 =
                    ideal.probs.iter().zip(&noisy.probs).map(|(a, b)| (a - b) * (a - b)).sum();
                values.push(l2);
            }
            device_theory.insert(slot.device_id.clone(), mean_estimate(&values));
        }
    }

    // Sanity classification from pooled self-collision values, carried to
    // each device's own output space.
    let mut sanity_flags = BTreeMap::new();
    for (device_id, estimates) in &self_estimates {
        let n_out = self_widths[device_id];
        let pooled = pool_estimates(estimates);
        sanity_flags.insert(device_id.clone(), sanity_classify(&pooled, n_out));
    }

    let timestamp = plan.timestamp.then(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| format!("{}", d.as_secs()))
            .unwrap_or_default()
    });

    Ok(CrossCheckReport {
        plan: plan.clone(),
        pairs,
        device_means,
        device_theory,
        sanity_flags,
        metadata: RunMetadata {
            master_seed: plan.master_seed,
            shots_per_term: plan.shots,
            instances_compared: plan.comparison_subset,
            timestamp,
            excluded,
        },
    })
}

/// Puts the slot with fewer outputs first.
fn orient<'p>(
    plan: &'p ExperimentPlan,
    graph: &OpenGraph,
    flows: &[crate::graphs::NamedFlow],
    i: usize,
    j: usize,
) -> (&'p super::PlanDevice, &'p super::PlanDevice) {
    let width = |slot: &super::PlanDevice| {
        flows.iter().find(|f| f.name == slot.flow).unwrap().flow.outputs(graph).len()
    };
    if width(&plan.devices[i]) <= width(&plan.devices[j]) {
        (&plan.devices[i], &plan.devices[j])
    } else {
        (&plan.devices[j], &plan.devices[i])
    }
}

#[allow(clippy::too_many_arguments)]
fn run_pair(
    ctx: &PairContext<'_>,
    device_a: &DeviceSpec,
    device_b: &DeviceSpec,
    flow_a: &crate::graphs::NamedFlow,
    flow_b: &crate::graphs::NamedFlow,
    instances: &[AngleSet],
    executor: &Executor,
    excluded: &mut Vec<ExclusionRecord>,
    self_estimates: &mut BTreeMap<String, Vec<Estimate>>,
    self_widths: &mut BTreeMap<String, usize>,
) -> Result<PairReport, HarnessError> {
    let plan = ctx.plan;
    let graph = ctx.graph;
    let rel = &ctx.rel;
    let factor = (rel.reference_scale_log2() as f64).exp2();
    let theory_possible =
        plan.with_theory && device_a.noise().is_some() && device_b.noise().is_some();

    let mut per_instance = Vec::new();
    let mut scatter: Vec<(f64, f64, f64, f64)> = Vec::new();
    for (t, angles) in instances.iter().enumerate() {
        let side_a = build_side(ctx, device_a, flow_a, 'a', 0, t, angles)?;
        let side_b = build_side(ctx, device_b, flow_b, 'b', 1, t, angles)?;

        let sampled = (|| -> Result<_, HarnessError> {
            let self_a = ctx.sample_term(&side_a, "self", t, executor)?;
            let self_b = ctx.sample_term(&side_b, "self", t, executor)?;
            let cross_a = ctx.sample_term(&side_a, "cross", t, executor)?;
            let cross_b = ctx.sample_term(&side_b, "cross", t, executor)?;
            let reference = if plan.with_theory {
                Some((
                    ctx.sample_reference(&side_a, t, executor)?,
                    ctx.sample_reference(&side_b, t, executor)?,
                ))
            } else {
                None
            };
            Ok((self_a, self_b, cross_a, cross_b, reference))
        })();
        let (self_a, self_b, cross_a, cross_b, reference) = match sampled {
            Ok(x) => x,
            Err(HarnessError::DeviceFailure { device, job, message })
                if matches!(
                    (&device_a.backend, &device_b.backend),
                    (super::BackendSpec::External { .. }, _)
                        | (_, super::BackendSpec::External { .. })
                ) =>
            {
                // Retries already happened inside the external backend;
                // keep the audit trail and drop the instance from averages.
                excluded.push(ExclusionRecord {
                    pair: (device_a.device_id.clone(), device_b.device_id.clone()),
                    instance: t,
                    job,
                    reason: format!("device `{device}`: {message}"),
                });
                continue;
            }
            Err(e) => return Err(e),
        };

        let c11 = self_collision_from_multiset(&self_a)?;
        let c22 = self_collision_from_multiset(&self_b)?;
        let c12 = cross_collision_estimate(&cross_a, &cross_b, rel)?;
        let term = |e: Estimate, samples: u64| TermEstimate {
            value: e.value * factor,
            std_error: e.std_error * factor,
            method: TermMethod::Collision,
            samples,
        };
        let l2 = l2_from_components(
            term(c11.embedded, self_a.total()),
            term(c12, cross_a.total().min(cross_b.total())),
            term(c22.embedded, self_b.total()),
        );

        // Track output-space self-collision values for the sanity flags:
        // the variable-space dot product times 2^(n_v - n_O) sits at
        // 2^-n_O for a uniform device.
        for (side_ctx, est) in [(&side_a, &c11), (&side_b, &c22)] {
            let pad = (rel.n_variable() - side_ctx.outputs.len()) as f64;
            self_estimates
                .entry(side_ctx.device.device_id.clone())
                .or_default()
                .push(est.embedded.scaled(pad.exp2()));
            self_widths.insert(side_ctx.device.device_id.clone(), side_ctx.outputs.len());
        }

        let exact_l2 = if theory_possible {
            let pa = exact_joint_pvector(
                graph,
                side_a.flow,
                angles,
                rel,
                Side::A,
                device_a.noise().unwrap(),
            )?;
            let pb = exact_joint_pvector(
                graph,
                side_b.flow,
                angles,
                rel,
                Side::B,
                device_b.noise().unwrap(),
            )?;
            Some(l2_exact(&pa, &pb)?.value * factor)
        } else {
            None
        };

        if let Some((ref_a, ref_b)) = reference {
            scatter.extend(scatter_rows(rel, &ref_a, &ref_b, plan.shots));
        }

        per_instance.push(InstanceResult { instance: t, l2, exact_l2 });
    }

    if per_instance.is_empty() {
        return Err(HarnessError::DeviceFailure {
            device: device_b.device_id.clone(),
            job: "(all jobs)".into(),
            message: "every instance of the pair was excluded".into(),
        });
    }

    let aggregate = aggregate_estimates(&per_instance);
    let aggregate_exact = per_instance
        .iter()
        .map(|r| r.exact_l2)
        .collect::<Option<Vec<f64>>>()
        .map(|v| mean_estimate(&v));
    let regression = if scatter.len() >= 3 {
        let points: Vec<(f64, f64)> = scatter.iter().map(|r| (r.0, r.1)).collect();
        let xe: Vec<f64> = scatter.iter().map(|r| r.2).collect();
        let ye: Vec<f64> = scatter.iter().map(|r| r.3).collect();
        total_least_squares(&points, Some(&xe), Some(&ye)).ok()
    } else {
        None
    };

    Ok(PairReport {
        pair: (device_a.device_id.clone(), device_b.device_id.clone()),
        flow_a: flow_a.name.clone(),
        flow_b: flow_b.name.clone(),
        scale: rel.scale(),
        n_variable: rel.n_variable(),
        n_shared: rel.shared_outputs.len(),
        scale_convention: "reference-output-probability".into(),
        per_instance,
        aggregate,
        aggregate_exact,
        regression,
    })
}

/// Scatter rows over the shared-output combinations: device A frequency
/// against scale-times device B frequency, with binomial errors.
pub(crate) fn scatter_rows(
    rel: &RelationSpec,
    ref_a: &CountsTable,
    ref_b: &CountsTable,
    shots: u64,
) -> Vec<(f64, f64, f64, f64)> {
    let mut rows = Vec::new();
    let n_c = rel.shared_outputs.len();
    for c in 0..1u32 << n_c {
        let idx_a = shared_index(&rel.outputs_a, &rel.shared_outputs, c);
        let idx_b = shared_index(&rel.outputs_b, &rel.shared_outputs, c);
        let x = ref_a.frequency(idx_a);
        let y_raw = ref_b.frequency(idx_b);
        let y = rel.scale() * y_raw;
        rows.push((x, y, binomial_error(x, shots), rel.scale() * binomial_error(y_raw, shots)));
    }
    rows
}

/// Index of the outcome whose shared bits are `c` and whose non-shared
/// output bits sit at the all-zero reference.
pub(crate) fn shared_index(outputs: &[VertexId], shared: &[VertexId], c: u32) -> u32 {
    let mut idx = 0u32;
    for (bit, v) in outputs.iter().enumerate() {
        if let Some(pos) = shared.iter().position(|s| s == v) {
            if c >> (shared.len() - 1 - pos) & 1 == 1 {
                idx |= 1 << (outputs.len() - 1 - bit);
            }
        }
    }
    idx
}

fn binomial_error(p: f64, shots: u64) -> f64 {
    // Laplace-smoothed so zero-count outcomes keep a finite weight.
    let n = shots as f64;
    let smoothed = (p * n + 1.0) / (n + 2.0);
    (smoothed * (1.0 - smoothed) / n).sqrt()
}

fn mean_estimate(values: &[f64]) -> Estimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Estimate { value: mean, std_error: (var / n).sqrt() }
}

fn aggregate_estimates(results: &[InstanceResult]) -> Estimate {
    let n = results.len() as f64;
    let mean = results.iter().map(|r| r.l2.value).sum::<f64>() / n;
    let spread =
        results.iter().map(|r| (r.l2.value - mean).powi(2)).sum::<f64>() / n;
    let spread_se = (spread / n).sqrt();
    let pooled_se =
        (results.iter().map(|r| r.l2.std_error.powi(2)).sum::<f64>()).sqrt() / n;
    Estimate { value: mean, std_error: spread_se.max(pooled_se) }
}

fn pool_estimates(estimates: &[Estimate]) -> Estimate {
    let n = estimates.len() as f64;
    let mean = estimates.iter().map(|e| e.value).sum::<f64>() / n;
    let spread =
        (estimates.iter().map(|e| (e.value - mean).powi(2)).sum::<f64>() / n / n).sqrt();
    let pooled = (estimates.iter().map(|e| e.std_error.powi(2)).sum::<f64>()).sqrt() / n;
    Estimate { value: mean, std_error: spread.max(pooled) }
}

/// Sub-sampling hook: the per-instance distance values of a pair, for
/// convergence studies over subset sizes.
pub fn pair_instance_values(report: &CrossCheckReport, pair_index: usize) -> Option<Vec<f64>> {
    report
        .pairs
        .get(pair_index)
        .map(|p| p.per_instance.iter().map(|r| r.l2.value).collect())
}

/// A sanity handle used by tests: the exact pair distance (reference
/// probability scale) computed without any sampling.
pub fn exact_pair_l2(
    plan: &ExperimentPlan,
    registry: &DeviceRegistry,
) -> Result<Vec<(usize, f64)>, HarnessError> {
    let (graph, flows) = resolve_graph(&plan.graph)?;
    validate_plan(plan, registry, &graph, &flows)?;
    if plan.devices.len() != 2 {
        return Err(HarnessError::PlanInvalid("expected exactly two device slots".into()));
    }
    let (slot_a, slot_b) = orient(plan, &graph, &flows, 0, 1);
    let flow_a = flows.iter().find(|f| f.name == slot_a.flow).unwrap();
    let flow_b = flows.iter().find(|f| f.name == slot_b.flow).unwrap();
    let noise_a = registry
        .get(&slot_a.device_id)
        .and_then(|d| d.noise().cloned())
        .ok_or_else(|| HarnessError::PlanInvalid("exact distances need local devices".into()))?;
    let noise_b = registry
        .get(&slot_b.device_id)
        .and_then(|d| d.noise().cloned())
        .ok_or_else(|| HarnessError::PlanInvalid("exact distances need local devices".into()))?;
    let mut rel = relate_outcomes(&graph, &flow_a.flow, &flow_b.flow)?;
    for (&v, &bit) in &plan.reference_bits {
        rel.reference_bits.insert(v, bit);
    }
    let factor = (rel.reference_scale_log2() as f64).exp2();
    let mut out = Vec::new();
    for t in 0..plan.comparison_subset {
        let angles = random_instance(
            &graph,
            &plan.angle_grid,
            derive_seed(plan.master_seed, &[tag("instance"), t as u64]),
        )?;
        let pa = exact_joint_pvector(&graph, &flow_a.flow, &angles, &rel, Side::A, &noise_a)?;
        let pb = exact_joint_pvector(&graph, &flow_b.flow, &angles, &rel, Side::B, &noise_b)?;
        out.push((t, l2_exact(&pa, &pb)?.value * factor));
    }
    Ok(out)
}

/// Convenience wrapper aggregating [`exact_pair_l2`].
pub fn exact_pair_l2_mean(
    plan: &ExperimentPlan,
    registry: &DeviceRegistry,
) -> Result<Estimate, HarnessError> {
    let values: Vec<f64> = exact_pair_l2(plan, registry)?.into_iter().map(|(_, v)| v).collect();
    Ok(mean_estimate(&values))
}
