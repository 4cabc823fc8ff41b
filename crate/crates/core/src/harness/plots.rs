//! CSV emission for scatter, regression overlay, and per-device bar data
//! from a persisted run directory.

use std::fmt::Write as _;
use std::path::Path;

use crate::graphs::builtin_graph;
use crate::patterns::{compile_to_circuit, random_instance, relate_outcomes};
use crate::seed::{derive_seed, tag};
use crate::simulator::{apply_noise, bitstring, exact_distribution, CountsTable};

use super::run::{scatter_rows, shared_index};
use super::{CrossCheckReport, DeviceRegistry, ExperimentPlan, HarnessError};

/// Writes Fig-style CSV data for every pair of a persisted run:
/// `scatter_<A>_vs_<B>.csv` (rescaled outcome probabilities with errors and
/// theory columns when available), `regression_<A>_vs_<B>.csv` (fit line
/// and 3-sigma band at the scatter abscissas), and `bars.csv` (per-device
/// means against partners and against theory).
///
/// Requires the reference counts persisted by a theory-enabled run; fails
/// with [`HarnessError::MissingDistributions`] otherwise.
pub fn emit_plots(run_dir: &Path, out_dir: &Path) -> Result<Vec<std::path::PathBuf>, HarnessError> {
    let plan: ExperimentPlan =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("plan.json"))?)?;
    let registry: DeviceRegistry =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("registry.json"))?)?;
    let report: CrossCheckReport =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("report.json"))?)?;
    if report.pairs.is_empty() {
        return Err(HarnessError::MissingDistributions);
    }
    std::fs::create_dir_all(out_dir)?;
    let (graph, flows) = builtin_graph(&plan.graph)?;
    let flow_of = |name: &str| {
        flows
            .iter()
            .find(|f| f.name == name)
            .expect("report flow exists in graph")
    };

    let mut written = Vec::new();
    for (pair_index, pair) in report.pairs.iter().enumerate() {
        let flow_a = flow_of(&pair.flow_a);
        let flow_b = flow_of(&pair.flow_b);
        let mut rel = relate_outcomes(&graph, &flow_a.flow, &flow_b.flow)?;
        for (&v, &bit) in &plan.reference_bits {
            rel.reference_bits.insert(v, bit);
        }
        let noise_a = registry.get(&pair.pair.0).and_then(|d| d.noise().cloned());
        let noise_b = registry.get(&pair.pair.1).and_then(|d| d.noise().cloned());

        let mut scatter_csv = String::from("instance,outcome,x,y,x_err,y_err,x_theory,y_theory\n");
        let mut all_rows: Vec<(f64, f64)> = Vec::new();
        for t in 0..plan.comparison_subset {
            let load = |letter: char| -> Result<CountsTable, HarnessError> {
                let path = run_dir
                    .join("counts")
                    .join(format!("{}.json", super::run::job_id(pair_index, t, letter, "ref", 0, 0)));
                let text = std::fs::read_to_string(&path)
                    .map_err(|_| HarnessError::MissingDistributions)?;
                Ok(serde_json::from_str(&text)?)
            };
            let angles = random_instance(
                &graph,
                &plan.angle_grid,
                derive_seed(plan.master_seed, &[tag("instance"), t as u64]),
            )?;
            // Unmask with the same derived randomization bits as the run.
            let unmask = |letter: char,
                          side_idx: u64,
                          flow: &crate::graphs::NamedFlow|
             -> Result<CountsTable, HarnessError> {
                let bits = crate::patterns::RandomizationBits::random(
                    &graph,
                    &flow.flow,
                    derive_seed(
                        plan.master_seed,
                        &[tag("bits"), pair_index as u64, t as u64, side_idx],
                    ),
                );
                let mask = crate::patterns::outcome_mask(&graph, &flow.flow, &bits)?;
                Ok(load(letter)?.xor_relabel(&mask))
            };
            let ref_a = unmask('a', 0, flow_a)?;
            let ref_b = unmask('b', 1, flow_b)?;

            // Exact reference distributions for the theory columns.
            let theory = match (&noise_a, &noise_b) {
                (Some(na), Some(nb)) => {
                    let shifted = angles.with_branch_shifts(&rel.reference_bits);
                    let qa = apply_noise(
                        &exact_distribution(&compile_to_circuit(&graph, &flow_a.flow, &shifted)?)?,
                        na,
                    );
                    let qb = apply_noise(
                        &exact_distribution(&compile_to_circuit(&graph, &flow_b.flow, &shifted)?)?,
                        nb,
                    );
                    Some((qa, qb))
                }
                _ => None,
            };

            let rows = scatter_rows(&rel, &ref_a, &ref_b, plan.shots);
            for (c, row) in rows.iter().enumerate() {
                let c = c as u32;
                let outcome = bitstring(c, rel.shared_outputs.len());
                let theory_cols = theory
                    .as_ref()
                    .map(|(qa, qb)| {
                        let xa = qa.probs
                            [shared_index(&rel.outputs_a, &rel.shared_outputs, c) as usize];
                        let yb = rel.scale()
                            * qb.probs
                                [shared_index(&rel.outputs_b, &rel.shared_outputs, c) as usize];
                        format!("{xa},{yb}")
                    })
                    .unwrap_or_else(|| ",".into());
                writeln!(
                    scatter_csv,
                    "{t},{outcome},{},{},{},{},{theory_cols}",
                    row.0, row.1, row.2, row.3
                )
                .expect("write to string");
                all_rows.push((row.0, row.1));
            }
        }
        let scatter_path =
            out_dir.join(format!("scatter_{}_vs_{}.csv", safe(&pair.pair.0), safe(&pair.pair.1)));
        std::fs::write(&scatter_path, scatter_csv)?;
        written.push(scatter_path);

        if let Some(regression) = &pair.regression {
            // Rows stay in scatter order so the band halfwidths (computed
            // at those abscissas) line up.
            let mut csv = String::from("x,fit,band_halfwidth_3sigma\n");
            for (i, &(x, _)) in all_rows.iter().enumerate() {
                let band = regression
                    .prediction_band_halfwidths
                    .get(i)
                    .copied()
                    .unwrap_or(f64::NAN);
                writeln!(csv, "{x},{},{band}", regression.slope * x + regression.intercept)
                    .expect("write to string");
            }
            let path = out_dir
                .join(format!("regression_{}_vs_{}.csv", safe(&pair.pair.0), safe(&pair.pair.1)));
            std::fs::write(&path, csv)?;
            written.push(path);
        }
    }

    let mut bars = String::from("device,mean_vs_devices,err,theory_l2,theory_err\n");
    for (device, mean) in &report.device_means {
        let theory = report.device_theory.get(device);
        writeln!(
            bars,
            "{device},{},{},{},{}",
            mean.value,
            mean.std_error,
            theory.map(|t| t.value.to_string()).unwrap_or_default(),
            theory.map(|t| t.std_error.to_string()).unwrap_or_default()
        )
        .expect("write to string");
    }
    let bars_path = out_dir.join("bars.csv");
    std::fs::write(&bars_path, bars)?;
    written.push(bars_path);
    Ok(written)
}

fn safe(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}
