//! Command-line front end: plan experiments, run them against a device
//! registry, recompute reports from persisted counts, emit plot data, and
//! simulate single instances exactly.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crosscheck::graphs::builtin_graph;
use crosscheck::harness::device::Job;
use crosscheck::harness::plots::emit_plots;
use crosscheck::harness::{
    recompute_report, run_experiment, self_verify, DeviceRegistry, ExperimentPlan, HarnessError,
    PlanDevice,
};
use crosscheck::patterns::{
    compile_to_circuit, default_grid, outcome_mask, random_instance, rewrite_angles, AngleSet,
    InstanceFile,
};
use crosscheck::simulator::{bitstring, exact_distribution, sample, NoiseModel};

#[derive(Parser)]
#[command(name = "crosscheck", version, about = "Cross-verification of quantum devices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an experiment plan file.
    Plan(PlanArgs),
    /// Execute a plan against a device registry.
    Run(RunArgs),
    /// Run both flows of the plan's graph on one device.
    SelfVerify(SelfVerifyArgs),
    /// Recompute a report from persisted counts.
    Report(ReportArgs),
    /// Emit scatter/regression/bar CSV data from a persisted run.
    Plots(PlotsArgs),
    /// Noiseless exact simulation of one instance file.
    Oracle(OracleArgs),
    /// Generate an instance file (one random angle draw).
    Instance(InstanceArgs),
    /// Serve jobs over stdin/stdout as an external device would.
    Serve(ServeArgs),
}

#[derive(Args)]
struct PlanArgs {
    /// Builtin graph name (H6, BOX_2x4, BOX_2x5).
    #[arg(long, default_value = "H6")]
    graph: String,
    /// Device slots as `device_id:flow_name` (repeatable).
    #[arg(long = "device", required = true)]
    devices: Vec<String>,
    #[arg(long, default_value_t = 200)]
    instances: usize,
    #[arg(long, default_value_t = 34)]
    subset: usize,
    #[arg(long, default_value_t = 10_000)]
    shots: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Allow pairs whose circuits have the same width.
    #[arg(long)]
    allow_equal_widths: bool,
    /// Skip exact theory columns and reference jobs.
    #[arg(long)]
    no_theory: bool,
    /// Stamp the report with wall-clock time (breaks reproducibility).
    #[arg(long)]
    timestamp: bool,
    /// Where to write the plan JSON.
    #[arg(long, default_value = "plan.json")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Device registry JSON.
    #[arg(long)]
    devices: PathBuf,
    /// Run directory for counts and the report.
    #[arg(long)]
    out: PathBuf,
    /// Override the plan's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the plan's shots per sampling session.
    #[arg(long)]
    shots: Option<u64>,
    /// Override the plan's instance count.
    #[arg(long)]
    instances: Option<usize>,
    /// Override the plan's comparison subset.
    #[arg(long)]
    subset: Option<usize>,
}

#[derive(Args)]
struct SelfVerifyArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    devices: PathBuf,
    /// Which registered device to verify against itself.
    #[arg(long)]
    device_id: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Persisted run directory.
    #[arg(long)]
    run: PathBuf,
    /// Write the recomputed report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotsArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    /// Instance file (graph, flow, angles, optional k/r bits).
    #[arg(long)]
    instance: PathBuf,
    /// Emit CSV (bitstring, probability) instead of JSON.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct InstanceArgs {
    #[arg(long, default_value = "H6")]
    graph: String,
    #[arg(long, default_value = "a")]
    flow: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "instance.json")]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    /// Depolarizing strength of the served simulator.
    #[arg(long, default_value_t = 0.0)]
    depolarizing: f64,
    /// Comma-separated per-wire readout flip probabilities.
    #[arg(long)]
    readout: Option<String>,
    /// Device id stamped on returned counts.
    #[arg(long, default_value = "external-sim")]
    device_id: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Plan(args) => {
            let devices = args
                .devices
                .iter()
                .map(|spec| {
                    spec.split_once(':')
                        .map(|(id, flow)| PlanDevice {
                            device_id: id.to_string(),
                            flow: flow.to_string(),
                        })
                        .ok_or_else(|| {
                            HarnessError::PlanInvalid(format!(
                                "device slot `{spec}` is not of the form device_id:flow"
                            ))
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut plan = ExperimentPlan::new(&args.graph, devices, args.seed);
            plan.instance_count = args.instances;
            plan.comparison_subset = args.subset;
            plan.shots = args.shots;
            plan.allow_equal_widths = args.allow_equal_widths;
            plan.with_theory = !args.no_theory;
            plan.timestamp = args.timestamp;
            std::fs::write(&args.out, serde_json::to_string_pretty(&plan)? + "\n")?;
            println!("wrote {}", args.out.display());
            Ok(())
        }
        Command::Run(args) => {
            let mut plan: ExperimentPlan =
                serde_json::from_str(&std::fs::read_to_string(&args.plan)?)?;
            if let Some(seed) = args.seed {
                plan.master_seed = seed;
            }
            if let Some(shots) = args.shots {
                plan.shots = shots;
            }
            if let Some(instances) = args.instances {
                plan.instance_count = instances;
            }
            if let Some(subset) = args.subset {
                plan.comparison_subset = subset;
            }
            let registry = DeviceRegistry::load(&args.devices)?;
            let report = run_experiment(&plan, &registry, Some(&args.out))?;
            for pair in &report.pairs {
                println!(
                    "{} vs {}: l2 = {}{}",
                    pair.pair.0,
                    pair.pair.1,
                    pair.aggregate.parenthesized(),
                    pair.aggregate_exact
                        .map(|e| format!(" (exact {:.4})", e.value))
                        .unwrap_or_default()
                );
            }
            println!("report: {}", args.out.join("report.json").display());
            Ok(())
        }
        Command::SelfVerify(args) => {
            let plan: ExperimentPlan =
                serde_json::from_str(&std::fs::read_to_string(&args.plan)?)?;
            let registry = DeviceRegistry::load(&args.devices)?;
            let report = self_verify(&plan, &registry, &args.device_id, Some(&args.out))?;
            let pair = &report.pairs[0];
            println!(
                "self-verification of {}: l2 = {}",
                args.device_id,
                pair.aggregate.parenthesized()
            );
            Ok(())
        }
        Command::Report(args) => {
            let report = recompute_report(&args.run)?;
            let text = report.to_canonical_json()?;
            match args.out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Plots(args) => {
            let files = emit_plots(&args.run, &args.out)?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Oracle(args) => {
            let instance: InstanceFile =
                serde_json::from_str(&std::fs::read_to_string(&args.instance)?)?;
            let (graph, flows) = builtin_graph(&instance.graph)?;
            let flow = flows
                .iter()
                .find(|f| f.name == instance.flow_id)
                .ok_or_else(|| {
                    HarnessError::PlanInvalid(format!(
                        "flow `{}` not defined for `{}`",
                        instance.flow_id, instance.graph
                    ))
                })?;
            let angles = AngleSet::new(instance.angles.clone());
            let bits = instance.bits(&graph, &flow.flow);
            let rewritten = rewrite_angles(&graph, &flow.flow, &angles, &bits)?;
            let mask = outcome_mask(&graph, &flow.flow, &bits)?;
            let circuit = compile_to_circuit(&graph, &flow.flow, &rewritten)?;
            let dist = exact_distribution(&circuit)?;
            if args.csv {
                let mut out = String::from("bitstring,probability\n");
                for (i, p) in dist.probs.iter().enumerate() {
                    out.push_str(&format!("{},{p}\n", bitstring(i as u32, dist.n_bits)));
                }
                print!("{out}");
            } else {
                let probs: BTreeMap<String, f64> = dist
                    .probs
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| (bitstring(i as u32, dist.n_bits), p))
                    .collect();
                let payload = serde_json::json!({
                    "graph": instance.graph,
                    "flow_id": instance.flow_id,
                    "wire_outputs": circuit.wire_outputs,
                    "outcome_mask": mask,
                    "probabilities": probs,
                });
                println!("{}", serde_json::to_string_pretty(&payload)?);
            }
            Ok(())
        }
        Command::Instance(args) => {
            let (graph, flows) = builtin_graph(&args.graph)?;
            let flow = flows.iter().find(|f| f.name == args.flow).ok_or_else(|| {
                HarnessError::PlanInvalid(format!(
                    "flow `{}` not defined for `{}`",
                    args.flow, args.graph
                ))
            })?;
            let angles = random_instance(&graph, &default_grid(), args.seed)?;
            let _ = &flow.flow;
            let file = InstanceFile {
                graph: args.graph.clone(),
                flow_id: args.flow.clone(),
                angles: angles.iter().collect(),
                k: None,
                r: None,
                seed: Some(args.seed),
            };
            std::fs::write(&args.out, serde_json::to_string_pretty(&file)? + "\n")?;
            println!("wrote {}", args.out.display());
            Ok(())
        }
        Command::Serve(args) => {
            let readout = args
                .readout
                .as_deref()
                .map(|s| {
                    s.split(',')
                        .map(|x| x.trim().parse::<f64>())
                        .collect::<Result<Vec<_>, _>>()
                })
                .transpose()
                .map_err(|e| HarnessError::PlanInvalid(format!("bad readout list: {e}")))?
                .unwrap_or_default();
            let noise = NoiseModel {
                depolarizing_strength: args.depolarizing,
                readout_flip: readout,
                seed: 0,
            };
            noise.validate().map_err(HarnessError::PlanInvalid)?;
            let stdin = std::io::stdin();
            let mut stdout = std::io::stdout();
            for line in stdin.lock().lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let job: Job = serde_json::from_str(&line)?;
                let table =
                    sample(&job.circuit, job.shots, &noise, job.seed, &args.device_id, &job.job_id)?;
                serde_json::to_writer(&mut stdout, &table)?;
                stdout.write_all(b"\n")?;
                stdout.flush()?;
            }
            Ok(())
        }
    }
}
