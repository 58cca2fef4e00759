use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use reach_core::averaging::{average_project, lp_distance, value_sample_project, SampleRule};
use reach_core::config::{control_from_json, SystemConfig};
use reach_core::endpoint;
use reach_core::ode;
use reach_core::regularity::{
    classify_strongly_regular, classify_strongly_u_regular, classify_weakly_u_regular,
    ClassifyOptions,
};
use reach_core::synthesis::{estimate_threshold, synthesize, Method, SynthesisOptions};
use reach_core::system::{ControlSignal, ControlSystem, Partition};
use reach_sampler::report::{
    self, digest_inputs, synthesis_to_json, threshold_to_json, trace_to_csv, verdict_to_json,
    Envelope,
};
use reach_sampler::scenario;
use serde_json::json;

/// Classification of control regularity and synthesis of piecewise-constant
/// controls reaching a prescribed fixed-time endpoint.
#[derive(Parser)]
#[command(name = "reach-sampler", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassifyKind {
    Strong,
    StrongU,
    WeakU,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Conic,
    Needle,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Midpoint,
    LeftThird,
    Mean,
}

#[derive(Args)]
struct IoArgs {
    /// System configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Control file (JSON); defaults to the `control` key of the config.
    #[arg(long)]
    control: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Integration steps per time unit.
    #[arg(long, default_value_t = reach_core::DEFAULT_STEPS_PER_UNIT)]
    steps: usize,
    /// Seed for randomized sampling (env REACH_SAMPLER_SEED as default).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the system under its control and report the endpoint.
    Simulate {
        #[command(flatten)]
        io: IoArgs,
        /// Also write the trajectory as CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Classify control regularity.
    Classify {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, value_enum, default_value = "all")]
        kind: ClassifyKind,
    },
    /// Synthesize a piecewise-constant control reaching the reference
    /// endpoint on a partition.
    Synthesize {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, value_enum, default_value = "conic")]
        method: MethodArg,
        /// Partition: `uniform:N`.
        #[arg(long, default_value = "uniform:32")]
        partition: String,
        /// Success threshold on the endpoint residual.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Write the iteration trace as CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run a synthesizer over uniform partitions N = 2, 4, 8, … and report
    /// the empirical partition-norm threshold.
    Sweep {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, value_enum, default_value = "conic")]
        method: MethodArg,
        #[arg(long, default_value_t = 128)]
        nmax: usize,
        /// Write the per-N profile as CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run a built-in scenario and compare against its expected outcomes.
    Scenario {
        /// Scenario name; see `--list`.
        name: Option<String>,
        #[arg(long)]
        list: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = reach_core::DEFAULT_STEPS_PER_UNIT)]
        steps: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Project a control onto a partition (interval means or value
    /// sampling) and report L^s distances.
    Approx {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, default_value = "uniform:16")]
        partition: String,
        #[arg(long, value_enum, default_value = "mean")]
        rule: RuleArg,
        /// Exponent for the reported distance: a number or `inf`.
        #[arg(long, default_value = "1")]
        s: String,
    },
}

fn default_seed(cli_seed: Option<u64>) -> u64 {
    cli_seed.unwrap_or_else(|| {
        std::env::var("REACH_SAMPLER_SEED")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(0)
    })
}

struct Usage(String);

fn read_to_string(path: &PathBuf) -> Result<String, Usage> {
    std::fs::read_to_string(path).map_err(|e| Usage(format!("cannot read {}: {e}", path.display())))
}

struct LoadedProblem {
    system: ControlSystem,
    control: ControlSignal,
    digest: String,
}

fn load_problem(io: &IoArgs) -> Result<LoadedProblem, Usage> {
    let config_text = read_to_string(&io.config)?;
    let cfg = SystemConfig::from_json(&config_text).map_err(|e| Usage(e.to_string()))?;
    let (system, embedded) = cfg.build().map_err(|e| Usage(e.to_string()))?;
    let mut digest_parts = vec![config_text.clone()];
    let control = match &io.control {
        Some(path) => {
            let text = read_to_string(path)?;
            digest_parts.push(text.clone());
            control_from_json(&text, system.m).map_err(|e| Usage(e.to_string()))?
        }
        None => embedded.ok_or_else(|| {
            Usage("no control: pass --control or add a `control` key to the config".into())
        })?,
    };
    Ok(LoadedProblem {
        system,
        control,
        digest: digest_inputs(digest_parts.iter().map(String::as_str)),
    })
}

fn parse_partition(spec: &str, horizon: f64) -> Result<Partition, Usage> {
    if let Some(n) = spec.strip_prefix("uniform:") {
        let n: usize = n
            .parse()
            .map_err(|_| Usage(format!("bad partition spec `{spec}`")))?;
        if n == 0 {
            return Err(Usage("partition needs at least one interval".into()));
        }
        return Ok(Partition::uniform(horizon, n));
    }
    Err(Usage(format!(
        "unsupported partition spec `{spec}` (expected uniform:N)"
    )))
}

fn emit(envelope: &Envelope, out: &Option<PathBuf>) -> Result<(), Usage> {
    let text = envelope.render();
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_text(path: &PathBuf, text: &str) -> Result<(), Usage> {
    std::fs::write(path, text).map_err(|e| Usage(format!("cannot write {}: {e}", path.display())))
}

fn run() -> Result<ExitCode, Usage> {
    let cli = Cli::parse();
    let started = Instant::now();
    match cli.command {
        Command::Simulate { io, csv } => {
            let problem = load_problem(&io)?;
            let traj = ode::integrate_state(&problem.system, &problem.control, io.steps)
                .map_err(|e| Usage(e.to_string()))?;
            if let Some(path) = csv {
                let mut text = String::from("t");
                for i in 0..problem.system.n {
                    text.push_str(&format!(",x{}", i + 1));
                }
                text.push('\n');
                for (t, x) in traj.times.iter().zip(&traj.states) {
                    text.push_str(&format!("{t:e}"));
                    for v in x.iter() {
                        text.push_str(&format!(",{v:e}"));
                    }
                    text.push('\n');
                }
                write_text(&path, &text)?;
            }
            let envelope = Envelope {
                command: "simulate".into(),
                inputs_digest: problem.digest,
                steps_per_unit: io.steps,
                seed: default_seed(io.seed),
                wall_ms: started.elapsed().as_millis(),
                results: json!({
                    "endpoint": traj.final_state().as_slice(),
                    "nodes": traj.times.len(),
                }),
            };
            emit(&envelope, &io.out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Classify { io, kind } => {
            let problem = load_problem(&io)?;
            let seed = default_seed(io.seed);
            let opts = ClassifyOptions {
                steps_per_unit: io.steps,
                seed,
                ..ClassifyOptions::default()
            };
            let mut results = serde_json::Map::new();
            let wants = |k: ClassifyKind| {
                matches!(kind, ClassifyKind::All)
                    || std::mem::discriminant(&kind) == std::mem::discriminant(&k)
            };
            if wants(ClassifyKind::Strong) {
                let v = classify_strongly_regular(&problem.system, &problem.control, &opts)
                    .map_err(|e| Usage(e.to_string()))?;
                results.insert("strongly_regular".into(), verdict_to_json(&v));
            }
            if wants(ClassifyKind::StrongU) {
                if problem.system.constraint.is_convex() {
                    let v = classify_strongly_u_regular(&problem.system, &problem.control, &opts)
                        .map_err(|e| Usage(e.to_string()))?;
                    results.insert("strongly_u_regular".into(), verdict_to_json(&v));
                } else if matches!(kind, ClassifyKind::StrongU) {
                    return Err(Usage(
                        "strongly-U-regular classification needs a convex constraint set".into(),
                    ));
                }
            }
            if wants(ClassifyKind::WeakU) {
                let v = classify_weakly_u_regular(&problem.system, &problem.control, &opts)
                    .map_err(|e| Usage(e.to_string()))?;
                results.insert("weakly_u_regular".into(), verdict_to_json(&v));
            }
            let envelope = Envelope {
                command: "classify".into(),
                inputs_digest: problem.digest,
                steps_per_unit: io.steps,
                seed,
                wall_ms: started.elapsed().as_millis(),
                results: serde_json::Value::Object(results),
            };
            emit(&envelope, &io.out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Synthesize {
            io,
            method,
            partition,
            tol,
            csv,
        } => {
            let problem = load_problem(&io)?;
            let seed = default_seed(io.seed);
            let part = parse_partition(&partition, problem.system.horizon)?;
            let x1 = endpoint::endpoint(&problem.system, &problem.control, io.steps)
                .map_err(|e| Usage(e.to_string()))?;
            let mut opts = SynthesisOptions {
                steps_per_unit: io.steps,
                tol,
                ..SynthesisOptions::default()
            };
            opts.classify.steps_per_unit = io.steps;
            opts.classify.seed = seed;
            let m = match method {
                MethodArg::Conic => Method::Conic,
                MethodArg::Needle => Method::NeedleFixedPoint,
            };
            let report = synthesize(&problem.system, &problem.control, &x1, &part, m, &opts)
                .map_err(|e| Usage(e.to_string()))?;
            if let Some(path) = csv {
                write_text(&path, &trace_to_csv(&report.iterations))?;
            }
            let envelope = Envelope {
                command: "synthesize".into(),
                inputs_digest: problem.digest,
                steps_per_unit: io.steps,
                seed,
                wall_ms: started.elapsed().as_millis(),
                results: json!({"target": x1.as_slice(), "report": synthesis_to_json(&report)}),
            };
            emit(&envelope, &io.out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            io,
            method,
            nmax,
            csv,
        } => {
            let problem = load_problem(&io)?;
            let seed = default_seed(io.seed);
            let x1 = endpoint::endpoint(&problem.system, &problem.control, io.steps)
                .map_err(|e| Usage(e.to_string()))?;
            let mut opts = SynthesisOptions {
                steps_per_unit: io.steps,
                ..SynthesisOptions::default()
            };
            opts.classify.steps_per_unit = io.steps;
            opts.classify.seed = seed;
            let m = match method {
                MethodArg::Conic => Method::Conic,
                MethodArg::Needle => Method::NeedleFixedPoint,
            };
            let estimate =
                estimate_threshold(&problem.system, &problem.control, &x1, nmax, m, &opts)
                    .map_err(|e| Usage(e.to_string()))?;
            if let Some(path) = csv {
                let mut text = String::from("n,norm,verdict,residual\n");
                for (n, r) in &estimate.outcomes {
                    let verdict = match r.verdict {
                        reach_core::synthesis::Verdict::Success => "success".to_string(),
                        reach_core::synthesis::Verdict::Failure(reason) => {
                            report::failure_str(reason).to_string()
                        }
                    };
                    text.push_str(&format!(
                        "{n},{:e},{verdict},{:e}\n",
                        r.partition.norm(),
                        r.residual
                    ));
                }
                write_text(&path, &text)?;
            }
            let envelope = Envelope {
                command: "sweep".into(),
                inputs_digest: problem.digest,
                steps_per_unit: io.steps,
                seed,
                wall_ms: started.elapsed().as_millis(),
                results: threshold_to_json(&estimate),
            };
            emit(&envelope, &io.out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Scenario {
            name,
            list,
            out,
            steps,
            seed,
        } => {
            if list {
                for n in scenario::SCENARIO_NAMES {
                    println!("{n}");
                }
                return Ok(ExitCode::SUCCESS);
            }
            let Some(name) = name else {
                return Err(Usage("scenario name required (or --list)".into()));
            };
            let seed = default_seed(seed);
            let Some(outcome) = scenario::run_scenario(&name, seed, steps) else {
                return Err(Usage(format!("unknown scenario `{name}`")));
            };
            let passed = outcome.passed();
            let results = json!({
                "scenario": outcome.name,
                "passed": passed,
                "checks": outcome.checks.iter().map(|c| json!({
                    "label": c.label,
                    "expected": c.expected,
                    "actual": c.actual,
                    "pass": c.pass,
                })).collect::<Vec<_>>(),
            });
            let envelope = Envelope {
                command: format!("scenario {name}"),
                inputs_digest: digest_inputs([name.as_str()]),
                steps_per_unit: steps,
                seed,
                wall_ms: started.elapsed().as_millis(),
                results,
            };
            emit(&envelope, &out)?;
            if passed {
                Ok(ExitCode::SUCCESS)
            } else {
                for c in outcome.checks.iter().filter(|c| !c.pass) {
                    eprintln!(
                        "mismatch: {} expected {} got {}",
                        c.label, c.expected, c.actual
                    );
                }
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Approx {
            io,
            partition,
            rule,
            s,
        } => {
            let problem = load_problem(&io)?;
            let part = parse_partition(&partition, problem.system.horizon)?;
            let exponent = if s == "inf" {
                f64::INFINITY
            } else {
                s.parse::<f64>()
                    .map_err(|_| Usage(format!("bad exponent `{s}`")))?
            };
            let projected = match rule {
                RuleArg::Mean => average_project(&problem.control, &part, 16),
                RuleArg::Midpoint => {
                    value_sample_project(&problem.control, &part, SampleRule::Midpoint)
                }
                RuleArg::LeftThird => {
                    value_sample_project(&problem.control, &part, SampleRule::LeftThird)
                }
            };
            let distance = lp_distance(
                &problem.control,
                &projected,
                exponent,
                problem.system.horizon,
                64,
            );
            let values: Vec<Vec<f64>> = match &projected {
                ControlSignal::PiecewiseConstant { values, .. } => {
                    values.iter().map(|v| v.as_slice().to_vec()).collect()
                }
                _ => unreachable!("projections are piecewise constant"),
            };
            let feasible = values.iter().all(|v| {
                problem
                    .system
                    .constraint
                    .membership(&DVector::from_vec(v.clone()), 1e-9)
            });
            let envelope = Envelope {
                command: "approx".into(),
                inputs_digest: problem.digest,
                steps_per_unit: io.steps,
                seed: default_seed(io.seed),
                wall_ms: started.elapsed().as_millis(),
                results: json!({
                    "partition": {"times": part.times(), "norm": part.norm()},
                    "distance": distance,
                    "s": s,
                    "values_in_constraint": feasible,
                    "control": {"pc": {"times": part.times(), "values": values}},
                }),
            };
            emit(&envelope, &io.out)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
