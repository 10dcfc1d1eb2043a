//! `nqs`: command-line front end.
//!
//! Exit status is 0 on success, 1 on usage errors and 2 on any failure
//! reported by the library, with a JSON error object on stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use nqs_core::analytic::{dicke_spectrum, page_value};
use nqs_core::ansatz::AnsatzSpec;
use nqs_core::approx::{full_bound_report, BoundOptions, DegreeChoice};
use nqs_core::entanglement::{subregion_entropy, LogBase};
use nqs_core::experiments::{benchmark_reduction, preset, run_cosnet_k_sweep, run_sweep, ExperimentConfig};
use nqs_core::graph::{feature_reduce, ComputationGraph, GraphDoc};
use nqs_core::rng::RngStream;
use nqs_core::spin::{set_max_n, Subregion};
use nqs_core::statevector::{materialize, Statevector};
use nqs_core::{NqsError, NqsResult};

const OUTPUT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser, Serialize)]
#[command(name = "nqs", version, about = "Exact entanglement analysis of neural quantum states")]
struct Cli {
    /// Base seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Logarithm base for reported entropies: "e" or "2".
    #[arg(long, global = true, default_value = "e")]
    log_base: String,
    /// Spin cap (overrides NQS_MAX_N).
    #[arg(long, global = true)]
    max_n: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Serialize)]
struct GraphSource {
    /// Graph JSON document.
    #[arg(long, conflicts_with = "ansatz", required_unless_present = "ansatz")]
    graph: Option<PathBuf>,
    /// Ansatz spec JSON, built with the global seed.
    #[arg(long)]
    ansatz: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
enum Command {
    /// Feature-reduce a graph and print features, μ and the residual graph.
    Reduce {
        #[command(flatten)]
        src: GraphSource,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Materialize the normalized statevector to a binary file.
    Statevector {
        #[command(flatten)]
        src: GraphSource,
        /// Destination of the binary state.
        #[arg(long)]
        out: PathBuf,
    },
    /// Entropy, spectrum and Schmidt rank of a stored state across a region.
    Entropy {
        /// Binary state written by `statevector`.
        #[arg(long)]
        state: PathBuf,
        /// Region bit mask in hex.
        #[arg(long)]
        region: String,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Explicit entropy bound for a graph and region.
    Bound {
        #[command(flatten)]
        src: GraphSource,
        /// Region bit mask in hex.
        #[arg(long)]
        region: String,
        /// Polynomial degree or "auto".
        #[arg(long, default_value = "auto")]
        degree: String,
        /// Approximation rate override "alpha,beta,gamma" for eps = alpha exp(-beta d^gamma).
        #[arg(long)]
        rate: Option<String>,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analytic Dicke spectrum and entropy.
    Dicke {
        #[arg(long)]
        n: usize,
        /// Subsystem size; all sizes when omitted.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Page curve as CSV with columns m,page_nats.
    Page {
        #[arg(long)]
        n: usize,
    },
    /// Run an ensemble experiment from a config file or preset.
    Run {
        /// Experiment config JSON.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Named preset; an unknown name reports the available ones.
        #[arg(long)]
        preset: Option<String>,
        /// System size override for presets.
        #[arg(long)]
        n: Option<usize>,
        /// Trial count override.
        #[arg(long)]
        trials: Option<usize>,
        /// Per-trial CSV path; the aggregate is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time full against reduced evaluation on random configurations.
    Bench {
        #[command(flatten)]
        src: GraphSource,
        /// Random configurations to evaluate.
        #[arg(long, default_value_t = 1 << 16)]
        samples: usize,
    },
    /// Check a graph or experiment config without running it.
    Validate {
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        graph: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn read(path: &Path) -> NqsResult<String> {
    Ok(std::fs::read_to_string(path)?)
}

fn load_graph(src: &GraphSource, seed: u64) -> NqsResult<ComputationGraph> {
    match (&src.graph, &src.ansatz) {
        (Some(g), _) => GraphDoc::from_json(&read(g)?)?.to_graph(),
        (None, Some(a)) => {
            let spec: AnsatzSpec = serde_json::from_str(&read(a)?)?;
            spec.build(&mut RngStream::new(seed, 0).rng())
        }
        (None, None) => Err(NqsError::Contract("no graph source given".into())),
    }
}

fn emit(value: &Value, out: Option<&Path>) -> NqsResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn with_schema(mut v: Value) -> Value {
    if let Value::Object(m) = &mut v {
        m.insert("schema_version".into(), json!(OUTPUT_SCHEMA_VERSION));
    }
    v
}

fn parse_rate(s: &str) -> NqsResult<(f64, f64, f64)> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| NqsError::Spec(format!("bad rate component {x:?}"))))
        .collect::<NqsResult<_>>()?;
    match parts[..] {
        [a, b, c] if a > 0.0 && b > 0.0 && c > 0.0 => Ok((a, b, c)),
        _ => Err(NqsError::Spec(format!("rate must be three positive numbers alpha,beta,gamma, got {s:?}"))),
    }
}

/// `results.csv` -> `results_<suffix>.csv` when several configs share one path.
fn csv_path(base: &Path, suffix: Option<&str>) -> PathBuf {
    match suffix {
        None => base.to_path_buf(),
        Some(s) => {
            let stem = base.file_stem().and_then(|x| x.to_str()).unwrap_or("results");
            base.with_file_name(format!("{stem}_{s}.csv"))
        }
    }
}

fn aggregate_path(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().and_then(|x| x.to_str()).unwrap_or("results");
    csv.with_file_name(format!("{stem}.aggregate.json"))
}

fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> NqsResult<Value> {
    eprintln!("{}", serde_json::to_string(&json!({ "resolved_config": cfg }))?);
    let result = if cfg.k_grid.is_some() { run_cosnet_k_sweep(cfg)? } else { run_sweep(cfg)? };
    for d in &result.degenerate {
        eprintln!("{}", serde_json::to_string(&json!({ "degenerate_trial": d }))?);
    }
    std::fs::write(out, result.to_csv())?;
    let agg = aggregate_path(out);
    std::fs::write(&agg, result.aggregate_json(cfg) + "\n")?;
    Ok(json!({
        "experiment": cfg.name,
        "rows": result.rows.len(),
        "degenerate_trials": result.degenerate.len(),
        "csv": out,
        "aggregate": agg,
    }))
}

fn dispatch(cli: &Cli) -> NqsResult<()> {
    let seed = cli.seed.unwrap_or(0);
    let base = LogBase::parse(&cli.log_base)?;
    match &cli.command {
        Command::Reduce { src, out } => {
            let g = load_graph(src, seed)?;
            let r = feature_reduce(&g);
            emit(&serde_json::to_value(r.to_doc())?, out.as_deref())
        }
        Command::Statevector { src, out } => {
            let g = load_graph(src, seed)?;
            let psi = materialize(&g)?;
            psi.save(out)?;
            emit(&with_schema(json!({ "n": psi.n(), "norm_was": psi.norm_was, "path": out })), None)
        }
        Command::Entropy { state, region, out } => {
            let psi = Statevector::load(state)?;
            let a = Subregion::from_hex(region, psi.n())?;
            let e = subregion_entropy(&psi, &a)?.in_base(base);
            let mut v = serde_json::to_value(&e)?;
            v["region"] = json!(a.to_hex());
            emit(&with_schema(v), out.as_deref())
        }
        Command::Bound { src, region, degree, rate, out } => {
            let g = load_graph(src, seed)?;
            let a = Subregion::from_hex(region, g.n())?;
            let degree = match degree.as_str() {
                "auto" => DegreeChoice::Auto,
                d => DegreeChoice::Fixed(
                    d.parse().map_err(|_| NqsError::Spec(format!("degree must be an integer or \"auto\", got {d:?}")))?,
                ),
            };
            let rate = rate.as_deref().map(parse_rate).transpose()?;
            let report = full_bound_report(&g, &a, &BoundOptions { degree, rate })?;
            emit(&with_schema(serde_json::to_value(&report)?), out.as_deref())
        }
        Command::Dicke { n, m } => {
            let sizes: Vec<usize> = match m {
                Some(m) => vec![*m],
                None => (1..*n).collect(),
            };
            let mut items = vec![];
            for m in sizes {
                let s = dicke_spectrum(*n, m)?;
                let entropy = s.entropy();
                items.push(json!({
                    "m": m,
                    "eigenvalues": s.sorted_descending(),
                    "entropy": base.from_nats(entropy),
                    "schmidt_rank": s.eigenvalues.len(),
                }));
            }
            let v = if items.len() == 1 {
                let mut one = items.pop().unwrap_or_default();
                one["n"] = json!(n);
                one
            } else {
                json!({ "n": n, "subsystems": items })
            };
            let mut v = with_schema(v);
            v["log_base"] = json!(base);
            emit(&v, None)
        }
        Command::Page { n } => {
            let mut s = String::from("m,page_nats\n");
            for m in 1..*n {
                s.push_str(&format!("{m},{}\n", page_value(m, *n)?));
            }
            print!("{s}");
            Ok(())
        }
        Command::Run { config, preset: name, n, trials, out } => {
            let mut cfgs = match (config, name) {
                (Some(p), _) => vec![serde_json::from_str::<ExperimentConfig>(&read(p)?)?],
                (None, Some(name)) => preset(name, *n)?,
                (None, None) => return Err(NqsError::Contract("need --config or --preset".into())),
            };
            for c in cfgs.iter_mut() {
                if let Some(s) = cli.seed {
                    c.seed = s;
                }
                if let Some(t) = trials {
                    c.trials = *t;
                }
            }
            let several = cfgs.len() > 1;
            let mut summaries = vec![];
            for c in &cfgs {
                let base_out = out
                    .clone()
                    .or_else(|| c.output.as_ref().map(PathBuf::from))
                    .unwrap_or_else(|| PathBuf::from("results.csv"));
                let path = csv_path(&base_out, several.then_some(c.name.as_str()));
                summaries.push(run_experiment(c, &path)?);
            }
            emit(&with_schema(json!({ "runs": summaries })), None)
        }
        Command::Bench { src, samples } => {
            let g = load_graph(src, seed)?;
            let report = benchmark_reduction(&g, *samples, seed)?;
            emit(&with_schema(serde_json::to_value(&report)?), None)
        }
        Command::Validate { graph, config } => {
            if let Some(p) = graph {
                let g = GraphDoc::from_json(&read(p)?)?.to_graph()?;
                emit(
                    &with_schema(json!({
                        "valid": true,
                        "n": g.n(),
                        "k": g.k(),
                        "nodes": g.nodes().len(),
                        "topological_order": g.topological_order(),
                        "dead_nodes": g.dead_nodes(),
                        "constant_nodes": g.constant_nodes(),
                    })),
                    None,
                )
            } else if let Some(p) = config {
                let c: ExperimentConfig = serde_json::from_str(&read(p)?)?;
                c.validate()?;
                emit(&with_schema(json!({ "valid": true, "config": c })), None)
            } else {
                Err(NqsError::Contract("need --graph or --config".into()))
            }
        }
    }
}

fn error_json(e: &NqsError) -> Value {
    let mut err = json!({ "kind": e.kind(), "message": e.to_string() });
    if let NqsError::Acyclicity { cycle } = e {
        err["cycle"] = json!(cycle);
    }
    json!({ "error": err })
}

fn setup(cli: &Cli) -> NqsResult<()> {
    let cap = match (cli.max_n, std::env::var("NQS_MAX_N")) {
        (Some(n), _) => Some(n),
        (None, Ok(v)) => Some(v.trim().parse().map_err(|_| NqsError::Spec(format!("NQS_MAX_N is not an integer: {v:?}")))?),
        (None, Err(_)) => None,
    };
    if let Some(n) = cap {
        set_max_n(n)?;
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(NqsError::Spec("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| NqsError::Spec(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Ok(text) = serde_json::to_string(&json!({ "invocation": &cli })) {
        eprintln!("{text}");
    }
    match setup(&cli).and_then(|_| dispatch(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(2)
        }
    }
}
