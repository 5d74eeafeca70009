//! `spikecore`: run networks, the digit and citation-graph experiments, the
//! spike codec and the device server from the command line.

mod files;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use spikecore::harness::{self, DigitsParams, GraphParams, GraphSplit, TeacherMode};
use spikecore::protocol::{serve_listener, serve_serial};
use spikecore::Network;
use std::fmt;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "spikecore", version, about = "Fixed-point spiking core emulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a network described by a manifest and write raster, membrane and weights.
    Run { manifest: PathBuf },
    /// Train digit weights on the float model and write them as a 10x64 CSV grid.
    TrainDigits {
        #[command(flatten)]
        digits: DigitsArgs,
        #[arg(long, default_value = "weights_in.csv")]
        out: PathBuf,
    },
    /// Classify the held-out digits on the core and print an accuracy report.
    EvalDigits {
        #[command(flatten)]
        digits: DigitsArgs,
        /// Use these weights instead of training first.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Also write the weights used as a CSV grid.
        #[arg(long)]
        heatmap: Option<PathBuf>,
    },
    /// Classify held-out papers of a citation graph through learned topic links.
    GraphClassify {
        #[command(flatten)]
        graph: GraphArgs,
        /// Fraction of papers held out.
        #[arg(long, default_value_t = 0.3)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write fixed vs float topic-link trajectories (CSV) to this file.
        #[arg(long)]
        divergence: Option<PathBuf>,
    },
    /// Shrink a citation graph to a connected core with every topic kept.
    ReduceGraph {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 84)]
        target: usize,
        #[arg(long)]
        out_labels: Option<PathBuf>,
        #[arg(long)]
        out_edges: Option<PathBuf>,
    },
    /// Convert a spike stream to wire-format words. Files ending in `.bin` are
    /// wire format, anything else `t,address` CSV.
    Encode { input: PathBuf, output: PathBuf },
    /// Convert wire-format words back to a spike stream; same file conventions as `encode`.
    Decode { input: PathBuf, output: PathBuf },
    /// Serve the device protocol over TCP or a serial device.
    Serve {
        #[arg(long, conflicts_with = "serial", required_unless_present = "serial")]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long)]
        serial: Option<PathBuf>,
        #[arg(long, default_value_t = spikecore::network::DEFAULT_N_MAX)]
        n_max: usize,
        /// Exit after this many TCP sessions.
        #[arg(long)]
        sessions: Option<usize>,
    },
}

#[derive(Args)]
struct DigitsArgs {
    #[arg(long, default_value = "data/digits.csv")]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Teacher::Every)]
    teacher: Teacher,
    /// Inference steps per sample.
    #[arg(long, default_value_t = 40)]
    t_end: u32,
}

#[derive(Clone, Copy, ValueEnum)]
enum Teacher {
    /// Label spike after every input-carrying step.
    Every,
    /// One label spike after the last input.
    Single,
}

#[derive(Args)]
struct GraphArgs {
    /// `paper,topic` CSV.
    #[arg(long)]
    labels: PathBuf,
    /// Whitespace-separated citation pairs.
    #[arg(long)]
    edges: PathBuf,
    /// Restrict to the listed paper ids.
    #[arg(long)]
    keep: Option<PathBuf>,
    /// Reduce to this many papers before use.
    #[arg(long)]
    reduce: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Usage,
    Data,
    Protocol,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::Data => "data",
            Kind::Protocol => "protocol",
        }
    }

    fn code(self) -> u8 {
        match self {
            Kind::Usage => 2,
            Kind::Data => 3,
            Kind::Protocol => 4,
        }
    }
}

/// Marks an error as belonging to a particular exit class.
#[derive(Debug)]
struct Tagged {
    kind: Kind,
    inner: anyhow::Error,
}

impl fmt::Display for Tagged {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.inner)
    }
}

impl std::error::Error for Tagged {}

pub(crate) fn protocol_error(inner: anyhow::Error) -> anyhow::Error {
    anyhow::Error::new(Tagged { kind: Kind::Protocol, inner })
}

fn classify(e: &anyhow::Error) -> Kind {
    e.chain().find_map(|c| c.downcast_ref::<Tagged>()).map_or(Kind::Data, |t| t.kind)
}

fn fail(kind: Kind, message: &str) -> ExitCode {
    eprintln!("{}", json!({ "error": kind.name(), "message": message }));
    ExitCode::from(kind.code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            return fail(Kind::Usage, first.trim_start_matches("error: "));
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(classify(&e), &format!("{e:#}")),
    }
}

fn print_json(v: &Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { manifest } => run(&manifest),
        Command::TrainDigits { digits, out } => train_digits(&digits, &out),
        Command::EvalDigits { digits, weights, heatmap } => eval_digits(&digits, weights.as_deref(), heatmap.as_deref()),
        Command::GraphClassify { graph, test_fraction, seed, divergence } => {
            graph_classify(&graph, test_fraction, seed, divergence.as_deref())
        }
        Command::ReduceGraph { graph, target, out_labels, out_edges } => {
            reduce_graph(&graph, target, out_labels.as_deref(), out_edges.as_deref())
        }
        Command::Encode { input, output } | Command::Decode { input, output } => {
            let events = files::read_spikes(&input)?;
            files::write_spikes(&output, &events)?;
            print_json(&json!({ "events": events.len(), "output": output.display().to_string() }))
        }
        Command::Serve { port, bind, serial, n_max, sessions } => serve(port, &bind, serial.as_deref(), n_max, sessions),
    }
}

fn run(manifest: &Path) -> Result<()> {
    let m = files::load_manifest(manifest)?;
    let n = m.config.n;
    let mut net = Network::new(m.config)?;
    let trace = net.run(&m.stream, m.t_end)?;
    let weights = trace.final_weights.as_ref().expect("run returns weights");
    files::write(&m.output.join("raster.csv"), files::raster_csv(&trace).as_bytes())?;
    files::write(&m.output.join("membrane.csv"), files::membrane_csv(&trace).as_bytes())?;
    files::write(&m.output.join("weights_after.csv"), files::weights_long_csv(&weights.w_aa, &weights.w_in).as_bytes())?;
    print_json(&json!({
        "t_end": m.t_end,
        "events": m.stream.len(),
        "spikes": trace.raster.len(),
        "spike_counts": trace.spike_counts(n),
        "seed": m.seed,
        "output": m.output.display().to_string(),
    }))
}

fn digits_params(args: &DigitsArgs) -> DigitsParams {
    DigitsParams {
        seed: args.seed,
        teacher: match args.teacher {
            Teacher::Every => TeacherMode::EveryInputStep,
            Teacher::Single => TeacherMode::SingleSpike,
        },
        t_end: args.t_end,
        ..DigitsParams::default()
    }
}

fn params_json(p: &DigitsParams) -> Value {
    json!({
        "train_fraction": p.train_fraction,
        "window": p.window,
        "spikes_per_level": p.spikes_per_level,
        "teacher": match p.teacher { TeacherMode::EveryInputStep => "every", TeacherMode::SingleSpike => "single" },
        "train_dw_pos": p.train_dw_pos,
        "train_dw_neg": p.train_dw_neg,
        "train_t_pre": p.train_t_pre,
        "train_t_post": p.train_t_post,
        "weight_shift": p.weight_shift,
        "v_th": p.neuron.v_th.to_f64(),
        "leak": p.neuron.leak.to_f64(),
        "v_reset": p.neuron.v_reset.to_f64(),
        "syn_leak_raw": p.neuron.syn_leak.raw(),
        "refractory": p.neuron.refractory_steps,
        "t_end": p.t_end,
    })
}

fn train_digits(args: &DigitsArgs, out: &Path) -> Result<()> {
    let params = digits_params(args);
    let samples = harness::load_digits(&args.data)?;
    let (train, test) = harness::split_indices(samples.len(), params.train_fraction, params.seed);
    let trained = harness::train_digits_one_shot(&samples, &train, &params);
    files::write(out, files::weights_grid_csv(&trained.w_in).as_bytes())?;
    print_json(&json!({
        "seed": params.seed,
        "n_train": train.len(),
        "n_test": test.len(),
        "weights": out.display().to_string(),
        "parameters": params_json(&params),
    }))
}

fn eval_digits(args: &DigitsArgs, weights: Option<&Path>, heatmap: Option<&Path>) -> Result<()> {
    let params = digits_params(args);
    let samples = harness::load_digits(&args.data)?;
    let (train, test) = harness::split_indices(samples.len(), params.train_fraction, params.seed);
    let w_in = match weights {
        Some(p) => files::read_weights(p, harness::digits::CLASSES, harness::digits::PIXELS)?,
        None => harness::train_digits_one_shot(&samples, &train, &params).w_in,
    };
    if let Some(p) = heatmap {
        files::write(p, files::weights_grid_csv(&w_in).as_bytes())?;
    }
    let fixed = harness::eval_digits(&w_in, &samples, &test, &params);
    let float = harness::eval_digits_float(&w_in, &samples, &test, &params);
    let per_class: Vec<Value> = fixed
        .per_class()
        .iter()
        .enumerate()
        .map(|(k, &(correct, total))| json!({ "label": k, "correct": correct, "total": total }))
        .collect();
    print_json(&json!({
        "accuracy": fixed.accuracy,
        "float_accuracy": float.accuracy,
        "n_train": train.len(),
        "n_test": test.len(),
        "seed": params.seed,
        "per_class": per_class,
        "confusion": fixed.confusion,
        "parameters": params_json(&params),
    }))
}

fn load_graph(args: &GraphArgs) -> Result<harness::CitationGraph> {
    let graph = harness::load_citation(&args.labels, &args.edges, args.keep.as_deref())?;
    Ok(match args.reduce {
        Some(target) => harness::microseer_reduce(&graph, target)?,
        None => graph,
    })
}

fn graph_classify(args: &GraphArgs, test_fraction: f64, seed: u64, divergence: Option<&Path>) -> Result<()> {
    anyhow::ensure!((0.0..=1.0).contains(&test_fraction), "test fraction {test_fraction} outside 0..=1");
    let graph = load_graph(args)?;
    let params = GraphParams::default();
    let split = GraphSplit::seeded(graph.len(), test_fraction, seed);
    let net = harness::build_graph_network(&graph, &split, &params)?;
    let mut predictions = Vec::new();
    let mut correct = 0;
    let mut trajectories = String::from("paper,t,topic,fixed,float\n");
    for &p in &split.test {
        let (pred, _) = harness::classify_node(&net, p, &params);
        correct += (pred.predicted == pred.truth) as usize;
        let mut entry = json!({
            "paper": graph.papers[p],
            "predicted": graph.topic_names[pred.predicted],
            "truth": graph.topic_names[pred.truth],
            "topic_weights": pred.topic_weights,
            "reachable": pred.reachable,
            "tie_break": pred.tied,
        });
        if divergence.is_some() {
            let report = harness::divergence_report(&net, p, &params, 1);
            for ((t, fx), fl) in report.times.iter().zip(&report.fixed).zip(&report.float) {
                for k in 0..net.topics {
                    trajectories.push_str(&format!("{},{t},{},{},{}\n", graph.papers[p], graph.topic_names[k], fx[k], fl[k]));
                }
            }
            entry["max_abs_gap"] = json!(report.max_abs_gap);
        }
        predictions.push(entry);
    }
    if let Some(path) = divergence {
        files::write(path, trajectories.as_bytes())?;
    }
    let accuracy = if split.test.is_empty() { 0.0 } else { correct as f64 / split.test.len() as f64 };
    print_json(&json!({
        "papers": graph.len(),
        "neurons": net.config.n,
        "topics": graph.topic_names,
        "test_papers": split.test.len(),
        "seed": seed,
        "accuracy": accuracy,
        "predictions": predictions,
    }))
}

fn reduce_graph(args: &GraphArgs, target: usize, out_labels: Option<&Path>, out_edges: Option<&Path>) -> Result<()> {
    let full = load_graph(args)?;
    let reduced = harness::microseer_reduce(&full, target)?;
    if let Some(p) = out_labels {
        let mut text = String::from("paper,topic\n");
        for (paper, &t) in reduced.papers.iter().zip(&reduced.topics) {
            text.push_str(&format!("{paper},{}\n", reduced.topic_names[t]));
        }
        files::write(p, text.as_bytes())?;
    }
    if let Some(p) = out_edges {
        let text: String = reduced.edges.iter().map(|&(a, b)| format!("{} {}\n", reduced.papers[a], reduced.papers[b])).collect();
        files::write(p, text.as_bytes())?;
    }
    print_json(&json!({
        "papers": reduced.len(),
        "edges": reduced.edges.len(),
        "connected": reduced.is_connected(),
        "topics": reduced.topics_present().iter().map(|&t| &reduced.topic_names[t]).collect::<Vec<_>>(),
        "kept": reduced.papers,
    }))
}

fn serve(port: Option<u16>, bind: &str, serial: Option<&Path>, n_max: usize, sessions: Option<usize>) -> Result<()> {
    if let Some(dev) = serial {
        let end = serve_serial(dev, n_max).map_err(|e| protocol_error(anyhow::anyhow!("{}: {e}", dev.display())))?;
        return print_json(&json!({ "serial": dev.display().to_string(), "end": format!("{end:?}") }));
    }
    let port = port.expect("clap requires --port or --serial");
    let listener = TcpListener::bind((bind, port)).map_err(|e| protocol_error(anyhow::anyhow!("binding {bind}:{port}: {e}")))?;
    let addr = listener.local_addr()?;
    println!("{}", json!({ "listening": addr.to_string() }));
    std::io::stdout().flush()?;
    serve_listener(&listener, n_max, sessions).map_err(|e| protocol_error(e.into()))
}
