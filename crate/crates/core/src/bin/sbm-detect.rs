use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sbm_detect::bp::InitMode;
use sbm_detect::eval::chance_baseline;
use sbm_detect::generator::{mix64, rng_from_seed};
use sbm_detect::io::{load_structure, read_graph_input, FittedParams, GraphFile, GraphInput, InferenceReport, MarginalsDump};
use sbm_detect::model::{affinity_from, InferenceModel};
use sbm_detect::sweep::{infer, run_sweep, write_outputs, InferenceSettings, SweepConfig, DEFAULT_TIE_TOLERANCE};
use sbm_detect::threshold;
use sbm_detect::{generate, Error, ModelSpec, PartitionMode, Result};

#[derive(Parser)]
#[command(name = "sbm-detect", version, about = "Stochastic block models with modular structure: generate, infer, analyze thresholds, sweep")]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (stdout when omitted, except for sweeps).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a graph with a planted partition.
    Generate(GenerateArgs),
    /// Run EM with belief propagation on a graph file or edge list.
    Infer(InferArgs),
    /// Detectability threshold of a structure at average degree c.
    Threshold(ThresholdArgs),
    /// Overlap-versus-noise sweep.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Preset name (community:<q>, fig1c, demo-regular-q3) or structure file.
    #[arg(long)]
    structure: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    c: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long, value_enum, default_value_t = Partition::ExactSizes)]
    partition: Partition,
}

#[derive(Clone, Copy, ValueEnum)]
enum Partition {
    ExactSizes,
    Multinomial,
}

impl From<Partition> for PartitionMode {
    fn from(p: Partition) -> Self {
        match p {
            Partition::ExactSizes => PartitionMode::ExactSizes,
            Partition::Multinomial => PartitionMode::Multinomial,
        }
    }
}

#[derive(Args)]
struct InferArgs {
    /// Graph file (JSON) or plain edge list.
    #[arg(long)]
    input: PathBuf,
    /// Structure to infer; defaults to the one recorded in a graph file.
    #[arg(long)]
    structure: Option<String>,
    /// Initial average degree; defaults to the graph file's value or the
    /// observed mean degree.
    #[arg(long)]
    c: Option<f64>,
    /// Initial noise level; defaults to the graph file's value or 0.5.
    #[arg(long)]
    eps: Option<f64>,
    /// Starting point for EM: the recorded/given parameters, or a noise level
    /// drawn uniformly from [0.05, 0.95] (seeded).
    #[arg(long, value_enum, default_value_t = LearnFrom::Truth)]
    learn_from: LearnFrom,
    /// Vertex count for edge-list input (default: largest index + 1).
    #[arg(long)]
    n: Option<usize>,
    /// Keep the prior fixed instead of learning it.
    #[arg(long)]
    fix_gamma: bool,
    /// Keep the connection probabilities fixed.
    #[arg(long)]
    fix_omega: bool,
    #[arg(long, default_value_t = 50)]
    em_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    em_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    bp_tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_sweeps: usize,
    #[arg(long, value_enum, default_value_t = Init::PerturbedPrior)]
    init: Init,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    damping: f64,
    /// Marginal differences below this count as ties in the assignment.
    #[arg(long, default_value_t = DEFAULT_TIE_TOLERANCE)]
    tie_tol: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LearnFrom {
    Truth,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    PerturbedPrior,
    Random,
    Planted,
}

#[derive(Args)]
struct ThresholdArgs {
    #[arg(long)]
    structure: String,
    #[arg(long)]
    c: f64,
}

#[derive(Args)]
struct SweepArgs {
    /// Built-in configuration (fig3, fig2-demo).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// JSON sweep configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the vertex count.
    #[arg(long)]
    n: Option<usize>,
    /// Override the samples per cell.
    #[arg(long)]
    samples: Option<usize>,
    /// Write 0 for wall_ms so that reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(args) => cmd_generate(cli, args),
        Command::Infer(args) => cmd_infer(cli, args),
        Command::Threshold(args) => cmd_threshold(cli, args),
        Command::Sweep(args) => cmd_sweep(cli, args),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_generate(cli: &Cli, args: &GenerateArgs) -> Result<()> {
    let structure = load_structure(&args.structure)?;
    let spec = ModelSpec::new(structure, args.n, args.c, args.eps)?;
    let seed = cli.seed.unwrap_or(0);
    let (planted, graph) = generate(&spec, args.partition.into(), seed)?;
    let text = match cli.format {
        Format::Json => GraphFile::new(&spec, seed, &graph, &planted).to_json()?,
        Format::Csv => graph.edges().iter().map(|(i, j)| format!("{i} {j}\n")).collect(),
    };
    emit(cli.out.as_deref(), &text)?;
    eprintln!(
        "N = {}, M = {}, mean degree = {:.4}",
        graph.n(),
        graph.num_edges(),
        graph.mean_degree()
    );
    Ok(())
}

fn cmd_infer(cli: &Cli, args: &InferArgs) -> Result<()> {
    let input = read_graph_input(&args.input, args.n)?;
    let (graph, file) = match input {
        GraphInput::File(file) => (file.graph()?, Some(file)),
        GraphInput::EdgeList(graph) => (graph, None),
    };
    let structure = match (&args.structure, &file) {
        (Some(name), _) => load_structure(name)?,
        (None, Some(f)) => f.spec.structure.clone().into_structure()?,
        (None, None) => {
            return Err(Error::InvalidParams("edge-list input needs --structure".into()));
        }
    };
    let c = args
        .c
        .or(file.as_ref().map(|f| f.spec.c))
        .unwrap_or_else(|| graph.mean_degree());
    let seed = cli.seed.or(file.as_ref().map(|f| f.seed)).unwrap_or(0);
    let eps = match args.learn_from {
        LearnFrom::Truth => args.eps.or(file.as_ref().map(|f| f.spec.epsilon)).unwrap_or(0.5),
        LearnFrom::Random => {
            use rand::Rng;
            let mut rng = rng_from_seed(mix64(seed ^ 0xE5_1A17));
            rng.random_range(0.05..0.95)
        }
    };
    let affinity = affinity_from(c, eps, &structure.w, &structure.gamma_prior, graph.n())?;
    let init = InferenceModel {
        w: structure.w.clone(),
        prior: structure.gamma_prior.clone(),
        affinity,
    };
    let planted = match &file {
        Some(f) => f.planted_partition()?,
        None => None,
    };
    let settings = InferenceSettings {
        learn_gamma: !args.fix_gamma,
        learn_omega: !args.fix_omega,
        em_max_iters: args.em_iters,
        em_tol: args.em_tol,
        bp_tol: args.bp_tol,
        bp_max_sweeps: args.max_sweeps,
        init: match args.init {
            Init::PerturbedPrior => InitMode::PerturbedPrior,
            Init::Random => InitMode::Random,
            Init::Planted => InitMode::Planted,
        },
        noise: args.noise,
        damping: args.damping,
        tie_tolerance: args.tie_tol,
    };
    let run = infer(&graph, init, &settings, seed, planted.as_ref())?;
    let q = structure.q;
    let model = &run.outcome.model;
    let report = InferenceReport {
        converged: run.converged(),
        em_iters: run.outcome.history.len(),
        bp: run.last_bp(),
        params: FittedParams {
            gamma: model.prior.as_slice().to_vec(),
            omega_in: model.affinity.omega_in,
            omega_out: model.affinity.omega_out,
            epsilon: model.affinity.epsilon,
        },
        overlap: run.overlap,
        chance: planted
            .as_ref()
            .map(|_| chance_baseline(structure.gamma_planted.as_slice())),
    };
    let marginals = run.outcome.state.marginals();
    let text = match cli.format {
        Format::Json => {
            let dump = MarginalsDump {
                marginals: marginals.chunks(q).map(<[f64]>::to_vec).collect(),
                assignments: run.assignments.clone(),
                report: report.clone(),
                history: run.outcome.history.clone(),
            };
            serde_json::to_string(&dump)? + "\n"
        }
        Format::Csv => {
            let mut s = String::from("vertex,assignment");
            for sigma in 0..q {
                s.push_str(&format!(",p{sigma}"));
            }
            s.push('\n');
            for (i, row) in marginals.chunks(q).enumerate() {
                s.push_str(&format!("{i},{}", run.assignments[i]));
                for x in row {
                    s.push_str(&format!(",{x}"));
                }
                s.push('\n');
            }
            s
        }
    };
    emit(cli.out.as_deref(), &text)?;
    let overlap = report
        .overlap
        .map(|o| format!(", overlap = {o:.4} (chance {:.4})", report.chance.unwrap_or(f64::NAN)))
        .unwrap_or_default();
    eprintln!(
        "converged = {}, EM iterations = {}, epsilon = {:.5}{overlap}",
        report.converged, report.em_iters, report.params.epsilon
    );
    Ok(())
}

fn cmd_threshold(cli: &Cli, args: &ThresholdArgs) -> Result<()> {
    let structure = load_structure(&args.structure)?;
    let report = threshold::analyze(&structure, args.c)?;
    let text = match cli.format {
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        Format::Csv => {
            let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
            format!(
                "c,q,regular,epsilon_star,method,status,lambda2_abs,edge_expansion\n{},{},{},{},{},{},{},{}\n",
                report.c,
                report.q,
                report.regular,
                opt(report.epsilon_star),
                report.method,
                report.status,
                opt(report.lambda2_abs),
                opt(report.edge_expansion)
            )
        }
    };
    emit(cli.out.as_deref(), &text)
}

fn cmd_sweep(cli: &Cli, args: &SweepArgs) -> Result<()> {
    let mut config = match (&args.preset, &args.config) {
        (Some(name), None) => SweepConfig::preset(name)?,
        (None, Some(path)) => SweepConfig::from_json(&std::fs::read_to_string(path)?)?,
        _ => return Err(Error::InvalidParams("sweep needs exactly one of --preset or --config".into())),
    };
    if let Some(n) = args.n {
        config.n = n;
    }
    if let Some(samples) = args.samples {
        config.samples = samples;
    }
    if let Some(seed) = cli.seed {
        config.seed_base = seed;
    }
    if let Some(threads) = cli.threads {
        config.workers = threads;
    }
    if args.no_timing {
        config.record_timing = false;
    }
    let result = run_sweep(&config)?;
    let path = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", config.name)));
    let outputs = write_outputs(&config, &result, &path)?;
    if cli.format == Format::Json {
        println!("{}", serde_json::to_string_pretty(&result.summary)?);
    }
    let failed = result.records.iter().filter(|r| r.overlap.is_none()).count();
    eprintln!(
        "{} rows ({failed} failed) -> {}, {}, {}",
        result.records.len(),
        outputs.records.display(),
        outputs.summary.display(),
        outputs.plot.display()
    );
    Ok(())
}
