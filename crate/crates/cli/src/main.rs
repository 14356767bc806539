use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use swnet::arch::ArchitectureSpec;
use swnet::graph::LayeredGraph;
use swnet::metrics::{small_worldness_with, BaselineConfig, ClusteringKind, MetricsReport};
use swnet::netgen::{count_params_flops, realize_graph, SwNetSpec};
use swnet::report::matrix_csv;
use swnet::rewire::{default_grid, log_grid, select_swn, sweep, SweepOptions};
use swnet::trainer::{
    compare, synthetic_digits, train, weight_heatmap, Dataset, DenseNetwork, DigitsConfig, Model, ParamSet,
    SwNetwork, TrainConfig, TrainError, TrainOutcome, TrainSummary,
};

mod manifest;

use manifest::Run;

#[derive(Parser)]
#[command(name = "swnet", version, about = "Small-world topology transforms for feed-forward networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert an architecture JSON into a layered graph edge list.
    Convert(ConvertArgs),
    /// Small-world metrics of one graph.
    Analyze(AnalyzeArgs),
    /// Rewire over a probability grid and keep the most small-world topology.
    Sweep(SweepArgs),
    /// Turn a topology back into a network description with sparse masks.
    Realize(RealizeArgs),
    /// Train a network on a labelled dataset.
    Train(TrainArgs),
    /// Tabulate convergence speedups of several training reports.
    Compare(CompareArgs),
    /// Layer-pair mean absolute weight of trained parameters.
    Heatmap(HeatmapArgs),
    /// Write the procedural 10-class digit dataset.
    Digits(DigitsArgs),
}

#[derive(Args)]
struct OutDir {
    /// Directory for outputs and the run manifest.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConvertArgs {
    arch: PathBuf,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct GraphInput {
    /// Edge-list file.
    graph: PathBuf,
    /// Architecture used to recover layer sizes when the edge list lacks them.
    #[arg(long)]
    arch: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Clustering {
    Average,
    Transitivity,
}

impl From<Clustering> for ClusteringKind {
    fn from(c: Clustering) -> Self {
        match c {
            Clustering::Average => ClusteringKind::AverageLocal,
            Clustering::Transitivity => ClusteringKind::Transitivity,
        }
    }
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    seed: u64,
    /// Random baseline: `mc:<samples>` or `analytic`.
    #[arg(long, default_value = "mc:50")]
    baseline: String,
    #[arg(long, value_enum, default_value = "average")]
    clustering: Clustering,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: GraphInput,
    #[command(flatten)]
    baseline: BaselineArgs,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: GraphInput,
    #[command(flatten)]
    baseline: BaselineArgs,
    /// Comma-separated probabilities, or `log:<count>:<lo>:<hi>` for zero
    /// followed by a log-spaced grid. Defaults to zero plus 32 points in
    /// [1e-4, 1].
    #[arg(long)]
    p_grid: Option<String>,
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    /// Allow rewired edges to point at any non-neighbor, not only later layers.
    #[arg(long)]
    any_direction: bool,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct RealizeArgs {
    /// Topology edge list (as written by `convert` or `sweep`).
    topology: PathBuf,
    #[arg(long)]
    arch: PathBuf,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct TrainArgs {
    /// Realized network JSON, or an architecture JSON to train its plain chain.
    network: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Training config JSON; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct CompareArgs {
    /// Report JSON files written by `train`.
    #[arg(num_args = 2.., required = true)]
    reports: Vec<PathBuf>,
    /// Index of the baseline among the reports.
    #[arg(long, default_value_t = 0)]
    baseline: usize,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct HeatmapArgs {
    network: PathBuf,
    /// Parameter JSON written by `train`.
    params: PathBuf,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct DigitsArgs {
    #[arg(long)]
    count: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    side: usize,
    #[arg(long, default_value_t = DigitsConfig::default().noise)]
    noise: f64,
    #[arg(long, default_value_t = DigitsConfig::default().dropout)]
    dropout: f64,
    #[command(flatten)]
    out: OutDir,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Convert(a) => cmd_convert(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Realize(a) => cmd_realize(a),
        Command::Train(a) => cmd_train(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Heatmap(a) => cmd_heatmap(a),
        Command::Digits(a) => cmd_digits(a),
    }
}

fn parse_baseline(text: &str, seed: u64) -> Result<BaselineConfig> {
    if text == "analytic" {
        return Ok(BaselineConfig::analytic());
    }
    let n = text
        .strip_prefix("mc:")
        .ok_or_else(|| anyhow!("baseline must be `mc:<samples>` or `analytic`, got {text:?}"))?;
    let n: usize = n.parse().with_context(|| format!("sample count in {text:?}"))?;
    if n == 0 {
        bail!("baseline needs at least one sample");
    }
    Ok(BaselineConfig::monte_carlo(n, seed))
}

fn parse_grid(text: Option<&str>) -> Result<Vec<f64>> {
    let Some(text) = text else { return Ok(default_grid()) };
    if let Some(spec) = text.strip_prefix("log:") {
        let parts: Vec<&str> = spec.split(':').collect();
        let [count, lo, hi] = parts[..] else { bail!("log grid must be `log:<count>:<lo>:<hi>`") };
        let (count, lo, hi): (usize, f64, f64) = (count.parse()?, lo.parse()?, hi.parse()?);
        if count == 0 || !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            bail!("log grid needs count >= 1 and 0 < lo <= hi <= 1");
        }
        return Ok(log_grid(count, lo, hi));
    }
    text.split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("probability {s:?}")))
        .collect()
}

fn load_graph(input: &GraphInput, run: &mut Run) -> Result<LayeredGraph> {
    run.input(&input.graph);
    let sizes = match &input.arch {
        Some(path) => {
            run.input(path);
            let arch = ArchitectureSpec::load(path)?;
            Some(arch.shapes()?.iter().map(|s| s.nodes).collect::<Vec<_>>())
        }
        None => None,
    };
    let graph = LayeredGraph::load(&input.graph, sizes.as_deref())?;
    let violations = graph.validate();
    if let Some(v) = violations.first() {
        bail!("{}: invalid layered graph ({} problems), first: {v:?}", input.graph.display(), violations.len());
    }
    Ok(graph)
}

fn cmd_convert(a: ConvertArgs) -> Result<()> {
    let mut run = Run::start("convert", &a.out.out)?;
    run.input(&a.arch);
    let arch = ArchitectureSpec::load(&a.arch)?;
    let graph = LayeredGraph::from_architecture(&arch)?;
    run.config(&arch);
    let path = run.output("graph.edges");
    graph.save(&path)?;
    println!("nodes={} edges={} layers={}", graph.node_count(), graph.edge_count(), graph.layer_count());
    run.finish()
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<()> {
    let mut run = Run::start("analyze", &a.out.out)?;
    let graph = load_graph(&a.input, &mut run)?;
    let baseline = parse_baseline(&a.baseline.baseline, a.baseline.seed)?;
    let kind = ClusteringKind::from(a.baseline.clustering);
    run.seed(a.baseline.seed);
    run.config(&(&baseline, a.baseline.clustering));
    let metrics = small_worldness_with(&graph.undirected(), &baseline, kind)?;
    let report = MetricsReport { metrics, is_small_world: metrics.is_small_world(), baseline, clustering: kind };
    std::fs::write(run.output("metrics.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    println!(
        "C={:.6} L={:.6} C_rand={:.6} L_rand={:.6} S={:.6}",
        metrics.c_g, metrics.l_g, metrics.c_rand, metrics.l_rand, metrics.s_g
    );
    run.finish()
}

#[derive(Serialize)]
struct SweepConfig<'a> {
    p_grid: &'a [f64],
    baseline: &'a BaselineConfig,
    options: &'a SweepOptions,
}

#[derive(Serialize)]
struct Selection {
    index: usize,
    p: f64,
    #[serde(flatten)]
    metrics: swnet::SmallWorldMetrics,
    rewired_edges: usize,
    kept_no_eligible: usize,
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let mut run = Run::start("sweep", &a.out.out)?;
    let graph = load_graph(&a.input, &mut run)?;
    let grid = parse_grid(a.p_grid.as_deref())?;
    let baseline = parse_baseline(&a.baseline.baseline, a.baseline.seed)?;
    let options = SweepOptions {
        replicates: a.replicates,
        forward_only: !a.any_direction,
        clustering: a.baseline.clustering.into(),
    };
    run.seed(a.baseline.seed);
    run.config(&SweepConfig { p_grid: &grid, baseline: &baseline, options: &options });
    let result = sweep(&graph, &grid, a.baseline.seed, &baseline, &options)?;
    std::fs::write(run.output("sweep.csv"), result.to_csv())?;
    let topology = select_swn(&result).context("every sweep point has undefined metrics")?;
    let index = result.selected.expect("selection exists");
    let metrics = *result.points[index].metrics.as_ref().expect("selected point is valid");
    topology.graph.save(run.output("selected.edges"))?;
    std::fs::write(run.output("selected.provenance"), topology.provenance_text())?;
    let selection = Selection {
        index,
        p: result.points[index].p,
        metrics,
        rewired_edges: topology.rewired_count(),
        kept_no_eligible: topology.no_eligible_count(),
    };
    std::fs::write(run.output("selected.json"), serde_json::to_string_pretty(&selection)? + "\n")?;
    println!("selected p={} S={:.6}", selection.p, metrics.s_g);
    run.finish()
}

fn cmd_realize(a: RealizeArgs) -> Result<()> {
    let mut run = Run::start("realize", &a.out.out)?;
    let graph = load_graph(&GraphInput { graph: a.topology.clone(), arch: Some(a.arch.clone()) }, &mut run)?;
    let arch = ArchitectureSpec::load(&a.arch)?;
    run.config(&arch);
    let spec = realize_graph(&graph, &arch)?;
    spec.save(run.output("swnet.json"))?;
    let counts = count_params_flops(&spec)?;
    std::fs::write(run.output("counts.json"), serde_json::to_string_pretty(&counts)? + "\n")?;
    let long_range = spec.connections.iter().filter(|c| c.is_long_range()).count();
    println!(
        "connections={} long_range={} weights={} multiplies={}",
        spec.connections.len(),
        long_range,
        counts.weights,
        counts.multiplies
    );
    run.finish()
}

/// A training target: a realized network, or the plain chain of an
/// architecture run on the reference executor.
enum Network {
    Sparse(SwNetwork),
    Chain { dense: DenseNetwork, layout: SwNetwork },
}

impl Network {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if value.get("connections").is_some() {
            return Ok(Network::Sparse(SwNetwork::new(&SwNetSpec::from_json(&text)?)?));
        }
        let arch = ArchitectureSpec::from_json(&text)?;
        let chain = realize_graph(&LayeredGraph::from_architecture(&arch)?, &arch)?;
        Ok(Network::Chain { dense: DenseNetwork::new(&arch)?, layout: SwNetwork::new(&chain)? })
    }

    fn model(&self) -> &dyn Model {
        match self {
            Network::Sparse(n) => n,
            Network::Chain { dense, .. } => dense,
        }
    }

    /// Executor whose connection layout matches the parameters.
    fn layout(&self) -> &SwNetwork {
        match self {
            Network::Sparse(n) => n,
            Network::Chain { layout, .. } => layout,
        }
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut run = Run::start("train", &a.out.out)?;
    run.input(&a.network);
    let network = Network::load(&a.network)?;
    let mut config = match &a.config {
        Some(path) => {
            run.input(path);
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<TrainConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => TrainConfig::default(),
    };
    config.seed = a.seed;
    run.seed(a.seed);
    run.config(&config);
    run.input(&a.train);
    run.input(&a.test);
    let model = network.model();
    let classes = Some(model.classes());
    let train_set = Dataset::load(&a.train, classes)?;
    let test_set = Dataset::load(&a.test, classes)?;
    let outcome = match train(model, &config, &train_set, &test_set) {
        Ok(o) => o,
        Err(TrainError::Diverged { report }) => {
            std::fs::write(run.output("report.csv"), report.to_csv())?;
            std::fs::write(run.output("report.json"), report.summary_json() + "\n")?;
            let d = report.summary.diverged.as_ref().expect("divergence recorded");
            bail!("training diverged at iteration {}: {} (partial report kept)", d.iteration, d.message);
        }
        Err(e) => return Err(e.into()),
    };
    let TrainOutcome { report, params } = outcome;
    std::fs::write(run.output("report.csv"), report.to_csv())?;
    std::fs::write(run.output("report.json"), report.summary_json() + "\n")?;
    std::fs::write(run.output("params.json"), serde_json::to_string(&params)? + "\n")?;
    std::fs::write(run.output("heatmap.csv"), matrix_csv(&weight_heatmap(network.layout(), &params)))?;
    println!("final accuracy {:.4} after {} iterations", report.summary.final_accuracy, report.summary.iterations_run);
    for hit in &report.summary.iterations_to_threshold {
        match hit.iteration {
            Some(it) => println!("  acc >= {}: iteration {it}", hit.threshold),
            None => println!("  acc >= {}: not reached", hit.threshold),
        }
    }
    run.finish()
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let mut run = Run::start("compare", &a.out.out)?;
    let mut summaries = Vec::new();
    let mut labels = Vec::new();
    for path in &a.reports {
        run.input(path);
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let s: TrainSummary = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        summaries.push(s);
        labels.push(path.display().to_string());
    }
    run.config(&a.baseline);
    let table = compare(&summaries, a.baseline)?.with_labels(labels);
    let text = table.to_text();
    std::fs::write(run.output("speedup.txt"), &text)?;
    std::fs::write(run.output("speedup.csv"), table.to_csv())?;
    print!("{text}");
    run.finish()
}

fn cmd_heatmap(a: HeatmapArgs) -> Result<()> {
    let mut run = Run::start("heatmap", &a.out.out)?;
    run.input(&a.network);
    run.input(&a.params);
    let network = Network::load(&a.network)?;
    let text = std::fs::read_to_string(&a.params).with_context(|| format!("reading {}", a.params.display()))?;
    let params: ParamSet = serde_json::from_str(&text).with_context(|| format!("parsing {}", a.params.display()))?;
    let expected = network.model().init_params(0);
    let same_layout = expected.tensors.len() == params.tensors.len()
        && expected.tensors.iter().zip(&params.tensors).all(|(e, p)| {
            e.name == p.name && e.values.len() == p.values.len() && e.active == p.active
        });
    if !same_layout {
        bail!("parameters in {} do not belong to this network", a.params.display());
    }
    run.config(&());
    std::fs::write(run.output("heatmap.csv"), matrix_csv(&weight_heatmap(network.layout(), &params)))?;
    run.finish()
}

fn cmd_digits(a: DigitsArgs) -> Result<()> {
    let mut run = Run::start("digits", &a.out.out)?;
    if a.side < 7 {
        bail!("digit images need side >= 7");
    }
    if !(0.0..=1.0).contains(&a.dropout) || !(a.noise >= 0.0) {
        bail!("dropout must lie in [0, 1] and noise must be non-negative");
    }
    let config = DigitsConfig { side: a.side, noise: a.noise, dropout: a.dropout };
    run.seed(a.seed);
    run.config(&(a.count, a.side, a.noise, a.dropout));
    synthetic_digits(a.count, a.seed, &config).save(run.output("digits.csv"))?;
    run.finish()
}
