//! `ttcd` — temporal causal discovery from non-stationary time series.
//!
//! Subcommands: `generate` (synthetic benchmarks), `stationarity`
//! (ADF/KPSS profile), `discover` (train and emit a causal graph),
//! `evaluate` (score a graph against truth), `ablate` (variant
//! comparison).
//!
//! Exit codes: 0 success, 2 domain error (e.g. acyclicity violation at
//! the chosen threshold), 64 usage error, 74 I/O error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::RunConfig;
use ttcd_core::data::{load_csv, Edge, TemporalGraph, TimeSeriesDataset};
use ttcd_core::error::TtcdError;
use ttcd_core::metrics::score;
use ttcd_core::stationarity;
use ttcd_core::synth::{generate, DatasetId, GenSpec, NoiseKind};
use ttcd_core::train::{run_ablation, train, TrainOutcome, TrainReport, VariantId};

#[derive(Parser)]
#[command(name = "ttcd", version, about = "Temporal causal discovery from non-stationary time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark dataset with its ground-truth graph.
    Generate(GenerateArgs),
    /// ADF/KPSS stationarity profile of a CSV dataset.
    Stationarity(StationarityArgs),
    /// Learn a full temporal causal graph from a CSV dataset.
    Discover(DiscoverArgs),
    /// Score a predicted graph against a ground-truth graph.
    Evaluate(EvaluateArgs),
    /// Train several model variants and compare their scores.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Benchmark id: ds1 or ds2.
    #[arg(long)]
    dataset: String,
    /// Number of emitted timesteps.
    #[arg(long, default_value_t = 1000)]
    length: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Discarded start-up steps.
    #[arg(long, default_value_t = 50)]
    burn_in: usize,
    /// Innovation noise for ds2: gaussian or poisson.
    #[arg(long, default_value = "gaussian")]
    noise: String,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct StationarityArgs {
    /// Input CSV (header row of names, one row per timestep).
    #[arg(long)]
    input: PathBuf,
    /// Augmentation lags for ADF (default: automatic).
    #[arg(long)]
    max_lag: Option<usize>,
    /// Newey-West bandwidth for KPSS (default: automatic).
    #[arg(long)]
    bandwidth: Option<usize>,
}

#[derive(Args)]
struct DiscoverArgs {
    /// Input CSV (header row of names, one row per timestep).
    #[arg(long)]
    input: PathBuf,
    /// Maximum considered lag.
    #[arg(long)]
    max_lag: Option<usize>,
    /// Pruning threshold omega.
    #[arg(long)]
    threshold: Option<f64>,
    /// Model variant (full, no-dsb, no-frequency, normal-transformer,
    /// causal-conv1d, no-transformer).
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// key=value config file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write a parameter checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    hyper: HyperFlags,
}

#[derive(Args)]
struct HyperFlags {
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long)]
    h_tol: Option<f64>,
    #[arg(long)]
    d_e: Option<usize>,
    #[arg(long)]
    hidden_channels: Option<usize>,
    #[arg(long)]
    warmup_epochs: Option<usize>,
    /// Train reconstruction first, then the full objective.
    #[arg(long)]
    two_stage: bool,
}

impl HyperFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.lambda1 {
            cfg.lambda1 = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.rho {
            cfg.rho = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.max_rounds {
            cfg.max_rounds = v;
        }
        if let Some(v) = self.h_tol {
            cfg.h_tol = v;
        }
        if let Some(v) = self.d_e {
            cfg.d_e = v;
        }
        if let Some(v) = self.hidden_channels {
            cfg.hidden_channels = v;
        }
        if let Some(v) = self.warmup_epochs {
            cfg.warmup_epochs = v;
        }
        if self.two_stage {
            cfg.two_stage = true;
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted graph JSON.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth graph JSON.
    #[arg(long)]
    truth: PathBuf,
    /// Optional scorecard JSON output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// Benchmark id: ds1 or ds2 (generated internally).
    #[arg(long)]
    dataset: String,
    /// Comma-separated variant list.
    #[arg(long, default_value = "full,no-dsb,no-frequency,normal-transformer")]
    variants: String,
    /// Number of seeds; scores are medians across them.
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    #[arg(long, default_value_t = 1000)]
    length: usize,
    /// Base seed; run s uses base_seed + s.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    hyper: HyperFlags,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap help/version exit cleanly; anything else is usage
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(64);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Stationarity(args) => cmd_stationarity(args),
        Command::Discover(args) => cmd_discover(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Ablate(args) => cmd_ablate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &TtcdError) -> u8 {
    match e {
        TtcdError::Config(_) => 64,
        TtcdError::Io(_) | TtcdError::Parse { .. } => 74,
        TtcdError::Domain(_) | TtcdError::NonFinite(_) | TtcdError::Shape(_) => 2,
    }
}

type CliResult = std::result::Result<(), TtcdError>;

/// Seed resolution: flag, else TTCD_SEED, else 0.
fn resolve_seed(flag: Option<u64>) -> Result<u64, TtcdError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("TTCD_SEED") {
        Ok(v) => v
            .parse()
            .map_err(|_| TtcdError::Config(format!("TTCD_SEED must be an integer, got '{v}'"))),
        Err(_) => Ok(0),
    }
}

/// Per-dataset default pruning thresholds, from the shipped threshold
/// set. Unknown datasets fall back to the largest entry.
fn default_threshold(dataset_hint: Option<&str>) -> f64 {
    match dataset_hint {
        Some("ds1") => 0.07,
        Some("ds2") => 0.04,
        _ => 0.17,
    }
}

fn cmd_generate(args: GenerateArgs) -> CliResult {
    let id = DatasetId::parse(&args.dataset)?;
    let seed = resolve_seed(args.seed)?;
    let mut spec = GenSpec::new(id, args.length, seed);
    spec.burn_in = args.burn_in;
    spec.noise = match args.noise.as_str() {
        "gaussian" => NoiseKind::Gaussian,
        "poisson" => NoiseKind::PoissonCentered,
        other => {
            return Err(TtcdError::Config(format!(
                "unknown noise kind '{other}' (expected gaussian or poisson)"
            )))
        }
    };
    let (ds, truth) = generate(&spec)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let data_path = args.out_dir.join("data.csv");
    let truth_path = args.out_dir.join("truth.json");
    ds.save_csv(&data_path)?;
    truth.save_json(&truth_path)?;
    println!(
        "wrote {} ({} rows x {} vars) and {} ({} edges)",
        data_path.display(),
        ds.len(),
        ds.n_vars(),
        truth_path.display(),
        truth.edge_count()
    );
    Ok(())
}

fn cmd_stationarity(args: StationarityArgs) -> CliResult {
    let ds = load_csv(&args.input)?;
    let report = if args.max_lag.is_none() && args.bandwidth.is_none() {
        stationarity::profile(&ds)?
    } else {
        let mut rows = Vec::new();
        for (v, name) in ds.names().iter().enumerate() {
            let col = ds.column(v);
            let (adf_stat, adf_p) = stationarity::adf_test(&col, args.max_lag)?;
            let (kpss_stat, kpss_p) = stationarity::kpss_test(&col, args.bandwidth)?;
            rows.push(stationarity::VariableVerdict {
                name: name.clone(),
                adf_stat,
                adf_p,
                adf_stationary: adf_p <= 0.05,
                kpss_stat,
                kpss_p,
                kpss_stationary: kpss_p >= 0.05,
            });
        }
        stationarity::StationarityReport { rows }
    };
    print!("{}", report.render());
    Ok(())
}

/// Everything written by `discover`, as one serializable record.
#[derive(Serialize)]
struct DiscoverReport<'a> {
    config: &'a RunConfig,
    report: &'a TrainReport,
    outputs: Outputs,
}

#[derive(Serialize)]
struct Outputs {
    graph_json: String,
    graph_dot: String,
    adjacency_csv: String,
}

#[derive(Serialize)]
struct GraphArtifact<'a> {
    variables: &'a [String],
    max_lag: usize,
    edges: &'a [Edge],
    config: &'a RunConfig,
}

fn write_discover_outputs(
    out_dir: &Path,
    cfg: &RunConfig,
    outcome: &TrainOutcome,
    dataset: &TimeSeriesDataset,
) -> CliResult {
    std::fs::create_dir_all(out_dir)?;
    let graph_path = out_dir.join("graph.json");
    let artifact = GraphArtifact {
        variables: &outcome.graph.variables,
        max_lag: outcome.graph.max_lag,
        edges: &outcome.graph.edges,
        config: cfg,
    };
    std::fs::write(
        &graph_path,
        serde_json::to_string_pretty(&artifact).expect("graph serializes"),
    )?;

    let dot_path = out_dir.join("graph.dot");
    let mut dot = String::new();
    for line in cfg.to_kv().lines() {
        dot.push_str(&format!("// {line}\n"));
    }
    dot.push_str(&outcome.graph.to_dot());
    std::fs::write(&dot_path, dot)?;

    let adj_path = out_dir.join("adjacency.csv");
    outcome.adjacency.save_csv(&adj_path, dataset.names())?;

    let report_path = out_dir.join("report.json");
    let report = DiscoverReport {
        config: cfg,
        report: &outcome.report,
        outputs: Outputs {
            graph_json: graph_path.display().to_string(),
            graph_dot: dot_path.display().to_string(),
            adjacency_csv: adj_path.display().to_string(),
        },
    };
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    Ok(())
}

fn cmd_discover(args: DiscoverArgs) -> CliResult {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    // dataset-aware default threshold unless the file/flag set one
    let dataset_hint = args
        .input
        .file_stem()
        .and_then(|s| s.to_str())
        .map(|s| s.to_string());
    if args.config.is_none() {
        cfg.omega = default_threshold(dataset_hint.as_deref());
    }
    args.hyper.apply(&mut cfg);
    if let Some(l) = args.max_lag {
        cfg.max_lag = l;
    }
    if let Some(t) = args.threshold {
        cfg.omega = t;
    }
    if let Some(v) = &args.variant {
        cfg.variant = v.clone();
    }
    if args.seed.is_some() || std::env::var("TTCD_SEED").is_ok() {
        cfg.seed = resolve_seed(args.seed)?;
    }
    if cfg.max_lag == 0 {
        return Err(TtcdError::Config("--max-lag must be >= 1".into()));
    }
    let variant = VariantId::parse(&cfg.variant)?;
    let ds = load_csv(&args.input)?;
    let hp = cfg.hyperparams();
    let outcome = train(&ds, cfg.max_lag, &hp, variant)?;
    write_discover_outputs(&args.out_dir, &cfg, &outcome, &ds)?;
    if let Some(ckpt) = &args.checkpoint {
        ttcd_core::checkpoint::save(&outcome.state.params, ckpt)?;
    }
    println!(
        "discovered {} edges (h = {:.3e}, {} rounds, {:.1}s); outputs in {}",
        outcome.graph.edge_count(),
        outcome.report.final_h,
        outcome.report.rounds,
        outcome.report.wall_clock_secs,
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult {
    let pred = TemporalGraph::load_json(&args.pred)?;
    let truth = TemporalGraph::load_json(&args.truth)?;
    let card = score(&pred, &truth)?;
    println!("shd={} f1={} fdr={}", card.shd, card.f1, card.fdr);
    if let Some(out) = &args.out {
        std::fs::write(out, serde_json::to_string_pretty(&card).expect("card serializes"))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct AblationRow {
    variant: String,
    shd: f64,
    f1: f64,
    fdr: f64,
    seeds: usize,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn cmd_ablate(args: AblateArgs) -> CliResult {
    let id = DatasetId::parse(&args.dataset)?;
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    } else {
        cfg.omega = default_threshold(Some(id.as_str()));
    }
    args.hyper.apply(&mut cfg);
    if let Some(t) = args.threshold {
        cfg.omega = t;
    }
    let base_seed = resolve_seed(args.seed)?;
    cfg.seed = base_seed;
    cfg.max_lag = id.max_structural_lag();
    if args.seeds == 0 {
        return Err(TtcdError::Config("--seeds must be >= 1".into()));
    }
    let variants: Vec<VariantId> = args
        .variants
        .split(',')
        .map(|s| VariantId::parse(s.trim()))
        .collect::<Result<_, _>>()?;
    if variants.is_empty() {
        return Err(TtcdError::Config("empty variant list".into()));
    }

    let truth = ttcd_core::synth::truth_graph(id)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let mut rows = Vec::new();
    for &variant in &variants {
        let mut shds = Vec::new();
        let mut f1s = Vec::new();
        let mut fdrs = Vec::new();
        for s in 0..args.seeds {
            let seed = base_seed + s as u64;
            let (ds, _) = generate(&GenSpec::new(id, args.length, 1000 + seed))?;
            let mut hp = cfg.hyperparams();
            hp.seed = seed;
            let outcomes = run_ablation(&ds, cfg.max_lag, &hp, &[variant])?;
            let (_, outcome) = &outcomes[0];
            let card = score(&outcome.graph, &truth)?;
            let report_path = args
                .out_dir
                .join(format!("report-{}-seed{}.json", variant.as_str(), seed));
            std::fs::write(
                &report_path,
                serde_json::to_string_pretty(&outcome.report).expect("report serializes"),
            )?;
            shds.push(card.shd as f64);
            f1s.push(card.f1);
            fdrs.push(card.fdr);
        }
        rows.push(AblationRow {
            variant: variant.as_str().to_string(),
            shd: median(&mut shds),
            f1: median(&mut f1s),
            fdr: median(&mut fdrs),
            seeds: args.seeds,
        });
    }

    println!(
        "{:<20} {:>8} {:>8} {:>8}   (medians over {} seeds, SHD lower / F1 higher / FDR lower)",
        "variant", "SHD", "F1", "FDR", args.seeds
    );
    let mut csv = String::from("variant,shd,f1,fdr,seeds\n");
    for row in &rows {
        println!(
            "{:<20} {:>8.1} {:>8.3} {:>8.3}",
            row.variant, row.shd, row.f1, row.fdr
        );
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.variant, row.shd, row.f1, row.fdr, row.seeds
        ));
    }
    let table_path = args.out_dir.join("comparison.csv");
    std::fs::write(&table_path, csv)?;
    println!("wrote {}", table_path.display());
    Ok(())
}
