//! `tabxai`: train a random forest on a CSV file and export explanations.

mod config;
mod error;
mod output;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tabxai_core::effects::GridStrategy;

use config::{FileConfig, RunConfig};
use error::{CliError, CliResult};
use pipeline::{Context, Selector};

#[derive(Parser)]
#[command(
    name = "tabxai",
    version,
    about = "Random forest training and explanation for tabular data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split, fit the forest, evaluate on the test split.
    Train(Common),
    /// Shapley and LIME explanations for one instance, optionally global SHAP files.
    Explain(ExplainArgs),
    /// PDP, ICE and ALE curves.
    Effects(EffectsArgs),
    /// Train, explain (with global files) and effects for every feature.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// Flat TOML file with run settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Name of the 0/1 label column.
    #[arg(long)]
    label: Option<String>,
    /// Master seed for split, forest, sampling and explainers.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_parser = parse_grid)]
    grid: Option<GridStrategy>,
    /// Add a generation time to the provenance block.
    #[arg(long)]
    timestamps: bool,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    common: Common,
    /// Model file; defaults to <out>/model.json.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Index into the test split.
    #[arg(long, conflicts_with = "instance")]
    row: Option<usize>,
    /// Comma-separated feature values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    instance: Option<Vec<f64>>,
    /// Also write importance, summary and dependence files over the test split.
    #[arg(long)]
    global: bool,
}

#[derive(Args)]
struct EffectsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Feature to analyse (repeatable); defaults to all features.
    #[arg(long = "feature")]
    features: Vec<String>,
    /// Two features for a 2-D PDP, as `A,B` (repeatable).
    #[arg(long = "pair")]
    pairs: Vec<String>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    /// Test-split row explained locally.
    #[arg(long, default_value_t = 0)]
    row: usize,
}

fn parse_grid(s: &str) -> Result<GridStrategy, String> {
    match s {
        "uniform" => Ok(GridStrategy::Uniform),
        "quantile" => Ok(GridStrategy::Quantile),
        _ => Err(format!("unknown grid `{s}` (uniform or quantile)")),
    }
}

fn context(common: &Common) -> CliResult<Context> {
    let mut file = match &common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    if common.data.is_some() {
        file.data.clone_from(&common.data);
    }
    if common.label.is_some() {
        file.label.clone_from(&common.label);
    }
    if common.out.is_some() {
        file.out.clone_from(&common.out);
    }
    file.seed = common.seed.or(file.seed);
    file.threads = common.threads.or(file.threads);
    file.grid_strategy = common.grid.or(file.grid_strategy);
    let cfg = RunConfig::resolve(file)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::new("E_CONFIG", e.to_string()))?;
    }
    Context::prepare(cfg, common.timestamps)
}

fn model_for(ctx: &Context, path: &Option<PathBuf>) -> CliResult<tabxai_core::ForestModel> {
    let path = path.clone().unwrap_or_else(|| ctx.out.path("model.json"));
    pipeline::load_model(ctx, &path)
}

fn parse_pair(s: &str) -> CliResult<(String, String)> {
    match s.split_once(',') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
        _ => Err(CliError::new(
            "E_ARG",
            format!("pair `{s}` is not of the form A,B"),
        )),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(common) => {
            let ctx = context(&common)?;
            pipeline::train(&ctx)?;
        }
        Command::Explain(args) => {
            let ctx = context(&args.common)?;
            let model = model_for(&ctx, &args.model)?;
            let selector = match args.instance {
                Some(values) => Selector::Values(values),
                None => Selector::Row(args.row.unwrap_or(0)),
            };
            pipeline::explain(&ctx, &model, &selector)?;
            if args.global {
                pipeline::explain_global(&ctx, &model)?;
            }
        }
        Command::Effects(args) => {
            let ctx = context(&args.common)?;
            let model = model_for(&ctx, &args.model)?;
            let features = if args.features.is_empty() {
                model.feature_names.clone()
            } else {
                args.features
            };
            let pairs = args
                .pairs
                .iter()
                .map(|p| parse_pair(p))
                .collect::<CliResult<Vec<_>>>()?;
            pipeline::effects(&ctx, &model, &features, &pairs)?;
        }
        Command::Report(args) => {
            let ctx = context(&args.common)?;
            let model = pipeline::train(&ctx)?;
            pipeline::explain(&ctx, &model, &Selector::Row(args.row))?;
            let ranked = pipeline::explain_global(&ctx, &model)?;
            let pairs = match ranked.as_slice() {
                [a, b, ..] => vec![(a.clone(), b.clone())],
                _ => Vec::new(),
            };
            pipeline::effects(&ctx, &model, &model.feature_names.clone(), &pairs)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let first = first.trim_start_matches("error: ");
            eprintln!("{}", CliError::new("E_USAGE", first));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
