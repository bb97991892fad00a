use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use skillvid_cli::config::EmbedProvider;
use skillvid_cli::pipeline::{error_chain, summarize, DECISIONS_FILE, FEATURES_FILE, METRICS_FILE, MODEL_FILE};
use skillvid_cli::{Pipeline, PipelineError, RunConfig, Stage, StageStatus};
use skillvid_core::eval::{sweep_csv, EvalReport};
use skillvid_core::featurize::SchemaId;
use skillvid_core::source::SourceKind;

/// Find and classify training videos for job-title / skill pairs.
///
/// Settings come from the TOML file given with --config; flags override
/// it. The remote search source reads its key from VIDEO_API_KEY and the
/// remote embedder its server URL from EMBED_ENDPOINT (both names are
/// configurable).
///
/// Exit status: 0 success, 1 stage failure, 2 configuration error.
#[derive(Parser)]
#[command(name = "skillvid", version)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long, global = true, env = "SKILLVID_CONFIG")]
    config: Option<PathBuf>,
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory that receives every artifact.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Input CSV with header job_title,skill.
    #[arg(long, global = true)]
    pairs: Option<PathBuf>,
    /// Append-only label log (JSON lines).
    #[arg(long, global = true)]
    labels: Option<PathBuf>,
    /// Feature set: set1 (statistics) or set2 (statistics + embeddings).
    #[arg(long, global = true)]
    schema: Option<SchemaId>,
    /// Skip malformed JSON lines with a warning instead of failing.
    #[arg(long, global = true)]
    lenient: bool,
    /// Rerun stages even when their inputs are unchanged.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Fixture,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedArg {
    Hashed,
    Remote,
}

#[derive(Args)]
struct HarvestArgs {
    /// Search backend.
    #[arg(long)]
    source: Option<SourceArg>,
    /// Directory of recorded search responses for the fixture source.
    #[arg(long)]
    fixture_dir: Option<PathBuf>,
    /// Maximum candidates kept per pair.
    #[arg(long)]
    cap: Option<usize>,
    /// Pairs harvested in parallel.
    #[arg(long)]
    concurrency: Option<usize>,
}

#[derive(Args)]
struct FeaturizeArgs {
    /// Text embedding provider for set2 features.
    #[arg(long)]
    embed: Option<EmbedArg>,
}

#[derive(Args)]
struct TrainArgs {
    /// Cross-validation folds.
    #[arg(long)]
    folds: Option<usize>,
    /// Fraction of labeled rows used for training.
    #[arg(long)]
    split_ratio: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Target false-positive rate reported with the sweep.
    #[arg(long)]
    fpr_target: Option<f64>,
    /// Comma-separated, strictly increasing sweep thresholds.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
}

#[derive(Args)]
struct ThresholdArg {
    /// Probability at or above which a video is relevant.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    threshold: ThresholdArg,
    /// Model file (default: <out-dir>/model.forest).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Feature rows to classify (default: <out-dir>/features.jsonl).
    #[arg(long)]
    features: Option<PathBuf>,
    /// Decisions output (default: <out-dir>/decisions.jsonl).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    host: Option<IpAddr>,
    #[arg(long)]
    port: Option<u16>,
    /// Built labeling UI to serve at /.
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    /// Output file (default: <out-dir>/training.jsonl).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Search for candidate videos for every pair.
    Harvest(HarvestArgs),
    /// Compute feature rows for every candidate.
    Featurize(FeaturizeArgs),
    /// Join labels, cross-validate the grid and train the final forest.
    Train(TrainArgs),
    /// Score the held-out split and write metrics and the threshold sweep.
    Eval(EvalArgs),
    /// Same as eval, also printing the sweep table.
    Sweep(EvalArgs),
    /// Label every candidate relevant or irrelevant.
    Classify(ClassifyArgs),
    /// Write the labeled training rows.
    Export(ExportArgs),
    /// Run the labeling HTTP service over the harvested data.
    Serve(ServeArgs),
    /// Run harvest, featurize, train, eval and classify in order.
    Run {
        #[command(flatten)]
        harvest: HarvestArgs,
        #[command(flatten)]
        featurize: FeaturizeArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        eval: EvalArgs,
        #[command(flatten)]
        threshold: ThresholdArg,
    },
}

impl CommonArgs {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = &self.out_dir {
            c.out_dir = v.clone();
        }
        if let Some(v) = &self.pairs {
            c.pairs = v.clone();
        }
        if let Some(v) = &self.labels {
            c.labels = v.clone();
        }
        if let Some(v) = self.schema {
            c.schema = v;
        }
        c.lenient |= self.lenient;
    }
}

impl HarvestArgs {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = self.source {
            c.source.config.kind = match v {
                SourceArg::Fixture => SourceKind::Fixture,
                SourceArg::Remote => SourceKind::Remote,
            };
        }
        if let Some(v) = &self.fixture_dir {
            c.source.fixture_dir = v.clone();
        }
        if let Some(v) = self.cap {
            c.harvest.cap = v;
        }
        if let Some(v) = self.concurrency {
            c.harvest.concurrency = v;
        }
    }
}

impl FeaturizeArgs {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = self.embed {
            c.embed.provider = match v {
                EmbedArg::Hashed => EmbedProvider::Hashed,
                EmbedArg::Remote => EmbedProvider::Remote,
            };
        }
    }
}

impl TrainArgs {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = self.folds {
            c.train.folds = v;
        }
        if let Some(v) = self.split_ratio {
            c.train.split_ratio = v;
        }
    }
}

impl EvalArgs {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = self.fpr_target {
            c.eval.fpr_target = v;
        }
        if let Some(v) = &self.thresholds {
            c.eval.thresholds = v.clone();
        }
    }
}

impl ThresholdArg {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = self.threshold {
            c.classify.threshold = v;
        }
    }
}

impl ServeArgs {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = self.host {
            c.serve.host = v.to_string();
        }
        if let Some(v) = self.port {
            c.serve.port = v;
        }
        if let Some(v) = &self.static_dir {
            c.serve.static_dir = Some(v.clone());
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let mut config = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cli.common.apply(&mut config);
    match &cli.command {
        Command::Harvest(a) => a.apply(&mut config),
        Command::Featurize(a) => a.apply(&mut config),
        Command::Train(a) => a.apply(&mut config),
        Command::Eval(a) | Command::Sweep(a) => a.apply(&mut config),
        Command::Classify(a) => a.threshold.apply(&mut config),
        Command::Serve(a) => a.apply(&mut config),
        Command::Export(_) => {}
        Command::Run {
            harvest,
            featurize,
            train,
            eval,
            threshold,
        } => {
            harvest.apply(&mut config);
            featurize.apply(&mut config);
            train.apply(&mut config);
            eval.apply(&mut config);
            threshold.apply(&mut config);
        }
    }
    Ok(config)
}

fn print_stage(stage: Stage, outcome: &skillvid_cli::StageOutcome) {
    println!("{stage}: {outcome}");
}

fn read_report(pipeline: &Pipeline) -> Result<EvalReport> {
    let path = pipeline.path(METRICS_FILE);
    let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn execute(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    let pipeline = Pipeline::new(config)?.force(cli.common.force);
    let stage = |s: Stage| -> Result<()> {
        let outcome = pipeline.run_stage(s)?;
        print_stage(s, &outcome);
        Ok(())
    };
    match &cli.command {
        Command::Harvest(_) => stage(Stage::Harvest)?,
        Command::Featurize(_) => stage(Stage::Featurize)?,
        Command::Train(_) => stage(Stage::Train)?,
        Command::Eval(_) => {
            stage(Stage::Eval)?;
            println!("{}", summarize(&read_report(&pipeline)?));
        }
        Command::Sweep(_) => {
            stage(Stage::Eval)?;
            print!("{}", sweep_csv(&read_report(&pipeline)?));
        }
        Command::Classify(a) => {
            let model = a.model.clone().unwrap_or_else(|| pipeline.path(MODEL_FILE));
            let features = a.features.clone().unwrap_or_else(|| pipeline.path(FEATURES_FILE));
            let output = a.output.clone().unwrap_or_else(|| pipeline.path(DECISIONS_FILE));
            let outcome = pipeline.classify_files(&model, &features, &output)?;
            print_stage(Stage::Classify, &outcome);
        }
        Command::Export(a) => {
            let output = a.output.clone().unwrap_or_else(|| pipeline.path("training.jsonl"));
            let r = pipeline.export(&output)?;
            println!(
                "export: wrote {}; {} unlabeled feature rows, {} labels without features",
                output.display(),
                r.unlabeled,
                r.orphan_labels
            );
        }
        Command::Serve(_) => {
            let c = &pipeline.config;
            let host: IpAddr = c
                .serve
                .host
                .parse()
                .map_err(|e| PipelineError::Config(format!("serve.host {:?}: {e}", c.serve.host)))?;
            let server = skillvid_label_api::ServerConfig {
                data_dir: c.out_dir.clone(),
                labels_path: c.labels.clone(),
                static_dir: c.serve.static_dir.clone(),
                addr: SocketAddr::new(host, c.serve.port),
            };
            let runtime = tokio::runtime::Runtime::new().context("starting async runtime")?;
            runtime
                .block_on(skillvid_label_api::serve(server))
                .map_err(|e| PipelineError::stage(Stage::Serve, e))?;
        }
        Command::Run { .. } => {
            let (report, result) = pipeline.run_all(|r| {
                let detail = r.detail.as_deref().unwrap_or("");
                match r.status {
                    StageStatus::UpToDate => println!("{}: up-to-date", r.stage),
                    StageStatus::Failed => eprintln!("{}: failed ({:.1}s)", r.stage, r.seconds),
                    _ => println!("{}: {detail} ({:.1}s)", r.stage, r.seconds),
                }
            });
            result?;
            log::info!("run complete, config {}", &report.config_hash[..12]);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = err.downcast_ref::<PipelineError>().map_or(1, PipelineError::exit_code);
            let msg = match err.downcast_ref::<PipelineError>() {
                Some(p) => error_chain(p),
                None => format!("{err:#}"),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code as u8)
        }
    }
}
