//! `radrobust`: runs the segmentation-robust radiomics pipeline stage by
//! stage or end to end.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use radrobust::featsel::{Algorithm, Regime};
use radrobust::model::{ModelKind, ResponseMetric};
use radrobust::pipeline::{Pipeline, PipelineError, RunConfig, Stage, StageOutcome};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;

#[derive(Parser)]
#[command(name = "radrobust", version, about = "Segmentation-robust radiomics feature selection and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic train and test cohorts of the synth section.
    GenSynth(Common),
    /// Extract features from original and perturbed segmentations.
    Extract(Common),
    /// Compute per-feature ICC robustness from the extraction outputs.
    Profile(Common),
    /// Run feature selection for every configuration.
    Select(Common),
    /// Train and test every configuration.
    Evaluate(Common),
    /// Merge evaluated rows into the report CSV and markdown summary.
    Report(Common),
    /// Run every stage in order, reusing cached stages.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restricts the run to these regimes.
    #[arg(long = "regime", value_parser = parse::<Regime>)]
    regimes: Vec<Regime>,
    /// Restricts the run to these selection algorithms.
    #[arg(long = "algorithm", value_parser = parse::<Algorithm>)]
    algorithms: Vec<Algorithm>,
    /// Restricts the run to these response metrics.
    #[arg(long = "metric", value_parser = parse::<ResponseMetric>)]
    metrics: Vec<ResponseMetric>,
    /// Restricts the run to these model kinds.
    #[arg(long = "model", value_parser = parse::<ModelKind>)]
    models: Vec<ModelKind>,
    /// Log progress to stderr.
    #[arg(short, long)]
    verbose: bool,
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

impl Common {
    fn config(&self) -> Result<RunConfig, PipelineError> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if !self.regimes.is_empty() {
            cfg.regimes = self.regimes.clone();
        }
        if !self.algorithms.is_empty() {
            cfg.algorithms = self.algorithms.clone();
        }
        if !self.metrics.is_empty() {
            cfg.metrics = self.metrics.clone();
        }
        if !self.models.is_empty() {
            cfg.models = self.models.clone();
        }
        Ok(cfg)
    }
}

fn report(p: &Pipeline, o: &StageOutcome) {
    let state = if o.cached { "up to date" } else { "done" };
    println!("{}: {state} ({})", o.stage, p.dir(o.stage).display());
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (stage, common) = match &cli.command {
        Command::GenSynth(c) => (Some(Stage::GenSynth), c),
        Command::Extract(c) => (Some(Stage::Extract), c),
        Command::Profile(c) => (Some(Stage::Profile), c),
        Command::Select(c) => (Some(Stage::Select), c),
        Command::Evaluate(c) => (Some(Stage::Evaluate), c),
        Command::Report(c) => (Some(Stage::Report), c),
        Command::Run(c) => (None, c),
    };
    let level = if common.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let cfg = common.config().with_context(|| format!("loading {}", common.config.display()))?;
    let p = Pipeline::new(cfg, common.jobs)?;
    let outcomes = match stage {
        Some(s) => vec![p.run_stage(s)?],
        None => p.run()?,
    };
    for o in &outcomes {
        report(&p, o);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.downcast_ref::<PipelineError>().is_some_and(PipelineError::is_config);
            ExitCode::from(if config { EXIT_CONFIG } else { EXIT_DATA })
        }
    }
}
