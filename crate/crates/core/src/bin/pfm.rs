//! `pfm`: staged pipeline from slides to evaluation reports.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pfm_core::orchestrator::{read_manifest, Command, OrchestratorError, Pipeline, ProviderSpec, RunConfig, Stage, EXIT_FAILURE};
use pfm_core::synth::{generate_cohort, CohortSpec};

#[derive(Parser)]
#[command(name = "pfm", version, about = "Slide embedding pipeline: tiling, embedding, zero-shot, clustering, MIL and evaluation")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Slide manifest CSV.
    #[arg(long)]
    manifest: PathBuf,
    /// Run configuration JSON; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads; overrides the config value.
    #[arg(long, env = "PFM_WORKERS")]
    workers: Option<usize>,
    /// `synthetic:SEED` or `external:CMD`; defaults to synthetic with the
    /// config seed.
    #[arg(long)]
    provider: Option<ProviderSpec>,
    /// Output root; overrides the config value.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    stage: Option<Stage>,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory receiving the slides and `manifest.csv`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 60)]
    slides: usize,
    #[arg(long, default_value_t = 50)]
    patients: usize,
    #[arg(long, default_value_t = 30)]
    positive: usize,
    /// Cells per side; each cell is one patch.
    #[arg(long, default_value_t = 16)]
    grid: u32,
    #[arg(long, default_value_t = 64)]
    patch_size: u32,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Patch grids and tissue masks.
    Preprocess(Common),
    /// Patch embeddings from the provider.
    Embed(Common),
    /// Zero-shot slide scores from aligned embeddings.
    Zeroshot(Common),
    /// Fold plans and k-means cluster histograms.
    Cluster(Common),
    /// Logistic regression and ABMIL per fold.
    Train(Common),
    /// AUROC, DeLong intervals and operating points.
    Evaluate(Common),
    /// Learning curves over training fractions.
    Curve(Common),
    /// Thumbnails, heatmaps and cluster figures.
    Render(Common),
    /// Several stages in order (`--stage all` runs everything but `curve`).
    Run(RunArgs),
    /// Writes a synthetic cohort with a planted signal.
    Synth(SynthArgs),
}

fn pipeline(c: Common, stage: Option<Stage>) -> Result<Pipeline> {
    let mut config = match &c.config {
        Some(path) => RunConfig::read_json(path)?,
        None => RunConfig::default(),
    };
    if let Some(w) = c.workers {
        config.workers = w;
    }
    if let Some(o) = c.output {
        config.output = o;
    }
    if let Some(s) = stage {
        config.stage = s;
    }
    let provider = c.provider.unwrap_or(ProviderSpec::Synthetic { seed: config.seed });
    let manifest = read_manifest(&c.manifest)?;
    Ok(Pipeline::new(config, manifest, provider)?)
}

fn run(cli: Cli) -> Result<()> {
    let (common, commands) = match cli.command {
        Cmd::Synth(a) => {
            let spec = CohortSpec {
                n_slides: a.slides,
                n_patients: a.patients,
                n_positive: a.positive,
                grid: a.grid,
                patch_size: a.patch_size,
                seed: a.seed,
                ..CohortSpec::default()
            };
            anyhow::ensure!(
                spec.n_patients >= 1 && spec.n_patients <= spec.n_slides && spec.n_positive <= spec.n_slides,
                OrchestratorError::Usage("need 1 <= patients <= slides and positive <= slides".into())
            );
            anyhow::ensure!(spec.grid >= 3, OrchestratorError::Usage("grid must be at least 3".into()));
            let slides = generate_cohort(&a.out, &spec).with_context(|| format!("writing cohort to {}", a.out.display()))?;
            println!("wrote {} slides and {}", slides.len(), a.out.join("manifest.csv").display());
            return Ok(());
        }
        Cmd::Run(a) => (a.common, Err(a.stage)),
        Cmd::Preprocess(c) => (c, Ok(Command::Preprocess)),
        Cmd::Embed(c) => (c, Ok(Command::Embed)),
        Cmd::Zeroshot(c) => (c, Ok(Command::Zeroshot)),
        Cmd::Cluster(c) => (c, Ok(Command::Cluster)),
        Cmd::Train(c) => (c, Ok(Command::Train)),
        Cmd::Evaluate(c) => (c, Ok(Command::Evaluate)),
        Cmd::Curve(c) => (c, Ok(Command::Curve)),
        Cmd::Render(c) => (c, Ok(Command::Render)),
    };
    let reports = match commands {
        Ok(cmd) => vec![pipeline(common, None)?.run(cmd)?],
        Err(stage) => {
            let p = pipeline(common, stage)?;
            p.run_stage(p.config.stage)?
        }
    };
    for r in reports {
        if r.failed > 0 {
            println!("{}: {} items, {} failed", r.command.as_str(), r.items, r.failed);
        } else {
            println!("{}: {} items", r.command.as_str(), r.items);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<OrchestratorError>().map_or(EXIT_FAILURE, |o| o.exit_code());
            ExitCode::from(code as u8)
        }
    }
}
