//! `bimodal`: stage-by-stage driver for the image-tag pipeline.
//!
//! Stages run in order (features, vocab, rbm, siamese, choose, evaluate),
//! reading and writing artifacts under the workspace directory. `synth`
//! generates a desk-scale dataset plus a matching config to run the stages
//! against.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bimodal_core::pipeline::{
    generate_synthetic, load_metrics, run_stage, PipelineConfig, Stage, Strategy, SynthParams,
    Workspace,
};
use bimodal_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "bimodal",
    about = "Bimodal image-tag representation pipeline and tag chooser",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract level-1 image features for the train and test manifests.
    Features(StageArgs),
    /// Build the tag dictionary and bag-of-words matrices.
    Vocab(StageArgs),
    /// Train the per-modality stacked RBMs and write level-2 matrices.
    Rbm(StageArgs),
    /// Train the quasi-Siamese autoencoder on the level-2 pairs.
    Siamese(StageArgs),
    /// Decide every test triple with the configured strategy.
    Choose(StageArgs),
    /// Score decisions against gold labels (accuracy, AUC).
    Evaluate(StageArgs),
    /// Generate a synthetic dataset with the link-cycle property.
    Synth(SynthArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Pipeline configuration file (TOML). Manifest paths inside it are
    /// relative to this file.
    #[arg(long)]
    config: PathBuf,
    /// Directory for stage artifacts.
    #[arg(long)]
    workspace: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's choosing strategy.
    #[arg(long, value_parser = ["general", "link"])]
    strategy: Option<String>,
    /// Overwrite existing stage artifacts.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Workspace directory; the dataset lands in its `synth/` subdirectory.
    #[arg(long)]
    workspace: PathBuf,
    /// Training pairs to generate.
    #[arg(long, default_value_t = 200)]
    pairs: usize,
    /// Gold-labeled test triples to generate.
    #[arg(long, default_value_t = 40)]
    triples: usize,
    /// Latent clusters shared by images and tags.
    #[arg(long, default_value_t = 8)]
    clusters: usize,
    /// Standard deviation of the image-vector noise.
    #[arg(long, default_value_t = 0.25)]
    noise: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Overwrite an existing synth directory.
    #[arg(long)]
    force: bool,
}

fn run_pipeline_stage(stage: Stage, args: &StageArgs) -> Result<()> {
    let mut cfg = PipelineConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(strategy) = &args.strategy {
        cfg.strategy = Strategy::parse(strategy)?;
    }
    let base = args
        .config
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    run_stage(stage, &cfg, &base, &args.workspace, args.force)?;
    println!("{} stage complete", stage.as_str());
    if stage == Stage::Evaluate {
        for (k, v) in load_metrics(&Workspace::new(&args.workspace).metrics())? {
            println!("{k}\t{v}");
        }
    }
    Ok(())
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    let out_dir = args.workspace.join("synth");
    if out_dir.exists() && !args.force {
        return Err(Error::Validation(format!(
            "{} already exists; pass --force to regenerate",
            out_dir.display()
        )));
    }
    let params = SynthParams::new(args.pairs, args.triples, args.clusters, args.noise, args.seed);
    let out = generate_synthetic(&params, &out_dir)?;
    println!("train manifest: {}", out.train_manifest.display());
    println!("test manifest:  {}", out.test_manifest.display());
    println!("config:         {}", out.config.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Features(a) => run_pipeline_stage(Stage::Features, a),
        Command::Vocab(a) => run_pipeline_stage(Stage::Vocab, a),
        Command::Rbm(a) => run_pipeline_stage(Stage::Rbm, a),
        Command::Siamese(a) => run_pipeline_stage(Stage::Siamese, a),
        Command::Choose(a) => run_pipeline_stage(Stage::Choose, a),
        Command::Evaluate(a) => run_pipeline_stage(Stage::Evaluate, a),
        Command::Synth(a) => run_synth(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
