use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use denspu::config::{PipelineConfig, Profile};
use denspu::pipeline::{self, Stage, Sweep};

#[derive(Parser)]
#[command(name = "denspu", version, about = "Positive-unlabeled learning with latent densification and isolation-forest negative mining")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Flat `section.key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `run.out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = ProfileArg::Desk)]
    profile: ProfileArg,
    /// Extra `key=value` settings applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Variant,
    Population,
    LabeledFraction,
}

#[derive(Subcommand)]
enum Command {
    /// Load or generate the data and write the PU split.
    PrepareData,
    /// Train the autoencoder on the labeled positives.
    TrainCae,
    /// Encode the labeled positives and the unlabeled pool.
    Encode,
    /// Generate the synthetic embeddings.
    Densify,
    /// Fit the isolation forest and score the unlabeled pool.
    Detect,
    /// Rank the leftovers and pick the negative set.
    SelectNegatives,
    /// Train the binary classifier.
    TrainClassifier,
    /// Evaluate on the test set and write the report.
    Evaluate,
    /// Run every stage in order.
    Pipeline,
    /// Run an ablation sweep over `run.seeds`.
    Ablation {
        #[arg(long, value_enum)]
        sweep: SweepArg,
        /// Labeled fractions for the labeled-fraction sweep.
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
    },
    /// Compare reconstruction PSNR of positives and negatives in U.
    PsnrExperiment,
}

fn load_config(g: &Global) -> Result<PipelineConfig> {
    let profile = match g.profile {
        ProfileArg::Desk => Profile::Desk,
        ProfileArg::Paper => Profile::Paper,
    };
    let mut text = match &g.config {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    for s in &g.sets {
        let (k, v) = s
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got `{s}`"))?;
        text.push_str(&format!("\n{} = {}", k.trim(), v.trim()));
    }
    let mut cfg = PipelineConfig::from_flat(&text, profile)?;
    if let Some(seed) = g.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &g.out {
        cfg.run.out = out.clone();
    }
    Ok(cfg)
}

fn stage_of(c: &Command) -> Option<Stage> {
    Some(match c {
        Command::PrepareData => Stage::PrepareData,
        Command::TrainCae => Stage::TrainCae,
        Command::Encode => Stage::Encode,
        Command::Densify => Stage::Densify,
        Command::Detect => Stage::Detect,
        Command::SelectNegatives => Stage::SelectNegatives,
        Command::TrainClassifier => Stage::TrainClassifier,
        Command::Evaluate => Stage::Evaluate,
        _ => return None,
    })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let cfg = load_config(&cli.global)?;

    if let Some(stage) = stage_of(&cli.command) {
        if let Some(report) = pipeline::run_stage(&cfg, stage)? {
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        return Ok(());
    }
    match cli.command {
        Command::Pipeline => {
            let report = pipeline::run_pipeline(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            for (stage, secs) in &report.durations {
                eprintln!("{stage:>17}: {secs:.2}s");
            }
        }
        Command::Ablation { sweep, fractions } => {
            let sweep = match sweep {
                SweepArg::Variant => Sweep::Variant,
                SweepArg::Population => Sweep::Population,
                SweepArg::LabeledFraction => match fractions {
                    Some(f) => Sweep::LabeledFraction(f),
                    None => "labeled_fraction".parse()?,
                },
            };
            let report = pipeline::run_ablation(&cfg, &sweep)?;
            println!("variant,seeds,f1_mean,f1_std,auc_mean");
            for s in &report.summary {
                let auc = s.auc.map_or_else(String::new, |a| format!("{:.4}", a.mean));
                println!("{},{},{:.4},{:.4},{auc}", s.variant, s.seeds.len(), s.f1.mean, s.f1.std);
            }
        }
        Command::PsnrExperiment => {
            let report = pipeline::run_psnr_experiment(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        _ => unreachable!("stage commands are handled above"),
    }
    Ok(())
}
