use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use idsdetect::artifact::read_required;
use idsdetect::config::PipelineConfig;
use idsdetect::pipeline::{self, ModelKind, Workspace};
use idsdetect::Error;

#[derive(Parser)]
#[command(name = "idsdetect", version, about = "Detect illegal driver substitution in taxi fleets")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file; defaults apply to keys it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides one config key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Shorthand for `--set split_seed=N`.
    #[arg(long, global = true)]
    split_seed: Option<u64>,
    /// Directory holding trace.csv, trips.csv and labels.csv.
    #[arg(long, global = true, default_value = "data")]
    data_dir: PathBuf,
    /// Directory for derived artifacts and manifests.
    #[arg(long, global = true, default_value = "work")]
    work_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic fleet into the data directory.
    Synth,
    /// Clean raw traces and trips, locate events, classify shifts.
    Ingest,
    /// Detect sleep episodes and write daily STL vectors.
    ExtractStl,
    /// Stratified train/test split of the labeled taxis.
    Split,
    /// Fit the mixture model over training STL vectors.
    FitGmm,
    /// Build the pick-up vocabulary and fit the topic model.
    FitLda,
    /// Encode daily behaviors.
    Encode,
    /// Build self-similarity bags.
    Features,
    /// Train a classifier on the training bags.
    Train {
        /// One of mcmil, mil, mil-stl, mil-pu, logistic.
        #[arg(long, default_value = "mcmil")]
        model: ModelKind,
    },
    /// Score the test taxis.
    Score {
        /// One of mcmil, mil, mil-stl, mil-pu, logistic.
        #[arg(long, default_value = "mcmil")]
        model: ModelKind,
    },
    /// AUC and AP against the labels; writes the ranked suspect list.
    Evaluate {
        /// One of mcmil, mil, mil-stl, mil-pu, logistic.
        #[arg(long, default_value = "mcmil")]
        model: ModelKind,
    },
    /// Run every stage.
    Pipeline {
        /// Models to train; repeatable. Defaults to all.
        #[arg(long)]
        model: Vec<ModelKind>,
        /// Use the fleet already in the data directory.
        #[arg(long)]
        no_synth: bool,
    },
}

fn load_config(common: &Common) -> Result<PipelineConfig, Error> {
    let mut text = match &common.config {
        Some(path) => read_required(path)?,
        None => String::new(),
    };
    for o in &common.overrides {
        if !o.contains('=') {
            return Err(Error::config(o.as_str(), "expected KEY=VALUE"));
        }
        text.push('\n');
        text.push_str(o);
    }
    if let Some(seed) = common.split_seed {
        text.push_str(&format!("\nsplit_seed = {seed}"));
    }
    PipelineConfig::parse_str(&text)
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = load_config(&cli.common)?;
    let ws = Workspace::new(cli.common.data_dir, cli.common.work_dir);
    match cli.command {
        Command::Synth => {
            let labels = pipeline::synth(&cfg, &ws)?;
            let positives = labels.iter().filter(|l| l.label == 1).count();
            println!("taxis={} positives={positives}", labels.len());
        }
        Command::Ingest => print!("{}", pipeline::ingest(&cfg, &ws)?),
        Command::ExtractStl => println!("episodes={}", pipeline::extract_stl(&cfg, &ws)?),
        Command::Split => println!("taxis={}", pipeline::split(&cfg, &ws)?.len()),
        Command::FitGmm => {
            pipeline::fit_gmm_stage(&cfg, &ws)?;
            println!("wrote {}", ws.work("gmm.model").display());
        }
        Command::FitLda => {
            let (vocab, _) = pipeline::fit_lda_stage(&cfg, &ws)?;
            println!("words={}", vocab.len());
        }
        Command::Encode => println!("taxi_days={}", pipeline::encode(&cfg, &ws)?.len()),
        Command::Features => println!("bags={}", pipeline::features(&cfg, &ws)?.bags.len()),
        Command::Train { model } => {
            pipeline::train_stage(&cfg, &ws, model)?;
            println!("wrote {}", ws.model_path(model).display());
        }
        Command::Score { model } => println!("scored={}", pipeline::score_stage(&cfg, &ws, model)?.len()),
        Command::Evaluate { model } => println!("{}", pipeline::evaluate_stage(&cfg, &ws, model)?),
        Command::Pipeline { model, no_synth } => {
            let models = if model.is_empty() { ModelKind::ALL.to_vec() } else { model };
            let summary = pipeline::run_pipeline(&cfg, &ws, !no_synth, &models)?;
            println!("bags={}", summary.bags);
            for (kind, m) in &summary.metrics {
                println!("{kind}: {m}");
            }
        }
    }
    Ok(())
}

fn exit_status(e: &Error) -> u8 {
    match e {
        Error::MissingArtifact(_) => 2,
        Error::Config { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_status(&e))
        }
    }
}
