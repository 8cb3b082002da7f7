//! Command-line interface to the ranking pipeline.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gifrank::corpus::save_samples;
use gifrank::encoder::TrainMode;
use gifrank::error::Error;
use gifrank::pipeline::{
    generate_synthetic, load_config, stage_build_features, stage_evaluate, stage_hpo,
    stage_predict, stage_preprocess, stage_train_encoder, stage_train_reranker, Backend,
    PipelineConfig, SyntheticSpec,
};
use gifrank::Result;

#[derive(Parser)]
#[command(
    name = "gifrank",
    version,
    about = "Recommend reply GIF categories for tweets: train the ranking cascade, \
             predict top-6 categories, evaluate with MAP@6"
)]
struct Cli {
    /// Pipeline configuration file (JSON); defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the global random seed.
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
    /// Override the artifact directory.
    #[arg(long, global = true, value_name = "DIR")]
    artifacts: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Pointwise,
    Pairwise,
}

impl From<ModeArg> for TrainMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Pointwise => TrainMode::Pointwise,
            ModeArg::Pairwise => TrainMode::Pairwise,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Reranker,
    Pairwise,
}

impl From<BackendArg> for Backend {
    fn from(backend: BackendArg) -> Self {
        match backend {
            BackendArg::Reranker => Backend::Reranker,
            BackendArg::Pairwise => Backend::Pairwise,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate the training data, build the category vocabulary, and
    /// write the seeded train/validation split.
    Preprocess {
        /// Override the labeled training data path.
        #[arg(long, value_name = "PATH")]
        train: Option<PathBuf>,
        /// Override the fraction of samples kept for training.
        #[arg(long, value_name = "REAL")]
        train_fraction: Option<f64>,
    },
    /// Train a pair-scoring encoder on the stored split.
    TrainEncoder {
        /// Training objective.
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Override the number of training epochs for this mode.
        #[arg(long, value_name = "INT")]
        epochs: Option<usize>,
    },
    /// Fit the similarity feature bank and assemble the train and
    /// validation feature matrices.
    BuildFeatures {
        /// Override the sampled negatives per gold label.
        #[arg(long, value_name = "INT")]
        negatives: Option<usize>,
    },
    /// Train the gradient-boosted reranker on the stored matrices.
    TrainReranker {
        /// Override the maximum number of boosting rounds.
        #[arg(long, value_name = "INT")]
        num_trees: Option<usize>,
        /// Override the shrinkage (learning rate).
        #[arg(long, value_name = "REAL")]
        shrinkage: Option<f64>,
        /// Override the maximum tree depth.
        #[arg(long, value_name = "INT")]
        max_depth: Option<usize>,
    },
    /// Rank categories for a dataset and write one top-6 prediction per
    /// sample.
    Predict {
        /// Override the input data path.
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
        /// Override the scoring backend.
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        /// Also write the predictions to this path.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Score a predictions file against gold labels (MAP@6).
    Evaluate {
        /// Predictions, one JSON object per line.
        #[arg(long, value_name = "PATH")]
        pred: PathBuf,
        /// Labeled dataset to score against.
        #[arg(long, value_name = "PATH")]
        gold: PathBuf,
        /// Write the full per-sample report as JSON to this path.
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
    /// Random-search the reranker hyperparameters on the stored
    /// matrices.
    Hpo {
        /// Override the number of trials.
        #[arg(long, value_name = "INT")]
        budget: Option<usize>,
    },
    /// Generate a synthetic labeled dataset with a tunable
    /// text-to-category signal.
    Synth {
        /// Output path for the generated samples.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Number of samples.
        #[arg(long, value_name = "INT")]
        samples: Option<usize>,
        /// Number of categories (at least 7).
        #[arg(long, value_name = "INT")]
        labels: Option<usize>,
        /// Signal strength in [0, 1].
        #[arg(long, value_name = "REAL")]
        strength: Option<f64>,
        /// Size of the noise vocabulary.
        #[arg(long, value_name = "INT")]
        vocab_size: Option<usize>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => load_config(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(artifacts) = &cli.artifacts {
        config.data.artifacts = artifacts.clone();
    }
    match cli.command {
        Command::Preprocess { train, train_fraction } => {
            if let Some(train) = train {
                config.data.train = train;
            }
            if let Some(fraction) = train_fraction {
                config.train_fraction = fraction;
            }
            println!("{}", stage_preprocess(&config)?.summary());
        }
        Command::TrainEncoder { mode, epochs } => {
            let mode = TrainMode::from(mode);
            if let Some(epochs) = epochs {
                match mode {
                    TrainMode::Pointwise => config.pointwise.epochs = epochs,
                    TrainMode::Pairwise => config.pairwise.epochs = epochs,
                }
            }
            println!("{}", stage_train_encoder(&config, mode)?.summary());
        }
        Command::BuildFeatures { negatives } => {
            if let Some(negatives) = negatives {
                config.reranker_negatives = negatives;
            }
            println!("{}", stage_build_features(&config)?.summary());
        }
        Command::TrainReranker { num_trees, shrinkage, max_depth } => {
            if let Some(num_trees) = num_trees {
                config.reranker.num_trees = num_trees;
            }
            if let Some(shrinkage) = shrinkage {
                config.reranker.shrinkage = shrinkage;
            }
            if let Some(max_depth) = max_depth {
                config.reranker.max_depth = max_depth;
            }
            println!("{}", stage_train_reranker(&config)?.summary());
        }
        Command::Predict { input, backend, out } => {
            if let Some(input) = input {
                config.data.predict = input;
            }
            if let Some(backend) = backend {
                config.backend = backend.into();
            }
            println!("{}", stage_predict(&config, out.as_deref())?.summary());
        }
        Command::Evaluate { pred, gold, report } => {
            let eval = stage_evaluate(&pred, &gold)?;
            if let Some(path) = report {
                let text = serde_json::to_string_pretty(&eval)
                    .map_err(|e| Error::invalid(format!("serializing the report: {e}")))?;
                fs::write(&path, text + "\n")?;
            }
            println!("{}", eval.summary());
        }
        Command::Hpo { budget } => {
            if let Some(budget) = budget {
                config.hpo.budget = budget;
            }
            println!("{}", stage_hpo(&config)?.summary());
        }
        Command::Synth { out, samples, labels, strength, vocab_size } => {
            let mut spec = SyntheticSpec { seed: config.seed, ..SyntheticSpec::default() };
            if let Some(samples) = samples {
                spec.samples = samples;
            }
            if let Some(labels) = labels {
                spec.labels = labels;
            }
            if let Some(strength) = strength {
                spec.strength = strength;
            }
            if let Some(vocab_size) = vocab_size {
                spec.vocab_size = vocab_size;
            }
            let dataset = generate_synthetic(&spec)?;
            save_samples(&dataset, &out)?;
            println!(
                "synth: wrote {} samples ({} categories, strength {}) to {}",
                dataset.len(),
                spec.labels,
                spec.strength,
                out.display()
            );
        }
    }
    Ok(())
}
