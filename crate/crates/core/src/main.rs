use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;
use workflow_miner::config::PipelineConfig;
use workflow_miner::pipeline::{evaluate_pairs, Pipeline, PipelineStage};
use workflow_miner::{Error, Result};

/// Mine research workflows from a corpus of full-text papers.
#[derive(Debug, Parser)]
#[command(name = "workflow-miner", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML or JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for all stage artifacts.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Skip stages whose checkpoint still matches.
    #[arg(long, global = true)]
    resume: bool,
    /// Seed for sampling, initialization and splits.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use deterministic local backends only.
    #[arg(long, global = true)]
    offline: bool,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every stage in order.
    Run {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Stop after this stage.
        #[arg(long)]
        until: Option<PipelineStage>,
    },
    /// Load and normalize the corpus.
    Ingest {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Write titled paragraphs from ingested papers.
    Extract,
    /// Select reliable negatives with the spy technique.
    PuSelect,
    /// Train the paragraph classifier head.
    Train,
    /// Label every paragraph as workflow or not.
    Classify,
    /// Generate one workflow phrase per workflow paragraph.
    Generate,
    /// Lemmatize and cluster phrases.
    Normalize,
    /// Assign phrases to research stages.
    StageClassify,
    /// Build per-paper workflows, flowcharts and the table.
    Assemble,
    /// Write yearly statistics.
    Analytics,
    /// Score stored (generated, reference) pairs with ROUGE.
    Evaluate {
        /// JSONL with `generated` and `reference` fields.
        #[arg(long)]
        pairs: PathBuf,
        /// Report path; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Average per pair instead of pooling counts.
        #[arg(long = "macro")]
        macro_average: bool,
    },
}

fn load_config(global: &GlobalArgs, corpus: Option<PathBuf>) -> Result<PipelineConfig> {
    let mut config = match &global.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    config.apply_env();
    if let Some(w) = &global.workdir {
        config.workdir = w.clone();
    }
    if let Some(s) = global.seed {
        config.apply_seed(s);
    }
    if global.offline {
        config.offline = true;
    }
    if corpus.is_some() {
        config.corpus_path = corpus;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Command::Evaluate {
        pairs,
        output,
        macro_average,
    } = &cli.command
    {
        let report = evaluate_pairs(pairs, *macro_average)?;
        let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Data(e.to_string()))? + "\n";
        return match output {
            Some(p) => std::fs::write(p, json).map_err(|e| Error::io(p, e)),
            None => {
                print!("{json}");
                Ok(())
            }
        };
    }
    let corpus = match &cli.command {
        Command::Run { corpus, .. } | Command::Ingest { corpus } => corpus.clone(),
        _ => None,
    };
    let pipeline = Pipeline::new(load_config(g, corpus)?)?;
    let stage = match cli.command {
        Command::Run { until, .. } => {
            let summary = pipeline.run(g.resume, until)?;
            for s in &summary.stages {
                println!("{}\t{}", s.stage, if s.skipped { "skipped" } else { "done" });
            }
            return Ok(());
        }
        Command::Extract => {
            let path = pipeline.extract()?;
            println!("{}", path.display());
            return Ok(());
        }
        Command::Ingest { .. } => PipelineStage::Ingest,
        Command::PuSelect => PipelineStage::Pu,
        Command::Train => PipelineStage::Train,
        Command::Classify => PipelineStage::Classify,
        Command::Generate => PipelineStage::Generate,
        Command::Normalize => PipelineStage::Normalize,
        Command::StageClassify => PipelineStage::StageClassify,
        Command::Assemble => PipelineStage::Assemble,
        Command::Analytics => PipelineStage::Analytics,
        Command::Evaluate { .. } => unreachable!("handled above"),
    };
    let outcome = pipeline.run_stage(stage, g.resume)?;
    println!("{}\t{}", outcome.stage, if outcome.skipped { "skipped" } else { "done" });
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.global.log_level)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
