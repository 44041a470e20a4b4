use std::{path::PathBuf, process::ExitCode};

use clap::{Parser, Subcommand, ValueEnum};
use reqrag::{
    ingest::DocKind,
    pipeline::{Overrides, Pipeline, PipelineConfig, PipelineRequest},
    Error,
};

/// Draft subcontractor requirements from a mission document and a library
/// of standards.
#[derive(Parser)]
#[command(name = "reqrag", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Workspace directory; overrides the config file.
    #[arg(long, global = true)]
    workspace: Option<PathBuf>,
    /// Lexical classification, offline embeddings and a deterministic mock
    /// chat model. Makes no network calls.
    #[arg(long, global = true)]
    offline: bool,
    /// Keep standards whose label cosine is strictly above this value.
    #[arg(long, global = true, allow_negative_numbers = true)]
    threshold: Option<f64>,
    /// Keep at most this many selected standards.
    #[arg(long, global = true)]
    top_k: Option<usize>,
    /// Mission chunks placed in the prompt.
    #[arg(long, global = true)]
    k_mission: Option<usize>,
    /// Standards chunks placed in the prompt.
    #[arg(long, global = true)]
    k_domain: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Mission,
    Domain,
}

#[derive(Subcommand)]
enum Command {
    /// Rebuild paragraphs and chunk documents into the workspace.
    Ingest {
        #[arg(long, value_enum)]
        kind: Kind,
        /// Plain-text files; the file stem becomes the document id.
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Score mission chunks against the categories and write the mission label.
    Classify,
    /// Embed standards documents and write their labels.
    LabelDomain,
    /// Keep standards whose label is similar to the mission label.
    Select,
    /// Rank mission and standards chunks for a query.
    Retrieve {
        /// The question to draft requirements for.
        #[arg(long)]
        query: String,
        /// Category name from the taxonomy, matched case-insensitively.
        #[arg(long)]
        category: String,
    },
    /// Fill the answer template with the retrieved chunks and call the chat model.
    Generate {
        /// The question to draft requirements for.
        #[arg(long)]
        query: String,
        /// Category name from the taxonomy, matched case-insensitively.
        #[arg(long)]
        category: String,
        /// Mission name written into the prompt.
        #[arg(long)]
        mission_name: String,
        /// Also write the rendered prompt as prompt.txt.
        #[arg(long)]
        dump_prompt: bool,
    },
    /// Run every stage in order.
    Pipeline {
        /// Mission document files.
        #[arg(long, required = true, num_args = 1..)]
        mission: Vec<PathBuf>,
        /// Standards document files.
        #[arg(long, required = true, num_args = 1..)]
        domain: Vec<PathBuf>,
        /// The question to draft requirements for.
        #[arg(long)]
        query: String,
        /// Category name from the taxonomy, matched case-insensitively.
        #[arg(long)]
        category: String,
        /// Mission name written into the prompt.
        #[arg(long)]
        mission_name: String,
        /// Also write the rendered prompt as prompt.txt.
        #[arg(long)]
        dump_prompt: bool,
    },
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Classify => "classify",
            Command::LabelDomain => "label-domain",
            Command::Select => "select",
            Command::Retrieve { .. } => "retrieve",
            Command::Generate { .. } => "generate",
            Command::Pipeline { .. } => "pipeline",
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    Overrides {
        workspace: cli.workspace.clone(),
        offline: cli.offline,
        threshold: cli.threshold,
        top_k: cli.top_k,
        k_mission: cli.k_mission,
        k_domain: cli.k_domain,
    }
    .apply(&mut config);
    let pipeline = Pipeline::new(config, cli.offline)?;

    let line = match cli.command {
        Command::Ingest { kind, files } => {
            let kind = match kind {
                Kind::Mission => DocKind::Mission,
                Kind::Domain => DocKind::Domain,
            };
            pipeline.ingest(&files, kind)?.to_string()
        }
        Command::Classify => pipeline.classify()?.to_string(),
        Command::LabelDomain => pipeline.label_domain()?.to_string(),
        Command::Select => pipeline.select()?.to_string(),
        Command::Retrieve { query, category } => pipeline.retrieve(&query, &category)?.to_string(),
        Command::Generate {
            query,
            category,
            mission_name,
            dump_prompt,
        } => pipeline
            .generate(&query, &category, &mission_name, dump_prompt)?
            .to_string(),
        Command::Pipeline {
            mission,
            domain,
            query,
            category,
            mission_name,
            dump_prompt,
        } => {
            let request = PipelineRequest {
                mission,
                domain,
                query,
                category,
                mission_name,
                dump_prompt,
            };
            let summary = pipeline.run(&request, |line| println!("{line}"))?;
            format!("pipeline: done -> {}", summary.record.display())
        }
    };
    println!("{line}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stage = cli.command.stage();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err @ Error::Stage { .. }) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
        Err(err) => {
            eprintln!("error: {stage}: {err}");
            ExitCode::FAILURE
        }
    }
}
