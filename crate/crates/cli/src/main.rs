//! `coevo`: train, resume, evaluate, export and ablate.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use coevo_core::eval::{evaluate_checkpoint, InstructionChoice};
use coevo_core::metrics::{export_series, metrics_files, read_metrics, SERIES};
use coevo_core::orchestrator::{ablate, write_ablation_csv, RunConfig, Trainer};
use coevo_core::proposer::ProposerKind;
use coevo_core::Error;

#[derive(Parser)]
#[command(name = "coevo", version, about = "Instruction and policy co-evolution runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a JSON config and write a checkpoint directory.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        proposer: Option<ProposerKind>,
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Continue a run from its checkpoint directory.
    Resume { dir: PathBuf },
    /// Greedy exact-match evaluation of a checkpoint.
    Evaluate {
        dir: PathBuf,
        /// Question JSONL; defaults to the checkpoint's own questions.
        #[arg(long)]
        questions: Option<PathBuf>,
        /// `best`, a candidate id, or literal instruction text.
        #[arg(long, default_value = "best")]
        instruction: String,
    },
    /// Write one CSV per metric series.
    Export {
        /// A run directory, or a directory of per-seed run directories.
        dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "mean_reward")]
        series: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run several proposer kinds over several seeds and summarise them in a CSV.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "paraphrase,history,reflection")]
        proposers: Vec<ProposerKind>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long, default_value = "runs/ablation")]
        out: PathBuf,
    },
}

/// Exit 2 for bad input, 1 for everything else.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::UnknownCandidate(_) | Error::Parse(_) => 2,
        _ => 1,
    }
}

fn report(e: &Error) {
    match e {
        Error::Config { path, message } => eprintln!("error: config: {path}: {message}"),
        Error::UnknownCandidate(id) => eprintln!("error: instruction: {id}: not in the population"),
        other => eprintln!("error: {other}"),
    }
}

macro_rules! print_json {
    ($value:expr) => {{
        println!("{}", serde_json::to_string_pretty(&$value)?);
        Ok(())
    }};
}

fn run(config: &Path, out: &Path, seed: Option<u64>, proposer: Option<ProposerKind>, steps: Option<u64>) -> Result<(), Error> {
    let mut cfg = RunConfig::load(config)?;
    cfg.apply_overrides(seed, proposer, steps);
    cfg.validate()?;
    let summary = Trainer::new(cfg)?.run(Some(out))?;
    print_json!(summary)
}

fn export(dir: &Path, series: &[String], out: &Path) -> Result<(), Error> {
    if let Some(bad) = series.iter().find(|s| !SERIES.contains(&s.as_str())) {
        return Err(Error::Config {
            path: "series".into(),
            message: format!("unknown series `{bad}`; valid names: {}", SERIES.join(", ")),
        });
    }
    let runs = metrics_files(dir)?.iter().map(|p| read_metrics(p)).collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(out)?;
    for name in series {
        let path = out.join(format!("{name}.csv"));
        let rows = export_series(&runs, name, BufWriter::new(File::create(&path)?))?;
        log::info!("wrote {rows} rows to {}", path.display());
    }
    Ok(())
}

fn ablate_command(config: Option<&Path>, kinds: &[ProposerKind], seeds: &[u64], out: &Path) -> Result<(), Error> {
    let base = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let rows = ablate(&base, kinds, seeds, Some(out))?;
    let path = out.join("ablation.csv");
    write_ablation_csv(&rows, BufWriter::new(File::create(&path)?))?;
    println!("{}", path.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, out, seed, proposer, steps } => run(&config, &out, seed, proposer, steps),
        Command::Resume { dir } => print_json!(Trainer::resume(&dir)?.run(Some(&dir))?),
        Command::Evaluate { dir, questions, instruction } => {
            let choice = InstructionChoice::parse(&instruction);
            print_json!(evaluate_checkpoint(&dir, questions.as_deref(), &choice)?)
        }
        Command::Export { dir, series, out } => export(&dir, &series, &out),
        Command::Ablate { config, proposers, seeds, out } => ablate_command(config.as_deref(), &proposers, &seeds, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(exit_code(&e))
        }
    }
}
