//! Argument parsing and dispatch.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use gloctm_core::model::Ablation;

use crate::commands;
use crate::config::{Overrides, RunConfig};
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "gloctm", version, about = "Cross-lingual dual-pathway neural topic model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Train this many consecutive seeds.
    #[arg(long, global = true)]
    pub seeds: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// One of full, no_kl, no_cka, sim.
    #[arg(long, global = true, value_parser = parse_ablation)]
    pub ablation: Option<Ablation>,
    #[arg(long = "topk-intra", global = true)]
    pub topk_intra: Option<usize>,
    #[arg(long = "topk-cross", global = true)]
    pub topk_cross: Option<usize>,
    /// Weight of the alignment term.
    #[arg(long, global = true)]
    pub lambda1: Option<f64>,
    /// Weight of the CKA term.
    #[arg(long, global = true)]
    pub lambda2: Option<f64>,
    /// Override any config key, e.g. `--set train.epochs=50`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic bilingual corpus with planted topics.
    Synth,
    /// Build the augmented bags of words and export them as triplets.
    Augment,
    /// Train one model per seed.
    Train {
        /// Continue from each seed's checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Score checkpoints and tabulate them by ablation.
    Eval {
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
    },
    /// Export the top words of every topic.
    Topics {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = gloctm_core::evaluation::DEFAULT_TOP_WORDS)]
        top: usize,
        /// Destination file (default `<out>/topics.tsv`).
        #[arg(long)]
        file: Option<PathBuf>,
    },
}

fn parse_ablation(s: &str) -> std::result::Result<Ablation, String> {
    Ablation::parse(s).ok_or_else(|| format!("unknown ablation {s:?}"))
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            seeds: self.seeds,
            out: self.out.clone(),
            ablation: self.ablation,
            topk_intra: self.topk_intra,
            topk_cross: self.topk_cross,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            set: self.set.clone(),
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("GLOCTM_THREADS") else { return Ok(()) };
    let n: usize = raw.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| Error::Config(format!("GLOCTM_THREADS={raw:?} is not a positive integer")))?;
    // a pool already built by an earlier call in this process is kept
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    configure_threads()?;
    let config = RunConfig::load(cli.config.as_deref(), &cli.overrides())?;
    match &cli.command {
        Command::Synth => {
            let path = commands::cmd_synth(&config)?;
            println!("{}", path.display());
        }
        Command::Augment => {
            commands::cmd_augment(&config)?;
        }
        Command::Train { resume } => {
            for o in commands::cmd_train(&config, *resume)? {
                let loss = o.report.final_loss().map_or(f64::NAN, |l| l.total);
                println!("seed {} final loss {loss:.4} -> {}", o.seed, o.run_dir.display());
            }
        }
        Command::Eval { checkpoints } => {
            commands::cmd_eval(&config, checkpoints)?;
            for line in std::fs::read_to_string(config.paths.out_dir().join("ablation.tsv")).unwrap_or_default().lines() {
                println!("{line}");
            }
        }
        Command::Topics { checkpoint, top, file } => {
            let dest = file.clone().unwrap_or_else(|| config.paths.out_dir().join("topics.tsv"));
            commands::cmd_topics(checkpoint, *top, &dest)?;
            println!("{}", dest.display());
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
