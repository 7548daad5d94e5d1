mod commands;
mod config;
mod corpus;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use config::RunConfig;
use exit::Usage;

#[derive(Parser, Debug)]
#[command(name = "singstyle", about = "Singing style conversion by mel infilling")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override any configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for extraction, conversion and evaluation.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[arg(short, long, global = true)]
    verbose: bool,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a parallel synthetic corpus (every song in every style).
    SynthCorpus {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        songs: Option<usize>,
        #[arg(long)]
        notes: Option<usize>,
    },
    /// Cache per-clip features of a corpus.
    Extract {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Train the infilling model.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Output checkpoint.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        /// Continue from the existing checkpoint at --ckpt.
        #[arg(long)]
        resume: bool,
    },
    /// Convert every corpus clip into another style for cyclic training.
    CycleGen {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune on natural and cyclic items mixed 1:1.
    Finetune {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Directory written by cycle-gen.
        #[arg(long)]
        cyclic: PathBuf,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Sing the source in the style of the reference.
    Convert {
        #[arg(long)]
        src: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        postprocess: bool,
        #[arg(long)]
        euler_steps: Option<usize>,
        /// Also write the generated log-mel as SRNF.
        #[arg(long)]
        mel_out: Option<PathBuf>,
    },
    /// Replace the pitch of a converted file with the shifted source pitch.
    Postprocess {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        converted: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert every test clip into every other style and score it.
    Evaluate {
        /// Parallel test corpus.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Corpus supplying one fixed reference per style (default: the test corpus).
        #[arg(long)]
        refs: Option<PathBuf>,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// TSV report path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write converted audio here for external embedding models.
        #[arg(long)]
        export: Option<PathBuf>,
        /// Directory of `<id>.srnf` embeddings; adds a Frechet distance.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        postprocess: bool,
    },
    /// Pitch-shift a recording by whole semitones.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        semitones: i32,
        #[arg(long)]
        out: PathBuf,
    },
}

fn version() -> String {
    use singstyle_core::{flow::SRNC_VERSION, formats::SRNF_VERSION, world::SRNW_VERSION};
    format!("{} (SRNF {SRNF_VERSION}, SRNW {SRNW_VERSION}, SRNC {SRNC_VERSION})", env!("CARGO_PKG_VERSION"))
}

fn set_opt<T: ToString>(cfg: &mut RunConfig, key: &str, v: &Option<T>) -> Result<()> {
    match v {
        Some(v) => cfg.set(key, &v.to_string()),
        None => Ok(()),
    }
}

fn set_path(cfg: &mut RunConfig, key: &str, v: &Option<PathBuf>) -> Result<()> {
    match v {
        Some(p) => cfg.set(key, &p.display().to_string()),
        None => Ok(()),
    }
}

/// Defaults, then the config file, then `--set`, then dedicated flags.
fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &cli.config {
        cfg.apply_file(p)?;
    }
    for kv in &cli.set {
        cfg.apply_override(kv)?;
    }
    set_opt(&mut cfg, "seed", &cli.seed)?;
    match &cli.command {
        Command::SynthCorpus { out, songs, notes } => {
            set_path(&mut cfg, "corpus_dir", out)?;
            set_opt(&mut cfg, "n_songs", songs)?;
            set_opt(&mut cfg, "notes_per_song", notes)?;
        }
        Command::Extract { corpus, cache } => {
            set_path(&mut cfg, "corpus_dir", corpus)?;
            set_path(&mut cfg, "cache_dir", cache)?;
        }
        Command::Train { corpus, cache, ckpt, steps, .. } => {
            set_path(&mut cfg, "corpus_dir", corpus)?;
            set_path(&mut cfg, "cache_dir", cache)?;
            set_path(&mut cfg, "checkpoint", ckpt)?;
            set_opt(&mut cfg, "steps", steps)?;
        }
        Command::CycleGen { corpus, cache, ckpt, .. } => {
            set_path(&mut cfg, "corpus_dir", corpus)?;
            set_path(&mut cfg, "cache_dir", cache)?;
            set_path(&mut cfg, "checkpoint", ckpt)?;
        }
        Command::Finetune { corpus, cache, ckpt, steps, .. } => {
            set_path(&mut cfg, "corpus_dir", corpus)?;
            set_path(&mut cfg, "cache_dir", cache)?;
            set_path(&mut cfg, "checkpoint", ckpt)?;
            set_opt(&mut cfg, "finetune_steps", steps)?;
        }
        Command::Convert { ckpt, postprocess, euler_steps, .. } => {
            set_path(&mut cfg, "checkpoint", ckpt)?;
            set_opt(&mut cfg, "euler_steps", euler_steps)?;
            if *postprocess {
                cfg.postprocess = true;
            }
        }
        Command::Evaluate { test, ckpt, postprocess, .. } => {
            set_path(&mut cfg, "corpus_dir", test)?;
            set_path(&mut cfg, "checkpoint", ckpt)?;
            if *postprocess {
                cfg.postprocess = true;
            }
        }
        Command::Postprocess { .. } | Command::Augment { .. } => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = build_config(&cli)?;
    if cli.dump_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Usage("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting worker pool")?;
    }
    match &cli.command {
        Command::SynthCorpus { .. } => commands::synth_corpus(&cfg),
        Command::Extract { .. } => commands::extract(&cfg),
        Command::Train { resume, .. } => commands::train(&cfg, *resume),
        Command::CycleGen { out, .. } => commands::cycle_gen(&cfg, out),
        Command::Finetune { cyclic, out, .. } => commands::finetune(&cfg, cyclic, out),
        Command::Convert { src, reference, out, mel_out, .. } => {
            commands::convert_cmd(&cfg, src, reference, out, mel_out.as_deref())
        }
        Command::Postprocess { src, converted, reference, out } => {
            commands::postprocess(&cfg, src, converted, reference, out)
        }
        Command::Evaluate { refs, out, csv, export, embeddings, .. } => {
            let test_dir = cfg.corpus_dir.clone().ok_or_else(|| Usage("no test corpus given (--test or corpus_dir)".into()))?;
            commands::evaluate(
                &cfg,
                &commands::EvalArgs {
                    test_dir: &test_dir,
                    refs_dir: refs.as_deref(),
                    report: out,
                    csv: csv.as_deref(),
                    export: export.as_deref(),
                    embeddings: embeddings.as_deref(),
                },
            )
        }
        Command::Augment { input, semitones, out } => commands::augment(&cfg, input, *semitones, out),
    }
}

fn main() -> ExitCode {
    let matches = match Cli::command().version(version()).try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("ERR {}: {}", exit::USAGE, e.to_string().trim_end());
            return ExitCode::from(exit::USAGE as u8);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("ERR {}: {}", exit::USAGE, e.to_string().trim_end());
            return ExitCode::from(exit::USAGE as u8);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, line) = exit::report(&e);
            eprintln!("{line}");
            ExitCode::from(code as u8)
        }
    }
}
