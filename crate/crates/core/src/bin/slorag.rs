use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use slorag::config::{BackendKind, RunConfig};
use slorag::control::Action;
use slorag::logstore::write_atomic;
use slorag::pipeline::{self, EvalTarget, IndexStatus, Paths};
use slorag::policy::Objective;
use slorag::synth::{self, SynthConfig};

#[derive(Parser)]
#[command(name = "slorag", version, about = "SLO-aware routing for a retrieval-augmented QA pipeline")]
struct Cli {
    /// Run config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// SQuAD 2.0 JSON file; overrides `corpus` from the config.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic corpus in SQuAD 2.0 format.
    Synth {
        /// Destination file.
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 48)]
        articles: usize,
        #[arg(long, default_value_t = 0.5)]
        unanswerable_fraction: f64,
    },
    /// Build the retriever index (skipped when the corpus hash matches).
    Index,
    /// Run every action on a seeded sample of questions and log the outcomes.
    Sweep(SweepArgs),
    /// Train a router on the train split of the sweep log.
    Train {
        /// SLO profile name.
        #[arg(long)]
        slo: String,
        /// Training objective: ce or ce-wt.
        #[arg(long, default_value = "ce")]
        objective: Objective,
    },
    /// Replay-evaluate a model or a fixed policy on the eval split.
    Eval(EvalArgs),
    /// Collate all eval outputs into tables and plot data.
    Report,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Number of questions to sample.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct EvalTargetArgs {
    /// Trained model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Constant action id (0..=4).
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=4))]
    fixed: Option<u8>,
    /// The constant action with the best average reward on the eval split.
    #[arg(long)]
    best_fixed: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    slo: String,
    #[command(flatten)]
    target: EvalTargetArgs,
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(c) = cli.corpus {
        cfg.corpus = Some(c);
    }
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    }

    match cli.command {
        Command::Synth { output, seed, articles, unanswerable_fraction } => {
            let sc = SynthConfig { seed, articles, unanswerable_fraction, ..SynthConfig::default() };
            write_atomic(&output, &synth::generate_bytes(&sc))?;
            println!("wrote {}", output.display());
        }
        Command::Index => match pipeline::command_index(&cfg)? {
            IndexStatus::Built => println!("index built: {}", Paths::new(&cfg).index().display()),
            IndexStatus::Skipped => println!("skipped (hash match): {}", Paths::new(&cfg).index().display()),
        },
        Command::Sweep(args) => {
            if let Some(b) = args.backend {
                cfg.backend.kind = b;
            }
            if let Some(n) = args.n {
                cfg.sweep.sample_size = n;
            }
            if let Some(s) = args.seed {
                cfg.sweep.seed = s;
            }
            cfg.validate()?;
            let s = pipeline::command_sweep(&cfg)?;
            println!(
                "logged {} questions ({} records, {} failed, {} tokens) to {}",
                s.logged,
                s.records,
                s.failed,
                s.total_cost_tokens,
                Paths::new(&cfg).log().display()
            );
        }
        Command::Train { slo, objective } => {
            let path = pipeline::command_train(&cfg, &slo, objective)?;
            println!("model written to {}", path.display());
        }
        Command::Eval(args) => {
            let target = match (args.target.model, args.target.fixed) {
                (Some(m), _) => EvalTarget::Model(m),
                (None, Some(a)) => EvalTarget::Fixed(Action::from_id(a).expect("range-checked by clap")),
                (None, None) => EvalTarget::BestFixed,
            };
            let (path, art) = pipeline::command_eval(&cfg, &args.slo, &target)?;
            let m = &art.row.metrics;
            println!(
                "{} / {}: acc {:.3} cost {:.1} reward {:.4} refuse {:.3} hall {:.3} hit {:.3} -> {}",
                art.row.slo,
                art.row.method,
                m.accuracy,
                m.avg_cost_tokens,
                m.avg_reward,
                m.refusal_rate,
                m.hallucination_rate,
                m.retrieval_hit_rate,
                path.display()
            );
        }
        Command::Report => {
            let (dir, rows) = pipeline::command_report(&cfg)?;
            print!("{}", std::fs::read_to_string(dir.join("metrics.txt"))?);
            println!("{} rows written to {}", rows.len(), dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
