use std::path::{Path, PathBuf};
use std::process::ExitCode;

use advtest_core::defender::DefenderKind;
use advtest_core::exec::Execution;
use advtest_core::harness::{
    ablate, ablation_table, build_defender, defender_train, eval, render_trace, replay, save_report, train, AttackerSource,
    ExperimentConfig, Trace, TrainOptions,
};
use advtest_core::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "advtest", version, about = "Train adversarial attacker vehicles against driving policies and measure attack success")]
struct Cli {
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Random,
    Npc,
}

#[derive(Subcommand)]
enum Command {
    /// Train the shared attacker policy.
    Train {
        config: PathBuf,
        /// Start over even if the run directory holds progress.
        #[arg(long)]
        fresh: bool,
        /// Load artifacts whose config hash does not match.
        #[arg(long)]
        allow_hash_mismatch: bool,
    },
    /// Measure attack success rates.
    Eval {
        config: PathBuf,
        /// Attacker checkpoint (defaults to the run's latest).
        #[arg(long, conflicts_with = "baseline")]
        attacker: Option<PathBuf>,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        /// Defender type, overriding the config.
        #[arg(long)]
        defender: Option<String>,
        #[arg(long)]
        allow_hash_mismatch: bool,
    },
    /// Train and evaluate with 1..=n attackers.
    Ablate { config: PathBuf },
    /// Re-simulate a trace and check it step by step.
    Replay {
        trace: PathBuf,
        /// Only print the summary line.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Write one SVG frame per trace step.
    Render {
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the configured learned defender.
    DefenderTrain { config: PathBuf },
}

fn run(cli: Cli) -> Result<()> {
    let execution = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match cli.command {
        Command::Train { config, fresh, allow_hash_mismatch } => {
            let cfg = ExperimentConfig::load(&config)?;
            let defender = build_defender(&cfg, allow_hash_mismatch)?;
            let opts = TrainOptions { resume: !fresh, allow_hash_mismatch, ..TrainOptions::default() };
            let s = train(&cfg, &defender, execution, &opts)?;
            if let Some(from) = s.resumed_from {
                println!("resumed at iteration {from}");
            }
            if let Some(m) = s.last {
                println!(
                    "iteration {} env steps {} success window {:.3} aggressive rate {:.4}",
                    m.iteration, m.env_steps, m.attack_success_rate_window, m.aggressive_rate
                );
            }
            println!("{} / {} iterations, run directory {}", s.iterations_done, s.total_iterations, s.run_dir.display());
        }
        Command::Eval { config, attacker, baseline, defender, allow_hash_mismatch } => {
            let cfg = ExperimentConfig::load(&config)?;
            let kind = defender.as_deref().map(DefenderKind::parse).transpose()?;
            let source = match baseline {
                Some(Baseline::Random) => AttackerSource::RandomBaseline,
                Some(Baseline::Npc) => AttackerSource::NpcBaseline,
                None => AttackerSource::Checkpoint(attacker),
            };
            let report = eval(&cfg, &source, kind, allow_hash_mismatch, execution)?;
            for s in &report.per_seed {
                println!("seed {:<6} {}/{} successes, {} off-road", s.seed, s.successes, s.episodes, s.off_road);
            }
            println!("{}: {}  off-road {:.2}%", report.label, report.formatted(), 100.0 * report.off_road_rate);
            let name = report.label.replace(' ', "_");
            let path = cfg.run_dir().join(format!("eval_{name}.json"));
            save_report(&report, &path)?;
            println!("report written to {}", path.display());
        }
        Command::Ablate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = ablate(&cfg, execution)?;
            print!("{}", ablation_table(&rows));
        }
        Command::Replay { trace, quiet } => {
            let t = Trace::load(&trace)?;
            let report = replay(&t)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            if !quiet {
                for line in &report.lines {
                    println!("{line}");
                }
            }
            println!("replayed {} steps with no divergence", report.steps);
        }
        Command::Render { trace, out } => {
            let t = Trace::load(&trace)?;
            let frames = render_trace(&t, &out)?;
            println!("wrote {} frames to {}", frames.len(), display(&out));
        }
        Command::DefenderTrain { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let s = defender_train(&cfg, execution)?;
            match s.checkpoint {
                Some(p) => println!("{} defender: {}; checkpoint {}", s.kind.name(), s.detail, p.display()),
                None => println!("{}", s.detail),
            }
        }
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code().clamp(1, 255) as u8
}
