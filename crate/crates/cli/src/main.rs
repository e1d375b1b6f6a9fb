use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ravenbench_cli::commands;
use ravenbench_cli::evaluate::{evaluate, Overrides};
use ravenbench_cli::failure::CliResult;

#[derive(Parser)]
#[command(name = "ravenbench", version, about = "Matrix-reasoning benchmark for image in-painters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a battery: manifest plus image, mask and option PNGs.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        items: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline from a TOML config.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `out_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `workers` from the config.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Refit the psychometric function of a finished run.
    Psych {
        #[arg(long)]
        run: PathBuf,
    },
    /// Error grids, per-cell tests and error overlap against a cohort.
    Errors {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        cohort: PathBuf,
        /// Group whose responses define the grid orderings (default: `control`).
        #[arg(long)]
        reference: Option<String>,
        #[arg(long, value_parser = commands::parse_alpha)]
        alpha: Option<f64>,
    },
    /// Compare two runs on the same battery.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        cohort: Option<PathBuf>,
        /// Write comparison.json and comparison.svg here instead of printing JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Redraw the figures of a finished run.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate { seed, items, out } => {
            let sha = commands::generate(seed, items, &out)?;
            println!("wrote {items} items to {} (manifest sha256 {sha})", out.display());
        }
        Command::Evaluate { config, out, workers } => {
            let (dir, report) = evaluate(&config, &Overrides { out_dir: out, workers })?;
            println!("score {}", report.score_line());
            match &report.threshold {
                Some(t) => println!("threshold {:.2} [{:.2}, {:.2}]", t.point, t.lo, t.hi),
                None => println!("threshold unavailable"),
            }
            for w in &report.warnings {
                println!("warning: {w:?}");
            }
            println!("outputs in {}", dir.display());
        }
        Command::Psych { run } => {
            if let Some(s) = commands::psych(&run)? {
                match &s.threshold {
                    Some(t) => println!("threshold {:.2} [{:.2}, {:.2}]", t.point, t.lo, t.hi),
                    None => println!("threshold unattainable"),
                }
            }
        }
        Command::Errors { run, cohort, reference, alpha } => {
            let o = commands::errors(&run, &cohort, reference.as_deref(), alpha)?;
            println!(
                "reference group {}; grids for {}; {} cells rejected",
                o.reference,
                o.groups.join(", "),
                o.rejected_cells
            );
            if o.excluded_participants > 0 {
                eprintln!("excluded {} participants with incomplete responses", o.excluded_participants);
            }
        }
        Command::Compare { a, b, cohort, out } => {
            let cmp = commands::compare(&a, &b, cohort.as_deref(), out.as_deref())?;
            if out.is_none() {
                println!("{}", serde_json::to_string_pretty(&cmp).expect("comparison serializes"));
            } else {
                println!(
                    "{} {}/{} vs {} {}/{}; thresholds disjoint: {}",
                    cmp.a.label, cmp.a.score, cmp.a.n_items, cmp.b.label, cmp.b.score, cmp.b.n_items, cmp.thresholds_disjoint
                );
            }
        }
        Command::Report { run } => {
            for path in commands::report(&run)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
