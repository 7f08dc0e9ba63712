use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isomax::experiment::{self, report, ExperimentConfig};
use isomax::scores::ScoreKind;

#[derive(Parser)]
#[command(
    name = "isomax",
    version,
    about = "Train and evaluate SoftMax / IsoMax classifiers for OOD detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model; writes checkpoint, record and CSVs to output_dir/run_id.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint on the data named by a config.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_score, default_value = "entropic")]
        score: ScoreKind,
    },
    /// Train a SoftMax baseline plus one IsoMax model per entropic scale.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,3,10")]
        scales: Vec<f64>,
    },
    /// Aggregate run records under a directory into metrics.csv and curves.csv.
    Report {
        #[arg(long)]
        runs: PathBuf,
    },
}

fn parse_score(s: &str) -> Result<ScoreKind, String> {
    ScoreKind::parse(s).map_err(|e| e.to_string())
}

fn f(v: f64) -> String {
    report::fmt_sig9(v)
}

fn run(cli: Cli) -> isomax::Result<()> {
    match cli.command {
        Command::Train { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let out = experiment::train(&cfg)?;
            let r = &out.record;
            println!(
                "{}: test accuracy {:.4}, mean inference entropy {:.4}, {:.1}s",
                r.run_id,
                r.test_accuracy(),
                r.mean_entropy(),
                r.wall_seconds
            );
            for eval in &r.evaluations {
                for o in &eval.reports {
                    println!(
                        "  {:8} vs {:10} TNR@TPR95 {:.4}  AUROC {:.4}  DTACC {:.4}",
                        eval.score.name(),
                        o.out_data,
                        o.report.tnr_at_tpr95,
                        o.report.auroc,
                        o.report.dtacc
                    );
                }
            }
            println!("checkpoint: {}", out.checkpoint.display());
        }
        Command::Eval {
            checkpoint,
            config,
            score,
        } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let eval = experiment::evaluate_checkpoint(&checkpoint, &cfg, score)?;
            println!("score,out_data,test_accuracy,mean_entropy,tnr_at_tpr95,auroc,dtacc");
            for o in &eval.reports {
                println!(
                    "{},{},{},{},{},{},{}",
                    score.name(),
                    o.out_data,
                    f(eval.test_accuracy),
                    f(eval.mean_entropy),
                    f(o.report.tnr_at_tpr95),
                    f(o.report.auroc),
                    f(o.report.dtacc)
                );
            }
        }
        Command::Sweep { config, scales } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let records = experiment::sweep(&cfg, &scales)?;
            for r in &records {
                println!(
                    "{}: test accuracy {:.4}, mean inference entropy {:.4}",
                    r.run_id,
                    r.test_accuracy(),
                    r.mean_entropy()
                );
            }
            println!("wrote {}", cfg.output_dir.join("sweep.csv").display());
        }
        Command::Report { runs } => {
            let records = report::read_records(&runs)?;
            report::write_report(&records, &runs)?;
            println!(
                "{} runs -> {}, {}",
                records.len(),
                runs.join("metrics.csv").display(),
                runs.join("curves.csv").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
