use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use robust_uap::attacks::Algorithm;
use robust_uap::classifier::{accuracy, save_model, train_classifier};
use robust_uap::harness::{
    evaluate_perturbation, gen_toy_dataset, load_cifar10, load_perturbation, load_splits, prepare_model, report,
    result_rows, results_csv, run_experiment, ExperimentConfig,
};
use robust_uap::{gradcheck, Error, LabeledDataset, Result, TrainConfig};

#[derive(Parser)]
#[command(name = "ruap", version, about = "Robust universal adversarial perturbations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a classifier on a CIFAR-10 batch file or `toy[:N]`.
    TrainModel {
        #[arg(long)]
        data: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        learning_rate: f64,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
    },
    /// Run one attack and evaluate it; writes reports and the perturbation into --out.
    Attack {
        #[arg(long)]
        algo: Algorithm,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every attack listed in the config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved perturbation on the config's evaluation subset.
    Evaluate {
        #[arg(long)]
        perturbation: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the markdown tables for a results directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Finite-difference checks of every analytic gradient.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_training_data(spec: &str, seed: u64) -> Result<LabeledDataset> {
    match spec.strip_prefix("toy") {
        Some("") => gen_toy_dataset(1000, seed),
        Some(rest) => {
            let n = rest
                .strip_prefix(':')
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| Error::InvalidParameter(format!("bad toy spec `{spec}`, expected toy:N")))?;
            gen_toy_dataset(n, seed)
        }
        None => load_cifar10(spec),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainModel {
            data,
            out,
            epochs,
            seed,
            learning_rate,
            batch_size,
        } => {
            let data = load_training_data(&data, seed)?;
            let cfg = TrainConfig {
                learning_rate,
                epochs,
                batch_size,
                seed,
                ..TrainConfig::default()
            };
            let model = train_classifier(&data, &cfg)?;
            save_model(&model, &out)?;
            println!(
                "trained on {} images of {}, training accuracy {:.4}, saved to {}",
                data.len(),
                data.name,
                accuracy(&model, &data)?,
                out.display()
            );
        }
        Command::Attack { algo, config, out } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            cfg.attacks = vec![algo];
            cfg.output_dir = out;
            let summary = run_experiment(&cfg)?;
            for r in &summary.results {
                print!("{}\n{}", r.algorithm, r.report);
                println!("perturbation  {}", r.dump_path.display());
            }
        }
        Command::Experiment { config, out } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            run_experiment(&cfg)?;
            print!("{}", report(&cfg.output_dir)?);
        }
        Command::Evaluate { perturbation, config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let u = load_perturbation(&perturbation)?;
            let splits = load_splits(&cfg)?;
            let model = prepare_model(&cfg, &splits)?;
            let rep = evaluate_perturbation(&cfg, &model, &splits.eval, &u)?;
            print!("{rep}");
            let name = perturbation
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.parse::<Algorithm>().ok());
            if let Some(algo) = name {
                print!("{}", results_csv(&result_rows(algo, &cfg.transforms.to_string(), &rep))?);
            }
        }
        Command::Report { dir } => print!("{}", report(&dir)?),
        Command::Gradcheck { seed } => {
            let checks = gradcheck::run_all(seed)?;
            let mut failed = 0;
            for c in &checks {
                println!(
                    "{:<4} {:<32} coords={:<4} max_rel_err={:.3e} tol={:.0e}",
                    if c.passed() { "ok" } else { "FAIL" },
                    c.name,
                    c.coordinates,
                    c.max_rel_error,
                    c.tolerance
                );
                failed += usize::from(!c.passed());
            }
            if failed > 0 {
                return Err(Error::InvalidParameter(format!("{failed} gradient check(s) exceeded tolerance")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let mut lines = text.lines();
            let head = lines.next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("error: usage: {head}");
            for l in lines {
                eprintln!("{l}");
            }
            return ExitCode::FAILURE;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}
