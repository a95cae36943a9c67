//! Data ingestion, experiment configuration and report files.

mod cifar;
mod config;
mod dump;
mod experiment;
mod report;
mod toy;

use std::path::Path;

pub use cifar::{load_cifar10, load_cifar10_files, parse_cifar10, to_cifar10_bytes, CIFAR_CLASSES, CIFAR_RECORD};
pub use config::{DataSource, ExperimentConfig};
pub use dump::{decode_perturbation, encode_perturbation, load_perturbation, save_perturbation, DUMP_MAGIC, DUMP_VERSION};
pub use experiment::{
    evaluate_perturbation, load_splits, prepare_model, run_experiment, AttackResult, ExperimentSummary, Splits,
};
pub use report::{
    parse_results_csv, parse_runtime_csv, render_markdown, result_rows, results_csv, runtime_csv, ResultRow,
    RuntimeRow, RESULTS_HEADER, RUNTIME_HEADER,
};
pub use toy::{gen_toy_dataset, toy_margin, toy_shape, TOY_MARGIN};

use crate::error::{Error, Result};

/// Markdown summary of the `results.csv` (and `runtime.csv`, when present)
/// in `dir`.
pub fn report(dir: impl AsRef<Path>) -> Result<String> {
    let dir = dir.as_ref();
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
    };
    let rows = parse_results_csv(&read("results.csv")?).map_err(|e| e.context("results.csv"))?;
    let runtime = if dir.join("runtime.csv").exists() {
        parse_runtime_csv(&read("runtime.csv")?).map_err(|e| e.context("runtime.csv"))?
    } else {
        Vec::new()
    };
    Ok(render_markdown(&rows, &runtime))
}
