use std::path::{Path, PathBuf};

use super::cifar::{load_cifar10, load_cifar10_files};
use super::config::{DataSource, ExperimentConfig};
use super::dump::save_perturbation;
use super::report::{render_markdown, result_rows, results_csv, runtime_csv, ResultRow, RuntimeRow};
use super::toy::gen_toy_dataset;
use crate::attacks::{run_attack, Algorithm, AttackTrace};
use crate::classifier::{accuracy, load_model, save_model, train_classifier, Classifier};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::estimator::{full_report, RobustnessReport};
use crate::tensor::ImageTensor;

/// Disjoint model-training, attack and evaluation subsets.
#[derive(Debug, Clone)]
pub struct Splits {
    pub model_train: LabeledDataset,
    pub attack_train: LabeledDataset,
    pub eval: LabeledDataset,
}

fn take(data: &LabeledDataset, start: usize, len: usize, what: &str) -> Result<LabeledDataset> {
    let part = data.slice(start, len);
    if part.len() < len {
        return Err(Error::invalid(format!(
            "{what}: wanted {len} images from index {start} of {} but only {} are available",
            data.name,
            part.len()
        )));
    }
    Ok(part)
}

/// The toy source generates all three subsets from one seeded pool; CIFAR-10
/// takes the model and attack subsets back to back from the training files
/// and the evaluation subset from the head of the test file.
pub fn load_splits(cfg: &ExperimentConfig) -> Result<Splits> {
    match &cfg.data {
        DataSource::Toy => {
            let total = cfg.model_train_n + cfg.train_n + cfg.eval_n;
            let pool = gen_toy_dataset(total, cfg.seed)?;
            Ok(Splits {
                model_train: take(&pool, 0, cfg.model_train_n, "model_train_n")?,
                attack_train: take(&pool, cfg.model_train_n, cfg.train_n, "train_n")?,
                eval: take(&pool, cfg.model_train_n + cfg.train_n, cfg.eval_n, "eval_n")?,
            })
        }
        DataSource::Cifar10 { train, test } => {
            let train = load_cifar10_files(train)?;
            let test = load_cifar10(test)?;
            Ok(Splits {
                model_train: take(&train, 0, cfg.model_train_n, "model_train_n")?,
                attack_train: take(&train, cfg.model_train_n, cfg.train_n, "train_n")?,
                eval: take(&test, 0, cfg.eval_n, "eval_n")?,
            })
        }
    }
}

/// Loads the checkpoint when it exists, otherwise trains one on the model
/// subset and writes it to the configured path (if any).
pub fn prepare_model(cfg: &ExperimentConfig, splits: &Splits) -> Result<Classifier> {
    if let Some(path) = cfg.model_path.as_deref().filter(|p| p.exists()) {
        return load_model(path).map_err(|e| e.context(path.display().to_string()));
    }
    let model = train_classifier(&splits.model_train, &cfg.training)?;
    if let Some(path) = &cfg.model_path {
        save_model(&model, path)?;
    }
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct AttackResult {
    pub algorithm: Algorithm,
    pub perturbation: ImageTensor,
    pub trace: AttackTrace,
    pub report: RobustnessReport,
    pub dump_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub model_accuracy: f64,
    pub results: Vec<AttackResult>,
    pub rows: Vec<ResultRow>,
    pub runtime: Vec<RuntimeRow>,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn evaluate_perturbation(
    cfg: &ExperimentConfig,
    model: &Classifier,
    eval: &LabeledDataset,
    u: &ImageTensor,
) -> Result<RobustnessReport> {
    full_report(
        model,
        &eval.images,
        &cfg.transforms,
        u,
        &cfg.gammas,
        &cfg.estimator,
        &cfg.attack.norm,
    )
}

/// Runs every selected attack on the attack subset, evaluates it on the
/// held-out subset and writes into `cfg.output_dir`:
///
/// - `results.csv`, one row per attack and threshold,
/// - `runtime.csv`, wall-clock seconds per attack,
/// - `results.md`, the same numbers as markdown tables,
/// - `<attack>.rupt` and `<attack>_trace.csv` per attack.
///
/// `results.csv` depends only on the configuration, so reruns reproduce it
/// byte for byte; timings live in the other two files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let splits = load_splits(cfg)?;
    let model = prepare_model(cfg, &splits)?;
    let model_accuracy = accuracy(&model, &splits.eval)?;
    let set_name = cfg.transforms.to_string();

    let mut results = Vec::new();
    let mut rows = Vec::new();
    let mut runtime = Vec::new();
    for &algorithm in &cfg.attacks {
        let outcome = run_attack(
            algorithm,
            &model,
            &splits.attack_train.images,
            &cfg.transforms,
            &cfg.attack,
        )
        .map_err(|e| e.context(algorithm.key()))?;
        let report = evaluate_perturbation(cfg, &model, &splits.eval, &outcome.perturbation)?;
        let dump_path = out.join(format!("{}.rupt", algorithm.key()));
        save_perturbation(&outcome.perturbation, &dump_path)?;
        write(&out.join(format!("{}_trace.csv", algorithm.key())), outcome.trace.to_csv())?;
        rows.extend(result_rows(algorithm, &set_name, &report));
        runtime.push(RuntimeRow {
            attack: algorithm,
            transform_set: set_name.clone(),
            epochs: outcome.trace.epochs.len(),
            inner_loops: outcome.trace.inner_loops.len(),
            seconds: outcome.trace.total_seconds,
        });
        results.push(AttackResult {
            algorithm,
            perturbation: outcome.perturbation,
            trace: outcome.trace,
            report,
            dump_path,
        });
    }

    write(&out.join("results.csv"), results_csv(&rows)?)?;
    write(&out.join("runtime.csv"), runtime_csv(&runtime)?)?;
    let mut md = format!(
        "# Results\n\nModel accuracy on the evaluation subset: {:.1}% ({} images)\n\n",
        100.0 * model_accuracy,
        splits.eval.len()
    );
    md.push_str(&render_markdown(&rows, &runtime));
    write(&out.join("results.md"), md)?;
    Ok(ExperimentSummary {
        model_accuracy,
        results,
        rows,
        runtime,
    })
}
