//! Flat `key = value` experiment files.
//!
//! ```text
//! # desk run on the synthetic data
//! dataset = toy
//! transforms = R(10), T(2, 2), Sh(2), Sc(2), B(2, 0.001)
//! attacks = standard-uap, robust-uap
//! gammas = 0.5, 0.6, 0.7
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::attacks::{Algorithm, AttackConfig};
use crate::classifier::TrainConfig;
use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;
use crate::tensor::{NormOrder, NormSpec};
use crate::transforms::TransformSet;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Generated by [`super::gen_toy_dataset`].
    Toy,
    Cifar10 { train: Vec<PathBuf>, test: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Images the perturbation is computed on.
    pub train_n: usize,
    /// Held-out images the report is computed on.
    pub eval_n: usize,
    /// Loaded when the file exists, otherwise trained and written there.
    pub model_path: Option<PathBuf>,
    pub model_train_n: usize,
    pub training: TrainConfig,
    pub transforms: TransformSet,
    pub attacks: Vec<Algorithm>,
    pub attack: AttackConfig,
    pub estimator: EstimatorConfig,
    pub gammas: Vec<f64>,
    pub output_dir: PathBuf,
    pub seed: u64,
}

const KEYS: &[&str] = &[
    "dataset",
    "cifar_train",
    "cifar_test",
    "train_n",
    "eval_n",
    "model",
    "model_train_n",
    "train_epochs",
    "train_learning_rate",
    "train_momentum",
    "train_batch_size",
    "transforms",
    "attacks",
    "norm",
    "epsilon",
    "gamma",
    "zeta",
    "step_size",
    "momentum",
    "learning_rate",
    "batch_size",
    "max_inner_iters",
    "max_epochs",
    "lambda_penalty",
    "transforms_per_batch",
    "overshoot",
    "psi",
    "phi",
    "gammas",
    "output_dir",
    "seed",
];

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Parse {
                    line,
                    message: format!("expected `key = value`, got `{content}`"),
                });
            };
            let key = key.trim().to_string();
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key `{key}`"),
                });
            }
            if map.contains_key(&key) {
                return Err(Error::Parse {
                    line,
                    message: format!("duplicate key `{key}`"),
                });
            }
            map.insert(key, (line, value.trim().to_string()));
        }
        Ok(Self { map })
    }

    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => v.parse().map_err(|e: T::Err| Error::Parse {
                line,
                message: format!("{key}: {e}"),
            }),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some((line, v)) = self.raw(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|item| {
                item.trim().parse().map_err(|e: T::Err| Error::Parse {
                    line,
                    message: format!("{key}: {e}"),
                })
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn line_of(&self, key: &str) -> usize {
        self.raw(key).map_or(0, |(l, _)| l)
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    /// Parses `text`; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let e = Entries::parse(text)?;
        let dataset: String = e.get("dataset", "toy".to_string())?;
        let toy = match dataset.as_str() {
            "toy" => true,
            "cifar10" => false,
            other => {
                return Err(Error::Parse {
                    line: e.line_of("dataset"),
                    message: format!("dataset must be `toy` or `cifar10`, got `{other}`"),
                })
            }
        };
        let data = if toy {
            DataSource::Toy
        } else {
            let missing = |key: &str| Error::Parse {
                line: 0,
                message: format!("cifar10 needs `{key}`"),
            };
            let train: Vec<String> = e.list("cifar_train")?.ok_or_else(|| missing("cifar_train"))?;
            let (_, test) = e.raw("cifar_test").ok_or_else(|| missing("cifar_test"))?;
            DataSource::Cifar10 {
                train: train.iter().map(|p| resolve(base, p)).collect(),
                test: resolve(base, test),
            }
        };

        let seed: u64 = e.get("seed", 0)?;
        let order: NormOrder = e.get("norm", NormOrder::L2)?;
        let epsilon: f64 = e.get("epsilon", if toy { 1.0 } else { 10.0 })?;
        let norm = NormSpec::new(order, epsilon).map_err(|err| err.context(format!("line {}", e.line_of("epsilon"))))?;

        let defaults = TrainConfig::default();
        let training = TrainConfig {
            learning_rate: e.get("train_learning_rate", if toy { 0.05 } else { defaults.learning_rate })?,
            momentum: e.get("train_momentum", defaults.momentum)?,
            epochs: e.get("train_epochs", if toy { 20 } else { defaults.epochs })?,
            batch_size: e.get("train_batch_size", defaults.batch_size)?,
            seed,
        };

        let d = AttackConfig::new(norm);
        let gamma = e.get("gamma", d.gamma)?;
        let estimator = EstimatorConfig {
            psi: e.get("psi", 0.1)?,
            phi: e.get("phi", 0.05)?,
            gamma,
            seed,
        };
        let attack = AttackConfig {
            norm,
            gamma,
            zeta: e.get("zeta", d.zeta)?,
            step_size: e.get("step_size", d.step_size)?,
            momentum: e.get("momentum", d.momentum)?,
            learning_rate: e.get("learning_rate", d.learning_rate)?,
            batch_size: e.get("batch_size", d.batch_size)?,
            max_inner_iters: e.get("max_inner_iters", d.max_inner_iters)?,
            max_epochs: e.get("max_epochs", d.max_epochs)?,
            lambda_penalty: e.get("lambda_penalty", d.lambda_penalty)?,
            transforms_per_batch: e.get("transforms_per_batch", d.transforms_per_batch)?,
            overshoot: e.get("overshoot", d.overshoot)?,
            seed,
            estimator,
        };

        let transforms = match e.raw("transforms") {
            None => TransformSet::identity(),
            Some((line, v)) => v.parse().map_err(|err: Error| Error::Parse {
                line,
                message: format!("transforms: {err}"),
            })?,
        };

        let cfg = ExperimentConfig {
            data,
            train_n: e.get("train_n", if toy { 200 } else { 500 })?,
            eval_n: e.get("eval_n", if toy { 200 } else { 1000 })?,
            model_path: e.raw("model").map(|(_, p)| resolve(base, p)),
            model_train_n: e.get("model_train_n", if toy { 1000 } else { 5000 })?,
            training,
            transforms,
            attacks: e.list("attacks")?.unwrap_or_else(|| Algorithm::ALL.to_vec()),
            attack,
            estimator,
            gammas: e.list("gammas")?.unwrap_or_else(|| vec![0.5, 0.6, 0.7]),
            output_dir: resolve(base, &e.get("output_dir", "out".to_string())?),
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_n == 0 || self.eval_n == 0 || self.model_train_n == 0 {
            return Err(Error::invalid("subset sizes must be at least 1"));
        }
        if self.gammas.is_empty() {
            return Err(Error::invalid("gammas must not be empty"));
        }
        if let Some(g) = self.gammas.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
            return Err(Error::invalid(format!("gamma {g} outside (0, 1)")));
        }
        if self.attacks.is_empty() {
            return Err(Error::invalid("no attacks selected"));
        }
        self.transforms.validate()?;
        self.training.validate()?;
        self.attack.validate()?;
        self.estimator.validate()
    }
}
