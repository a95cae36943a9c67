//! Universal perturbation generators.
//!
//! All four algorithms maximise the same surrogate: cross-entropy of
//! `f(x + tau(u))` against the *clean prediction* `f^(x)`, which grows as the
//! perturbation pushes inputs away from their original label. Every update is
//! followed by projection onto the configured l_p ball, so returned
//! perturbations always satisfy `||u||_p <= eps`.
//!
//! Stopping follows the intended reading of the loops: an algorithm stops once
//! its success estimate reaches the target, or when the epoch / inner
//! iteration caps fire. The trace keeps both the estimate and the threshold so
//! the literal "until below threshold" reading can be reconstructed.

mod deepfool;
mod robust;
mod sgd;
mod standard;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

pub use deepfool::{minimal_perturbation, MinimalPerturbation};
pub use robust::robust_uap;
pub use sgd::sgd_uap;
pub use standard::{robust_input_perturbation, standard_uap, standard_uap_rp, RobustInputPerturbation};

use crate::classifier::Classifier;
use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;
use crate::tensor::{ImageTensor, NormOrder, NormSpec};
use crate::transforms::{apply_transform, transform_input_grad, TransformSample, TransformSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    StandardUap,
    Sgd,
    StandardUapRp,
    RobustUap,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::StandardUap,
        Algorithm::Sgd,
        Algorithm::StandardUapRp,
        Algorithm::RobustUap,
    ];

    /// Command-line spelling.
    pub fn key(&self) -> &'static str {
        match self {
            Algorithm::StandardUap => "standard-uap",
            Algorithm::Sgd => "sgd",
            Algorithm::StandardUapRp => "standard-uap-rp",
            Algorithm::RobustUap => "robust-uap",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::StandardUap => "StandardUAP",
            Algorithm::Sgd => "SGD",
            Algorithm::StandardUapRp => "StandardUAP_RP",
            Algorithm::RobustUap => "RobustUAP",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.key() == norm || a.to_string().to_ascii_lowercase().replace('_', "-") == norm)
            .ok_or_else(|| Error::invalid(format!("unknown attack `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub norm: NormSpec,
    /// Universal success threshold.
    pub gamma: f64,
    /// Robust success target.
    pub zeta: f64,
    /// Sign-step size of the PGD-style inner loops.
    pub step_size: f64,
    /// Velocity decay of the SGD baseline.
    pub momentum: f64,
    /// Learning rate of the SGD baseline.
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_inner_iters: usize,
    pub max_epochs: usize,
    /// Weight of the `-lambda * ||u||_p` term; 0 disables it.
    pub lambda_penalty: f64,
    /// Transformations sampled per SGD batch / per robust-input PGD step.
    pub transforms_per_batch: usize,
    /// DeepFool overshoot, the final step is scaled by `1 + overshoot`.
    pub overshoot: f64,
    pub seed: u64,
    pub estimator: EstimatorConfig,
}

impl AttackConfig {
    pub fn new(norm: NormSpec) -> Self {
        Self {
            norm,
            gamma: 0.6,
            zeta: 0.95,
            step_size: 0.01,
            momentum: 0.9,
            learning_rate: 1.0,
            batch_size: 32,
            max_inner_iters: 40,
            max_epochs: 5,
            lambda_penalty: 0.0,
            transforms_per_batch: 8,
            overshoot: 0.02,
            seed: 0,
            estimator: EstimatorConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        unit("gamma", self.gamma)?;
        unit("zeta", self.zeta)?;
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::invalid("step_size must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must be in [0, 1)"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid("learning_rate must be >= 0"));
        }
        if !(self.lambda_penalty.is_finite() && self.lambda_penalty >= 0.0) {
            return Err(Error::invalid("lambda_penalty must be >= 0"));
        }
        if !(self.overshoot.is_finite() && self.overshoot >= 0.0) {
            return Err(Error::invalid("overshoot must be >= 0"));
        }
        if self.batch_size == 0 || self.max_inner_iters == 0 || self.max_epochs == 0 || self.transforms_per_batch == 0 {
            return Err(Error::invalid(
                "batch_size, max_inner_iters, max_epochs and transforms_per_batch must be >= 1",
            ));
        }
        self.estimator.sample_count().map(|_| ())
    }
}

/// End-of-epoch bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batches (or, for the per-point algorithms, points) that triggered an
    /// update.
    pub batches: usize,
    /// ASR_U for StandardUAP, the robust estimate for the others.
    pub estimate: f64,
    pub threshold: f64,
    pub seconds: f64,
}

impl EpochRecord {
    /// The stopping rule actually used.
    pub fn target_reached(&self) -> bool {
        self.estimate >= self.threshold
    }

    /// The loop condition as literally printed ("until estimate < threshold").
    pub fn literal_until_met(&self) -> bool {
        self.estimate < self.threshold
    }
}

/// One RobustUAP inner PGD loop on a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerLoopRecord {
    pub epoch: usize,
    pub batch: usize,
    pub entry_estimate: f64,
    pub exit_estimate: f64,
    pub iterations: usize,
    pub cap_hit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackTrace {
    pub algorithm: Algorithm,
    pub epochs: Vec<EpochRecord>,
    pub inner_loops: Vec<InnerLoopRecord>,
    pub final_norm: f64,
    pub total_seconds: f64,
}

impl AttackTrace {
    fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            epochs: Vec::new(),
            inner_loops: Vec::new(),
            final_norm: 0.0,
            total_seconds: 0.0,
        }
    }

    pub const CSV_HEADER: &'static str = "epoch,batches,estimate,threshold,target_reached,literal_until_met,seconds";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{:.4},{:.4},{},{},{:.3}\n",
                e.epoch,
                e.batches,
                e.estimate,
                e.threshold,
                e.target_reached(),
                e.literal_until_met(),
                e.seconds
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub perturbation: ImageTensor,
    pub trace: AttackTrace,
}

pub fn run_attack(
    algorithm: Algorithm,
    model: &Classifier,
    images: &[ImageTensor],
    set: &TransformSet,
    cfg: &AttackConfig,
) -> Result<AttackOutcome> {
    match algorithm {
        Algorithm::StandardUap => standard_uap(model, images, cfg),
        Algorithm::Sgd => sgd_uap(model, images, set, cfg),
        Algorithm::StandardUapRp => standard_uap_rp(model, images, set, cfg),
        Algorithm::RobustUap => robust_uap(model, images, set, cfg),
    }
}

/// Mean adversarial loss over `images x samples` and its gradient with
/// respect to the untransformed perturbation:
///
/// `L = 1/(|B| n) sum_i sum_j CE(f(x_i + tau_j(u)), clean_i)`.
pub fn adversarial_loss_grad(
    model: &Classifier,
    images: &[ImageTensor],
    clean: &[usize],
    samples: &[TransformSample],
    perturbation: &ImageTensor,
) -> Result<(f64, ImageTensor)> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if samples.is_empty() {
        return Err(Error::invalid("at least one transformation is required"));
    }
    let shape = perturbation.shape();
    let mut loss = 0.0;
    let mut grad = ImageTensor::zeros(shape);
    for s in samples {
        let moved = apply_transform(perturbation, s)?;
        let mut upstream = ImageTensor::zeros(shape);
        for (x, &label) in images.iter().zip(clean) {
            let (l, g) = model.input_grad(&x.add(&moved)?, label)?;
            loss += l;
            upstream.add_scaled(1.0, &g)?;
        }
        grad.add_scaled(1.0, &transform_input_grad(&upstream, s)?)?;
    }
    let k = (images.len() * samples.len()) as f64;
    Ok((loss / k, grad.scaled(1.0 / k)))
}

/// Sub-gradient of `||u||_p`.
pub(crate) fn norm_grad(u: &ImageTensor, order: NormOrder) -> Result<ImageTensor> {
    match order {
        NormOrder::L2 => {
            let n = u.lp_norm(NormOrder::L2)?;
            Ok(if n > 0.0 { u.scaled(1.0 / n) } else { ImageTensor::zeros(u.shape()) })
        }
        NormOrder::LInf => {
            let mut g = ImageTensor::zeros(u.shape());
            let (idx, &v) = u
                .data()
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
                .expect("tensors are non-empty");
            if v != 0.0 {
                g.data_mut()[idx] = v.signum();
            }
            Ok(g)
        }
    }
}

/// Ascent direction of `L_adv - lambda ||u||_p`.
pub(crate) fn penalised(grad: ImageTensor, u: &ImageTensor, cfg: &AttackConfig) -> Result<ImageTensor> {
    if cfg.lambda_penalty == 0.0 {
        return Ok(grad);
    }
    let mut g = grad;
    g.add_scaled(-cfg.lambda_penalty, &norm_grad(u, cfg.norm.order())?)?;
    Ok(g)
}

pub(crate) fn check_inputs(images: &[ImageTensor], cfg: &AttackConfig) -> Result<()> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

pub(crate) struct Stopwatch(Instant);

impl Stopwatch {
    pub(crate) fn start() -> Self {
        Self(Instant::now())
    }

    pub(crate) fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names() {
        for a in Algorithm::ALL {
            assert_eq!(a.key().parse::<Algorithm>().unwrap(), a);
            assert_eq!(a.to_string().parse::<Algorithm>().unwrap(), a);
        }
        assert!("pgm".parse::<Algorithm>().is_err());
    }

    #[test]
    fn config_validation() {
        let ok = AttackConfig::new(NormSpec::l2(1.0).unwrap());
        assert!(ok.validate().is_ok());
        let bad = AttackConfig { zeta: 1.0, ..ok };
        assert!(bad.validate().is_err());
        let bad = AttackConfig { max_inner_iters: 0, ..ok };
        assert!(bad.validate().is_err());
        let zero_lr = AttackConfig { learning_rate: 0.0, ..ok };
        assert!(zero_lr.validate().is_ok());
    }

    #[test]
    fn linf_norm_grad_picks_largest_entry() {
        let u = ImageTensor::from_row(&[0.1, -0.5, 0.3]).unwrap();
        let g = norm_grad(&u, NormOrder::LInf).unwrap();
        assert_eq!(g.data(), &[0.0, -1.0, 0.0]);
        let z = ImageTensor::from_row(&[0.0, 0.0]).unwrap();
        assert_eq!(norm_grad(&z, NormOrder::L2).unwrap().data(), &[0.0, 0.0]);
    }
}
