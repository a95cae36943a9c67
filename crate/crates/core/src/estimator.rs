//! Monte-Carlo robustness estimation.
//!
//! The robust success rate of a perturbation `u_r` is the probability, over
//! transformations `tau` drawn uniformly from a [`TransformSet`], that
//! `tau(u_r)` is still a universal perturbation: its universal success rate
//! on the data exceeds `gamma` *and* it still fits the norm budget. With
//! `n = ceil(ln(2 / phi) / (2 psi^2))` samples the empirical rate is within
//! `psi` of the true one with probability at least `1 - phi` (Hoeffding).

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::classifier::Classifier;
use crate::error::{Error, Result};
use crate::tensor::{ImageTensor, NormSpec};
use crate::transforms::{apply_transform, sample_transforms, TransformSample, TransformSet};

/// Relative slack on the norm budget when deciding whether a transformed
/// perturbation still fits. Projection can only guarantee `<= eps` up to
/// rounding.
pub const NORM_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub psi: f64,
    pub phi: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            psi: 0.1,
            phi: 0.05,
            gamma: 0.6,
            seed: 0,
        }
    }
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must lie in (0, 1), got {v}")))
    }
}

impl EstimatorConfig {
    pub fn new(psi: f64, phi: f64, gamma: f64, seed: u64) -> Result<Self> {
        let cfg = Self { psi, phi, gamma, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        open_unit("psi", self.psi)?;
        open_unit("phi", self.phi)?;
        open_unit("gamma", self.gamma)
    }

    pub fn sample_count(&self) -> Result<usize> {
        chernoff_sample_count(self.psi, self.phi)
    }
}

/// `ceil(ln(2 / phi) / (2 psi^2))`.
pub fn chernoff_sample_count(psi: f64, phi: f64) -> Result<usize> {
    open_unit("psi", psi)?;
    open_unit("phi", phi)?;
    Ok(((2.0 / phi).ln() / (2.0 * psi * psi)).ceil() as usize)
}

pub fn within_budget(norm: f64, eps: &NormSpec) -> bool {
    norm <= eps.epsilon() * (1.0 + NORM_SLACK)
}

pub fn clean_predictions(model: &Classifier, images: &[ImageTensor]) -> Result<Vec<usize>> {
    images.iter().map(|x| model.predict(x)).collect()
}

/// Fraction of `images` whose prediction changes when `u` is added (raw
/// addition, no clamping to the pixel range).
pub fn asr_u(model: &Classifier, images: &[ImageTensor], u: &ImageTensor) -> Result<f64> {
    let clean = clean_predictions(model, images)?;
    asr_u_with_clean(model, images, &clean, u)
}

/// [`asr_u`] with the clean predictions already computed.
pub fn asr_u_with_clean(model: &Classifier, images: &[ImageTensor], clean: &[usize], u: &ImageTensor) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut flipped = 0usize;
    for (x, &label) in images.iter().zip(clean) {
        if model.predict(&x.add(u)?)? != label {
            flipped += 1;
        }
    }
    Ok(flipped as f64 / images.len() as f64)
}

/// Diagnostic variant of [`asr_u`] that clamps `x + u` to `[0, 1]`.
pub fn asr_u_clamped(model: &Classifier, images: &[ImageTensor], u: &ImageTensor) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut flipped = 0usize;
    for x in images {
        if model.predict(&x.add(u)?.clamped(0.0, 1.0))? != model.predict(x)? {
            flipped += 1;
        }
    }
    Ok(flipped as f64 / images.len() as f64)
}

/// What one sampled transformation does to the perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighbourOutcome {
    pub asr_u: f64,
    pub norm: f64,
    pub within_budget: bool,
}

impl NeighbourOutcome {
    pub fn succeeds(&self, gamma: f64) -> bool {
        self.asr_u > gamma && self.within_budget
    }
}

pub fn evaluate_neighbours(
    model: &Classifier,
    images: &[ImageTensor],
    clean: &[usize],
    u_r: &ImageTensor,
    samples: &[TransformSample],
    eps: &NormSpec,
) -> Result<Vec<NeighbourOutcome>> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    samples
        .iter()
        .map(|s| {
            let moved = apply_transform(u_r, s)?;
            let norm = moved.lp_norm(eps.order())?;
            Ok(NeighbourOutcome {
                asr_u: asr_u_with_clean(model, images, clean, &moved)?,
                norm,
                within_budget: within_budget(norm, eps),
            })
        })
        .collect()
}

fn success_rate(outcomes: &[NeighbourOutcome], gamma: f64) -> f64 {
    outcomes.iter().filter(|o| o.succeeds(gamma)).count() as f64 / outcomes.len() as f64
}

/// Robust success rate of `u_r` on `images`, from `n` transformations drawn
/// with a generator seeded by `seed`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_robustness_seeded(
    model: &Classifier,
    images: &[ImageTensor],
    clean: &[usize],
    set: &TransformSet,
    u_r: &ImageTensor,
    gamma: f64,
    n: usize,
    seed: u64,
    eps: &NormSpec,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    let samples = sample_transforms(set, n, &mut ChaCha8Rng::seed_from_u64(seed));
    let outcomes = evaluate_neighbours(model, images, clean, u_r, &samples, eps)?;
    Ok(success_rate(&outcomes, gamma))
}

/// The estimator as configured: `n` from `(psi, phi)`, samples seeded by
/// `cfg.seed`, threshold `cfg.gamma`.
pub fn estimate_robustness(
    model: &Classifier,
    images: &[ImageTensor],
    set: &TransformSet,
    u_r: &ImageTensor,
    cfg: &EstimatorConfig,
    eps: &NormSpec,
) -> Result<f64> {
    cfg.validate()?;
    set.validate()?;
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = cfg.sample_count()?;
    let clean = clean_predictions(model, images)?;
    estimate_robustness_seeded(model, images, &clean, set, u_r, cfg.gamma, n, cfg.seed, eps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaRate {
    pub gamma: f64,
    pub asr_r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    pub n_samples: usize,
    pub asr_u_clean: f64,
    /// Sorted by ascending `gamma`.
    pub asr_r_by_gamma: Vec<GammaRate>,
    pub avg_asr_u: f64,
    pub norm_violations: usize,
    pub seed: u64,
}

impl RobustnessReport {
    pub fn asr_r(&self, gamma: f64) -> Option<f64> {
        self.asr_r_by_gamma.iter().find(|g| g.gamma == gamma).map(|g| g.asr_r)
    }
}

impl fmt::Display for RobustnessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples          {}", self.n_samples)?;
        writeln!(f, "seed             {}", self.seed)?;
        writeln!(f, "clean ASR_U      {:.4}", self.asr_u_clean)?;
        writeln!(f, "average ASR_U    {:.4}", self.avg_asr_u)?;
        writeln!(f, "norm violations  {}", self.norm_violations)?;
        for g in &self.asr_r_by_gamma {
            writeln!(f, "ASR_R(γ={:.2})    {:.4}", g.gamma, g.asr_r)?;
        }
        Ok(())
    }
}

/// One shared pool of `n` seeded transformations; every neighbour is
/// evaluated once and all metrics are aggregated from that pool.
pub fn full_report(
    model: &Classifier,
    images: &[ImageTensor],
    set: &TransformSet,
    u_r: &ImageTensor,
    gammas: &[f64],
    cfg: &EstimatorConfig,
    eps: &NormSpec,
) -> Result<RobustnessReport> {
    cfg.validate()?;
    set.validate()?;
    for &g in gammas {
        open_unit("gamma", g)?;
    }
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = cfg.sample_count()?;
    let clean = clean_predictions(model, images)?;
    let samples = sample_transforms(set, n, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let outcomes = evaluate_neighbours(model, images, &clean, u_r, &samples, eps)?;
    let mut sorted = gammas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    Ok(RobustnessReport {
        n_samples: n,
        asr_u_clean: asr_u_with_clean(model, images, &clean, u_r)?,
        asr_r_by_gamma: sorted
            .into_iter()
            .map(|gamma| GammaRate {
                gamma,
                asr_r: success_rate(&outcomes, gamma),
            })
            .collect(),
        avg_asr_u: outcomes.iter().map(|o| o.asr_u).sum::<f64>() / n as f64,
        norm_violations: outcomes.iter().filter(|o| !o.within_budget).count(),
        seed: cfg.seed,
    })
}
