use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    check_inputs, minimal_perturbation, penalised, Algorithm, AttackConfig, AttackOutcome, AttackTrace, EpochRecord,
    Stopwatch,
};
use crate::classifier::Classifier;
use crate::error::Result;
use crate::estimator::{asr_u_with_clean, clean_predictions, estimate_robustness_seeded};
use crate::tensor::ImageTensor;
use crate::transforms::{apply_transform, sample_transforms, transform_input_grad, TransformSet};

/// Iterative universal perturbation: visit every point the current `u` does
/// not fool, add the DeepFool step that would fool it, project. Epochs stop
/// once `ASR_U >= gamma`.
pub fn standard_uap(model: &Classifier, images: &[ImageTensor], cfg: &AttackConfig) -> Result<AttackOutcome> {
    check_inputs(images, cfg)?;
    let clock = Stopwatch::start();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let clean = clean_predictions(model, images)?;
    let mut u = ImageTensor::zeros(images[0].shape());
    let mut trace = AttackTrace::new(Algorithm::StandardUap);
    let mut order: Vec<usize> = (0..images.len()).collect();
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut updates = 0;
        for &i in &order {
            let x = &images[i];
            if model.predict(&x.add(&u)?)? != clean[i] {
                continue;
            }
            let step = minimal_perturbation(model, x, &u, cfg)?;
            u = u.add(&step.perturbation)?.project(&cfg.norm)?;
            updates += 1;
        }
        let estimate = asr_u_with_clean(model, images, &clean, &u)?;
        let record = EpochRecord {
            epoch,
            batches: updates,
            estimate,
            threshold: cfg.gamma,
            seconds: clock.seconds(),
        };
        let done = record.target_reached();
        trace.epochs.push(record);
        if done {
            break;
        }
    }
    trace.final_norm = u.lp_norm(cfg.norm.order())?;
    trace.total_seconds = clock.seconds();
    Ok(AttackOutcome { perturbation: u, trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustInputPerturbation {
    pub perturbation: ImageTensor,
    pub iterations: usize,
    /// Every neighbour sampled at the last check misclassified `x`.
    pub all_fooled: bool,
}

/// PGD on the transformation-averaged adversarial loss for a single input,
/// starting from `start`.
///
/// Each iteration draws `cfg.transforms_per_batch` transformations; if all of
/// them already fool the model the search stops, otherwise `v` takes a sign
/// step along the averaged gradient and is projected.
pub fn robust_input_perturbation<R: Rng + ?Sized>(
    model: &Classifier,
    x: &ImageTensor,
    start: &ImageTensor,
    set: &TransformSet,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<RobustInputPerturbation> {
    cfg.validate()?;
    set.validate()?;
    let clean = model.predict(x)?;
    let mut v = start.project(&cfg.norm)?;
    for it in 0..cfg.max_inner_iters {
        let samples = sample_transforms(set, cfg.transforms_per_batch, rng);
        let mut fooled = true;
        let mut grad = ImageTensor::zeros(v.shape());
        for s in &samples {
            let probe = x.add(&apply_transform(&v, s)?)?;
            let (_, g) = model.input_grad(&probe, clean)?;
            if model.predict(&probe)? == clean {
                fooled = false;
            }
            grad.add_scaled(1.0, &transform_input_grad(&g, s)?)?;
        }
        if fooled {
            return Ok(RobustInputPerturbation {
                perturbation: v,
                iterations: it,
                all_fooled: true,
            });
        }
        let grad = penalised(grad.scaled(1.0 / samples.len() as f64), &v, cfg)?;
        v.add_scaled(cfg.step_size, &grad.signum())?;
        v = v.project(&cfg.norm)?;
    }
    Ok(RobustInputPerturbation {
        perturbation: v,
        iterations: cfg.max_inner_iters,
        all_fooled: false,
    })
}

/// The iterative algorithm with the per-point step replaced by a robust
/// per-input perturbation around the current `u_r`. Epochs stop once the
/// estimated robust success rate on `images` reaches `zeta`.
pub fn standard_uap_rp(
    model: &Classifier,
    images: &[ImageTensor],
    set: &TransformSet,
    cfg: &AttackConfig,
) -> Result<AttackOutcome> {
    check_inputs(images, cfg)?;
    set.validate()?;
    let clock = Stopwatch::start();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.estimator.sample_count()?;
    let clean = clean_predictions(model, images)?;
    let mut u = ImageTensor::zeros(images[0].shape());
    let mut trace = AttackTrace::new(Algorithm::StandardUapRp);
    let mut order: Vec<usize> = (0..images.len()).collect();
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut updates = 0;
        for &i in &order {
            let step = robust_input_perturbation(model, &images[i], &u, set, cfg, &mut rng)?;
            if step.iterations > 0 {
                let delta = step.perturbation.sub(&u)?;
                u = u.add(&delta)?.project(&cfg.norm)?;
                updates += 1;
            }
        }
        let seed = rng.gen();
        let estimate = estimate_robustness_seeded(model, images, &clean, set, &u, cfg.gamma, n, seed, &cfg.norm)?;
        let record = EpochRecord {
            epoch,
            batches: updates,
            estimate,
            threshold: cfg.zeta,
            seconds: clock.seconds(),
        };
        let done = record.target_reached();
        trace.epochs.push(record);
        if done {
            break;
        }
    }
    trace.final_norm = u.lp_norm(cfg.norm.order())?;
    trace.total_seconds = clock.seconds();
    Ok(AttackOutcome { perturbation: u, trace })
}
