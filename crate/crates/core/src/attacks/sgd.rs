use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{adversarial_loss_grad, check_inputs, penalised, Algorithm, AttackConfig, AttackOutcome, AttackTrace, EpochRecord, Stopwatch};
use crate::classifier::Classifier;
use crate::error::Result;
use crate::estimator::{clean_predictions, estimate_robustness_seeded};
use crate::tensor::ImageTensor;
use crate::transforms::{sample_transforms, TransformSet};

/// Momentum SGD baseline on the batch/transformation-averaged surrogate:
///
/// `v <- momentum * v + lr * grad`, `u <- P(u + v)`
///
/// with `cfg.transforms_per_batch` fresh transformations per batch.
pub fn sgd_uap(model: &Classifier, images: &[ImageTensor], set: &TransformSet, cfg: &AttackConfig) -> Result<AttackOutcome> {
    check_inputs(images, cfg)?;
    set.validate()?;
    let clock = Stopwatch::start();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.estimator.sample_count()?;
    let clean = clean_predictions(model, images)?;
    let shape = images[0].shape();
    let mut u = ImageTensor::zeros(shape);
    let mut velocity = ImageTensor::zeros(shape);
    let mut trace = AttackTrace::new(Algorithm::Sgd);
    let mut order: Vec<usize> = (0..images.len()).collect();
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut batches = 0;
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<ImageTensor> = batch.iter().map(|&i| images[i].clone()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| clean[i]).collect();
            let samples = sample_transforms(set, cfg.transforms_per_batch, &mut rng);
            let (_, grad) = adversarial_loss_grad(model, &xs, &ys, &samples, &u)?;
            let grad = penalised(grad, &u, cfg)?;
            velocity = velocity.scaled(cfg.momentum);
            velocity.add_scaled(cfg.learning_rate, &grad)?;
            u = u.add(&velocity)?.project(&cfg.norm)?;
            batches += 1;
        }
        let seed = rng.gen();
        let estimate = estimate_robustness_seeded(model, images, &clean, set, &u, cfg.gamma, n, seed, &cfg.norm)?;
        let record = EpochRecord {
            epoch,
            batches,
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
