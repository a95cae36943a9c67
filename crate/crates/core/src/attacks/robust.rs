use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    adversarial_loss_grad, check_inputs, penalised, Algorithm, AttackConfig, AttackOutcome, AttackTrace, EpochRecord,
    InnerLoopRecord, Stopwatch,
};
use crate::classifier::Classifier;
use crate::error::Result;
use crate::estimator::{clean_predictions, estimate_robustness_seeded};
use crate::tensor::ImageTensor;
use crate::transforms::{sample_transforms, TransformSet};

/// RobustUAP.
///
/// For every batch whose estimated robust success rate is below `zeta`, run
/// sign-PGD on an increment `delta` (fresh `n` transformations per step,
/// `n` from the Hoeffding bound) until the batch estimate for `u + delta`
/// reaches `zeta` or `max_inner_iters` steps were taken, then fold the
/// increment in with a projection. Epochs stop once the estimate over all of
/// `images` reaches `zeta`.
pub fn robust_uap(model: &Classifier, images: &[ImageTensor], set: &TransformSet, cfg: &AttackConfig) -> Result<AttackOutcome> {
    check_inputs(images, cfg)?;
    set.validate()?;
    let clock = Stopwatch::start();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.estimator.sample_count()?;
    let clean = clean_predictions(model, images)?;
    let shape = images[0].shape();
    let mut u = ImageTensor::zeros(shape);
    let mut trace = AttackTrace::new(Algorithm::RobustUap);
    let mut order: Vec<usize> = (0..images.len()).collect();
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut updated = 0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let xs: Vec<ImageTensor> = batch.iter().map(|&i| images[i].clone()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| clean[i]).collect();
            let seed = rng.gen();
            let entry = estimate_robustness_seeded(model, &xs, &ys, set, &u, cfg.gamma, n, seed, &cfg.norm)?;
            if entry >= cfg.zeta {
                continue;
            }
            let mut delta = ImageTensor::zeros(shape);
            let mut exit = entry;
            let mut iterations = 0;
            while iterations < cfg.max_inner_iters {
                iterations += 1;
                let samples = sample_transforms(set, n, &mut rng);
                let current = u.add(&delta)?;
                let (_, grad) = adversarial_loss_grad(model, &xs, &ys, &samples, &current)?;
                let grad = penalised(grad, &current, cfg)?;
                delta.add_scaled(cfg.step_size, &grad.signum())?;
                delta = delta.project(&cfg.norm)?;
                let seed = rng.gen();
                exit = estimate_robustness_seeded(model, &xs, &ys, set, &u.add(&delta)?, cfg.gamma, n, seed, &cfg.norm)?;
                if exit >= cfg.zeta {
                    break;
                }
            }
            trace.inner_loops.push(InnerLoopRecord {
                epoch,
                batch: b,
                entry_estimate: entry,
                exit_estimate: exit,
                iterations,
                cap_hit: exit < cfg.zeta,
            });
            u = u.add(&delta)?.project(&cfg.norm)?;
            updated += 1;
        }
        let seed = rng.gen();
        let estimate = estimate_robustness_seeded(model, images, &clean, set, &u, cfg.gamma, n, seed, &cfg.norm)?;
        let record = EpochRecord {
            epoch,
            batches: updated,
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
