use super::AttackConfig;
use crate::classifier::Classifier;
use crate::error::Result;
use crate::tensor::{argmax_label, ImageTensor, NormOrder};

#[derive(Debug, Clone, PartialEq)]
pub struct MinimalPerturbation {
    pub perturbation: ImageTensor,
    pub flipped: bool,
    pub iterations: usize,
}

/// DeepFool-style search for a small `r` with `f^(x + u + r) != f^(x)`.
///
/// Each step linearises the margin `f_k - f_k0` between the clean label
/// `k0` and every other class, and moves to the nearest linearised boundary.
/// The accumulated step is scaled by `1 + overshoot` both when testing for a
/// flip and in the returned perturbation. When the clean label is already
/// changed by `u` a zero perturbation is returned with `flipped = true`.
pub fn minimal_perturbation(
    model: &Classifier,
    x: &ImageTensor,
    u: &ImageTensor,
    cfg: &AttackConfig,
) -> Result<MinimalPerturbation> {
    let clean = model.predict(x)?;
    let base = x.add(u)?;
    let mut total = ImageTensor::zeros(x.shape());
    if model.predict(&base)? != clean {
        return Ok(MinimalPerturbation {
            perturbation: total,
            flipped: true,
            iterations: 0,
        });
    }
    let scale = 1.0 + cfg.overshoot;
    let classes = model.num_classes();
    let mut iterations = 0;
    while iterations < cfg.max_inner_iters {
        let mut probe = base.clone();
        probe.add_scaled(scale, &total)?;
        let logits = model.forward(&probe)?;
        if argmax_label(&logits)? != clean {
            break;
        }
        iterations += 1;

        let mut onehot = vec![0.0; classes];
        onehot[clean] = 1.0;
        let (_, grad_clean) = model.logits_vjp(&probe, &onehot)?;
        let mut best: Option<(f64, f64, ImageTensor)> = None;
        for k in (0..classes).filter(|&k| k != clean) {
            onehot.fill(0.0);
            onehot[k] = 1.0;
            let (_, grad_k) = model.logits_vjp(&probe, &onehot)?;
            let w = grad_k.sub(&grad_clean)?;
            let w_norm = w.lp_norm(NormOrder::L2)?;
            if w_norm == 0.0 {
                continue;
            }
            let margin = (logits[k] - logits[clean]).abs();
            let dist = margin / w_norm;
            if best.as_ref().is_none_or(|(d, _, _)| dist < *d) {
                best = Some((dist, margin / (w_norm * w_norm), w));
            }
        }
        let Some((_, coeff, w)) = best else {
            // flat logits: no boundary reachable by linearisation
            iterations = cfg.max_inner_iters;
            break;
        };
        total.add_scaled(coeff, &w)?;
    }
    let perturbation = total.scaled(scale);
    let flipped = model.predict(&base.add(&perturbation)?)? != clean;
    Ok(MinimalPerturbation {
        perturbation,
        flipped,
        iterations,
    })
}
