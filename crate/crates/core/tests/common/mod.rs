#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust_uap::classifier::{Classifier, Layer};
use robust_uap::transforms::{apply_transform, sample_transforms};
use robust_uap::{ImageTensor, NormOrder, NormSpec, TransformSet};

fn first_max(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Robust success rate recomputed with a plain double loop over the same
/// seeded transformations.
pub fn brute_force_estimate(
    model: &Classifier,
    images: &[ImageTensor],
    set: &TransformSet,
    u: &ImageTensor,
    gamma: f64,
    n: usize,
    seed: u64,
    eps: &NormSpec,
) -> f64 {
    let samples = sample_transforms(set, n, &mut ChaCha8Rng::seed_from_u64(seed));
    let mut hits = 0;
    for s in &samples {
        let moved = apply_transform(u, s).unwrap();
        let mut flipped = 0;
        for x in images {
            let clean = first_max(&model.forward(x).unwrap());
            let shifted: Vec<f64> = x.data().iter().zip(moved.data()).map(|(a, b)| a + b).collect();
            let shifted = ImageTensor::from_shape(x.shape(), shifted).unwrap();
            if first_max(&model.forward(&shifted).unwrap()) != clean {
                flipped += 1;
            }
        }
        let rate = flipped as f64 / images.len() as f64;
        let norm = match eps.order() {
            NormOrder::L2 => moved.data().iter().map(|v| v * v).sum::<f64>().sqrt(),
            NormOrder::LInf => moved.data().iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        };
        if rate > gamma && norm <= eps.epsilon() * (1.0 + 1e-12) {
            hits += 1;
        }
    }
    hits as f64 / n as f64
}

/// A 1x1x1 input `x = 0` and a two-class model whose class-1 logit is
/// `x - 1`. With `u = 1 - t` and brightness `beta ~ U(-1, 1)` the
/// transformed perturbation flips the prediction iff `beta > t`, so each
/// sample succeeds with probability `q = (1 - t) / 2`.
pub fn coin_stub(q: f64) -> (Classifier, Vec<ImageTensor>, TransformSet, ImageTensor) {
    let mut dense = Layer::dense(1, 2);
    if let Some((w, b)) = dense.params_mut() {
        w.copy_from_slice(&[0.0, 1.0]);
        b.copy_from_slice(&[0.0, -1.0]);
    }
    let model = Classifier::new(vec![dense]).unwrap();
    let t = 1.0 - 2.0 * q;
    let set = TransformSet {
        brightness_abs: 1.0,
        ..TransformSet::identity()
    };
    let x = ImageTensor::new(1, 1, 1, vec![0.0]).unwrap();
    let u = ImageTensor::new(1, 1, 1, vec![1.0 - t]).unwrap();
    (model, vec![x], set, u)
}
