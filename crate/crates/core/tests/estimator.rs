mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_uap::classifier::{Classifier, Layer};
use robust_uap::estimator::{
    asr_u, clean_predictions, estimate_robustness, estimate_robustness_seeded, full_report, EstimatorConfig,
};
use robust_uap::harness::gen_toy_dataset;
use robust_uap::{ImageTensor, NormSpec, Shape, TransformSet};

use common::{brute_force_estimate, coin_stub};

/// Class 1 iff the first pixel exceeds 0.5 (logit gap `2 * (p0 - 0.5)`).
fn first_pixel_model() -> Classifier {
    let mut dense = Layer::dense(2, 2);
    if let Some((w, b)) = dense.params_mut() {
        w.copy_from_slice(&[-1.0, 0.0, 1.0, 0.0]);
        b.copy_from_slice(&[0.5, -0.5]);
    }
    Classifier::new(vec![dense]).unwrap()
}

fn point(p0: f64) -> ImageTensor {
    ImageTensor::new(1, 2, 1, vec![p0, 0.3]).unwrap()
}

#[test]
fn asr_u_counts_points_within_reach_of_the_boundary() {
    let model = first_pixel_model();
    let xs: Vec<f64> = vec![0.05, 0.15, 0.2, 0.35, 0.45, 0.49, 0.55, 0.8, 0.95, 0.3];
    let images: Vec<ImageTensor> = xs.iter().map(|&p| point(p)).collect();
    let u = ImageTensor::new(1, 2, 1, vec![0.4, 0.0]).unwrap();
    // below the boundary and at most 0.4 away: 0.15, 0.2, 0.35, 0.45, 0.49, 0.3
    let want = xs.iter().filter(|&&p| p <= 0.5 && p + 0.4 > 0.5).count() as f64 / xs.len() as f64;
    assert_eq!(want, 0.6);
    assert_eq!(asr_u(&model, &images, &u).unwrap(), want);
    assert_eq!(asr_u(&model, &images, &ImageTensor::zeros(Shape::new(1, 2, 1))).unwrap(), 0.0);
}

#[test]
fn constant_model_is_never_fooled() {
    let model = Classifier::new(vec![Layer::dense(2, 3)]).unwrap();
    let images = vec![point(0.1), point(0.9)];
    let u = ImageTensor::new(1, 2, 1, vec![5.0, -3.0]).unwrap();
    assert_eq!(asr_u(&model, &images, &u).unwrap(), 0.0);
}

#[test]
fn zero_range_set_gives_exact_rates() {
    let model = first_pixel_model();
    let images = vec![point(0.2), point(0.3)];
    let eps = NormSpec::l2(1.0).unwrap();
    let cfg = EstimatorConfig::default();
    let strong = ImageTensor::new(1, 2, 1, vec![0.5, 0.0]).unwrap();
    let weak = ImageTensor::new(1, 2, 1, vec![0.1, 0.0]).unwrap();
    let set = TransformSet::identity();
    assert_eq!(estimate_robustness(&model, &images, &set, &strong, &cfg, &eps).unwrap(), 1.0);
    assert_eq!(estimate_robustness(&model, &images, &set, &weak, &cfg, &eps).unwrap(), 0.0);
    let rep = full_report(&model, &images, &set, &weak, &[0.5, 0.6, 0.7], &cfg, &eps).unwrap();
    assert_eq!(rep.avg_asr_u, rep.asr_u_clean);
}

fn toy_instance(seed: u64) -> (Classifier, Vec<ImageTensor>, ImageTensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = Classifier::toy(seed);
    let data = gen_toy_dataset(3, seed).unwrap();
    let u = ImageTensor::from_shape(
        Shape::new(8, 8, 1),
        (0..64).map(|_| rng.gen_range(-0.6..0.6)).collect(),
    )
    .unwrap();
    (model, data.images, u)
}

#[test]
fn matches_brute_force_on_r180() {
    let set = TransformSet::rotation(180.0);
    for seed in 0..5 {
        let (model, images, u) = toy_instance(seed);
        let clean = clean_predictions(&model, &images).unwrap();
        let eps = NormSpec::l2(4.0).unwrap();
        for gamma in [0.2, 0.5] {
            let got = estimate_robustness_seeded(&model, &images, &clean, &set, &u, gamma, 40, seed, &eps).unwrap();
            let want = brute_force_estimate(&model, &images, &set, &u, gamma, 40, seed, &eps);
            assert_eq!(got.to_bits(), want.to_bits());
        }
    }
}

#[test]
fn norm_indicator_never_raises_the_rate() {
    let set: TransformSet = "R(30), Sc(20), B(2, 0.3)".parse().unwrap();
    for seed in 0..5 {
        let (model, images, u) = toy_instance(seed);
        let clean = clean_predictions(&model, &images).unwrap();
        let norm = u.lp_norm(robust_uap::NormOrder::L2).unwrap();
        let tight = NormSpec::l2(norm).unwrap();
        let loose = NormSpec::l2(1e6).unwrap();
        for gamma in [0.1, 0.4] {
            let a = estimate_robustness_seeded(&model, &images, &clean, &set, &u, gamma, 60, seed, &tight).unwrap();
            let b = estimate_robustness_seeded(&model, &images, &clean, &set, &u, gamma, 60, seed, &loose).unwrap();
            assert!(a <= b);
        }
    }
}

#[test]
fn report_is_monotone_and_reproducible() {
    let set: TransformSet = "R(10), T(2, 2), Sh(2), Sc(2), B(2, 0.001)".parse().unwrap();
    let (model, images, u) = toy_instance(7);
    let cfg = EstimatorConfig {
        seed: 3,
        ..EstimatorConfig::default()
    };
    let eps = NormSpec::l2(10.0).unwrap();
    let a = full_report(&model, &images, &set, &u, &[0.7, 0.5, 0.6], &cfg, &eps).unwrap();
    let b = full_report(&model, &images, &set, &u, &[0.5, 0.6, 0.7], &cfg, &eps).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n_samples, 185);
    let rates: Vec<f64> = a.asr_r_by_gamma.iter().map(|g| g.asr_r).collect();
    assert!(rates.windows(2).all(|w| w[0] >= w[1]), "{rates:?}");
    assert!(a.to_string().contains("ASR_R"));
}

#[test]
fn coin_stub_has_the_intended_bias() {
    // many more samples than the bound asks for, so the rate sits near q
    for q in [0.3, 0.5, 0.8] {
        let (model, images, set, u) = coin_stub(q);
        let clean = clean_predictions(&model, &images).unwrap();
        let eps = NormSpec::l2(100.0).unwrap();
        let p = estimate_robustness_seeded(&model, &images, &clean, &set, &u, 0.5, 20_000, 1, &eps).unwrap();
        assert!((p - q).abs() < 0.02, "q = {q}, p = {p}");
    }
}
