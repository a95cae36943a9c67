//! Randomised invariants of the transform, classifier and estimator layers.
//! The core and attack invariants run inside the acceptance suite.

use proptest::prelude::*;
use robust_uap::classifier::{softmax_cross_entropy, Classifier};
use robust_uap::estimator::{clean_predictions, estimate_robustness_seeded, full_report, EstimatorConfig};
use robust_uap::harness::gen_toy_dataset;
use robust_uap::transforms::{affine_matrix, apply_transform, sample_transform, transform_input_grad, AugmentedMatrix};
use robust_uap::{ImageTensor, NormOrder, NormSpec, Shape, TransformSample, TransformSet};

fn image(h: usize, w: usize, c: usize) -> impl Strategy<Value = ImageTensor> {
    prop::collection::vec(-1.0..1.0f64, h * w * c).prop_map(move |d| ImageTensor::new(h, w, c, d).unwrap())
}

fn geometric() -> impl Strategy<Value = TransformSample> {
    (-30.0..30.0f64, -3.0..3.0f64, -3.0..3.0f64, -20.0..20.0f64, -20.0..20.0f64).prop_map(|(t, x, y, p, m)| {
        TransformSample {
            theta_deg: t,
            tx: x,
            ty: y,
            scale_p: p,
            shear_m: m,
            ..TransformSample::identity()
        }
    })
}

fn full_sample() -> impl Strategy<Value = TransformSample> {
    (geometric(), 0.8..1.2f64, -0.2..0.2f64).prop_map(|(s, a, b)| TransformSample {
        contrast_alpha: a,
        brightness_beta: b,
        ..s
    })
}

fn close(a: &ImageTensor, b: &ImageTensor, tol: f64) -> bool {
    a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn transform_gradient_matches_finite_differences(
        s in full_sample(),
        u in image(6, 6, 1),
        picks in prop::collection::vec(0usize..36, 4),
    ) {
        let moved = apply_transform(&u, &s).unwrap();
        let grad = transform_input_grad(&moved.scaled(2.0), &s).unwrap();
        let loss = |v: &ImageTensor| apply_transform(v, &s).unwrap().data().iter().map(|x| x * x).sum::<f64>();
        // the loss is quadratic in u, so a wider step stays exact and rounds less
        let h = 1e-4;
        for i in picks {
            let mut p = u.clone();
            p.data_mut()[i] += h;
            let up = loss(&p);
            p.data_mut()[i] -= 2.0 * h;
            let fd = (up - loss(&p)) / (2.0 * h);
            let a = grad.data()[i];
            prop_assert!((a - fd).abs() / a.abs().max(fd.abs()).max(1e-4) <= 1e-6, "{} vs {}", a, fd);
        }
    }

    #[test]
    fn geometric_warp_is_linear(s in geometric(), x in image(5, 7, 2), y in image(5, 7, 2), a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let mut mix = x.scaled(a);
        mix.add_scaled(b, &y).unwrap();
        let lhs = apply_transform(&mix, &s).unwrap();
        let mut rhs = apply_transform(&x, &s).unwrap().scaled(a);
        rhs.add_scaled(b, &apply_transform(&y, &s).unwrap()).unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn compound_matrix_is_the_product_of_its_parts(s in geometric()) {
        let m = affine_matrix(&s).unwrap();
        let parts = AugmentedMatrix::translation(s.tx, s.ty)
            .compose(&AugmentedMatrix::rotation(s.theta_deg))
            .compose(&AugmentedMatrix::scaling(s.scale_p))
            .compose(&AugmentedMatrix::shearing(s.shear_m));
        for (a, b) in [(m.a11, parts.a11), (m.a12, parts.a12), (m.a21, parts.a21), (m.a22, parts.a22), (m.b1, parts.b1), (m.b2, parts.b2)] {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn translation_never_adds_mass(u in image(6, 6, 2), tx in -4.0..4.0f64, ty in -4.0..4.0f64) {
        let moved = apply_transform(&u, &TransformSample::translation(tx, ty)).unwrap();
        let before = u.lp_norm(NormOrder::L2).unwrap();
        prop_assert!(moved.lp_norm(NormOrder::L2).unwrap() <= before * (1.0 + 1e-12));
    }

    #[test]
    fn integer_shifts_copy_pixels_exactly(u in image(5, 6, 1), dx in -3i32..=3, dy in -3i32..=3) {
        let moved = apply_transform(&u, &TransformSample::translation(dx as f64, dy as f64)).unwrap();
        for r in 0..5i32 {
            for c in 0..6i32 {
                let (sr, sc) = (r - dy, c - dx);
                let want = if (0..5).contains(&sr) && (0..6).contains(&sc) { u.at(0, sr as usize, sc as usize) } else { 0.0 };
                prop_assert_eq!(moved.at(0, r as usize, c as usize).to_bits(), want.to_bits());
            }
        }
    }

    #[test]
    fn samples_stay_in_range(seed in any::<u64>(), r in 0.0..45.0f64, t in 0.0..4.0f64, p in 0.0..50.0f64, c in 0.0..50.0f64, b in 0.0..0.5f64) {
        use rand::SeedableRng;
        let set = TransformSet { rotation_deg: r, translate_x: t, translate_y: t, scale_pct: p, shear_pct: p, contrast_pct: c, brightness_abs: b };
        let s = sample_transform(&set, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(set.contains(&s));
        prop_assert!(s.contrast_alpha > 0.0);
    }

    #[test]
    fn forward_is_pure(x in image(8, 8, 1), seed in 0u64..50) {
        let m = Classifier::toy(seed);
        let a = m.forward(&x).unwrap();
        let b = m.forward(&x).unwrap();
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn uniform_logits_cost_ln_k(k in 1usize..40, z in -50.0..50.0f64, t in 0usize..40) {
        let (loss, _) = softmax_cross_entropy(&vec![z; k], t % k);
        prop_assert!((loss - (k as f64).ln()).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn estimates_are_rates_and_monotone_in_gamma(
        seed in 0u64..1_000_000,
        u in image(8, 8, 1),
        g1 in 0.01..0.99f64,
        g2 in 0.01..0.99f64,
    ) {
        let model = Classifier::toy(seed % 7);
        let data = gen_toy_dataset(4, seed % 11).unwrap();
        let clean = clean_predictions(&model, &data.images).unwrap();
        let set: TransformSet = "R(20), T(1, 1), B(2, 0.1)".parse().unwrap();
        let eps = NormSpec::l2(5.0).unwrap();
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let a = estimate_robustness_seeded(&model, &data.images, &clean, &set, &u, lo, 6, seed, &eps).unwrap();
        let b = estimate_robustness_seeded(&model, &data.images, &clean, &set, &u, hi, 6, seed, &eps).unwrap();
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(a >= b);
    }
}

#[test]
fn report_rates_lie_in_unit_interval() {
    let model = Classifier::toy(1);
    let data = gen_toy_dataset(6, 2).unwrap();
    let set: TransformSet = "R(10), T(2, 2), Sh(2), Sc(2), B(2, 0.001)".parse().unwrap();
    let u = ImageTensor::filled(Shape::new(8, 8, 1), 0.1);
    let rep = full_report(
        &model,
        &data.images,
        &set,
        &u,
        &[0.2, 0.5, 0.9],
        &EstimatorConfig::default(),
        &NormSpec::l2(1.0).unwrap(),
    )
    .unwrap();
    for v in [rep.asr_u_clean, rep.avg_asr_u].into_iter().chain(rep.asr_r_by_gamma.iter().map(|g| g.asr_r)) {
        assert!((0.0..=1.0).contains(&v));
    }
}
