use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_uap::classifier::{
    accuracy, read_model, softmax_cross_entropy, train, train_classifier, write_model, Classifier, Layer,
};
use robust_uap::harness::gen_toy_dataset;
use robust_uap::{ImageTensor, Shape, TrainConfig};

fn random_image(shape: Shape, rng: &mut impl Rng) -> ImageTensor {
    ImageTensor::from_shape(shape, (0..shape.len()).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

/// Straight-line forward pass, one scalar at a time.
fn oracle_forward(model: &Classifier, x: &ImageTensor) -> Vec<f64> {
    let mut a = x.data().to_vec();
    for layer in model.layers() {
        a = match layer {
            Layer::Conv3x3 {
                in_channels,
                out_channels,
                height,
                width,
                weights,
                bias,
            } => {
                let (h, w) = (*height as isize, *width as isize);
                let mut out = Vec::new();
                for o in 0..*out_channels {
                    for y in 0..h {
                        for xx in 0..w {
                            let mut s = bias[o];
                            for i in 0..*in_channels {
                                for ky in -1..=1isize {
                                    for kx in -1..=1isize {
                                        let (sy, sx) = (y + ky, xx + kx);
                                        if sy < 0 || sx < 0 || sy >= h || sx >= w {
                                            continue;
                                        }
                                        let wi = ((o * in_channels + i) * 9) as isize + (ky + 1) * 3 + (kx + 1);
                                        let ai = i as isize * h * w + sy * w + sx;
                                        s += weights[wi as usize] * a[ai as usize];
                                    }
                                }
                            }
                            out.push(s);
                        }
                    }
                }
                out
            }
            Layer::Relu { .. } => a.iter().map(|&v| v.max(0.0)).collect(),
            Layer::MaxPool2x2 {
                channels,
                height,
                width,
            } => {
                let mut out = Vec::new();
                for c in 0..*channels {
                    for y in 0..height / 2 {
                        for xx in 0..width / 2 {
                            let at = |dy: usize, dx: usize| a[c * height * width + (2 * y + dy) * width + 2 * xx + dx];
                            out.push(at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1)));
                        }
                    }
                }
                out
            }
            Layer::Flatten { .. } => a,
            Layer::Dense {
                inputs,
                outputs,
                weights,
                bias,
            } => (0..*outputs)
                .map(|o| {
                    let mut s = bias[o];
                    for i in 0..*inputs {
                        s += weights[o * inputs + i] * a[i];
                    }
                    s
                })
                .collect(),
        };
    }
    a
}

#[test]
fn forward_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let toy = Classifier::toy(3);
    let cnn = Classifier::cnn(3, 8, 8, [4, 6], 5, 4);
    for _ in 0..10 {
        for (model, shape) in [(&toy, Shape::new(8, 8, 1)), (&cnn, Shape::new(8, 8, 3))] {
            let x = random_image(shape, &mut rng);
            let got = model.forward(&x).unwrap();
            let want = oracle_forward(model, &x);
            assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12, "{g} vs {w}");
            }
        }
    }
}

#[test]
fn input_grad_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let models = [
        (Classifier::mlp(2, 8, 8, 16, 3, 1), Shape::new(8, 8, 2)),
        (Classifier::cnn(3, 8, 8, [4, 6], 4, 2), Shape::new(8, 8, 3)),
    ];
    for (model, shape) in &models {
        let x = random_image(*shape, &mut rng);
        let target = rng.gen_range(0..model.num_classes());
        let (loss, grad) = model.input_grad(&x, target).unwrap();
        assert_eq!(loss, softmax_cross_entropy(&model.forward(&x).unwrap(), target).0);
        let h = 1e-6;
        let mut worst = 0.0_f64;
        for _ in 0..100 {
            let i = rng.gen_range(0..x.len());
            let mut p = x.clone();
            p.data_mut()[i] += h;
            let up = model.loss(&p, target).unwrap();
            p.data_mut()[i] -= 2.0 * h;
            let down = model.loss(&p, target).unwrap();
            let fd = (up - down) / (2.0 * h);
            let a = grad.data()[i];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-4));
        }
        assert!(worst <= 1e-5, "max relative error {worst}");
    }
}

#[test]
fn toy_training_reaches_95_percent() {
    let data = gen_toy_dataset(200, 0).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.05,
        epochs: 10,
        ..TrainConfig::default()
    };
    let model = train_classifier(&data, &cfg).unwrap();
    let acc = accuracy(&model, &data).unwrap();
    assert!(acc >= 0.95, "training accuracy {acc}");
}

#[test]
fn toy_data_is_linearly_separable() {
    // the defining direction itself: left columns +1, right columns -1
    let data = gen_toy_dataset(200, 1).unwrap();
    let mut dense = Layer::dense(64, 2);
    if let Some((w, _)) = dense.params_mut() {
        for i in 0..64 {
            w[64 + i] = if i % 8 < 4 { 1.0 } else { -1.0 };
        }
    }
    let flat = Layer::Flatten {
        channels: 1,
        height: 8,
        width: 8,
    };
    let model = Classifier::new(vec![flat, dense]).unwrap();
    assert_eq!(accuracy(&model, &data).unwrap(), 1.0);
}

#[test]
fn trained_linear_model_separates_toy_data() {
    let data = gen_toy_dataset(200, 1).unwrap();
    let flat = Layer::Flatten {
        channels: 1,
        height: 8,
        width: 8,
    };
    let mut model = Classifier::new(vec![flat, Layer::dense(64, 2)]).unwrap();
    model.init_he_uniform(1);
    let cfg = TrainConfig {
        learning_rate: 0.1,
        epochs: 200,
        seed: 1,
        ..TrainConfig::default()
    };
    let model = train(model, &data, &cfg).unwrap();
    assert_eq!(accuracy(&model, &data).unwrap(), 1.0);
}

#[test]
fn zero_epochs_and_determinism() {
    let data = gen_toy_dataset(64, 2).unwrap();
    let idle = TrainConfig {
        epochs: 0,
        seed: 9,
        ..TrainConfig::default()
    };
    assert_eq!(
        write_model(&train_classifier(&data, &idle).unwrap()),
        write_model(&Classifier::mlp(1, 8, 8, 32, 2, 9))
    );
    let cfg = TrainConfig {
        epochs: 3,
        seed: 4,
        ..TrainConfig::default()
    };
    let a = write_model(&train_classifier(&data, &cfg).unwrap());
    let b = write_model(&train_classifier(&data, &cfg).unwrap());
    assert_eq!(a, b);
    assert_eq!(write_model(&read_model(&a).unwrap()), a);
}
