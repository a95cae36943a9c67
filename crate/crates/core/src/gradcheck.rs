//! Finite-difference checks of every hand-written gradient in the crate.
//!
//! Each suite compares an analytic gradient against central differences at
//! randomly chosen coordinates and reports the worst relative error.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attacks::adversarial_loss_grad;
use crate::classifier::{softmax_cross_entropy, Classifier, Layer};
use crate::error::Result;
use crate::tensor::{ImageTensor, Shape};
use crate::transforms::{apply_transform, sample_transforms, transform_input_grad, TransformSample, TransformSet};

pub const FD_STEP: f64 = 1e-6;
/// Step for losses that are quadratic in the input, where truncation error vanishes.
pub const QUADRATIC_FD_STEP: f64 = 1e-4;
/// Denominator floor of [`relative_error`]; below it the comparison is
/// effectively absolute.
pub const REL_FLOOR: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// Compares `grad` with central differences of `loss` at `count` distinct
/// random coordinates of `x` (all of them if `x` is smaller).
pub fn check_gradient(
    x: &ImageTensor,
    grad: &ImageTensor,
    count: usize,
    step: f64,
    rng: &mut impl Rng,
    mut loss: impl FnMut(&ImageTensor) -> Result<f64>,
) -> Result<f64> {
    let picks = sample(rng, x.len(), count.min(x.len()));
    let mut worst = 0.0_f64;
    let mut probe = x.clone();
    for i in picks {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = loss(&probe)?;
        probe.data_mut()[i] = orig - step;
        let down = loss(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        worst = worst.max(relative_error(grad.data()[i], numeric));
    }
    Ok(worst)
}

fn random_tensor(shape: Shape, rng: &mut impl Rng) -> ImageTensor {
    let data = (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    ImageTensor::from_shape(shape, data).expect("shape and data agree")
}

fn randomise(model: &mut Classifier, rng: &mut impl Rng) {
    for layer in model.layers_mut() {
        if let Some((w, b)) = layer.params_mut() {
            w.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
            b.iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
    }
}

/// Input gradient of `c . f(x)` for a single-layer network.
fn layer_check(name: &str, layer: Layer, input: Shape, rng: &mut ChaCha8Rng) -> Result<GradCheck> {
    let mut model = Classifier::new(vec![layer])?;
    randomise(&mut model, rng);
    let x = random_tensor(input, rng);
    let c: Vec<f64> = (0..model.num_classes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (_, grad) = model.logits_vjp(&x, &c)?;
    let err = check_gradient(&x, &grad, 100, FD_STEP, rng, |p| {
        Ok(model.forward(p)?.iter().zip(&c).map(|(a, b)| a * b).sum())
    })?;
    Ok(GradCheck {
        name: format!("layer/{name}"),
        coordinates: 100.min(x.len()),
        max_rel_error: err,
        tolerance: 1e-5,
    })
}

fn network_check(name: &str, mut model: Classifier, input: Shape, rng: &mut ChaCha8Rng) -> Result<GradCheck> {
    randomise(&mut model, rng);
    let x = random_tensor(input, rng);
    let target = rng.gen_range(0..model.num_classes());
    let (_, grad) = model.input_grad(&x, target)?;
    let err = check_gradient(&x, &grad, 100, FD_STEP, rng, |p| {
        Ok(softmax_cross_entropy(&model.forward(p)?, target).0)
    })?;
    Ok(GradCheck {
        name: format!("network/{name}"),
        coordinates: 100.min(x.len()),
        max_rel_error: err,
        tolerance: 1e-5,
    })
}

/// `L(u) = sum(tau(u)^2)` against its analytic gradient.
fn transform_check(name: &str, sample: TransformSample, rng: &mut ChaCha8Rng) -> Result<GradCheck> {
    let u = random_tensor(Shape::new(8, 8, 2), rng);
    let moved = apply_transform(&u, &sample)?;
    let grad = transform_input_grad(&moved.scaled(2.0), &sample)?;
    let err = check_gradient(&u, &grad, 100, QUADRATIC_FD_STEP, rng, |p| {
        Ok(apply_transform(p, &sample)?.data().iter().map(|v| v * v).sum())
    })?;
    Ok(GradCheck {
        name: format!("transform/{name}"),
        coordinates: 100,
        max_rel_error: err,
        tolerance: 1e-6,
    })
}

/// Gradient of the batch adversarial loss with respect to the increment
/// added to the current perturbation.
fn batch_loss_check(rng: &mut ChaCha8Rng) -> Result<GradCheck> {
    let shape = Shape::new(8, 8, 2);
    let mut model = Classifier::mlp(2, 8, 8, 16, 3, rng.gen());
    randomise(&mut model, rng);
    let images: Vec<ImageTensor> = (0..3).map(|_| random_tensor(shape, rng).map(|v| 0.5 + 0.5 * v)).collect();
    let clean: Vec<usize> = images.iter().map(|x| model.predict(x)).collect::<Result<_>>()?;
    let set: TransformSet = "R(10), T(2, 2), Sh(2), Sc(2), B(2, 0.001)".parse()?;
    let samples = sample_transforms(&set, 2, rng);
    let base = random_tensor(shape, rng).scaled(0.3);
    let delta = random_tensor(shape, rng).scaled(0.1);
    let (_, grad) = adversarial_loss_grad(&model, &images, &clean, &samples, &base.add(&delta)?)?;
    let err = check_gradient(&delta, &grad, 100, FD_STEP, rng, |d| {
        Ok(adversarial_loss_grad(&model, &images, &clean, &samples, &base.add(d)?)?.0)
    })?;
    Ok(GradCheck {
        name: "attack/batch-loss".into(),
        coordinates: 100,
        max_rel_error: err,
        tolerance: 1e-5,
    })
}

pub fn run_all(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spatial = Shape::new(6, 6, 3);
    let mut out = vec![
        layer_check("conv3x3", Layer::conv3x3(3, 4, 6, 6), spatial, &mut rng)?,
        layer_check("relu", Layer::Relu { dims: vec![3, 6, 6] }, spatial, &mut rng)?,
        layer_check(
            "maxpool2x2",
            Layer::MaxPool2x2 {
                channels: 3,
                height: 6,
                width: 6,
            },
            spatial,
            &mut rng,
        )?,
        layer_check(
            "flatten",
            Layer::Flatten {
                channels: 3,
                height: 6,
                width: 6,
            },
            spatial,
            &mut rng,
        )?,
        layer_check("dense", Layer::dense(108, 5), spatial, &mut rng)?,
    ];
    out.push(network_check("mlp", Classifier::mlp(2, 8, 8, 16, 3, 0), Shape::new(8, 8, 2), &mut rng)?);
    out.push(network_check(
        "small-cnn",
        Classifier::cnn(3, 8, 8, [4, 6], 3, 0),
        Shape::new(8, 8, 3),
        &mut rng,
    )?);
    let families = [
        ("rotation", TransformSample::rotation(10.0)),
        (
            "scale",
            TransformSample {
                scale_p: 7.0,
                ..TransformSample::identity()
            },
        ),
        (
            "shear",
            TransformSample {
                shear_m: 15.0,
                ..TransformSample::identity()
            },
        ),
        ("translation", TransformSample::translation(0.6, -1.3)),
        ("contrast-brightness", TransformSample::photometric(1.2, 0.05)),
        (
            "composite",
            TransformSample {
                theta_deg: -7.5,
                tx: 1.4,
                ty: -0.3,
                scale_p: 1.5,
                shear_m: -1.8,
                contrast_alpha: 0.98,
                brightness_beta: 0.0007,
            },
        ),
    ];
    for (name, s) in families {
        out.push(transform_check(name, s, &mut rng)?);
    }
    out.push(batch_loss_check(&mut rng)?);
    Ok(out)
}
