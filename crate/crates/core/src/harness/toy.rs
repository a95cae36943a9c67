use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::{ImageTensor, Shape};

pub const TOY_SIDE: usize = 8;
pub const TOY_MARGIN: f64 = 0.1;

pub fn toy_shape() -> Shape {
    Shape::new(TOY_SIDE, TOY_SIDE, 1)
}

/// Mean of the left four columns minus the mean of the right four.
pub fn toy_margin(img: &ImageTensor) -> f64 {
    let half = TOY_SIDE / 2;
    let mut diff = 0.0;
    for r in 0..TOY_SIDE {
        for c in 0..TOY_SIDE {
            let v = img.at(0, r, c);
            diff += if c < half { v } else { -v };
        }
    }
    diff / (TOY_SIDE * half) as f64
}

/// `n` uniform-noise 8x8x1 images with label 1 when the left half is brighter
/// than the right half and 0 otherwise; every image has `|margin| >= 0.1`.
///
/// Labels alternate 0, 1, 0, ... so the classes are balanced. Draws that
/// miss the margin are rejected; draws on the wrong side are mirrored
/// left-to-right, which negates the margin.
pub fn gen_toy_dataset(n: usize, seed: u64) -> Result<LabeledDataset> {
    if n < 2 {
        return Err(Error::invalid(format!("toy dataset needs n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = toy_shape();
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while images.len() < n {
        let label = images.len() % 2;
        let data: Vec<f64> = (0..shape.len()).map(|_| rng.gen::<f64>()).collect();
        let mut img = ImageTensor::from_shape(shape, data)?;
        let m = toy_margin(&img);
        if m.abs() < TOY_MARGIN {
            continue;
        }
        if (m > 0.0) != (label == 1) {
            img = mirror(&img);
        }
        images.push(img);
        labels.push(label);
    }
    LabeledDataset::new(format!("toy-{n}-{seed}"), images, labels, 2)
}

fn mirror(img: &ImageTensor) -> ImageTensor {
    let mut out = img.clone();
    for r in 0..TOY_SIDE {
        for c in 0..TOY_SIDE {
            let i = out.index(0, r, c);
            out.data_mut()[i] = img.at(0, r, TOY_SIDE - 1 - c);
        }
    }
    out
}
