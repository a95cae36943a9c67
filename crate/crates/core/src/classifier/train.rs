use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Classifier;
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 10,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must be in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        Ok(())
    }
}

/// Builds the topology that fits the dataset (the reference CNN for
/// 32x32x3 images, a one-hidden-layer MLP otherwise), initialises it from
/// `cfg.seed` and trains it.
pub fn train_classifier(data: &LabeledDataset, cfg: &TrainConfig) -> Result<Classifier> {
    let shape = data.image_shape().ok_or(Error::EmptyDataset)?;
    let model = if (shape.height, shape.width, shape.channels) == (32, 32, 3) && data.num_classes == 10 {
        Classifier::reference_cifar(cfg.seed)
    } else {
        Classifier::mlp(shape.channels, shape.height, shape.width, 32, data.num_classes, cfg.seed)
    };
    train(model, data, cfg)
}

/// Mini-batch momentum SGD on softmax cross-entropy against the true labels.
pub fn train(mut model: Classifier, data: &LabeledDataset, cfg: &TrainConfig) -> Result<Classifier> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for (img, &label) in data.images.iter().zip(&data.labels) {
        model.check_input(img)?;
        model.check_label(label)?;
    }
    let mut velocity: Vec<(Vec<f64>, Vec<f64>)> = model
        .layers
        .iter()
        .map(|l| {
            let (w, b) = l.params();
            (vec![0.0; w.len()], vec![0.0; b.len()])
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut sum: Vec<(Vec<f64>, Vec<f64>)> = velocity
                .iter()
                .map(|(w, b)| (vec![0.0; w.len()], vec![0.0; b.len()]))
                .collect();
            for &i in batch {
                let (_, grads) = model.param_grads(data.images[i].data(), data.labels[i]);
                for ((sw, sb), g) in sum.iter_mut().zip(grads) {
                    if let Some(g) = g {
                        sw.iter_mut().zip(&g.weights).for_each(|(a, b)| *a += b);
                        sb.iter_mut().zip(&g.bias).for_each(|(a, b)| *a += b);
                    }
                }
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            for ((layer, (vw, vb)), (gw, gb)) in model.layers.iter_mut().zip(&mut velocity).zip(&sum) {
                if let Some((w, b)) = layer.params_mut() {
                    for ((p, v), g) in w.iter_mut().zip(vw.iter_mut()).zip(gw) {
                        *v = cfg.momentum * *v - scale * g;
                        *p += *v;
                    }
                    for ((p, v), g) in b.iter_mut().zip(vb.iter_mut()).zip(gb) {
                        *v = cfg.momentum * *v - scale * g;
                        *p += *v;
                    }
                }
            }
        }
    }
    for layer in &model.layers {
        layer.validate()?;
    }
    Ok(model)
}

/// Fraction of `data` whose prediction matches the label.
pub fn accuracy(model: &Classifier, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut hits = 0usize;
    for (img, &label) in data.images.iter().zip(&data.labels) {
        if model.predict(img)? == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}
