//! A small fixed-topology CNN with hand-written backprop.
//!
//! Only what the attacks need is here: logits, softmax cross-entropy, the
//! exact gradient of the loss with respect to the *input image*, plus plain
//! momentum-SGD training and a binary checkpoint format.

mod checkpoint;
mod layers;
mod train;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{load_model, read_model, save_model, write_model};
pub use layers::{Layer, LayerKind, ParamGrad};
pub use train::{accuracy, train, train_classifier, TrainConfig};

use crate::error::{Error, Result};
use crate::tensor::{argmax_label, ImageTensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    layers: Vec<Layer>,
    num_classes: usize,
}

impl Classifier {
    /// Checks that the layer shapes chain and the last layer emits
    /// `num_classes` logits.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::ShapeChain("network has no layers".into()))?;
        first.validate()?;
        for pair in layers.windows(2) {
            pair[1].validate()?;
            let dims = pair[0].output_dims();
            if !pair[1].accepts(&dims) {
                return Err(Error::ShapeChain(format!(
                    "{:?} emits {:?} but {:?} expects {:?}",
                    pair[0].kind(),
                    dims,
                    pair[1].kind(),
                    pair[1].input_dims()
                )));
            }
        }
        let num_classes = layers.last().map(Layer::output_len).unwrap_or(0);
        Ok(Self { layers, num_classes })
    }

    /// Conv3x3(3->16) -> ReLU -> MaxPool -> Conv3x3(16->32) -> ReLU -> MaxPool
    /// -> Flatten -> Dense(2048->10), He-uniform initialised from `seed`.
    pub fn reference_cifar(seed: u64) -> Self {
        Self::cnn(3, 32, 32, [16, 32], 10, seed)
    }

    /// Flatten -> Dense(64->32) -> ReLU -> Dense(32->2) on 8x8x1 inputs.
    pub fn toy(seed: u64) -> Self {
        Self::mlp(1, 8, 8, 32, 2, seed)
    }

    pub fn cnn(channels: usize, height: usize, width: usize, filters: [usize; 2], classes: usize, seed: u64) -> Self {
        let (h2, w2) = (height / 2, width / 2);
        let (h4, w4) = (h2 / 2, w2 / 2);
        let layers = vec![
            Layer::conv3x3(channels, filters[0], height, width),
            Layer::Relu {
                dims: vec![filters[0], height, width],
            },
            Layer::MaxPool2x2 {
                channels: filters[0],
                height,
                width,
            },
            Layer::conv3x3(filters[0], filters[1], h2, w2),
            Layer::Relu {
                dims: vec![filters[1], h2, w2],
            },
            Layer::MaxPool2x2 {
                channels: filters[1],
                height: h2,
                width: w2,
            },
            Layer::Flatten {
                channels: filters[1],
                height: h4,
                width: w4,
            },
            Layer::dense(filters[1] * h4 * w4, classes),
        ];
        let mut model = Self::new(layers).expect("reference topology chains");
        model.init_he_uniform(seed);
        model
    }

    pub fn mlp(channels: usize, height: usize, width: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let inputs = channels * height * width;
        let layers = vec![
            Layer::Flatten {
                channels,
                height,
                width,
            },
            Layer::dense(inputs, hidden),
            Layer::Relu { dims: vec![hidden] },
            Layer::dense(hidden, classes),
        ];
        let mut model = Self::new(layers).expect("mlp topology chains");
        model.init_he_uniform(seed);
        model
    }

    /// Re-draws every weight from `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`;
    /// biases are zeroed.
    pub fn init_he_uniform(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut self.layers {
            let fan_in = match layer {
                Layer::Conv3x3 { in_channels, .. } => *in_channels * 9,
                Layer::Dense { inputs, .. } => *inputs,
                _ => continue,
            };
            let bound = (6.0_f64 / fan_in as f64).sqrt();
            if let Some((w, b)) = layer.params_mut() {
                for v in w.iter_mut() {
                    *v = rng.gen_range(-bound..bound);
                }
                b.fill(0.0);
            }
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].input_len()
    }

    fn check_input(&self, x: &ImageTensor) -> Result<()> {
        let first = &self.layers[0];
        let ok = match first {
            Layer::Dense { inputs, .. } => x.len() == *inputs,
            _ => {
                let d = first.input_dims();
                d.len() == 3 && [x.channels(), x.height(), x.width()] == [d[0], d[1], d[2]]
                    || d.len() == 1 && x.len() == d[0]
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: format!("{:?} (channels, height, width)", first.input_dims()),
                actual: x.shape().to_string(),
            })
        }
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label < self.num_classes {
            Ok(())
        } else {
            Err(Error::InvalidLabel {
                label,
                num_classes: self.num_classes,
            })
        }
    }

    /// Inputs of every layer followed by the logits.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for layer in &self.layers {
            let next = layer.forward(acts.last().unwrap());
            acts.push(next);
        }
        acts
    }

    pub fn forward(&self, x: &ImageTensor) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut a = x.data().to_vec();
        for layer in &self.layers {
            a = layer.forward(&a);
        }
        if !a.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(a)
    }

    pub fn predict(&self, x: &ImageTensor) -> Result<usize> {
        argmax_label(&self.forward(x)?)
    }

    /// Vector-Jacobian product of the logits: returns the logits and
    /// `J^T dlogits` as an image shaped like `x`.
    pub fn logits_vjp(&self, x: &ImageTensor, dlogits: &[f64]) -> Result<(Vec<f64>, ImageTensor)> {
        self.check_input(x)?;
        if dlogits.len() != self.num_classes {
            return Err(Error::ShapeMismatch {
                expected: format!("{} logit gradients", self.num_classes),
                actual: dlogits.len().to_string(),
            });
        }
        let acts = self.activations(x.data());
        let logits = acts.last().unwrap().clone();
        let (grad, _) = self.backward(&acts, dlogits.to_vec(), false);
        let grad = ImageTensor::from_shape(x.shape(), grad)?;
        grad.check_finite()?;
        Ok((logits, grad))
    }

    /// Softmax cross-entropy of `forward(x)` against `target`, and its exact
    /// gradient with respect to `x`.
    pub fn input_grad(&self, x: &ImageTensor, target: usize) -> Result<(f64, ImageTensor)> {
        self.check_input(x)?;
        self.check_label(target)?;
        let acts = self.activations(x.data());
        let (loss, dlogits) = softmax_cross_entropy(acts.last().unwrap(), target);
        let (grad, _) = self.backward(&acts, dlogits, false);
        let grad = ImageTensor::from_shape(x.shape(), grad)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite);
        }
        grad.check_finite()?;
        Ok((loss, grad))
    }

    pub fn loss(&self, x: &ImageTensor, target: usize) -> Result<f64> {
        self.check_label(target)?;
        let logits = self.forward(x)?;
        Ok(softmax_cross_entropy(&logits, target).0)
    }

    fn backward(&self, acts: &[Vec<f64>], dlogits: Vec<f64>, with_params: bool) -> (Vec<f64>, Vec<Option<ParamGrad>>) {
        let mut grad = dlogits;
        let mut params = vec![None; self.layers.len()];
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (g, p) = layer.backward(&acts[i], &grad, with_params);
            grad = g;
            params[i] = p;
        }
        (grad, params)
    }

    /// Loss and parameter gradients for one labelled example (training).
    pub(crate) fn param_grads(&self, x: &[f64], target: usize) -> (f64, Vec<Option<ParamGrad>>) {
        let acts = self.activations(x);
        let (loss, dlogits) = softmax_cross_entropy(acts.last().unwrap(), target);
        let (_, params) = self.backward(&acts, dlogits, true);
        (loss, params)
    }
}

/// Numerically stable softmax cross-entropy and its gradient w.r.t. the
/// logits (`softmax - onehot`).
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[target];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[target] -= 1.0;
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn identity_dense() -> Classifier {
        let mut d = Layer::dense(2, 2);
        if let Some((w, _)) = d.params_mut() {
            w.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        }
        Classifier::new(vec![d]).unwrap()
    }

    fn zeroed(mut m: Classifier) -> Classifier {
        for l in m.layers_mut() {
            if let Some((w, b)) = l.params_mut() {
                w.fill(0.0);
                b.fill(0.0);
            }
        }
        m
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let m = zeroed(Classifier::toy(1));
        let x = ImageTensor::filled(Shape::new(8, 8, 1), 0.3);
        assert_eq!(m.forward(&x).unwrap(), vec![0.0, 0.0]);
        assert_eq!(m.predict(&x).unwrap(), 0);
        let (loss, g) = m.input_grad(&x, 1).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_dense_passes_input_through() {
        let m = identity_dense();
        let x = ImageTensor::from_row(&[0.2, 0.8]).unwrap();
        assert_eq!(m.forward(&x).unwrap(), vec![0.2, 0.8]);
        assert_eq!(m.predict(&x).unwrap(), 1);
        let swapped = ImageTensor::from_row(&[0.8, 0.2]).unwrap();
        assert_eq!(m.predict(&swapped).unwrap(), 0);
    }

    #[test]
    fn uniform_logits_give_log_classes() {
        for k in [2usize, 3, 10] {
            let (loss, _) = softmax_cross_entropy(&vec![0.7; k], 0);
            assert!((loss - (k as f64).ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn shape_and_label_errors() {
        let m = Classifier::toy(1);
        let wrong = ImageTensor::zeros(Shape::new(4, 4, 1));
        assert!(matches!(m.forward(&wrong), Err(Error::ShapeMismatch { .. })));
        let x = ImageTensor::zeros(Shape::new(8, 8, 1));
        assert!(matches!(m.input_grad(&x, 2), Err(Error::InvalidLabel { .. })));
    }

    #[test]
    fn broken_chain_is_rejected() {
        let layers = vec![Layer::dense(4, 3), Layer::dense(2, 2)];
        assert!(matches!(Classifier::new(layers), Err(Error::ShapeChain(_))));
    }

    #[test]
    fn reference_topology_dims() {
        let m = Classifier::reference_cifar(0);
        assert_eq!(m.num_classes(), 10);
        assert_eq!(m.input_len(), 3072);
        assert_eq!(m.layers().last().unwrap().input_len(), 2048);
    }

    #[test]
    fn forward_is_pure() {
        let m = Classifier::toy(9);
        let x = ImageTensor::new(8, 8, 1, (0..64).map(|i| (i as f64 / 64.0).cos()).collect()).unwrap();
        let a = m.forward(&x).unwrap();
        let b = m.forward(&x).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn sharper_logits_hurt_misclassified_input() {
        let m = Classifier::toy(4);
        let x = ImageTensor::new(8, 8, 1, (0..64).map(|i| ((i * 13 % 17) as f64) / 17.0).collect()).unwrap();
        let pred = m.predict(&x).unwrap();
        let wrong = 1 - pred;
        let before = m.loss(&x, wrong).unwrap();
        let mut sharp = m.clone();
        if let Some((w, b)) = sharp.layers_mut().last_mut().unwrap().params_mut() {
            w.iter_mut().for_each(|v| *v *= 2.0);
            b.iter_mut().for_each(|v| *v *= 2.0);
        }
        let after = sharp.loss(&x, wrong).unwrap();
        assert!(after > before, "{after} <= {before}");
    }
}
