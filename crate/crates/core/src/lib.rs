//! Universal adversarial perturbations that survive semantic transformations.
//!
//! The crate bundles everything needed to generate and evaluate them at desk
//! scale:
//!
//! - [`tensor`] for image tensors, l_p norms, projection onto the l_p ball;
//! - [`transforms`] for rotation/scale/shear/translation/contrast/brightness
//!   with bilinear resampling and exact pixel gradients;
//! - [`classifier`] for a small CNN with hand-written backprop;
//! - [`estimator`] for Monte-Carlo robust success rates with Hoeffding sample
//!   sizes;
//! - [`attacks`] for `StandardUAP`, `SGD`, `StandardUAP_RP` and `RobustUAP`;
//! - [`harness`] for CIFAR-10 / synthetic datasets, experiment configs, reports.

pub mod attacks;
pub mod classifier;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod gradcheck;
pub mod harness;
pub mod tensor;
pub mod transforms;

pub use classifier::{Classifier, TrainConfig};
pub use dataset::LabeledDataset;
pub use error::{Error, Result};
pub use estimator::{EstimatorConfig, RobustnessReport};
pub use tensor::{argmax_label, lp_norm, project_lp, ImageTensor, NormOrder, NormSpec, Shape};
pub use transforms::{AugmentedMatrix, TransformSample, TransformSet};
