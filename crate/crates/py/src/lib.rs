//! Python bindings. Images cross the boundary as `Tensor` objects holding a
//! flat channel-major buffer.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robust_uap::attacks::{run_attack as run, Algorithm, AttackConfig};
use robust_uap::classifier::{accuracy, load_model, save_model, train_classifier};
use robust_uap::estimator::{self, EstimatorConfig};
use robust_uap::harness::{gen_toy_dataset, load_cifar10};
use robust_uap::transforms::{apply_transform, sample_transforms, transform_input_grad};
use robust_uap::{ImageTensor, LabeledDataset, NormOrder, NormSpec, TrainConfig};

fn py_err(e: robust_uap::Error) -> PyErr {
    let msg = format!("{}: {e}", e.code());
    match e.root() {
        robust_uap::Error::Io { .. } => PyIOError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for robust_uap::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn order(name: &str) -> PyResult<NormOrder> {
    name.parse().py()
}

fn norm_spec(name: &str, epsilon: f64) -> PyResult<NormSpec> {
    NormSpec::new(order(name)?, epsilon).py()
}

#[pyclass(name = "Tensor", module = "ruap", skip_from_py_object)]
#[derive(Clone)]
struct Tensor(ImageTensor);

#[pymethods]
impl Tensor {
    #[new]
    fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> PyResult<Self> {
        ImageTensor::new(height, width, channels, data).py().map(Tensor)
    }

    #[staticmethod]
    fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Tensor(ImageTensor::zeros(robust_uap::Shape::new(height, width, channels)))
    }

    /// `(height, width, channels)`.
    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.0.height(), self.0.width(), self.0.channels())
    }

    #[getter]
    fn data(&self) -> Vec<f64> {
        self.0.data().to_vec()
    }

    fn at(&self, channel: usize, row: usize, col: usize) -> PyResult<f64> {
        if channel >= self.0.channels() || row >= self.0.height() || col >= self.0.width() {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.0.at(channel, row, col))
    }

    #[pyo3(signature = (order = "l2"))]
    fn norm(&self, order: &str) -> PyResult<f64> {
        self.0.lp_norm(self::order(order)?).py()
    }

    fn project(&self, order: &str, epsilon: f64) -> PyResult<Tensor> {
        self.0.project(&norm_spec(order, epsilon)?).py().map(Tensor)
    }

    fn scaled(&self, k: f64) -> Tensor {
        Tensor(self.0.scaled(k))
    }

    fn __add__(&self, other: PyRef<'_, Tensor>) -> PyResult<Tensor> {
        self.0.add(&other.0).py().map(Tensor)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __eq__(&self, other: PyRef<'_, Tensor>) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        let (h, w, c) = self.shape();
        format!("Tensor(height={h}, width={w}, channels={c})")
    }
}

/// One concrete transformation.
#[pyclass(name = "Sample", module = "ruap", skip_from_py_object, get_all)]
#[derive(Clone)]
struct Sample {
    theta_deg: f64,
    tx: f64,
    ty: f64,
    scale_p: f64,
    shear_m: f64,
    contrast_alpha: f64,
    brightness_beta: f64,
}

impl Sample {
    fn inner(&self) -> robust_uap::TransformSample {
        robust_uap::TransformSample {
            theta_deg: self.theta_deg,
            tx: self.tx,
            ty: self.ty,
            scale_p: self.scale_p,
            shear_m: self.shear_m,
            contrast_alpha: self.contrast_alpha,
            brightness_beta: self.brightness_beta,
        }
    }
}

impl From<robust_uap::TransformSample> for Sample {
    fn from(s: robust_uap::TransformSample) -> Self {
        Sample {
            theta_deg: s.theta_deg,
            tx: s.tx,
            ty: s.ty,
            scale_p: s.scale_p,
            shear_m: s.shear_m,
            contrast_alpha: s.contrast_alpha,
            brightness_beta: s.brightness_beta,
        }
    }
}

#[pymethods]
impl Sample {
    #[new]
    #[pyo3(signature = (theta_deg = 0.0, tx = 0.0, ty = 0.0, scale_p = 0.0, shear_m = 0.0, contrast_alpha = 1.0, brightness_beta = 0.0))]
    fn new(theta_deg: f64, tx: f64, ty: f64, scale_p: f64, shear_m: f64, contrast_alpha: f64, brightness_beta: f64) -> Self {
        Sample { theta_deg, tx, ty, scale_p, shear_m, contrast_alpha, brightness_beta }
    }

    fn apply(&self, image: PyRef<'_, Tensor>) -> PyResult<Tensor> {
        apply_transform(&image.0, &self.inner()).py().map(Tensor)
    }

    /// Pull an upstream gradient on the output back to the input.
    fn input_grad(&self, upstream: PyRef<'_, Tensor>) -> PyResult<Tensor> {
        transform_input_grad(&upstream.0, &self.inner()).py().map(Tensor)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner())
    }
}

/// Parameter ranges, e.g. `TransformSet("R(10), T(2, 2), B(2, 0.001)")`.
#[pyclass(name = "TransformSet", module = "ruap", skip_from_py_object)]
#[derive(Clone)]
struct TransformSet(robust_uap::TransformSet);

#[pymethods]
impl TransformSet {
    #[new]
    #[pyo3(signature = (spec = ""))]
    fn new(spec: &str) -> PyResult<Self> {
        if spec.trim().is_empty() {
            return Ok(TransformSet(robust_uap::TransformSet::identity()));
        }
        spec.parse().py().map(TransformSet)
    }

    fn sample(&self, n: usize, seed: u64) -> Vec<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample_transforms(&self.0, n, &mut rng).into_iter().map(Sample::from).collect()
    }

    fn contains(&self, sample: PyRef<'_, Sample>) -> bool {
        self.0.contains(&sample.inner())
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("TransformSet({:?})", self.0.to_string())
    }
}

#[pyclass(name = "Dataset", module = "ruap", skip_from_py_object)]
struct Dataset(LabeledDataset);

#[pymethods]
impl Dataset {
    #[staticmethod]
    #[pyo3(signature = (n, seed = 0))]
    fn toy(n: usize, seed: u64) -> PyResult<Self> {
        gen_toy_dataset(n, seed).py().map(Dataset)
    }

    #[staticmethod]
    fn cifar10(path: &str) -> PyResult<Self> {
        load_cifar10(path).py().map(Dataset)
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name.clone()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.0.labels.clone()
    }

    #[getter]
    fn images(&self) -> Vec<Tensor> {
        self.0.images.iter().cloned().map(Tensor).collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "Classifier", module = "ruap", skip_from_py_object)]
#[derive(Clone)]
struct Classifier(robust_uap::Classifier);

#[pymethods]
impl Classifier {
    /// Untrained small CNN for 8x8 single-channel inputs.
    #[staticmethod]
    #[pyo3(signature = (seed = 0))]
    fn toy(seed: u64) -> Self {
        Classifier(robust_uap::Classifier::toy(seed))
    }

    /// Untrained reference CNN for 32x32x3 inputs.
    #[staticmethod]
    #[pyo3(signature = (seed = 0))]
    fn cifar(seed: u64) -> Self {
        Classifier(robust_uap::Classifier::reference_cifar(seed))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        load_model(path).py().map(Classifier)
    }

    #[staticmethod]
    #[pyo3(signature = (data, epochs = 10, learning_rate = 0.01, momentum = 0.9, batch_size = 32, seed = 0))]
    fn train(
        py: Python<'_>,
        data: PyRef<'_, Dataset>,
        epochs: usize,
        learning_rate: f64,
        momentum: f64,
        batch_size: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = TrainConfig { learning_rate, momentum, epochs, batch_size, seed };
        let data = &data.0;
        py.detach(|| train_classifier(data, &cfg)).py().map(Classifier)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_model(&self.0, path).py()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.0.num_classes()
    }

    fn logits(&self, x: PyRef<'_, Tensor>) -> PyResult<Vec<f64>> {
        self.0.forward(&x.0).py()
    }

    fn predict(&self, x: PyRef<'_, Tensor>) -> PyResult<usize> {
        self.0.predict(&x.0).py()
    }

    /// Cross-entropy against `target` and its gradient with respect to `x`.
    fn input_grad(&self, x: PyRef<'_, Tensor>, target: usize) -> PyResult<(f64, Tensor)> {
        self.0.input_grad(&x.0, target).py().map(|(l, g)| (l, Tensor(g)))
    }

    fn accuracy(&self, data: PyRef<'_, Dataset>) -> PyResult<f64> {
        accuracy(&self.0, &data.0).py()
    }
}

fn tensors(images: &[PyRef<'_, Tensor>]) -> Vec<ImageTensor> {
    images.iter().map(|t| t.0.clone()).collect()
}

#[pyfunction]
fn chernoff_sample_count(psi: f64, phi: f64) -> PyResult<usize> {
    estimator::chernoff_sample_count(psi, phi).py()
}

#[pyfunction]
fn argmax(scores: Vec<f64>) -> PyResult<usize> {
    robust_uap::argmax_label(&scores).py()
}

/// Fraction of images whose prediction changes under `x + u`.
#[pyfunction]
fn asr_u(model: PyRef<'_, Classifier>, images: Vec<PyRef<'_, Tensor>>, u: PyRef<'_, Tensor>) -> PyResult<f64> {
    estimator::asr_u(&model.0, &tensors(&images), &u.0).py()
}

/// Monte-Carlo robust success rate of `u` at threshold `gamma`.
#[pyfunction]
#[pyo3(signature = (model, images, transforms, u, gamma, n, seed, norm = "l2", epsilon = 1.0))]
#[allow(clippy::too_many_arguments)]
fn estimate_robustness(
    model: PyRef<'_, Classifier>,
    images: Vec<PyRef<'_, Tensor>>,
    transforms: PyRef<'_, TransformSet>,
    u: PyRef<'_, Tensor>,
    gamma: f64,
    n: usize,
    seed: u64,
    norm: &str,
    epsilon: f64,
) -> PyResult<f64> {
    let images = tensors(&images);
    let clean = estimator::clean_predictions(&model.0, &images).py()?;
    let eps = norm_spec(norm, epsilon)?;
    estimator::estimate_robustness_seeded(&model.0, &images, &clean, &transforms.0, &u.0, gamma, n, seed, &eps).py()
}

/// Every metric from one shared pool of transformations, as a dict.
#[pyfunction]
#[pyo3(signature = (model, images, transforms, u, gammas, norm = "l2", epsilon = 1.0, psi = 0.1, phi = 0.05, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn evaluate<'py>(
    py: Python<'py>,
    model: PyRef<'_, Classifier>,
    images: Vec<PyRef<'_, Tensor>>,
    transforms: PyRef<'_, TransformSet>,
    u: PyRef<'_, Tensor>,
    gammas: Vec<f64>,
    norm: &str,
    epsilon: f64,
    psi: f64,
    phi: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = EstimatorConfig { psi, phi, seed, ..EstimatorConfig::default() };
    let rep = estimator::full_report(&model.0, &tensors(&images), &transforms.0, &u.0, &gammas, &cfg, &norm_spec(norm, epsilon)?).py()?;
    let out = PyDict::new(py);
    out.set_item("n_samples", rep.n_samples)?;
    out.set_item("asr_u_clean", rep.asr_u_clean)?;
    out.set_item("avg_asr_u", rep.avg_asr_u)?;
    out.set_item("norm_violations", rep.norm_violations)?;
    let rates: Vec<(f64, f64)> = rep.asr_r_by_gamma.iter().map(|g| (g.gamma, g.asr_r)).collect();
    out.set_item("asr_r", rates)?;
    Ok(out)
}

/// Runs one attack; returns the perturbation and the per-epoch trace as CSV.
#[pyfunction]
#[pyo3(signature = (algorithm, model, images, transforms, norm = "l2", epsilon = 1.0, **options))]
fn attack(
    py: Python<'_>,
    algorithm: &str,
    model: PyRef<'_, Classifier>,
    images: Vec<PyRef<'_, Tensor>>,
    transforms: PyRef<'_, TransformSet>,
    norm: &str,
    epsilon: f64,
    options: Option<&Bound<'_, PyDict>>,
) -> PyResult<(Tensor, String)> {
    let algo: Algorithm = algorithm.parse().py()?;
    let mut cfg = AttackConfig::new(norm_spec(norm, epsilon)?);
    if let Some(opts) = options {
        for (k, v) in opts.iter() {
            let key: String = k.extract()?;
            match key.as_str() {
                "gamma" => cfg.gamma = v.extract()?,
                "zeta" => cfg.zeta = v.extract()?,
                "step_size" => cfg.step_size = v.extract()?,
                "momentum" => cfg.momentum = v.extract()?,
                "learning_rate" => cfg.learning_rate = v.extract()?,
                "batch_size" => cfg.batch_size = v.extract()?,
                "max_inner_iters" => cfg.max_inner_iters = v.extract()?,
                "max_epochs" => cfg.max_epochs = v.extract()?,
                "lambda_penalty" => cfg.lambda_penalty = v.extract()?,
                "transforms_per_batch" => cfg.transforms_per_batch = v.extract()?,
                "overshoot" => cfg.overshoot = v.extract()?,
                "psi" => cfg.estimator.psi = v.extract()?,
                "phi" => cfg.estimator.phi = v.extract()?,
                "seed" => {
                    cfg.seed = v.extract()?;
                    cfg.estimator.seed = cfg.seed;
                }
                other => return Err(PyValueError::new_err(format!("unknown option `{other}`"))),
            }
        }
    }
    cfg.estimator.gamma = cfg.gamma;
    let images = tensors(&images);
    let (model, set) = (&model.0, &transforms.0);
    let out = py.detach(|| run(algo, model, &images, set, &cfg)).py()?;
    Ok((Tensor(out.perturbation), out.trace.to_csv()))
}

#[pymodule]
fn ruap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Tensor>()?;
    m.add_class::<Sample>()?;
    m.add_class::<TransformSet>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Classifier>()?;
    m.add_function(wrap_pyfunction!(chernoff_sample_count, m)?)?;
    m.add_function(wrap_pyfunction!(argmax, m)?)?;
    m.add_function(wrap_pyfunction!(asr_u, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_robustness, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(attack, m)?)?;
    m.add("ATTACKS", Algorithm::ALL.iter().map(|a| a.key()).collect::<Vec<_>>())?;
    Ok(())
}
