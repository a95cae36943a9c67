//! Dense image tensors, l_p norms and l_p-ball projection.
//!
//! Every image, perturbation and gradient in the crate is an [`ImageTensor`]:
//! a flat `f64` buffer in channel-major order (all of channel 0 row by row,
//! then channel 1, ...), which is also the CIFAR-10 record layout.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormOrder {
    L2,
    LInf,
}

impl fmt::Display for NormOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormOrder::L2 => f.write_str("l2"),
            NormOrder::LInf => f.write_str("linf"),
        }
    }
}

impl std::str::FromStr for NormOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l2" | "2" => Ok(NormOrder::L2),
            "linf" | "inf" | "l_inf" => Ok(NormOrder::LInf),
            other => Err(Error::invalid(format!("unknown norm order `{other}`"))),
        }
    }
}

/// An l_p ball: norm order plus radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSpec {
    order: NormOrder,
    epsilon: f64,
}

impl NormSpec {
    pub fn new(order: NormOrder, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be > 0, got {epsilon}")));
        }
        Ok(Self { order, epsilon })
    }

    pub fn l2(epsilon: f64) -> Result<Self> {
        Self::new(NormOrder::L2, epsilon)
    }

    pub fn linf(epsilon: f64) -> Result<Self> {
        Self::new(NormOrder::LInf, epsilon)
    }

    pub fn order(&self) -> NormOrder {
        self.order
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_shape(Shape::new(height, width, channels), data)
    }

    pub fn from_shape(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::invalid(format!("tensor dimensions must be positive, got {shape}")));
        }
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values for {shape}", shape.len()),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        assert!(!shape.is_empty(), "tensor dimensions must be positive");
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    /// A `1 x n x 1` tensor, convenient for vector-shaped inputs.
    pub fn from_row(values: &[f64]) -> Result<Self> {
        Self::new(1, values.len(), 1, values.to_vec())
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, channel: usize, row: usize, col: usize) -> usize {
        (channel * self.shape.height + row) * self.shape.width + col
    }

    #[inline]
    pub fn at(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[self.index(channel, row, col)]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite)
        }
    }

    pub fn check_same_shape(&self, other: &ImageTensor) -> Result<()> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: self.shape.to_string(),
                actual: other.shape.to_string(),
            })
        }
    }

    /// Elementwise sum. No clamping is applied.
    pub fn add(&self, other: &ImageTensor) -> Result<ImageTensor> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(ImageTensor {
            shape: self.shape,
            data,
        })
    }

    pub fn sub(&self, other: &ImageTensor) -> Result<ImageTensor> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(ImageTensor {
            shape: self.shape,
            data,
        })
    }

    /// `self += k * other`
    pub fn add_scaled(&mut self, k: f64, other: &ImageTensor) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> ImageTensor {
        self.map(|v| k * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageTensor {
        ImageTensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise sign with `sign(0) = 0`.
    pub fn signum(&self) -> ImageTensor {
        self.map(|v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 })
    }

    pub fn clamped(&self, lo: f64, hi: f64) -> ImageTensor {
        self.map(|v| v.clamp(lo, hi))
    }

    pub fn dot(&self, other: &ImageTensor) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn lp_norm(&self, order: NormOrder) -> Result<f64> {
        self.check_finite()?;
        Ok(match order {
            NormOrder::L2 => self.data.iter().map(|v| v * v).sum::<f64>().sqrt(),
            NormOrder::LInf => self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        })
    }

    /// Euclidean projection onto the ball described by `spec`.
    ///
    /// Points already inside the ball come back unchanged, so the projection
    /// is idempotent bit-for-bit.
    pub fn project(&self, spec: &NormSpec) -> Result<ImageTensor> {
        let eps = spec.epsilon();
        match spec.order() {
            NormOrder::LInf => {
                self.check_finite()?;
                Ok(self.clamped(-eps, eps))
            }
            NormOrder::L2 => {
                let norm = self.lp_norm(NormOrder::L2)?;
                if norm <= eps {
                    return Ok(self.clone());
                }
                // Rounding in eps / norm can leave the result a few ulps
                // outside the ball; shrink until it is inside.
                let mut factor = eps / norm;
                loop {
                    let out = self.scaled(factor);
                    if out.lp_norm(NormOrder::L2)? <= eps {
                        return Ok(out);
                    }
                    factor = f64::from_bits(factor.to_bits() - 1);
                }
            }
        }
    }
}

pub fn lp_norm(v: &ImageTensor, order: NormOrder) -> Result<f64> {
    v.lp_norm(order)
}

pub fn project_lp(v: &ImageTensor, spec: &NormSpec) -> Result<ImageTensor> {
    v.project(spec)
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax_label(scores: &[f64]) -> Result<usize> {
    let (first, rest) = scores.split_first().ok_or(Error::EmptyScores)?;
    if !scores.iter().all(|s| s.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut best = 0;
    let mut best_score = *first;
    for (i, &s) in rest.iter().enumerate() {
        if s > best_score {
            best = i + 1;
            best_score = s;
        }
    }
    Ok(best)
}
