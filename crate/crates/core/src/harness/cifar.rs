use std::path::Path;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::{ImageTensor, Shape};

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_CLASSES: usize = 10;
/// One label byte followed by the red, green and blue planes.
pub const CIFAR_RECORD: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;

/// Parses concatenated CIFAR-10 binary records. Pixels are scaled into
/// `[0, 1]`; record order is kept.
pub fn parse_cifar10(name: &str, bytes: &[u8]) -> Result<LabeledDataset> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::TruncatedRecord(bytes.len()));
    }
    let shape = Shape::new(CIFAR_SIDE, CIFAR_SIDE, 3);
    let mut images = Vec::with_capacity(bytes.len() / CIFAR_RECORD);
    let mut labels = Vec::with_capacity(images.capacity());
    for (record, chunk) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        let label = chunk[0];
        if usize::from(label) >= CIFAR_CLASSES {
            return Err(Error::BadLabel { label, record });
        }
        let data = chunk[1..].iter().map(|&b| f64::from(b) / 255.0).collect();
        images.push(ImageTensor::from_shape(shape, data)?);
        labels.push(usize::from(label));
    }
    LabeledDataset::new(name, images, labels, CIFAR_CLASSES)
}

pub fn load_cifar10(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_name().map_or_else(|| "cifar10".to_string(), |n| n.to_string_lossy().into_owned());
    parse_cifar10(&name, &bytes).map_err(|e| e.context(path.display().to_string()))
}

/// Loads several batch files and concatenates them in order.
pub fn load_cifar10_files<P: AsRef<Path>>(paths: &[P]) -> Result<LabeledDataset> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut names = Vec::new();
    for p in paths {
        let part = load_cifar10(p)?;
        names.push(part.name);
        images.extend(part.images);
        labels.extend(part.labels);
    }
    LabeledDataset::new(names.join("+"), images, labels, CIFAR_CLASSES)
}

/// Inverse of [`parse_cifar10`] for datasets whose pixels are multiples of
/// 1/255.
pub fn to_cifar10_bytes(data: &LabeledDataset) -> Result<Vec<u8>> {
    let shape = Shape::new(CIFAR_SIDE, CIFAR_SIDE, 3);
    let mut out = Vec::with_capacity(data.len() * CIFAR_RECORD);
    for (img, &label) in data.images.iter().zip(&data.labels) {
        if img.shape() != shape {
            return Err(Error::ShapeMismatch {
                expected: shape.to_string(),
                actual: img.shape().to_string(),
            });
        }
        let label = u8::try_from(label)
            .ok()
            .filter(|&l| usize::from(l) < CIFAR_CLASSES)
            .ok_or(Error::InvalidLabel {
                label,
                num_classes: CIFAR_CLASSES,
            })?;
        out.push(label);
        for &v in img.data() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("pixel {v} outside [0, 1]")));
            }
            out.push((v * 255.0).round() as u8);
        }
    }
    Ok(out)
}
