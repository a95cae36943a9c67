use crate::error::{Error, Result};
use crate::tensor::{ImageTensor, Shape};

/// Images with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    pub images: Vec<ImageTensor>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        name: impl Into<String>,
        images: Vec<ImageTensor>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidLabel { label, num_classes });
        }
        if let Some(first) = images.first() {
            for img in &images[1..] {
                first.check_same_shape(img)?;
            }
        }
        Ok(Self {
            name: name.into(),
            images,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image_shape(&self) -> Option<Shape> {
        self.images.first().map(ImageTensor::shape)
    }

    /// The examples in `range`, keeping the name with a suffix.
    pub fn slice(&self, start: usize, len: usize) -> LabeledDataset {
        let end = (start + len).min(self.len());
        let start = start.min(end);
        LabeledDataset {
            name: format!("{}[{start}..{end}]", self.name),
            images: self.images[start..end].to_vec(),
            labels: self.labels[start..end].to_vec(),
            num_classes: self.num_classes,
        }
    }
}
