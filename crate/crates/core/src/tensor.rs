use crate::error::{Error, Result};

/// Dense row-major `f32` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidShape {
                name: "<tensor>".into(),
                shape,
            });
        }
        if expected != data.len() {
            return Err(Error::ElementCount {
                name: "<tensor>".into(),
                expected,
                actual: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Contiguous slice of the last axis at the given leading indices.
    pub fn row(&self, leading: &[usize]) -> &[f32] {
        debug_assert_eq!(leading.len() + 1, self.shape.len());
        let mut offset = 0;
        for (i, &idx) in leading.iter().enumerate() {
            offset = offset * self.shape[i] + idx;
        }
        let width = *self.shape.last().unwrap();
        &self.data[offset * width..(offset + 1) * width]
    }

    pub(crate) fn expect_shape(&self, name: &str, expected: &[usize]) -> Result<()> {
        if self.shape != expected {
            return Err(Error::ShapeMismatch {
                name: name.to_string(),
                expected: format!("{expected:?}"),
                actual: self.shape.clone(),
            });
        }
        Ok(())
    }

    pub(crate) fn expect_non_negative(&self, name: &str) -> Result<()> {
        match self.data.iter().position(|&v| v < 0.0) {
            Some(index) => Err(Error::NegativeAttention {
                name: name.to_string(),
                index,
            }),
            None => Ok(()),
        }
    }
}
