use ndarray::{Array2, Array3, ArrayView2};

use crate::error::{Error, Result};

/// Side length of the square network input.
pub const IMAGE_SIZE: usize = 224;

/// A normalized RGB image, stored channel-first as `[3, 224, 224]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageInput {
    pixels: Array3<f32>,
}

impl ImageInput {
    pub fn new(pixels: Array3<f32>) -> Result<Self> {
        let expected = vec![3, IMAGE_SIZE, IMAGE_SIZE];
        if pixels.shape() != expected.as_slice() {
            return Err(Error::WrongInputShape {
                expected,
                got: pixels.shape().to_vec(),
            });
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { pixels })
    }

    /// Builds from a row-major `[224, 224, 3]` array.
    pub fn from_hwc(pixels: Array3<f32>) -> Result<Self> {
        let chw = pixels.permuted_axes([2, 0, 1]).as_standard_layout().into_owned();
        Self::new(chw)
    }

    pub fn pixels(&self) -> &Array3<f32> {
        &self.pixels
    }
}

/// Backbone output: `L` tokens of equal width.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    tokens: Array2<f32>,
}

impl FeatureSequence {
    pub fn new(tokens: Array2<f32>) -> Result<Self> {
        if tokens.nrows() == 0 || tokens.ncols() == 0 {
            return Err(Error::EmptyInput);
        }
        if let Some(i) = tokens.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i / tokens.ncols()));
        }
        Ok(Self { tokens })
    }

    pub fn tokens(&self) -> ArrayView2<'_, f32> {
        self.tokens.view()
    }

    pub fn len(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.tokens.ncols()
    }

    pub fn into_inner(self) -> Array2<f32> {
        self.tokens
    }
}
