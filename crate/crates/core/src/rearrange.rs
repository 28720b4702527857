//! Feature-matrix rearrangement.
//!
//! The D × N MFCC matrix is cut along time into slices of `slice_len` frames,
//! the last slice is padded to full width, every slice is flattened
//! time-major (element `(d, t)` lands at `t·D + d`) and the flattened slices
//! are stacked. The stacked matrix is finally flattened slice-major and
//! truncated or padded to `max_dim` elements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mfcc::FeatureMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PadSide {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Concatenate all slices into a single row.
    X,
    /// One row per slice.
    Y,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RearrangeConfig {
    pub slice_len: usize,
    pub pad_side: PadSide,
    pub pad_value: f64,
    pub recombine_axis: Axis,
    pub max_dim: usize,
}

impl Default for RearrangeConfig {
    fn default() -> Self {
        Self {
            slice_len: 150,
            pad_side: PadSide::Right,
            pad_value: 0.0,
            recombine_axis: Axis::Y,
            max_dim: 2100,
        }
    }
}

impl RearrangeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.slice_len == 0 {
            return Err(Error::config("rearrange.slice_len", "must be ≥ 1"));
        }
        if self.max_dim == 0 {
            return Err(Error::config("rearrange.max_dim", "must be ≥ 1"));
        }
        if !self.pad_value.is_finite() {
            return Err(Error::config("rearrange.pad_value", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RearrangedMatrix {
    pub values: Matrix,
    /// Slice count m = ⌈N / slice_len⌉.
    pub slices: usize,
    /// (D, N) of the source feature matrix.
    pub source_dims: (usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CappedVector {
    pub values: Vec<f64>,
    /// Length of the rearranged data before truncation or padding.
    pub original_len: usize,
}

/// Splits the columns of `m` into consecutive groups of `slice_len`; the last
/// group may be narrower.
pub fn slice_matrix(m: &FeatureMatrix, slice_len: usize) -> Vec<Matrix> {
    assert!(slice_len >= 1, "slice_len must be positive");
    let (d, n) = (m.coefficients(), m.frames());
    (0..n.div_ceil(slice_len))
        .map(|s| {
            let start = s * slice_len;
            let width = slice_len.min(n - start);
            Matrix::from_fn(d, width, |r, c| m.get(r, start + c))
        })
        .collect()
}

pub fn pad_slice(slice: &Matrix, slice_len: usize, side: PadSide, value: f64) -> Result<Matrix> {
    let width = slice.cols();
    if width > slice_len {
        return Err(Error::Shape(format!(
            "slice has {width} frames, wider than slice length {slice_len}"
        )));
    }
    let offset = match side {
        PadSide::Right => 0,
        PadSide::Left => slice_len - width,
    };
    Ok(Matrix::from_fn(slice.rows(), slice_len, |r, c| {
        if c >= offset && c < offset + width {
            slice.get(r, c - offset)
        } else {
            value
        }
    }))
}

/// Time-major flattening: all D coefficients of frame 0, then frame 1, ...
pub fn flatten_slice(padded: &Matrix) -> Vec<f64> {
    padded.transpose().into_vec()
}

pub fn recombine(flattened: &[Vec<f64>], axis: Axis) -> Result<Matrix> {
    let Some(first) = flattened.first() else {
        return Err(Error::Shape("nothing to recombine".into()));
    };
    let len = first.len();
    if let Some(bad) = flattened.iter().position(|f| f.len() != len) {
        return Err(Error::Shape(format!(
            "flattened slice {bad} has length {}, expected {len}",
            flattened[bad].len()
        )));
    }
    let data: Vec<f64> = flattened.concat();
    Ok(match axis {
        Axis::Y => Matrix::from_vec(flattened.len(), len, data),
        Axis::X => Matrix::from_vec(1, data.len(), data),
    })
}

pub fn rearrange(m: &FeatureMatrix, config: &RearrangeConfig) -> Result<RearrangedMatrix> {
    config.validate()?;
    let flattened = slice_matrix(m, config.slice_len)
        .iter()
        .map(|s| pad_slice(s, config.slice_len, config.pad_side, config.pad_value).map(|p| flatten_slice(&p)))
        .collect::<Result<Vec<_>>>()?;
    let slices = flattened.len();
    Ok(RearrangedMatrix {
        values: recombine(&flattened, config.recombine_axis)?,
        slices,
        source_dims: (m.coefficients(), m.frames()),
    })
}

/// Flattens the rearranged matrix row-major, then truncates to `max_dim` or
/// pads the tail with `pad_value`.
pub fn cap_vector(rearranged: &RearrangedMatrix, max_dim: usize, pad_value: f64) -> CappedVector {
    let flat = rearranged.values.as_slice();
    let mut values = Vec::with_capacity(max_dim);
    values.extend_from_slice(&flat[..flat.len().min(max_dim)]);
    values.resize(max_dim, pad_value);
    CappedVector {
        values,
        original_len: flat.len(),
    }
}

pub fn rearrange_pipeline(m: &FeatureMatrix, config: &RearrangeConfig) -> Result<CappedVector> {
    let r = rearrange(m, config)?;
    Ok(cap_vector(&r, config.max_dim, config.pad_value))
}
