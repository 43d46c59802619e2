//! Row-major sample blocks with the affine scale that maps stored values back
//! to the units the data arrived in.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// `original = stored * factor + offset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub offset: f64,
    pub factor: f64,
}

impl Default for Scale {
    fn default() -> Self {
        Scale::IDENTITY
    }
}

impl Scale {
    pub const IDENTITY: Scale = Scale {
        offset: 0.0,
        factor: 1.0,
    };

    pub fn to_original(&self, stored: f64) -> f64 {
        stored * self.factor + self.offset
    }

    pub fn to_stored(&self, original: f64) -> f64 {
        (original - self.offset) / self.factor
    }

    /// Squared-error distortions scale with the square of the factor.
    pub fn distortion_to_original(&self, d: f64) -> f64 {
        d * self.factor * self.factor
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    scale: Scale,
}

impl SampleMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows * cols != values.len() {
            return Err(Error::shape(
                "sample_matrix",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite sample value at row {}, column {}",
                i / cols.max(1),
                i % cols.max(1)
            )));
        }
        Ok(SampleMatrix {
            rows,
            cols,
            values,
            scale: Scale::IDENTITY,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("sample_matrix", "ragged rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn empty(cols: usize) -> Self {
        SampleMatrix {
            rows: 0,
            cols,
            values: Vec::new(),
            scale: Scale::IDENTITY,
        }
    }

    pub fn with_scale(mut self, scale: Scale) -> Self {
        self.scale = scale;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks(0) panics, and a zero-width matrix has no meaningful rows anyway
        self.values
            .chunks(self.cols.max(1))
            .take(if self.cols == 0 { 0 } else { self.rows })
    }

    /// Rows selected by index, keeping the scale.
    pub fn select_rows(&self, indices: &[usize]) -> SampleMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        SampleMatrix {
            rows: indices.len(),
            cols: self.cols,
            values,
            scale: self.scale,
        }
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.cols];
        if self.rows == 0 {
            return mean;
        }
        for row in self.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= self.rows as f64);
        mean
    }

    /// Empirical `E||X - mean||²`: the squared-error distortion reachable at zero rate.
    pub fn zero_rate_distortion(&self) -> f64 {
        if self.rows == 0 {
            return 0.0;
        }
        let mean = self.column_means();
        let total: f64 = self
            .iter_rows()
            .map(|r| r.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>())
            .sum();
        total / self.rows as f64
    }

    /// Values mapped back through the scale.
    pub fn unscaled(&self) -> SampleMatrix {
        SampleMatrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| self.scale.to_original(v)).collect(),
            scale: Scale::IDENTITY,
        }
    }

    /// Affinely rescales every coordinate into `[0, 1]` using the global min/max,
    /// recording the map so distortions can be reported in original units.
    pub fn normalized_unit_range(&self) -> SampleMatrix {
        let original = self.unscaled();
        let lo = original.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = original.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let factor = if hi > lo { hi - lo } else { 1.0 };
        let offset = if lo.is_finite() { lo } else { 0.0 };
        let scale = Scale { offset, factor };
        SampleMatrix {
            rows: self.rows,
            cols: self.cols,
            values: original.values.iter().map(|&v| scale.to_stored(v)).collect(),
            scale,
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.rows, self.cols, self.values.clone()).expect("sample matrix has a consistent shape")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (r, c) = t.dims2()?;
        Self::new(r, c, t.data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_rate_distortion_of_constant_rows() {
        let m = SampleMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(m.zero_rate_distortion(), 0.0);
        let m = SampleMatrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(m.zero_rate_distortion(), 1.0);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(SampleMatrix::new(1, 2, vec![0.0, f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn scale_round_trips(x in -1e6f64..1e6, offset in -1e3f64..1e3, factor in 1e-3f64..1e3) {
            let s = Scale { offset, factor };
            let back = s.to_original(s.to_stored(x));
            prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(1.0) * 10.0);
        }
    }
}
