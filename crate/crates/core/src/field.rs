//! Scalar fields over the interior nodes of a [`Domain`](crate::geometry::Domain).

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One scalar per interior node, in the domain's lexicographic node order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len] }
    }

    pub fn constant(len: usize, value: f64) -> Self {
        Self { values: vec![value; len] }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self { values }
    }

    /// Like [`from_vec`](Self::from_vec) but rejects non-finite entries and wrong lengths.
    pub fn checked(values: Vec<f64>, expected_len: usize) -> Result<Self> {
        if values.len() != expected_len {
            return Err(Error::DimensionMismatch { expected: expected_len, got: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.values.iter()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self { values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sup-norm of `self - other`.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Midpoint quadrature `Σ v h²`.
    pub fn integrate(&self, h: f64) -> f64 {
        self.values.iter().sum::<f64>() * h * h
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl Index<usize> for GridFunction {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl IndexMut<usize> for GridFunction {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.values[i]
    }
}

impl From<Vec<f64>> for GridFunction {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checked_rejects_nan_and_length() {
        assert!(matches!(
            GridFunction::checked(vec![1.0, f64::NAN], 2),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(matches!(
            GridFunction::checked(vec![1.0], 2),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn norms() {
        let a = GridFunction::from_vec(vec![1.0, -3.0, 2.0]);
        let b = GridFunction::from_vec(vec![1.5, -3.0, 0.0]);
        assert_eq!(a.max_abs(), 3.0);
        assert_eq!(a.sup_distance(&b), 2.0);
        assert_eq!(a.min(), -3.0);
        assert_eq!(a.integrate(0.5), 0.0);
    }
}
