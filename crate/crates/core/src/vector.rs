//! Dense double-precision parameter vectors.
//!
//! [`ModelVector`] carries every vector-valued quantity of a run: parameters,
//! perturbations, stochastic gradients and running averages. Constructors
//! reject non-finite entries; the arithmetic helpers are unchecked and the
//! solver and optimizer step re-validate their outputs with
//! [`ModelVector::ensure_finite`].

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelVector(Vec<f64>);

impl ModelVector {
    /// Builds a vector, rejecting empty input and non-finite entries.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidInput("vector must have dim >= 1".into()));
        }
        let v = Self(entries);
        v.ensure_finite("vector")?;
        Ok(v)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        Self(vec![value; dim])
    }

    /// Wraps entries without validation. Callers must guarantee finiteness.
    pub(crate) fn from_vec_unchecked(entries: Vec<f64>) -> Self {
        Self(entries)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        match self.0.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::NumericOverflow(format!(
                "{what}: entry {i} is {}",
                self.0[i]
            ))),
        }
    }

    pub fn ensure_dim(&self, expected: usize, what: &str) -> Result<()> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(dim_mismatch(what, expected, self.dim()))
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn scale(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + alpha * b)
    }

    pub fn hadamard(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }
}

impl Index<usize> for ModelVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for ModelVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ModelVector> for Vec<f64> {
    fn from(v: ModelVector) -> Self {
        v.0
    }
}

/// Shorthand for building vectors in tests and examples.
///
/// Panics on empty or non-finite input.
pub fn mv(entries: &[f64]) -> ModelVector {
    ModelVector::new(entries.to_vec()).expect("finite, non-empty vector")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(ModelVector::new(vec![]).is_err());
        assert!(ModelVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(ModelVector::new(vec![f64::INFINITY]).is_err());
        assert!(ModelVector::new(vec![0.0, -2.0]).is_ok());
    }

    #[test]
    fn basic_arithmetic() {
        let a = mv(&[3.0, 4.0]);
        let b = mv(&[1.0, -1.0]);
        assert_eq!(a.norm(), 5.0);
        assert_eq!(a.dot(&b), -1.0);
        assert_eq!(a.axpy(2.0, &b), mv(&[5.0, 2.0]));
        assert_eq!(a.hadamard(&b), mv(&[3.0, -4.0]));
        assert_eq!(a.max_abs(), 4.0);
    }

    #[test]
    fn ensure_finite_reports_index() {
        let v = ModelVector::from_vec_unchecked(vec![1.0, f64::INFINITY]);
        let err = v.ensure_finite("x").unwrap_err();
        assert!(matches!(err, Error::NumericOverflow(ref m) if m.contains("entry 1")));
    }
}
