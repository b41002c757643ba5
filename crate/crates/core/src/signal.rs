//! Flat real vectors with an optional 2D lattice shape.

use std::ops::Index;

use crate::error::{check_dim, Error, Result};

/// A flat real vector that plays the role of a latent. When `shape` is set
/// the data is row-major over a `rows x cols` lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    data: Vec<f64>,
    shape: Option<(usize, usize)>,
}

impl Signal {
    pub fn new(data: Vec<f64>) -> Self {
        Self { data, shape: None }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Self::new(vec![value; len])
    }

    /// Builds a signal on a `rows x cols` lattice.
    pub fn with_shape(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        check_dim(rows * cols, data.len())?;
        Ok(Self {
            data,
            shape: Some((rows, cols)),
        })
    }

    /// Copies the lattice shape of `other` onto `self` when the lengths agree.
    pub fn shaped_like(mut self, other: &Signal) -> Self {
        if other.len() == self.len() {
            self.shape = other.shape;
        }
        self
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, other: &Signal) -> Result<f64> {
        check_dim(self.len(), other.len())?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// Elementwise `a * self + b * other`.
    pub fn lincomb(&self, a: f64, other: &Signal, b: f64) -> Result<Signal> {
        check_dim(self.len(), other.len())?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Signal {
            data,
            shape: self.shape,
        })
    }

    pub fn scale(&self, a: f64) -> Signal {
        self.map(|v| a * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Signal {
        Signal {
            data: self.data.iter().map(|&v| f(v)).collect(),
            shape: self.shape,
        }
    }

    pub fn sub(&self, other: &Signal) -> Result<Signal> {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn add(&self, other: &Signal) -> Result<Signal> {
        self.lincomb(1.0, other, 1.0)
    }

    pub(crate) fn require_shape(&self) -> Result<(usize, usize)> {
        self.shape.ok_or(Error::ShapeMismatch)
    }
}

impl From<Vec<f64>> for Signal {
    fn from(data: Vec<f64>) -> Self {
        Signal::new(data)
    }
}

impl Index<usize> for Signal {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl<'a> IntoIterator for &'a Signal {
    type Item = &'a f64;
    type IntoIter = std::slice::Iter<'a, f64>;

    fn into_iter(self) -> Self::IntoIter {
        self.data.iter()
    }
}
