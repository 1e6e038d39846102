//! Dense vectors in R^d and small row-major matrices.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use crate::error::{Error, Result};

/// A point in R^d: an image latent, a noise draw or a velocity.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct Latent(pub Vec<f64>);

impl Latent {
    pub fn zeros(dim: usize) -> Self {
        Latent(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.0, &self.0)
    }

    /// `alpha * self + beta * other`.
    pub fn lincomb(&self, alpha: f64, other: &[f64], beta: f64) -> Latent {
        debug_assert_eq!(self.dim(), other.len());
        Latent(
            self.0
                .iter()
                .zip(other)
                .map(|(x, y)| alpha * x + beta * y)
                .collect(),
        )
    }

    pub fn sub(&self, other: &[f64]) -> Latent {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn add(&self, other: &[f64]) -> Latent {
        self.lincomb(1.0, other, 1.0)
    }

    pub fn scale(&self, s: f64) -> Latent {
        Latent(self.0.iter().map(|x| s * x).collect())
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &[f64]) {
        debug_assert_eq!(self.dim(), other.len());
        for (x, y) in self.0.iter_mut().zip(other) {
            *x += s * y;
        }
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        check_dim(&self.0, expected)
    }
}

impl Deref for Latent {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Latent {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Latent {
    fn from(v: Vec<f64>) -> Self {
        Latent(v)
    }
}

impl From<&[f64]> for Latent {
    fn from(v: &[f64]) -> Self {
        Latent(v.to_vec())
    }
}

pub(crate) fn check_dim(x: &[f64], expected: usize) -> Result<()> {
    if x.len() != expected {
        return Err(Error::Shape {
            expected,
            found: x.len(),
        });
    }
    Ok(())
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm(x: &[f64]) -> f64 {
    libm::sqrt(dot(x, x))
}

pub fn distance(x: &[f64], y: &[f64]) -> f64 {
    libm::sqrt(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Square row-major matrix, used for velocity Jacobians.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Matrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Matrix) {
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += s * y;
        }
    }

    /// `self += s * u v^T`.
    pub fn add_outer(&mut self, s: f64, u: &[f64], v: &[f64]) {
        let d = self.dim;
        for i in 0..d {
            for j in 0..d {
                self.data[i * d + j] += s * u[i] * v[j];
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Latent {
        let d = self.dim;
        Latent(
            (0..d)
                .map(|i| dot(&self.data[i * d..(i + 1) * d], x))
                .collect(),
        )
    }

    pub fn transpose_mul_vec(&self, x: &[f64]) -> Latent {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for i in 0..d {
            for j in 0..d {
                out[j] += self.data[i * d + j] * x[i];
            }
        }
        Latent(out)
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}
