//! Dense row-major f64 tensor.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match {} values",
            data.len()
        );
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn zeros_like(&self) -> Self {
        Tensor::zeros(&self.shape)
    }

    /// Gaussian init scaled by `std`.
    pub fn randn(shape: &[usize], std: f64, rng: &mut impl Rng) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| std * gaussian(rng)).collect();
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn at3(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[(c * self.shape[1] + i) * self.shape[2] + j]
    }

    #[inline]
    pub fn at3_mut(&mut self, c: usize, i: usize, j: usize) -> &mut f64 {
        &mut self.data[(c * self.shape[1] + i) * self.shape[2] + j]
    }

    #[inline]
    pub fn at4(&self, a: usize, b: usize, i: usize, j: usize) -> f64 {
        self.data[((a * self.shape[1] + b) * self.shape[2] + i) * self.shape[3] + j]
    }

    #[inline]
    pub fn at4_mut(&mut self, a: usize, b: usize, i: usize, j: usize) -> &mut f64 {
        &mut self.data[((a * self.shape[1] + b) * self.shape[2] + i) * self.shape[3] + j]
    }

    pub fn add_scaled(&mut self, other: &Tensor, scale: f64) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        debug_assert_eq!(self.shape, other.shape);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

/// Box-Muller draw; two uniform draws per sample keeps the stream layout
/// independent of rejection behavior.
fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
