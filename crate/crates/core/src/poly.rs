//! Local Taylor polynomials used as lifted microscale data.
//!
//! A polynomial around `center` is stored by its raw derivative values
//! `D_0..D_d`, so that `p(x) = Σ_k D_k (x - center)^k / k!`. The factorials are
//! applied at evaluation time, which keeps the stored values directly comparable
//! with finite-difference derivative estimates.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorPolynomial {
    center: f64,
    coeffs: Vec<f64>,
}

impl TaylorPolynomial {
    pub fn new(center: f64, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::invalid("coeffs", "at least one coefficient is required"));
        }
        if !center.is_finite() {
            return Err(Error::NonFinite("polynomial center"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("polynomial coefficients"));
        }
        Ok(Self { center, coeffs })
    }

    pub fn zero(center: f64) -> Self {
        Self {
            center,
            coeffs: vec![0.0],
        }
    }

    pub fn constant(center: f64, value: f64) -> Self {
        Self {
            center,
            coeffs: vec![value],
        }
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Raw derivative values `D_0..D_d` at the center.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = x - self.center;
        let mut acc = 0.0;
        for (k, &d) in self.coeffs.iter().enumerate().rev() {
            acc = d + acc * t / (k + 1) as f64;
        }
        acc
    }

    /// Mean value over `[center - h/2, center + h/2]`, in closed form.
    ///
    /// Odd terms vanish by symmetry; an even term `D_k t^k / k!` contributes
    /// `D_k h^k / (k! (k+1) 2^k)`.
    pub fn average(&self, h: f64) -> Result<f64> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::invalid("h", format!("averaging width must be positive, got {h}")));
        }
        let mut sum = 0.0;
        let mut half_pow = 1.0; // (h/2)^k
        let mut factorial = 1.0;
        for (k, &d) in self.coeffs.iter().enumerate() {
            if k > 0 {
                half_pow *= h / 2.0;
                factorial *= k as f64;
            }
            if k % 2 == 0 {
                sum += d * half_pow / (factorial * (k + 1) as f64);
            }
        }
        Ok(sum)
    }

    /// The Taylor polynomial of `∂_x^order p`: coefficients shift down by `order`.
    pub fn derivative(&self, order: usize) -> Self {
        if order >= self.coeffs.len() {
            return Self::zero(self.center);
        }
        Self {
            center: self.center,
            coeffs: self.coeffs[order..].to_vec(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            center: self.center,
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    /// Adds `other` into `self`. Both polynomials must share a center.
    pub fn add_assign(&mut self, other: &TaylorPolynomial) {
        debug_assert_eq!(self.center, other.center);
        if other.coeffs.len() > self.coeffs.len() {
            self.coeffs.resize(other.coeffs.len(), 0.0);
        }
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b;
        }
    }

    /// Drops trailing zero coefficients, keeping at least `D_0`.
    pub fn trimmed(mut self) -> Self {
        while self.coeffs.len() > 1 && *self.coeffs.last().unwrap() == 0.0 {
            self.coeffs.pop();
        }
        self
    }
}
