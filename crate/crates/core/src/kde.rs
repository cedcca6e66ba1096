//! Gaussian kernel density estimate on the line, with its derivative.

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, PartialEq)]
pub struct Kde1d {
    samples: Vec<f64>,
    h: f64,
}

/// Default bandwidth `n^{-1/5}` (no scale adjustment).
pub fn default_bandwidth(n: usize) -> f64 {
    (n as f64).powf(-0.2)
}

/// Fits the estimator. With `h = None` the bandwidth is `n^{-1/5}`.
pub fn kde_fit(u: &[f64], h: Option<f64>) -> Result<Kde1d> {
    if u.len() < 2 {
        return Err(Error::InvalidInput(format!("kernel density needs at least 2 samples, got {}", u.len())));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("kernel density samples must be finite".into()));
    }
    let h = h.unwrap_or_else(|| default_bandwidth(u.len()));
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
    }
    Ok(Kde1d {
        samples: u.to_vec(),
        h,
    })
}

impl Kde1d {
    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// `(n h)^{-1} sum_k K((u - U_k)/h)`.
    pub fn eval(&self, u: f64) -> f64 {
        let s: f64 = self
            .samples
            .iter()
            .map(|&x| {
                let z = (u - x) / self.h;
                (-0.5 * z * z).exp()
            })
            .sum();
        INV_SQRT_2PI * s / (self.samples.len() as f64 * self.h)
    }

    /// `(n h^2)^{-1} sum_k K'((u - U_k)/h)` with `K'(z) = -z K(z)`.
    pub fn deriv(&self, u: f64) -> f64 {
        let s: f64 = self
            .samples
            .iter()
            .map(|&x| {
                let z = (u - x) / self.h;
                -z * (-0.5 * z * z).exp()
            })
            .sum();
        INV_SQRT_2PI * s / (self.samples.len() as f64 * self.h * self.h)
    }
}

/// Free-function form of [`Kde1d::eval`].
pub fn kde_eval(model: &Kde1d, u: f64) -> f64 {
    model.eval(u)
}

/// Free-function form of [`Kde1d::deriv`].
pub fn kde_deriv(model: &Kde1d, u: f64) -> f64 {
    model.deriv(u)
}
