//! KL-divergence test of elliptical symmetry.
//!
//! Writing `Y = Sigma^{-1/2}(X - mu)`, `U = ||Y||` and `V = Y / U`, the law of
//! `X` is elliptical exactly when `U` and `V` are independent and `V` is
//! uniform on the unit sphere. The statistic estimates the divergence
//! between the joint law of `(U, V)` and `f_U` times the uniform law on the
//! sphere:
//!
//! ```text
//! T = -H(Y) + (p - 1) E[log U] + H(U) - log c_p,   c_p = Gamma(p/2) / (2 pi^{p/2})
//! ```
//!
//! with both entropies from the weighted kNN estimator in [`crate::entropy`].
//! When `(mu, Sigma)` must be estimated the sample is split in two, moments
//! come from one half and entropies from the other, and the two role-swapped
//! statistics are averaged. Inference uses an inflated variance bound and a
//! resampling estimate of the bias.

mod debias;
mod pairwise;
mod runner;
mod statistic;
mod variance;

pub use debias::{debias, replicate, replicate_seed, resample, DebiasTarget};
pub use pairwise::{pairwise_test, PairOutcome, PairwiseReport};
pub use runner::{decide, jitter, run_test, Decision};
pub use statistic::{
    split_permutation, statistic_known, statistic_split, statistic_unknown, EntropyTuning, KnownParts, SplitParts, UnknownParts,
};
pub use variance::{
    plugin_variance_known, plugin_variance_unknown, unknown_summands, variance_known, variance_unknown, PointTerms,
    UnknownSummands, RATIO_CLIP, RATIO_DENSITY_FLOOR,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::Dataset;
use crate::entropy::WeightRule;
use crate::error::{Error, Result};
use crate::matrix_ops::{SpdRoots, SymMatrix};

/// Where a set of moments came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    Known,
    Estimated { rows: usize },
}

/// Location, scatter and its square roots.
#[derive(Debug, Clone)]
pub struct MomentEstimates {
    pub mu: Vec<f64>,
    pub sigma: SymMatrix,
    pub sigma_half: SymMatrix,
    pub sigma_inv_half: SymMatrix,
    pub source: MomentSource,
}

impl MomentEstimates {
    pub fn known(mu: Vec<f64>, sigma: SymMatrix) -> Result<Self> {
        if mu.len() != sigma.dim() {
            return Err(Error::InvalidInput(format!(
                "mean has length {} but covariance is {}x{}",
                mu.len(),
                sigma.dim(),
                sigma.dim()
            )));
        }
        let roots = SpdRoots::new(&sigma)?;
        Ok(Self {
            mu,
            sigma,
            sigma_half: roots.sqrt,
            sigma_inv_half: roots.inv_sqrt,
            source: MomentSource::Known,
        })
    }

    /// Sample mean and the `1/n` sample covariance.
    pub fn estimate(x: &Dataset) -> Result<Self> {
        let n = x.nrows();
        let p = x.ncols();
        if n < 2 {
            return Err(Error::InvalidInput("need at least 2 rows to estimate moments".into()));
        }
        let mut mu = vec![0.0; p];
        for r in x.rows() {
            for (m, v) in mu.iter_mut().zip(r) {
                *m += v;
            }
        }
        mu.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = DMatrix::<f64>::zeros(p, p);
        for r in x.rows() {
            for a in 0..p {
                let da = r[a] - mu[a];
                for b in 0..p {
                    cov[(a, b)] += da * (r[b] - mu[b]);
                }
            }
        }
        cov /= n as f64;
        let sigma = SymMatrix::new(cov)?;
        let roots = SpdRoots::new(&sigma)?;
        Ok(Self {
            mu,
            sigma,
            sigma_half: roots.sqrt,
            sigma_inv_half: roots.inv_sqrt,
            source: MomentSource::Estimated { rows: n },
        })
    }
}

/// `Y`, its lengths `U` and directions `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSample {
    pub y: Dataset,
    pub u: Vec<f64>,
    pub v: Dataset,
}

/// `Y_i = Sigma^{-1/2}(X_i - mu)`, `U_i = ||Y_i||`, `V_i = Y_i / U_i`.
pub fn normalize(x: &Dataset, m: &MomentEstimates) -> Result<NormalizedSample> {
    let p = x.ncols();
    if m.mu.len() != p {
        return Err(Error::InvalidInput(format!(
            "data has {p} columns but moments have dimension {}",
            m.mu.len()
        )));
    }
    let r = m.sigma_inv_half.matrix();
    let n = x.nrows();
    let mut y = Vec::with_capacity(n * p);
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n * p);
    let mut centered = vec![0.0; p];
    for (i, row) in x.rows().enumerate() {
        for ((c, xv), mv) in centered.iter_mut().zip(row).zip(&m.mu) {
            *c = xv - mv;
        }
        let start = y.len();
        for a in 0..p {
            let mut acc = 0.0;
            for (b, c) in centered.iter().enumerate() {
                acc += r[(a, b)] * c;
            }
            y.push(acc);
        }
        let len = y[start..].iter().map(|t| t * t).sum::<f64>().sqrt();
        if len == 0.0 {
            return Err(Error::DegenerateDirection { row: i });
        }
        u.push(len);
        v.extend(y[start..].iter().map(|t| t / len));
    }
    Ok(NormalizedSample {
        y: Dataset::new(n, p, y)?,
        u,
        v: Dataset::new(n, p, v)?,
    })
}

/// `log c_p` with `c_p = Gamma(p/2) / (2 pi^{p/2})`, the uniform density on
/// the unit sphere in `R^p`.
pub fn log_cp(p: usize) -> f64 {
    let h = p as f64 / 2.0;
    ln_gamma(h) - std::f64::consts::LN_2 - h * std::f64::consts::PI.ln()
}

/// `H(U, V) = H(Y) - (p - 1) E[log U]`.
pub fn joint_entropy_uv(h_y: f64, e_log_u: f64, p: usize) -> f64 {
    h_y - (p as f64 - 1.0) * e_log_u
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Known,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// `sigma^2 = 2 (V1 + V2)`.
    #[default]
    Inflation,
    /// Empirical second moment of the estimated influence plus `n^{-c}`.
    Plugin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestConfig {
    pub k_p: Option<usize>,
    pub k_1: Option<usize>,
    pub weights_p: WeightRule,
    pub weights_1: WeightRule,
    pub bandwidth: Option<f64>,
    /// Resampling replications for the bias estimate; 0 disables it.
    pub b: usize,
    pub alpha: f64,
    pub c_exponent: f64,
    pub variance_mode: VarianceMode,
    pub seed: u64,
    pub jitter: Option<f64>,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            k_p: None,
            k_1: None,
            weights_p: WeightRule::Auto,
            weights_1: WeightRule::Uniform,
            bandwidth: None,
            b: 100,
            alpha: 0.05,
            c_exponent: 0.5,
            variance_mode: VarianceMode::Inflation,
            seed: 0,
            jitter: None,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::InvalidInput(format!("alpha must lie in (0, 1/2), got {}", self.alpha)));
        }
        if matches!(self.k_p, Some(0)) || matches!(self.k_1, Some(0)) {
            return Err(Error::InvalidInput("neighbor depths must be positive".into()));
        }
        if let Some(h) = self.bandwidth {
            if !h.is_finite() || h <= 0.0 {
                return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
            }
        }
        if let Some(e) = self.jitter {
            if !e.is_finite() || e <= 0.0 {
                return Err(Error::InvalidInput(format!("jitter must be positive, got {e}")));
            }
        }
        if self.c_exponent.is_nan() || self.c_exponent <= 0.0 {
            return Err(Error::InvalidInput(format!("c_exponent must be positive, got {}", self.c_exponent)));
        }
        Ok(())
    }

    pub fn tuning(&self) -> EntropyTuning {
        EntropyTuning {
            k_p: self.k_p,
            k_1: self.k_1,
            weights_p: self.weights_p.clone(),
            weights_1: self.weights_1.clone(),
        }
    }
}

/// Everything the test reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub mode: Mode,
    pub n: usize,
    pub p: usize,
    pub t_raw: f64,
    pub t_bar_b: f64,
    pub t_debiased: f64,
    pub sigma_hat: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub h_y: f64,
    pub h_u: f64,
    pub e_log_u: f64,
    pub k_p: usize,
    pub k_1: usize,
    pub weights_p: Vec<f64>,
    pub weights_1: Vec<f64>,
    pub weights_p_fell_back: bool,
    pub b: usize,
    pub variance_mode: VarianceMode,
    pub bandwidth: Option<f64>,
    /// Role-swapped split statistics (unknown mode).
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    /// Row order after the seeded shuffle; the first `floor(n/2)` rows form
    /// the first half (unknown mode).
    pub split_permutation: Option<Vec<usize>>,
}
