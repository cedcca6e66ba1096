//! Weighted Kozachenko–Leonenko differential entropy estimator.
//!
//! For `n` points in `R^d` with neighbor depth `k` and rank weights `w`,
//!
//! ```text
//! H = (1/n) sum_i sum_j w_j log[(n-1) rho_{(j),i}^d V_d / exp(digamma(j))]
//! ```
//!
//! where `rho_{(j),i}` is the distance from point `i` to its `j`-th nearest
//! neighbor and `V_d` is the volume of the unit `d`-ball. The per-point
//! inner sums are kept (`xi`) because the variance formulas need them.
//! All values are in nats.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{self, ln_gamma};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::knn::knn_distances;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const PINV_REL_CUTOFF: f64 = 1e-12;
const FEASIBILITY_TOL: f64 = 1e-8;

/// Digamma function for finite `z > 0`.
pub fn digamma(z: f64) -> Result<f64> {
    if !z.is_finite() || z <= 0.0 {
        return Err(Error::InvalidInput(format!("digamma needs a finite z > 0, got {z}")));
    }
    Ok(gamma::digamma(z))
}

/// `log V_d` with `V_d = pi^{d/2} / Gamma(1 + d/2)`.
pub fn log_unit_ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    h * std::f64::consts::PI.ln() - ln_gamma(1.0 + h)
}

pub fn unit_ball_volume(d: usize) -> f64 {
    log_unit_ball_volume(d).exp()
}

/// Exponent `tau(d)` in `k = ceil(d * n^tau(d))`.
pub fn tau(d: usize) -> f64 {
    match d {
        1 => 0.25,
        2 => 0.4,
        5 => 4.0 / 19.0,
        10 => 2.0 / 17.0,
        _ => {
            let df = d as f64;
            let smooth = 4.0 / (4.0 + 3.0 * df);
            let weight_cap = 1.0 - (df / 4.0) / (1.0 + (d / 4) as f64);
            smooth.min(weight_cap).max(0.05)
        }
    }
}

/// Default neighbor depth `ceil(d * n^tau(d))`, clamped to `[1, n-2]`.
pub fn choose_k(d: usize, n: usize) -> usize {
    let raw = (d as f64 * (n as f64).powf(tau(d))).ceil() as usize;
    raw.min(n.saturating_sub(2)).max(1)
}

/// `log Gamma(j + 2l/d) - log Gamma(j)`.
fn log_gamma_ratio(j: usize, l: usize, d: usize) -> f64 {
    ln_gamma(j as f64 + 2.0 * l as f64 / d as f64) - ln_gamma(j as f64)
}

/// Rank weights for the estimator, with their constraint residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub k: usize,
    pub d: usize,
    /// `w[j-1]` is the weight on the `j`-th neighbor.
    pub w: Vec<f64>,
    /// 1-based ranks allowed to carry weight.
    pub support: Vec<usize>,
    /// `sum_j w_j - 1`.
    pub sum_residual: f64,
    /// `sum_j w_j Gamma(j + 2l/d) / Gamma(j)` for `l = 1..=floor(d/4)`.
    pub moment_residuals: Vec<f64>,
}

impl WeightVector {
    fn with_residuals(k: usize, d: usize, w: Vec<f64>, support: Vec<usize>) -> Self {
        let sum_residual = w.iter().sum::<f64>() - 1.0;
        let moment_residuals = (1..=d / 4)
            .map(|l| {
                w.iter()
                    .enumerate()
                    .map(|(idx, &wj)| wj * log_gamma_ratio(idx + 1, l, d).exp())
                    .sum()
            })
            .collect();
        Self {
            k,
            d,
            w,
            support,
            sum_residual,
            moment_residuals,
        }
    }

    /// Largest absolute constraint violation.
    pub fn max_residual(&self) -> f64 {
        self.moment_residuals
            .iter()
            .fold(self.sum_residual.abs(), |m, r| m.max(r.abs()))
    }

    /// Caller-supplied weights; constraints are reported, not enforced.
    pub fn custom(w: Vec<f64>, d: usize) -> Result<Self> {
        if w.is_empty() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("custom weights must be finite and non-empty".into()));
        }
        let k = w.len();
        let support = (1..=k).filter(|&j| w[j - 1] != 0.0).collect();
        Ok(Self::with_residuals(k, d, w, support))
    }
}

/// Equal weights `1/k`. `d` only enters the reported moment residuals.
pub fn uniform_weights(k: usize, d: usize) -> WeightVector {
    let k = k.max(1);
    WeightVector::with_residuals(k, d, vec![1.0 / k as f64; k], (1..=k).collect())
}

/// Ranks `{floor(j k / d) : j = 1..=d}` with 0 clamped to 1, deduplicated.
pub fn weight_support(k: usize, d: usize) -> Vec<usize> {
    let mut s: Vec<usize> = (1..=d).map(|j| (j * k / d).max(1)).collect();
    s.dedup();
    s
}

/// Minimum-Euclidean-norm weights summing to one whose Gamma-ratio moments
/// `l = 1..=floor(d/4)` vanish, supported on [`weight_support`].
///
/// Solved as `w = A^+ b` on the support, with singular values below
/// `1e-12 * sigma_max` discarded. Fails with `WeightInfeasible` when the
/// least-norm solution does not satisfy the constraints.
pub fn l2_optimal_weights(k: usize, d: usize) -> Result<WeightVector> {
    if k == 0 || d == 0 {
        return Err(Error::InvalidInput(format!("need k >= 1 and d >= 1, got k={k}, d={d}")));
    }
    let support = weight_support(k, d);
    let m = 1 + d / 4;
    let a = DMatrix::from_fn(m, support.len(), |r, c| {
        if r == 0 {
            1.0
        } else {
            log_gamma_ratio(support[c], r, d).exp()
        }
    });
    let mut b = DVector::zeros(m);
    b[0] = 1.0;

    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let pinv = svd
        .pseudo_inverse(PINV_REL_CUTOFF * smax)
        .map_err(|e| Error::InvalidInput(format!("pseudo-inverse failed: {e}")))?;
    let ws = pinv * &b;
    let residual = (&a * &ws - &b).amax();
    if !residual.is_finite() || residual > FEASIBILITY_TOL {
        return Err(Error::WeightInfeasible { k, d, residual });
    }
    let mut w = vec![0.0; k];
    for (c, &j) in support.iter().enumerate() {
        w[j - 1] = ws[c];
    }
    Ok(WeightVector::with_residuals(k, d, w, support))
}

/// How rank weights are chosen for a given `(k, d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// L2-optimal for `d > 3`, uniform otherwise.
    #[default]
    Auto,
    Uniform,
    L2Optimal,
    Custom(Vec<f64>),
}

/// Resolved weights plus whether an infeasible L2 solve fell back to uniform.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedWeights {
    pub weights: WeightVector,
    pub fell_back_to_uniform: bool,
}

impl WeightRule {
    pub fn resolve(&self, k: usize, d: usize) -> Result<ResolvedWeights> {
        let l2 = |k, d| match l2_optimal_weights(k, d) {
            Ok(weights) => ResolvedWeights {
                weights,
                fell_back_to_uniform: false,
            },
            Err(_) => ResolvedWeights {
                weights: uniform_weights(k, d),
                fell_back_to_uniform: true,
            },
        };
        Ok(match self {
            WeightRule::Auto if d > 3 => l2(k, d),
            WeightRule::L2Optimal => l2(k, d),
            WeightRule::Auto | WeightRule::Uniform => ResolvedWeights {
                weights: uniform_weights(k, d),
                fell_back_to_uniform: false,
            },
            WeightRule::Custom(w) => {
                if w.len() != k {
                    return Err(Error::InvalidInput(format!(
                        "custom weights have length {}, but k = {k}",
                        w.len()
                    )));
                }
                ResolvedWeights {
                    weights: WeightVector::custom(w.clone(), d)?,
                    fell_back_to_uniform: false,
                }
            }
        })
    }
}

/// Entropy estimate with the per-point terms it averages.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyEstimate {
    pub h_hat: f64,
    pub xi: Vec<f64>,
    pub k: usize,
    pub weights: WeightVector,
}

/// Weighted Kozachenko–Leonenko estimate for the rows of `points`.
pub fn entropy_estimate(points: &Dataset, weights: &WeightVector) -> Result<EntropyEstimate> {
    let n = points.nrows();
    let d = points.ncols();
    let k = weights.k;
    let nd = knn_distances(points, k)?;

    let base = ((n - 1) as f64).ln() + log_unit_ball_volume(d);
    let rank_const: Vec<f64> = (1..=k)
        .map(|j| digamma(j as f64).map(|psi| base - psi))
        .collect::<Result<_>>()?;
    let df = d as f64;
    let xi: Vec<f64> = (0..n)
        .map(|i| {
            nd.row(i)
                .iter()
                .zip(&weights.w)
                .zip(&rank_const)
                .map(|((&rho, &w), &c)| if w == 0.0 { 0.0 } else { w * (c + df * rho.ln()) })
                .sum()
        })
        .collect();
    let h_hat = xi.iter().sum::<f64>() / n as f64;
    Ok(EntropyEstimate {
        h_hat,
        xi,
        k,
        weights: weights.clone(),
    })
}

/// Euler–Mascheroni constant, exposed for tests and analytic targets.
pub const fn euler_gamma() -> f64 {
    EULER_GAMMA
}
