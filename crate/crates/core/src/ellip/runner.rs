use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{
    debias, normalize, plugin_variance_known, plugin_variance_unknown, statistic_known, statistic_unknown,
    variance_known, variance_unknown, DebiasTarget, MomentEstimates, Mode, PointTerms, TestConfig, TestResult,
    VarianceMode,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix_ops::SymMatrix;
use crate::seed::{mix_seed, tags};

/// Outcome of comparing a (debiased) statistic with its scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decision {
    pub z: f64,
    pub p_value: f64,
    pub reject: bool,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// `p = 1 - Phi(sqrt(n) T / sigma)`; reject when `T - z_alpha sigma / sqrt(n) > 0`.
///
/// With `sigma = 0` the p-value is 0, 1/2 or 1 according to the sign of `T`.
pub fn decide(t: f64, sigma_hat: f64, n: usize, alpha: f64) -> Decision {
    let nd = std_normal();
    let rn = (n as f64).sqrt();
    let z_alpha = nd.inverse_cdf(1.0 - alpha);
    let reject = t - z_alpha * sigma_hat / rn > 0.0;
    if sigma_hat > 0.0 {
        let z = rn * t / sigma_hat;
        Decision {
            z,
            p_value: nd.sf(z).clamp(0.0, 1.0),
            reject,
        }
    } else {
        let (z, p_value) = if t > 0.0 {
            (f64::INFINITY, 0.0)
        } else if t < 0.0 {
            (f64::NEG_INFINITY, 1.0)
        } else {
            (0.0, 0.5)
        };
        Decision { z, p_value, reject }
    }
}

/// Adds independent `Uniform(-eps, eps)` noise to every entry.
pub fn jitter(x: &Dataset, eps: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, tags::JITTER]));
    x.map(|v| v + rng.random_range(-eps..=eps))
}

/// Runs the full test. `known = Some((mu, Sigma))` selects the known-moment
/// statistic; otherwise moments are estimated with sample splitting.
pub fn run_test(x: &Dataset, known: Option<(&[f64], &SymMatrix)>, cfg: &TestConfig) -> Result<TestResult> {
    cfg.validate()?;
    x.ensure_finite()?;
    let jittered;
    let x = match cfg.jitter {
        Some(eps) => {
            jittered = jitter(x, eps, cfg.seed);
            &jittered
        }
        None => x,
    };
    let n = x.nrows();
    let p = x.ncols();
    let tuning = cfg.tuning();

    let (mode, t_raw, terms, sigma_hat, t_bar_b, t_debiased, weights, split) = match known {
        Some((mu, sigma)) => {
            let m = MomentEstimates::known(mu.to_vec(), sigma.clone())?;
            let ns = normalize(x, &m)?;
            let parts = statistic_known(&ns, &tuning)?;
            let terms = PointTerms::from_known(&parts, p);
            let sigma_hat = match cfg.variance_mode {
                VarianceMode::Inflation => variance_known(&terms)?,
                VarianceMode::Plugin => plugin_variance_known(&terms, cfg.c_exponent)?,
            };
            let target = DebiasTarget::Known { u: &ns.u, moments: &m };
            let (t_bar, t_deb) = debias(parts.t, &target, &tuning, cfg.b, cfg.seed)?;
            let weights = (parts.k_p, parts.k_1, parts.weights_p.clone(), parts.weights_1.clone());
            (Mode::Known, parts.t, terms, sigma_hat, t_bar, t_deb, weights, None)
        }
        None => {
            let parts = statistic_unknown(x, &tuning, cfg.seed)?;
            let terms = PointTerms::from_unknown(&parts, p);
            let sigma_hat = match cfg.variance_mode {
                VarianceMode::Inflation => variance_unknown(x, &terms, cfg.bandwidth)?,
                VarianceMode::Plugin => plugin_variance_unknown(x, &terms, cfg.bandwidth, cfg.c_exponent)?,
            };
            let full = MomentEstimates::estimate(x)?;
            let ns = normalize(x, &full)?;
            let target = DebiasTarget::Unknown { u: &ns.u, moments: &full };
            let (t_bar, t_deb) = debias(parts.t, &target, &tuning, cfg.b, cfg.seed)?;
            let k = &parts.t1.parts;
            let weights = (k.k_p, k.k_1, k.weights_p.clone(), k.weights_1.clone());
            let split = (parts.t1.parts.t, parts.t2.parts.t, parts.permutation.clone());
            (Mode::Unknown, parts.t, terms, sigma_hat, t_bar, t_deb, weights, Some(split))
        }
    };
    if !t_raw.is_finite() || !sigma_hat.is_finite() {
        return Err(Error::InvalidInput(format!(
            "statistic or variance is not finite (T = {t_raw}, sigma = {sigma_hat})"
        )));
    }
    let d = decide(t_debiased, sigma_hat, n, cfg.alpha);
    let (k_p, k_1, w_p, w_1) = weights;
    let (t1, t2, perm) = match split {
        Some((a, b, perm)) => (Some(a), Some(b), Some(perm)),
        None => (None, None, None),
    };
    Ok(TestResult {
        mode,
        n,
        p,
        t_raw,
        t_bar_b,
        t_debiased,
        sigma_hat,
        p_value: d.p_value,
        reject: d.reject,
        alpha: cfg.alpha,
        h_y: terms.h_y,
        h_u: terms.h_u,
        e_log_u: terms.e_log_u,
        k_p,
        k_1,
        weights_p: w_p.weights.w,
        weights_1: w_1.weights.w,
        weights_p_fell_back: w_p.fell_back_to_uniform,
        b: cfg.b,
        variance_mode: cfg.variance_mode,
        bandwidth: cfg.bandwidth,
        t1,
        t2,
        split_permutation: perm,
    })
}
