use rayon::prelude::*;
use serde::Serialize;

use super::{run_test, TestConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seed::{mix_seed, tags};

/// Result for one column pair `(i, j)`, `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairOutcome {
    pub i: usize,
    pub j: usize,
    pub t_debiased: Option<f64>,
    pub sigma_hat: Option<f64>,
    pub p_value: Option<f64>,
    pub reject: bool,
    /// Set when the pair could not be tested; the other pairs still run.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseReport {
    pub p: usize,
    pub alpha: f64,
    /// Bonferroni level `alpha / (p (p - 1) / 2)`.
    pub alpha_pair: f64,
    pub pairs: Vec<PairOutcome>,
    /// `p x p` upper-triangular p-values; `None` on and below the diagonal
    /// and for failed pairs.
    pub p_values: Vec<Vec<Option<f64>>>,
    pub rejections: usize,
    pub failures: usize,
}

/// Unknown-moment test on every pair of columns at the Bonferroni level.
pub fn pairwise_test(x: &Dataset, cfg: &TestConfig) -> Result<PairwiseReport> {
    let p = x.ncols();
    if p < 2 {
        return Err(Error::InvalidInput(format!("pairwise testing needs at least 2 columns, got {p}")));
    }
    cfg.validate()?;
    let n_pairs = p * (p - 1) / 2;
    let alpha_pair = cfg.alpha / n_pairs as f64;
    let index: Vec<(usize, usize)> = (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).collect();
    let pairs: Vec<PairOutcome> = index
        .par_iter()
        .map(|&(i, j)| {
            let sub = x.select_columns(&[i, j]);
            let pair_cfg = TestConfig {
                alpha: alpha_pair,
                seed: mix_seed(&[cfg.seed, tags::PAIR, i as u64, j as u64]),
                ..cfg.clone()
            };
            match run_test(&sub, None, &pair_cfg) {
                Ok(r) => PairOutcome {
                    i,
                    j,
                    t_debiased: Some(r.t_debiased),
                    sigma_hat: Some(r.sigma_hat),
                    p_value: Some(r.p_value),
                    reject: r.reject,
                    error: None,
                },
                Err(e) => PairOutcome {
                    i,
                    j,
                    t_debiased: None,
                    sigma_hat: None,
                    p_value: None,
                    reject: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let mut p_values = vec![vec![None; p]; p];
    for o in &pairs {
        p_values[o.i][o.j] = o.p_value;
    }
    Ok(PairwiseReport {
        p,
        alpha: cfg.alpha,
        alpha_pair,
        rejections: pairs.iter().filter(|o| o.reject).count(),
        failures: pairs.iter().filter(|o| o.error.is_some()).count(),
        pairs,
        p_values,
    })
}
