use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{log_cp, normalize, MomentEstimates, NormalizedSample};
use crate::data::Dataset;
use crate::entropy::{choose_k, entropy_estimate, ResolvedWeights, WeightRule};
use crate::error::{Error, Result};
use crate::seed::{mix_seed, tags};

/// Neighbor depths and weight rules for `H(Y)` and `H(U)`. `None` depths use
/// [`choose_k`] at the size of the sample being estimated.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EntropyTuning {
    pub k_p: Option<usize>,
    pub k_1: Option<usize>,
    pub weights_p: WeightRule,
    pub weights_1: WeightRule,
}

/// Statistic on one normalized sample, with the per-point terms.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownParts {
    pub t: f64,
    pub h_y: f64,
    pub h_u: f64,
    pub e_log_u: f64,
    pub xi_y: Vec<f64>,
    pub xi_u: Vec<f64>,
    pub log_u: Vec<f64>,
    pub k_p: usize,
    pub k_1: usize,
    pub weights_p: ResolvedWeights,
    pub weights_1: ResolvedWeights,
}

/// `T = -H(Y) + (p - 1) E[log U] + H(U) - log c_p` on an already normalized
/// sample.
pub fn statistic_known(ns: &NormalizedSample, tuning: &EntropyTuning) -> Result<KnownParts> {
    let n = ns.y.nrows();
    let p = ns.y.ncols();
    let k_p = tuning.k_p.unwrap_or_else(|| choose_k(p, n));
    let k_1 = tuning.k_1.unwrap_or_else(|| choose_k(1, n));
    if n < k_p.max(k_1) + 2 {
        return Err(Error::InvalidInput(format!(
            "n = {n} is too small for neighbor depths k_p = {k_p}, k_1 = {k_1}"
        )));
    }
    let weights_p = tuning.weights_p.resolve(k_p, p)?;
    let weights_1 = tuning.weights_1.resolve(k_1, 1)?;

    let hy = entropy_estimate(&ns.y, &weights_p.weights)?;
    let u_points = Dataset::from_column(ns.u.clone());
    let hu = entropy_estimate(&u_points, &weights_1.weights)?;
    let log_u: Vec<f64> = ns.u.iter().map(|u| u.ln()).collect();
    let e_log_u = log_u.iter().sum::<f64>() / n as f64;

    let t = -hy.h_hat + (p as f64 - 1.0) * e_log_u + hu.h_hat - log_cp(p);
    Ok(KnownParts {
        t,
        h_y: hy.h_hat,
        h_u: hu.h_hat,
        e_log_u,
        xi_y: hy.xi,
        xi_u: hu.xi,
        log_u,
        k_p,
        k_1,
        weights_p,
        weights_1,
    })
}

/// One direction of the split: moments from one half, entropies on the other.
#[derive(Debug, Clone)]
pub struct SplitParts {
    pub moments: MomentEstimates,
    pub parts: KnownParts,
}

/// Split-sample statistic and its pieces.
#[derive(Debug, Clone)]
pub struct UnknownParts {
    pub t: f64,
    /// Moments from the first half, entropies on the second.
    pub t1: SplitParts,
    /// Roles reversed.
    pub t2: SplitParts,
    pub h_bar_y: f64,
    pub h_bar_u: f64,
    pub e_bar_log_u: f64,
    /// Row order used for the split (identity when the halves were given).
    pub permutation: Vec<usize>,
    /// Size of the first half.
    pub n1: usize,
}

impl UnknownParts {
    /// Per-row `(xi_y, xi_u, log U)` in the original row order, each row
    /// taken from the half in which it served in the entropy estimates.
    pub fn per_row_terms(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.permutation.len();
        let mut xi_y = vec![0.0; n];
        let mut xi_u = vec![0.0; n];
        let mut log_u = vec![0.0; n];
        let (first, second) = self.permutation.split_at(self.n1);
        // t1 estimated entropies on the second half, t2 on the first
        for (rows, parts) in [(second, &self.t1.parts), (first, &self.t2.parts)] {
            for (local, &row) in rows.iter().enumerate() {
                xi_y[row] = parts.xi_y[local];
                xi_u[row] = parts.xi_u[local];
                log_u[row] = parts.log_u[local];
            }
        }
        (xi_y, xi_u, log_u)
    }
}

/// Role-swapped statistic on explicit halves.
pub fn statistic_split(first: &Dataset, second: &Dataset, tuning: &EntropyTuning) -> Result<UnknownParts> {
    let one = |est: &Dataset, target: &Dataset| -> Result<SplitParts> {
        let moments = MomentEstimates::estimate(est)?;
        let ns = normalize(target, &moments)?;
        let parts = statistic_known(&ns, tuning)?;
        Ok(SplitParts { moments, parts })
    };
    let t1 = one(first, second)?;
    let t2 = one(second, first)?;
    let p = first.ncols() as f64;
    let h_bar_y = (t1.parts.h_y + t2.parts.h_y) / 2.0;
    let h_bar_u = (t1.parts.h_u + t2.parts.h_u) / 2.0;
    let e_bar_log_u = (t1.parts.e_log_u + t2.parts.e_log_u) / 2.0;
    let t = (t1.parts.t + t2.parts.t) / 2.0;
    debug_assert!((t - (-h_bar_y + (p - 1.0) * e_bar_log_u + h_bar_u - log_cp(first.ncols()))).abs() < 1e-9);
    let n1 = first.nrows();
    let n = n1 + second.nrows();
    Ok(UnknownParts {
        t,
        t1,
        t2,
        h_bar_y,
        h_bar_u,
        e_bar_log_u,
        permutation: (0..n).collect(),
        n1,
    })
}

/// Seeded row permutation used before splitting.
pub fn split_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, tags::SPLIT]));
    perm.shuffle(&mut rng);
    perm
}

/// Shuffles the rows with `seed`, splits at `floor(n/2)`, and returns the
/// averaged role-swapped statistic.
pub fn statistic_unknown(x: &Dataset, tuning: &EntropyTuning, seed: u64) -> Result<UnknownParts> {
    let n = x.nrows();
    if n < 8 {
        return Err(Error::InvalidInput(format!("unknown-moment test needs n >= 8, got {n}")));
    }
    let perm = split_permutation(n, seed);
    let n1 = n / 2;
    let first = x.select_rows(&perm[..n1]);
    let second = x.select_rows(&perm[n1..]);
    let mut parts = statistic_split(&first, &second, tuning)?;
    parts.permutation = perm;
    Ok(parts)
}
