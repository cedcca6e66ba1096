use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{normalize, statistic_known, statistic_unknown, EntropyTuning, MomentEstimates};
use crate::data::Dataset;
use crate::error::Result;
use crate::generators::sample_sphere;
use crate::seed::{mix_seed, tags};

/// What the resampled datasets are built from and how each is re-tested.
#[derive(Debug, Clone, Copy)]
pub enum DebiasTarget<'a> {
    /// Rebuild with the true moments and the observed lengths; test with the
    /// same known moments.
    Known { u: &'a [f64], moments: &'a MomentEstimates },
    /// Rebuild with whole-sample estimates and lengths; rerun the full
    /// split-sample procedure on each resample.
    Unknown { u: &'a [f64], moments: &'a MomentEstimates },
}

impl DebiasTarget<'_> {
    fn parts(&self) -> (&[f64], &MomentEstimates) {
        match *self {
            DebiasTarget::Known { u, moments } | DebiasTarget::Unknown { u, moments } => (u, moments),
        }
    }
}

/// `X*_i = mu + Sigma^{1/2} U_i V*_i` with `V*_i` uniform on the sphere.
pub fn resample<R: Rng + ?Sized>(u: &[f64], moments: &MomentEstimates, rng: &mut R) -> Result<Dataset> {
    let p = moments.mu.len();
    let half = moments.sigma_half.matrix();
    let mut data = Vec::with_capacity(u.len() * p);
    for &ui in u {
        let v = sample_sphere(p, rng);
        for a in 0..p {
            let mut acc = 0.0;
            for (b, vb) in v.iter().enumerate() {
                acc += half[(a, b)] * vb;
            }
            data.push(moments.mu[a] + ui * acc);
        }
    }
    Dataset::new(u.len(), p, data)
}

/// Seed of the `b`-th resample.
pub fn replicate_seed(seed: u64, b: usize) -> u64 {
    mix_seed(&[seed, tags::DEBIAS, b as u64])
}

/// Statistic on the `b`-th resample.
pub fn replicate(target: &DebiasTarget<'_>, tuning: &EntropyTuning, seed: u64, b: usize) -> Result<f64> {
    let rs = replicate_seed(seed, b);
    let mut rng = ChaCha8Rng::seed_from_u64(rs);
    let (u, moments) = target.parts();
    let xs = resample(u, moments, &mut rng)?;
    match target {
        DebiasTarget::Known { moments, .. } => {
            let ns = normalize(&xs, moments)?;
            Ok(statistic_known(&ns, tuning)?.t)
        }
        DebiasTarget::Unknown { .. } => Ok(statistic_unknown(&xs, tuning, rs)?.t),
    }
}

/// Returns `(T_bar_b, T - T_bar_b)`. With `b = 0` nothing is resampled and
/// the bias estimate is zero.
///
/// Replicates run in parallel, each on its own stream, and are averaged in
/// index order, so the result does not depend on the thread count.
pub fn debias(t_raw: f64, target: &DebiasTarget<'_>, tuning: &EntropyTuning, b: usize, seed: u64) -> Result<(f64, f64)> {
    if b == 0 {
        return Ok((0.0, t_raw));
    }
    let ts: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|i| replicate(target, tuning, seed, i))
        .collect::<Result<_>>()?;
    let mut sum = 0.0;
    for t in &ts {
        sum += t;
    }
    let t_bar = sum / b as f64;
    Ok((t_bar, t_raw - t_bar))
}
