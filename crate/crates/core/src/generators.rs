//! Seeded samplers for the four simulation settings.
//!
//! Each setting is indexed by a departure parameter `s` in `0..=p`; `s = 0`
//! is elliptical and larger `s` moves further from the null.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix_ops::SymMatrix;

/// Shape parameters of the Setting 2 scale mixtures.
pub const SETTING2_GAMMA: [f64; 10] = [0.5, 2.0, 0.4, 3.0, 0.3, 4.0, 0.2, 5.0, 0.1, 6.0];
/// Rate parameters of the Setting 2 scale mixtures.
pub const SETTING2_ALPHA: [f64; 10] = [1.0, 2.0, 3.0, 0.1, 0.2, 0.3, 4.0, 5.0, 0.4, 0.5];
/// Left truncation point for the Setting 2 mixing variables.
pub const SETTING2_W_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// `max(W, floor)`.
    #[default]
    Clamp,
    /// Redraw until `W >= floor`.
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingSpec {
    pub setting: u8,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub seed: u64,
    /// Setting 2 shapes; defaults to [`SETTING2_GAMMA`].
    #[serde(default)]
    pub gamma: Option<Vec<f64>>,
    /// Setting 2 rates; defaults to [`SETTING2_ALPHA`].
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    #[serde(default)]
    pub truncation: Truncation,
}

impl SettingSpec {
    pub fn new(setting: u8, n: usize, p: usize, s: usize, seed: u64) -> Self {
        Self {
            setting,
            n,
            p,
            s,
            seed,
            gamma: None,
            alpha: None,
            truncation: Truncation::Clamp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.setting) {
            return Err(Error::InvalidInput(format!("unknown setting {}", self.setting)));
        }
        if self.p == 0 || self.n == 0 {
            return Err(Error::InvalidInput("n and p must be positive".into()));
        }
        if self.s > self.p {
            return Err(Error::InvalidInput(format!("s = {} exceeds p = {}", self.s, self.p)));
        }
        if self.setting == 2 {
            let (g, a) = self.setting2_params();
            if self.s > g.len() || self.s > a.len() {
                return Err(Error::InvalidInput(format!(
                    "setting 2 with s = {} needs at least {} gamma/alpha entries",
                    self.s, self.s
                )));
            }
        }
        Ok(())
    }

    fn setting2_params(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.gamma.clone().unwrap_or_else(|| SETTING2_GAMMA.to_vec()),
            self.alpha.clone().unwrap_or_else(|| SETTING2_ALPHA.to_vec()),
        )
    }

    /// Mean and covariance of the `s = 0` member of the setting, used as the
    /// hypothesized moments when testing in known mode.
    pub fn null_moments(&self) -> (Vec<f64>, SymMatrix) {
        let p = self.p as f64;
        let scale = match self.setting {
            // U ~ Gamma(4, rate 2): E U^2 = 4/4 + 4 = 5
            2 => 5.0 / p,
            // U ~ Uniform(0, 1): E U^2 = 1/3
            3 => 1.0 / (3.0 * p),
            // t with 6 degrees of freedom
            4 => 1.5,
            _ => 1.0,
        };
        let sigma = SymMatrix::from_diagonal(&vec![scale; self.p]);
        (vec![0.0; self.p], sigma)
    }
}

/// `Z / ||Z||` for a standard normal `Z`.
pub fn sample_sphere<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let z: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            return z.into_iter().map(|v| v / norm).collect();
        }
    }
}

/// Uniform on `(0, 1]`.
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// chi-square with 2 degrees of freedom, as `-2 log U`.
pub fn sample_chi2_2<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -2.0 * open_unit(rng).ln()
}

/// chi-square with 6 degrees of freedom, as a sum of three chi2(2) draws.
fn sample_chi2_6<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -2.0 * (open_unit(rng) * open_unit(rng) * open_unit(rng)).ln()
}

pub fn generate(spec: &SettingSpec) -> Result<Dataset> {
    spec.validate()?;
    match spec.setting {
        1 => gen_setting1(spec),
        2 => gen_setting2(spec),
        3 => gen_setting3(spec),
        _ => gen_setting4(spec),
    }
}

/// First `s` columns are `(chi2(2) - 2) / 2`, the rest standard normal.
pub fn gen_setting1(spec: &SettingSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = Vec::with_capacity(spec.n * spec.p);
    for _ in 0..spec.n {
        for j in 0..spec.p {
            let x = if j < spec.s {
                (sample_chi2_2(&mut rng) - 2.0) / 2.0
            } else {
                StandardNormal.sample(&mut rng)
            };
            data.push(x);
        }
    }
    Dataset::new(spec.n, spec.p, data)
}

/// `U ~ Gamma(4, rate 2)`, `V` uniform on the sphere; `X_j = U V_j / sqrt(W_j)`
/// for `j < s` with `W_j ~ Gamma(gamma_j, rate alpha_j)` truncated at `1e-3`.
pub fn gen_setting2(spec: &SettingSpec) -> Result<Dataset> {
    spec.validate()?;
    let (gamma, alpha) = spec.setting2_params();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let radial = Gamma::new(4.0, 0.5).expect("valid gamma parameters");
    let mixers = (0..spec.s)
        .map(|j| {
            Gamma::new(gamma[j], 1.0 / alpha[j])
                .map_err(|e| Error::InvalidInput(format!("setting 2 mixer {j}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut data = Vec::with_capacity(spec.n * spec.p);
    for _ in 0..spec.n {
        let u = radial.sample(&mut rng);
        let v = sample_sphere(spec.p, &mut rng);
        for j in 0..spec.p {
            let mut x = u * v[j];
            if j < spec.s {
                let w = match spec.truncation {
                    Truncation::Clamp => mixers[j].sample(&mut rng).max(SETTING2_W_FLOOR),
                    Truncation::Reject => loop {
                        let w = mixers[j].sample(&mut rng);
                        if w >= SETTING2_W_FLOOR {
                            break w;
                        }
                    },
                };
                x /= w.sqrt();
            }
            data.push(x);
        }
    }
    Dataset::new(spec.n, spec.p, data)
}

/// `V` uniform on the sphere, `U | V ~ Uniform(c, c + 1)` with
/// `c = sum_{j <= s} j^2 V_j^2`, and `X = U V`.
pub fn gen_setting3(spec: &SettingSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = Vec::with_capacity(spec.n * spec.p);
    for _ in 0..spec.n {
        let v = sample_sphere(spec.p, &mut rng);
        let shift: f64 = v[..spec.s]
            .iter()
            .enumerate()
            .map(|(j, vj)| ((j + 1) * (j + 1)) as f64 * vj * vj)
            .sum();
        let u = shift + open_unit(&mut rng);
        data.extend(v.iter().map(|vj| u * vj));
    }
    Dataset::new(spec.n, spec.p, data)
}

/// `Z ~ t_6(0, I_p)`, `W ~ Bernoulli(1/2)`, `X_j = 20 W + Z_j` for `j < s`.
pub fn gen_setting4(spec: &SettingSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = Vec::with_capacity(spec.n * spec.p);
    for _ in 0..spec.n {
        let scale = (sample_chi2_6(&mut rng) / 6.0).sqrt();
        let w = if rng.random::<bool>() { 20.0 } else { 0.0 };
        for j in 0..spec.p {
            let g: f64 = StandardNormal.sample(&mut rng);
            let z = g / scale;
            data.push(if j < spec.s { w + z } else { z });
        }
    }
    Dataset::new(spec.n, spec.p, data)
}
