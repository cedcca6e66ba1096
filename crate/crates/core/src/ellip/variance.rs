use nalgebra::{DMatrix, DVector};

use super::{normalize, KnownParts, MomentEstimates, UnknownParts};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kde::kde_fit;
use crate::matrix_ops::KroneckerSolver;

/// `|f'/f|` is capped at `RATIO_CLIP / h`.
pub const RATIO_CLIP: f64 = 10.0;
/// Floor applied to the density before dividing.
pub const RATIO_DENSITY_FLOOR: f64 = 1e-12;

/// Per-row entropy summands and the aggregates they are centered by.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTerms {
    pub p: usize,
    pub xi_y: Vec<f64>,
    pub xi_u: Vec<f64>,
    pub log_u: Vec<f64>,
    pub h_y: f64,
    pub h_u: f64,
    pub e_log_u: f64,
}

impl PointTerms {
    pub fn from_known(parts: &KnownParts, p: usize) -> Self {
        Self {
            p,
            xi_y: parts.xi_y.clone(),
            xi_u: parts.xi_u.clone(),
            log_u: parts.log_u.clone(),
            h_y: parts.h_y,
            h_u: parts.h_u,
            e_log_u: parts.e_log_u,
        }
    }

    /// Rows in original order, each with the terms from the half where it
    /// entered the entropy estimates, centered by the split averages.
    pub fn from_unknown(parts: &UnknownParts, p: usize) -> Self {
        let (xi_y, xi_u, log_u) = parts.per_row_terms();
        Self {
            p,
            xi_y,
            xi_u,
            log_u,
            h_y: parts.h_bar_y,
            h_u: parts.h_bar_u,
            e_log_u: parts.e_bar_log_u,
        }
    }

    pub fn len(&self) -> usize {
        self.xi_y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi_y.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.xi_y.len();
        if n == 0 || self.xi_u.len() != n || self.log_u.len() != n {
            return Err(Error::InvalidInput(format!(
                "per-row terms have mismatched lengths {}, {}, {}",
                n,
                self.xi_u.len(),
                self.log_u.len()
            )));
        }
        Ok(())
    }

    fn v2_base(&self, i: usize) -> f64 {
        (self.p as f64 - 1.0) * (self.log_u[i] - self.e_log_u) + self.xi_u[i] - self.h_u
    }
}

fn mean_sq(it: impl Iterator<Item = f64>, n: usize) -> f64 {
    it.map(|v| v * v).sum::<f64>() / n as f64
}

/// `sigma = sqrt(2 (V1 + V2))` with
/// `V1 = mean (xi_y - H(Y))^2` and
/// `V2 = mean ((p - 1)(log U - E log U) + xi_u - H(U))^2`.
pub fn variance_known(terms: &PointTerms) -> Result<f64> {
    terms.check()?;
    let n = terms.len();
    let v1 = mean_sq(terms.xi_y.iter().map(|x| x - terms.h_y), n);
    let v2 = mean_sq((0..n).map(|i| terms.v2_base(i)), n);
    Ok((2.0 * (v1 + v2)).sqrt())
}

/// Square root of `mean(-xi_y + xi_u + (p - 1) log U + H(Y) - (p - 1) E log U - H(U))^2 + n^{-c}`.
pub fn plugin_variance_known(terms: &PointTerms, c: f64) -> Result<f64> {
    terms.check()?;
    let n = terms.len();
    let pm1 = terms.p as f64 - 1.0;
    let s = mean_sq(
        (0..n).map(|i| {
            -terms.xi_y[i] + terms.xi_u[i] + pm1 * terms.log_u[i] + terms.h_y - pm1 * terms.e_log_u - terms.h_u
        }),
        n,
    );
    Ok((s + (n as f64).powf(-c)).sqrt())
}

/// Plug-in pieces shared by both unknown-moment variance forms, all
/// evaluated at the whole-sample mean and `1/n` covariance.
#[derive(Debug, Clone)]
pub struct UnknownSummands {
    pub bandwidth: f64,
    pub a1: DMatrix<f64>,
    pub a2: DVector<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DVector<f64>,
    /// `tr(psi_{Sigma^{-1/2}}(X_i) Sigma^{1/2})` and friends are formed from
    /// these per-row matrices.
    pub m: Vec<DMatrix<f64>>,
    pub y_hat: Vec<DVector<f64>>,
    /// Summands of `V1`.
    pub v1: Vec<f64>,
    /// Summands of `V2`.
    pub v2: Vec<f64>,
    /// First and second influence pieces of the plug-in form.
    pub psi1: Vec<f64>,
    pub psi2: Vec<f64>,
}

/// Builds every per-row summand of the unknown-moment variance estimators.
pub fn unknown_summands(x: &Dataset, terms: &PointTerms, bandwidth: Option<f64>) -> Result<UnknownSummands> {
    terms.check()?;
    let n = x.nrows();
    let p = x.ncols();
    if terms.len() != n || terms.p != p {
        return Err(Error::InvalidInput(format!(
            "terms describe {} rows in dimension {}, data has {n} x {p}",
            terms.len(),
            terms.p
        )));
    }
    let moments = MomentEstimates::estimate(x)?;
    let ns = normalize(x, &moments)?;
    let kde = kde_fit(&ns.u, bandwidth)?;
    let h = kde.bandwidth();
    let clip = RATIO_CLIP / h;

    let nf = n as f64;
    let mut a1 = DMatrix::<f64>::zeros(p, p);
    let mut a2 = DVector::<f64>::zeros(p);
    let mut b1 = DMatrix::<f64>::zeros(p, p);
    let mut b2 = DVector::<f64>::zeros(p);
    let mut y_hat = Vec::with_capacity(n);
    for i in 0..n {
        let u = ns.u[i];
        let v = DVector::from_row_slice(ns.v.row(i));
        let r = (kde.deriv(u) / kde.eval(u).max(RATIO_DENSITY_FLOOR)).clamp(-clip, clip);
        let vv = &v * v.transpose();
        a1 += &vv;
        a2 += &v / u;
        b1 += vv * (r * u);
        b2 += &v * r;
        y_hat.push(DVector::from_row_slice(ns.y.row(i)));
    }
    a1 /= nf;
    a2 /= nf;
    b1 /= nf;
    b2 /= nf;

    let solver = KroneckerSolver::new(&moments.sigma)?;
    let half = moments.sigma_half.matrix();
    let pm1 = p as f64 - 1.0;
    let ident = DMatrix::<f64>::identity(p, p);
    let psi1_mat = &a1 * pm1 - &ident - &b1;
    let psi1_vec = &a2 * pm1 - &b2;

    let mut m = Vec::with_capacity(n);
    let mut v1 = Vec::with_capacity(n);
    let mut v2 = Vec::with_capacity(n);
    let mut psi1 = Vec::with_capacity(n);
    let mut psi2 = Vec::with_capacity(n);
    for (i, y) in y_hat.iter().enumerate() {
        let inf = solver.influence(x.row(i), &moments.mu, &moments.sigma)?;
        let mi = inf.psi_sigma_inv_half.matrix() * half;
        let tr_m = mi.trace();
        v1.push(-terms.xi_y[i] + terms.h_y - tr_m);
        let t2 = (&a1 * &mi).trace() - a2.dot(y) + terms.log_u[i] - terms.e_log_u;
        v2.push(pm1 * t2 + terms.xi_u[i] - terms.h_u - (&b1 * &mi).trace() + b2.dot(y));
        psi1.push((&psi1_mat * &mi).trace() - psi1_vec.dot(y));
        psi2.push(
            pm1 * terms.log_u[i] - terms.xi_y[i] + terms.xi_u[i] + terms.h_y - pm1 * terms.e_log_u - terms.h_u,
        );
        m.push(mi);
    }
    Ok(UnknownSummands {
        bandwidth: h,
        a1,
        a2,
        b1,
        b2,
        m,
        y_hat,
        v1,
        v2,
        psi1,
        psi2,
    })
}

/// `sigma = sqrt(2 (V1 + V2))` with the moment-estimation corrections.
pub fn variance_unknown(x: &Dataset, terms: &PointTerms, bandwidth: Option<f64>) -> Result<f64> {
    let s = unknown_summands(x, terms, bandwidth)?;
    let n = s.v1.len();
    let v1 = mean_sq(s.v1.iter().copied(), n);
    let v2 = mean_sq(s.v2.iter().copied(), n);
    Ok((2.0 * (v1 + v2)).sqrt())
}

/// Square root of `mean(psi1 + psi2)^2 + n^{-c}`.
pub fn plugin_variance_unknown(x: &Dataset, terms: &PointTerms, bandwidth: Option<f64>, c: f64) -> Result<f64> {
    let s = unknown_summands(x, terms, bandwidth)?;
    let n = s.psi1.len();
    let m = mean_sq(s.psi1.iter().zip(&s.psi2).map(|(a, b)| a + b), n);
    Ok((m + (n as f64).powf(-c)).sqrt())
}
