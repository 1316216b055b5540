//! Achievable rates and weighted sum rate.
//!
//! Rates are computed in nats internally and reported in bits.

use nalgebra::{Cholesky, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{PrecodingError, Result};
use crate::linalg::{hermitian_part, logdet_hpd, CMat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// Per-user rates, bits per channel use.
    pub rates: Vec<f64>,
    /// Weighted sum rate, bits per channel use.
    pub wsr: f64,
}

fn interference_plus_noise(h_k: &CMat, precoders: &[CMat], user: usize, sigma2: f64) -> CMat {
    let n = h_k.nrows();
    let mut j = CMat::identity(n, n).scale(sigma2);
    for (idx, p) in precoders.iter().enumerate() {
        if idx != user {
            let hp = h_k * p;
            j += &hp * hp.adjoint();
        }
    }
    j
}

fn check_shapes(h_k: &CMat, precoders: &[CMat], user: usize) -> Result<()> {
    if user >= precoders.len() {
        return Err(PrecodingError::dims("user_rate user index", precoders.len(), user));
    }
    if let Some(p) = precoders.iter().find(|p| p.nrows() != h_k.ncols()) {
        return Err(PrecodingError::dims("user_rate precoder rows", h_k.ncols(), p.nrows()));
    }
    Ok(())
}

/// Rate of `user` in nats: `logdet(J + S) - logdet(J)`.
pub fn user_rate_nats(h_k: &CMat, precoders: &[CMat], user: usize, sigma2: f64) -> Result<f64> {
    check_shapes(h_k, precoders, user)?;
    if !(sigma2 > 0.0) {
        return Err(PrecodingError::InvalidConfig("noise variance must be positive".into()));
    }
    let j = interference_plus_noise(h_k, precoders, user, sigma2);
    let hp = h_k * &precoders[user];
    let total = &j + &hp * hp.adjoint();
    let ld_total = logdet_hpd(&total).ok_or(PrecodingError::NonFinite {
        iteration: 0,
        context: "signal covariance logdet".into(),
    })?;
    let ld_j = logdet_hpd(&j).ok_or(PrecodingError::NonFinite {
        iteration: 0,
        context: "interference covariance logdet".into(),
    })?;
    Ok((ld_total - ld_j).max(0.0))
}

/// Rate of `user` in bits per channel use.
///
/// `precoders` holds every user's precoder in the same domain as `h_k`.
pub fn user_rate(h_k: &CMat, precoders: &[CMat], user: usize, sigma2: f64) -> Result<f64> {
    Ok(user_rate_nats(h_k, precoders, user, sigma2)? / std::f64::consts::LN_2)
}

/// Same rate through the eigenvalues of the whitened signal covariance:
/// `sum_i log2(1 + lambda_i(L^-1 S L^-H))`, `J = L L^H`.
pub fn user_rate_eig(h_k: &CMat, precoders: &[CMat], user: usize, sigma2: f64) -> Result<f64> {
    check_shapes(h_k, precoders, user)?;
    let j = interference_plus_noise(h_k, precoders, user, sigma2);
    let chol = Cholesky::new(j).ok_or(PrecodingError::NonFinite {
        iteration: 0,
        context: "interference covariance".into(),
    })?;
    let l = chol.l();
    let hp = h_k * &precoders[user];
    let whitened = l
        .solve_lower_triangular(&hp)
        .ok_or(PrecodingError::NonFinite {
            iteration: 0,
            context: "whitening".into(),
        })?;
    let s = hermitian_part(&(&whitened * whitened.adjoint()));
    let eig = SymmetricEigen::new(s);
    Ok(eig
        .eigenvalues
        .iter()
        .map(|lam| (1.0 + lam.max(0.0)).log2())
        .sum())
}

/// Rates of all users for angle-domain channels and precoders.
pub fn rates(h: &[CMat], precoders: &[CMat], sigma2: &[f64], alpha: &[f64]) -> Result<RateReport> {
    if h.len() != precoders.len() || sigma2.len() != h.len() {
        return Err(PrecodingError::dims("rates user count", h.len(), precoders.len()));
    }
    let rates = h
        .iter()
        .enumerate()
        .map(|(k, hk)| user_rate(hk, precoders, k, sigma2[k]))
        .collect::<Result<Vec<_>>>()?;
    let wsr = wsr(&rates, alpha)?;
    Ok(RateReport { rates, wsr })
}

/// `sum_k alpha_k R_k`.
pub fn wsr(rates: &[f64], alpha: &[f64]) -> Result<f64> {
    if rates.len() != alpha.len() {
        return Err(PrecodingError::dims("wsr weights", rates.len(), alpha.len()));
    }
    Ok(rates.iter().zip(alpha).map(|(r, a)| r * a).sum())
}
