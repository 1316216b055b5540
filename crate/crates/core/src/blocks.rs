//! Block updates shared by the common-support and per-user-support solvers.
//!
//! Everything lives in the `N`-dimensional coefficient space. `grams[j]` is
//! `H diag(delta_j) H^H` for the support used by user `j`'s precoder, and
//! user `k` sees row block `k` of it.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::config::SystemConfig;
use crate::error::{PrecodingError, Result};
use crate::linalg::{
    all_finite, block_diag, diag_product, hermitian_part, hermitian_solve, logdet_hpd, offsets,
    trace_re, CMat, SolveKind,
};
use crate::selection::{penalty_beta, select_beams, selection_cost, SelectionRule, SelectionVector};

/// `H diag(delta) H^H` from the active columns only.
pub(crate) fn gram(h_all: &CMat, delta: &SelectionVector) -> CMat {
    let hs = h_all.select_columns(delta.active().iter());
    &hs * hs.adjoint()
}

/// `H diag(d) H^H` for a relaxed (real) diagonal.
pub(crate) fn gram_relaxed(h_all: &CMat, d: &[f64]) -> CMat {
    let mut hd = h_all.clone();
    for (mut col, &v) in hd.column_iter_mut().zip(d) {
        col *= Complex64::new(v, 0.0);
    }
    &hd * h_all.adjoint()
}

/// Matched-filter coefficients: `X_k` picks the first `D_k` rows of user `k`'s block.
pub(crate) fn matched_filter_x(cfg: &SystemConfig) -> Vec<CMat> {
    let n = cfg.n();
    let off = offsets(&cfg.n_k);
    (0..cfg.users())
        .map(|k| {
            let mut x = CMat::zeros(n, cfg.d_k[k]);
            for d in 0..cfg.d_k[k] {
                x[(off[k] + d, d)] = Complex64::new(1.0, 0.0);
            }
            x
        })
        .collect()
}

/// `sum_j Tr(X_j^H G_j X_j)`: transmit power before rescaling.
pub(crate) fn raw_power(grams: &[&CMat], x: &[CMat]) -> f64 {
    x.iter()
        .zip(grams)
        .map(|(xj, gj)| trace_re(&(xj.adjoint() * *gj * xj)))
        .sum()
}

pub(crate) fn effective_noise(cfg: &SystemConfig, grams: &[&CMat], x: &[CMat]) -> Vec<f64> {
    let total = raw_power(grams, x).max(0.0);
    cfg.sigma2.iter().map(|s| s / cfg.p_max * total).collect()
}

/// Row block `k` of `G_j` times `X_j`, for every interferer `j`.
fn received(cfg: &SystemConfig, grams: &[&CMat], x: &[CMat], k: usize) -> Vec<CMat> {
    let off = offsets(&cfg.n_k);
    grams
        .iter()
        .zip(x)
        .map(|(g, xj)| g.rows(off[k], cfg.n_k[k]) * xj)
        .collect()
}

pub(crate) fn update_u(cfg: &SystemConfig, grams: &[&CMat], x: &[CMat]) -> Result<Vec<CMat>> {
    let noise = effective_noise(cfg, grams, x);
    (0..cfg.users())
        .map(|k| {
            let nk = cfg.n_k[k];
            let rx = received(cfg, grams, x, k);
            let mut cov = CMat::identity(nk, nk).scale(noise[k]);
            for r in &rx {
                cov += r * r.adjoint();
            }
            let signal = &rx[k];
            // The signal lies in the range of cov, so the system is consistent;
            // only an all-zero covariance has no factorization at all.
            let u = match hermitian_solve(&cov, signal) {
                Some((u, _)) => u,
                None => CMat::zeros(nk, cfg.d_k[k]),
            };
            if !all_finite(&u) {
                return Err(PrecodingError::NonFinite {
                    iteration: 0,
                    context: format!("receive filter of user {k}"),
                });
            }
            Ok(u)
        })
        .collect()
}

pub(crate) fn update_w(
    cfg: &SystemConfig,
    grams: &[&CMat],
    u: &[CMat],
    x: &[CMat],
) -> Result<Vec<CMat>> {
    let off = offsets(&cfg.n_k);
    (0..cfg.users())
        .map(|k| {
            let d = cfg.d_k[k];
            let signal = grams[k].rows(off[k], cfg.n_k[k]) * &x[k];
            let e = CMat::identity(d, d) - u[k].adjoint() * signal;
            let w = e
                .try_inverse()
                .map(|w| hermitian_part(&w))
                .filter(all_finite)
                .ok_or_else(|| PrecodingError::DegenerateState {
                    iteration: 0,
                    user: k,
                    reason: "MSE matrix is singular".into(),
                })?;
            Ok(w)
        })
        .collect()
}

/// `sum_i (sigma_i^2 / P_max) alpha_i Tr(U_i W_i U_i^H)`.
pub(crate) fn power_multiplier(cfg: &SystemConfig, u: &[CMat], w: &[CMat]) -> f64 {
    (0..cfg.users())
        .map(|i| cfg.sigma2[i] / cfg.p_max * cfg.alpha[i] * trace_re(&(&u[i] * &w[i] * u[i].adjoint())))
        .sum()
}

/// `blockdiag(alpha_k U_k W_k U_k^H)`, `N x N`.
pub(crate) fn weighted_filters(cfg: &SystemConfig, u: &[CMat], w: &[CMat]) -> CMat {
    let blocks: Vec<CMat> = (0..cfg.users())
        .map(|k| (&u[k] * &w[k] * u[k].adjoint()).scale(cfg.alpha[k]))
        .collect();
    block_diag(&blocks)
}

/// `N x D_k` right-hand side with `alpha_k U_k W_k` in row block `k`.
pub(crate) fn rhs_block(cfg: &SystemConfig, u: &[CMat], w: &[CMat], k: usize) -> CMat {
    let off = offsets(&cfg.n_k);
    let mut r = CMat::zeros(cfg.n(), cfg.d_k[k]);
    r.rows_mut(off[k], cfg.n_k[k])
        .copy_from(&(&u[k] * &w[k]).scale(cfg.alpha[k]));
    r
}

/// Solves `(G T G + mu G) X = G R`. `None` when the system matrix vanishes.
pub(crate) fn solve_coefficients(g: &CMat, t: &CMat, mu: f64, r: &CMat) -> Option<(CMat, SolveKind)> {
    let a = g * t * g + g.scale(mu);
    hermitian_solve(&a, &(g * r))
}

/// Column-block matrix `[.. | alpha_k X_k W_k U_k^H | ..]` restricted to `users`.
pub(crate) fn cross_term(cfg: &SystemConfig, u: &[CMat], w: &[CMat], x: &[CMat], users: &[usize]) -> CMat {
    let off = offsets(&cfg.n_k);
    let mut c = CMat::zeros(cfg.n(), cfg.n());
    for &k in users {
        c.columns_mut(off[k], cfg.n_k[k])
            .copy_from(&(&x[k] * &w[k] * u[k].adjoint()).scale(cfg.alpha[k]));
    }
    c
}

pub(crate) fn outer_sum(x: &[CMat], users: &[usize]) -> CMat {
    let n = x.first().map_or(0, |v| v.nrows());
    let mut s = CMat::zeros(n, n);
    for &k in users {
        s += &x[k] * x[k].adjoint();
    }
    s
}

/// Selection-dependent part of the weighted MSE objective:
/// `Re Tr(T G S G) - 2 Re Tr(C G) + mu Tr(S G)` with `G = H diag(d) H^H`.
pub(crate) struct SelectionTerms {
    pub t: CMat,
    pub s: CMat,
    pub c: CMat,
    pub mu: f64,
}

impl SelectionTerms {
    pub(crate) fn value(&self, h_all: &CMat, d: &[f64]) -> f64 {
        let g = gram_relaxed(h_all, d);
        let gs = &g * &self.s;
        trace_re(&(&self.t * &gs * &g)) - 2.0 * trace_re(&(&self.c * &g)) + self.mu * trace_re(&gs)
    }

    pub(crate) fn gradient(&self, h_all: &CMat, d: &[f64]) -> Vec<f64> {
        let g = gram_relaxed(h_all, d);
        let hh = h_all.adjoint();
        let quad = diag_product(&(&hh * &self.t * &g * &self.s), h_all);
        let lin = diag_product(&(&hh * &self.c), h_all);
        let pow = diag_product(&(&hh * &self.s), h_all);
        (0..h_all.ncols())
            .map(|i| 2.0 * quad[i].re - 2.0 * lin[i].re + self.mu * pow[i].re)
            .collect()
    }

    /// `Re(A o B^T)` with `A = H^H T H`, `B = H^H S H`; half the Hessian of the value.
    pub(crate) fn omega(&self, h_all: &CMat) -> DMatrix<f64> {
        let hh = h_all.adjoint();
        let a = &hh * &self.t * h_all;
        let b = &hh * &self.s * h_all;
        let m = h_all.ncols();
        DMatrix::from_fn(m, m, |i, j| (a[(i, j)] * b[(j, i)]).re)
    }
}

/// One selection step from `current`; returns the new selection and the penalty weight.
pub(crate) fn selection_pick(
    terms: &SelectionTerms,
    h_all: &CMat,
    current: &SelectionVector,
    k_s: usize,
    rule: SelectionRule,
) -> Result<(SelectionVector, f64)> {
    let beta = penalty_beta(&terms.omega(h_all));
    let grad = terms.gradient(h_all, &current.to_f64());
    match rule {
        SelectionRule::Guarded => {
            let pen = select_beams(&selection_cost(&grad, current, beta, SelectionRule::Penalized), k_s)?;
            let plain = select_beams(&grad, k_s)?;
            if plain != pen && terms.value(h_all, &plain.to_f64()) < terms.value(h_all, &pen.to_f64()) {
                Ok((plain, beta))
            } else {
                Ok((pen, beta))
            }
        }
        _ => Ok((select_beams(&selection_cost(&grad, current, beta, rule), k_s)?, beta)),
    }
}

/// `sum_k alpha_k [Tr(W_k E_k) - logdet W_k]` with `E_k` the MSE matrix under the
/// absorbed-power noise.
pub(crate) fn objective(
    cfg: &SystemConfig,
    grams: &[&CMat],
    u: &[CMat],
    w: &[CMat],
    x: &[CMat],
) -> Result<f64> {
    let noise = effective_noise(cfg, grams, x);
    let mut total = 0.0;
    for k in 0..cfg.users() {
        let d = cfg.d_k[k];
        let rx = received(cfg, grams, x, k);
        let miss = CMat::identity(d, d) - u[k].adjoint() * &rx[k];
        let mut e = &miss * miss.adjoint() + (u[k].adjoint() * &u[k]).scale(noise[k]);
        for (j, r) in rx.iter().enumerate() {
            if j != k {
                let ur = u[k].adjoint() * r;
                e += &ur * ur.adjoint();
            }
        }
        let ld = logdet_hpd(&w[k]).ok_or_else(|| PrecodingError::DegenerateState {
            iteration: 0,
            user: k,
            reason: "weight matrix is not positive definite".into(),
        })?;
        total += cfg.alpha[k] * (trace_re(&(&w[k] * e)) - ld);
    }
    Ok(total)
}

/// `N x D_k` blocks of an `N x D` matrix, split by stream counts.
pub(crate) fn split_columns(cfg: &SystemConfig, x: &CMat) -> Vec<CMat> {
    let off = offsets(&cfg.d_k);
    (0..cfg.users())
        .map(|k| x.columns(off[k], cfg.d_k[k]).into_owned())
        .collect()
}
