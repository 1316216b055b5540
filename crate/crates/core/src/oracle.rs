//! Brute-force and analytic checks for tiny instances.

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::config::SystemConfig;
use crate::error::{PrecodingError, Result};
use crate::linalg::{frob2, CMat};
use crate::rate::rates;
use crate::selection::SelectionVector;
use crate::solution::{PrecoderSolution, Support};
use crate::wmmse::supported_wmmse;

/// Largest number of candidate supports an enumeration may visit.
pub const ORACLE_BUDGET: u128 = 10_000;
pub const ORACLE_MAX_ITER: usize = 200;
pub const ORACLE_TOL: f64 = 1e-8;

/// One enumerated candidate: a support per user (a single entry when shared).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportScore {
    pub supports: Vec<SelectionVector>,
    pub wsr_bits: f64,
}

impl SupportScore {
    /// `"0;2"` for a shared support, `"0;2|1;3"` for per-user supports.
    pub fn label(&self) -> String {
        self.supports.iter().map(|s| s.format_indices()).join("|")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub best: SupportScore,
    /// Every candidate in lexicographic enumeration order.
    pub per_support: Vec<SupportScore>,
    /// Algorithm WSR over the best WSR, once an algorithm result is attached.
    pub ratio: Option<f64>,
}

impl OracleResult {
    pub fn best_wsr(&self) -> f64 {
        self.best.wsr_bits
    }

    pub fn with_ratio(mut self, algorithm_wsr: f64) -> Self {
        self.ratio = Some(if self.best.wsr_bits > 0.0 {
            algorithm_wsr / self.best.wsr_bits
        } else {
            0.0
        });
        self
    }

    /// `support,wsr_bits` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("support,wsr_bits\n");
        for s in &self.per_support {
            out.push_str(&format!("{},{:?}\n", s.label(), s.wsr_bits));
        }
        out
    }
}

/// `C(n, k)` without overflow for the sizes we enumerate.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn score(cfg: &SystemConfig, channels: &ChannelSet, supports: Vec<SelectionVector>) -> Result<SupportScore> {
    let rows: Vec<Vec<usize>> = (0..cfg.users())
        .map(|k| supports[k.min(supports.len() - 1)].active().to_vec())
        .collect();
    let wsr_bits = match supported_wmmse(cfg, channels, &rows, None, ORACLE_MAX_ITER, ORACLE_TOL) {
        Ok(run) => run.wsr_bits,
        // nothing on this support reaches any user
        Err(PrecodingError::ZeroPower) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(SupportScore { supports, wsr_bits })
}

/// Maximum with the lexicographically lowest support winning ties.
fn reduce(per_support: Vec<SupportScore>) -> OracleResult {
    let mut best = 0;
    for (i, s) in per_support.iter().enumerate() {
        if s.wsr_bits > per_support[best].wsr_bits {
            best = i;
        }
    }
    OracleResult {
        best: per_support[best].clone(),
        per_support,
        ratio: None,
    }
}

fn check_budget(count: u128) -> Result<()> {
    if count > ORACLE_BUDGET {
        return Err(PrecodingError::BudgetExceeded {
            count,
            limit: ORACLE_BUDGET,
        });
    }
    Ok(())
}

fn all_supports(m: usize, k_s: usize) -> Result<Vec<SelectionVector>> {
    (0..m)
        .combinations(k_s)
        .map(|c| SelectionVector::from_indices(m, &c))
        .collect()
}

/// Runs restricted WMMSE on every shared support of size `K_s`.
pub fn exhaustive_beam_search(cfg: &SystemConfig, channels: &ChannelSet) -> Result<OracleResult> {
    cfg.validate()?;
    channels.check(cfg)?;
    check_budget(binomial(cfg.m, cfg.k_s))?;
    let candidates = all_supports(cfg.m, cfg.k_s)?;
    let per_support = candidates
        .into_par_iter()
        .map(|s| score(cfg, channels, vec![s]))
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce(per_support))
}

/// Runs restricted WMMSE on every combination of per-user supports.
pub fn exhaustive_user_beam_search(cfg: &SystemConfig, channels: &ChannelSet) -> Result<OracleResult> {
    cfg.validate()?;
    channels.check(cfg)?;
    let single = binomial(cfg.m, cfg.k_s);
    let count = (0..cfg.users()).try_fold(1u128, |acc, _| acc.checked_mul(single));
    check_budget(count.unwrap_or(u128::MAX))?;
    let singles = all_supports(cfg.m, cfg.k_s)?;
    let joint: Vec<Vec<SelectionVector>> = (0..cfg.users())
        .map(|_| singles.iter().cloned())
        .multi_cartesian_product()
        .collect();
    let per_support = joint
        .into_par_iter()
        .map(|s| score(cfg, channels, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce(per_support))
}

/// Worst coordinate of `|central difference - g_i|`, relative to the largest gradient entry.
pub fn finite_diff_check(
    f: impl Fn(&[f64]) -> f64,
    g: impl Fn(&[f64]) -> Vec<f64>,
    point: &[f64],
    step: f64,
) -> f64 {
    let grad = g(point);
    let scale = grad.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut work = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..point.len() {
        work[i] = point[i] + step;
        let up = f(&work);
        work[i] = point[i] - step;
        let dn = f(&work);
        work[i] = point[i];
        let fd = (up - dn) / (2.0 * step);
        worst = worst.max((fd - grad[i]).abs() / scale);
    }
    worst
}

/// Orthonormal basis of the columns of `diag(delta) H^H`, and whether it lost rank.
fn span_basis(h_all: &CMat, delta: &SelectionVector) -> (CMat, bool) {
    let mut a = h_all.adjoint();
    for r in 0..a.nrows() {
        if !delta.is_active(r) {
            a.row_mut(r).fill(crate::linalg::ZERO);
        }
    }
    let full = a.ncols().min(delta.k_s());
    let dim = a.nrows().max(a.ncols()) as f64;
    let svd = a.svd(true, false);
    let u = svd.u.expect("left vectors requested");
    let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    // numerical rank: anything above roundoff level is a real direction
    let cut = dim * f64::EPSILON * s_max;
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > cut && s_max > 0.0)
        .collect();
    let basis = u.select_columns(keep.iter());
    let deficient = keep.len() < full;
    (basis, deficient)
}

fn project(basis: &CMat, p: &CMat) -> CMat {
    basis * (basis.adjoint() * p)
}

/// Orthonormal basis of the active rows orthogonal to `span(diag(delta) H^H)`,
/// from a full Householder QR of `[A | I]`. Its columns satisfy
/// `H c ~ eps ||H||` even when the span is badly conditioned.
fn complement_basis(h_all: &CMat, delta: &SelectionVector) -> CMat {
    let active = delta.active();
    let n = h_all.nrows();
    let ks = active.len();
    let mut aug = CMat::zeros(ks, n + ks);
    for (i, &r) in active.iter().enumerate() {
        for c in 0..n {
            aug[(i, c)] = h_all[(c, r)].conj();
        }
        aug[(i, n + i)] = num_complex::Complex64::new(1.0, 0.0);
    }
    let q = aug.qr().q();
    let rest = ks.saturating_sub(n);
    let mut out = CMat::zeros(h_all.ncols(), rest);
    for (i, &r) in active.iter().enumerate() {
        for c in 0..rest {
            out[(r, c)] = q[(i, n + c)];
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Projection {
    /// Components inside each user's span.
    pub projected: Vec<CMat>,
    /// Projected precoders scaled to full power.
    pub rescaled: Vec<CMat>,
    pub eta: f64,
    pub wsr_before: f64,
    pub wsr_after: f64,
    /// Total power of the projected precoders before rescaling.
    pub projected_power: f64,
    /// Largest `||H (P_k - A_k)|| / ||H P_k||` over users.
    pub null_residual: f64,
    /// Some span had fewer directions than `min(K_s, N)`.
    pub rank_deficient: bool,
}

/// Splits each precoder into its part in `span(diag(delta_k) H^H)` and the
/// orthogonal rest, drops the rest, and rescales to `P_max`.
pub fn project_and_rescale(
    cfg: &SystemConfig,
    channels: &ChannelSet,
    precoders: &[CMat],
    support: &Support,
) -> Result<Projection> {
    if precoders.len() != cfg.users() {
        return Err(PrecodingError::dims("precoder count", cfg.users(), precoders.len()));
    }
    let before = rates(&channels.h, precoders, &cfg.sigma2, &cfg.alpha)?.wsr;
    let mut projected = Vec::with_capacity(precoders.len());
    let mut rank_deficient = false;
    let mut null_residual = 0.0f64;
    for (k, p) in precoders.iter().enumerate() {
        let (basis, deficient) = span_basis(&channels.h_all, support.for_user(k));
        rank_deficient |= deficient;
        let a = if deficient {
            project(&basis, p)
        } else {
            let c = complement_basis(&channels.h_all, support.for_user(k));
            p - &c * (c.adjoint() * p)
        };
        let hp = (&channels.h_all * p).norm();
        if hp > 0.0 {
            null_residual = null_residual.max((&channels.h_all * (p - &a)).norm() / hp);
        }
        projected.push(a);
    }
    let projected_power: f64 = projected.iter().map(frob2).sum();
    if !(projected_power > 0.0) {
        return Err(PrecodingError::ZeroPower);
    }
    let eta = (cfg.p_max / projected_power).sqrt();
    let rescaled: Vec<CMat> = projected.iter().map(|a| a.scale(eta)).collect();
    let after = rates(&channels.h, &rescaled, &cfg.sigma2, &cfg.alpha)?.wsr;
    Ok(Projection {
        projected,
        rescaled,
        eta,
        wsr_before: before,
        wsr_after: after,
        projected_power,
        null_residual,
        rank_deficient,
    })
}

/// Largest relative distance of a solution's precoders from their spans.
pub fn subspace_residual(channels: &ChannelSet, solution: &PrecoderSolution) -> f64 {
    solution
        .p
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let (basis, _) = span_basis(&channels.h_all, solution.support.for_user(k));
            let n = p.norm();
            if n > 0.0 {
                (p - project(&basis, p)).norm() / n
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}
