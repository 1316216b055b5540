//! Solver outputs, options, and traces shared by the sparse solvers.

use serde::{Deserialize, Serialize};

use crate::channel::{to_antenna_precoder, ChannelSet};
use crate::config::SystemConfig;
use crate::error::{PrecodingError, Result};
use crate::linalg::{frob2, CMat};
use crate::rate::rates;
use crate::selection::{SelectionRule, SelectionVector};

/// Beam support of a sparse precoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Support {
    /// One selection shared by every user.
    Common(SelectionVector),
    /// One selection per user.
    PerUser(Vec<SelectionVector>),
}

impl Support {
    /// Selection used by user `k`.
    pub fn for_user(&self, k: usize) -> &SelectionVector {
        match self {
            Support::Common(d) => d,
            Support::PerUser(ds) => &ds[k],
        }
    }

    pub fn users_view(&self, users: usize) -> Vec<&SelectionVector> {
        (0..users).map(|k| self.for_user(k)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct PrecoderSolution {
    pub support: Support,
    /// Coefficients `X_k`, `N x D_k`.
    pub x: Vec<CMat>,
    /// Power scaling applied at recovery.
    pub omega: f64,
    /// Angle-domain precoders `sqrt(omega) diag(delta_k) H^H X_k`, `M x D_k`.
    pub p: Vec<CMat>,
    /// Antenna-domain precoders `F^H P_k`.
    pub p_ant: Vec<CMat>,
    pub wsr_bits: f64,
    /// Iterations actually run.
    pub iterations: usize,
    /// Times the coefficient system vanished and the matched filter was reloaded.
    pub reinit_events: usize,
}

impl PrecoderSolution {
    pub fn power(&self) -> f64 {
        self.p.iter().map(frob2).sum()
    }
}

/// Builds `P_k = sqrt(omega) diag(delta_k) H^H X_k` with `omega` chosen so the
/// total power equals `P_max`.
pub fn recover_from_coefficients(
    cfg: &SystemConfig,
    channels: &ChannelSet,
    support: Support,
    x: &[CMat],
) -> Result<PrecoderSolution> {
    if x.len() != cfg.users() {
        return Err(PrecodingError::dims("coefficient blocks", cfg.users(), x.len()));
    }
    let hh = channels.h_all.adjoint();
    let mut raw = Vec::with_capacity(x.len());
    for (k, xk) in x.iter().enumerate() {
        if xk.nrows() != hh.ncols() {
            return Err(PrecodingError::dims("coefficient rows", hh.ncols(), xk.nrows()));
        }
        let mut p = &hh * xk;
        let delta = support.for_user(k);
        for r in 0..p.nrows() {
            if !delta.is_active(r) {
                p.row_mut(r).fill(crate::linalg::ZERO);
            }
        }
        raw.push(p);
    }
    let power: f64 = raw.iter().map(frob2).sum();
    if !(power > 0.0) || !power.is_finite() {
        return Err(PrecodingError::ZeroPower);
    }
    let omega = cfg.p_max / power;
    let s = omega.sqrt();
    let p: Vec<CMat> = raw.iter().map(|v| v.scale(s)).collect();
    let p_ant = p.iter().map(to_antenna_precoder).collect();
    let report = rates(&channels.h, &p, &cfg.sigma2, &cfg.alpha)?;
    Ok(PrecoderSolution {
        support,
        x: x.to_vec(),
        omega,
        p,
        p_ant,
        wsr_bits: report.wsr,
        iterations: 0,
        reinit_events: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Relative objective change that ends the run.
    pub tol: f64,
    pub rule: SelectionRule,
    /// Keep the initial selection for the whole run.
    pub freeze_selection: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 50,
            tol: 1e-5,
            rule: SelectionRule::Penalized,
            freeze_selection: false,
        }
    }
}

impl SolverOptions {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(PrecodingError::InvalidConfig("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// One row of a sparse solver trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseTraceRow {
    pub iteration: usize,
    pub wsr_bits: f64,
    pub objective_nats: f64,
    /// Largest penalty weight used in the selection step.
    pub beta: f64,
    pub mu: f64,
    /// Hamming distance to the previous selection, summed over users.
    pub delta_hamming_change: usize,
    /// One entry for a common support, one per user otherwise.
    pub supports: Vec<SelectionVector>,
}

/// Relative change used by the stopping rules.
pub(crate) fn relative_change(prev: f64, cur: f64) -> f64 {
    (cur - prev).abs() / prev.abs().max(1e-12)
}
