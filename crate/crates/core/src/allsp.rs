//! Angle-level sparse precoding: one beam selection shared by all users.
//!
//! Precoders are kept in the form `P_k = diag(delta) H^H X_k`, so the
//! coefficient update is an `N x N` solve no matter how large `M` is. Each
//! outer iteration runs the receive-filter, weight and coefficient updates and
//! then one majorize-minimize selection step (a gradient and a sort).

use nalgebra::DMatrix;

use crate::blocks::{self, SelectionTerms};
use crate::channel::ChannelSet;
use crate::config::SystemConfig;
use crate::error::{PrecodingError, Result};
use crate::linalg::{all_finite, CMat};
use crate::selection::{penalty_beta, top_k, SelectionRule, SelectionVector};
use crate::solution::{
    recover_from_coefficients, relative_change, PrecoderSolution, SolverOptions, SparseTraceRow, Support,
};

#[derive(Debug, Clone)]
pub struct AllspState {
    /// Receive filters, `N_k x D_k`.
    pub u: Vec<CMat>,
    /// Weights, `D_k x D_k` Hermitian positive definite.
    pub w: Vec<CMat>,
    /// Coefficients, `N x D_k`.
    pub x: Vec<CMat>,
    pub delta: SelectionVector,
    pub mu: f64,
    pub beta: f64,
}

impl AllspState {
    /// Matched-filter coefficients on `delta`, identity weights, zero filters.
    pub fn new(cfg: &SystemConfig, delta: SelectionVector) -> Result<Self> {
        if delta.m() != cfg.m {
            return Err(PrecodingError::dims("selection length", cfg.m, delta.m()));
        }
        if delta.k_s() != cfg.k_s {
            return Err(PrecodingError::dims("active beams", cfg.k_s, delta.k_s()));
        }
        Ok(AllspState {
            u: cfg.n_k.iter().zip(&cfg.d_k).map(|(&n, &d)| CMat::zeros(n, d)).collect(),
            w: cfg.d_k.iter().map(|&d| CMat::identity(d, d)).collect(),
            x: blocks::matched_filter_x(cfg),
            delta,
            mu: 0.0,
            beta: 0.0,
        })
    }
}

/// The `K_s` beams carrying the most channel energy.
pub fn initial_selection(channels: &ChannelSet, k_s: usize) -> Result<SelectionVector> {
    top_k(&channels.beam_energy(), k_s)
}

/// `H_k diag(delta) H^H` (`N_k x N`) from the active columns only.
pub fn effective_channel(h_all: &CMat, h_k: &CMat, delta: &SelectionVector) -> Result<CMat> {
    if h_k.ncols() != h_all.ncols() || delta.m() != h_all.ncols() {
        return Err(PrecodingError::dims("effective channel beams", h_all.ncols(), h_k.ncols()));
    }
    let cols = delta.active();
    Ok(h_k.select_columns(cols.iter()) * h_all.select_columns(cols.iter()).adjoint())
}

/// Scalar multiplying the identity in each user's absorbed-power noise.
pub fn effective_noise(cfg: &SystemConfig, channels: &ChannelSet, state: &AllspState) -> Vec<f64> {
    let g = blocks::gram(&channels.h_all, &state.delta);
    blocks::effective_noise(cfg, &vec![&g; cfg.users()], &state.x)
}

pub fn update_u(cfg: &SystemConfig, channels: &ChannelSet, state: &AllspState) -> Result<Vec<CMat>> {
    let g = blocks::gram(&channels.h_all, &state.delta);
    blocks::update_u(cfg, &vec![&g; cfg.users()], &state.x)
}

/// Uses the filters already in `state`.
pub fn update_w(cfg: &SystemConfig, channels: &ChannelSet, state: &AllspState) -> Result<Vec<CMat>> {
    let g = blocks::gram(&channels.h_all, &state.delta);
    blocks::update_w(cfg, &vec![&g; cfg.users()], &state.u, &state.x)
}

#[derive(Debug, Clone)]
pub struct CoefficientUpdate {
    pub x: Vec<CMat>,
    pub mu: f64,
    /// The system matrix vanished and the matched filter was reloaded.
    pub reinitialized: bool,
}

/// One `N x N` solve shared by every user.
pub fn update_x(cfg: &SystemConfig, channels: &ChannelSet, state: &AllspState) -> Result<CoefficientUpdate> {
    let g = blocks::gram(&channels.h_all, &state.delta);
    let mu = blocks::power_multiplier(cfg, &state.u, &state.w);
    let t = blocks::weighted_filters(cfg, &state.u, &state.w);
    let mut r = CMat::zeros(cfg.n(), cfg.d());
    let mut col = 0;
    for k in 0..cfg.users() {
        let rk = blocks::rhs_block(cfg, &state.u, &state.w, k);
        r.columns_mut(col, rk.ncols()).copy_from(&rk);
        col += rk.ncols();
    }
    match blocks::solve_coefficients(&g, &t, mu, &r) {
        Some((x, _)) if all_finite(&x) => Ok(CoefficientUpdate {
            x: blocks::split_columns(cfg, &x),
            mu,
            reinitialized: false,
        }),
        Some(_) => Err(PrecodingError::NonFinite {
            iteration: 0,
            context: "coefficient update".into(),
        }),
        None => Ok(CoefficientUpdate {
            x: blocks::matched_filter_x(cfg),
            mu,
            reinitialized: true,
        }),
    }
}

fn selection_terms(cfg: &SystemConfig, state: &AllspState) -> SelectionTerms {
    let all: Vec<usize> = (0..cfg.users()).collect();
    SelectionTerms {
        t: blocks::weighted_filters(cfg, &state.u, &state.w),
        s: blocks::outer_sum(&state.x, &all),
        c: blocks::cross_term(cfg, &state.u, &state.w, &state.x, &all),
        mu: state.mu,
    }
}

/// `Re{(sum_k alpha_k H_k^H U_k W_k U_k^H H_k) o (H^H (sum_j X_j X_j^H) H)^T}`.
pub fn omega(cfg: &SystemConfig, channels: &ChannelSet, state: &AllspState) -> DMatrix<f64> {
    selection_terms(cfg, state).omega(&channels.h_all)
}

/// Penalty weight from the current state, Gershgorin bound times 1.1.
pub fn state_penalty_beta(cfg: &SystemConfig, channels: &ChannelSet, state: &AllspState) -> f64 {
    penalty_beta(&omega(cfg, channels, state))
}

/// Gradient of `f` with respect to the diagonal of the selection, at `state.delta`.
pub fn grad_f_delta(cfg: &SystemConfig, channels: &ChannelSet, state: &AllspState) -> Vec<f64> {
    grad_f_delta_at(cfg, channels, state, &state.delta.to_f64())
}

/// Gradient of `f` at a relaxed diagonal.
pub fn grad_f_delta_at(cfg: &SystemConfig, channels: &ChannelSet, state: &AllspState, delta: &[f64]) -> Vec<f64> {
    selection_terms(cfg, state).gradient(&channels.h_all, delta)
}

/// Selection-dependent part of the weighted MSE objective at a relaxed diagonal.
pub fn eval_f_delta(cfg: &SystemConfig, channels: &ChannelSet, state: &AllspState, delta: &[f64]) -> f64 {
    selection_terms(cfg, state).value(&channels.h_all, delta)
}

/// Weighted MSE objective `sum_k alpha_k [Tr(W_k E_k) - logdet W_k]` in nats.
pub fn objective(cfg: &SystemConfig, channels: &ChannelSet, state: &AllspState) -> Result<f64> {
    let g = blocks::gram(&channels.h_all, &state.delta);
    blocks::objective(cfg, &vec![&g; cfg.users()], &state.u, &state.w, &state.x)
}

/// One majorize-minimize step. Returns the new selection and the penalty used.
pub fn selection_step(
    cfg: &SystemConfig,
    channels: &ChannelSet,
    state: &AllspState,
    rule: SelectionRule,
) -> Result<(SelectionVector, f64)> {
    let terms = selection_terms(cfg, state);
    blocks::selection_pick(&terms, &channels.h_all, &state.delta, cfg.k_s, rule)
}

pub fn recover_precoder(cfg: &SystemConfig, channels: &ChannelSet, state: &AllspState) -> Result<PrecoderSolution> {
    recover_from_coefficients(cfg, channels, Support::Common(state.delta.clone()), &state.x)
}

/// Runs the full iteration from `init` and returns the recovered solution with its trace.
///
/// Row 0 of the trace is the starting point, with fresh filters and weights.
pub fn allsp_solve(
    cfg: &SystemConfig,
    channels: &ChannelSet,
    init: &SelectionVector,
    opts: &SolverOptions,
) -> Result<(PrecoderSolution, Vec<SparseTraceRow>)> {
    cfg.validate()?;
    channels.check(cfg)?;
    opts.validate()?;
    let mut state = AllspState::new(cfg, init.clone())?;

    let mut probe = state.clone();
    probe.u = update_u(cfg, channels, &probe)?;
    probe.w = update_w(cfg, channels, &probe)?;
    let mut prev_obj = objective(cfg, channels, &probe)?;
    let mut trace = vec![SparseTraceRow {
        iteration: 0,
        wsr_bits: recover_precoder(cfg, channels, &state)?.wsr_bits,
        objective_nats: prev_obj,
        beta: 0.0,
        mu: blocks::power_multiplier(cfg, &probe.u, &probe.w),
        delta_hamming_change: 0,
        supports: vec![state.delta.clone()],
    }];

    let mut reinit_events = 0;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        let step = |state: &mut AllspState| -> Result<(bool, usize)> {
            state.u = update_u(cfg, channels, state)?;
            state.w = update_w(cfg, channels, state)?;
            let xu = update_x(cfg, channels, state)?;
            state.x = xu.x;
            state.mu = xu.mu;
            let (next, beta) = selection_step(cfg, channels, state, opts.rule)?;
            state.beta = beta;
            let mut changed = 0;
            if !opts.freeze_selection {
                changed = next.hamming(&state.delta);
                state.delta = next;
            }
            Ok((xu.reinitialized, changed))
        };
        let (reinit, changed) = step(&mut state).map_err(|e| e.at_iteration(it))?;
        reinit_events += usize::from(reinit);
        let obj = objective(cfg, channels, &state).map_err(|e| e.at_iteration(it))?;
        let sol = recover_precoder(cfg, channels, &state).map_err(|e| e.at_iteration(it))?;
        trace.push(SparseTraceRow {
            iteration: it,
            wsr_bits: sol.wsr_bits,
            objective_nats: obj,
            beta: state.beta,
            mu: state.mu,
            delta_hamming_change: changed,
            supports: vec![state.delta.clone()],
        });
        iterations = it;
        let done = relative_change(prev_obj, obj) < opts.tol;
        prev_obj = obj;
        if done {
            break;
        }
    }
    let mut sol = recover_precoder(cfg, channels, &state)?;
    sol.iterations = iterations;
    sol.reinit_events = reinit_events;
    Ok((sol, trace))
}
