//! Angle-user-level sparse precoding: every user has its own beam selection.
//!
//! User `k`'s precoder is `diag(delta_k) H^H X_k`. Interference from user `j`
//! at user `k` goes through `H_k diag(delta_j) H^H`. Given the filters, weights
//! and coefficients, the selection objective splits into one term per user, so
//! the selection block is `K` independent gradient-and-sort steps taken from the
//! same snapshot.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::allsp::initial_selection;
use crate::blocks::{self, SelectionTerms};
use crate::channel::{column_energy, ChannelSet};
use crate::config::SystemConfig;
use crate::error::{PrecodingError, Result};
use crate::linalg::{all_finite, CMat};
use crate::selection::{top_k, SelectionRule, SelectionVector};
use crate::solution::{
    recover_from_coefficients, relative_change, PrecoderSolution, SolverOptions, SparseTraceRow, Support,
};

#[derive(Debug, Clone)]
pub struct AullspState {
    pub u: Vec<CMat>,
    pub w: Vec<CMat>,
    pub x: Vec<CMat>,
    pub deltas: Vec<SelectionVector>,
    pub gamma: f64,
    pub betas: Vec<f64>,
}

impl AullspState {
    pub fn new(cfg: &SystemConfig, deltas: Vec<SelectionVector>) -> Result<Self> {
        if deltas.len() != cfg.users() {
            return Err(PrecodingError::dims("per-user selections", cfg.users(), deltas.len()));
        }
        for d in &deltas {
            if d.m() != cfg.m {
                return Err(PrecodingError::dims("selection length", cfg.m, d.m()));
            }
            if d.k_s() != cfg.k_s {
                return Err(PrecodingError::dims("active beams", cfg.k_s, d.k_s()));
            }
        }
        Ok(AullspState {
            u: cfg.n_k.iter().zip(&cfg.d_k).map(|(&n, &d)| CMat::zeros(n, d)).collect(),
            w: cfg.d_k.iter().map(|&d| CMat::identity(d, d)).collect(),
            x: blocks::matched_filter_x(cfg),
            betas: vec![0.0; cfg.users()],
            deltas,
            gamma: 0.0,
        })
    }

    fn grams(&self, channels: &ChannelSet) -> Vec<CMat> {
        self.deltas.iter().map(|d| blocks::gram(&channels.h_all, d)).collect()
    }
}

/// Each user's `K_s` strongest beams of its own channel.
pub fn initial_user_selections(channels: &ChannelSet, k_s: usize) -> Result<Vec<SelectionVector>> {
    channels.h.iter().map(|hk| top_k(&column_energy(hk), k_s)).collect()
}

/// The same energy-ranked selection for every user.
pub fn initial_common_selections(channels: &ChannelSet, k_s: usize) -> Result<Vec<SelectionVector>> {
    let d = initial_selection(channels, k_s)?;
    Ok(vec![d; channels.users()])
}

fn refs(g: &[CMat]) -> Vec<&CMat> {
    g.iter().collect()
}

pub fn effective_noise_user(cfg: &SystemConfig, channels: &ChannelSet, state: &AullspState) -> Vec<f64> {
    let g = state.grams(channels);
    blocks::effective_noise(cfg, &refs(&g), &state.x)
}

pub fn update_u_user(cfg: &SystemConfig, channels: &ChannelSet, state: &AullspState) -> Result<Vec<CMat>> {
    let g = state.grams(channels);
    blocks::update_u(cfg, &refs(&g), &state.x)
}

pub fn update_w_user(cfg: &SystemConfig, channels: &ChannelSet, state: &AullspState) -> Result<Vec<CMat>> {
    let g = state.grams(channels);
    blocks::update_w(cfg, &refs(&g), &state.u, &state.x)
}

#[derive(Debug, Clone)]
pub struct UserCoefficientUpdate {
    pub x: Vec<CMat>,
    pub gamma: f64,
    /// Users whose system matrix vanished and whose matched filter was reloaded.
    pub reinitialized: Vec<usize>,
}

/// One `N x N` solve per user, each built from that user's own selection.
pub fn update_x_user(cfg: &SystemConfig, channels: &ChannelSet, state: &AullspState) -> Result<UserCoefficientUpdate> {
    let g = state.grams(channels);
    let gamma = blocks::power_multiplier(cfg, &state.u, &state.w);
    let t = blocks::weighted_filters(cfg, &state.u, &state.w);
    let fallback = blocks::matched_filter_x(cfg);
    let mut x = Vec::with_capacity(cfg.users());
    let mut reinitialized = Vec::new();
    for k in 0..cfg.users() {
        let r = blocks::rhs_block(cfg, &state.u, &state.w, k);
        match blocks::solve_coefficients(&g[k], &t, gamma, &r) {
            Some((xk, _)) if all_finite(&xk) => x.push(xk),
            Some(_) => {
                return Err(PrecodingError::NonFinite {
                    iteration: 0,
                    context: format!("coefficient update of user {k}"),
                })
            }
            None => {
                x.push(fallback[k].clone());
                reinitialized.push(k);
            }
        }
    }
    Ok(UserCoefficientUpdate { x, gamma, reinitialized })
}

fn user_terms(cfg: &SystemConfig, state: &AullspState, k: usize) -> SelectionTerms {
    SelectionTerms {
        t: blocks::weighted_filters(cfg, &state.u, &state.w),
        s: blocks::outer_sum(&state.x, &[k]),
        c: blocks::cross_term(cfg, &state.u, &state.w, &state.x, &[k]),
        mu: state.gamma,
    }
}

/// `Re{(sum_i alpha_i H_i^H U_i W_i U_i^H H_i) o (H^H X_k X_k^H H)^T}`.
pub fn omega_user(cfg: &SystemConfig, channels: &ChannelSet, state: &AullspState, k: usize) -> DMatrix<f64> {
    user_terms(cfg, state, k).omega(&channels.h_all)
}

/// Gradient of user `k`'s selection term at `state.deltas[k]`.
pub fn grad_fk_delta(cfg: &SystemConfig, channels: &ChannelSet, state: &AullspState, k: usize) -> Vec<f64> {
    grad_fk_delta_at(cfg, channels, state, k, &state.deltas[k].to_f64())
}

pub fn grad_fk_delta_at(cfg: &SystemConfig, channels: &ChannelSet, state: &AullspState, k: usize, delta: &[f64]) -> Vec<f64> {
    user_terms(cfg, state, k).gradient(&channels.h_all, delta)
}

/// User `k`'s selection-dependent objective term at a relaxed diagonal.
pub fn eval_fk_delta(cfg: &SystemConfig, channels: &ChannelSet, state: &AullspState, k: usize, delta: &[f64]) -> f64 {
    user_terms(cfg, state, k).value(&channels.h_all, delta)
}

pub fn objective_user(cfg: &SystemConfig, channels: &ChannelSet, state: &AullspState) -> Result<f64> {
    let g = state.grams(channels);
    blocks::objective(cfg, &refs(&g), &state.u, &state.w, &state.x)
}

/// Per-user majorize-minimize steps from one snapshot. Returns the selections and penalties.
pub fn select_beams_per_user(
    cfg: &SystemConfig,
    channels: &ChannelSet,
    state: &AullspState,
    rule: SelectionRule,
) -> Result<(Vec<SelectionVector>, Vec<f64>)> {
    let picks: Vec<Result<(SelectionVector, f64)>> = (0..cfg.users())
        .into_par_iter()
        .map(|k| {
            let terms = user_terms(cfg, state, k);
            blocks::selection_pick(&terms, &channels.h_all, &state.deltas[k], cfg.k_s, rule)
        })
        .collect();
    let mut deltas = Vec::with_capacity(cfg.users());
    let mut betas = Vec::with_capacity(cfg.users());
    for p in picks {
        let (d, b) = p?;
        deltas.push(d);
        betas.push(b);
    }
    Ok((deltas, betas))
}

pub fn recover_precoder_user(cfg: &SystemConfig, channels: &ChannelSet, state: &AullspState) -> Result<PrecoderSolution> {
    recover_from_coefficients(cfg, channels, Support::PerUser(state.deltas.clone()), &state.x)
}

/// Full iteration from per-user starting selections.
pub fn aullsp_solve(
    cfg: &SystemConfig,
    channels: &ChannelSet,
    init: &[SelectionVector],
    opts: &SolverOptions,
) -> Result<(PrecoderSolution, Vec<SparseTraceRow>)> {
    cfg.validate()?;
    channels.check(cfg)?;
    opts.validate()?;
    let mut state = AullspState::new(cfg, init.to_vec())?;

    let mut probe = state.clone();
    probe.u = update_u_user(cfg, channels, &probe)?;
    probe.w = update_w_user(cfg, channels, &probe)?;
    let mut prev_obj = objective_user(cfg, channels, &probe)?;
    let mut trace = vec![SparseTraceRow {
        iteration: 0,
        wsr_bits: recover_precoder_user(cfg, channels, &state)?.wsr_bits,
        objective_nats: prev_obj,
        beta: 0.0,
        mu: blocks::power_multiplier(cfg, &probe.u, &probe.w),
        delta_hamming_change: 0,
        supports: state.deltas.clone(),
    }];

    let mut reinit_events = 0;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        let step = |state: &mut AullspState| -> Result<(usize, usize)> {
            state.u = update_u_user(cfg, channels, state)?;
            state.w = update_w_user(cfg, channels, state)?;
            let xu = update_x_user(cfg, channels, state)?;
            state.x = xu.x;
            state.gamma = xu.gamma;
            let (next, betas) = select_beams_per_user(cfg, channels, state, opts.rule)?;
            state.betas = betas;
            let mut changed = 0;
            if !opts.freeze_selection {
                changed = next.iter().zip(&state.deltas).map(|(a, b)| a.hamming(b)).sum();
                state.deltas = next;
            }
            Ok((xu.reinitialized.len(), changed))
        };
        let (reinit, changed) = step(&mut state).map_err(|e| e.at_iteration(it))?;
        reinit_events += reinit;
        let obj = objective_user(cfg, channels, &state).map_err(|e| e.at_iteration(it))?;
        let sol = recover_precoder_user(cfg, channels, &state).map_err(|e| e.at_iteration(it))?;
        trace.push(SparseTraceRow {
            iteration: it,
            wsr_bits: sol.wsr_bits,
            objective_nats: obj,
            beta: state.betas.iter().cloned().fold(0.0, f64::max),
            mu: state.gamma,
            delta_hamming_change: changed,
            supports: state.deltas.clone(),
        });
        iterations = it;
        let done = relative_change(prev_obj, obj) < opts.tol;
        prev_obj = obj;
        if done {
            break;
        }
    }
    let mut sol = recover_precoder_user(cfg, channels, &state)?;
    sol.iterations = iterations;
    sol.reinit_events = reinit_events;
    Ok((sol, trace))
}
