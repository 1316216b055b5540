//! Dense WMMSE baseline and the greedy channel-energy sparse comparator.
//!
//! Power is handled by absorption: the noise seen by user `k` is
//! `(sigma_k^2 / P_max) * sum_j ||V_j||_F^2`, so the iteration needs no
//! Lagrange-multiplier search and the final precoder is rescaled to meet the
//! budget with equality. Rates are invariant to that common scaling.
//!
//! The engine here optimizes precoders restricted to per-user row supports.
//! The dense baseline is the all-rows special case and keeps the full
//! `M x M` system in its precoder update.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::config::SystemConfig;
use crate::error::{PrecodingError, Result};
use crate::linalg::{all_finite, frob2, hermitian_part, hermitian_solve, trace_re, CMat};
use crate::rate::rates;
use crate::selection::{top_k, SelectionVector};

/// Angle-domain precoders without a sparsity constraint, one `M x D_k` block per user.
#[derive(Debug, Clone, PartialEq)]
pub struct DensePrecoder {
    pub v: Vec<CMat>,
}

impl DensePrecoder {
    pub fn power(&self) -> f64 {
        self.v.iter().map(frob2).sum()
    }

    /// Common rescaling so the total power equals `p_max`.
    pub fn scaled_to(&self, p_max: f64) -> Result<DensePrecoder> {
        let p = self.power();
        if !(p > 0.0) {
            return Err(PrecodingError::ZeroPower);
        }
        let s = (p_max / p).sqrt();
        Ok(DensePrecoder {
            v: self.v.iter().map(|v| v.scale(s)).collect(),
        })
    }
}

/// One row of a dense WMMSE trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseTraceRow {
    pub iteration: usize,
    pub wsr_bits: f64,
    /// Power of the rescaled precoder the WSR was evaluated at.
    pub power_used: f64,
}

/// Matched-filter start `V_k = H_k^H` (first `D_k` columns), scaled to the budget.
pub fn matched_filter_init(cfg: &SystemConfig, channels: &ChannelSet) -> Result<DensePrecoder> {
    let v = channels
        .h
        .iter()
        .zip(&cfg.d_k)
        .map(|(hk, &d)| hk.adjoint().columns(0, d).into_owned())
        .collect();
    DensePrecoder { v }.scaled_to(cfg.p_max)
}

/// Result of a WMMSE run on fixed row supports.
#[derive(Debug, Clone)]
pub struct SupportedRun {
    /// Full `M x D_k` precoders, zero off-support, scaled to `P_max`.
    pub precoder: DensePrecoder,
    pub trace: Vec<DenseTraceRow>,
    pub wsr_bits: f64,
}

/// WMMSE with user `k`'s precoder confined to rows `supports[k]`.
///
/// `init` holds compressed `|S_k| x D_k` blocks; `None` uses the restricted
/// matched filter.
pub(crate) fn supported_wmmse(
    cfg: &SystemConfig,
    channels: &ChannelSet,
    supports: &[Vec<usize>],
    init: Option<Vec<CMat>>,
    max_iter: usize,
    tol: f64,
) -> Result<SupportedRun> {
    let k_users = cfg.users();
    if supports.len() != k_users {
        return Err(PrecodingError::dims("supports", k_users, supports.len()));
    }
    // heff[i][k] = H_i restricted to the columns in S_k.
    let heff: Vec<Vec<CMat>> = channels
        .h
        .iter()
        .map(|hi| {
            supports
                .iter()
                .map(|s| hi.select_columns(s.iter()))
                .collect()
        })
        .collect();
    let mut v: Vec<CMat> = match init {
        Some(v) => v,
        None => (0..k_users)
            .map(|k| heff[k][k].adjoint().columns(0, cfg.d_k[k]).into_owned())
            .collect(),
    };
    for (k, vk) in v.iter().enumerate() {
        if vk.shape() != (supports[k].len(), cfg.d_k[k]) {
            return Err(PrecodingError::dims(
                "initial precoder",
                format!("{}x{}", supports[k].len(), cfg.d_k[k]),
                format!("{}x{}", vk.nrows(), vk.ncols()),
            ));
        }
    }

    let expand = |v: &[CMat]| -> DensePrecoder {
        DensePrecoder {
            v: v.iter()
                .zip(supports)
                .map(|(vk, s)| {
                    let mut full = CMat::zeros(cfg.m, vk.ncols());
                    for (row, &r) in s.iter().enumerate() {
                        full.row_mut(r).copy_from(&vk.row(row));
                    }
                    full
                })
                .collect(),
        }
    };
    let evaluate = |v: &[CMat], iteration: usize| -> Result<(DensePrecoder, DenseTraceRow)> {
        let scaled = expand(v).scaled_to(cfg.p_max)?;
        let report = rates(&channels.h, &scaled.v, &cfg.sigma2, &cfg.alpha)?;
        if !report.wsr.is_finite() {
            return Err(PrecodingError::NonFinite {
                iteration,
                context: "weighted sum rate".into(),
            });
        }
        let row = DenseTraceRow {
            iteration,
            wsr_bits: report.wsr,
            power_used: scaled.power(),
        };
        Ok((scaled, row))
    };

    let (mut best, row0) = evaluate(&v, 0)?;
    let mut trace = vec![row0];
    for it in 1..=max_iter {
        v = wmmse_step(cfg, &heff, supports, &v).map_err(|e| e.at_iteration(it))?;
        let (scaled, row) = evaluate(&v, it)?;
        let prev = trace.last().map_or(0.0, |r| r.wsr_bits);
        trace.push(row);
        best = scaled;
        let change = (row.wsr_bits - prev).abs() / prev.abs().max(1e-12);
        if change < tol {
            break;
        }
    }
    let wsr_bits = trace.last().map_or(0.0, |r| r.wsr_bits);
    Ok(SupportedRun {
        precoder: best,
        trace,
        wsr_bits,
    })
}

/// One U / W / V sweep on compressed precoders.
fn wmmse_step(
    cfg: &SystemConfig,
    heff: &[Vec<CMat>],
    supports: &[Vec<usize>],
    v: &[CMat],
) -> Result<Vec<CMat>> {
    let k_users = cfg.users();
    let power: f64 = v.iter().map(frob2).sum();
    if !(power > 0.0) {
        return Err(PrecodingError::DegenerateState {
            iteration: 0,
            user: 0,
            reason: "all precoders vanished".into(),
        });
    }

    let mut u = Vec::with_capacity(k_users);
    let mut w = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let nk = cfg.n_k[k];
        let noise = cfg.sigma2[k] / cfg.p_max * power;
        let mut cov = CMat::identity(nk, nk).scale(noise);
        for (j, vj) in v.iter().enumerate() {
            let hv = &heff[k][j] * vj;
            cov += &hv * hv.adjoint();
        }
        let signal = &heff[k][k] * &v[k];
        let (uk, _) = hermitian_solve(&cov, &signal).ok_or_else(|| PrecodingError::DegenerateState {
            iteration: 0,
            user: k,
            reason: "receive covariance is singular".into(),
        })?;
        let dk = cfg.d_k[k];
        let e = CMat::identity(dk, dk) - uk.adjoint() * &signal;
        let wk = e.try_inverse().ok_or_else(|| PrecodingError::DegenerateState {
            iteration: 0,
            user: k,
            reason: "MSE matrix is singular".into(),
        })?;
        u.push(uk);
        w.push(hermitian_part(&wk));
    }

    let mu: f64 = (0..k_users)
        .map(|i| cfg.sigma2[i] / cfg.p_max * cfg.alpha[i] * trace_re(&(&u[i] * &w[i] * u[i].adjoint())))
        .sum();
    let uwu: Vec<CMat> = (0..k_users)
        .map(|i| (&u[i] * &w[i] * u[i].adjoint()).scale(cfg.alpha[i]))
        .collect();

    // Users sharing a support share the system matrix.
    let mut out: Vec<Option<CMat>> = vec![None; k_users];
    for k in 0..k_users {
        if out[k].is_some() {
            continue;
        }
        let group: Vec<usize> = (k..k_users).filter(|&j| supports[j] == supports[k]).collect();
        let s = supports[k].len();
        let mut a = CMat::identity(s, s).scale(mu);
        for i in 0..k_users {
            a += heff[i][k].adjoint() * &uwu[i] * &heff[i][k];
        }
        let widths: Vec<usize> = group.iter().map(|&j| cfg.d_k[j]).collect();
        let mut rhs = CMat::zeros(s, widths.iter().sum());
        let mut off = 0;
        for &j in &group {
            let b = (heff[j][j].adjoint() * &u[j] * &w[j]).scale(cfg.alpha[j]);
            rhs.columns_mut(off, b.ncols()).copy_from(&b);
            off += b.ncols();
        }
        let (sol, _) = hermitian_solve(&a, &rhs).ok_or_else(|| PrecodingError::DegenerateState {
            iteration: 0,
            user: k,
            reason: "precoder system is singular".into(),
        })?;
        let mut off = 0;
        for (&j, &wd) in group.iter().zip(&widths) {
            out[j] = Some(sol.columns(off, wd).into_owned());
            off += wd;
        }
    }
    let v_new: Vec<CMat> = out.into_iter().map(|o| o.expect("every user solved")).collect();
    if !v_new.iter().all(all_finite) {
        return Err(PrecodingError::NonFinite {
            iteration: 0,
            context: "precoder update".into(),
        });
    }
    Ok(v_new)
}

/// Dense WMMSE from `init`. Stops when the relative WSR change drops below
/// `tol` or after `max_iter` sweeps; the output meets the power budget with equality.
pub fn dense_wmmse_solve(
    cfg: &SystemConfig,
    channels: &ChannelSet,
    init: &DensePrecoder,
    max_iter: usize,
    tol: f64,
) -> Result<(DensePrecoder, Vec<DenseTraceRow>)> {
    channels.check(cfg)?;
    if !(tol > 0.0) {
        return Err(PrecodingError::InvalidConfig("tolerance must be positive".into()));
    }
    if init.v.len() != cfg.users() {
        return Err(PrecodingError::dims("initial precoders", cfg.users(), init.v.len()));
    }
    let all: Vec<usize> = (0..cfg.m).collect();
    let supports = vec![all; cfg.users()];
    let run = supported_wmmse(cfg, channels, &supports, Some(init.v.clone()), max_iter, tol)?;
    Ok((run.precoder, run.trace))
}

/// Output of the greedy comparator.
#[derive(Debug, Clone)]
pub struct GreedySolution {
    pub support: SelectionVector,
    /// Angle-domain precoders, zero off the support.
    pub precoder: DensePrecoder,
    pub trace: Vec<DenseTraceRow>,
    pub wsr_bits: f64,
}

/// Keeps the `K_s` beams with the most channel energy and runs WMMSE on them.
pub fn greedy_energy_select_then_wmmse(
    cfg: &SystemConfig,
    channels: &ChannelSet,
    max_iter: usize,
    tol: f64,
) -> Result<GreedySolution> {
    cfg.validate()?;
    channels.check(cfg)?;
    let support = top_k(&channels.beam_energy(), cfg.k_s)?;
    let supports = vec![support.active().to_vec(); cfg.users()];
    let init = if cfg.k_s == cfg.m {
        Some(matched_filter_init(cfg, channels)?.v)
    } else {
        None
    };
    let run = supported_wmmse(cfg, channels, &supports, init, max_iter, tol)?;
    Ok(GreedySolution {
        support,
        precoder: run.precoder,
        wsr_bits: run.wsr_bits,
        trace: run.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{synth_channel, ChannelParams};
    use crate::linalg::testutil::*;
    use num_complex::Complex64;

    fn desk(seed: u64) -> (SystemConfig, ChannelSet) {
        let cfg = SystemConfig::uniform(8, 2, 2, 2, 8).with_seed(seed).with_snr_db(10.0);
        let ch = synth_channel(&cfg, &ChannelParams::default()).unwrap();
        (cfg, ch)
    }

    #[test]
    fn scalar_single_user_uses_full_power() {
        let mut cfg = SystemConfig::uniform(1, 1, 1, 1, 1);
        cfg.p_max = 4.0;
        cfg.sigma2 = vec![0.5];
        let ch = ChannelSet::from_angle_domain(vec![CMat::from_element(1, 1, Complex64::new(0.8, 0.6))]).unwrap();
        let init = matched_filter_init(&cfg, &ch).unwrap();
        let (p, trace) = dense_wmmse_solve(&cfg, &ch, &init, 50, 1e-10).unwrap();
        assert!((p.power() - 4.0).abs() < 1e-12);
        let want = (1.0f64 + 4.0 / 0.5).log2();
        assert!((trace.last().unwrap().wsr_bits - want).abs() < 1e-12);
    }

    #[test]
    fn wsr_is_monotone_and_power_is_exact() {
        for seed in 0..5 {
            let (cfg, ch) = desk(seed);
            let init = matched_filter_init(&cfg, &ch).unwrap();
            let (p, trace) = dense_wmmse_solve(&cfg, &ch, &init, 50, 1e-9).unwrap();
            for w in trace.windows(2) {
                assert!(w[1].wsr_bits >= w[0].wsr_bits - 1e-8, "seed {seed}: {w:?}");
            }
            assert!((p.power() - cfg.p_max).abs() / cfg.p_max < 1e-9);
            assert!(trace.last().unwrap().wsr_bits >= trace[0].wsr_bits - 1e-9);
        }
    }

    #[test]
    fn greedy_full_budget_matches_dense() {
        let (cfg, ch) = desk(3);
        let init = matched_filter_init(&cfg, &ch).unwrap();
        let (_, dense) = dense_wmmse_solve(&cfg, &ch, &init, 30, 1e-6).unwrap();
        let greedy = greedy_energy_select_then_wmmse(&cfg, &ch, 30, 1e-6).unwrap();
        assert_eq!(greedy.support, SelectionVector::all(8));
        assert!((greedy.wsr_bits - dense.last().unwrap().wsr_bits).abs() < 1e-10);
    }

    #[test]
    fn greedy_picks_energetic_beams() {
        let mut h = CMat::zeros(2, 5);
        h[(0, 0)] = Complex64::new(3.0, 0.0);
        h[(1, 3)] = Complex64::new(0.0, 2.0);
        h[(0, 1)] = Complex64::new(0.1, 0.0);
        h[(1, 4)] = Complex64::new(0.05, 0.0);
        let ch = ChannelSet::from_angle_domain(vec![h.rows(0, 1).into_owned(), h.rows(1, 1).into_owned()]).unwrap();
        let cfg = SystemConfig::uniform(5, 2, 1, 1, 2);
        let g = greedy_energy_select_then_wmmse(&cfg, &ch, 20, 1e-8).unwrap();
        assert_eq!(g.support.active(), &[0, 3]);
        for p in &g.precoder.v {
            for r in [1, 2, 4] {
                assert_eq!(p.row(r).iter().map(|z| z.norm()).sum::<f64>(), 0.0);
            }
        }
    }

    #[test]
    fn greedy_rejects_infeasible_budget() {
        let cfg = SystemConfig::uniform(8, 2, 2, 2, 3);
        let ch = synth_channel(&cfg, &ChannelParams::default()).unwrap();
        assert!(greedy_energy_select_then_wmmse(&cfg, &ch, 10, 1e-6).is_err());
    }

    /// Textbook WMMSE written independently: full-power precoders, true noise,
    /// closed-form multiplier, explicit inverses.
    fn textbook_wmmse(cfg: &SystemConfig, h: &[CMat], v0: &[CMat], iters: usize) -> f64 {
        let k = h.len();
        let m = cfg.m;
        let normalize = |v: Vec<CMat>| -> Vec<CMat> {
            let p: f64 = v.iter().map(|x| x.norm_squared()).sum();
            v.into_iter().map(|x| x * Complex64::new((cfg.p_max / p).sqrt(), 0.0)).collect()
        };
        let mut v = normalize(v0.to_vec());
        for _ in 0..iters {
            let mut u = vec![];
            let mut w = vec![];
            for i in 0..k {
                let n = h[i].nrows();
                let mut j = CMat::identity(n, n) * Complex64::new(cfg.sigma2[i], 0.0);
                for vj in &v {
                    j += &h[i] * vj * vj.adjoint() * h[i].adjoint();
                }
                let ui = j.try_inverse().unwrap() * &h[i] * &v[i];
                let e = CMat::identity(cfg.d_k[i], cfg.d_k[i]) - ui.adjoint() * &h[i] * &v[i];
                w.push(e.try_inverse().unwrap());
                u.push(ui);
            }
            let mut mu = 0.0;
            let mut a = CMat::zeros(m, m);
            for i in 0..k {
                let t = &u[i] * &w[i] * u[i].adjoint();
                mu += cfg.alpha[i] * cfg.sigma2[i] * t.trace().re / cfg.p_max;
                a += h[i].adjoint() * t * &h[i] * Complex64::new(cfg.alpha[i], 0.0);
            }
            let inv = (a + CMat::identity(m, m) * Complex64::new(mu, 0.0)).try_inverse().unwrap();
            v = normalize(
                (0..k)
                    .map(|i| &inv * h[i].adjoint() * &u[i] * &w[i] * Complex64::new(cfg.alpha[i], 0.0))
                    .collect(),
            );
        }
        rates(h, &v, &cfg.sigma2, &cfg.alpha).unwrap().wsr
    }

    #[test]
    fn matches_textbook_reimplementation() {
        let (cfg, ch) = desk(42);
        let init = matched_filter_init(&cfg, &ch).unwrap();
        let want = textbook_wmmse(&cfg, &ch.h, &init.v, 50);
        // tol small enough that all 50 sweeps run
        let (_, trace) = dense_wmmse_solve(&cfg, &ch, &init, 50, 1e-300).unwrap();
        assert_eq!(trace.len(), 51);
        let got = trace.last().unwrap().wsr_bits;
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn random_channel_sanity() {
        let cfg = SystemConfig::uniform(6, 3, 1, 1, 6).with_snr_db(5.0);
        let h: Vec<CMat> = (0..3).map(|i| randn(&mut rng(100 + i), 1, 6)).collect();
        let ch = ChannelSet::from_angle_domain(h).unwrap();
        let init = matched_filter_init(&cfg, &ch).unwrap();
        let (p, _) = dense_wmmse_solve(&cfg, &ch, &init, 100, 1e-8).unwrap();
        assert!(p.v.iter().all(all_finite));
    }
}
