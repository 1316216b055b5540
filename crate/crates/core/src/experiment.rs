//! Scenario runs: convergence traces, SNR and sparsity sweeps, and the
//! analytic complexity probe, plus their CSV/JSON emission.
//!
//! Outputs are pure functions of the scenario. No wall-clock values are
//! recorded and every table is sorted by cell coordinates.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allsp::{allsp_solve, initial_selection};
use crate::aullsp::{aullsp_solve, initial_user_selections};
use crate::channel::{synth_channel, ChannelSet};
use crate::config::SystemConfig;
use crate::cost::{cost_model, CostReport};
use crate::error::{PrecodingError, Result};
use crate::scenario::{Algorithm, ChannelSource, Scenario};
use crate::solution::{SolverOptions, SparseTraceRow};
use crate::wmmse::{dense_wmmse_solve, greedy_energy_select_then_wmmse, matched_filter_init, DenseTraceRow};

/// Relative WSR change that counts as converged in reports.
pub const REPORT_TOL: f64 = 1e-3;

/// First iteration whose relative WSR change drops below `tol`.
pub fn iterations_to_tol(wsr: &[f64], tol: f64) -> Option<usize> {
    wsr.windows(2)
        .position(|w| (w[1] - w[0]).abs() / w[0].abs().max(1e-12) < tol)
        .map(|i| i + 1)
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn load_channel(scenario: &Scenario, cfg: &SystemConfig) -> Result<ChannelSet> {
    let ch = match &scenario.channel {
        ChannelSource::Synthesize(p) => synth_channel(cfg, p)?,
        ChannelSource::File(path) => ChannelSet::load(path)?,
    };
    ch.check(cfg)?;
    Ok(ch)
}

fn options(scenario: &Scenario) -> SolverOptions {
    SolverOptions {
        max_iter: scenario.max_iter,
        tol: scenario.tol,
        rule: scenario.rule,
        freeze_selection: false,
    }
}

/// Per-iteration trace of one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub enum Trace {
    Dense(Vec<DenseTraceRow>),
    Sparse { per_user: bool, rows: Vec<SparseTraceRow> },
}

impl Trace {
    pub fn wsr(&self) -> Vec<f64> {
        match self {
            Trace::Dense(rows) => rows.iter().map(|r| r.wsr_bits).collect(),
            Trace::Sparse { rows, .. } => rows.iter().map(|r| r.wsr_bits).collect(),
        }
    }

    /// CSV text with the solver's trace schema.
    pub fn to_csv(&self, users: usize) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        match self {
            Trace::Dense(rows) => {
                w.write_record(["iteration", "wsr_bits", "power_used"])?;
                for r in rows {
                    w.write_record([r.iteration.to_string(), fmt(r.wsr_bits), fmt(r.power_used)])?;
                }
            }
            Trace::Sparse { per_user, rows } => {
                let mut head: Vec<String> = ["iteration", "wsr_bits", "objective_nats", "beta", "mu", "delta_hamming_change"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect();
                if *per_user {
                    head.extend((0..users).map(|k| format!("active_beams_user_{k}")));
                } else {
                    head.push("active_beam_indices".into());
                }
                w.write_record(&head)?;
                for r in rows {
                    let mut rec = vec![
                        r.iteration.to_string(),
                        fmt(r.wsr_bits),
                        fmt(r.objective_nats),
                        fmt(r.beta),
                        fmt(r.mu),
                        r.delta_hamming_change.to_string(),
                    ];
                    rec.extend(r.supports.iter().map(|s| s.format_indices()));
                    w.write_record(&rec)?;
                }
            }
        }
        finish(w)
    }
}

fn fmt(x: f64) -> String {
    format!("{x:?}")
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| PrecodingError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Runs one algorithm on a fixed channel and returns its final WSR and trace.
pub fn run_algorithm(
    algo: Algorithm,
    cfg: &SystemConfig,
    channels: &ChannelSet,
    opts: &SolverOptions,
) -> Result<(f64, Trace)> {
    match algo {
        Algorithm::Wmmse => {
            let init = matched_filter_init(cfg, channels)?;
            let (_, trace) = dense_wmmse_solve(cfg, channels, &init, opts.max_iter, opts.tol)?;
            let wsr = trace.last().map_or(0.0, |r| r.wsr_bits);
            Ok((wsr, Trace::Dense(trace)))
        }
        Algorithm::Greedy => {
            let g = greedy_energy_select_then_wmmse(cfg, channels, opts.max_iter, opts.tol)?;
            Ok((g.wsr_bits, Trace::Dense(g.trace)))
        }
        Algorithm::Allsp => {
            let init = initial_selection(channels, cfg.k_s)?;
            let (sol, rows) = allsp_solve(cfg, channels, &init, opts)?;
            Ok((sol.wsr_bits, Trace::Sparse { per_user: false, rows }))
        }
        Algorithm::Aullsp => {
            let init = initial_user_selections(channels, cfg.k_s)?;
            let (sol, rows) = aullsp_solve(cfg, channels, &init, opts)?;
            Ok((sol.wsr_bits, Trace::Sparse { per_user: true, rows }))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub algo: Algorithm,
    pub iters_to_tol: Option<usize>,
    pub final_wsr_bits: f64,
    #[serde(skip)]
    pub trace: Option<Trace>,
}

/// Traces for every algorithm on the first (snr, K_s) point and the base seed.
pub fn run_convergence(scenario: &Scenario) -> Result<Vec<ConvergenceTrace>> {
    scenario.validate()?;
    let snr = scenario.snr_points()[0];
    let cfg = scenario.cell_config(0, snr, scenario.k_s[0]);
    let channels = load_channel(scenario, &cfg)?;
    let opts = options(scenario);
    scenario
        .algorithms
        .par_iter()
        .map(|&algo| {
            let (wsr, trace) = run_algorithm(algo, &cfg, &channels, &opts)
                .map_err(|e| e.in_cell(format!("{algo} seed={} snr={snr} k_s={}", cfg.seed, cfg.k_s)))?;
            Ok(ConvergenceTrace {
                algo,
                iters_to_tol: iterations_to_tol(&trace.wsr(), REPORT_TOL),
                final_wsr_bits: wsr,
                trace: Some(trace),
            })
        })
        .collect()
}

/// One sweep row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub algo: Algorithm,
    pub snr_db: f64,
    pub k_s: usize,
    pub seed: u64,
    pub wsr_bits: f64,
    pub gap_vs_wmmse: f64,
    pub iters_to_tol: Option<usize>,
    pub sparse_total_mults: u64,
    pub dense_total_mults: u64,
}

/// Medians over seeds for one (algo, snr, K_s) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMedian {
    pub algo: Algorithm,
    pub snr_db: f64,
    pub k_s: usize,
    pub trials: usize,
    pub wsr_bits: f64,
    pub gap_vs_wmmse: f64,
    pub iters_to_tol: Option<f64>,
    pub sparse_total_mults: u64,
    pub dense_total_mults: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario_hash: String,
    pub rows: Vec<CellResult>,
    pub medians: Vec<CellMedian>,
    /// Analytic cost for each swept `K_s`.
    pub costs: Vec<CostReport>,
}

impl RunSummary {
    pub fn median_of(&self, algo: Algorithm, snr_db: f64, k_s: usize) -> Option<&CellMedian> {
        self.medians
            .iter()
            .find(|c| c.algo == algo && c.snr_db == snr_db && c.k_s == k_s)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "algo",
            "snr_db",
            "k_s",
            "seed",
            "wsr_bits",
            "gap_vs_wmmse",
            "iters_to_tol",
            "sparse_total_mults",
            "dense_total_mults",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.algo.name().to_string(),
                fmt(r.snr_db),
                r.k_s.to_string(),
                r.seed.to_string(),
                fmt(r.wsr_bits),
                fmt(r.gap_vs_wmmse),
                r.iters_to_tol.map_or(String::new(), |i| i.to_string()),
                r.sparse_total_mults.to_string(),
                r.dense_total_mults.to_string(),
            ])?;
        }
        finish(w)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Matched-seed sweep over every (snr, K_s) cell. Each (seed, snr) pair shares
/// one channel and one dense WMMSE reference across `K_s` and algorithms.
pub fn run_sweeps(scenario: &Scenario) -> Result<RunSummary> {
    scenario.validate()?;
    let opts = options(scenario);
    let snrs = scenario.snr_points();
    let costs: Vec<CostReport> = scenario
        .k_s
        .iter()
        .map(|&k| cost_model(scenario.cfg.m as u64, scenario.cfg.d() as u64, k as u64, &scenario.grid))
        .collect();

    let tasks: Vec<(u64, usize)> = (0..scenario.trials as u64)
        .flat_map(|t| (0..snrs.len()).map(move |i| (t, i)))
        .collect();
    let chunks: Vec<Result<Vec<CellResult>>> = tasks
        .par_iter()
        .map(|&(t, si)| {
            let snr = snrs[si];
            let base = scenario.cell_config(t, snr, scenario.k_s[0]);
            let ctx = |k_s: usize| format!("seed={} snr={snr} k_s={k_s}", base.seed);
            let channels = load_channel(scenario, &base).map_err(|e| e.in_cell(ctx(base.k_s)))?;
            let (dense_wsr, dense_trace) = run_algorithm(Algorithm::Wmmse, &base, &channels, &opts)
                .map_err(|e| e.in_cell(format!("wmmse {}", ctx(base.k_s))))?;
            let dense_iters = iterations_to_tol(&dense_trace.wsr(), REPORT_TOL);
            let mut out = Vec::new();
            for (ki, &k_s) in scenario.k_s.iter().enumerate() {
                let cfg = scenario.cell_config(t, snr, k_s);
                let cost = &costs[ki];
                for &algo in &scenario.algorithms {
                    let (wsr, iters) = if algo == Algorithm::Wmmse {
                        (dense_wsr, dense_iters)
                    } else {
                        let (wsr, trace) = run_algorithm(algo, &cfg, &channels, &opts)
                            .map_err(|e| e.in_cell(format!("{algo} {}", ctx(k_s))))?;
                        (wsr, iterations_to_tol(&trace.wsr(), REPORT_TOL))
                    };
                    out.push(CellResult {
                        algo,
                        snr_db: snr,
                        k_s,
                        seed: cfg.seed,
                        wsr_bits: wsr,
                        gap_vs_wmmse: 1.0 - wsr / dense_wsr,
                        iters_to_tol: iters,
                        sparse_total_mults: cost.sparse_total,
                        dense_total_mults: cost.dense_total,
                    });
                }
            }
            Ok(out)
        })
        .collect();

    let mut rows = Vec::new();
    for c in chunks {
        rows.extend(c?);
    }
    let algo_pos = |a: Algorithm| scenario.algorithms.iter().position(|&b| b == a).unwrap_or(usize::MAX);
    let snr_pos = |s: f64| snrs.iter().position(|&b| b == s).unwrap_or(usize::MAX);
    let ks_pos = |k: usize| scenario.k_s.iter().position(|&b| b == k).unwrap_or(usize::MAX);
    rows.sort_by_key(|r| (algo_pos(r.algo), snr_pos(r.snr_db), ks_pos(r.k_s), r.seed));

    let medians = rows
        .chunk_by(|a, b| a.algo == b.algo && a.snr_db == b.snr_db && a.k_s == b.k_s)
        .map(|cell| {
            let first = &cell[0];
            let wsr: Vec<f64> = cell.iter().map(|r| r.wsr_bits).collect();
            let gap: Vec<f64> = cell.iter().map(|r| r.gap_vs_wmmse).collect();
            let iters: Vec<f64> = cell.iter().filter_map(|r| r.iters_to_tol.map(|i| i as f64)).collect();
            CellMedian {
                algo: first.algo,
                snr_db: first.snr_db,
                k_s: first.k_s,
                trials: cell.len(),
                wsr_bits: median(&wsr),
                gap_vs_wmmse: median(&gap),
                iters_to_tol: (iters.len() == cell.len()).then(|| median(&iters)),
                sparse_total_mults: first.sparse_total_mults,
                dense_total_mults: first.dense_total_mults,
            }
        })
        .collect();

    Ok(RunSummary {
        scenario_hash: scenario.hash(),
        rows,
        medians,
        costs,
    })
}

/// Multiply count of one X-update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub algo: Algorithm,
    pub m: usize,
    pub n: usize,
    pub k_s: usize,
    /// Highest-order term in `M`: the effective Gram matrix for the sparse
    /// solvers, the `M x M` factorization for dense WMMSE.
    pub dominant_mults: u64,
    /// Every product of the update, solve included.
    pub total_mults: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexitySlope {
    pub algo: Algorithm,
    pub dominant_slope: f64,
    pub total_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub iterations: usize,
    pub rows: Vec<ComplexityRow>,
    pub slopes: Vec<ComplexitySlope>,
}

impl ComplexityReport {
    pub fn slope(&self, algo: Algorithm) -> Option<&ComplexitySlope> {
        self.slopes.iter().find(|s| s.algo == algo)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["algo", "m", "n", "k_s", "dominant_mults", "total_mults"])?;
        for r in &self.rows {
            w.write_record([
                r.algo.name().to_string(),
                r.m.to_string(),
                r.n.to_string(),
                r.k_s.to_string(),
                r.dominant_mults.to_string(),
                r.total_mults.to_string(),
            ])?;
        }
        finish(w)
    }
}

/// Complex multiplies of a Hermitian `n x n` factorization.
fn cholesky_mults(n: u64) -> u64 {
    n * (n + 1) * (n + 2) / 6
}

/// Forward and back substitution for `r` right-hand sides.
fn substitution_mults(n: u64, r: u64) -> u64 {
    n * (n + 1) * r
}

/// Analytic `(dominant, total)` multiplies for one X-update.
///
/// Shared by all: the blocks `U W` and `U W U^H`. Sparse solvers then form
/// `G = H_S H_S^H` from the `K_s` active columns, `G T G`, `G R`, and an
/// `N x N` solve (one per user for the per-user variant). Dense WMMSE forms
/// `H^H T H` and `H^H U W` and solves an `M x M` system. The greedy baseline
/// runs dense WMMSE on `K_s` beams.
pub fn x_update_mults(algo: Algorithm, m: usize, n_k: &[usize], d_k: &[usize], k_s: usize) -> (u64, u64) {
    let n: u64 = n_k.iter().map(|&v| v as u64).sum();
    let d: u64 = d_k.iter().map(|&v| v as u64).sum();
    let users = n_k.len() as u64;
    let filters: u64 = n_k
        .iter()
        .zip(d_k)
        .map(|(&nk, &dk)| {
            let (nk, dk) = (nk as u64, dk as u64);
            2 * nk * dk * dk + nk * nk * dk
        })
        .sum();
    let (m, k_s) = (m as u64, k_s as u64);
    let dense = |cols: u64| {
        let dominant = cholesky_mults(cols);
        let total = filters + cols * n * n + cols * cols * n + cols * n * d + dominant + substitution_mults(cols, d);
        (dominant, total)
    };
    match algo {
        Algorithm::Allsp => {
            let gram = n * n * k_s;
            let total = filters + gram + 2 * n * n * n + n * n * d + cholesky_mults(n) + substitution_mults(n, d);
            (gram, total)
        }
        Algorithm::Aullsp => {
            let gram = users * n * n * k_s;
            let per_user: u64 = d_k
                .iter()
                .map(|&dk| 2 * n * n * n + n * n * dk as u64 + cholesky_mults(n) + substitution_mults(n, dk as u64))
                .sum();
            (gram, filters + gram + per_user)
        }
        Algorithm::Wmmse => dense(m),
        Algorithm::Greedy => dense(k_s),
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

/// X-update counts over `ms` with the users fixed and `K_s = M/2`.
pub fn run_complexity_probe(ms: &[usize], n_k: &[usize], d_k: &[usize], iterations: usize) -> ComplexityReport {
    let algos = [Algorithm::Wmmse, Algorithm::Allsp, Algorithm::Aullsp];
    let n: usize = n_k.iter().sum();
    let it = iterations as u64;
    let mut rows = Vec::new();
    for &algo in &algos {
        for &m in ms {
            let k_s = if algo == Algorithm::Wmmse { m } else { m / 2 };
            let (dom, tot) = x_update_mults(algo, m, n_k, d_k, k_s);
            rows.push(ComplexityRow {
                algo,
                m,
                n,
                k_s,
                dominant_mults: dom * it,
                total_mults: tot * it,
            });
        }
    }
    let slopes = algos
        .iter()
        .map(|&algo| {
            let pts = |f: fn(&ComplexityRow) -> u64| -> Vec<(f64, f64)> {
                rows.iter()
                    .filter(|r| r.algo == algo)
                    .map(|r| (r.m as f64, f(r) as f64))
                    .collect()
            };
            ComplexitySlope {
                algo,
                dominant_slope: log_log_slope(&pts(|r| r.dominant_mults)),
                total_slope: log_log_slope(&pts(|r| r.total_mults)),
            }
        })
        .collect();
    ComplexityReport {
        iterations,
        rows,
        slopes,
    }
}

/// Writes `contents` to `dir/name`, creating `dir`.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| PrecodingError::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| PrecodingError::io(&path, e))?;
    Ok(path)
}

/// Sweep CSV plus JSON summary, named after the scenario hash.
pub fn emit(summary: &RunSummary, dir: &Path) -> Result<Vec<PathBuf>> {
    let h = &summary.scenario_hash;
    Ok(vec![
        write_file(dir, &format!("sweep_{h}.csv"), &summary.to_csv()?)?,
        write_file(dir, &format!("summary_{h}.json"), &summary.to_json()?)?,
    ])
}

/// One trace CSV per algorithm plus a JSON summary of iterations to tolerance.
pub fn emit_convergence(scenario: &Scenario, traces: &[ConvergenceTrace], dir: &Path) -> Result<Vec<PathBuf>> {
    let h = scenario.hash();
    let mut paths = Vec::new();
    for t in traces {
        if let Some(trace) = &t.trace {
            let name = format!("trace_{}_{h}.csv", t.algo);
            paths.push(write_file(dir, &name, &trace.to_csv(scenario.cfg.users())?)?);
        }
    }
    let json = serde_json::to_string_pretty(traces)?;
    paths.push(write_file(dir, &format!("convergence_{h}.json"), &json)?);
    Ok(paths)
}
