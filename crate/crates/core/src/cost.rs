//! Signal-weighting cost: the analytic per-coherence-block model and the two
//! instrumented application paths it describes.
//!
//! The dense path multiplies every symbol vector by the antenna-domain
//! precoder. The sparse path multiplies by the stored angle-domain rows only
//! and finishes with one inverse FFT.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{PrecodingError, Result};
use crate::fft::InverseFft;
use crate::linalg::{CMat, ZERO};
use crate::solution::{PrecoderSolution, Support};

/// Scheduled time-frequency resources that reuse one precoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceGrid {
    pub rbs: u64,
    pub subcarriers_per_rb: u64,
    pub slots: u64,
    pub data_symbols_per_slot: u64,
}

impl ResourceGrid {
    pub fn new(rbs: u64, subcarriers_per_rb: u64, slots: u64, data_symbols_per_slot: u64) -> Result<Self> {
        let g = ResourceGrid {
            rbs,
            subcarriers_per_rb,
            slots,
            data_symbols_per_slot,
        };
        g.validate()?;
        Ok(g)
    }

    /// 8 RBs of 12 subcarriers over 10 slots of 12 data symbols.
    pub fn reference() -> Self {
        ResourceGrid {
            rbs: 8,
            subcarriers_per_rb: 12,
            slots: 10,
            data_symbols_per_slot: 12,
        }
    }

    /// Same allocation held for 24 times as many slots (a 120 ms update period).
    pub fn long_period() -> Self {
        ResourceGrid {
            slots: 240,
            ..Self::reference()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rbs == 0 || self.subcarriers_per_rb == 0 || self.slots == 0 || self.data_symbols_per_slot == 0 {
            return Err(PrecodingError::InvalidConfig(
                "resource grid fields must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for ResourceGrid {
    fn default() -> Self {
        Self::reference()
    }
}

/// Resource elements per coherence block.
pub fn n_sym(grid: &ResourceGrid) -> u64 {
    grid.rbs * grid.subcarriers_per_rb * grid.slots * grid.data_symbols_per_slot
}

/// `ceil(log2 m)`, and whether rounding was needed.
fn log2_ceil(m: u64) -> (u64, bool) {
    if m <= 1 {
        return (0, false);
    }
    let exact = m.is_power_of_two();
    let bits = u64::from(64 - (m - 1).leading_zeros());
    (bits, !exact)
}

/// Instrumented counts from running the application paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredCost {
    pub symbols: u64,
    pub dense_multiplies: u64,
    /// Sparse path, row products only.
    pub angle_multiplies: u64,
    /// Sparse path, inverse transform only.
    pub transform_multiplies: u64,
    pub dense_per_symbol: u64,
    pub angle_per_symbol: u64,
    pub transform_per_symbol: u64,
    /// Largest `|sparse - dense| / |dense|` over the trial symbols.
    pub max_relative_mismatch: f64,
}

impl MeasuredCost {
    pub fn sparse_per_symbol(&self) -> u64 {
        self.angle_per_symbol + self.transform_per_symbol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub m: u64,
    pub d: u64,
    pub k_s: u64,
    pub n_sym: u64,
    pub dense_per_symbol: u64,
    pub sparse_per_symbol: u64,
    pub dense_total: u64,
    pub sparse_total: u64,
    pub reduction_fraction: f64,
    /// `M` is not a power of two, so the transform term used `ceil(log2 M)`.
    pub log2_rounded: bool,
    /// Sparse path needs fewer multiplies than the dense one.
    pub sparse_beneficial: bool,
    pub measured_multiplies: Option<MeasuredCost>,
}

impl CostReport {
    /// `(dense - sparse) / dense` in lowest terms; negative numerators mean the
    /// sparse path costs more.
    pub fn reduction_ratio(&self) -> (i64, u64) {
        let num = self.dense_per_symbol as i64 - self.sparse_per_symbol as i64;
        let den = self.dense_per_symbol;
        let g = gcd(num.unsigned_abs(), den).max(1);
        (num / g as i64, den / g)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Analytic costs: `M D` per symbol for the dense path, `K_s D + (M/2) log2 M`
/// for the sparse one.
pub fn cost_model(m: u64, d: u64, k_s: u64, grid: &ResourceGrid) -> CostReport {
    let n = n_sym(grid);
    let (log2, rounded) = log2_ceil(m);
    let dense = m * d;
    let sparse = k_s * d + (m / 2) * log2;
    let reduction_fraction = if dense == 0 {
        0.0
    } else {
        1.0 - sparse as f64 / dense as f64
    };
    CostReport {
        m,
        d,
        k_s,
        n_sym: n,
        dense_per_symbol: dense,
        sparse_per_symbol: sparse,
        dense_total: n * dense,
        sparse_total: n * sparse,
        reduction_fraction,
        log2_rounded: rounded,
        sparse_beneficial: sparse < dense,
        measured_multiplies: None,
    }
}

/// Multiply counter owned by the caller of an application path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounter {
    pub weighting: u64,
    pub transform: u64,
}

impl OpCounter {
    pub fn total(&self) -> u64 {
        self.weighting + self.transform
    }
}

/// `x = P_ant s`. Charges `M D` multiplies.
pub fn apply_dense(p_ant: &CMat, s: &[Complex64], counter: &mut OpCounter) -> Result<Vec<Complex64>> {
    if p_ant.ncols() != s.len() {
        return Err(PrecodingError::dims("symbol vector", p_ant.ncols(), s.len()));
    }
    let mut x = vec![ZERO; p_ant.nrows()];
    for (r, xr) in x.iter_mut().enumerate() {
        for (c, sc) in s.iter().enumerate() {
            *xr += p_ant[(r, c)] * sc;
        }
    }
    counter.weighting += (p_ant.nrows() * p_ant.ncols()) as u64;
    Ok(x)
}

/// Stored rows acting on a contiguous range of streams.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBlock {
    pub stream_offset: usize,
    pub width: usize,
    /// `(beam index, row values)`; each row has `width` entries.
    pub rows: Vec<(usize, Vec<Complex64>)>,
}

/// Row-compressed angle-domain precoder.
///
/// The `1/sqrt(M)` of the unitary inverse DFT is folded into the stored rows,
/// so the transform stage runs unnormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSparsePrecoder {
    m: usize,
    d: usize,
    blocks: Vec<SparseBlock>,
}

impl RowSparsePrecoder {
    /// One block covering all `d` streams; rows are unscaled angle-domain values.
    pub fn from_rows(m: usize, d: usize, rows: &[(usize, Vec<Complex64>)]) -> Result<Self> {
        let block = SparseBlock {
            stream_offset: 0,
            width: d,
            rows: rows.to_vec(),
        };
        Self::from_blocks(m, d, vec![block])
    }

    pub fn from_blocks(m: usize, d: usize, mut blocks: Vec<SparseBlock>) -> Result<Self> {
        let scale = 1.0 / (m as f64).sqrt();
        for b in &mut blocks {
            if b.stream_offset + b.width > d {
                return Err(PrecodingError::dims("stream block", d, b.stream_offset + b.width));
            }
            for (r, vals) in &mut b.rows {
                if *r >= m {
                    return Err(PrecodingError::RowOutOfRange { row: *r, m });
                }
                if vals.len() != b.width {
                    return Err(PrecodingError::dims("stored row", b.width, vals.len()));
                }
                for v in vals.iter_mut() {
                    *v *= scale;
                }
            }
        }
        Ok(RowSparsePrecoder { m, d, blocks })
    }

    /// Keeps only the supported rows of each user's block. A common support
    /// becomes one block spanning all streams.
    pub fn from_solution(sol: &PrecoderSolution) -> Result<Self> {
        let m = sol.p.first().map_or(0, |p| p.nrows());
        let d: usize = sol.p.iter().map(|p| p.ncols()).sum();
        let take = |p: &CMat, active: &[usize]| -> Vec<(usize, Vec<Complex64>)> {
            active
                .iter()
                .map(|&r| (r, p.row(r).iter().cloned().collect()))
                .collect()
        };
        let blocks = match &sol.support {
            Support::Common(delta) => {
                let mut full = CMat::zeros(m, d);
                let mut off = 0;
                for p in &sol.p {
                    full.columns_mut(off, p.ncols()).copy_from(p);
                    off += p.ncols();
                }
                vec![SparseBlock {
                    stream_offset: 0,
                    width: d,
                    rows: take(&full, delta.active()),
                }]
            }
            Support::PerUser(deltas) => {
                let mut off = 0;
                sol.p
                    .iter()
                    .zip(deltas)
                    .map(|(p, delta)| {
                        let b = SparseBlock {
                            stream_offset: off,
                            width: p.ncols(),
                            rows: take(p, delta.active()),
                        };
                        off += p.ncols();
                        b
                    })
                    .collect()
            }
        };
        Self::from_blocks(m, d, blocks)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn blocks(&self) -> &[SparseBlock] {
        &self.blocks
    }

    /// Multiplies charged to the row stage per symbol.
    pub fn weighting_multiplies(&self) -> u64 {
        self.blocks
            .iter()
            .map(|b| (b.rows.len() * b.width) as u64)
            .sum()
    }
}

/// `x = F^H (P s)` touching stored rows only, then one inverse transform.
pub fn apply_sparse(
    p: &RowSparsePrecoder,
    s: &[Complex64],
    fft: &InverseFft,
    counter: &mut OpCounter,
) -> Result<Vec<Complex64>> {
    if s.len() != p.d {
        return Err(PrecodingError::dims("symbol vector", p.d, s.len()));
    }
    if fft.len() != p.m {
        return Err(PrecodingError::dims("transform length", p.m, fft.len()));
    }
    let mut buf = vec![ZERO; p.m];
    for b in &p.blocks {
        let sb = &s[b.stream_offset..b.stream_offset + b.width];
        for (r, vals) in &b.rows {
            let mut acc = ZERO;
            for (v, x) in vals.iter().zip(sb) {
                acc += v * x;
            }
            buf[*r] += acc;
        }
    }
    counter.weighting += p.weighting_multiplies();
    counter.transform += fft.process(&mut buf);
    Ok(buf)
}

/// `[P_ant,1 | ... | P_ant,K]`, `M x D`.
pub fn stacked_antenna_precoder(sol: &PrecoderSolution) -> CMat {
    let m = sol.p_ant.first().map_or(0, |p| p.nrows());
    let d: usize = sol.p_ant.iter().map(|p| p.ncols()).sum();
    let mut out = CMat::zeros(m, d);
    let mut off = 0;
    for p in &sol.p_ant {
        out.columns_mut(off, p.ncols()).copy_from(p);
        off += p.ncols();
    }
    out
}

/// Unit-variance circularly symmetric complex Gaussian symbols.
pub fn random_symbols(rng: &mut ChaCha8Rng, d: usize) -> Vec<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..d)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * s, im * s)
        })
        .collect()
}

fn rel_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Runs both paths on `trials` random symbol vectors and attaches the counts
/// to the analytic report for the solution's dimensions.
pub fn measured_vs_model(sol: &PrecoderSolution, grid: &ResourceGrid, trials: usize, seed: u64) -> Result<CostReport> {
    if trials == 0 {
        return Err(PrecodingError::InvalidConfig("need at least one trial".into()));
    }
    let sparse = RowSparsePrecoder::from_solution(sol)?;
    let dense = stacked_antenna_precoder(sol);
    let fft = InverseFft::new(sparse.m());
    let k_s = sol.support.for_user(0).k_s() as u64;
    let mut report = cost_model(sparse.m() as u64, sparse.d() as u64, k_s, grid);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dense_ops = OpCounter::default();
    let mut sparse_ops = OpCounter::default();
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let s = random_symbols(&mut rng, sparse.d());
        let xd = apply_dense(&dense, &s, &mut dense_ops)?;
        let xs = apply_sparse(&sparse, &s, &fft, &mut sparse_ops)?;
        worst = worst.max(rel_diff(&xs, &xd));
    }
    let t = trials as u64;
    report.measured_multiplies = Some(MeasuredCost {
        symbols: t,
        dense_multiplies: dense_ops.total(),
        angle_multiplies: sparse_ops.weighting,
        transform_multiplies: sparse_ops.transform,
        dense_per_symbol: dense_ops.total() / t,
        angle_per_symbol: sparse_ops.weighting / t,
        transform_per_symbol: sparse_ops.transform / t,
        max_relative_mismatch: worst,
    });
    report.sparse_beneficial = report.sparse_beneficial
        && sparse_ops.total() < dense_ops.total();
    Ok(report)
}
