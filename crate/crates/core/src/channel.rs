//! Synthetic geometric multipath channels and the angle-domain transform.
//!
//! Each user sees `L` plane-wave paths. Transmit angles cluster around a
//! per-user center drawn uniformly from the sector; receive angles are
//! independent. Path gains are complex Gaussian with variance `M N_k / L`, so
//! the average channel energy per user matches an i.i.d. unit-variance
//! channel of the same shape (pathloss normalized to one).

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{PrecodingError, Result};
use crate::fft::dft_matrix;
use crate::linalg::{frob2, CMat, CVec};

/// Generation parameters, carried along with the channel for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Paths per user.
    pub paths: usize,
    /// Half-width of the window transmit angles are drawn from around the user's center, radians.
    pub angle_spread: f64,
    /// Width of the sector user centers are drawn from, radians.
    pub sector: f64,
    /// Element spacing in wavelengths, both ends.
    pub spacing: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            paths: 6,
            angle_spread: 5f64.to_radians(),
            sector: 120f64.to_radians(),
            spacing: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// Antenna-domain channels, `N_k x M`.
    pub h_ant: Vec<CMat>,
    /// Angle-domain channels, `N_k x M`.
    pub h: Vec<CMat>,
    /// Vertical stack of the angle-domain channels, `N x M`.
    pub h_all: CMat,
    pub params: Option<ChannelParams>,
}

/// Uniform linear array response, unit norm.
pub fn steering_vector(m: usize, theta: f64, spacing: f64) -> CVec {
    let scale = 1.0 / (m as f64).sqrt();
    let step = 2.0 * PI * spacing * theta.sin();
    CVec::from_fn(m, |i, _| Complex64::from_polar(scale, step * i as f64))
}

/// `H_ant F^H` with `F` the unitary DFT. Rows of the result are angular beams.
pub fn to_angle_domain(h_ant: &CMat, m: usize) -> Result<CMat> {
    if h_ant.ncols() != m {
        return Err(PrecodingError::dims(
            "to_angle_domain",
            format!("{m} columns"),
            h_ant.ncols(),
        ));
    }
    Ok(h_ant * dft_matrix(m).adjoint())
}

/// Inverse of [`to_angle_domain`]: `H F`, also used to map angle-domain
/// precoders back via `P_ant = F^H P`.
pub fn to_antenna_precoder(p: &CMat) -> CMat {
    dft_matrix(p.nrows()).adjoint() * p
}

impl ChannelSet {
    pub fn from_antenna_domain(h_ant: Vec<CMat>, params: Option<ChannelParams>) -> Result<Self> {
        let m = h_ant
            .first()
            .map(|h| h.ncols())
            .ok_or_else(|| PrecodingError::InvalidConfig("no users".into()))?;
        let h = h_ant
            .iter()
            .map(|hk| to_angle_domain(hk, m))
            .collect::<Result<Vec<_>>>()?;
        Ok(ChannelSet {
            h_all: stack_rows(&h),
            h_ant,
            h,
            params,
        })
    }

    /// Builds a channel set directly from angle-domain blocks.
    pub fn from_angle_domain(h: Vec<CMat>) -> Result<Self> {
        let m = h
            .first()
            .map(|hk| hk.ncols())
            .ok_or_else(|| PrecodingError::InvalidConfig("no users".into()))?;
        if let Some(bad) = h.iter().find(|hk| hk.ncols() != m) {
            return Err(PrecodingError::dims("from_angle_domain", m, bad.ncols()));
        }
        let f = dft_matrix(m);
        let h_ant = h.iter().map(|hk| hk * &f).collect();
        Ok(ChannelSet {
            h_all: stack_rows(&h),
            h_ant,
            h,
            params: None,
        })
    }

    pub fn m(&self) -> usize {
        self.h_all.ncols()
    }

    pub fn users(&self) -> usize {
        self.h.len()
    }

    pub fn n_k(&self) -> Vec<usize> {
        self.h.iter().map(|hk| hk.nrows()).collect()
    }

    /// Checks the channel agrees with the configured dimensions.
    pub fn check(&self, cfg: &SystemConfig) -> Result<()> {
        if self.m() != cfg.m {
            return Err(PrecodingError::dims("channel M", cfg.m, self.m()));
        }
        if self.n_k() != cfg.n_k {
            return Err(PrecodingError::dims(
                "channel N_k",
                format!("{:?}", cfg.n_k),
                format!("{:?}", self.n_k()),
            ));
        }
        Ok(())
    }

    /// Energy of every angular beam summed over users: `sum_k |H_k[:, i]|^2`.
    pub fn beam_energy(&self) -> Vec<f64> {
        column_energy(&self.h_all)
    }

    /// Fraction of total angle-domain energy carried by the `top` strongest beams.
    pub fn top_beam_energy_fraction(&self, top: usize) -> f64 {
        let mut e = self.beam_energy();
        let total: f64 = e.iter().sum();
        e.sort_by(|a, b| b.total_cmp(a));
        e.iter().take(top).sum::<f64>() / total
    }

    /// Serializes the antenna-domain channel.
    ///
    /// Layout: a header line `channel <M> <K> <N_1> ... <N_K>`, then one line
    /// per receive antenna (users in order) holding `M` space-separated
    /// `re,im` pairs. Floats use the shortest round-trip representation.
    pub fn to_text(&self) -> String {
        let mut out = format!("channel {} {}", self.m(), self.users());
        for n in self.n_k() {
            let _ = write!(out, " {n}");
        }
        out.push('\n');
        for hk in &self.h_ant {
            for r in 0..hk.nrows() {
                let row: Vec<String> = (0..hk.ncols())
                    .map(|c| format!("{:?},{:?}", hk[(r, c)].re, hk[(r, c)].im))
                    .collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| PrecodingError::Parse { line, message };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty channel file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.first() != Some(&"channel") || fields.len() < 3 {
            return Err(parse_err(hl + 1, "expected `channel <M> <K> <N_k>...`".into()));
        }
        let nums = fields[1..]
            .iter()
            .map(|f| f.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(hl + 1, e.to_string()))?;
        let (m, k) = (nums[0], nums[1]);
        if nums.len() != 2 + k {
            return Err(parse_err(hl + 1, format!("expected {k} receive-antenna counts")));
        }
        let mut h_ant = Vec::with_capacity(k);
        for &n in &nums[2..] {
            let mut hk = DMatrix::zeros(n, m);
            for r in 0..n {
                let (ln, line) = lines
                    .next()
                    .ok_or_else(|| parse_err(0, "unexpected end of channel file".into()))?;
                let entries: Vec<&str> = line.split_whitespace().collect();
                if entries.len() != m {
                    return Err(parse_err(ln + 1, format!("expected {m} entries, got {}", entries.len())));
                }
                for (c, e) in entries.iter().enumerate() {
                    let (re, im) = e
                        .split_once(',')
                        .ok_or_else(|| parse_err(ln + 1, format!("bad entry `{e}`")))?;
                    let re: f64 = re.parse().map_err(|_| parse_err(ln + 1, format!("bad real `{re}`")))?;
                    let im: f64 = im.parse().map_err(|_| parse_err(ln + 1, format!("bad imag `{im}`")))?;
                    hk[(r, c)] = Complex64::new(re, im);
                }
            }
            h_ant.push(hk);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(parse_err(ln + 1, "trailing data after channel rows".into()));
        }
        ChannelSet::from_antenna_domain(h_ant, None)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| PrecodingError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PrecodingError::io(path, e))?;
        ChannelSet::from_text(&text)
    }
}

pub(crate) fn stack_rows(blocks: &[CMat]) -> CMat {
    let m = blocks.first().map_or(0, |b| b.ncols());
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(n, m);
    let mut off = 0;
    for b in blocks {
        out.rows_mut(off, b.nrows()).copy_from(b);
        off += b.nrows();
    }
    out
}

pub(crate) fn column_energy(h: &CMat) -> Vec<f64> {
    (0..h.ncols())
        .map(|c| h.column(c).iter().map(|z| z.norm_sqr()).sum())
        .collect()
}

fn complex_gaussian(rng: &mut impl Rng, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Draws a deterministic multipath channel for every user in `cfg`.
pub fn synth_channel(cfg: &SystemConfig, params: &ChannelParams) -> Result<ChannelSet> {
    if params.paths == 0 {
        return Err(PrecodingError::InvalidConfig("path count must be at least 1".into()));
    }
    if cfg.m == 0 || cfg.n_k.is_empty() {
        return Err(PrecodingError::InvalidConfig("empty array or user set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let l = params.paths;
    let h_ant = cfg
        .n_k
        .iter()
        .map(|&n| {
            let center = (rng.random::<f64>() - 0.5) * params.sector;
            let mut hk = CMat::zeros(n, cfg.m);
            for _ in 0..l {
                let theta = center + params.angle_spread * (2.0 * rng.random::<f64>() - 1.0);
                let phi = (rng.random::<f64>() - 0.5) * PI;
                let g = complex_gaussian(&mut rng, (cfg.m * n) as f64 / l as f64);
                let a = steering_vector(cfg.m, theta, params.spacing);
                let b = steering_vector(n, phi, params.spacing);
                hk += (b * a.adjoint()) * g;
            }
            hk
        })
        .collect();
    ChannelSet::from_antenna_domain(h_ant, Some(*params))
}

/// Relative Frobenius-norm change under the domain transform, per user.
pub fn transform_norm_error(ch: &ChannelSet) -> f64 {
    ch.h_ant
        .iter()
        .zip(&ch.h)
        .map(|(a, b)| {
            let na = frob2(a).sqrt();
            let nb = frob2(b).sqrt();
            if na == 0.0 {
                nb
            } else {
                (na - nb).abs() / na
            }
        })
        .fold(0.0, f64::max)
}
