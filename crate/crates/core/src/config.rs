//! Scenario dimensions, powers and budgets.

use serde::{Deserialize, Serialize};

use crate::error::{PrecodingError, Result};

/// Downlink scenario: one base station with `m` antennas serving `K` users.
///
/// Noise variances are per receive antenna. The SNR convention used throughout
/// is `P_max / sigma2`, i.e. total transmit power over per-antenna noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Transmit antennas (and angular beams).
    pub m: usize,
    /// Receive antennas per user.
    pub n_k: Vec<usize>,
    /// Streams per user.
    pub d_k: Vec<usize>,
    /// Total transmit power, linear.
    pub p_max: f64,
    /// Per-user noise variance, linear.
    pub sigma2: Vec<f64>,
    /// Per-user rate weights.
    pub alpha: Vec<f64>,
    /// Active-beam budget per selection vector.
    pub k_s: usize,
    pub seed: u64,
}

impl SystemConfig {
    /// Uniform users: every user gets `n` receive antennas, `d` streams, weight 1.
    pub fn uniform(m: usize, users: usize, n: usize, d: usize, k_s: usize) -> Self {
        SystemConfig {
            m,
            n_k: vec![n; users],
            d_k: vec![d; users],
            p_max: 1.0,
            sigma2: vec![0.1; users],
            alpha: vec![1.0; users],
            k_s,
            seed: 0,
        }
    }

    pub fn users(&self) -> usize {
        self.n_k.len()
    }

    /// Total receive antennas.
    pub fn n(&self) -> usize {
        self.n_k.iter().sum()
    }

    /// Total streams.
    pub fn d(&self) -> usize {
        self.d_k.iter().sum()
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.sigma2 = noise_from_snr(self.p_max, self.users(), snr_db);
        self
    }

    pub fn with_k_s(mut self, k_s: usize) -> Self {
        self.k_s = k_s;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Checks shapes and the `D <= N <= M`, `D <= K_s <= M` budget chain.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(PrecodingError::InvalidConfig(msg));
        let k = self.users();
        if self.m == 0 {
            return bad("M must be positive".into());
        }
        if k == 0 {
            return bad("at least one user is required".into());
        }
        if self.d_k.len() != k || self.sigma2.len() != k || self.alpha.len() != k {
            return bad(format!(
                "per-user lists disagree: n_k={}, d_k={}, sigma2={}, alpha={}",
                k,
                self.d_k.len(),
                self.sigma2.len(),
                self.alpha.len()
            ));
        }
        for (u, (&n, &d)) in self.n_k.iter().zip(&self.d_k).enumerate() {
            if n == 0 || d == 0 {
                return bad(format!("user {u}: N_k and D_k must be positive"));
            }
            if d > n {
                return bad(format!("user {u}: D_k={d} exceeds N_k={n}"));
            }
        }
        if self.n() > self.m {
            return bad(format!("N={} exceeds M={}", self.n(), self.m));
        }
        if !(self.p_max > 0.0 && self.p_max.is_finite()) {
            return bad("P_max must be positive".into());
        }
        if self.sigma2.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("noise variances must be positive".into());
        }
        if self.alpha.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return bad("rate weights must be nonnegative".into());
        }
        if self.k_s > self.m || self.k_s == 0 {
            return bad(format!("K_s={} outside 1..={}", self.k_s, self.m));
        }
        if self.k_s < self.d() {
            return bad(format!(
                "K_s={} is below the stream count D={}",
                self.k_s,
                self.d()
            ));
        }
        Ok(())
    }
}

/// Per-user noise variance for an SNR given as `P_max / sigma2` in dB.
pub fn noise_from_snr(p_max: f64, users: usize, snr_db: f64) -> Vec<f64> {
    vec![p_max / 10f64.powf(snr_db / 10.0); users]
}
