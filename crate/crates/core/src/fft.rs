//! DFT matrices and an instrumented radix-2 inverse FFT.
//!
//! Every butterfly is charged one complex multiply, trivial twiddles included,
//! so a length-`M` transform costs exactly `(M/2) log2 M` multiplies.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::linalg::{CMat, ZERO};

/// Unitary `M`-point DFT matrix, `F[r, c] = exp(-j 2 pi r c / M) / sqrt(M)`.
pub fn dft_matrix(m: usize) -> CMat {
    let scale = 1.0 / (m as f64).sqrt();
    CMat::from_fn(m, m, |r, c| {
        let phase = -2.0 * PI * ((r * c) % m) as f64 / m as f64;
        Complex64::from_polar(scale, phase)
    })
}

/// Unnormalized inverse DFT of fixed length with precomputed twiddles.
#[derive(Debug, Clone)]
pub struct InverseFft {
    len: usize,
    /// `exp(+j 2 pi k / len)` for `k < len / 2` (radix-2) or `k < len` (direct).
    twiddles: Vec<Complex64>,
    radix2: bool,
}

impl InverseFft {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "transform length must be positive");
        let radix2 = len.is_power_of_two();
        let count = if radix2 { (len / 2).max(1) } else { len };
        let twiddles = (0..count)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / len as f64))
            .collect();
        InverseFft {
            len,
            twiddles,
            radix2,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_radix2(&self) -> bool {
        self.radix2
    }

    /// Multiplies charged per transform.
    pub fn multiplies(&self) -> u64 {
        let m = self.len as u64;
        if self.radix2 {
            (m / 2) * u64::from(self.len.trailing_zeros())
        } else {
            m * m
        }
    }

    /// `out[n] = sum_k buf[k] exp(+j 2 pi k n / M)`, in place. Returns multiplies spent.
    pub fn process(&self, buf: &mut [Complex64]) -> u64 {
        assert_eq!(buf.len(), self.len, "buffer length mismatch");
        if self.radix2 {
            self.radix2_in_place(buf)
        } else {
            self.direct(buf)
        }
    }

    fn radix2_in_place(&self, buf: &mut [Complex64]) -> u64 {
        let n = self.len;
        let bits = n.trailing_zeros();
        if bits == 0 {
            return 0;
        }
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                buf.swap(i, j);
            }
        }
        let mut mults = 0u64;
        let mut half = 1;
        while half < n {
            let stride = n / (2 * half);
            for start in (0..n).step_by(2 * half) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let t = w * buf[start + k + half];
                    mults += 1;
                    let u = buf[start + k];
                    buf[start + k] = u + t;
                    buf[start + k + half] = u - t;
                }
            }
            half *= 2;
        }
        mults
    }

    fn direct(&self, buf: &mut [Complex64]) -> u64 {
        let n = self.len;
        let input = buf.to_vec();
        for (out_idx, slot) in buf.iter_mut().enumerate() {
            let mut acc = ZERO;
            for (k, v) in input.iter().enumerate() {
                acc += v * self.twiddles[(k * out_idx) % n];
            }
            *slot = acc;
        }
        (n * n) as u64
    }
}
