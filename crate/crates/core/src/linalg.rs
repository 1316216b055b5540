//! Small dense complex linear-algebra helpers shared by the solvers.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// How a Hermitian system was solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveKind {
    Cholesky,
    /// Singular or indefinite system; minimum-norm least-squares solution via SVD.
    PseudoInverse,
}

/// `(A + A^H) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

pub fn trace_re(a: &CMat) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

/// Squared Frobenius norm.
pub fn frob2(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn all_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Solves `A X = B` for Hermitian positive semidefinite `A`.
///
/// Cholesky is tried first; on failure the minimum-norm solution is taken from
/// an SVD with singular values below `1e-12 * s_max` discarded.
pub fn hermitian_solve(a: &CMat, b: &CMat) -> Option<(CMat, SolveKind)> {
    let sym = hermitian_part(a);
    if let Some(chol) = Cholesky::new(sym.clone()) {
        if well_conditioned(&chol) {
            let x = chol.solve(b);
            if all_finite(&x) {
                return Some((x, SolveKind::Cholesky));
            }
        }
    }
    pseudo_solve(&sym, b).map(|x| (x, SolveKind::PseudoInverse))
}

/// Rejects factors whose pivot spread means `A` is numerically rank deficient.
fn well_conditioned(chol: &Cholesky<Complex64, nalgebra::Dyn>) -> bool {
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..l.nrows() {
        let d = l[(i, i)].re;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    l.nrows() == 0 || (lo > 0.0 && (lo / hi).powi(2) > 1e-13)
}

/// Minimum-norm least-squares solve through the SVD.
pub fn pseudo_solve(a: &CMat, b: &CMat) -> Option<CMat> {
    let svd = a.clone().svd(true, true);
    let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if s_max <= 0.0 || !s_max.is_finite() {
        return None;
    }
    let x = svd.solve(b, 1e-12 * s_max).ok()?;
    all_finite(&x).then_some(x)
}

/// `log det A` for Hermitian positive definite `A` (natural log).
pub fn logdet_hpd(a: &CMat) -> Option<f64> {
    let chol = Cholesky::new(hermitian_part(a))?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..l.nrows() {
        let d = l[(i, i)].re;
        if !(d > 0.0) {
            return None;
        }
        acc += d.ln();
    }
    Some(2.0 * acc)
}

/// Block-diagonal matrix from square blocks.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, off), (b.nrows(), b.ncols())).copy_from(b);
        off += b.nrows();
    }
    out
}

/// Starting offset of each block for the given block sizes.
pub fn offsets(sizes: &[usize]) -> Vec<usize> {
    let mut acc = 0;
    sizes
        .iter()
        .map(|&s| {
            let o = acc;
            acc += s;
            o
        })
        .collect()
}

/// Diagonal of `L R` without forming the product, `O(rows * inner)`.
pub(crate) fn diag_product(l: &CMat, r: &CMat) -> Vec<Complex64> {
    (0..l.nrows())
        .map(|i| {
            l.row(i)
                .iter()
                .zip(r.column(i).iter())
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    pub fn rng(seed: u64) -> ChaCha8Rng {
        rand::SeedableRng::seed_from_u64(seed)
    }

    pub fn randn(rng: &mut impl Rng, r: usize, c: usize) -> CMat {
        CMat::from_fn(r, c, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
    }

    pub fn max_abs(a: &CMat) -> f64 {
        a.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    #[test]
    fn hermitian_solve_pd() {
        let mut r = rng(3);
        let g = randn(&mut r, 5, 5);
        let a = &g * g.adjoint() + CMat::identity(5, 5);
        let b = randn(&mut r, 5, 2);
        let (x, kind) = hermitian_solve(&a, &b).unwrap();
        assert_eq!(kind, SolveKind::Cholesky);
        assert!(max_abs(&(&a * &x - &b)) < 1e-12);
    }

    #[test]
    fn hermitian_solve_singular_consistent() {
        let mut r = rng(4);
        let g = randn(&mut r, 5, 2);
        let a = &g * g.adjoint();
        // right-hand side in the range of A
        let b = &a * randn(&mut r, 5, 1);
        let (x, kind) = hermitian_solve(&a, &b).unwrap();
        assert_eq!(kind, SolveKind::PseudoInverse);
        assert!(max_abs(&(&a * &x - &b)) < 1e-9);
    }

    #[test]
    fn logdet_matches_eigenvalues() {
        let mut r = rng(5);
        let g = randn(&mut r, 4, 4);
        let a = &g * g.adjoint() + CMat::identity(4, 4);
        let eig = nalgebra::SymmetricEigen::new(a.clone());
        let want: f64 = eig.eigenvalues.iter().map(|l| l.ln()).sum();
        assert!((logdet_hpd(&a).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn diag_product_matches_direct() {
        let mut r = rng(6);
        let l = randn(&mut r, 7, 3);
        let q = randn(&mut r, 3, 7);
        let full = &l * &q;
        for (i, v) in diag_product(&l, &q).into_iter().enumerate() {
            assert!((v - full[(i, i)]).norm() < 1e-12);
        }
    }
}
