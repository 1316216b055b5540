//! Binary beam-selection vectors and the sort-based linear-program step.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PrecodingError, Result};

/// Lower bound on the concavity penalty so it stays strictly positive.
pub const BETA_FLOOR: f64 = 1e-12;
/// Safety factor applied to the Gershgorin bound.
pub const BETA_MARGIN: f64 = 1.1;

/// Diagonal of a binary selection matrix with exactly `k_s` ones.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SelectionVector {
    mask: Vec<bool>,
    active: Vec<usize>,
}

impl SelectionVector {
    /// Selection with ones at `indices` (any order, no duplicates).
    pub fn from_indices(m: usize, indices: &[usize]) -> Result<Self> {
        let mut mask = vec![false; m];
        for &i in indices {
            if i >= m {
                return Err(PrecodingError::RowOutOfRange { row: i, m });
            }
            if mask[i] {
                return Err(PrecodingError::InvalidConfig(format!("beam {i} selected twice")));
            }
            mask[i] = true;
        }
        Ok(Self::from_mask(mask))
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        let active = mask
            .iter()
            .enumerate()
            .filter_map(|(i, &on)| on.then_some(i))
            .collect();
        SelectionVector { mask, active }
    }

    pub fn all(m: usize) -> Self {
        Self::from_mask(vec![true; m])
    }

    pub fn m(&self) -> usize {
        self.mask.len()
    }

    /// Number of active beams.
    pub fn k_s(&self) -> usize {
        self.active.len()
    }

    /// Active beam indices, ascending.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.mask[i]
    }

    /// 0/1 entries as reals.
    pub fn to_f64(&self) -> Vec<f64> {
        self.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    pub fn hamming(&self, other: &SelectionVector) -> usize {
        self.mask
            .iter()
            .zip(&other.mask)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// `"0;3;7"` style listing.
    pub fn format_indices(&self) -> String {
        self.active
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Ones at the `k_s` smallest entries of `c`; ties go to the lower index.
///
/// This is the closed-form minimizer of `c^T delta` over
/// `{0 <= delta <= 1, sum delta = k_s}`.
pub fn select_beams(c: &[f64], k_s: usize) -> Result<SelectionVector> {
    if k_s > c.len() {
        return Err(PrecodingError::InvalidConfig(format!(
            "K_s={} exceeds {} beams",
            k_s,
            c.len()
        )));
    }
    if c.iter().any(|v| v.is_nan()) {
        return Err(PrecodingError::NonFinite {
            iteration: 0,
            context: "selection gradient".into(),
        });
    }
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));
    SelectionVector::from_indices(c.len(), &order[..k_s])
}

/// Top-`k_s` indices by descending score, ties to the lower index.
pub fn top_k(scores: &[f64], k_s: usize) -> Result<SelectionVector> {
    let neg: Vec<f64> = scores.iter().map(|v| -v).collect();
    select_beams(&neg, k_s)
}

/// Gershgorin upper bound on the largest eigenvalue of a real symmetric matrix.
pub fn gershgorin_bound(omega: &DMatrix<f64>) -> f64 {
    (0..omega.nrows())
        .map(|i| {
            let off: f64 = (0..omega.ncols())
                .filter(|&j| j != i)
                .map(|j| omega[(i, j)].abs())
                .sum();
            omega[(i, i)] + off
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Penalty weight that makes `f(delta) - beta |delta|^2` strictly concave.
pub fn penalty_beta(omega: &DMatrix<f64>) -> f64 {
    let bound = gershgorin_bound(omega);
    if bound.is_finite() {
        (BETA_MARGIN * bound).max(BETA_FLOOR)
    } else {
        BETA_FLOOR
    }
}

/// How the selection gradient is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SelectionRule {
    /// `c = grad f(delta) - 2 beta delta`: the linearization of the penalized
    /// concave objective, which guarantees descent.
    #[default]
    Penalized,
    /// `c = grad f(delta)` only.
    PlainGradient,
    /// Penalized pick, replaced by the plain-gradient pick when that one has a
    /// strictly lower selection term. Still a descent step.
    Guarded,
}

/// Forms the selection cost vector for the current binary point.
pub fn selection_cost(grad: &[f64], current: &SelectionVector, beta: f64, rule: SelectionRule) -> Vec<f64> {
    match rule {
        SelectionRule::Penalized => grad
            .iter()
            .enumerate()
            .map(|(i, g)| if current.is_active(i) { g - 2.0 * beta } else { *g })
            .collect(),
        SelectionRule::PlainGradient | SelectionRule::Guarded => grad.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sort_examples() {
        let d = select_beams(&[0.5, -1.2, 0.0, 0.3], 2).unwrap();
        assert_eq!(d.to_f64(), vec![0.0, 1.0, 1.0, 0.0]);

        let d = select_beams(&[1.0; 5], 2).unwrap();
        assert_eq!(d.to_f64(), vec![1.0, 1.0, 0.0, 0.0, 0.0]);

        let d = select_beams(&[3.0, -1.0, 2.0], 3).unwrap();
        assert_eq!(d, SelectionVector::all(3));
        assert!(select_beams(&[1.0], 2).is_err());
    }

    #[test]
    fn beta_examples() {
        assert_eq!(penalty_beta(&DMatrix::zeros(4, 4)), BETA_FLOOR);
        let omega = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]));
        assert!((gershgorin_bound(&omega) - 3.0).abs() < 1e-15);
        assert!((penalty_beta(&omega) - 3.3).abs() < 1e-12);
    }

    #[test]
    fn beta_exceeds_spectrum() {
        let mut rng = crate::linalg::testutil::rng(8);
        for _ in 0..10 {
            let g = crate::linalg::testutil::randn(&mut rng, 6, 6);
            let omega = (&g * g.adjoint()).map(|z| z.re);
            let beta = penalty_beta(&omega);
            let lmax = nalgebra::SymmetricEigen::new(omega).eigenvalues.max();
            assert!(beta > lmax);
        }
    }

    #[test]
    fn duplicate_or_out_of_range() {
        assert!(SelectionVector::from_indices(4, &[1, 1]).is_err());
        assert!(SelectionVector::from_indices(4, &[4]).is_err());
    }

    proptest! {
        #[test]
        fn selection_has_exact_cardinality_and_is_optimal(
            c in proptest::collection::vec(-10.0f64..10.0, 1..24),
            frac in 0.0f64..1.0,
        ) {
            let k = ((c.len() as f64) * frac).floor() as usize;
            let d = select_beams(&c, k).unwrap();
            prop_assert_eq!(d.k_s(), k);
            // no unselected entry is strictly smaller than a selected one
            let worst_in = d.active().iter().map(|&i| c[i]).fold(f64::NEG_INFINITY, f64::max);
            let best_out = (0..c.len()).filter(|&i| !d.is_active(i)).map(|i| c[i]).fold(f64::INFINITY, f64::min);
            prop_assert!(worst_in <= best_out);
        }
    }
}
