//! Minimum-cost bipartite assignment (Hungarian algorithm).
//!
//! Shortest augmenting path with row/column potentials, `O(n^2 m)` for an
//! `n x m` matrix with `n <= m`. Taller matrices are solved on the transpose.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{argument, validation, Result};
use crate::matrix::Matrix;

/// Matched `(prediction, ground truth)` index pairs, sorted by prediction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
}

impl Assignment {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Sum of the assigned entries of `cost`.
    pub fn total_cost(&self, cost: &Matrix) -> f64 {
        self.pairs.iter().map(|&(i, j)| cost[(i, j)]).sum()
    }

    /// Checks that the pairs index an `n x m` problem and are one-to-one.
    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        let mut rows = vec![false; n];
        let mut cols = vec![false; m];
        for &(i, j) in &self.pairs {
            if i >= n || j >= m {
                return Err(validation!("pair ({}, {}) is outside a {}x{} problem", i, j, n, m));
            }
            if core::mem::replace(&mut rows[i], true) || core::mem::replace(&mut cols[j], true) {
                return Err(validation!("pair ({}, {}) reuses an index", i, j));
            }
        }
        Ok(())
    }
}

/// Returns a minimum-total-cost assignment of size `min(rows, cols)`.
pub fn hungarian(cost: &Matrix) -> Result<Assignment> {
    if cost.is_empty() {
        return Err(argument!("cost matrix is empty ({}x{})", cost.rows(), cost.cols()));
    }
    if !cost.all_finite() {
        return Err(argument!("cost matrix has non-finite entries"));
    }
    let mut pairs = if cost.rows() <= cost.cols() {
        solve_wide(cost)
    } else {
        solve_wide(&cost.transpose()).into_iter().map(|(j, i)| (i, j)).collect()
    };
    pairs.sort_unstable();
    Ok(Assignment { pairs })
}

/// Requires `rows <= cols`. Indices inside use a 1-based layout with a virtual
/// column 0 that holds the row currently being inserted.
fn solve_wide(cost: &Matrix) -> Vec<(usize, usize)> {
    let (n, m) = (cost.rows(), cost.cols());
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    // owner[j] = row matched to column j (0 = free)
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    (1..=m).filter(|&j| owner[j] != 0).map(|j| (owner[j] - 1, j - 1)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive minimum over all injective row -> column maps (rows <= cols).
    fn brute_force(cost: &Matrix) -> f64 {
        fn go(cost: &Matrix, row: usize, used: &mut Vec<bool>) -> f64 {
            if row == cost.rows() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..cost.cols() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[(row, j)] + go(cost, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        let c = if cost.rows() <= cost.cols() { cost.clone() } else { cost.transpose() };
        go(&c, 0, &mut vec![false; c.cols()])
    }

    #[test]
    fn one_by_one() {
        let a = hungarian(&Matrix::from_rows(&[[3.5]]).unwrap()).unwrap();
        assert_eq!(a.pairs, vec![(0, 0)]);
    }

    #[test]
    fn two_by_two() {
        let c = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        let a = hungarian(&c).unwrap();
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost(&c), 2.0);
    }

    #[test]
    fn rectangular_both_ways() {
        let wide = Matrix::from_rows(&[[4.0, 1.0, 3.0], [2.0, 0.0, 5.0]]).unwrap();
        let a = hungarian(&wide).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a.total_cost(&wide), 3.0);
        let tall = wide.transpose();
        let b = hungarian(&tall).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.total_cost(&tall), 3.0);
        b.validate(3, 2).unwrap();
    }

    #[test]
    fn rejects_empty_and_nan() {
        assert!(hungarian(&Matrix::zeros(0, 3)).is_err());
        assert!(hungarian(&Matrix::from_rows(&[[f64::NAN]]).unwrap()).is_err());
    }

    #[test]
    fn validate_catches_reuse() {
        assert!(Assignment { pairs: vec![(0, 1), (1, 1)] }.validate(2, 2).is_err());
        assert!(Assignment { pairs: vec![(0, 2)] }.validate(2, 2).is_err());
    }

    proptest! {
        #[test]
        fn matches_brute_force(n in 1usize..=6, m in 1usize..=6, seed in proptest::collection::vec(-20i32..50, 36)) {
            let data: Vec<f64> = seed[..n * m].iter().map(|&x| x as f64).collect();
            let c = Matrix::from_vec(n, m, data).unwrap();
            let a = hungarian(&c).unwrap();
            a.validate(n, m).unwrap();
            prop_assert_eq!(a.len(), n.min(m));
            prop_assert_eq!(a.total_cost(&c), brute_force(&c));
        }

        #[test]
        fn real_costs_within_tolerance(vals in proptest::collection::vec(0.0f64..10.0, 25)) {
            let c = Matrix::from_vec(5, 5, vals).unwrap();
            let a = hungarian(&c).unwrap();
            prop_assert!((a.total_cost(&c) - brute_force(&c)).abs() < 1e-9);
        }
    }
}
