//! Track-to-track association at the fusion center: Mahalanobis pairing
//! costs, chi-square gating, and optimal 2-D assignment.
//!
//! Rectangular problems are padded to square with dummy entries priced at
//! the gate, so leaving a track unmatched is always available at gate cost
//! and any real pairing cheaper than the gate is preferred to it.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gaussian::{spd_inverse, GaussianEstimate};

/// Pairing cost between a global and a local track: squared Mahalanobis
/// distance of the means under the summed covariances. The cross-covariance
/// between the two tracks is not available at the fusion center, so the sum
/// `G_g + G_l` stands in for the difference covariance.
pub fn t2t_cost(global: &GaussianEstimate, local: &GaussianEstimate) -> Result<f64> {
    if global.dim() != local.dim() {
        return Err(Error::DimensionMismatch {
            context: "t2t_cost",
            left: global.dim(),
            right: local.dim(),
        });
    }
    let d = global.mean() - local.mean();
    let sum_inv = spd_inverse(&(global.cov() + local.cov()))?;
    Ok((d.transpose() * sum_inv * d)[(0, 0)])
}

/// A gated rectangular assignment problem.
#[derive(Debug, Clone)]
pub struct AssignmentProblem {
    pub cost: DMatrix<f64>,
    pub gate: f64,
}

/// An optimal matching with the rows and columns left unmatched.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
    pub total_cost: f64,
}

/// Stand-in for gated-out entries; large but safe for the solver's
/// potential arithmetic.
const FORBIDDEN: f64 = 1e15;

/// Minimum-cost perfect assignment on a square matrix via shortest
/// augmenting paths with dual potentials; `O(n^3)`.
fn square_assignment(a: &DMatrix<f64>) -> Vec<usize> {
    let n = a.nrows();
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; n + 1];
    let mut assigned = vec![0_usize; n + 1];
    let mut way = vec![0_usize; n + 1];
    for i in 1..=n {
        assigned[0] = i;
        let mut j0 = 0_usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = assigned[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[assigned[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if assigned[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assigned[j0] = assigned[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![usize::MAX; n];
    for j in 1..=n {
        if assigned[j] > 0 {
            row_to_col[assigned[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Solve the gated rectangular assignment problem to optimality.
///
/// Entries above the gate can never be matched. The matrix is padded to
/// `(rows + cols)` square so every row and column can fall back to its own
/// dummy at gate cost, whatever the others do; dummy-dummy cells are free.
pub fn solve_assignment(p: &AssignmentProblem) -> Result<Matching> {
    let (rows, cols) = (p.cost.nrows(), p.cost.ncols());
    if rows == 0 || cols == 0 {
        return Ok(Matching {
            pairs: Vec::new(),
            unmatched_rows: (0..rows).collect(),
            unmatched_cols: (0..cols).collect(),
            total_cost: 0.0,
        });
    }
    if !p.gate.is_finite() || p.gate < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "assignment gate {} must be finite and nonnegative",
            p.gate
        )));
    }
    let n = rows + cols;
    let padded = DMatrix::from_fn(n, n, |i, j| match (i < rows, j < cols) {
        (true, true) => {
            let c = p.cost[(i, j)];
            if c.is_finite() && c <= p.gate {
                c
            } else {
                FORBIDDEN
            }
        }
        (false, false) => 0.0,
        _ => p.gate,
    });
    let row_to_col = square_assignment(&padded);

    let mut pairs = Vec::new();
    let mut unmatched_rows = Vec::new();
    let mut matched_cols = vec![false; cols];
    let mut total_cost = 0.0;
    for (i, &j) in row_to_col.iter().enumerate().take(rows) {
        if j < cols && padded[(i, j)] < FORBIDDEN {
            pairs.push((i, j));
            matched_cols[j] = true;
            total_cost += p.cost[(i, j)];
        } else {
            unmatched_rows.push(i);
        }
    }
    let unmatched_cols = (0..cols).filter(|&j| !matched_cols[j]).collect();
    Ok(Matching {
        pairs,
        unmatched_rows,
        unmatched_cols,
        total_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(cost: DMatrix<f64>, gate: f64) -> AssignmentProblem {
        AssignmentProblem { cost, gate }
    }

    /// Exhaustive optimum of the gated objective: matched pair costs plus
    /// gate for every unmatched row and column. Enumerates, per row, every
    /// admissible column or leaving the row unmatched.
    fn brute_force(p: &AssignmentProblem) -> f64 {
        fn recurse(p: &AssignmentProblem, i: usize, used: &mut Vec<bool>) -> f64 {
            let rows = p.cost.nrows();
            if i == rows {
                let stranded = used.iter().filter(|u| !**u).count();
                return stranded as f64 * p.gate;
            }
            // Leave row i unmatched.
            let mut best = p.gate + recurse(p, i + 1, used);
            for j in 0..p.cost.ncols() {
                let c = p.cost[(i, j)];
                if used[j] || !c.is_finite() || c > p.gate {
                    continue;
                }
                used[j] = true;
                best = best.min(c + recurse(p, i + 1, used));
                used[j] = false;
            }
            best
        }
        let mut used = vec![false; p.cost.ncols()];
        recurse(p, 0, &mut used)
    }

    /// The solver's value of the same gated objective.
    fn gated_total(p: &AssignmentProblem, m: &Matching) -> f64 {
        m.total_cost + (m.unmatched_rows.len() + m.unmatched_cols.len()) as f64 * p.gate
    }

    #[test]
    fn identical_estimates_cost_zero() {
        let e = GaussianEstimate::new(
            DVector::from_row_slice(&[1.0, 2.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        assert_relative_eq!(t2t_cost(&e, &e).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn scalar_cost_hand_value() {
        let a = GaussianEstimate::scalar(0.0, 1.0).unwrap();
        let b = GaussianEstimate::scalar(2.0, 1.0).unwrap();
        assert_relative_eq!(t2t_cost(&a, &b).unwrap(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(
            t2t_cost(&a, &b).unwrap(),
            t2t_cost(&b, &a).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn diagonal_dominant_matches_identity() {
        let cost = DMatrix::from_row_slice(3, 3, &[1.0, 9.0, 9.0, 9.0, 1.0, 9.0, 9.0, 9.0, 1.0]);
        let m = solve_assignment(&problem(cost, 100.0)).unwrap();
        assert_eq!(m.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_relative_eq!(m.total_cost, 3.0);
    }

    #[test]
    fn two_by_two_prefers_diagonal() {
        let cost = DMatrix::from_row_slice(2, 2, &[1.0, 10.0, 10.0, 1.0]);
        let m = solve_assignment(&problem(cost, 100.0)).unwrap();
        assert_eq!(m.pairs, vec![(0, 0), (1, 1)]);
        assert_relative_eq!(m.total_cost, 2.0);
    }

    #[test]
    fn random_square_instances_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let cost = DMatrix::from_fn(6, 6, |_, _| rng.random_range(0.0..20.0));
            let p = problem(cost, 15.0);
            let m = solve_assignment(&p).unwrap();
            let oracle = brute_force(&p);
            assert_relative_eq!(gated_total(&p, &m), oracle, epsilon = 1e-9);
        }
    }

    #[test]
    fn random_rectangular_instances_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..60 {
            let rows = rng.random_range(1..=5);
            let cols = rng.random_range(1..=7);
            let cost = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(0.0..20.0));
            let p = problem(cost, 12.0);
            let m = solve_assignment(&p).unwrap();
            let oracle = brute_force(&p);
            assert_relative_eq!(gated_total(&p, &m), oracle, epsilon = 1e-9);
            // Bookkeeping: every row/column appears exactly once.
            assert_eq!(m.pairs.len() + m.unmatched_rows.len(), rows);
            assert_eq!(m.pairs.len() + m.unmatched_cols.len(), cols);
        }
    }

    #[test]
    fn gated_pairs_are_never_matched() {
        let cost = DMatrix::from_row_slice(2, 2, &[50.0, 60.0, 70.0, 80.0]);
        let m = solve_assignment(&problem(cost, 10.0)).unwrap();
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_rows, vec![0, 1]);
        assert_eq!(m.unmatched_cols, vec![0, 1]);
    }

    #[test]
    fn above_gate_entry_forces_cross_match() {
        // (0,0) is cheapest but above the gate; the optimum pairs off
        // diagonal entries instead.
        let cost = DMatrix::from_row_slice(2, 2, &[11.0, 3.0, 2.0, 12.0]);
        let m = solve_assignment(&problem(cost, 10.0)).unwrap();
        assert_eq!(m.pairs, vec![(0, 1), (1, 0)]);
        assert_relative_eq!(m.total_cost, 5.0);
    }

    #[test]
    fn empty_problem_is_fine() {
        let m = solve_assignment(&problem(DMatrix::zeros(0, 3), 1.0)).unwrap();
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_cols, vec![0, 1, 2]);
    }

    #[test]
    fn single_cheap_pair_beats_two_dummies() {
        // Matching the real pair costs 4; leaving both unmatched costs
        // 2 * gate = 20.
        let cost = DMatrix::from_row_slice(1, 1, &[4.0]);
        let m = solve_assignment(&problem(cost, 10.0)).unwrap();
        assert_eq!(m.pairs, vec![(0, 0)]);
    }
}
