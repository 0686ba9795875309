//! Dense phase-1 simplex deciding whether a non-negative, normalized
//! direction exists along which no period loses.
//!
//! The feasibility problem is: find f >= 0 with sum_k f_k = 1 and
//! <r_i, f> >= 0 for every row r_i. Surplus variables turn the row
//! constraints into equalities with a ready-made starting basis, so a
//! single artificial variable (on the normalization row) is enough.
//! Pivoting follows Bland's rule.

/// Entering-variable threshold on reduced costs.
const RED_COST_EPS: f64 = 1e-12;
/// Smallest pivot magnitude accepted by the ratio test.
const PIVOT_EPS: f64 = 1e-11;
/// Ratio-test tie window for Bland's lowest-index rule.
const RATIO_TIE_EPS: f64 = 1e-12;

/// The pivot budget was exhausted before the tableau reached an optimum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct SimplexStall;

/// Searches for f >= 0, sum f = 1, rows * f >= 0.
///
/// Returns `Some(f)` (a unit-l1 witness) when such a direction exists and
/// the phase-1 objective reaches `tol`, `None` when the cone is infeasible.
pub(crate) fn no_loss_direction(
    rows: &[Vec<f64>],
    tol: f64,
    max_pivots: usize,
) -> Result<Option<Vec<f64>>, SimplexStall> {
    let n = rows.len();
    let m = rows[0].len();
    let n_cols = m + n + 1; // fractions, surpluses, one artificial
    let rhs = n_cols;

    // Constraint rows: -<r_i, f> + s_i = 0, then sum_k f_k + a = 1.
    let mut t = vec![vec![0.0; n_cols + 1]; n + 1];
    for (i, row) in rows.iter().enumerate() {
        for (k, &r) in row.iter().enumerate() {
            t[i][k] = -r;
        }
        t[i][m + i] = 1.0;
    }
    for cell in t[n].iter_mut().take(m) {
        *cell = 1.0;
    }
    t[n][m + n] = 1.0;
    t[n][rhs] = 1.0;

    // Reduced-cost row for minimizing the artificial, priced out against
    // the starting basis {s_1..s_n, a}; the last cell carries -objective.
    let mut cost = vec![0.0; n_cols + 1];
    for cell in cost.iter_mut().take(m) {
        *cell = -1.0;
    }
    cost[rhs] = -1.0;

    let mut basis: Vec<usize> = (0..n).map(|i| m + i).collect();
    basis.push(m + n);

    let mut optimal = false;
    for _ in 0..max_pivots {
        // Bland: lowest-index column with a negative reduced cost.
        let Some(pivot_col) = (0..n_cols).find(|&j| cost[j] < -RED_COST_EPS) else {
            optimal = true;
            break;
        };

        // Ratio test; ties resolved toward the lowest basic variable index.
        let mut pivot_row: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for (i, row) in t.iter().enumerate() {
            let a = row[pivot_col];
            if a > PIVOT_EPS {
                let ratio = row[rhs] / a;
                let replace = match pivot_row {
                    None => true,
                    Some(r) => {
                        ratio < best_ratio - RATIO_TIE_EPS
                            || ((ratio - best_ratio).abs() <= RATIO_TIE_EPS && basis[i] < basis[r])
                    }
                };
                if replace {
                    pivot_row = Some(i);
                    best_ratio = ratio;
                }
            }
        }
        // The phase-1 objective is bounded below by zero, so an unbounded
        // pivot column indicates numerical trouble.
        let Some(pivot_row) = pivot_row else {
            return Err(SimplexStall);
        };

        pivot(&mut t, &mut cost, pivot_row, pivot_col);
        basis[pivot_row] = pivot_col;
    }
    if !optimal {
        return Err(SimplexStall);
    }

    let objective = -cost[rhs];
    if objective > tol {
        return Ok(None);
    }

    let mut f = vec![0.0; m];
    for (i, &var) in basis.iter().enumerate() {
        if var < m {
            f[var] = t[i][rhs].max(0.0);
        }
    }
    let sum: f64 = f.iter().sum();
    if sum <= 0.0 {
        // Feasible at objective ~0 only via f = 0 would contradict the
        // normalization row; treat as infeasible rather than divide by zero.
        return Ok(None);
    }
    for x in &mut f {
        *x /= sum;
    }
    Ok(Some(f))
}

fn pivot(t: &mut [Vec<f64>], cost: &mut [f64], pivot_row: usize, pivot_col: usize) {
    let inv = 1.0 / t[pivot_row][pivot_col];
    for cell in t[pivot_row].iter_mut() {
        *cell *= inv;
    }
    t[pivot_row][pivot_col] = 1.0;
    let pivot = t[pivot_row].clone();

    for (i, row) in t.iter_mut().enumerate() {
        if i == pivot_row {
            continue;
        }
        let factor = row[pivot_col];
        if factor != 0.0 {
            for (cell, &p) in row.iter_mut().zip(&pivot) {
                *cell -= factor * p;
            }
            row[pivot_col] = 0.0;
        }
    }
    let factor = cost[pivot_col];
    if factor != 0.0 {
        for (cell, &p) in cost.iter_mut().zip(&pivot) {
            *cell -= factor * p;
        }
        cost[pivot_col] = 0.0;
    }
}
