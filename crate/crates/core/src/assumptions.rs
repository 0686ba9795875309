//! Admissibility checks on a return matrix: a loss in every column,
//! profitability of every system, full column rank, and the absence of a
//! risk-free direction. All four checks always run so a failing input
//! still yields complete diagnostics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{normalize, NormalizedReturns, ReturnMatrix};
use crate::simplex;

/// Relative singular-value threshold for the numerical rank test.
pub const DEFAULT_TOL_RANK: f64 = 1e-10;
/// Absolute threshold at which the phase-1 objective counts as feasible.
pub const DEFAULT_TOL_CONE: f64 = 1e-9;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AssumptionError {
    #[error("phase-1 simplex exhausted its pivot budget; possible cycling")]
    SimplexCycle,
}

/// Does every system have at least one strictly losing period?
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCheck {
    pub pass: bool,
    /// First 1-based system without a loss, when failing.
    pub offending_column: Option<usize>,
}

/// Is the sample mean return of every system strictly positive?
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitabilityCheck {
    pub pass: bool,
    /// Column means in currency units, one per system.
    pub column_means: Vec<f64>,
    /// 1-based systems whose mean is not strictly positive.
    pub failing_columns: Vec<usize>,
}

/// Do the return columns have full numerical rank?
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCheck {
    pub pass: bool,
    pub numerical_rank: usize,
    pub smallest_singular_value: f64,
}

/// Is the no-risk-free-investment assumption satisfied?
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskFreeCheck {
    pub pass: bool,
    /// A non-negative, unit-l1 direction that never loses, when failing.
    pub witness: Option<Vec<f64>>,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub loss_per_column: LossCheck,
    pub profitable: ProfitabilityCheck,
    pub full_rank: RankCheck,
    pub no_risk_free: RiskFreeCheck,
    pub overall: bool,
}

/// Checks that every column holds at least one strictly negative entry.
pub fn check_loss_history(matrix: &ReturnMatrix) -> LossCheck {
    for k in 0..matrix.n_systems() {
        if matrix.entries().iter().all(|row| row[k] >= 0.0) {
            return LossCheck {
                pass: false,
                offending_column: Some(k + 1),
            };
        }
    }
    LossCheck {
        pass: true,
        offending_column: None,
    }
}

/// Checks strict positivity of each column's sample mean.
pub fn check_profitable(matrix: &ReturnMatrix) -> ProfitabilityCheck {
    let n = matrix.n_periods() as f64;
    let m = matrix.n_systems();
    let mut means = vec![0.0; m];
    for row in matrix.entries() {
        for (k, &t) in row.iter().enumerate() {
            means[k] += t;
        }
    }
    for mean in &mut means {
        *mean /= n;
    }
    let failing: Vec<usize> = means
        .iter()
        .enumerate()
        .filter(|(_, &mean)| mean <= 0.0)
        .map(|(k, _)| k + 1)
        .collect();
    ProfitabilityCheck {
        pass: failing.is_empty(),
        column_means: means,
        failing_columns: failing,
    }
}

/// Numerical rank test via singular values: rank counts values above
/// `tol_rank` times the largest one; passes iff the rank equals the number
/// of systems. Fewer periods than systems fails automatically.
pub fn check_full_rank(matrix: &ReturnMatrix, tol_rank: f64) -> RankCheck {
    let n = matrix.n_periods();
    let m = matrix.n_systems();
    let a = DMatrix::from_row_iterator(n, m, matrix.entries().iter().flatten().copied());
    let singular_values = a.singular_values();
    let sigma_max = singular_values.iter().copied().fold(0.0, f64::max);
    let rank = singular_values
        .iter()
        .filter(|&&s| s > tol_rank * sigma_max && s > 0.0)
        .count();
    let smallest = if n < m {
        0.0
    } else {
        singular_values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    };
    RankCheck {
        pass: rank == m,
        numerical_rank: rank,
        smallest_singular_value: smallest,
    }
}

/// Decides whether some non-negative, normalized direction of investment
/// never loses. The verdict is reached by phase-1 simplex on the cone
/// feasibility problem; a feasible direction is returned as the witness.
pub fn check_no_risk_free(
    returns: &NormalizedReturns,
    tol_cone: f64,
) -> Result<RiskFreeCheck, AssumptionError> {
    let n = returns.n_periods();
    let m = returns.n_systems();
    let max_pivots = 10 * (n + m + 1);
    let witness = simplex::no_loss_direction(returns.rows(), tol_cone, max_pivots)
        .map_err(|_| AssumptionError::SimplexCycle)?;
    Ok(match witness {
        None => RiskFreeCheck {
            pass: true,
            witness: None,
            diagnostic: None,
        },
        Some(direction) => {
            let gains = returns
                .rows()
                .iter()
                .any(|row| crate::domain::dot(row, &direction) > tol_cone);
            let diagnostic = if gains {
                "risk-free direction found: no period loses along it and at least one \
                 gains, so the terminal wealth relative is unbounded along this ray"
            } else {
                "risk-free direction found: every period breaks even along it"
            };
            RiskFreeCheck {
                pass: false,
                witness: Some(direction),
                diagnostic: Some(diagnostic.to_string()),
            }
        }
    })
}

/// Runs all four checks with default tolerances.
pub fn assumption_report(matrix: &ReturnMatrix) -> Result<AssumptionReport, AssumptionError> {
    assumption_report_with(matrix, DEFAULT_TOL_RANK, DEFAULT_TOL_CONE)
}

/// Runs all four checks. When some column has no loss the normalized rows
/// do not exist, but the verdict on risk-free directions is still decided:
/// a system that never loses is itself a risk-free investment.
pub fn assumption_report_with(
    matrix: &ReturnMatrix,
    tol_rank: f64,
    tol_cone: f64,
) -> Result<AssumptionReport, AssumptionError> {
    let loss_per_column = check_loss_history(matrix);
    let profitable = check_profitable(matrix);
    let full_rank = check_full_rank(matrix, tol_rank);
    let no_risk_free = match normalize(matrix) {
        Ok(returns) => check_no_risk_free(&returns, tol_cone)?,
        Err(_) => {
            let column = loss_per_column
                .offending_column
                .expect("normalization fails only without a loss column");
            let mut witness = vec![0.0; matrix.n_systems()];
            witness[column - 1] = 1.0;
            RiskFreeCheck {
                pass: false,
                witness: Some(witness),
                diagnostic: Some(format!(
                    "system {column} has no losing period; investing in it alone is risk free"
                )),
            }
        }
    };
    let overall = loss_per_column.pass && profitable.pass && full_rank.pass && no_risk_free.pass;
    Ok(AssumptionReport {
        loss_per_column,
        profitable,
        full_rank,
        no_risk_free,
        overall,
    })
}
