//! Machine-readable run reports and TWR surface exports.
//!
//! Reports serialize to JSON with a fixed field order and shortest
//! round-trip float formatting, so identical inputs produce byte-identical
//! output across runs.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::assumptions::AssumptionReport;
use crate::domain::{self, Admissibility, FractionVector, DEFAULT_TOL_RUIN};
use crate::ingest::{NormalizedReturns, ReturnMatrix};
use crate::solver::SolverResult;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ReportError {
    #[error("bad surface slice: {0}")]
    BadSlice(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Content hash of the parsed return matrix (shape, names, entries).
    pub input_digest: String,
    pub tool_version: String,
    pub assumptions: AssumptionReport,
    /// Present only when the assumptions pass and a solve was requested.
    pub solution: Option<SolverResult>,
}

impl RunReport {
    pub fn new(
        input_digest: String,
        assumptions: AssumptionReport,
        solution: Option<SolverResult>,
    ) -> Self {
        assert!(
            solution.is_none() || assumptions.overall,
            "a solution requires passing assumptions"
        );
        Self {
            input_digest,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            assumptions,
            solution,
        }
    }
}

/// SHA-256 over a canonical encoding of the parsed matrix.
pub fn input_digest(matrix: &ReturnMatrix) -> String {
    let mut hasher = Sha256::new();
    hasher.update((matrix.n_periods() as u64).to_le_bytes());
    hasher.update((matrix.n_systems() as u64).to_le_bytes());
    for name in matrix.system_names() {
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
    }
    for row in matrix.entries() {
        for value in row {
            hasher.update(value.to_le_bytes());
        }
    }
    let mut hex = String::with_capacity(64);
    for byte in hasher.finalize() {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Deterministic JSON rendering of a run report.
pub fn to_json(report: &RunReport) -> String {
    serde_json::to_string_pretty(report).expect("run reports always serialize")
}

/// Samples the TWR surface over two free systems and returns it as CSV
/// with header `f_a,f_b,twr,outside`.
///
/// `fixed` pins every other system (1-based) at a non-negative value.
/// Each free axis carries `resolution` lattice points spaced by
/// boundary_scale(e_k) / resolution; lattice points outside the admissible
/// region are emitted with twr = 0 and outside = 1.
pub fn surface_grid(
    returns: &NormalizedReturns,
    resolution: usize,
    fixed: &[(usize, f64)],
) -> Result<String, ReportError> {
    assert!(resolution >= 2, "resolution must be at least 2");
    let m = returns.n_systems();
    if m < 2 {
        return Err(ReportError::BadSlice(
            "a surface needs two free systems".into(),
        ));
    }
    if fixed.len() != m - 2 {
        return Err(ReportError::BadSlice(format!(
            "{} systems require {} fixed assignments, got {}",
            m,
            m - 2,
            fixed.len()
        )));
    }

    let mut base = vec![f64::NAN; m];
    for &(system, value) in fixed {
        if !(1..=m).contains(&system) {
            return Err(ReportError::BadSlice(format!(
                "system {system} out of range 1..={m}"
            )));
        }
        if !value.is_finite() || value < 0.0 {
            return Err(ReportError::BadSlice(format!(
                "system {system} fixed at {value}; values must be finite and non-negative"
            )));
        }
        if base[system - 1].is_finite() {
            return Err(ReportError::BadSlice(format!(
                "system {system} fixed twice"
            )));
        }
        base[system - 1] = value;
    }
    let free: Vec<usize> = (0..m).filter(|k| !base[*k].is_finite()).collect();
    debug_assert_eq!(free.len(), 2);
    let (axis_a, axis_b) = (free[0], free[1]);
    for value in &mut base {
        if !value.is_finite() {
            *value = 0.0;
        }
    }

    let mut steps = [0.0; 2];
    for (slot, &axis) in steps.iter_mut().zip(&free) {
        let upper = domain::boundary_scale(returns, &FractionVector::unit(m, axis + 1))
            .map_err(|err| ReportError::BadSlice(err.to_string()))?;
        *slot = upper / resolution as f64;
    }

    let mut out = String::from("f_a,f_b,twr,outside\n");
    let mut point = base;
    for i in 0..resolution {
        let f_a = i as f64 * steps[0];
        point[axis_a] = f_a;
        for j in 0..resolution {
            let f_b = j as f64 * steps[1];
            point[axis_b] = f_b;
            let status = domain::classify(returns, &point, DEFAULT_TOL_RUIN);
            let (twr, outside) = if status.kind == Admissibility::Outside {
                (0.0, 1)
            } else {
                (domain::twr_slice(returns, &point), 0)
            };
            out.push_str(&format!("{f_a},{f_b},{twr},{outside}\n"));
        }
    }
    Ok(out)
}
