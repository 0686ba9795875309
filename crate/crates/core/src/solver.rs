//! Maximizes the terminal wealth relative over the admissible region by
//! projected gradient ascent on (1/N)*log TWR, with Armijo backtracking,
//! a KKT certificate, and recursive system elimination to cross-check
//! optima found on the orthant boundary.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assumptions::{AssumptionError, DEFAULT_TOL_CONE, DEFAULT_TOL_RANK};
use crate::domain::{self, DomainError, FractionVector, DEFAULT_TOL_RUIN};
use crate::ingest::{NormalizedReturns, ReturnMatrix};
use crate::simplex;

/// Steps shorter than this are treated as a stalled line search.
const MIN_STEP: f64 = 1e-18;
/// Sanity bound on (1/N)*log TWR; exceeding it means a risk-free direction
/// slipped past the assumption checks.
const UNBOUNDED_OBJECTIVE: f64 = 700.0;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("assumptions violated: {0}")]
    AssumptionViolation(String),
    /// The iteration cap was reached first; the best iterate rides along,
    /// flagged as non-certified.
    #[error("iteration cap reached before the optimum could be certified")]
    MaxIterations { result: Box<SolverResult> },
    #[error("objective exceeded its sanity bound; ascent appears unbounded")]
    UnboundedAscent,
    #[error("invalid starting point: {0}")]
    InvalidStart(String),
    #[error("cannot eliminate the last remaining system")]
    LastSystem,
    #[error("boundary refinement disagrees with the solver result: {0}")]
    InconsistentReduction(String),
    #[error("grid oracle supports at most {max} systems, got {got}")]
    TooManySystems { got: usize, max: usize },
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Assumption(#[from] AssumptionError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Stopping threshold on the projected-gradient infinity norm.
    pub tol_grad: f64,
    pub max_iter: usize,
    /// Armijo sufficient-increase constant.
    pub armijo_c: f64,
    /// Step shrink factor of the backtracking line search.
    pub backtrack_factor: f64,
    /// Largest fraction of the distance to the ruin boundary a step may take.
    pub boundary_fraction: f64,
    /// Optional warm start; defaults to the origin.
    pub initial_point: Option<Vec<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_grad: 1e-9,
            max_iter: 100_000,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            boundary_fraction: 0.95,
            initial_point: None,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<(), SolverError> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !(self.tol_grad > 0.0 && self.tol_grad.is_finite()) {
            return Err(SolverError::InvalidOptions(
                "tol_grad must be positive".into(),
            ));
        }
        if self.max_iter == 0 {
            return Err(SolverError::InvalidOptions(
                "max_iter must be at least 1".into(),
            ));
        }
        if !unit(self.armijo_c) || !unit(self.backtrack_factor) || !unit(self.boundary_fraction) {
            return Err(SolverError::InvalidOptions(
                "armijo_c, backtrack_factor and boundary_fraction must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Location {
    Interior,
    OrthantBoundary,
}

/// First-order optimality evidence: the projected gradient vanished (up to
/// tol_grad) and every active component had a non-positive gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktCertificate {
    pub projected_grad_norm: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub f_opt: FractionVector,
    #[serde(rename = "twr")]
    pub twr_value: f64,
    #[serde(rename = "log_twr_mean")]
    pub log_twr_mean_value: f64,
    #[serde(rename = "risk")]
    pub risk_value: f64,
    /// Accepted ascent steps.
    pub iterations: usize,
    pub location: Location,
    /// 1-based systems pinned at zero in the optimum.
    pub active_set: Vec<usize>,
    pub kkt: KktCertificate,
    /// 1-based systems removed and re-verified during boundary refinement.
    pub eliminated_chain: Vec<usize>,
}

/// Gradient of (1/N)*log TWR together with the concavity witness B(f)
/// and the Hessian of the log objective itself.
#[derive(Debug, Clone, PartialEq)]
pub struct TwrDerivatives {
    /// (1/N) * sum_i r_i / (1 + <r_i, f>).
    pub gradient: Vec<f64>,
    /// B(f) = sum_i w_i^T w_i with w_i = y_i - mean(y); positive
    /// semi-definite, and positive definite at interior critical points.
    pub hessian_b: Vec<Vec<f64>>,
    /// Hessian of (1/N)*log TWR: -(1/N) * sum_i y_i^T y_i (negative
    /// semi-definite).
    pub hessian_log: Vec<Vec<f64>>,
}

/// First and second derivatives at a strictly interior point.
pub fn derivatives(
    returns: &NormalizedReturns,
    f: &FractionVector,
) -> Result<TwrDerivatives, DomainError> {
    let n = returns.n_periods();
    let m = returns.n_systems();
    if f.len() != m {
        return Err(DomainError::DimensionMismatch {
            found: f.len(),
            expected: m,
        });
    }

    let mut ys: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (i, row) in returns.rows().iter().enumerate() {
        let hpr = 1.0 + domain::dot(row, f);
        if hpr <= DEFAULT_TOL_RUIN {
            return Err(DomainError::RuinDomain {
                period: i + 1,
                min_hpr: hpr,
            });
        }
        ys.push(row.iter().map(|&r| r / hpr).collect());
    }

    let inv_n = 1.0 / n as f64;
    let mut gradient = vec![0.0; m];
    for y in &ys {
        for (g, &yk) in gradient.iter_mut().zip(y) {
            *g += yk;
        }
    }
    for g in &mut gradient {
        *g *= inv_n;
    }

    let mut hessian_b = vec![vec![0.0; m]; m];
    let mut hessian_log = vec![vec![0.0; m]; m];
    for y in &ys {
        for j in 0..m {
            let w_j = y[j] - gradient[j];
            for k in 0..m {
                hessian_b[j][k] += w_j * (y[k] - gradient[k]);
                hessian_log[j][k] -= inv_n * y[j] * y[k];
            }
        }
    }

    Ok(TwrDerivatives {
        gradient,
        hessian_b,
        hessian_log,
    })
}

/// Maximizes TWR over the admissible region.
///
/// Refuses to run unless the input passes the profitability, rank and
/// no-risk-free checks (the per-column loss requirement is already encoded
/// in `NormalizedReturns`). Ascent starts at the origin, where the gradient
/// is strictly positive for profitable systems, and iterates
/// project-and-clamp steps until the projected gradient vanishes.
pub fn optimize(
    returns: &NormalizedReturns,
    opts: &SolverOptions,
) -> Result<SolverResult, SolverError> {
    opts.validate()?;
    verify_assumptions(returns)?;
    ascend(returns, opts)
}

/// The ascent loop without the assumption gate; callers must know the
/// input is sound.
pub(crate) fn ascend(
    returns: &NormalizedReturns,
    opts: &SolverOptions,
) -> Result<SolverResult, SolverError> {
    let m = returns.n_systems();
    let mut f: Vec<f64> = match &opts.initial_point {
        Some(point) => validated_start(returns, point)?,
        None => vec![0.0; m],
    };
    let mut objective = domain::log_twr_mean_slice(returns, &f)
        .expect("validated starting points are strictly interior");

    let mut iterations = 0usize;
    for _ in 0..opts.max_iter {
        let (gradient, hprs) = gradient_and_hprs(returns, &f);
        let direction = project_direction(&f, &gradient);
        if inf_norm(&direction) <= opts.tol_grad {
            break;
        }

        let mut step =
            (opts.boundary_fraction * ruin_distance(returns, &hprs, &direction)).min(1.0);
        let mut accepted = false;
        while step >= MIN_STEP {
            let candidate: Vec<f64> = f
                .iter()
                .zip(&direction)
                .map(|(x, d)| (x + step * d).max(0.0))
                .collect();
            let moved: Vec<f64> = candidate.iter().zip(&f).map(|(c, x)| c - x).collect();
            if moved.iter().all(|&d| d == 0.0) {
                break;
            }
            // Objective increase evaluated incrementally via log1p so the
            // Armijo test stays meaningful when increments drop below the
            // absolute rounding floor of the full log sum.
            if let Some(delta) = objective_delta(returns, &hprs, &moved) {
                let progress: f64 = gradient.iter().zip(&moved).map(|(g, d)| g * d).sum();
                if delta >= opts.armijo_c * progress {
                    f = candidate;
                    objective += delta;
                    accepted = true;
                    break;
                }
            }
            step *= opts.backtrack_factor;
        }
        if !accepted {
            break;
        }
        iterations += 1;
        if objective > UNBOUNDED_OBJECTIVE {
            return Err(SolverError::UnboundedAscent);
        }
    }

    let (gradient, _) = gradient_and_hprs(returns, &f);
    let direction = project_direction(&f, &gradient);
    let pg_norm = inf_norm(&direction);
    let certified = pg_norm <= opts.tol_grad;
    let result = build_result(returns, f, iterations, pg_norm, certified);
    if certified {
        Ok(result)
    } else {
        Err(SolverError::MaxIterations {
            result: Box::new(result),
        })
    }
}

/// Removes one system (1-based) from a return matrix. The reduced matrix
/// keeps satisfying the admissibility assumptions whenever the full one
/// does.
pub fn eliminate_system(matrix: &ReturnMatrix, system: usize) -> Result<ReturnMatrix, SolverError> {
    let m = matrix.n_systems();
    if m < 2 {
        return Err(SolverError::LastSystem);
    }
    assert!(
        (1..=m).contains(&system),
        "system number {system} out of range 1..={m}"
    );
    let entries: Vec<Vec<f64>> = matrix
        .entries()
        .iter()
        .map(|row| without_index(row, system - 1))
        .collect();
    let names: Vec<String> = matrix
        .system_names()
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != system - 1)
        .map(|(_, name)| name.clone())
        .collect();
    Ok(ReturnMatrix::new(entries, Some(names)).expect("reduced matrix stays structurally valid"))
}

/// Cross-checks an orthant-boundary optimum against the corresponding
/// reduced problems: each active system is eliminated in turn, the smaller
/// problem is re-solved from scratch, and the reduced optimum must embed
/// back into the full one.
pub fn refine_boundary(
    returns: &NormalizedReturns,
    result: SolverResult,
    opts: &SolverOptions,
) -> Result<SolverResult, SolverError> {
    if result.active_set.is_empty() {
        return Ok(result);
    }
    let tol = 10.0 * opts.tol_grad;
    let mut chain = Vec::with_capacity(result.active_set.len());
    for &system in &result.active_set {
        let reduced = drop_system(returns, system);
        let mut reduced_opts = opts.clone();
        reduced_opts.initial_point = None;
        let sub = optimize(&reduced, &reduced_opts)?;
        let embedded = without_index(&result.f_opt, system - 1);
        for (j, (got, want)) in sub.f_opt.iter().zip(&embedded).enumerate() {
            if (got - want).abs() > tol {
                return Err(SolverError::InconsistentReduction(format!(
                    "eliminating system {system}: reduced component {} is {got}, \
                     the boundary optimum has {want}",
                    j + 1
                )));
            }
        }
        chain.push(system);
    }
    Ok(SolverResult {
        eliminated_chain: chain,
        ..result
    })
}

/// Exhaustive lattice search over the admissible region, for tests.
///
/// Axis k carries `resolution` points spaced by boundary_scale(e_k) /
/// resolution. Returns the lattice argmax of the direct HPR product;
/// exact ties resolve to the lexicographically smallest point.
pub fn grid_oracle(
    returns: &NormalizedReturns,
    resolution: usize,
) -> Result<(Vec<f64>, f64), SolverError> {
    let m = returns.n_systems();
    if m > 4 {
        return Err(SolverError::TooManySystems { got: m, max: 4 });
    }
    assert!(resolution >= 2, "resolution must be at least 2");

    let mut steps = Vec::with_capacity(m);
    for k in 1..=m {
        let upper = domain::boundary_scale(returns, &FractionVector::unit(m, k))?;
        steps.push(upper / resolution as f64);
    }

    let mut best_f = vec![0.0; m];
    let mut best = f64::NEG_INFINITY;
    let mut idx = vec![0usize; m];
    'sweep: loop {
        let f: Vec<f64> = idx.iter().zip(&steps).map(|(&j, h)| j as f64 * h).collect();
        let mut value = 1.0;
        let mut admissible = true;
        for row in returns.rows() {
            let hpr = 1.0 + domain::dot(row, &f);
            if hpr < 0.0 {
                admissible = false;
                break;
            }
            value *= hpr;
        }
        if admissible && value > best {
            best = value;
            best_f = f;
        }

        let mut axis = m;
        loop {
            if axis == 0 {
                break 'sweep;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < resolution {
                break;
            }
            idx[axis] = 0;
        }
    }
    Ok((best_f, best))
}

fn verify_assumptions(returns: &NormalizedReturns) -> Result<(), SolverError> {
    let n = returns.n_periods();
    let m = returns.n_systems();

    // Profitability: column scaling by positive biggest losses preserves
    // the sign of the means, so the normalized rows decide it.
    let mut means = vec![0.0; m];
    for row in returns.rows() {
        for (acc, &r) in means.iter_mut().zip(row) {
            *acc += r;
        }
    }
    for (k, mean) in means.iter().enumerate() {
        if *mean <= 0.0 {
            return Err(SolverError::AssumptionViolation(format!(
                "system {} is not profitable",
                k + 1
            )));
        }
    }

    // Linear independence, likewise preserved by column scaling.
    let a = DMatrix::from_row_iterator(n, m, returns.rows().iter().flatten().copied());
    let singular_values = a.singular_values();
    let sigma_max = singular_values.iter().copied().fold(0.0, f64::max);
    let rank = singular_values
        .iter()
        .filter(|&&s| s > DEFAULT_TOL_RANK * sigma_max && s > 0.0)
        .count();
    if rank < m {
        return Err(SolverError::AssumptionViolation(format!(
            "trading systems are linearly dependent (numerical rank {rank} of {m})"
        )));
    }

    let max_pivots = 10 * (n + m + 1);
    match simplex::no_loss_direction(returns.rows(), DEFAULT_TOL_CONE, max_pivots) {
        Ok(None) => Ok(()),
        Ok(Some(_)) => Err(SolverError::AssumptionViolation(
            "a risk-free direction exists; the terminal wealth relative has no maximum".into(),
        )),
        Err(_) => Err(AssumptionError::SimplexCycle.into()),
    }
}

fn validated_start(returns: &NormalizedReturns, point: &[f64]) -> Result<Vec<f64>, SolverError> {
    if point.len() != returns.n_systems() {
        return Err(SolverError::InvalidStart(format!(
            "{} components for {} systems",
            point.len(),
            returns.n_systems()
        )));
    }
    if point.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(SolverError::InvalidStart(
            "components must be finite and non-negative".into(),
        ));
    }
    let (min_excursion, period) = domain::min_excursion(returns, point);
    if 1.0 + min_excursion <= DEFAULT_TOL_RUIN {
        return Err(SolverError::InvalidStart(format!(
            "period {period} already reaches ruin at the starting point"
        )));
    }
    Ok(point.to_vec())
}

/// Gradient of (1/N)*log TWR and the holding period returns, in one pass.
fn gradient_and_hprs(returns: &NormalizedReturns, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = returns.n_systems();
    let inv_n = 1.0 / returns.n_periods() as f64;
    let mut gradient = vec![0.0; m];
    let mut hprs = Vec::with_capacity(returns.n_periods());
    for row in returns.rows() {
        let hpr = 1.0 + domain::dot(row, f);
        debug_assert!(hpr > 0.0, "iterates must stay strictly interior");
        let inv = 1.0 / hpr;
        for (g, &r) in gradient.iter_mut().zip(row) {
            *g += r * inv;
        }
        hprs.push(hpr);
    }
    for g in &mut gradient {
        *g *= inv_n;
    }
    (gradient, hprs)
}

/// Zeroes descent components that push an already-zero fraction negative.
fn project_direction(f: &[f64], gradient: &[f64]) -> Vec<f64> {
    f.iter()
        .zip(gradient)
        .map(|(&x, &g)| if x <= 0.0 && g < 0.0 { 0.0 } else { g })
        .collect()
}

/// Distance along `direction` to the nearest HPR = 0 hyperplane.
fn ruin_distance(returns: &NormalizedReturns, hprs: &[f64], direction: &[f64]) -> f64 {
    let mut distance = f64::INFINITY;
    for (row, &hpr) in returns.rows().iter().zip(hprs) {
        let slope = domain::dot(row, direction);
        if slope < 0.0 {
            distance = distance.min(hpr / -slope);
        }
    }
    distance
}

/// Exact-direction objective increase (1/N) * sum_i log1p(<r_i, moved> /
/// hpr_i); None when the move would leave the interior.
fn objective_delta(returns: &NormalizedReturns, hprs: &[f64], moved: &[f64]) -> Option<f64> {
    let mut delta = 0.0;
    for (row, &hpr) in returns.rows().iter().zip(hprs) {
        let ratio = domain::dot(row, moved) / hpr;
        if ratio <= -1.0 {
            return None;
        }
        delta += ratio.ln_1p();
    }
    Some(delta / returns.n_periods() as f64)
}

fn inf_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

fn without_index(values: &[f64], index: usize) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != index)
        .map(|(_, &v)| v)
        .collect()
}

fn drop_system(returns: &NormalizedReturns, system: usize) -> NormalizedReturns {
    let losses = without_index(returns.biggest_losses(), system - 1);
    let rows = returns
        .rows()
        .iter()
        .map(|row| without_index(row, system - 1))
        .collect();
    NormalizedReturns::from_parts(losses, rows)
}

fn build_result(
    returns: &NormalizedReturns,
    f: Vec<f64>,
    iterations: usize,
    pg_norm: f64,
    certified: bool,
) -> SolverResult {
    let active_set: Vec<usize> = f
        .iter()
        .enumerate()
        .filter(|(_, &x)| x == 0.0)
        .map(|(k, _)| k + 1)
        .collect();
    let location = if active_set.is_empty() {
        Location::Interior
    } else {
        Location::OrthantBoundary
    };
    let f_opt = FractionVector::from_unchecked(f);
    let twr_value = domain::twr(returns, &f_opt);
    let log_twr_mean_value =
        domain::log_twr_mean(returns, &f_opt).expect("final iterates are strictly interior");
    let risk_value = domain::risk(returns, &f_opt);
    SolverResult {
        f_opt,
        twr_value,
        log_twr_mean_value,
        risk_value,
        iterations,
        location,
        active_set,
        kkt: KktCertificate {
            projected_grad_norm: pg_norm,
            certified,
        },
        eliminated_chain: Vec::new(),
    }
}
