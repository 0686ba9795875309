//! Holding period returns, the terminal wealth relative, the admissible
//! region and the worst-loss risk functional.
//!
//! Per-period terms are accumulated sequentially left to right so results
//! are reproducible run to run.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::NormalizedReturns;

/// Absolute threshold separating a vanished holding period return from
/// floating-point underflow of a genuinely positive product.
pub const DEFAULT_TOL_RUIN: f64 = 1e-12;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DomainError {
    #[error("fraction {index} is {value}, fractions must be finite and non-negative")]
    InvalidFraction { index: usize, value: f64 },
    #[error("fraction vector has {found} components, expected {expected}")]
    DimensionMismatch { found: usize, expected: usize },
    #[error("period {period} has holding period return {min_hpr}, outside the interior domain")]
    RuinDomain { period: usize, min_hpr: f64 },
    #[error("no losing period along this direction; the no-risk-free assumption fails there")]
    NoLossDirection,
}

/// Per-system fractions of capital at risk. Components are non-negative and
/// may exceed 1 (individual risks above 100% can still combine admissibly).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FractionVector(Vec<f64>);

impl FractionVector {
    pub fn new(values: Vec<f64>) -> Result<Self, DomainError> {
        for (k, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(DomainError::InvalidFraction {
                    index: k + 1,
                    value: v,
                });
            }
        }
        Ok(Self(values))
    }

    pub fn zeros(n_systems: usize) -> Self {
        Self(vec![0.0; n_systems])
    }

    /// Unit vector along one system, by 1-based system number.
    pub fn unit(n_systems: usize, system: usize) -> Self {
        assert!((1..=n_systems).contains(&system));
        let mut values = vec![0.0; n_systems];
        values[system - 1] = 1.0;
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Skips validation; for solver iterates already kept non-negative.
    pub(crate) fn from_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|&v| v.is_finite() && v >= 0.0));
        Self(values)
    }
}

impl std::ops::Deref for FractionVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admissibility {
    /// All holding period returns strictly positive.
    Interior,
    /// Some holding period return vanished: total loss of capital.
    Ruin,
    /// Negative fraction or negative holding period return.
    Outside,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityStatus {
    pub kind: Admissibility,
    /// Smallest holding period return over all periods.
    pub min_hpr: f64,
    /// 1-based period attaining `min_hpr` (first such period).
    pub argmin_period: usize,
}

pub(crate) fn dot(row: &[f64], f: &[f64]) -> f64 {
    debug_assert_eq!(row.len(), f.len());
    let mut acc = 0.0;
    for (r, x) in row.iter().zip(f) {
        acc += r * x;
    }
    acc
}

/// Smallest row excursion min_i <r_i, f> and its first 1-based argmin.
pub(crate) fn min_excursion(returns: &NormalizedReturns, f: &[f64]) -> (f64, usize) {
    let mut min = f64::INFINITY;
    let mut argmin = 1;
    for (i, row) in returns.rows().iter().enumerate() {
        let excursion = dot(row, f);
        if excursion < min {
            min = excursion;
            argmin = i + 1;
        }
    }
    (min, argmin)
}

fn check_dimension(returns: &NormalizedReturns, f: &[f64]) -> Result<(), DomainError> {
    if f.len() != returns.n_systems() {
        return Err(DomainError::DimensionMismatch {
            found: f.len(),
            expected: returns.n_systems(),
        });
    }
    Ok(())
}

/// Holding period return of one period (1-based): 1 + <r_i, f>.
pub fn hpr(returns: &NormalizedReturns, f: &FractionVector, period: usize) -> f64 {
    assert!(
        (1..=returns.n_periods()).contains(&period),
        "period {period} out of range 1..={}",
        returns.n_periods()
    );
    assert_eq!(f.len(), returns.n_systems());
    1.0 + dot(&returns.rows()[period - 1], f)
}

/// Terminal wealth relative: the product of all N holding period returns.
///
/// Interior points are evaluated in the log domain; ruin points yield
/// exactly 0; otherwise the direct product is returned.
pub fn twr(returns: &NormalizedReturns, f: &FractionVector) -> f64 {
    twr_slice(returns, f.as_slice())
}

pub(crate) fn twr_slice(returns: &NormalizedReturns, f: &[f64]) -> f64 {
    let (min, _) = min_excursion(returns, f);
    let min_hpr = 1.0 + min;
    if min_hpr > DEFAULT_TOL_RUIN {
        let mut log_sum = 0.0;
        for row in returns.rows() {
            log_sum += (1.0 + dot(row, f)).ln();
        }
        log_sum.exp()
    } else if min_hpr >= -DEFAULT_TOL_RUIN {
        0.0
    } else {
        let mut product = 1.0;
        for row in returns.rows() {
            product *= 1.0 + dot(row, f);
        }
        product
    }
}

/// (1/N) * log TWR, the solver objective. Defined on the strict interior.
pub fn log_twr_mean(returns: &NormalizedReturns, f: &FractionVector) -> Result<f64, DomainError> {
    check_dimension(returns, f)?;
    log_twr_mean_slice(returns, f).ok_or_else(|| {
        let (min, argmin) = min_excursion(returns, f);
        DomainError::RuinDomain {
            period: argmin,
            min_hpr: 1.0 + min,
        }
    })
}

/// Returns None when some holding period return is non-positive.
pub(crate) fn log_twr_mean_slice(returns: &NormalizedReturns, f: &[f64]) -> Option<f64> {
    let mut log_sum = 0.0;
    for row in returns.rows() {
        let hpr = 1.0 + dot(row, f);
        if hpr <= 0.0 {
            return None;
        }
        log_sum += hpr.ln();
    }
    Some(log_sum / returns.n_periods() as f64)
}

/// Worst single-period relative loss: max{-min_i <r_i, f>, 0}.
///
/// Lies in [0, 1) on the admissible region minus ruin, and equals 1 exactly
/// on the ruin set.
pub fn risk(returns: &NormalizedReturns, f: &FractionVector) -> f64 {
    let (min, _) = min_excursion(returns, f);
    (-min).max(0.0)
}

/// Locates an arbitrary vector relative to the admissible region.
///
/// Components in (-tol_ruin, 0) are treated as zero so projected iterates
/// carrying -0.0 or rounding dust classify as admissible.
pub fn classify(returns: &NormalizedReturns, f: &[f64], tol_ruin: f64) -> AdmissibilityStatus {
    assert_eq!(f.len(), returns.n_systems());
    let (min, argmin) = min_excursion(returns, f);
    let min_hpr = 1.0 + min;
    let negative_fraction = f.iter().any(|&x| x < -tol_ruin);
    let kind = if negative_fraction || min_hpr < -tol_ruin {
        Admissibility::Outside
    } else if min_hpr <= tol_ruin {
        Admissibility::Ruin
    } else {
        Admissibility::Interior
    };
    AdmissibilityStatus {
        kind,
        min_hpr,
        argmin_period: argmin,
    }
}

/// Scale s0 > 0 at which s0*f first reaches the ruin boundary:
/// s0 = -1 / min_i <r_i, f>.
pub fn boundary_scale(returns: &NormalizedReturns, f: &FractionVector) -> Result<f64, DomainError> {
    check_dimension(returns, f)?;
    let (min, _) = min_excursion(returns, f);
    if min >= 0.0 {
        return Err(DomainError::NoLossDirection);
    }
    Ok(-1.0 / min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{normalize, parse_returns, ReturnMatrix};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const EX1_CSV: &str = "\
S1,S2,S3,S4
2,1,-1,1
2,-0.5,2,-1
-0.5,1,-1,2
1,2,2,-1
-0.5,-0.5,2,1
-1,-1,-1,-1
";

    const EX2_CSV: &str = "\
S1,S2
-0.6,0.6
1.8,2.4
1.2,-0.6
-1.2,0.3
0.6,-1.5
";

    fn ex1() -> NormalizedReturns {
        normalize(&parse_returns(EX1_CSV).unwrap()).unwrap()
    }

    fn ex2() -> NormalizedReturns {
        normalize(&parse_returns(EX2_CSV).unwrap()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn hpr_at_zero_is_one_for_every_period() {
        let r = ex1();
        let f = FractionVector::zeros(4);
        for i in 1..=r.n_periods() {
            assert_eq!(hpr(&r, &f, i), 1.0);
        }
    }

    #[test]
    fn full_fraction_on_a_system_hits_zero_at_its_worst_loss() {
        let r = ex2();
        let f = FractionVector::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(hpr(&r, &f, 4), 0.0);
    }

    #[test]
    fn hpr_against_the_all_loss_row() {
        let r = ex1();
        let f = FractionVector::new(vec![0.1; 4]).unwrap();
        assert!(close(hpr(&r, &f, 6), 0.6, 1e-15));
    }

    #[test]
    fn twr_at_zero_is_one() {
        assert_eq!(twr(&ex1(), &FractionVector::zeros(4)), 1.0);
    }

    #[test]
    fn twr_vanishes_on_the_ruin_set() {
        let r = ex1();
        let f = FractionVector::unit(4, 1);
        assert_eq!(twr(&r, &f), 0.0);
        let quarter = FractionVector::new(vec![0.25; 4]).unwrap();
        assert_eq!(twr(&r, &quarter), 0.0);
    }

    #[test]
    fn twr_matches_a_direct_product_near_the_reported_optimum() {
        let r = ex2();
        let f = FractionVector::new(vec![0.4109, 0.3425]).unwrap();
        // Independent route: multiply the five factors explicitly.
        let mut expected = 1.0;
        for row in r.rows() {
            expected *= 1.0 + row[0] * 0.4109 + row[1] * 0.3425;
        }
        let got = twr(&r, &f);
        assert!(expected > 1.0);
        assert!(
            close(got, expected, 1e-12 * expected),
            "got {got}, expected {expected}"
        );
    }

    #[test]
    fn log_twr_mean_at_zero_is_zero() {
        assert_eq!(
            log_twr_mean(&ex1(), &FractionVector::zeros(4)).unwrap(),
            0.0
        );
    }

    #[test]
    fn log_twr_mean_rejects_the_ruin_set() {
        let r = ex1();
        let err = log_twr_mean(&r, &FractionVector::unit(4, 1)).unwrap_err();
        assert_eq!(
            err,
            DomainError::RuinDomain {
                period: 6,
                min_hpr: 0.0
            }
        );
    }

    #[test]
    fn exp_of_n_log_twr_mean_equals_twr() {
        let r = ex2();
        let n = r.n_periods() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let f = FractionVector::new(vec![rng.gen_range(0.0..0.45), rng.gen_range(0.0..0.45)])
                .unwrap();
            let via_log = (n * log_twr_mean(&r, &f).unwrap()).exp();
            let direct = twr(&r, &f);
            assert!(close(via_log, direct, 1e-12 * direct.max(1.0)));
        }
    }

    #[test]
    fn risk_is_zero_without_exposure_and_one_at_ruin() {
        let r = ex1();
        assert_eq!(risk(&r, &FractionVector::zeros(4)), 0.0);
        assert_eq!(risk(&r, &FractionVector::unit(4, 2)), 1.0);
    }

    #[test]
    fn risk_by_enumeration_on_the_five_by_two_rows() {
        let r = ex2();
        let f = FractionVector::new(vec![0.2, 0.2]).unwrap();
        // Enumerating the five excursions gives min = -0.16 at row 4.
        let expected = r
            .rows()
            .iter()
            .map(|row| -(row[0] * 0.2 + row[1] * 0.2))
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0);
        assert!(close(expected, 0.16, 1e-15));
        assert!(close(risk(&r, &f), expected, 1e-15));
    }

    #[test]
    fn classify_follows_the_total_risk_budget_of_the_first_example() {
        let r = ex1();
        // On this matrix the admissible region is the simplex sum f_k <= 1.
        let inside = [0.2, 0.3, 0.1, 0.05];
        let status = classify(&r, &inside, DEFAULT_TOL_RUIN);
        assert_eq!(status.kind, Admissibility::Interior);

        let ruin = [0.25, 0.25, 0.25, 0.25];
        let status = classify(&r, &ruin, DEFAULT_TOL_RUIN);
        assert_eq!(status.kind, Admissibility::Ruin);
        assert_eq!(status.argmin_period, 6);
        assert_eq!(status.min_hpr, 0.0);

        let outside = [-0.1, 0.0, 0.0, 0.0];
        let status = classify(&r, &outside, DEFAULT_TOL_RUIN);
        assert_eq!(status.kind, Admissibility::Outside);
    }

    #[test]
    fn classify_forgives_projection_dust() {
        let r = ex2();
        let status = classify(&r, &[-0.0, 1e-14], DEFAULT_TOL_RUIN);
        assert_eq!(status.kind, Admissibility::Interior);
    }

    #[test]
    fn boundary_scale_of_the_uniform_direction() {
        let r = ex1();
        let f = FractionVector::new(vec![0.25; 4]).unwrap();
        let s0 = boundary_scale(&r, &f).unwrap();
        assert!(close(s0, 1.0, 1e-15));
        let status = classify(&r, &[0.25 * s0; 4], DEFAULT_TOL_RUIN);
        assert_eq!(status.kind, Admissibility::Ruin);
    }

    #[test]
    fn boundary_scale_of_unit_directions_is_one() {
        for (r, m) in [(ex1(), 4), (ex2(), 2)] {
            for k in 1..=m {
                let s0 = boundary_scale(&r, &FractionVector::unit(m, k)).unwrap();
                assert_eq!(s0, 1.0);
            }
        }
    }

    #[test]
    fn boundary_scale_is_inversely_homogeneous() {
        let r = ex2();
        let f = FractionVector::new(vec![0.3, 0.1]).unwrap();
        let s0 = boundary_scale(&r, &f).unwrap();
        for c in [0.5, 2.0, 4.0] {
            let scaled = FractionVector::new(vec![0.3 * c, 0.1 * c]).unwrap();
            assert_eq!(boundary_scale(&r, &scaled).unwrap(), s0 / c);
        }
    }

    #[test]
    fn boundary_scale_reports_risk_free_directions() {
        let t = ReturnMatrix::new(vec![vec![1.0, -1.0], vec![-1.0, 1.0]], None).unwrap();
        let r = normalize(&t).unwrap();
        let f = FractionVector::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(
            boundary_scale(&r, &f).unwrap_err(),
            DomainError::NoLossDirection
        );
        // The zero vector has no loss direction either.
        assert_eq!(
            boundary_scale(&ex1(), &FractionVector::zeros(4)).unwrap_err(),
            DomainError::NoLossDirection
        );
    }

    /// Random point of the admissible region: a scaled admissible direction.
    fn random_admissible(
        r: &NormalizedReturns,
        rng: &mut ChaCha8Rng,
        allow_ruin: bool,
    ) -> Vec<f64> {
        let m = r.n_systems();
        loop {
            let dir: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
            if dir.iter().sum::<f64>() == 0.0 {
                continue;
            }
            let fv = FractionVector::new(dir.clone()).unwrap();
            let Ok(s0) = boundary_scale(r, &fv) else {
                continue;
            };
            let scale = if allow_ruin && rng.gen_bool(0.2) {
                s0
            } else {
                s0 * rng.gen_range(0.0..0.999)
            };
            return dir.iter().map(|d| d * scale).collect();
        }
    }

    #[test]
    fn admissible_region_is_convex_on_samples() {
        let r = ex2();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a = random_admissible(&r, &mut rng, true);
            let b = random_admissible(&r, &mut rng, true);
            let lambda: f64 = rng.gen_range(0.0..1.0);
            let mix: Vec<f64> = a
                .iter()
                .zip(&b)
                .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
                .collect();
            let status = classify(&r, &mix, DEFAULT_TOL_RUIN);
            assert_ne!(status.kind, Admissibility::Outside);

            let ka = classify(&r, &a, DEFAULT_TOL_RUIN).kind;
            let kb = classify(&r, &b, DEFAULT_TOL_RUIN).kind;
            if ka == Admissibility::Interior && kb == Admissibility::Interior {
                assert_eq!(status.kind, Admissibility::Interior);
            }
        }
    }

    #[test]
    fn every_direction_reaches_the_boundary_at_finite_scale() {
        // Compactness proxy: with no risk-free direction, boundary_scale is
        // finite along every non-zero direction of the orthant.
        let r = ex1();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let dir: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
            if dir.iter().sum::<f64>() < 1e-9 {
                continue;
            }
            let s0 = boundary_scale(&r, &FractionVector::new(dir).unwrap()).unwrap();
            assert!(s0.is_finite() && s0 > 0.0);
        }
    }

    #[test]
    fn twr_is_nonnegative_and_vanishes_exactly_at_ruin() {
        let r = ex2();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..300 {
            let f = random_admissible(&r, &mut rng, true);
            let fv = FractionVector::new(f.clone()).unwrap();
            let value = twr(&r, &fv);
            assert!(value >= 0.0);
            let status = classify(&r, &f, DEFAULT_TOL_RUIN);
            match status.kind {
                Admissibility::Ruin => assert_eq!(value, 0.0),
                Admissibility::Interior => assert!(value > 0.0),
                Admissibility::Outside => unreachable!(),
            }
        }
    }

    #[test]
    fn risk_scales_linearly_below_the_ruin_boundary() {
        let r = ex2();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..100 {
            let f = random_admissible(&r, &mut rng, false);
            let fv = FractionVector::new(f.clone()).unwrap();
            let base = risk(&r, &fv);
            if base <= 0.0 {
                continue;
            }
            for c in [0.25, 0.5, 2.0] {
                let scaled: Vec<f64> = f.iter().map(|x| x * c).collect();
                if classify(&r, &scaled, DEFAULT_TOL_RUIN).kind != Admissibility::Outside {
                    let sv = FractionVector::new(scaled).unwrap();
                    assert!(close(risk(&r, &sv), c * base, 1e-12));
                }
            }
        }
    }
}
