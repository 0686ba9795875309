//! Optimal-f position sizing for portfolios of trading systems.
//!
//! Given a matrix of absolute trade returns (N periods by M systems), this
//! crate verifies the admissibility assumptions under which the discrete
//! multivariate terminal wealth relative has a unique maximizer, then
//! locates that maximizer by projected gradient ascent and certifies it
//! with a first-order optimality check.
//!
//! The pipeline is `ingest` (parse and normalize by biggest losses) ->
//! `assumptions` (loss history, profitability, rank, no risk-free
//! direction) -> `solver` (ascent, KKT certificate, boundary refinement)
//! -> `report` (JSON reports and TWR surface grids); `cli` wires the
//! stages into the `optf` binary.

pub mod assumptions;
pub mod cli;
pub mod domain;
pub mod ingest;
pub mod report;
mod simplex;
pub mod solver;

pub use assumptions::{assumption_report, AssumptionReport};
pub use domain::FractionVector;
pub use ingest::{normalize, parse_returns, NormalizedReturns, ReturnMatrix};
pub use report::RunReport;
pub use solver::{optimize, SolverOptions, SolverResult};
