//! Monte Carlo harness: experiment specs, replicate execution and CSV
//! output.
//!
//! Output columns are `scenario,estimator,coordinate,metric,value,stderr,runs,failures`.
//! Metrics:
//! - `varsigma`: `‖mean vec(V̂−V₀)vec(V̂−V₀)ᴴ‖_F` over successful runs
//!   (trace-`N` normalization, `vecs` for real data), delta-method SE;
//! - `epsilon_over_l` (estimator `cscrb`): Frobenius norm of the constrained
//!   bound in trace-`N` coordinates divided by `L`;
//! - `bp`, `eif`: replicate means, failures counted and capped at 1e16;
//! - `pd_violation_rate`: share of runs whose perturbed or corrected shape
//!   left the PD cone.
//!
//! Rows with no successful run carry `NaN`.

pub mod metrics;
pub mod runner;
pub mod spec;

pub use metrics::{bp_value, eif_value, mse_index, mse_index_with_se, to_csv_string, write_csv, MetricRow, CSV_HEADER};
pub use runner::{alpha_sweep, bp_curve, eif_curve, replicate_seeds, run_experiment, run_mse_sweep};
pub use spec::{EstimatorSpec, ExperimentSpec, GeneratorSpec, Scenario, SigmaSpec};
