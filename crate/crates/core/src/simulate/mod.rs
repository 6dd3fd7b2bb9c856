//! Simulation studies: scenario data-generating processes, the Monte Carlo
//! truth, assumption audits and replicated estimator comparisons.

mod audit;
mod scenario;
mod study;
mod truth;

pub use audit::{audit_assumptions, AuditResult};
pub use scenario::{
    covariate_missing_rates, generate, generate_full, missingness_fraction, scenario_schema, Equation, Scenario,
    ScenarioSpec,
};
pub use study::{
    ordering_experiment, run_study, scenario_estimators, summarize_estimates, table_roster, Arm, OrderingReport,
    RosterEntry, SimulationReport, Study,
};
pub use truth::{true_psi, true_psi_with, Truth, TRUTH_DRAWS};
