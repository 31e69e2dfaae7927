//! Mixed-autonomy traffic assignment.
//!
//! Two classes share a single origin–destination pair with unit demand:
//! selfish human drivers (fraction `1 − α`) who minimize their own travel
//! time, and altruistic autonomous vehicles (fraction `α`) who minimize the
//! total travel time of everybody. This crate computes the resulting
//! equilibria, exact linear-cost equilibria by support enumeration, and
//! instance-level tests that predict whether autonomy improves, worsens or
//! leaves unchanged the social cost.

pub mod analysis;
pub mod braess;
pub mod costs;
pub mod error;
pub mod instances;
pub mod io;
pub mod netmodel;
pub mod oracle;
pub mod solver;
pub mod sweep;

pub use analysis::{
    analyze, check_improvement, check_no_effect, compare_centralized, construct_baseline_from_mixed,
    deterioration_report, AnalysisVerdict, CentralizedComparison, DeteriorationReport, DeteriorationVerdict,
    Hypotheses, NoEffect,
};
pub use costs::{beckmann_human, path_costs, social_cost, BprParams, ClassCosts, CostParams, PathCosts};
pub use error::{Error, Result};
pub use netmodel::{
    columns_independent, enumerate_paths, incidence_matrix, is_path_multigraph, IncidenceMatrix, Link, Network,
    PathSet, PathSource,
};
pub use oracle::{exact_baseline, exact_mixed, grid_gap_oracle, ExactEquilibrium, SupportPair};
pub use solver::{
    all_or_nothing, frank_wolfe_auto, frank_wolfe_human, multi_start_uniqueness_check, solve_mixed, vi_gap,
    EquilibriumResult, FlowPattern, Init, SolverConfig, UniquenessReport,
};
