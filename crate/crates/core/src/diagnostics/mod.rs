//! Structural checks on problems and solved surfaces: single crossing,
//! monotone environments, boundary directions and comparative statics.

pub mod compare;
pub mod environment;
pub mod sc;
pub mod signs;

pub use compare::{
    compare_problems, reduce_payoff, shifted_payoff_compare, smooth_payoff, CompareMode, ComparisonReport, Hypothesis,
    REPORT_VERSION,
};
pub use environment::{
    classify_environment, controlled_monotonicity_check, verify_boundary_monotonicity, BoundaryCheck, BoundaryViolation, MonotoneClass, MonotoneVerdict,
    MonotonicityOptions, Witness,
};
pub use sc::{check_single_crossing, SCLayer, SCProfile};
pub use signs::{trend_sign_table, SignEntry, SignTable};
