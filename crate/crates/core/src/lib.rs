//! Numerical toolkit for variable-exponent Lebesgue spaces on [0, 1].
//!
//! Piecewise-constant functions paired with piecewise-constant exponents,
//! three norm constructions (modular-based, weight-free, and one driven by
//! an accumulation recursion), rearrangement and decomposition experiments,
//! and a certification harness that checks the structural inequalities
//! relating them.

#![forbid(unsafe_code)]

pub mod decompose;
pub mod generate;
pub mod halfline;
pub mod instance;
pub mod luxemburg;
pub mod modular;
pub mod ode_norm;
pub mod rearrange;
pub mod report;
pub mod scalars;
pub mod stepfn;
pub mod suite;

pub use decompose::{
    certify_decomposition, chain_block_norms, chain_value, chain_value_variable,
    decomposition_margins, partition_by_levels, twelve_constant_illustration,
    variable_block_norms, ChainSpec, DecomposeError, DecompositionMargins, LevelConvention,
    Partition, TwelveConstant, CHAIN_BOUND_NAMES,
};
pub use generate::{generate_instance, sub_rng, GenConfig, GenError};
pub use halfline::{to_unit_interval, verify_isometry, HalfLineError, HalfLineInstance};
pub use instance::{HalfLineSpec, InstanceError, InstanceSpec, PieceSpec};
pub use luxemburg::{norm_mo, norm_nakano, norm_weighted, LuxError, NormMethod, NormResult, DEFAULT_TOL};
pub use modular::{
    modular_lambda_derivative, modular_mo, modular_nakano, modular_weighted, ModularError,
    WeightProfile,
};
pub use ode_norm::{
    accumulation, norm_ode, phi_exact_step, phi_numeric, varying_lambda_curve, AccumulationCurve,
    OdeError,
};
pub use rearrange::{
    aux_transform, certify_rearrangement, constant_one_monotone_check, limit_example, permute,
    sort_by_exponent, AuxTransform, PiecePermutation, RearrangeError, SortDirection,
};
pub use report::{equality_margin, one_sided_margin, CheckReport, Failure, SLACK};
pub use scalars::{boxplus, constant_a, constant_bp, fold, fold_chain, FoldOrder, ScalarError};
pub use stepfn::{
    add, common_refinement, common_refinement_all, ess_bounds, ExponentProfile, PieceSet,
    StepFnError, StepFunction,
};
pub use suite::{
    classical_norm, replay, run_one_trial, run_suite, Check, Obs, ReplayOutcome, ReportFile,
    SuiteError, TrialOutcome, CONSTANT_EXPONENTS, PERMS_PER_TRIAL, REPORT_SCHEMA,
};
