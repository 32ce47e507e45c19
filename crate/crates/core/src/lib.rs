//! Multivariate decomposition method for integrals of functions of infinitely
//! many variables.
//!
//! The integrand is split into anchored-decomposition terms `f_u`, only the
//! terms in a finite active set are integrated, and each of those gets its own
//! quadrature rule with a sample budget chosen by a Lagrange allocation. Two
//! quadrature backends are provided: trapezoidal Smolyak sparse grids and
//! randomly shifted rank-1 lattice rules.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod active_set;
pub mod allocation;
pub mod decomposition;
pub mod engine;
pub mod error;
pub mod lattice;
pub mod math;
pub mod problems;
#[cfg(test)]
mod proptests;
pub mod smolyak;
pub mod subset;

pub use active_set::{
    build_active_set, decay_sum_upper, example_label_cap, truncation_dimension, ActivePlan,
    ActiveSetConfig, BoundsModel, NormModel, PlanEntry,
};
pub use allocation::{allocate, Allocation, AllocationConfig, GModel, SubsetAllocation};
pub use decomposition::{
    decomposition_term, evaluate_anchored, reconstruct, AnchoredPoint, CostModel, CostTally,
    Domain, Integrand,
};
pub use engine::{run_mdm, sweep, Backend, MdmReport, MdmRequest, SweepRow, SweepTable};
pub use error::{MdmError, Result};
pub use problems::{BuiltinProblem, ProblemSpec, ReferenceValue};
pub use smolyak::{QuadratureRule, UnivariateFamily};
pub use subset::Subset;
