//! Integer programs for monitor placement (QF and QMF), an exact
//! branch-and-bound solver, LP-format export and plan evaluation.

mod lp;
mod model;
mod plan;
mod solve;

pub use lp::export_lp;
pub use model::{
    build_model, default_mode, Capacity, Constraint, IlpModel, ModelConfig, Objective,
    PathSemantics, Sense, SiteRule, VarKind, Variable, Violation,
};
pub use plan::{
    evaluate_plan, plan_objective, plan_values, DirectAssignment, IndirectAssignment,
    MonitoringPlan, PlanDocument, PlanMetrics, PlanStatus,
};
pub use solve::{solve, SolveOptions};

use thiserror::Error;

use crate::qfi::QfiError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IlpError {
    #[error("at least one monitor is required")]
    NoMonitors,
    #[error("{requested} monitors requested but only {available} candidate nodes")]
    TooManyMonitors { requested: usize, available: usize },
    #[error("load limit {capacity} below the feasible minimum {minimum}")]
    CapacityInfeasible { capacity: usize, minimum: usize },
    #[error("invalid capacity: {0}")]
    InvalidCapacity(String),
    #[error("no assignment satisfies the constraints")]
    Infeasible,
    #[error("search budget exhausted ({nodes} nodes explored)")]
    BudgetExhausted {
        nodes: u64,
        incumbent: Option<Box<MonitoringPlan>>,
    },
    #[error("cannot start solver workers: {0}")]
    WorkerPool(String),
    #[error("plan inconsistent with network: {0}")]
    InconsistentPlan(String),
    #[error(transparent)]
    Qfi(#[from] QfiError),
}
