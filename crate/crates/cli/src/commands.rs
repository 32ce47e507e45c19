//! Subcommand implementations. Each returns the text written to the main output.

use anyhow::Context;
use serde::Serialize;

use mdm_core::engine::plan_request;
use mdm_core::{run_mdm, sweep, MdmError, MdmReport, Subset};

use crate::config::RunConfig;

/// Error that maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Computation finished but the result is incomplete; maps to exit code 1.
#[derive(Debug)]
pub struct Incomplete {
    pub output: String,
    pub reason: String,
}

impl std::fmt::Display for Incomplete {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run incomplete: {}", self.reason)
    }
}

impl std::error::Error for Incomplete {}

/// Exit code for an error: 2 for configuration problems, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<serde_json::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<MdmError>() {
            return match e {
                MdmError::Config(_)
                | MdmError::Incompatible { .. }
                | MdmError::Refused(_)
                | MdmError::Divergence { .. }
                | MdmError::Parse(_)
                | MdmError::InvalidSubset(_)
                | MdmError::Unsupported(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

/// Marks an error as a usage or configuration problem.
pub fn usage(e: anyhow::Error) -> anyhow::Error {
    e.context(UsageError("configuration error".into()))
}

#[derive(Serialize)]
struct PlanRow {
    indices: Subset,
    cb: f64,
    b: f64,
    h: f64,
    n: u64,
    kappa: Option<i64>,
    predicted_error: f64,
}

#[derive(Serialize)]
struct PlanOutput {
    problem: String,
    backend: mdm_core::Backend,
    epsilon: f64,
    alpha: f64,
    threshold: f64,
    s_alpha_upper: f64,
    tail_budget: f64,
    tail_bound: f64,
    label_cap: Option<usize>,
    cardinality_bound: f64,
    q: f64,
    quadrature_budget: f64,
    predicted_quadrature_error: f64,
    info_cost: f64,
    subsets: Vec<PlanRow>,
}

pub fn cmd_plan(cfg: &RunConfig) -> anyhow::Result<String> {
    let eps = cfg.epsilon().map_err(usage)?;
    let req = cfg.request(eps).map_err(usage)?;
    let (plan, alloc) = plan_request(&req)?;
    let out = PlanOutput {
        problem: req.problem.name.clone(),
        backend: req.backend,
        epsilon: plan.epsilon,
        alpha: plan.alpha,
        threshold: plan.threshold,
        s_alpha_upper: plan.s_alpha_upper,
        tail_budget: plan.tail_budget,
        tail_bound: plan.tail_bound,
        label_cap: plan.label_cap,
        cardinality_bound: plan.cardinality_bound(),
        q: alloc.q,
        quadrature_budget: alloc.budget,
        predicted_quadrature_error: alloc.predicted_total(),
        info_cost: alloc.info_cost(&req.problem.cost),
        subsets: plan
            .subsets
            .iter()
            .zip(&alloc.subsets)
            .map(|(e, a)| PlanRow {
                indices: e.indices.clone(),
                cb: e.cb,
                b: e.b,
                h: a.h,
                n: a.n,
                kappa: a.kappa,
                predicted_error: a.predicted_error,
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&out)? + "\n")
}

/// Report JSON and the per-subset CSV.
pub fn cmd_integrate(cfg: &RunConfig) -> anyhow::Result<(String, String)> {
    let eps = cfg.epsilon().map_err(usage)?;
    let req = cfg.request(eps).map_err(usage)?;
    let report: MdmReport = run_mdm(&req)?;
    let json = report.to_json()? + "\n";
    let csv = report.to_csv()?;
    if let Some(reason) = &report.failure {
        return Err(Incomplete {
            output: json,
            reason: reason.clone(),
        }
        .into());
    }
    Ok((json, csv))
}

pub fn cmd_sweep(cfg: &RunConfig) -> anyhow::Result<String> {
    let list = match (&cfg.eps_list, cfg.epsilon) {
        (Some(l), _) => l.clone(),
        (None, Some(e)) => vec![e],
        (None, None) => {
            return Err(usage(anyhow::anyhow!(
                "field `eps_list` is required for sweep"
            )))
        }
    };
    let req = cfg.request(list[0]).map_err(usage)?;
    let table = sweep(&req, &list, cfg.reference)?;
    let csv = table.to_csv()?;
    let failed: Vec<String> = table
        .rows
        .iter()
        .filter_map(|r| {
            r.failure
                .as_ref()
                .map(|f| format!("epsilon {:e}: {f}", r.epsilon))
        })
        .collect();
    if !failed.is_empty() {
        return Err(Incomplete {
            output: csv,
            reason: failed.join("; "),
        }
        .into());
    }
    Ok(csv)
}

pub fn cmd_oracle(cfg: &RunConfig) -> anyhow::Result<String> {
    let tol = match cfg.tolerance.or(cfg.epsilon) {
        Some(t) => t,
        None => {
            return Err(usage(anyhow::anyhow!(
                "field `tolerance` or `epsilon` is required for oracle"
            )))
        }
    };
    let r = cfg
        .problem
        .reference_value(tol)
        .context("reference value")?;
    Ok(serde_json::to_string_pretty(&r)? + "\n")
}
