//! End-to-end driver: active set, allocation, per-term quadrature and reports.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::active_set::{build_active_set, truncation_dimension, ActivePlan, ActiveSetConfig};
use crate::allocation::{
    allocate, allocate_prime_certified, quantize_prime, quantize_smolyak, Allocation,
    AllocationConfig, GModel, SubsetAllocation,
};
use crate::decomposition::{
    evaluate_anchored, AnchoredPoint, CostTally, Domain, TermMemo, DEFAULT_CARDINALITY_CAP,
};
use crate::error::{MdmError, Result};
use crate::lattice::{cbc_construct, summarize_shifts, LatticeRule, DEFAULT_Q, DEFAULT_SHIFTS};
use crate::math::{factorial, fitted_slope, CompensatedSum};
use crate::problems::ProblemSpec;
use crate::smolyak::{RuleCache, UnivariateFamily, DEFAULT_NODE_BUDGET};
use crate::subset::Subset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Smolyak(UnivariateFamily),
    Lattice,
}

impl Backend {
    pub fn domain(&self) -> Domain {
        match self {
            Backend::Smolyak(UnivariateFamily::ExpWeighted) => Domain::HalfLineExp,
            Backend::Smolyak(UnivariateFamily::AnchoredUnit) | Backend::Lattice => {
                Domain::SymmetricUnit
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Backend::Smolyak(UnivariateFamily::AnchoredUnit) => "smolyak-anchored-unit",
            Backend::Smolyak(UnivariateFamily::ExpWeighted) => "smolyak-exp-weighted",
            Backend::Lattice => "lattice",
        }
    }

    pub fn default_q(&self) -> f64 {
        match self {
            Backend::Smolyak(_) => 1.0,
            Backend::Lattice => DEFAULT_Q,
        }
    }
}

/// Which error constants drive the allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllocationPath {
    /// `G ≡ 1` in the allocation, `κ_u` from `h_u`; the true constants enter
    /// a posteriori through the X and Y factors. Sparse grids only.
    Relaxed,
    /// The backend's own `G_{u,q}` in the allocation; prime sample counts
    /// certified against the quadrature budget. Lattice rules only.
    Certified,
}

#[derive(Debug, Clone)]
pub struct MdmRequest {
    pub problem: ProblemSpec,
    pub epsilon: f64,
    pub alpha: Option<f64>,
    pub backend: Backend,
    pub q: Option<f64>,
    pub seed: u64,
    pub path: Option<AllocationPath>,
    /// Random shifts per lattice rule.
    pub shifts: usize,
    pub antithetic: bool,
    /// Candidate subsets examined while building the active set.
    pub active_node_budget: usize,
    /// Largest sparse grid generated.
    pub rule_node_budget: u128,
    /// Largest lattice size.
    pub max_lattice_points: u64,
    /// Cap on raw integrand calls; terms beyond it are skipped and the report
    /// is marked as failed.
    pub max_evaluations: u64,
    pub parallel: bool,
}

impl MdmRequest {
    pub fn new(problem: ProblemSpec, epsilon: f64, backend: Backend) -> Self {
        Self {
            problem,
            epsilon,
            alpha: None,
            backend,
            q: None,
            seed: 0,
            path: None,
            shifts: DEFAULT_SHIFTS,
            antithetic: false,
            active_node_budget: 2_000_000,
            rule_node_budget: DEFAULT_NODE_BUDGET,
            max_lattice_points: 50_000,
            max_evaluations: 2_000_000_000,
            parallel: true,
        }
    }

    fn path(&self) -> AllocationPath {
        self.path.unwrap_or(match self.backend {
            Backend::Smolyak(_) => AllocationPath::Relaxed,
            Backend::Lattice => AllocationPath::Certified,
        })
    }

    fn q(&self) -> f64 {
        self.q.unwrap_or_else(|| self.backend.default_q())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(reason) = &self.problem.refusal {
            return Err(MdmError::Refused(format!(
                "{}: {reason}",
                self.problem.name
            )));
        }
        if self.backend.domain() != self.problem.domain {
            return Err(MdmError::Incompatible {
                backend: self.backend.name().into(),
                domain: self.problem.domain.name().into(),
            });
        }
        if !(self.epsilon > 0.0) || self.epsilon.is_nan() {
            return Err(MdmError::Config(format!(
                "epsilon = {} must be positive",
                self.epsilon
            )));
        }
        let q = self.q();
        match self.backend {
            Backend::Smolyak(_) if !(q > 0.0 && q <= 1.0) => {
                return Err(MdmError::Config(format!(
                    "q = {q} must lie in (0, 1] for sparse grids"
                )))
            }
            Backend::Lattice if !(0.5..1.0).contains(&q) => {
                return Err(MdmError::Config(format!(
                    "q = {q} must lie in [1/2, 1) for lattice rules"
                )))
            }
            _ => {}
        }
        match (self.backend, self.path()) {
            (Backend::Smolyak(_), AllocationPath::Certified) => {
                return Err(MdmError::Config(
                    "the certified allocation needs G_u independent of the level; use the relaxed path for sparse grids".into(),
                ))
            }
            (Backend::Lattice, AllocationPath::Relaxed) | (Backend::Lattice, AllocationPath::Certified)
                if self.shifts < 2 => {
                    return Err(MdmError::Config("at least two random shifts are needed".into()));
                }
            _ => {}
        }
        self.problem.cost.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRow {
    pub indices: Subset,
    pub h: f64,
    pub n: u64,
    pub kappa: Option<i64>,
    pub term_estimate: f64,
    /// Bound on this term's quadrature error (already multiplied by `B_u`).
    pub term_bound: f64,
    /// `n_u £(|u|)`
    pub term_cost: f64,
    /// Standard error over random shifts.
    pub rms: Option<f64>,
    pub tally: CostTally,
    /// Set when the term was not evaluated.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdmReport {
    pub problem: String,
    pub backend: Backend,
    pub path: AllocationPath,
    pub epsilon: f64,
    pub alpha: f64,
    pub q: f64,
    pub seed: u64,
    pub estimate: f64,
    /// Certified bound on the neglected terms.
    pub tail_bound: f64,
    /// Bound on the error from dropping labels above the cap.
    pub truncation_bound: f64,
    /// Reported quadrature guarantee: the allocation budget, times the X
    /// factor on the relaxed sparse-grid path.
    pub quadrature_bound: f64,
    /// Sum of the per-term quadrature bounds.
    pub direct_quadrature_bound: f64,
    /// Allocation budget for the quadrature error.
    pub quadrature_budget: f64,
    pub info_cost: f64,
    /// Upper bound on `info_cost` from the allocation.
    pub cost_bound: f64,
    pub x_factor: Option<f64>,
    pub y_factor: Option<f64>,
    pub active_set_size: usize,
    /// `sum_u n_u 2^{|u|}` (times the shift count for lattice rules) before
    /// caching; the work the allocation asks for.
    pub planned_raw_calls: f64,
    pub truncation_dimension: usize,
    pub label_cap: Option<usize>,
    pub rows: Vec<TermRow>,
    pub tally: CostTally,
    pub failure: Option<String>,
}

impl MdmReport {
    /// `tail_bound + truncation_bound + quadrature_bound`
    pub fn total_bound(&self) -> f64 {
        self.tail_bound + self.truncation_bound + self.quadrature_bound
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| MdmError::Parse(e.to_string()))
    }

    /// Per-subset breakdown:
    /// `indices,cardinality,h,n,kappa,term_estimate,term_bound,term_cost`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| MdmError::Parse(e.to_string());
        w.write_record([
            "indices",
            "cardinality",
            "h",
            "n",
            "kappa",
            "term_estimate",
            "term_bound",
            "term_cost",
        ])
        .map_err(err)?;
        for r in &self.rows {
            let labels: Vec<String> = r.indices.indices().iter().map(|j| j.to_string()).collect();
            w.write_record([
                labels.join(" "),
                r.indices.len().to_string(),
                format!("{:e}", r.h),
                r.n.to_string(),
                r.kappa.map(|k| k.to_string()).unwrap_or_default(),
                format!("{:e}", r.term_estimate),
                format!("{:e}", r.term_bound),
                format!("{:e}", r.term_cost),
            ])
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| MdmError::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| MdmError::Parse(e.to_string()))
    }
}

/// `2^{-|u|-1+(κ-|u|+1)q} 3^{-|u|/2} e^{(|u|/2-1)q} (κ^{|u|-1}/(|u|-1)!)^{1/2+q}`
pub fn smolyak_g(len: usize, kappa: i64, q: f64) -> f64 {
    let d = len as f64;
    let k = kappa as f64;
    2f64.powf(-d - 1.0 + (k - d + 1.0) * q)
        * 3f64.powf(-d / 2.0)
        * ((d / 2.0 - 1.0) * q).exp()
        * (k.powf(d - 1.0) / factorial(len - 1)).powf(0.5 + q)
}

/// Max over the nonempty subsets of `G_{u,q}`, with `12^{-|u|/2}` for zero rules.
pub fn x_factor(alloc: &Allocation) -> Option<f64> {
    alloc
        .subsets
        .iter()
        .filter(|s| !s.indices.is_empty())
        .map(|s| {
            let d = s.indices.len();
            match s.kappa {
                Some(k) if k >= d as i64 => smolyak_g(d, k, alloc.q),
                _ => 12f64.powf(-(d as f64) / 2.0),
            }
        })
        .reduce(f64::max)
}

/// Max over the nonempty subsets with a nonzero rule of
/// `2 e^{|u|/2-1} κ^{|u|-1}/(|u|-1)!`.
pub fn y_factor(alloc: &Allocation) -> Option<f64> {
    alloc
        .subsets
        .iter()
        .filter(|s| !s.indices.is_empty())
        .filter_map(|s| {
            let d = s.indices.len();
            let k = s.kappa?;
            (k >= d as i64).then(|| {
                2.0 * (d as f64 / 2.0 - 1.0).exp() * (k as f64).powi(d as i32 - 1)
                    / factorial(d - 1)
            })
        })
        .reduce(f64::max)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the rule of subset `u`, independent of evaluation order.
pub fn subset_seed(seed: u64, u: &Subset) -> u64 {
    let mut h = splitmix64(seed);
    for &j in u.indices() {
        h = splitmix64(h ^ j as u64);
    }
    splitmix64(h ^ u.len() as u64)
}

/// Active set and allocation for a request, without evaluating the integrand.
pub fn plan_request(req: &MdmRequest) -> Result<(ActivePlan, Allocation)> {
    req.validate()?;
    let spec = &req.problem;
    let (label_cap, tail_budget, quad_budget) = spec.budgets(req.epsilon);
    let mut cfg = ActiveSetConfig::new(req.epsilon);
    cfg.alpha = req.alpha;
    cfg.ell_max = label_cap;
    cfg.tail_budget = Some(tail_budget);
    cfg.node_budget = req.active_node_budget;
    let mut plan = build_active_set(&spec.bounds, &spec.norm, &cfg)?;
    plan.label_cap = label_cap;

    let q = req.q();
    let alloc = match req.backend {
        Backend::Smolyak(family) => {
            let cfg = AllocationConfig {
                q,
                g_model: GModel::Unit,
                budget: Some(quad_budget),
            };
            quantize_smolyak(&allocate(&plan, &spec.cost, &cfg)?, family)?
        }
        Backend::Lattice => {
            let cfg = AllocationConfig {
                q,
                g_model: GModel::Lattice,
                budget: Some(quad_budget),
            };
            match req.path() {
                AllocationPath::Certified => allocate_prime_certified(&plan, &spec.cost, &cfg)?,
                AllocationPath::Relaxed => quantize_prime(&allocate(&plan, &spec.cost, &cfg)?)?,
            }
        }
    };
    Ok((plan, alloc))
}

struct Outcome {
    estimate: f64,
    rms: Option<f64>,
    tally: CostTally,
}

fn planned_calls(req: &MdmRequest, s: &SubsetAllocation) -> f64 {
    if s.indices.is_empty() {
        return 1.0;
    }
    let reps = match req.backend {
        Backend::Lattice => req.shifts as f64,
        Backend::Smolyak(_) => 1.0,
    };
    s.n as f64 * 2f64.powi(s.indices.len() as i32) * reps
}

fn raw_call_estimate(req: &MdmRequest, s: &SubsetAllocation) -> u64 {
    if s.n == 0 {
        return 0;
    }
    let per = 1u64 << s.indices.len().min(63);
    let reps = match req.backend {
        Backend::Lattice => req.shifts as u64,
        Backend::Smolyak(_) => 1,
    };
    s.n.saturating_mul(per).saturating_mul(reps)
}

fn evaluate_term(req: &MdmRequest, cache: &RuleCache, s: &SubsetAllocation) -> Result<Outcome> {
    let spec = &req.problem;
    let f = spec.integrand.as_ref();
    let mut tally = CostTally::default();
    if s.indices.is_empty() {
        let y = evaluate_anchored(f, &AnchoredPoint::origin(), &spec.cost, &mut tally)?;
        return Ok(Outcome {
            estimate: y,
            rms: None,
            tally,
        });
    }
    if s.n == 0 {
        return Ok(Outcome {
            estimate: 0.0,
            rms: None,
            tally,
        });
    }
    let d = s.indices.len();
    let mut memo = TermMemo::new(&s.indices, DEFAULT_CARDINALITY_CAP)?;
    match req.backend {
        Backend::Smolyak(family) => {
            let kappa = s.kappa.expect("sparse-grid allocation sets kappa");
            let rule = cache.get(family, d, kappa)?;
            let mut acc = CompensatedSum::new();
            for (k, w) in rule.weights.iter().enumerate() {
                acc.add(w * memo.term(f, spec.domain, rule.point(k), &spec.cost, &mut tally)?);
            }
            Ok(Outcome {
                estimate: acc.value(),
                rms: None,
                tally,
            })
        }
        Backend::Lattice => {
            if s.n > req.max_lattice_points {
                return Err(MdmError::Resource(format!(
                    "lattice size {} for {} exceeds {}",
                    s.n, s.indices, req.max_lattice_points
                )));
            }
            let z = cbc_construct(s.n, d)?;
            let rule = LatticeRule::new(
                s.n,
                z,
                req.shifts,
                subset_seed(req.seed, &s.indices),
                req.antithetic,
            )?;
            let per =
                rule.shift_estimates(|x| memo.term(f, spec.domain, x, &spec.cost, &mut tally))?;
            let (mean, se) = summarize_shifts(&per);
            Ok(Outcome {
                estimate: mean,
                rms: Some(se),
                tally,
            })
        }
    }
}

/// Runs the method on one request.
///
/// Configuration problems are errors. Running out of a resource budget gives
/// a report with `failure` set whose estimate omits the skipped terms.
pub fn run_mdm(req: &MdmRequest) -> Result<MdmReport> {
    let (plan, alloc) = plan_request(req)?;
    let cache = RuleCache::with_budget(req.rule_node_budget);

    // terms past the evaluation cap, in canonical order, are skipped
    let mut used = 0u64;
    let within: Vec<bool> = alloc
        .subsets
        .iter()
        .map(|s| {
            used = used.saturating_add(raw_call_estimate(req, s));
            used <= req.max_evaluations
        })
        .collect();

    let run = |(s, ok): (&SubsetAllocation, &bool)| -> Result<Outcome> {
        if !ok {
            return Err(MdmError::Resource(format!(
                "evaluation cap of {} raw calls reached",
                req.max_evaluations
            )));
        }
        evaluate_term(req, &cache, s)
    };
    let outcomes: Vec<Result<Outcome>> = if req.parallel {
        alloc
            .subsets
            .par_iter()
            .zip(within.par_iter())
            .map(run)
            .collect()
    } else {
        alloc.subsets.iter().zip(within.iter()).map(run).collect()
    };

    let mut rows = Vec::with_capacity(outcomes.len());
    let mut estimate = CompensatedSum::new();
    let mut tally = CostTally::default();
    let mut failure = None;
    for (s, out) in alloc.subsets.iter().zip(outcomes) {
        let term_cost = s.n as f64 * req.problem.cost.pound(s.indices.len());
        let (value, rms, t, skipped) = match out {
            Ok(o) => (o.estimate, o.rms, o.tally, None),
            Err(MdmError::Resource(msg)) => {
                failure.get_or_insert_with(|| msg.clone());
                (0.0, None, CostTally::default(), Some(msg))
            }
            Err(e) => return Err(e),
        };
        estimate.add(value);
        tally.merge(&t);
        rows.push(TermRow {
            indices: s.indices.clone(),
            h: s.h,
            n: s.n,
            kappa: s.kappa,
            term_estimate: value,
            term_bound: s.predicted_error,
            term_cost,
            rms,
            tally: t,
            skipped,
        });
    }

    let direct = alloc.predicted_total();
    let (x, y) = match req.backend {
        Backend::Smolyak(UnivariateFamily::AnchoredUnit) => (x_factor(&alloc), y_factor(&alloc)),
        _ => (None, None),
    };
    let quadrature_bound = match (req.backend, x) {
        (Backend::Smolyak(UnivariateFamily::AnchoredUnit), Some(x)) => alloc.budget * x,
        (Backend::Smolyak(UnivariateFamily::AnchoredUnit), None) => 0.0,
        _ => direct,
    };
    let empty_cost: f64 = alloc
        .subsets
        .iter()
        .filter(|s| s.indices.is_empty())
        .map(|s| s.n as f64 * req.problem.cost.pound(0))
        .sum();
    let has_terms = alloc.subsets.iter().any(|s| !s.indices.is_empty());
    let relaxed_bound = if has_terms { alloc.cost_bound() } else { 0.0 };
    let cost_bound = empty_cost
        + match req.backend {
            // no Y factor means every nonempty term got the zero rule
            Backend::Smolyak(UnivariateFamily::AnchoredUnit) => relaxed_bound * y.unwrap_or(0.0),
            Backend::Smolyak(UnivariateFamily::ExpWeighted) => f64::INFINITY,
            Backend::Lattice => relaxed_bound,
        };

    Ok(MdmReport {
        problem: req.problem.name.clone(),
        backend: req.backend,
        path: req.path(),
        epsilon: req.epsilon,
        alpha: plan.alpha,
        q: alloc.q,
        seed: req.seed,
        estimate: estimate.value(),
        tail_bound: plan.tail_bound,
        truncation_bound: req.problem.truncation_bound(req.epsilon),
        quadrature_bound,
        direct_quadrature_bound: direct,
        quadrature_budget: alloc.budget,
        info_cost: alloc.info_cost(&req.problem.cost),
        cost_bound,
        x_factor: x,
        y_factor: y,
        active_set_size: plan.len(),
        planned_raw_calls: alloc.subsets.iter().map(|s| planned_calls(req, s)).sum(),
        truncation_dimension: truncation_dimension(&plan),
        label_cap: plan.label_cap,
        rows,
        tally,
        failure,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub estimate: Option<f64>,
    pub reference: Option<f64>,
    pub achieved_error: Option<f64>,
    pub tail_bound: Option<f64>,
    pub quad_bound: Option<f64>,
    pub x_factor: Option<f64>,
    pub y_factor: Option<f64>,
    pub info_cost: Option<f64>,
    pub raw_calls: Option<u64>,
    pub wall_seconds: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `ln info_cost` against `ln(1/ε)` over the
    /// successful rows.
    pub cost_slope: Option<f64>,
}

impl SweepTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| MdmError::Parse(e.to_string());
        w.write_record([
            "epsilon",
            "estimate",
            "reference",
            "achieved_error",
            "tail_bound",
            "quad_bound",
            "x_factor",
            "y_factor",
            "info_cost",
            "raw_calls",
            "wall_seconds",
        ])
        .map_err(err)?;
        let f = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                format!("{:e}", r.epsilon),
                f(r.estimate),
                f(r.reference),
                f(r.achieved_error),
                f(r.tail_bound),
                f(r.quad_bound),
                f(r.x_factor),
                f(r.y_factor),
                f(r.info_cost),
                r.raw_calls.map(|v| v.to_string()).unwrap_or_default(),
                format!("{:.6}", r.wall_seconds),
            ])
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| MdmError::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| MdmError::Parse(e.to_string()))
    }
}

/// Runs `template` at each `ε` (descending). Failed rows are recorded and the
/// sweep continues; the reference defaults to the problem's closed form.
pub fn sweep(
    template: &MdmRequest,
    eps_list: &[f64],
    reference: Option<f64>,
) -> Result<SweepTable> {
    if eps_list.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(MdmError::Config(
            "epsilon list must be strictly decreasing".into(),
        ));
    }
    let reference = reference.or(template.problem.reference);
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let mut req = template.clone();
        req.epsilon = eps;
        let start = Instant::now();
        let out = run_mdm(&req);
        let wall_seconds = start.elapsed().as_secs_f64();
        let row = match out {
            Ok(r) => SweepRow {
                epsilon: eps,
                estimate: Some(r.estimate),
                reference,
                achieved_error: reference.map(|v| (r.estimate - v).abs()),
                tail_bound: Some(r.tail_bound + r.truncation_bound),
                quad_bound: Some(r.quadrature_bound),
                x_factor: r.x_factor,
                y_factor: r.y_factor,
                info_cost: Some(r.info_cost),
                raw_calls: Some(r.tally.raw_calls),
                wall_seconds,
                failure: r.failure,
            },
            Err(
                e @ (MdmError::Config(_) | MdmError::Incompatible { .. } | MdmError::Refused(_)),
            ) => return Err(e),
            Err(e) => SweepRow {
                epsilon: eps,
                estimate: None,
                reference,
                achieved_error: None,
                tail_bound: None,
                quad_bound: None,
                x_factor: None,
                y_factor: None,
                info_cost: None,
                raw_calls: None,
                wall_seconds,
                failure: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.failure.is_none())
        .filter_map(|r| {
            r.info_cost
                .filter(|c| *c > 0.0)
                .map(|c| ((1.0 / r.epsilon).ln(), c.ln()))
        })
        .unzip();
    Ok(SweepTable {
        cost_slope: fitted_slope(&xs, &ys),
        rows,
    })
}
