//! Anchored decomposition of a black-box integrand.
//!
//! With the anchor at 0, the term belonging to a subset `u` is recovered from
//! point values of `f` by inclusion–exclusion,
//!
//! ```text
//! f_u(x_u) = sum_{v ⊆ u} (-1)^{|u|-|v|} f(x_v; 0),
//! ```
//!
//! where `f(x_v; 0)` sets every coordinate outside `v` to the anchor. One term
//! costs `£(|u|) = sum_k C(|u|,k) $(k)` in units of the per-call cost `$`.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{MdmError, Result};
use crate::math::{binomial, CompensatedSum};
use crate::subset::{subset_masks, Subset};

/// Largest cardinality for which the `2^|u|` expansion is attempted.
pub const DEFAULT_CARDINALITY_CAP: usize = 30;

/// One-dimensional integration domain together with its probability density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    /// `[-1/2, 1/2]` with the uniform density.
    SymmetricUnit,
    /// `[0, inf)` with density `e^{-x}`.
    HalfLineExp,
}

impl Domain {
    pub fn contains(&self, x: f64) -> bool {
        match self {
            Domain::SymmetricUnit => (-0.5..=0.5).contains(&x),
            Domain::HalfLineExp => x >= 0.0 && x.is_finite(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Domain::SymmetricUnit => "[-1/2, 1/2]",
            Domain::HalfLineExp => "[0, inf)",
        }
    }
}

/// An integrand of infinitely many variables, evaluated at points with finitely
/// many non-anchored coordinates.
///
/// `labels` are the (1-based, increasing) coordinates that differ from the
/// anchor and `coords` their values. Implementations must be reentrant.
pub trait Integrand: Send + Sync {
    fn eval(&self, labels: &[usize], coords: &[f64]) -> f64;
}

impl<F> Integrand for F
where
    F: Fn(&[usize], &[f64]) -> f64 + Send + Sync,
{
    fn eval(&self, labels: &[usize], coords: &[f64]) -> f64 {
        self(labels, coords)
    }
}

pub type SharedIntegrand = Arc<dyn Integrand>;

/// A point whose coordinates outside `subset` sit at the anchor 0.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchoredPoint {
    subset: Subset,
    coords: Vec<f64>,
}

impl AnchoredPoint {
    pub fn new(subset: Subset, coords: Vec<f64>, domain: Domain) -> Result<Self> {
        if coords.len() != subset.len() {
            return Err(MdmError::InvalidSubset(format!(
                "{} coordinates given for subset {subset}",
                coords.len()
            )));
        }
        check_domain(subset.indices(), &coords, domain)?;
        Ok(Self { subset, coords })
    }

    /// The all-anchored point.
    pub fn origin() -> Self {
        Self {
            subset: Subset::empty(),
            coords: Vec::new(),
        }
    }

    pub fn subset(&self) -> &Subset {
        &self.subset
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

fn check_domain(labels: &[usize], coords: &[f64], domain: Domain) -> Result<()> {
    for (&j, &x) in labels.iter().zip(coords) {
        if !domain.contains(x) {
            return Err(MdmError::Domain {
                index: j,
                value: x,
                domain: domain.name(),
            });
        }
    }
    Ok(())
}

/// Cost `$(k)` of one evaluation of `f` with `k` non-anchored coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostModel {
    /// `$(k) = c`
    Constant(f64),
    /// `$(k) = base + per_variable * k`
    Affine { base: f64, per_variable: f64 },
    /// `$(k) = base * rate^k` with `rate >= 1`
    Exponential { base: f64, rate: f64 },
    /// Explicit table; the last entry is repeated for larger `k`.
    Table(Vec<f64>),
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel::Constant(1.0)
    }
}

impl CostModel {
    pub fn dollar(&self, k: usize) -> f64 {
        match self {
            CostModel::Constant(c) => *c,
            CostModel::Affine { base, per_variable } => base + per_variable * k as f64,
            CostModel::Exponential { base, rate } => base * rate.powi(k as i32),
            CostModel::Table(t) => t[k.min(t.len() - 1)],
        }
    }

    /// `£(k) = sum_{j=0}^{k} C(k,j) $(j)`
    pub fn pound(&self, k: usize) -> f64 {
        let mut acc = CompensatedSum::new();
        for j in 0..=k {
            acc.add(binomial(k as i64, j as i64) * self.dollar(j));
        }
        acc.value()
    }

    /// Checks positivity and monotonicity of `$` over the cardinalities in use.
    pub fn validate(&self) -> Result<()> {
        if let CostModel::Table(t) = self {
            if t.is_empty() {
                return Err(MdmError::Config("cost table must not be empty".into()));
            }
        }
        let mut prev = 0.0;
        for k in 0..=DEFAULT_CARDINALITY_CAP {
            let c = self.dollar(k);
            if !(c.is_finite() && c > 0.0) {
                return Err(MdmError::Config(format!(
                    "cost $({k}) = {c} must be positive"
                )));
            }
            if c < prev {
                return Err(MdmError::Config(format!(
                    "cost function must be non-decreasing, $({k}) = {c} < {prev}"
                )));
            }
            prev = c;
        }
        Ok(())
    }
}

/// Per-worker tally of integrand calls and modelled cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostTally {
    /// Actual calls of the integrand.
    pub raw_calls: u64,
    /// Anchored values served from a memo instead of a call.
    pub cache_hits: u64,
    /// Sum of `$(|v|)` over every anchored value requested.
    pub cost: f64,
}

impl CostTally {
    pub fn merge(&mut self, other: &CostTally) {
        self.raw_calls += other.raw_calls;
        self.cache_hits += other.cache_hits;
        self.cost += other.cost;
    }
}

fn checked_call<F: Integrand + ?Sized>(f: &F, labels: &[usize], coords: &[f64]) -> Result<f64> {
    let y = f.eval(labels, coords);
    if y.is_finite() {
        Ok(y)
    } else {
        Err(MdmError::NonFinite {
            value: y,
            context: format!("labels {labels:?}, coords {coords:?}"),
        })
    }
}

/// Evaluates `f(x_u; 0)` and charges `$(|u|)` to `tally`.
pub fn evaluate_anchored<F: Integrand + ?Sized>(
    f: &F,
    point: &AnchoredPoint,
    cost: &CostModel,
    tally: &mut CostTally,
) -> Result<f64> {
    let y = checked_call(f, point.subset.indices(), &point.coords)?;
    tally.raw_calls += 1;
    tally.cost += cost.dollar(point.subset.len());
    Ok(y)
}

fn check_cap(u: &Subset, cap: usize) -> Result<()> {
    if u.len() > cap || u.len() >= 64 {
        return Err(MdmError::CardinalityCap {
            len: u.len(),
            cap: cap.min(63),
        });
    }
    Ok(())
}

/// Value of the anchored-decomposition term `f_u` at `x` (coordinates over `u`).
///
/// The `2^|u|` signed values are accumulated in order of increasing `|v|` with
/// compensated summation; `tally` is charged exactly `£(|u|)`.
pub fn decomposition_term<F: Integrand + ?Sized>(
    f: &F,
    domain: Domain,
    u: &Subset,
    x: &[f64],
    cost: &CostModel,
    cap: usize,
    tally: &mut CostTally,
) -> Result<f64> {
    check_cap(u, cap)?;
    if x.len() != u.len() {
        return Err(MdmError::InvalidSubset(format!(
            "{} coordinates given for subset {u}",
            x.len()
        )));
    }
    check_domain(u.indices(), x, domain)?;
    let d = u.len();
    let mut labels = Vec::with_capacity(d);
    let mut coords = Vec::with_capacity(d);
    let mut acc = CompensatedSum::new();
    for mask in subset_masks(d) {
        project(u.indices(), x, mask, &mut labels, &mut coords);
        let y = checked_call(f, &labels, &coords)?;
        tally.raw_calls += 1;
        tally.cost += cost.dollar(labels.len());
        acc.add(sign(d, mask) * y);
    }
    Ok(acc.value())
}

fn sign(d: usize, mask: u64) -> f64 {
    if (d - mask.count_ones() as usize).is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn project(
    labels_u: &[usize],
    x: &[f64],
    mask: u64,
    labels: &mut Vec<usize>,
    coords: &mut Vec<f64>,
) {
    labels.clear();
    coords.clear();
    for (p, (&j, &xj)) in labels_u.iter().zip(x).enumerate() {
        if mask >> p & 1 == 1 {
            labels.push(j);
            coords.push(xj);
        }
    }
}

/// `sum_{u ⊆ {1..d}} f_u(x_u)`; by telescoping this equals `f(x_1..x_d; 0)`.
/// Intended as a test oracle.
pub fn reconstruct<F: Integrand + ?Sized>(
    f: &F,
    domain: Domain,
    x: &[f64],
    cost: &CostModel,
    cap: usize,
    tally: &mut CostTally,
) -> Result<f64> {
    let d = x.len();
    let full = Subset::first(d);
    check_cap(&full, cap)?;
    let mut acc = CompensatedSum::new();
    for mask in subset_masks(d) {
        let u = full.select(mask);
        let xu: Vec<f64> = (0..d)
            .filter(|p| mask >> p & 1 == 1)
            .map(|p| x[p])
            .collect();
        acc.add(decomposition_term(f, domain, &u, &xu, cost, cap, tally)?);
    }
    Ok(acc.value())
}

/// Inclusion–exclusion for many points of one subset, sharing anchored values
/// between points whose projections coincide.
///
/// Keys are the exact bit patterns of the projected coordinates, so only
/// bit-identical projections are shared.
pub struct TermMemo {
    u: Subset,
    masks: Vec<u64>,
    cache: HashMap<(u64, Vec<u64>), f64>,
    labels: Vec<usize>,
    coords: Vec<f64>,
}

impl TermMemo {
    pub fn new(u: &Subset, cap: usize) -> Result<Self> {
        check_cap(u, cap)?;
        Ok(Self {
            u: u.clone(),
            masks: subset_masks(u.len()),
            cache: HashMap::new(),
            labels: Vec::with_capacity(u.len()),
            coords: Vec::with_capacity(u.len()),
        })
    }

    pub fn subset(&self) -> &Subset {
        &self.u
    }

    /// `f_u(x)`; `tally.raw_calls + tally.cache_hits` grows by `2^|u|`.
    pub fn term<F: Integrand + ?Sized>(
        &mut self,
        f: &F,
        domain: Domain,
        x: &[f64],
        cost: &CostModel,
        tally: &mut CostTally,
    ) -> Result<f64> {
        let d = self.u.len();
        check_domain(self.u.indices(), x, domain)?;
        let mut acc = CompensatedSum::new();
        for &mask in &self.masks {
            project(
                self.u.indices(),
                x,
                mask,
                &mut self.labels,
                &mut self.coords,
            );
            let key = (
                mask,
                self.coords.iter().map(|c| c.to_bits()).collect::<Vec<_>>(),
            );
            tally.cost += cost.dollar(self.labels.len());
            let y = match self.cache.get(&key) {
                Some(&y) => {
                    tally.cache_hits += 1;
                    y
                }
                None => {
                    let y = checked_call(f, &self.labels, &self.coords)?;
                    tally.raw_calls += 1;
                    self.cache.insert(key, y);
                    y
                }
            };
            acc.add(sign(d, mask) * y);
        }
        Ok(acc.value())
    }
}
