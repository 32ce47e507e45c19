//! Bounds models and construction of the active set.
//!
//! A subset `u` is active when `(C_u B_u)^{1-1/α} > threshold` with
//! `threshold = tail_budget / S`, where `S` is an upper bound on
//! `S_α = sum_v (C_v B_v)^{1/α}`. Every inactive `u` then satisfies
//! `C_u B_u <= threshold (C_u B_u)^{1/α}`, so the neglected terms sum to at most
//! `threshold (S - sum_{u active} (C_u B_u)^{1/α}) <= tail_budget`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::decomposition::Domain;
use crate::error::{MdmError, Result};
use crate::math::{ln_factorial, log_add_exp, log_sum_exp, zeta, zeta_tail};
use crate::subset::Subset;

/// Number of leading coordinates treated exactly in the decay-sum bound.
const HEAD_LABELS: usize = 2048;
/// Largest cardinality carried in the exact elementary-symmetric recursion.
const HEAD_CARDINALITY: usize = 400;
const MAX_SERIES_TERMS: usize = 10_000_000;
/// Relative slack applied to computed upper bounds to absorb rounding.
const ROUNDING_SLACK: f64 = 1e-12;

/// `C_u = c0^{|u|}`, the norm of the `|u|`-variate integration functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormModel {
    pub c0: f64,
}

impl NormModel {
    pub fn for_domain(domain: Domain) -> Self {
        match domain {
            Domain::SymmetricUnit => NormModel {
                c0: 12f64.sqrt().recip(),
            },
            Domain::HalfLineExp => NormModel { c0: 1.0 },
        }
    }

    pub fn c_u(&self, len: usize) -> f64 {
        self.c0.powi(len as i32)
    }
}

/// Coordinate weights of a product bound `B_u = mu * prod_{j in u} w_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProductWeights {
    /// `w_j = scale * ratio^j` with `0 < ratio < 1`.
    Geometric { scale: f64, ratio: f64 },
    /// `w_1, ..., w_L` non-increasing; labels beyond `L` have weight 0.
    Explicit(Vec<f64>),
}

impl ProductWeights {
    pub fn weight(&self, j: usize) -> f64 {
        match self {
            ProductWeights::Geometric { scale, ratio } => scale * ratio.powi(j as i32),
            ProductWeights::Explicit(w) => w.get(j - 1).copied().unwrap_or(0.0),
        }
    }

    /// Largest label with a nonzero weight, if finite.
    pub fn support(&self) -> Option<usize> {
        match self {
            ProductWeights::Geometric { .. } => None,
            ProductWeights::Explicit(w) => {
                Some(w.iter().rposition(|&x| x > 0.0).map_or(0, |p| p + 1))
            }
        }
    }
}

/// User-supplied bounds `u -> B_u`.
///
/// The callback must be non-increasing whenever a label is replaced by a larger
/// one; enumeration relies on it. `s_alpha_upper` certifies
/// `sum_u (C_u B_u)^{1/α}` for the given `α`.
#[derive(Clone)]
pub struct CustomBounds {
    pub bound: Arc<dyn Fn(&Subset) -> f64 + Send + Sync>,
    pub decay: f64,
    pub s_alpha_upper: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub max_label: usize,
    pub max_cardinality: usize,
}

impl fmt::Debug for CustomBounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomBounds")
            .field("decay", &self.decay)
            .field("max_label", &self.max_label)
            .field("max_cardinality", &self.max_cardinality)
            .finish_non_exhaustive()
    }
}

/// Bounds `B_u >= ||f_u||` on the decomposition terms.
#[derive(Debug, Clone)]
pub enum BoundsModel {
    /// `B_u = (|u|!)^{b1} mu prod_{j in u} (kappa j)^{-b2}`
    Pod {
        b1: f64,
        b2: f64,
        mu: f64,
        kappa: f64,
    },
    /// `B_u = mu prod_{j in u} w_j`
    Product {
        mu: f64,
        weights: ProductWeights,
    },
    Custom(CustomBounds),
}

impl BoundsModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            BoundsModel::Pod { b1, b2, mu, kappa } => {
                if !(b2.is_finite() && b1.is_finite() && *b2 > b1.max(0.0) && *b2 > 1.0) {
                    return Err(MdmError::Config(format!(
                        "POD bounds need b2 > max(b1, 0) and b2 > 1, got b1 = {b1}, b2 = {b2}"
                    )));
                }
                if !(*mu > 0.0 && *kappa > 0.0 && mu.is_finite() && kappa.is_finite()) {
                    return Err(MdmError::Config(
                        "POD bounds need mu > 0 and kappa > 0".into(),
                    ));
                }
            }
            BoundsModel::Product { mu, weights } => {
                if !(*mu > 0.0 && mu.is_finite()) {
                    return Err(MdmError::Config("product bounds need mu > 0".into()));
                }
                match weights {
                    ProductWeights::Geometric { scale, ratio } => {
                        if !(*scale > 0.0 && *ratio > 0.0 && *ratio < 1.0) {
                            return Err(MdmError::Config(
                                "geometric weights need scale > 0 and 0 < ratio < 1".into(),
                            ));
                        }
                    }
                    ProductWeights::Explicit(w) => {
                        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                            return Err(MdmError::Config("weights must be finite and >= 0".into()));
                        }
                        if w.windows(2).any(|p| p[1] > p[0]) {
                            return Err(MdmError::Config(
                                "explicit weights must be non-increasing in the label".into(),
                            ));
                        }
                    }
                }
            }
            BoundsModel::Custom(c) => {
                if !(c.decay > 1.0) {
                    return Err(MdmError::Config(
                        "custom bounds need a decay exponent > 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// `α₀`, the decay exponent of `{C_u B_u}`; infinite for summable product weights.
    pub fn decay(&self) -> f64 {
        match self {
            BoundsModel::Pod { b2, .. } => *b2,
            BoundsModel::Product { .. } => f64::INFINITY,
            BoundsModel::Custom(c) => c.decay,
        }
    }

    /// Default `α = (1 + α₀)/2`, or 2 when `α₀` is infinite.
    pub fn default_alpha(&self) -> f64 {
        let a0 = self.decay();
        if a0.is_finite() {
            0.5 * (1.0 + a0)
        } else {
            2.0
        }
    }

    pub fn b_u(&self, u: &Subset) -> f64 {
        match self {
            BoundsModel::Pod { b1, b2, mu, kappa } => {
                let mut ln = mu.ln() + b1 * ln_factorial(u.len());
                for &j in u.indices() {
                    ln -= b2 * (kappa * j as f64).ln();
                }
                ln.exp()
            }
            BoundsModel::Product { mu, weights } => {
                u.indices()
                    .iter()
                    .map(|&j| weights.weight(j))
                    .product::<f64>()
                    * mu
            }
            BoundsModel::Custom(c) => (c.bound)(u),
        }
    }

    fn label_limit(&self) -> Option<usize> {
        match self {
            BoundsModel::Pod { .. } => None,
            BoundsModel::Product { weights, .. } => weights.support(),
            BoundsModel::Custom(c) => Some(c.max_label),
        }
    }
}

/// `cb^{1-1/α} > threshold`
pub fn is_active(cb: f64, alpha: f64, threshold: f64) -> bool {
    cb.powf(1.0 - 1.0 / alpha) > threshold
}

/// Upper bound on `S_α = sum_{|v| < inf} (C_v B_v)^{1/α}`; with `label_cap`
/// only subsets of `{1..label_cap}` are summed.
pub fn decay_sum_upper(
    model: &BoundsModel,
    norm: &NormModel,
    alpha: f64,
    label_cap: Option<usize>,
) -> Result<f64> {
    model.validate()?;
    if !(alpha > 1.0) {
        return Err(MdmError::Config(format!("alpha = {alpha} must exceed 1")));
    }
    let ln_s = match model {
        BoundsModel::Pod { b1, b2, mu, kappa } => {
            if alpha >= *b2 {
                return Err(MdmError::Divergence { alpha, decay: *b2 });
            }
            pod_ln_sum(*b1, *b2, *mu, *kappa, norm.c0, alpha, label_cap)?
        }
        BoundsModel::Product { mu, weights } => {
            product_ln_sum(*mu, weights, norm.c0, alpha, label_cap)
        }
        BoundsModel::Custom(c) => {
            if alpha >= c.decay {
                return Err(MdmError::Divergence {
                    alpha,
                    decay: c.decay,
                });
            }
            let s = (c.s_alpha_upper)(alpha);
            if !(s.is_finite() && s > 0.0) {
                return Err(MdmError::Config(format!(
                    "custom tail certificate returned {s} for alpha = {alpha}"
                )));
            }
            s.ln()
        }
    };
    let s = (ln_s + ROUNDING_SLACK).exp();
    if !s.is_finite() {
        return Err(MdmError::Overflow(format!(
            "decay sum bound e^{ln_s:.3} overflows"
        )));
    }
    Ok(s)
}

fn product_ln_sum(mu: f64, w: &ProductWeights, c0: f64, alpha: f64, cap: Option<usize>) -> f64 {
    let t = |j: usize| (c0 * w.weight(j)).powf(1.0 / alpha);
    let mut ln = mu.ln() / alpha;
    match (w, cap) {
        (ProductWeights::Explicit(v), _) => {
            let l = cap.map_or(v.len(), |c| c.min(v.len()));
            for j in 1..=l {
                ln += t(j).ln_1p();
            }
        }
        (ProductWeights::Geometric { .. }, Some(l)) => {
            for j in 1..=l {
                ln += t(j).ln_1p();
            }
        }
        (ProductWeights::Geometric { ratio, .. }, None) => {
            for j in 1..=HEAD_LABELS {
                ln += t(j).ln_1p();
            }
            // ln(1+t) <= t and t_j is geometric with ratio ratio^{1/α}
            let r = ratio.powf(1.0 / alpha);
            ln += t(HEAD_LABELS + 1) / (1.0 - r);
        }
    }
    ln
}

/// `ln S_α` for POD bounds.
///
/// With `a_j = A j^{-p}`, `A = (c0 kappa^{-b2})^{1/α}`, `p = b2/α`, the sum is
/// `mu^{1/α} sum_ℓ (ℓ!)^{b1/α} e_ℓ(a)` with `e_ℓ` the elementary symmetric
/// polynomial. Each `e_ℓ` is bounded by the smaller of
///
/// * an exact recursion over the first `J` labels convolved with `T^k/k!`,
///   `T = sum_{j>J} a_j`, and
/// * `(A ζ(p'))^ℓ (ℓ!)^{-(p-p')} / ℓ!` for some `1 < p' < p`, which follows
///   from `prod_i j_i >= ℓ!` for distinct labels.
///
/// The second form also bounds the series remainder geometrically.
fn pod_ln_sum(
    b1: f64,
    b2: f64,
    mu: f64,
    kappa: f64,
    c0: f64,
    alpha: f64,
    cap: Option<usize>,
) -> Result<f64> {
    let ln_a = (c0.ln() - b2 * kappa.ln()) / alpha;
    let p = b2 / alpha;
    let g = b1 / alpha;
    let ln_mu = mu.ln() / alpha;

    let finite = matches!(cap, Some(l) if l <= HEAD_LABELS);
    let j_head = match cap {
        Some(l) => l.min(HEAD_LABELS),
        None => HEAD_LABELS,
    };
    let m_head = j_head.min(HEAD_CARDINALITY);
    let ln_t = if finite {
        f64::NEG_INFINITY
    } else {
        ln_a + zeta_tail(p, j_head).ln()
    };

    // log e_m(a_1..a_J) for m <= m_head
    let mut log_e = vec![f64::NEG_INFINITY; m_head + 1];
    log_e[0] = 0.0;
    for j in 1..=j_head {
        let ln_aj = ln_a - p * (j as f64).ln();
        for m in (1..=m_head.min(j)).rev() {
            log_e[m] = log_add_exp(log_e[m], ln_aj + log_e[m - 1]);
        }
    }

    let p_fact = 1.0 + 0.5 * (p.min(1.0 + p - g) - 1.0);
    let ln_az = ln_a + zeta(p_fact).ln();
    let s = 1.0 + p - p_fact - g;
    let ln_fact_term = |l: usize| -> f64 { ln_mu + l as f64 * ln_az - s * ln_factorial(l) };

    let mut terms = Vec::new();
    let mut running = f64::NEG_INFINITY;
    for l in 0..MAX_SERIES_TERMS {
        if finite && l > j_head {
            return Ok(running);
        }
        let mut ln_e = f64::INFINITY;
        if l <= m_head {
            let conv: Vec<f64> = (0..=l)
                .map(|k| {
                    if k == 0 {
                        log_e[l]
                    } else {
                        log_e[l - k] + k as f64 * ln_t - ln_factorial(k)
                    }
                })
                .filter(|v| v.is_finite())
                .collect();
            ln_e = log_sum_exp(&conv);
        }
        let ln_term_conv = ln_mu + g * ln_factorial(l) + ln_e;
        let ln_term = ln_term_conv.min(ln_fact_term(l));
        terms.push(ln_term);
        running = log_add_exp(running, ln_term);

        // remainder beyond l via the factorial form
        let ln_r = ln_az - s * ((l + 2) as f64).ln();
        if ln_r < 0.0 {
            let ln_tail = ln_fact_term(l + 1) - (-ln_r.exp()).ln_1p();
            if ln_tail < running + (1e-15f64).ln() {
                return Ok(log_add_exp(running, ln_tail));
            }
        }
    }
    Err(MdmError::Resource(format!(
        "decay sum did not converge within {MAX_SERIES_TERMS} terms"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveSetConfig {
    pub epsilon: f64,
    /// Defaults to [`BoundsModel::default_alpha`].
    pub alpha: Option<f64>,
    /// Only labels `<= ell_max` are considered.
    pub ell_max: Option<usize>,
    /// Budget for the neglected terms; defaults to `epsilon/2`.
    pub tail_budget: Option<f64>,
    /// Largest number of candidate subsets examined.
    pub node_budget: usize,
}

impl ActiveSetConfig {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            alpha: None,
            ell_max: None,
            tail_budget: None,
            node_budget: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub indices: Subset,
    /// `C_u B_u`
    pub cb: f64,
    /// `B_u`
    pub b: f64,
}

/// The active set with the quantities that define it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivePlan {
    pub epsilon: f64,
    pub alpha: f64,
    pub threshold: f64,
    pub s_alpha_upper: f64,
    pub tail_budget: f64,
    /// Certified bound on the sum of the neglected `C_u B_u`.
    pub tail_bound: f64,
    pub label_cap: Option<usize>,
    pub subsets: Vec<PlanEntry>,
}

impl ActivePlan {
    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn contains(&self, u: &Subset) -> bool {
        self.subsets.binary_search_by(|e| e.indices.cmp(u)).is_ok()
    }

    /// A priori bound `(1/tail_budget)^{1/(α-1)} S^{α/(α-1)}` on `|U|`.
    pub fn cardinality_bound(&self) -> f64 {
        let e = 1.0 / (self.alpha - 1.0);
        (1.0 / self.tail_budget).powf(e) * self.s_alpha_upper.powf(self.alpha * e)
    }
}

/// Largest subset cardinality in the plan (0 for an empty plan).
pub fn truncation_dimension(plan: &ActivePlan) -> usize {
    plan.subsets
        .iter()
        .map(|e| e.indices.len())
        .max()
        .unwrap_or(0)
}

struct Search<'a> {
    model: &'a BoundsModel,
    norm: &'a NormModel,
    alpha: f64,
    threshold: f64,
    label_limit: Option<usize>,
    nodes: usize,
    budget: usize,
    found: Vec<PlanEntry>,
}

impl Search<'_> {
    fn cb(&mut self, labels: &[usize]) -> Result<(f64, f64)> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(MdmError::Resource(format!(
                "active-set search exceeded {} candidates ({} active subsets found so far, largest label {})",
                self.budget,
                self.found.len(),
                self.found.iter().map(|e| e.indices.max_label()).max().unwrap_or(0)
            )));
        }
        let u = Subset::new(labels.to_vec())?;
        let b = self.model.b_u(&u);
        Ok((self.norm.c_u(u.len()) * b, b))
    }

    fn within(&self, j: usize) -> bool {
        self.label_limit.is_none_or(|l| j <= l)
    }

    /// Extends `prefix` by `remaining` labels, each larger than the last.
    fn extend(&mut self, prefix: &mut Vec<usize>, remaining: usize) -> Result<()> {
        let mut j = prefix.last().map_or(1, |&l| l + 1);
        loop {
            let last = j + remaining - 1;
            if !self.within(last) {
                return Ok(());
            }
            // smallest admissible completion dominates every other one
            let start = prefix.len();
            prefix.extend(j..=last);
            let (cb, b) = self.cb(prefix)?;
            let active = is_active(cb, self.alpha, self.threshold);
            prefix.truncate(start);
            if !active {
                return Ok(());
            }
            prefix.push(j);
            if remaining == 1 {
                self.found.push(PlanEntry {
                    indices: Subset::new(prefix.clone())?,
                    cb,
                    b,
                });
            } else {
                self.extend(prefix, remaining - 1)?;
            }
            prefix.pop();
            j += 1;
        }
    }
}

/// Builds `U(ε,α)` by exhaustive depth-first search per cardinality.
///
/// For each cardinality, labels are chosen in increasing order and a branch is
/// cut as soon as its smallest-label completion is inactive; since `C_u B_u`
/// does not grow when a label is replaced by a larger one, nothing active is
/// skipped.
pub fn build_active_set(
    model: &BoundsModel,
    norm: &NormModel,
    cfg: &ActiveSetConfig,
) -> Result<ActivePlan> {
    model.validate()?;
    if !(cfg.epsilon > 0.0 && cfg.epsilon.is_finite()) && cfg.epsilon != f64::INFINITY {
        return Err(MdmError::Config(format!(
            "epsilon = {} must be positive",
            cfg.epsilon
        )));
    }
    if !(norm.c0 > 0.0 && norm.c0.is_finite()) {
        return Err(MdmError::Config(format!(
            "c0 = {} must be positive",
            norm.c0
        )));
    }
    let alpha = cfg.alpha.unwrap_or_else(|| model.default_alpha());
    let a0 = model.decay();
    if !(alpha > 1.0 && alpha < a0) {
        return Err(MdmError::Config(format!(
            "alpha = {alpha} must lie in (1, {a0})"
        )));
    }
    let tail_budget = cfg.tail_budget.unwrap_or(0.5 * cfg.epsilon);
    if !(tail_budget > 0.0) {
        return Err(MdmError::Config(format!(
            "tail budget {tail_budget} must be positive"
        )));
    }
    let s = decay_sum_upper(model, norm, alpha, cfg.ell_max)?;
    let threshold = tail_budget / s;

    let label_limit = match (model.label_limit(), cfg.ell_max) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    let max_card = match model {
        BoundsModel::Custom(c) => c.max_cardinality,
        _ => 63,
    };
    let mut search = Search {
        model,
        norm,
        alpha,
        threshold,
        label_limit,
        nodes: 0,
        budget: cfg.node_budget,
        found: Vec::new(),
    };

    let mut card = 0;
    loop {
        if card > max_card || label_limit.is_some_and(|l| card > l) {
            break;
        }
        let first = Subset::first(card);
        let (cb, b) = search.cb(first.indices())?;
        if is_active(cb, alpha, threshold) {
            if card == 0 {
                search.found.push(PlanEntry {
                    indices: first,
                    cb,
                    b,
                });
            } else {
                search.extend(&mut Vec::with_capacity(card), card)?;
            }
        } else if cardinality_exhausted(model, norm, card) {
            break;
        }
        card += 1;
    }
    if card > max_card && max_card >= 63 {
        return Err(MdmError::Resource(
            "active subsets exceed 63 coordinates".into(),
        ));
    }

    let mut subsets = search.found;
    subsets.sort_by(|a, b| a.indices.cmp(&b.indices));
    let covered: f64 = subsets.iter().map(|e| e.cb.powf(1.0 / alpha)).sum();
    let tail_bound = (threshold * (s - covered)).max(0.0);
    Ok(ActivePlan {
        epsilon: cfg.epsilon,
        alpha,
        threshold,
        s_alpha_upper: s,
        tail_budget,
        tail_bound,
        label_cap: cfg.ell_max,
        subsets,
    })
}

/// True once `{1..ℓ}` being inactive implies every larger cardinality is too,
/// i.e. the ratio `C_{ℓ+1}B_{{1..ℓ+1}} / C_ℓ B_{{1..ℓ}}` stays at most 1 from here on.
fn cardinality_exhausted(model: &BoundsModel, norm: &NormModel, card: usize) -> bool {
    let next = (card + 1) as f64;
    match model {
        BoundsModel::Pod { b1, b2, kappa, .. } => {
            // the ratio c0 kappa^{-b2} (ℓ+1)^{b1-b2} is decreasing in ℓ
            norm.c0 * kappa.powf(-b2) * next.powf(b1 - b2) <= 1.0
        }
        BoundsModel::Product { weights, .. } => norm.c0 * weights.weight(card + 1) <= 1.0,
        BoundsModel::Custom(_) => false,
    }
}

/// Smallest `ℓ` with `(1/36)(1 - π²/12)^{-3} ℓ^{-3} <= eps/3`, the label
/// truncation for the integrand `1/(1 + sum_j x_j/j²)`.
pub fn example_label_cap(eps: f64) -> usize {
    let k = (1.0 - std::f64::consts::PI.powi(2) / 12.0).powi(-3) / 36.0;
    let ok = |l: usize| k * (l as f64).powi(-3) <= eps / 3.0;
    if ok(1) {
        return 1;
    }
    let guess = (3.0 * k / eps).cbrt();
    if !guess.is_finite() || guess > 1e15 {
        return usize::MAX;
    }
    let mut l = (guess.ceil() as usize).max(2);
    while !ok(l) {
        l += 1;
    }
    while l > 1 && ok(l - 1) {
        l -= 1;
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c0() -> NormModel {
        NormModel::for_domain(Domain::SymmetricUnit)
    }

    #[test]
    fn single_coordinate_sum_is_exact() {
        let g1: f64 = 0.3;
        let model = BoundsModel::Product {
            mu: 1.0,
            weights: ProductWeights::Explicit(vec![g1]),
        };
        let norm = NormModel { c0: 1.0 };
        for alpha in [1.5, 2.0, 7.0] {
            let s = decay_sum_upper(&model, &norm, alpha, None).unwrap();
            let exact = 1.0 + g1.powf(1.0 / alpha);
            assert!(s >= exact && s <= exact * (1.0 + 1e-10));
        }
    }

    #[test]
    fn pod_sum_dominates_partial_sum() {
        let model = BoundsModel::Pod {
            b1: 0.0,
            b2: 4.0,
            mu: 1.0,
            kappa: 1.0,
        };
        let alpha = 2.0;
        let s = decay_sum_upper(&model, &c0(), alpha, None).unwrap();
        // brute force over u ⊆ {1..20}, |u| <= 4
        let mut partial = 0.0;
        for mask in 0u32..(1 << 20) {
            if mask.count_ones() > 4 {
                continue;
            }
            let u: Vec<usize> = (0..20)
                .filter(|p| mask >> p & 1 == 1)
                .map(|p| p + 1)
                .collect();
            let cb = 12f64.powf(-(u.len() as f64) / 2.0)
                * u.iter().map(|&j| (j as f64).powi(-4)).product::<f64>();
            partial += cb.powf(1.0 / alpha);
        }
        assert!(s >= partial);
        // with b1 = 0 the full sum is prod_j (1 + a_j), a_j = 12^{-1/4} j^{-2}
        let a = 12f64.powf(-0.25);
        let n = 1_000_000;
        let ln_head: f64 = (1..=n).map(|j| (a / (j as f64).powi(2)).ln_1p()).sum();
        let exact = (ln_head + a / n as f64).exp();
        assert!(s >= exact * (1.0 - 1e-9) && s <= exact * (1.0 + 1e-6));
    }

    #[test]
    fn pod_sum_is_at_least_empty_term() {
        for (mu, alpha) in [(1.0, 1.5), (0.5, 1.2), (3.0, 1.7)] {
            let model = BoundsModel::Pod {
                b1: 1.0,
                b2: 2.0,
                mu,
                kappa: 0.7,
            };
            let s = decay_sum_upper(&model, &c0(), alpha, None).unwrap();
            assert!(s.is_finite() && s >= mu.powf(1.0 / alpha));
        }
    }

    #[test]
    fn finite_label_sum_matches_enumeration() {
        let model = BoundsModel::Pod {
            b1: 1.0,
            b2: 2.0,
            mu: 1.5,
            kappa: 0.8,
        };
        let alpha = 1.5;
        let l = 10;
        let s = decay_sum_upper(&model, &c0(), alpha, Some(l)).unwrap();
        let mut brute = 0.0;
        for mask in 0u32..(1 << l) {
            let u = Subset::first(l).select(mask as u64);
            brute += (c0().c_u(u.len()) * model.b_u(&u)).powf(1.0 / alpha);
        }
        assert!((s - brute).abs() <= 1e-10 * brute);
        assert!(s >= brute);
    }

    #[test]
    fn divergence_is_reported() {
        let model = BoundsModel::Pod {
            b1: 0.0,
            b2: 2.0,
            mu: 1.0,
            kappa: 1.0,
        };
        assert!(matches!(
            decay_sum_upper(&model, &c0(), 2.0, None),
            Err(MdmError::Divergence { .. })
        ));
        let bad = BoundsModel::Pod {
            b1: 3.0,
            b2: 2.0,
            mu: 1.0,
            kappa: 1.0,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn huge_epsilon_gives_empty_plan() {
        let model = BoundsModel::Pod {
            b1: 0.0,
            b2: 4.0,
            mu: 1.0,
            kappa: 1.0,
        };
        let mut cfg = ActiveSetConfig::new(1e6);
        cfg.alpha = Some(2.0);
        let plan = build_active_set(&model, &c0(), &cfg).unwrap();
        assert!(plan.is_empty());
        assert_eq!(truncation_dimension(&plan), 0);
        assert!(plan.tail_bound <= plan.tail_budget);
    }

    #[test]
    fn alpha_outside_range_is_rejected() {
        let model = BoundsModel::Pod {
            b1: 0.0,
            b2: 4.0,
            mu: 1.0,
            kappa: 1.0,
        };
        for a in [1.0, 0.5, 4.0, 5.0] {
            let mut cfg = ActiveSetConfig::new(1e-3);
            cfg.alpha = Some(a);
            assert!(matches!(
                build_active_set(&model, &c0(), &cfg),
                Err(MdmError::Config(_))
            ));
        }
    }

    #[test]
    fn node_budget_is_enforced() {
        let model = BoundsModel::Pod {
            b1: 1.0,
            b2: 2.0,
            mu: 5.6,
            kappa: 0.42,
        };
        let mut cfg = ActiveSetConfig::new(1e-4);
        cfg.node_budget = 1000;
        assert!(matches!(
            build_active_set(&model, &c0(), &cfg),
            Err(MdmError::Resource(_))
        ));
    }

    #[test]
    fn truncation_dimension_of_small_plan() {
        let entries = [vec![], vec![1], vec![2], vec![1, 2]]
            .into_iter()
            .map(|v| PlanEntry {
                indices: Subset::new(v).unwrap(),
                cb: 1.0,
                b: 1.0,
            })
            .collect();
        let plan = ActivePlan {
            epsilon: 1.0,
            alpha: 2.0,
            threshold: 0.0,
            s_alpha_upper: 1.0,
            tail_budget: 0.5,
            tail_bound: 0.0,
            label_cap: None,
            subsets: entries,
        };
        assert_eq!(truncation_dimension(&plan), 2);
    }

    #[test]
    fn label_cap_examples() {
        assert_eq!(example_label_cap(f64::INFINITY), 1);
        assert_eq!(example_label_cap(1e6), 1);
        let k = (1.0 - std::f64::consts::PI.powi(2) / 12.0).powi(-3) / 36.0;
        for eps in [1e-1, 1e-2, 1e-3, 1e-4, 1e-6] {
            let l = example_label_cap(eps);
            assert!(k * (l as f64).powi(-3) <= eps / 3.0);
            assert!(l == 1 || k * ((l - 1) as f64).powi(-3) > eps / 3.0);
        }
        assert_eq!(example_label_cap(1e-3), 25);
        assert_eq!(example_label_cap(1e-2), 12);
    }
}
