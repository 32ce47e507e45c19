//! Lagrange allocation of sample budgets across the active set.
//!
//! Minimizing `sum_u h_u £(|u|)` subject to `sum_u G_u B_u / h_u^q = budget` gives
//!
//! ```text
//! h_u = ((1/budget) sum_v £_v^{q/(q+1)} (G_v B_v)^{1/(q+1)})^{1/q} (G_u B_u / £_u)^{1/(q+1)}
//! ```
//!
//! All arithmetic is carried out on logarithms.

use serde::{Deserialize, Serialize};

use crate::active_set::ActivePlan;
use crate::decomposition::CostModel;
use crate::error::{MdmError, Result};
use crate::lattice::lattice_g;
use crate::math::{largest_prime_at_most, log_sum_exp};
use crate::smolyak::{error_bound, point_count, UnivariateFamily};
use crate::subset::Subset;

/// Source of the constants `G_{u,q}` in `||I_u - A_{u,n}|| <= G_{u,q} / (n+1)^q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GModel {
    /// `G ≡ 1`, used for the sparse-grid allocation.
    Unit,
    /// Shifted lattice rules.
    Lattice,
}

impl GModel {
    pub fn g(&self, len: usize, q: f64) -> f64 {
        match self {
            GModel::Unit => 1.0,
            GModel::Lattice => lattice_g(len, q),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationConfig {
    pub q: f64,
    pub g_model: GModel,
    /// Error budget for the integrated terms; defaults to `epsilon/2`.
    pub budget: Option<f64>,
}

/// How `n_u` was obtained from `h_u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantization {
    None,
    Floor,
    Prime,
    Smolyak(UnivariateFamily),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetAllocation {
    pub indices: Subset,
    pub cb: f64,
    pub b: f64,
    /// `G_{u,q}` used in the allocation.
    pub g: f64,
    pub h: f64,
    pub n: u64,
    pub kappa: Option<i64>,
    /// Bound on this term's quadrature error.
    pub predicted_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub q: f64,
    pub g_model: GModel,
    pub budget: f64,
    pub quantization: Quantization,
    pub subsets: Vec<SubsetAllocation>,
    /// `ln sum_v £_v^{q/(q+1)} (G_v B_v)^{1/(q+1)}` over nonempty subsets.
    pub ln_lagrange_sum: f64,
}

impl Allocation {
    /// `sum_u G_u B_u / h_u^q` over nonempty subsets; equals `budget` by construction.
    pub fn budget_identity(&self) -> f64 {
        self.nonempty().map(|s| s.g * s.b / s.h.powf(self.q)).sum()
    }

    /// Sum of the per-term error predictions.
    pub fn predicted_total(&self) -> f64 {
        self.subsets.iter().map(|s| s.predicted_error).sum()
    }

    /// `sum_u n_u £(|u|)`
    pub fn info_cost(&self, cost: &CostModel) -> f64 {
        self.subsets
            .iter()
            .map(|s| s.n as f64 * cost.pound(s.indices.len()))
            .sum()
    }

    /// `sum_u h_u £(|u|)` over nonempty subsets.
    pub fn relaxed_cost(&self, cost: &CostModel) -> f64 {
        self.nonempty()
            .map(|s| s.h * cost.pound(s.indices.len()))
            .sum()
    }

    /// `(1/budget)^{1/q} (sum_u £^{q/(q+1)} (G B)^{1/(q+1)})^{1+1/q}`
    pub fn cost_bound(&self) -> f64 {
        ((-self.budget.ln() + (1.0 + self.q) * self.ln_lagrange_sum) / self.q).exp()
    }

    fn nonempty(&self) -> impl Iterator<Item = &SubsetAllocation> {
        self.subsets.iter().filter(|s| !s.indices.is_empty())
    }
}

/// Computes `h_u` for every subset of `plan`; the empty set gets the one-point
/// rule with `n = 1` and no error.
pub fn allocate(plan: &ActivePlan, cost: &CostModel, cfg: &AllocationConfig) -> Result<Allocation> {
    if !(cfg.q > 0.0 && cfg.q.is_finite()) {
        return Err(MdmError::Config(format!("q = {} must be positive", cfg.q)));
    }
    let budget = cfg.budget.unwrap_or(0.5 * plan.epsilon);
    if !(budget > 0.0) {
        return Err(MdmError::Config(format!(
            "quadrature budget {budget} must be positive"
        )));
    }
    let q = cfg.q;
    let mut logs = Vec::with_capacity(plan.len());
    for e in plan.subsets.iter().filter(|e| !e.indices.is_empty()) {
        let g = cfg.g_model.g(e.indices.len(), q);
        let ln_gb = g.ln() + e.b.ln();
        let ln_pound = cost.pound(e.indices.len()).ln();
        if !(ln_gb.is_finite() && ln_pound.is_finite()) {
            return Err(MdmError::NonFinite {
                value: g * e.b,
                context: format!("G B for subset {}", e.indices),
            });
        }
        logs.push((q * ln_pound + ln_gb) / (q + 1.0));
    }
    let ln_sum = log_sum_exp(&logs);
    let ln_scale = (ln_sum - budget.ln()) / q;

    let mut subsets = Vec::with_capacity(plan.len());
    for e in &plan.subsets {
        if e.indices.is_empty() {
            subsets.push(SubsetAllocation {
                indices: e.indices.clone(),
                cb: e.cb,
                b: e.b,
                g: 0.0,
                h: 1.0,
                n: 1,
                kappa: None,
                predicted_error: 0.0,
            });
            continue;
        }
        let g = cfg.g_model.g(e.indices.len(), q);
        let ln_h = ln_scale + (g.ln() + e.b.ln() - cost.pound(e.indices.len()).ln()) / (q + 1.0);
        let h = ln_h.exp();
        if !h.is_finite() {
            return Err(MdmError::Overflow(format!(
                "h for subset {} is e^{ln_h:.1}",
                e.indices
            )));
        }
        subsets.push(SubsetAllocation {
            indices: e.indices.clone(),
            cb: e.cb,
            b: e.b,
            g,
            h,
            n: 0,
            kappa: None,
            predicted_error: g * e.b / h.powf(q),
        });
    }
    Ok(Allocation {
        q,
        g_model: cfg.g_model,
        budget,
        quantization: Quantization::None,
        subsets,
        ln_lagrange_sum: ln_sum,
    })
}

fn to_count(x: f64) -> Result<u64> {
    if x >= u64::MAX as f64 {
        Err(MdmError::Overflow(format!("sample count {x} exceeds u64")))
    } else {
        Ok(x.floor() as u64)
    }
}

/// `n_u = ⌊h_u⌋`
pub fn quantize_floor(a: &Allocation) -> Result<Allocation> {
    let mut out = a.clone();
    for s in out.subsets.iter_mut().filter(|s| !s.indices.is_empty()) {
        s.n = to_count(s.h)?;
        s.kappa = None;
        s.predicted_error = s.g * s.b / (s.n as f64 + 1.0).powf(a.q);
    }
    out.quantization = Quantization::Floor;
    Ok(out)
}

/// `n_u` = largest prime in `[3, h_u]`, or 0 if there is none.
pub fn quantize_prime(a: &Allocation) -> Result<Allocation> {
    let mut out = a.clone();
    for s in out.subsets.iter_mut().filter(|s| !s.indices.is_empty()) {
        if s.h >= u64::MAX as f64 {
            return Err(MdmError::Overflow(format!(
                "sample count {} exceeds u64",
                s.h
            )));
        }
        s.n = largest_prime_at_most(s.h).unwrap_or(0);
        s.kappa = None;
        s.predicted_error = s.g * s.b / (s.n as f64 + 1.0).powf(a.q);
    }
    out.quantization = Quantization::Prime;
    Ok(out)
}

/// `⌊log₂ h⌋` with the bracketing `2^k <= h < 2^{k+1}` enforced exactly.
pub fn floor_log2(h: f64) -> i64 {
    let mut k = h.log2().floor() as i64;
    while 2f64.powi(k as i32) > h {
        k -= 1;
    }
    while 2f64.powi(k as i32 + 1) <= h {
        k += 1;
    }
    k
}

/// `κ_u = |u| + ⌊log₂ h_u⌋`; `κ_u < |u|` gives the zero rule with `n_u = 0`,
/// otherwise `n_u` is the node count of `Q_{|u|,κ_u}`. The predicted error is
/// the sparse-grid bound times `B_u`.
pub fn quantize_smolyak(a: &Allocation, family: UnivariateFamily) -> Result<Allocation> {
    let mut out = a.clone();
    for s in out.subsets.iter_mut().filter(|s| !s.indices.is_empty()) {
        let d = s.indices.len();
        let kappa = d as i64 + floor_log2(s.h);
        s.kappa = Some(kappa);
        s.n = if kappa < d as i64 {
            0
        } else {
            let n = point_count(family, d, kappa)?;
            u64::try_from(n).map_err(|_| MdmError::Overflow(format!("{n} nodes")))?
        };
        s.predicted_error = error_bound(family, d, kappa) * s.b;
    }
    out.quantization = Quantization::Smolyak(family);
    Ok(out)
}

/// Prime allocation whose quantized prediction `sum_u G_u B_u/(n_u+1)^q`
/// stays within the original budget: the Lagrange target is tightened by
/// factors of 0.9 until it does.
pub fn allocate_prime_certified(
    plan: &ActivePlan,
    cost: &CostModel,
    cfg: &AllocationConfig,
) -> Result<Allocation> {
    let target = cfg.budget.unwrap_or(0.5 * plan.epsilon);
    let mut inner = *cfg;
    inner.budget = Some(target);
    for _ in 0..400 {
        let a = quantize_prime(&allocate(plan, cost, &inner)?)?;
        // `budget` keeps the tightened Lagrange target so that the budget
        // identity and `cost_bound` still describe the returned `h_u`
        if a.predicted_total() <= target {
            return Ok(a);
        }
        inner.budget = Some(inner.budget.unwrap() * 0.9);
    }
    Err(MdmError::Resource(
        "prime quantization could not meet the error budget".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::active_set::PlanEntry;

    fn plan(entries: &[(&[usize], f64)], eps: f64) -> ActivePlan {
        ActivePlan {
            epsilon: eps,
            alpha: 2.0,
            threshold: 0.0,
            s_alpha_upper: 1.0,
            tail_budget: eps / 2.0,
            tail_bound: 0.0,
            label_cap: None,
            subsets: entries
                .iter()
                .map(|(u, b)| PlanEntry {
                    indices: Subset::new(u.to_vec()).unwrap(),
                    cb: *b,
                    b: *b,
                })
                .collect(),
        }
    }

    fn unit(q: f64) -> AllocationConfig {
        AllocationConfig {
            q,
            g_model: GModel::Unit,
            budget: None,
        }
    }

    #[test]
    fn single_subset_collapses() {
        let p = plan(&[(&[3], 0.2)], 1e-3);
        for q in [0.5, 0.9, 1.0] {
            let a = allocate(&p, &CostModel::default(), &unit(q)).unwrap();
            let want = (2.0 * 0.2 / 1e-3f64).powf(1.0 / q);
            assert!((a.subsets[0].h - want).abs() <= 1e-12 * want);
        }
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let p = plan(&[(&[1], 0.3), (&[2], 0.3)], 1e-2);
        let a = allocate(&p, &CostModel::default(), &unit(0.7)).unwrap();
        assert!((a.subsets[0].h - a.subsets[1].h).abs() <= 1e-12 * a.subsets[0].h);
        for s in &a.subsets {
            assert!((s.predicted_error - 1e-2 / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_set_uses_one_point() {
        let p = plan(&[(&[], 1.0), (&[1], 0.1)], 1e-2);
        let a = allocate(&p, &CostModel::default(), &unit(1.0)).unwrap();
        assert_eq!(a.subsets[0].n, 1);
        assert_eq!(a.subsets[0].predicted_error, 0.0);
        assert!((a.budget_identity() - 5e-3).abs() < 1e-15);
    }

    #[test]
    fn floor_and_prime_examples() {
        let mut p = plan(&[(&[1], 1.0), (&[2], 1.0), (&[3], 1.0)], 1.0);
        p.subsets[0].b = 1.0;
        let mut a = allocate(&p, &CostModel::default(), &unit(1.0)).unwrap();
        for (s, h) in a.subsets.iter_mut().zip([3.99, 0.4, 10.2]) {
            s.h = h;
        }
        let f = quantize_floor(&a).unwrap();
        assert_eq!(
            f.subsets.iter().map(|s| s.n).collect::<Vec<_>>(),
            vec![3, 0, 10]
        );
        for (s, h) in a.subsets.iter_mut().zip([10.2, 2.9, 3.0]) {
            s.h = h;
        }
        let pr = quantize_prime(&a).unwrap();
        assert_eq!(
            pr.subsets.iter().map(|s| s.n).collect::<Vec<_>>(),
            vec![7, 0, 3]
        );
    }

    #[test]
    fn smolyak_examples() {
        let p = plan(&[(&[1], 1.0), (&[1, 2, 3], 1.0), (&[1, 2, 4], 1.0)], 1.0);
        let mut a = allocate(&p, &CostModel::default(), &unit(1.0)).unwrap();
        for (s, h) in a.subsets.iter_mut().zip([8.0, 1.5, 0.6]) {
            s.h = h;
        }
        let q = quantize_smolyak(&a, UnivariateFamily::AnchoredUnit).unwrap();
        assert_eq!(q.subsets[0].kappa, Some(4));
        assert_eq!(q.subsets[0].n, 16);
        assert_eq!(q.subsets[1].kappa, Some(3));
        assert!(q.subsets[1].n > 0);
        assert_eq!(q.subsets[2].kappa, Some(2));
        assert_eq!(q.subsets[2].n, 0);
    }

    #[test]
    fn floor_log2_brackets() {
        for h in [
            1.0,
            1.5,
            2.0,
            7.999999999,
            8.0,
            0.6,
            0.5,
            0.49,
            1e-10,
            3.5e12,
        ] {
            let k = floor_log2(h);
            assert!(
                2f64.powi(k as i32) <= h && h < 2f64.powi(k as i32 + 1),
                "{h}"
            );
        }
    }

    #[test]
    fn tiny_epsilon_does_not_overflow_in_logs() {
        let p = plan(&[(&[1], 1e-3), (&[2], 1e-5)], 1e-200);
        let a = allocate(&p, &CostModel::default(), &unit(0.5));
        assert!(matches!(a, Err(MdmError::Overflow(_))));
        let a = allocate(
            &plan(&[(&[1], 1e-3)], 1e-150),
            &CostModel::default(),
            &unit(1.0),
        )
        .unwrap();
        assert!(a.subsets[0].h.is_finite());
    }

    #[test]
    fn prime_certified_meets_budget() {
        let p = plan(&[(&[1], 0.05), (&[2], 0.01), (&[1, 2], 0.002)], 1e-2);
        let cfg = AllocationConfig {
            q: 0.9,
            g_model: GModel::Lattice,
            budget: None,
        };
        let a = allocate_prime_certified(&p, &CostModel::default(), &cfg).unwrap();
        assert!(a.predicted_total() <= 5e-3);
        assert!(a
            .subsets
            .iter()
            .all(|s| s.n == 0 || crate::math::is_prime(s.n)));
    }
}
