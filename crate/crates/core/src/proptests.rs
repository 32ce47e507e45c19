//! Randomised checks of the invariants that tie the modules together.

use proptest::prelude::*;

use crate::active_set::{build_active_set, is_active, ActiveSetConfig, BoundsModel, NormModel};
use crate::allocation::{allocate, AllocationConfig, GModel};
use crate::decomposition::{
    decomposition_term, reconstruct, CostModel, CostTally, Domain, DEFAULT_CARDINALITY_CAP,
};
use crate::error::MdmError;
use crate::subset::Subset;

/// `f(x) = prod_j (1 + a_j x_j) + sum_j b_j x_j^2` over the non-anchored labels.
fn mixed(a: &[f64], b: &[f64]) -> impl Fn(&[usize], &[f64]) -> f64 + Send + Sync {
    let (a, b) = (a.to_vec(), b.to_vec());
    move |labels: &[usize], x: &[f64]| {
        let p: f64 = labels
            .iter()
            .zip(x)
            .map(|(&j, &t)| 1.0 + a[j - 1] * t)
            .product();
        let s: f64 = labels.iter().zip(x).map(|(&j, &t)| b[j - 1] * t * t).sum();
        p + s
    }
}

fn pod() -> impl Strategy<Value = BoundsModel> {
    (0.0f64..1.5, 2.0f64..3.0, 0.5f64..2.0, 1.0f64..3.0).prop_map(|(b1, extra, mu, kappa)| {
        BoundsModel::Pod {
            b1,
            b2: b1.max(0.0) + extra,
            mu,
            kappa,
        }
    })
}

/// `None` when the search outgrows its candidate budget.
fn plan_for(model: &BoundsModel, eps: f64, alpha: Option<f64>) -> Option<crate::ActivePlan> {
    let mut cfg = ActiveSetConfig::new(eps);
    cfg.alpha = alpha;
    cfg.node_budget = 200_000;
    match build_active_set(model, &NormModel::for_domain(Domain::SymmetricUnit), &cfg) {
        Ok(p) => Some(p),
        Err(MdmError::Resource(_)) => None,
        Err(e) => panic!("{e}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn terms_reconstruct_the_function(
        a in prop::collection::vec(-2.0f64..2.0, 6),
        b in prop::collection::vec(-2.0f64..2.0, 6),
        x in prop::collection::vec(-0.5f64..0.5, 0..=6),
    ) {
        let f = mixed(&a, &b);
        let labels: Vec<usize> = (1..=x.len()).collect();
        let mut tally = CostTally::default();
        let got = reconstruct(&f, Domain::SymmetricUnit, &x, &CostModel::Constant(1.0), DEFAULT_CARDINALITY_CAP, &mut tally).unwrap();
        prop_assert!((got - f(&labels, &x)).abs() <= 1e-12 * (1.0 + got.abs()));
    }

    #[test]
    fn terms_vanish_at_the_anchor(
        a in prop::collection::vec(-2.0f64..2.0, 6),
        b in prop::collection::vec(-2.0f64..2.0, 6),
        mut x in prop::collection::vec(-0.5f64..0.5, 1..=6),
        pick in any::<prop::sample::Index>(),
    ) {
        let f = mixed(&a, &b);
        let k = pick.index(x.len());
        x[k] = 0.0;
        let u = Subset::first(x.len());
        let mut tally = CostTally::default();
        let t = decomposition_term(&f, Domain::SymmetricUnit, &u, &x, &CostModel::Constant(1.0), DEFAULT_CARDINALITY_CAP, &mut tally).unwrap();
        prop_assert!(t.abs() <= 1e-12);
        prop_assert_eq!(tally.raw_calls, 1u64 << x.len());
    }

    #[test]
    fn active_sets_grow_as_epsilon_shrinks(model in pod(), e in -3.0f64..-0.5, ratio in 1.5f64..10.0) {
        let alpha = Some(model.default_alpha());
        let eps = 10f64.powf(e);
        let Some(coarse) = plan_for(&model, eps * ratio, alpha) else { return Err(TestCaseError::reject("search budget")) };
        let Some(fine) = plan_for(&model, eps, alpha) else { return Err(TestCaseError::reject("search budget")) };
        for entry in &coarse.subsets {
            prop_assert!(fine.contains(&entry.indices), "{} dropped", entry.indices);
        }
        prop_assert!(coarse.threshold >= fine.threshold);
    }

    #[test]
    fn membership_matches_brute_force(model in pod(), e in -2.5f64..-0.5, picks in prop::collection::vec(prop::collection::btree_set(1usize..=50, 0..=6), 200)) {
        let Some(plan) = plan_for(&model, 10f64.powf(e), None) else { return Err(TestCaseError::reject("search budget")) };
        let norm = NormModel::for_domain(Domain::SymmetricUnit);
        for labels in picks {
            let u = Subset::new(labels.into_iter().collect()).unwrap();
            let cb = norm.c_u(u.len()) * model.b_u(&u);
            prop_assert_eq!(plan.contains(&u), is_active(cb, plan.alpha, plan.threshold), "{}", u);
        }
        prop_assert!((plan.len() as f64) <= plan.cardinality_bound() * (1.0 + 1e-9));
        prop_assert!(plan.tail_bound <= plan.tail_budget * (1.0 + 1e-9));
    }

    #[test]
    fn allocation_spends_the_budget(model in pod(), e in -3.0f64..-1.0, q in 0.5f64..1.0, lattice in any::<bool>()) {
        let Some(plan) = plan_for(&model, 10f64.powf(e), None) else { return Err(TestCaseError::reject("search budget")) };
        let g_model = if lattice { GModel::Lattice } else { GModel::Unit };
        let a = allocate(&plan, &CostModel::Affine { base: 1.0, per_variable: 1.0 }, &AllocationConfig { q, g_model, budget: None }).unwrap();
        if plan.len() > 1 {
            prop_assert!((a.budget_identity() / a.budget - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn allocation_ratios_ignore_bound_scale(model in pod(), e in -2.5f64..-1.0, scale in 0.01f64..100.0, q in 0.5f64..1.0) {
        let Some(plan) = plan_for(&model, 10f64.powf(e), None) else { return Err(TestCaseError::reject("search budget")) };
        let mut scaled = plan.clone();
        for s in &mut scaled.subsets {
            s.b *= scale;
            s.cb *= scale;
        }
        let cfg = AllocationConfig { q, g_model: GModel::Unit, budget: None };
        let cost = CostModel::Constant(1.0);
        let a = allocate(&plan, &cost, &cfg).unwrap();
        let b = allocate(&scaled, &cost, &cfg).unwrap();
        let pairs: Vec<(f64, f64)> = a.subsets.iter().zip(&b.subsets)
            .filter(|(s, _)| !s.indices.is_empty())
            .map(|(s, t)| (s.h, t.h))
            .collect();
        if let Some(&(h0, k0)) = pairs.first() {
            for &(h, k) in &pairs {
                prop_assert!(((h / h0) / (k / k0) - 1.0).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn subsets_round_trip_through_json(labels in prop::collection::btree_set(1usize..10_000, 0..12)) {
        let u = Subset::new(labels.into_iter().collect()).unwrap();
        let text = serde_json::to_string(&u).unwrap();
        prop_assert_eq!(serde_json::from_str::<Subset>(&text).unwrap(), u);
    }
}
