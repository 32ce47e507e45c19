//! Trapezoidal Smolyak sparse grids.
//!
//! `Q_{d,κ} = sum_{i in P(d,κ)} (-1)^{κ-|i|} C(d-1, κ-|i|) ⊗ U_{i_ℓ}` with
//! `P(d,κ) = {i >= 1 : κ-d+1 <= |i| <= κ}`. Nodes at which some coordinate
//! equals the anchor are never generated: the integrands vanish there.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{MdmError, Result};
use crate::math::{binomial, gcd, CompensatedSum};

/// `C₁` in `||I - U_i|| < C₁ 2^{-i}` for the exponentially weighted rules.
pub const EXP_WEIGHTED_C1: f64 = 1.00656;

/// Default cap on the number of distinct nodes of one rule.
pub const DEFAULT_NODE_BUDGET: u128 = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnivariateFamily {
    /// Composite trapezoid on `[-1/2, 1/2]` with nodes `-1/2 + k/2^i`.
    AnchoredUnit,
    /// Weighted trapezoid on `[0, inf)` with nodes `-2 ln(1 - k/(2^i+1))`.
    ExpWeighted,
}

/// Exact node label: the node is `num/den` (anchored unit) or
/// `-2 ln(1 - num/den)` (exponentially weighted), in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeKey {
    pub num: i64,
    pub den: u64,
}

impl NodeKey {
    fn reduced(num: i64, den: u64) -> Self {
        let g = gcd(num.unsigned_abs(), den).max(1);
        NodeKey {
            num: num / g as i64,
            den: den / g,
        }
    }
}

/// One-dimensional rule: `(key, node, weight)` for the non-anchored nodes.
pub fn univariate_nodes(family: UnivariateFamily, i: u32) -> Vec<(NodeKey, f64, f64)> {
    if i == 0 {
        return Vec::new();
    }
    assert!(i < 62, "univariate level {i} too large");
    let m = 1u64 << i;
    match family {
        UnivariateFamily::AnchoredUnit => {
            let h = 1.0 / m as f64;
            (0..=m)
                .filter(|&k| 2 * k != m)
                .map(|k| {
                    let key = NodeKey::reduced(2 * k as i64 - m as i64, 2 * m);
                    let x = -0.5 + k as f64 * h;
                    let w = if k == 0 || k == m { 0.5 * h } else { h };
                    (key, x, w)
                })
                .collect()
        }
        UnivariateFamily::ExpWeighted => {
            let den = m + 1;
            let node = |k: u64| -2.0 * (-(k as f64) / den as f64).ln_1p();
            // e^{-x_k} = (1 - k/(2^i+1))^2 exactly
            let decay = |k: u64| {
                let r = (den - k) as f64 / den as f64;
                r * r
            };
            let slope = |k: u64| (decay(k + 1) - decay(k)) / (node(k + 1) - node(k));
            (1..=m)
                .map(|k| {
                    let w = if k < m {
                        slope(k) - slope(k - 1)
                    } else {
                        -slope(k - 1)
                    };
                    (NodeKey::reduced(k as i64, den), node(k), w)
                })
                .collect()
        }
    }
}

/// A rule `sum_k w_k g(x_k)` over `d` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub family: UnivariateFamily,
    pub dimension: usize,
    pub level: i64,
    /// Row-major, `dimension` coordinates per node.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dimension..(k + 1) * self.dimension]
    }

    pub fn apply<F: Fn(&[f64]) -> f64>(&self, g: F) -> f64 {
        let mut acc = CompensatedSum::new();
        for (k, w) in self.weights.iter().enumerate() {
            acc.add(w * g(self.point(k)));
        }
        acc.value()
    }

    /// One node per line: coordinates then weight, whitespace separated.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for (k, w) in self.weights.iter().enumerate() {
            for x in self.point(k) {
                write!(s, "{x:e} ").unwrap();
            }
            writeln!(s, "{w:e}").unwrap();
        }
        s
    }

    pub fn from_table(
        family: UnivariateFamily,
        dimension: usize,
        level: i64,
        text: &str,
    ) -> Result<Self> {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let vals: std::result::Result<Vec<f64>, _> =
                line.split_whitespace().map(str::parse::<f64>).collect();
            let vals = vals.map_err(|e| MdmError::Parse(format!("line {}: {e}", line_no + 1)))?;
            if vals.len() != dimension + 1 {
                return Err(MdmError::Parse(format!(
                    "line {}: expected {} columns, found {}",
                    line_no + 1,
                    dimension + 1,
                    vals.len()
                )));
            }
            points.extend_from_slice(&vals[..dimension]);
            weights.push(vals[dimension]);
        }
        Ok(Self {
            family,
            dimension,
            level,
            points,
            weights,
        })
    }
}

/// Visits every `i in N^d`, `i_ℓ >= 1`, with `lo <= |i| <= hi`.
fn for_each_index<F: FnMut(&[u32])>(d: usize, lo: i64, hi: i64, f: &mut F) {
    fn rec<F: FnMut(&[u32])>(idx: &mut Vec<u32>, d: usize, sum: i64, lo: i64, hi: i64, f: &mut F) {
        if idx.len() == d {
            if sum >= lo {
                f(idx);
            }
            return;
        }
        let left = (d - idx.len() - 1) as i64;
        let mut i = 1;
        while sum + i + left <= hi {
            idx.push(i as u32);
            rec(idx, d, sum + i, lo, hi, f);
            idx.pop();
            i += 1;
        }
    }
    rec(&mut Vec::with_capacity(d), d, 0, lo, hi, f);
}

/// `Q_{d,κ}` with duplicate nodes merged by exact keys.
pub fn smolyak_rule(family: UnivariateFamily, d: usize, kappa: i64) -> Result<QuadratureRule> {
    smolyak_rule_with_budget(family, d, kappa, DEFAULT_NODE_BUDGET)
}

pub fn smolyak_rule_with_budget(
    family: UnivariateFamily,
    d: usize,
    kappa: i64,
    node_budget: u128,
) -> Result<QuadratureRule> {
    if d == 0 {
        return Err(MdmError::Config("Smolyak rules need d >= 1".into()));
    }
    let empty = QuadratureRule {
        family,
        dimension: d,
        level: kappa,
        points: Vec::new(),
        weights: Vec::new(),
    };
    if kappa < d as i64 {
        return Ok(empty);
    }
    let n = point_count(family, d, kappa)?;
    if n > node_budget {
        return Err(MdmError::Resource(format!(
            "Smolyak rule d = {d}, level {kappa} has {n} nodes, budget {node_budget}"
        )));
    }
    let top = (kappa - d as i64 + 1) as u32;
    let levels: Vec<Vec<(NodeKey, f64, f64)>> =
        (0..=top).map(|i| univariate_nodes(family, i)).collect();
    // global ids for univariate nodes
    let mut ids: HashMap<NodeKey, u32> = HashMap::new();
    let mut coord_of: Vec<f64> = Vec::new();
    let mut by_level: Vec<Vec<(u32, f64)>> = Vec::with_capacity(levels.len());
    for lv in &levels {
        let mut v = Vec::with_capacity(lv.len());
        for &(key, x, w) in lv {
            let id = *ids.entry(key).or_insert_with(|| {
                coord_of.push(x);
                (coord_of.len() - 1) as u32
            });
            v.push((id, w));
        }
        by_level.push(v);
    }
    let mut key_list: Vec<NodeKey> = vec![NodeKey { num: 0, den: 1 }; coord_of.len()];
    for (k, &id) in &ids {
        key_list[id as usize] = *k;
    }

    let mut acc: HashMap<Vec<u32>, CompensatedSum> = HashMap::with_capacity(n as usize);
    let mut cur_ids = vec![0u32; d];
    for_each_index(d, kappa - d as i64 + 1, kappa, &mut |idx: &[u32]| {
        let s: i64 = idx.iter().map(|&i| i as i64).sum();
        let r = kappa - s;
        let coef = if r % 2 == 0 { 1.0 } else { -1.0 } * binomial(d as i64 - 1, r);
        tensor(&by_level, idx, 0, coef, &mut cur_ids, &mut acc);
    });

    let mut entries: Vec<(Vec<u32>, f64)> = acc.into_iter().map(|(k, s)| (k, s.value())).collect();
    entries.sort_by(|a, b| {
        let ka = a.0.iter().map(|&i| key_list[i as usize]);
        let kb = b.0.iter().map(|&i| key_list[i as usize]);
        ka.cmp(kb)
    });
    let mut points = Vec::with_capacity(entries.len() * d);
    let mut weights = Vec::with_capacity(entries.len());
    for (k, w) in entries {
        points.extend(k.iter().map(|&i| coord_of[i as usize]));
        weights.push(w);
    }
    Ok(QuadratureRule {
        points,
        weights,
        ..empty
    })
}

fn tensor(
    by_level: &[Vec<(u32, f64)>],
    idx: &[u32],
    pos: usize,
    w: f64,
    cur: &mut Vec<u32>,
    acc: &mut HashMap<Vec<u32>, CompensatedSum>,
) {
    if pos == idx.len() {
        acc.entry(cur.clone()).or_default().add(w);
        return;
    }
    for &(id, wi) in &by_level[idx[pos] as usize] {
        cur[pos] = id;
        tensor(by_level, idx, pos + 1, w * wi, cur, acc);
    }
}

/// Univariate nodes grouped by the set of levels `1..=top` containing them:
/// `(level mask, number of nodes)`.
fn level_signatures(family: UnivariateFamily, top: u32) -> Result<Vec<(u64, u128)>> {
    match family {
        UnivariateFamily::AnchoredUnit => {
            let all = if top == 0 { 0 } else { (1u64 << (top + 1)) - 2 };
            let mut v = vec![(all, 2u128)];
            for m in 2..=top {
                // odd/2^m appears from level m on
                let mask = all & !((1u64 << m) - 1);
                v.push((mask, 1u128 << (m - 1)));
            }
            Ok(v)
        }
        UnivariateFamily::ExpWeighted => {
            if top > 40 {
                return Err(MdmError::Unsupported(format!(
                    "exponentially weighted point counts need level <= 40, got {top}"
                )));
            }
            // reduced denominators b > 1 of k/(2^i+1); phi(b) numerators each
            let mut masks: HashMap<u64, u64> = HashMap::new();
            for i in 1..=top {
                for b in divisors((1u64 << i) + 1) {
                    if b > 1 {
                        *masks.entry(b).or_insert(0) |= 1u64 << i;
                    }
                }
            }
            let mut v: Vec<(u64, u128)> = masks
                .into_iter()
                .map(|(b, m)| (m, totient(b) as u128))
                .collect();
            v.sort_unstable();
            Ok(v)
        }
    }
}

fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut f = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p) {
            let mut e = 0;
            while n.is_multiple_of(p) {
                n /= p;
                e += 1;
            }
            f.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        f.push((n, 1));
    }
    f
}

fn divisors(n: u64) -> Vec<u64> {
    let mut d = vec![1u64];
    for (p, e) in factorize(n) {
        let cur = d.clone();
        let mut pk = 1;
        for _ in 0..e {
            pk *= p;
            d.extend(cur.iter().map(|x| x * pk));
        }
    }
    d
}

fn totient(n: u64) -> u64 {
    factorize(n)
        .into_iter()
        .fold(n, |acc, (p, _)| acc / p * (p - 1))
}

/// Number of distinct nodes of `Q_{d,κ}` not lying on an anchored coordinate.
///
/// A node belongs to the rule iff some multi-index in `P(d,κ)` produces it; the
/// count runs a dynamic program over coordinates whose state is the set of
/// reachable partial level sums.
pub fn point_count(family: UnivariateFamily, d: usize, kappa: i64) -> Result<u128> {
    if d == 0 {
        return Err(MdmError::Config("point counts need d >= 1".into()));
    }
    if kappa < d as i64 {
        return Ok(0);
    }
    if kappa > 62 {
        return Err(MdmError::Unsupported(format!("level {kappa} exceeds 62")));
    }
    let k = kappa as u32;
    let top = k - d as u32 + 1;
    let sigs = level_signatures(family, top)?;
    let cap = (1u64 << (k + 1)) - 1; // sums 0..=κ
    let mut states: HashMap<u64, u128> = HashMap::from([(1u64, 1u128)]);
    for _ in 0..d {
        let mut next: HashMap<u64, u128> = HashMap::new();
        for (&state, &cnt) in &states {
            for &(mask, c) in &sigs {
                let mut s = 0u64;
                let mut m = mask;
                while m != 0 {
                    let i = m.trailing_zeros();
                    s |= state << i;
                    m &= m - 1;
                }
                s &= cap;
                if s != 0 {
                    let e = next.entry(s).or_insert(0);
                    *e = e
                        .checked_add(cnt.checked_mul(c).ok_or_else(overflow)?)
                        .ok_or_else(overflow)?;
                }
            }
        }
        states = next;
    }
    let lo = k - d as u32 + 1;
    let want = cap & !((1u64 << lo) - 1);
    Ok(states
        .into_iter()
        .filter(|(s, _)| s & want != 0)
        .map(|(_, c)| c)
        .sum())
}

fn overflow() -> MdmError {
    MdmError::Overflow("point count exceeds u128".into())
}

/// Norm of the `d`-variate integration functional, the error of the zero rule.
pub fn zero_rule_error(family: UnivariateFamily, d: usize) -> f64 {
    match family {
        UnivariateFamily::AnchoredUnit => 12f64.powf(-(d as f64) / 2.0),
        UnivariateFamily::ExpWeighted => 1.0,
    }
}

/// Worst-case error bound of `Q_{d,κ}` on the unit ball of the mixed
/// first-derivative space; the zero-rule norm when `κ < d`.
pub fn error_bound(family: UnivariateFamily, d: usize, kappa: i64) -> f64 {
    if kappa < d as i64 {
        return zero_rule_error(family, d);
    }
    let c = binomial(kappa, d as i64 - 1);
    match family {
        UnivariateFamily::AnchoredUnit => {
            2f64.powi(-(kappa as i32) - 1) * 3f64.powf(-(d as f64) / 2.0) * c.sqrt()
        }
        UnivariateFamily::ExpWeighted => {
            EXP_WEIGHTED_C1 * 2f64.powi(-((kappa - d as i64 + 1) as i32)) * c
        }
    }
}

/// Worst-case error of the univariate anchored trapezoid `U_i`: the `L²` norm
/// of the kernel `K_i(t) = (t_k + t_{k+1})/2 - t` on `[t_k, t_{k+1})`,
/// integrated cell by cell in closed form (`(b-a)^3/12` per cell).
pub fn univariate_kernel_norm(i: u32) -> f64 {
    let m = 1u64 << i;
    let cells = (0..m).map(|k| {
        let a = -0.5 + k as f64 / m as f64;
        let b = -0.5 + (k + 1) as f64 / m as f64;
        (b - a).powi(3) / 12.0
    });
    crate::math::compensated_sum(cells).sqrt()
}

/// Thread-safe cache of rules keyed by `(family, d, κ)`.
#[derive(Debug, Default)]
pub struct RuleCache {
    rules: RwLock<HashMap<(UnivariateFamily, usize, i64), Arc<QuadratureRule>>>,
    node_budget: Option<u128>,
}

impl RuleCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_budget(node_budget: u128) -> Self {
        Self {
            rules: RwLock::default(),
            node_budget: Some(node_budget),
        }
    }

    pub fn get(
        &self,
        family: UnivariateFamily,
        d: usize,
        kappa: i64,
    ) -> Result<Arc<QuadratureRule>> {
        let key = (family, d, kappa);
        if let Some(r) = self.rules.read().expect("rule cache poisoned").get(&key) {
            return Ok(r.clone());
        }
        let rule = Arc::new(smolyak_rule_with_budget(
            family,
            d,
            kappa,
            self.node_budget.unwrap_or(DEFAULT_NODE_BUDGET),
        )?);
        let mut w = self.rules.write().expect("rule cache poisoned");
        Ok(w.entry(key).or_insert(rule).clone())
    }
}
