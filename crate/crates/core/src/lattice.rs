//! Randomly shifted rank-1 lattice rules on `[-1/2, 1/2]^d`.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MdmError, Result};
use crate::math::{gcd, is_prime, zeta, CompensatedSum};

pub const DEFAULT_SHIFTS: usize = 8;
pub const DEFAULT_Q: f64 = 0.9;

/// `G_{u,q} = 2^q (2ζ(1/q)/(2π²)^{1/(2q)} + 12^{-1/(2q)})^{|u| q}` for `q in [1/2, 1)`.
pub fn lattice_g(len: usize, q: f64) -> f64 {
    let pi2 = std::f64::consts::PI.powi(2);
    let base =
        2.0 * zeta(1.0 / q) / (2.0 * pi2).powf(1.0 / (2.0 * q)) + 12f64.powf(-1.0 / (2.0 * q));
    2f64.powf(q) * base.powf(len as f64 * q)
}

/// Shift average of the anchored kernel `min(|x|,|y|)·[xy > 0]` over the torus;
/// depends only on `t = {x - y}`.
pub fn shift_averaged_kernel(t: f64) -> f64 {
    (t - 0.5) * (t - 0.5)
}

/// Mean-square worst-case error over uniform shifts of the rank-1 lattice
/// `{k z/n}`, product form:
/// `(1/n) sum_k prod_j ω({k z_j / n}) - 12^{-s}`.
pub fn cbc_criterion(n: u64, z: &[u64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for k in 0..n {
        let p: f64 = z
            .iter()
            .map(|&zj| shift_averaged_kernel(mul_mod(k, zj, n) as f64 / n as f64))
            .product();
        acc.add(p);
    }
    acc.value() / n as f64 - 12f64.powi(-(z.len() as i32))
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn generating_vector_cache() -> &'static Mutex<HashMap<u64, Vec<u64>>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Vec<u64>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Plain component-by-component construction of `z` for `n` points.
///
/// Each component minimizes [`cbc_criterion`] given the earlier ones; the
/// candidate set is `1..=(n-1)/2` since `z` and `n - z` give the same value.
/// Ties (within `1e-12` relative) go to the smallest candidate. Vectors are
/// cached per `n` and extended on demand; the greedy choice makes a shorter
/// vector a prefix of a longer one.
pub fn cbc_construct(n: u64, d: usize) -> Result<Vec<u64>> {
    if n < 3 || !is_prime(n) {
        return Err(MdmError::NotPrime(n));
    }
    if let Some(z) = generating_vector_cache()
        .lock()
        .expect("generating vector cache poisoned")
        .get(&n)
    {
        if z.len() >= d {
            return Ok(z[..d].to_vec());
        }
    }
    let z = cbc_extend(n, d);
    let mut cache = generating_vector_cache()
        .lock()
        .expect("generating vector cache poisoned");
    let entry = cache.entry(n).or_default();
    if entry.len() < z.len() {
        *entry = z.clone();
    }
    Ok(z)
}

fn cbc_extend(n: u64, d: usize) -> Vec<u64> {
    let mut prod = vec![1.0f64; n as usize];
    let mut z = Vec::with_capacity(d);
    let half = (n - 1) / 2;
    let omega: Vec<f64> = (0..n)
        .map(|k| shift_averaged_kernel(k as f64 / n as f64))
        .collect();
    for _ in 0..d {
        let scores: Vec<f64> = (1..=half)
            .into_par_iter()
            .map(|c| {
                let mut acc = CompensatedSum::new();
                for k in 0..n {
                    acc.add(prod[k as usize] * omega[mul_mod(k, c, n) as usize]);
                }
                acc.value()
            })
            .collect();
        let best = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let pick = scores
            .iter()
            .position(|&s| s <= best + 1e-12 * best.abs())
            .expect("non-empty candidate set") as u64
            + 1;
        for k in 0..n {
            prod[k as usize] *= omega[mul_mod(k, pick, n) as usize];
        }
        z.push(pick);
    }
    z
}

/// Writes `"n d z_1 ... z_d"`.
pub fn format_generating_vector(n: u64, z: &[u64]) -> String {
    let mut s = format!("{n} {}", z.len());
    for zj in z {
        s.push(' ');
        s.push_str(&zj.to_string());
    }
    s
}

/// Parses `"n d z_1 ... z_d"`.
pub fn parse_generating_vector(text: &str) -> Result<(u64, Vec<u64>)> {
    let nums: std::result::Result<Vec<u64>, _> =
        text.split_whitespace().map(str::parse::<u64>).collect();
    let nums = nums.map_err(|e| MdmError::Parse(format!("generating vector: {e}")))?;
    if nums.len() < 2 {
        return Err(MdmError::Parse("generating vector needs n and d".into()));
    }
    let (n, d) = (nums[0], nums[1] as usize);
    if nums.len() != d + 2 {
        return Err(MdmError::Parse(format!(
            "generating vector declares d = {d} but lists {} components",
            nums.len() - 2
        )));
    }
    Ok((n, nums[2..].to_vec()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeRule {
    pub n: u64,
    pub z: Vec<u64>,
    pub shifts: Vec<Vec<f64>>,
    pub seed: u64,
}

impl LatticeRule {
    /// `m` shifts drawn from a ChaCha8 stream seeded with `seed`; with
    /// `antithetic` the shifts come in pairs `Δ, 1 - Δ`.
    pub fn new(n: u64, z: Vec<u64>, m: usize, seed: u64, antithetic: bool) -> Result<Self> {
        if n < 3 || !is_prime(n) {
            return Err(MdmError::NotPrime(n));
        }
        if let Some(&bad) = z.iter().find(|&&zj| zj == 0 || zj >= n || gcd(zj, n) != 1) {
            return Err(MdmError::Config(format!(
                "generating vector component {bad} is not a unit modulo {n}"
            )));
        }
        if m < 2 {
            return Err(MdmError::Config(
                "at least two random shifts are needed".into(),
            ));
        }
        let d = z.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shifts = Vec::with_capacity(m);
        while shifts.len() < m {
            let s: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
            if antithetic {
                let r: Vec<f64> = s
                    .iter()
                    .map(|x| if *x == 0.0 { 0.0 } else { 1.0 - x })
                    .collect();
                shifts.push(s);
                if shifts.len() < m {
                    shifts.push(r);
                }
            } else {
                shifts.push(s);
            }
        }
        Ok(Self { n, z, shifts, seed })
    }

    /// CBC generating vector with default shifts.
    pub fn cbc(n: u64, d: usize, seed: u64) -> Result<Self> {
        Self::new(n, cbc_construct(n, d)?, DEFAULT_SHIFTS, seed, false)
    }

    pub fn dimension(&self) -> usize {
        self.z.len()
    }

    /// The `i`-th point (`i = 1..=n`) for shift `s`, written into `out`.
    pub fn point_into(&self, s: usize, i: u64, out: &mut [f64]) {
        let delta = &self.shifts[s];
        for (j, &zj) in self.z.iter().enumerate() {
            let mut t = mul_mod(i, zj, self.n) as f64 / self.n as f64 + delta[j];
            if t >= 1.0 {
                t -= 1.0;
            }
            out[j] = t - 0.5;
        }
    }

    /// Points for shift `s`, row-major.
    pub fn shifted_points(&self, s: usize) -> Vec<f64> {
        let d = self.dimension();
        let mut v = vec![0.0; self.n as usize * d];
        for i in 1..=self.n {
            let k = (i - 1) as usize;
            self.point_into(s, i, &mut v[k * d..(k + 1) * d]);
        }
        v
    }

    /// Per-shift equal-weight averages, in shift order.
    pub fn shift_estimates<F>(&self, mut g: F) -> Result<Vec<f64>>
    where
        F: FnMut(&[f64]) -> Result<f64>,
    {
        let mut x = vec![0.0; self.dimension()];
        let mut out = Vec::with_capacity(self.shifts.len());
        for s in 0..self.shifts.len() {
            let mut acc = CompensatedSum::new();
            for i in 1..=self.n {
                self.point_into(s, i, &mut x);
                acc.add(g(&x)?);
            }
            out.push(acc.value() / self.n as f64);
        }
        Ok(out)
    }
}

/// All points of all shifts: `points[s]` holds shift `s`, row-major.
pub fn lattice_points(rule: &LatticeRule) -> Vec<Vec<f64>> {
    (0..rule.shifts.len())
        .map(|s| rule.shifted_points(s))
        .collect()
}

/// Mean over shifts and its standard error.
pub fn summarize_shifts(per_shift: &[f64]) -> (f64, f64) {
    let m = per_shift.len() as f64;
    let mean = per_shift.iter().sum::<f64>() / m;
    if per_shift.len() < 2 {
        return (mean, 0.0);
    }
    let var = per_shift.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// `(estimate, rms)`: shifts are integrated in parallel and reduced in shift order.
pub fn lattice_integrate<G>(rule: &LatticeRule, g: G) -> Result<(f64, f64)>
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    let d = rule.dimension();
    let per: Vec<Result<f64>> = (0..rule.shifts.len())
        .into_par_iter()
        .map(|s| {
            let mut x = vec![0.0; d];
            let mut acc = CompensatedSum::new();
            for i in 1..=rule.n {
                rule.point_into(s, i, &mut x);
                let y = g(&x);
                if !y.is_finite() {
                    return Err(MdmError::NonFinite {
                        value: y,
                        context: format!("lattice point {x:?}"),
                    });
                }
                acc.add(y);
            }
            Ok(acc.value() / rule.n as f64)
        })
        .collect();
    let per: Vec<f64> = per.into_iter().collect::<Result<_>>()?;
    Ok(summarize_shifts(&per))
}
