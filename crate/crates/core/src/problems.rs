//! Built-in test problems, their bounds models and reference values.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::active_set::{example_label_cap, BoundsModel, NormModel, ProductWeights};
use crate::decomposition::{CostModel, Domain, SharedIntegrand};
use crate::error::{MdmError, Result};
use crate::math::{composite_gauss, gauss_legendre, zeta, CompensatedSum};
use crate::subset::Subset;

/// Second moment of the uniform distribution on `[-1/2, 1/2]`.
pub const UNIT_SECOND_MOMENT: f64 = 1.0 / 12.0;

/// `1 - π²/12`, the lower bound of `1 + sum_j x_j/j²`.
pub fn motivating_margin() -> f64 {
    1.0 - PI * PI / 12.0
}

/// Coefficients `λ_j` of `f(x) = sum_j λ_j x_j²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum LambdaSequence {
    /// `λ_j = j^{-p}`, `p > 1`
    Power { p: f64 },
    /// `λ_j = r^j`, `0 < r < 1`
    Geometric { r: f64 },
    /// `λ_1, ..., λ_L`, zero beyond
    Explicit { values: Vec<f64> },
}

impl LambdaSequence {
    pub fn validate(&self) -> Result<()> {
        match self {
            LambdaSequence::Power { p } if !(*p > 1.0) => Err(MdmError::Config(format!(
                "lambda_j = j^-p needs p > 1 for a finite sum, got {p}"
            ))),
            LambdaSequence::Geometric { r } if !(*r > 0.0 && *r < 1.0) => Err(MdmError::Config(
                format!("geometric ratio {r} must lie in (0, 1)"),
            )),
            LambdaSequence::Explicit { values }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) =>
            {
                Err(MdmError::Config(
                    "explicit lambda values must be finite and >= 0".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    pub fn lambda(&self, j: usize) -> f64 {
        match self {
            LambdaSequence::Power { p } => (j as f64).powf(-p),
            LambdaSequence::Geometric { r } => r.powi(j as i32),
            LambdaSequence::Explicit { values } => values.get(j - 1).copied().unwrap_or(0.0),
        }
    }

    pub fn total(&self) -> f64 {
        match self {
            LambdaSequence::Power { p } => zeta(*p),
            LambdaSequence::Geometric { r } => r / (1.0 - r),
            LambdaSequence::Explicit { values } => values.iter().sum(),
        }
    }

    pub fn partial(&self, d: usize) -> f64 {
        (1..=d)
            .map(|j| self.lambda(j))
            .collect::<CompensatedSum>()
            .value()
    }
}

/// Anchor values for the coordinates beyond the integrated ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorTail {
    Zero,
    Constant(f64),
    /// `a_{d+1}, a_{d+2}, ...`; zero after the list.
    Explicit(Vec<f64>),
}

impl AnchorTail {
    fn get(&self, offset: usize) -> f64 {
        match self {
            AnchorTail::Zero => 0.0,
            AnchorTail::Constant(a) => *a,
            AnchorTail::Explicit(v) => v.get(offset).copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "name", deny_unknown_fields)]
pub enum BuiltinProblem {
    /// `f(x) = 1/(1 + sum_j x_j/j²)` on `[-1/2, 1/2]^N`.
    Motivating,
    /// `f(x) = sum_j λ_j x_j²` on `[-1/2, 1/2]^N`.
    Quadratic { lambda: LambdaSequence },
    /// A decomposition of the zero function into hat functions whose
    /// partial integrals do not converge to the integral of the limit.
    Hat,
    /// Additive integrand whose first-order terms have norm exactly `B_{{j}}`
    /// under POD bounds.
    PodSynthetic {
        b1: f64,
        b2: f64,
        mu: f64,
        kappa: f64,
        domain: Domain,
    },
}

/// How the label set is cut for a given `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truncation {
    None,
    /// Labels above `example_label_cap(ε)` are dropped and the error budget is
    /// split into equal thirds for truncation, neglected terms and quadrature.
    ExampleLabelCap,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: Domain,
    pub integrand: SharedIntegrand,
    pub bounds: BoundsModel,
    pub norm: NormModel,
    pub cost: CostModel,
    pub reference: Option<f64>,
    pub truncation: Truncation,
    /// Set when the problem must not be integrated; holds the reason.
    pub refusal: Option<String>,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("bounds", &self.bounds)
            .field("norm", &self.norm)
            .field("cost", &self.cost)
            .field("reference", &self.reference)
            .field("truncation", &self.truncation)
            .field("refusal", &self.refusal)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// `(label cap, tail budget, quadrature budget)` for a target `ε`.
    pub fn budgets(&self, eps: f64) -> (Option<usize>, f64, f64) {
        match self.truncation {
            Truncation::None => (None, eps / 2.0, eps / 2.0),
            Truncation::ExampleLabelCap => (Some(example_label_cap(eps)), eps / 3.0, eps / 3.0),
        }
    }

    /// Bound on the error from dropping labels beyond the cap.
    pub fn truncation_bound(&self, eps: f64) -> f64 {
        match self.truncation {
            Truncation::None => 0.0,
            Truncation::ExampleLabelCap => {
                let l = example_label_cap(eps) as f64;
                motivating_margin().powi(-3) / 36.0 * l.powi(-3)
            }
        }
    }
}

fn motivating_f(labels: &[usize], x: &[f64]) -> f64 {
    let s: f64 = labels
        .iter()
        .zip(x)
        .map(|(&j, &xj)| xj / (j * j) as f64)
        .sum();
    1.0 / (1.0 + s)
}

/// `∂^{|u|} f(x_u; 0) / ∂x_u = (-1)^{|u|} |u|! / (prod_j j² (1 + sum_j x_j/j²)^{|u|+1})`
pub fn motivating_mixed_derivative(labels: &[usize], x: &[f64]) -> f64 {
    let n = labels.len();
    let s: f64 = labels
        .iter()
        .zip(x)
        .map(|(&j, &xj)| xj / (j * j) as f64)
        .sum();
    let prod_j2: f64 = labels.iter().map(|&j| (j * j) as f64).product();
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * crate::math::factorial(n) / (prod_j2 * (1.0 + s).powi(n as i32 + 1))
}

fn unit_profile(x: f64) -> f64 {
    x.exp_m1() / 1f64.sinh().sqrt()
}

fn half_line_profile(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// `ψ_k(t) = 2^{k+1} (1 - |2^{k+1} t - 1|)_+`, a hat on `[0, 2^{-k}]` with unit integral.
pub fn hat(k: u32, t: f64) -> f64 {
    let s = 2f64.powi(k as i32 + 1);
    s * (1.0 - (s * t - 1.0).abs()).max(0.0)
}

/// Term `f_{{1..k}}(x_1)` of the hat decomposition.
pub fn hat_term(k: u32, x1: f64) -> f64 {
    if k == 1 {
        hat(1, x1)
    } else {
        hat(k, x1) - hat(k - 1, x1)
    }
}

/// Integral of `f_{{1..k}}` over `[-1/2, 1/2]`, by the trapezoid rule on the
/// breakpoints, which is exact for piecewise-linear functions.
pub fn hat_integrals(k: u32) -> f64 {
    assert!(k >= 1, "hat terms start at k = 1");
    let mut br: Vec<f64> = vec![-0.5, 0.5];
    for m in [k.saturating_sub(1).max(1), k] {
        let w = 2f64.powi(-(m as i32));
        br.extend([0.0, 0.5 * w, w]);
    }
    br.sort_by(|a, b| a.partial_cmp(b).unwrap());
    br.dedup();
    br.windows(2)
        .map(|p| 0.5 * (p[1] - p[0]) * (hat_term(k, p[0]) + hat_term(k, p[1])))
        .collect::<CompensatedSum>()
        .value()
}

/// `sum_{u ⊆ {1..d}} I_u(f_u)` for the hat decomposition.
pub fn hat_partial_sum(d: u32) -> f64 {
    (1..=d).map(hat_integrals).sum()
}

pub const HAT_REFUSAL: &str = "the hat decomposition of the zero function converges pointwise but \
not dominantly: its term integrals sum to 1 for every d while the function is 0, so dominated \
convergence fails and the decomposition cannot be integrated term by term";

/// Norm of point evaluation at `x_u` in the anchored Sobolev space:
/// `prod_j K(x_j, x_j)^{1/2} = prod_j |x_j|^{1/2}`.
pub fn point_eval_norm(u: &Subset, x: &[f64]) -> Result<f64> {
    if u.len() != x.len() {
        return Err(MdmError::InvalidSubset(format!(
            "{} coordinates for subset {u}",
            x.len()
        )));
    }
    Ok(x.iter().map(|v| v.abs().sqrt()).product())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValue {
    pub value: f64,
    /// Claimed accuracy of `value`.
    pub tolerance: f64,
    pub certified: bool,
    pub label_cap: Option<usize>,
    /// Difference between the two truncation levels, when compared.
    pub dual_truncation_gap: Option<f64>,
    pub method: String,
}

impl BuiltinProblem {
    pub fn name(&self) -> &'static str {
        match self {
            BuiltinProblem::Motivating => "motivating",
            BuiltinProblem::Quadratic { .. } => "quadratic",
            BuiltinProblem::Hat => "hat",
            BuiltinProblem::PodSynthetic { .. } => "pod-synthetic",
        }
    }

    pub fn spec(&self) -> Result<ProblemSpec> {
        let unit = NormModel::for_domain(Domain::SymmetricUnit);
        let spec = match self {
            BuiltinProblem::Motivating => {
                let m = motivating_margin();
                ProblemSpec {
                    name: self.name().into(),
                    domain: Domain::SymmetricUnit,
                    integrand: Arc::new(motivating_f),
                    bounds: BoundsModel::Pod {
                        b1: 1.0,
                        b2: 2.0,
                        mu: 1.0 / m,
                        kappa: m.sqrt(),
                    },
                    norm: unit,
                    cost: CostModel::default(),
                    reference: None,
                    truncation: Truncation::ExampleLabelCap,
                    refusal: None,
                }
            }
            BuiltinProblem::Quadratic { lambda } => {
                lambda.validate()?;
                let lam = lambda.clone();
                let f = move |labels: &[usize], x: &[f64]| -> f64 {
                    labels
                        .iter()
                        .zip(x)
                        .map(|(&j, &xj)| lam.lambda(j) * xj * xj)
                        .collect::<CompensatedSum>()
                        .value()
                };
                // ||f_{j}|| = ||2 λ_j x||_{L2} = λ_j / √3; higher terms vanish
                let s3 = 3f64.sqrt();
                let bounds = match lambda {
                    LambdaSequence::Power { p } => BoundsModel::Pod {
                        b1: 0.0,
                        b2: *p,
                        mu: 1.0,
                        kappa: 3f64.powf(0.5 / p),
                    },
                    LambdaSequence::Geometric { r } => BoundsModel::Product {
                        mu: 1.0,
                        weights: ProductWeights::Geometric {
                            scale: 1.0 / s3,
                            ratio: *r,
                        },
                    },
                    LambdaSequence::Explicit { values } => BoundsModel::Product {
                        mu: 1.0,
                        weights: ProductWeights::Explicit(values.iter().map(|v| v / s3).collect()),
                    },
                };
                ProblemSpec {
                    name: self.name().into(),
                    domain: Domain::SymmetricUnit,
                    integrand: Arc::new(f),
                    bounds,
                    norm: unit,
                    cost: CostModel::default(),
                    reference: Some(UNIT_SECOND_MOMENT * lambda.total()),
                    truncation: Truncation::None,
                    refusal: None,
                }
            }
            BuiltinProblem::Hat => ProblemSpec {
                name: self.name().into(),
                domain: Domain::SymmetricUnit,
                integrand: Arc::new(|_: &[usize], _: &[f64]| 0.0),
                bounds: BoundsModel::Pod {
                    b1: 0.0,
                    b2: 2.0,
                    mu: 1.0,
                    kappa: 1.0,
                },
                norm: unit,
                cost: CostModel::default(),
                reference: Some(0.0),
                truncation: Truncation::None,
                refusal: Some(HAT_REFUSAL.into()),
            },
            BuiltinProblem::PodSynthetic {
                b1,
                b2,
                mu,
                kappa,
                domain,
            } => {
                let bounds = BoundsModel::Pod {
                    b1: *b1,
                    b2: *b2,
                    mu: *mu,
                    kappa: *kappa,
                };
                bounds.validate()?;
                let (mu, kappa, b2) = (*mu, *kappa, *b2);
                let profile: fn(f64) -> f64 = match domain {
                    Domain::SymmetricUnit => unit_profile,
                    Domain::HalfLineExp => half_line_profile,
                };
                let f = move |labels: &[usize], x: &[f64]| -> f64 {
                    labels
                        .iter()
                        .zip(x)
                        .map(|(&j, &xj)| mu * (kappa * j as f64).powf(-b2) * profile(xj))
                        .collect::<CompensatedSum>()
                        .value()
                };
                let profile_integral = match domain {
                    Domain::SymmetricUnit => (2.0 * 0.5f64.sinh() - 1.0) / 1f64.sinh().sqrt(),
                    Domain::HalfLineExp => 0.5,
                };
                ProblemSpec {
                    name: self.name().into(),
                    domain: *domain,
                    integrand: Arc::new(f),
                    bounds,
                    norm: NormModel::for_domain(*domain),
                    cost: CostModel::default(),
                    reference: Some(mu * kappa.powf(-b2) * zeta(b2) * profile_integral),
                    truncation: Truncation::None,
                    refusal: None,
                }
            }
        };
        Ok(spec)
    }

    /// Reference value of the integral with accuracy `tol`.
    pub fn reference_value(&self, tol: f64) -> Result<ReferenceValue> {
        if !(tol > 0.0) {
            return Err(MdmError::Config(format!(
                "tolerance {tol} must be positive"
            )));
        }
        match self {
            BuiltinProblem::Motivating => motivating_reference(tol),
            BuiltinProblem::Hat => Err(MdmError::Refused(HAT_REFUSAL.into())),
            _ => {
                let spec = self.spec()?;
                Ok(ReferenceValue {
                    value: spec.reference.expect("closed form"),
                    tolerance: 1e-15 * spec.reference.unwrap().abs().max(1.0),
                    certified: true,
                    label_cap: None,
                    dual_truncation_gap: None,
                    method: "closed form".into(),
                })
            }
        }
    }

    /// `∫_{D^d} f(x_1..x_d, a_{d+1}, ...) dx`.
    pub fn anchored_truncated_integral(&self, d: usize, tail: &AnchorTail) -> Result<f64> {
        match self {
            BuiltinProblem::Quadratic { lambda } => {
                lambda.validate()?;
                let head = UNIT_SECOND_MOMENT * lambda.partial(d);
                let rest = match tail {
                    AnchorTail::Zero => 0.0,
                    AnchorTail::Constant(a) => a * a * (lambda.total() - lambda.partial(d)),
                    AnchorTail::Explicit(v) => v
                        .iter()
                        .enumerate()
                        .map(|(k, a)| lambda.lambda(d + 1 + k) * a * a)
                        .sum(),
                };
                Ok(head + rest)
            }
            BuiltinProblem::Motivating if d <= 4 => {
                let shift = match tail {
                    AnchorTail::Zero => 0.0,
                    AnchorTail::Constant(a) => {
                        let head: f64 = (1..=d).map(|j| 1.0 / (j * j) as f64).sum();
                        a * (PI * PI / 6.0 - head)
                    }
                    AnchorTail::Explicit(v) => v
                        .iter()
                        .enumerate()
                        .map(|(k, a)| a / ((d + 1 + k) * (d + 1 + k)) as f64)
                        .sum(),
                };
                for k in 0.. {
                    let a = match tail {
                        AnchorTail::Explicit(v) if k >= v.len() => break,
                        AnchorTail::Explicit(_) | AnchorTail::Constant(_) => tail.get(k),
                        AnchorTail::Zero => break,
                    };
                    if !Domain::SymmetricUnit.contains(a) {
                        return Err(MdmError::Domain {
                            index: d + 1 + k,
                            value: a,
                            domain: Domain::SymmetricUnit.name(),
                        });
                    }
                    if matches!(tail, AnchorTail::Constant(_)) {
                        break;
                    }
                }
                Ok(dense_motivating(d, shift))
            }
            _ => Err(MdmError::Unsupported(format!(
                "anchored truncated integral of {} in {d} dimensions",
                self.name()
            ))),
        }
    }
}

/// `∫_{[-1/2,1/2]^d} 1/(1 + c + sum_j x_j/j²) dx` by a tensor Gauss–Legendre rule.
fn dense_motivating(d: usize, c: f64) -> f64 {
    let (z, w) = gauss_legendre(12);
    let panels = 2;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for p in 0..panels {
        let lo = -0.5 + p as f64 / panels as f64;
        let h = 1.0 / panels as f64;
        for (zi, wi) in z.iter().zip(&w) {
            nodes.push(lo + 0.5 * h * (zi + 1.0));
            weights.push(0.5 * h * wi);
        }
    }
    let m = nodes.len();
    let mut acc = CompensatedSum::new();
    let total = m.pow(d as u32);
    for idx in 0..total {
        let mut r = idx;
        let mut s = 1.0 + c;
        let mut wt = 1.0;
        for j in 1..=d {
            let k = r % m;
            r /= m;
            s += nodes[k] / (j * j) as f64;
            wt *= weights[k];
        }
        acc.add(wt / s);
    }
    acc.value()
}

fn sinhc(a: f64) -> f64 {
    if a.abs() < 1e-4 {
        1.0 + a * a / 6.0 * (1.0 + a * a / 20.0)
    } else {
        a.sinh() / a
    }
}

/// `∫_{[-1/2,1/2]^ℓ} 1/(1 + sum_{j<=ℓ} x_j/j²) dx` by the Laplace identity
/// `1/s = ∫_0^inf e^{-ts} dt`, which turns the `ℓ`-variate integral into
/// `∫_0^inf e^{-t} prod_{j<=ℓ} sinhc(t/(2j²)) dt`. The integrand is below
/// `e^{-(1-π²/12) t}`, which fixes the cut-off; panels are doubled until two
/// successive results agree to `tol/4`.
pub fn motivating_truncated_integral(l: usize, tol: f64) -> Result<f64> {
    let c = motivating_margin();
    let upper = ((1.0 / (c * tol * 1e-3)).ln() / c).max(1.0);
    let g = |t: f64| -> f64 {
        let mut p = (-t).exp();
        for j in 1..=l {
            p *= sinhc(t / (2 * j * j) as f64);
        }
        p
    };
    let mut panels = 16;
    let mut prev = composite_gauss(g, 0.0, upper, panels, 10);
    while panels < 1 << 16 {
        panels *= 2;
        let cur = composite_gauss(g, 0.0, upper, panels, 10);
        if (cur - prev).abs() < tol / 4.0 {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(MdmError::Resource(format!(
        "reference ladder for {l} variables did not settle to {tol}"
    )))
}

fn motivating_reference(tol: f64) -> Result<ReferenceValue> {
    let l = example_label_cap(tol / 2.0);
    if l > 100_000 {
        return Err(MdmError::Resource(format!(
            "tolerance {tol} needs {l} variables"
        )));
    }
    let a = motivating_truncated_integral(l, tol / 4.0)?;
    let b = motivating_truncated_integral(l + 2, tol / 4.0)?;
    let gap = (a - b).abs();
    Ok(ReferenceValue {
        value: a,
        tolerance: tol,
        certified: gap <= tol,
        label_cap: Some(l),
        dual_truncation_gap: Some(gap),
        method: "label truncation with a one-dimensional Laplace-transform quadrature".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_references() {
        let p = BuiltinProblem::Quadratic {
            lambda: LambdaSequence::Geometric { r: 0.5 },
        };
        assert!((p.reference_value(1e-6).unwrap().value - 1.0 / 12.0).abs() < 1e-15);
        let p = BuiltinProblem::Quadratic {
            lambda: LambdaSequence::Power { p: 4.0 },
        };
        assert!((p.reference_value(1e-6).unwrap().value - PI.powi(4) / 1080.0).abs() < 1e-15);
    }

    #[test]
    fn quadratic_anchored_integrals() {
        let lam = LambdaSequence::Geometric { r: 0.5 };
        let p = BuiltinProblem::Quadratic {
            lambda: lam.clone(),
        };
        for d in 0..8 {
            let want = lam.partial(d) / 12.0;
            let got = p.anchored_truncated_integral(d, &AnchorTail::Zero).unwrap();
            assert!((got - want).abs() < 1e-15);
        }
        let a = 0.4;
        let mut prev_gap = f64::INFINITY;
        for d in [0, 2, 5, 10, 20, 40] {
            let got = p
                .anchored_truncated_integral(d, &AnchorTail::Constant(a))
                .unwrap();
            let want = lam.partial(d) / 12.0 + a * a * (1.0 - lam.partial(d));
            assert!((got - want).abs() < 1e-14);
            let gap = (got - 1.0 / 12.0).abs();
            assert!(gap <= prev_gap);
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-12);
        // d = 0 is the tail-only value f(a, a, ...)
        let v = p
            .anchored_truncated_integral(0, &AnchorTail::Constant(a))
            .unwrap();
        assert!((v - a * a).abs() < 1e-15);
    }

    #[test]
    fn motivating_dense_matches_laplace() {
        let p = BuiltinProblem::Motivating;
        for d in 1..=3 {
            let dense = p.anchored_truncated_integral(d, &AnchorTail::Zero).unwrap();
            let lap = motivating_truncated_integral(d, 1e-13).unwrap();
            assert!((dense - lap).abs() < 1e-11, "d = {d}: {dense} vs {lap}");
        }
        assert!(p.anchored_truncated_integral(5, &AnchorTail::Zero).is_err());
        assert!((p.anchored_truncated_integral(0, &AnchorTail::Zero).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn motivating_reference_is_self_consistent() {
        let r = BuiltinProblem::Motivating.reference_value(1e-4).unwrap();
        assert!(r.certified);
        assert!(r.dual_truncation_gap.unwrap() <= 1e-4);
    }

    #[test]
    fn mixed_derivative_matches_finite_differences() {
        let h = 1e-3;
        let pts = [[0.1, -0.2, 0.3], [-0.4, 0.25, 0.05], [0.45, 0.45, -0.45]];
        let labels = [1usize, 2, 4];
        for x in pts {
            for n in 1..=3 {
                let l = &labels[..n];
                let xs = &x[..n];
                // central mixed difference over all 2^n sign patterns
                let mut fd = 0.0;
                for mask in 0..(1u32 << n) {
                    let mut y = xs.to_vec();
                    let mut sign = 1.0;
                    for (k, yk) in y.iter_mut().enumerate() {
                        if mask >> k & 1 == 1 {
                            *yk += h;
                        } else {
                            *yk -= h;
                            sign = -sign;
                        }
                    }
                    fd += sign * motivating_f(l, &y);
                }
                fd /= (2.0 * h).powi(n as i32);
                let exact = motivating_mixed_derivative(l, xs);
                assert!((fd - exact).abs() <= 1e-5 * exact.abs());
            }
        }
    }

    #[test]
    fn hat_examples() {
        assert!((hat_integrals(1) - 1.0).abs() < 1e-15);
        assert!(hat_integrals(2).abs() < 1e-15);
        for d in 1..=10 {
            assert!((hat_partial_sum(d) - 1.0).abs() < 1e-14);
        }
        // pointwise the partial sums ψ_d(x_1) vanish for large d
        for x in [-0.3, 0.0, 0.01, 0.2] {
            let fd: f64 = (1..=12).map(|k| hat_term(k, x)).sum();
            assert!((fd - hat(12, x)).abs() < 1e-9);
            assert_eq!(hat(12, x), 0.0);
        }
    }

    #[test]
    fn point_eval_norm_examples() {
        let u1 = Subset::new(vec![1]).unwrap();
        assert!((point_eval_norm(&u1, &[0.5]).unwrap() - 0.5f64.sqrt()).abs() < 1e-16);
        let u2 = Subset::new(vec![1, 2]).unwrap();
        assert!((point_eval_norm(&u2, &[0.5, 0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(point_eval_norm(&u2, &[0.0, 0.3]).unwrap(), 0.0);
    }

    #[test]
    fn synthetic_terms_have_bound_norm() {
        // ||φ'||_{L2} = 1 on the unit domain, sup |φ'| = 1 on the half line
        let n = 200_000;
        let l2: f64 = (0..n)
            .map(|k| {
                let x = -0.5 + (k as f64 + 0.5) / n as f64;
                let d = x.exp() / 1f64.sinh().sqrt();
                d * d / n as f64
            })
            .sum();
        assert!((l2 - 1.0).abs() < 1e-9);
        let p = BuiltinProblem::PodSynthetic {
            b1: 0.0,
            b2: 3.0,
            mu: 1.0,
            kappa: 1.0,
            domain: Domain::HalfLineExp,
        };
        let r = p.reference_value(1e-6).unwrap().value;
        assert!((r - zeta(3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn motivating_bound_dominates_l2_norm() {
        // ||f_u||² = ∫ |∂_u f(x_u;0)|² dx_u for |u| <= 2
        let spec = BuiltinProblem::Motivating.spec().unwrap();
        let m: usize = 200;
        for u in [vec![1], vec![3], vec![1, 2], vec![2, 5]] {
            let s = Subset::new(u.clone()).unwrap();
            let mut acc = 0.0;
            let cells = m.pow(u.len() as u32);
            for c in 0..cells {
                let mut r = c;
                let x: Vec<f64> = (0..u.len())
                    .map(|_| {
                        let k = r % m;
                        r /= m;
                        -0.5 + (k as f64 + 0.5) / m as f64
                    })
                    .collect();
                acc += motivating_mixed_derivative(&u, &x).powi(2) / cells as f64;
            }
            assert!(spec.bounds.b_u(&s) >= acc.sqrt(), "{s}");
        }
    }
}
