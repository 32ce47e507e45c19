//! Run configuration: a single JSON document.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use mdm_core::lattice::DEFAULT_SHIFTS;
use mdm_core::{Backend, BuiltinProblem, CostModel, MdmRequest, UnivariateFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendName {
    SmolyakAnchoredUnit,
    SmolyakExpWeighted,
    Lattice,
}

impl BackendName {
    pub fn backend(self) -> Backend {
        match self {
            BackendName::SmolyakAnchoredUnit => Backend::Smolyak(UnivariateFamily::AnchoredUnit),
            BackendName::SmolyakExpWeighted => Backend::Smolyak(UnivariateFamily::ExpWeighted),
            BackendName::Lattice => Backend::Lattice,
        }
    }
}

fn default_backend() -> BackendName {
    BackendName::SmolyakAnchoredUnit
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: BuiltinProblem,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Strictly decreasing list for `sweep`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "default_backend")]
    pub backend: BackendName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shifts: Option<usize>,
    #[serde(default)]
    pub antithetic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostModel>,
    /// Accuracy asked of `oracle`; defaults to `epsilon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Reference value for the sweep's achieved-error column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    /// Main output file; standard output when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    /// Per-subset CSV written by `integrate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_evaluations: Option<u64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let positive = |name: &str, v: Option<f64>| -> anyhow::Result<()> {
            match v {
                Some(x) if !(x > 0.0 && x.is_finite()) => {
                    bail!("field `{name}` must be positive and finite, got {x}")
                }
                _ => Ok(()),
            }
        };
        positive("epsilon", self.epsilon)?;
        positive("tolerance", self.tolerance)?;
        positive("q", self.q)?;
        if let Some(a) = self.alpha {
            if !(a > 1.0) {
                bail!("field `alpha` must exceed 1, got {a}");
            }
        }
        if let Some(list) = &self.eps_list {
            if list.is_empty() {
                bail!("field `eps_list` is empty");
            }
            for &e in list {
                positive("eps_list", Some(e))?;
            }
            if list.windows(2).any(|w| !(w[0] > w[1])) {
                bail!("field `eps_list` must be strictly decreasing");
            }
        }
        if let Some(s) = self.shifts {
            if s < 2 {
                bail!("field `shifts` must be at least 2, got {s}");
            }
        }
        if self.threads == Some(0) {
            bail!("field `threads` must be at least 1");
        }
        if let Some(c) = &self.cost {
            c.validate().context("field `cost`")?;
        }
        let spec = self.problem.spec().context("field `problem`")?;
        let backend = self.backend.backend();
        if spec.refusal.is_none() && backend.domain() != spec.domain {
            bail!(
                "field `backend`: {:?} integrates over {} but problem `{}` lives on {}",
                self.backend,
                backend.domain().name(),
                spec.name,
                spec.domain.name()
            );
        }
        Ok(())
    }

    pub fn epsilon(&self) -> anyhow::Result<f64> {
        match (self.epsilon, &self.eps_list) {
            (Some(e), _) => Ok(e),
            (None, Some(list)) if list.len() == 1 => Ok(list[0]),
            _ => bail!("field `epsilon` is required for this command"),
        }
    }

    pub fn request(&self, epsilon: f64) -> anyhow::Result<MdmRequest> {
        let mut spec = self.problem.spec()?;
        if let Some(c) = &self.cost {
            spec.cost = c.clone();
        }
        let mut req = MdmRequest::new(spec, epsilon, self.backend.backend());
        req.alpha = self.alpha;
        req.q = self.q;
        req.seed = self.seed;
        req.shifts = self.shifts.unwrap_or(DEFAULT_SHIFTS);
        req.antithetic = self.antithetic;
        if let Some(m) = self.max_evaluations {
            req.max_evaluations = m;
        }
        Ok(req)
    }
}
