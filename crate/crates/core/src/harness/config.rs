//! TOML experiment configuration.
//!
//! ```toml
//! [experiment]
//! horizon = 2000
//! reps = 5
//! seed = 1000
//! policies = ["gg_estt", "ucb_glm"]
//!
//! [instance]
//! kind = "gaussian"
//! d1 = 8
//! d2 = 8
//! rank = 2
//! n = 100
//!
//! [graph]
//! model = "er"
//! p = 0.5
//!
//! [family]
//! name = "linear"
//! omega = 0.01
//!
//! [policy]
//! t1 = 50
//! alpha = 0.6
//!
//! [policies.gg_oful]
//! alpha = 0.1
//! ```
//!
//! `[policy]` sets shared settings; `[policies.<name>]` overrides them for
//! one policy.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::envs::{FamilyKind, LinkFamily};
use crate::error::{Error, Result};
use crate::policies::{Exploration, PolicyConfig, PolicyKind};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub instance: InstanceSpec,
    pub graph: GraphSpec,
    pub family: FamilySpec,
    #[serde(default)]
    pub policy: PolicySettings,
    #[serde(default)]
    pub policies: BTreeMap<String, PolicySettings>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub horizon: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_hit_pct")]
    pub hit_pct: f64,
    #[serde(default = "default_policies")]
    pub policies: Vec<String>,
    /// Worker threads; `GBL_WORKERS` takes precedence, `0` means all cores.
    #[serde(default)]
    pub workers: usize,
}

fn default_reps() -> usize {
    5
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

fn default_hit_pct() -> f64 {
    5.0
}

fn default_policies() -> Vec<String> {
    PolicyKind::ALL
        .iter()
        .map(|k| k.name().to_string())
        .collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InstanceSpec {
    /// `n` Frobenius-normalized standard normal matrices.
    Gaussian {
        d1: usize,
        d2: usize,
        rank: usize,
        n: usize,
        #[serde(default)]
        theta: ThetaSpec,
    },
    /// Normalized outer products of `n1` and `n2` Gaussian vectors.
    Outer {
        d1: usize,
        d2: usize,
        rank: usize,
        n1: usize,
        n2: usize,
        #[serde(default)]
        theta: ThetaSpec,
    },
    /// A reward matrix read from a comma-separated file.
    Matrix {
        path: PathBuf,
        #[serde(default)]
        rank: Option<usize>,
        #[serde(default)]
        has_header: bool,
        #[serde(default)]
        impute_missing_zero: bool,
    },
}

/// Row and column graphs used to whiten the synthetic true parameter.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaSpec {
    /// Edge probability of the row graph; `0` gives the empty graph.
    #[serde(default)]
    pub row_p: f64,
    #[serde(default)]
    pub col_p: f64,
    #[serde(default = "default_theta_eps")]
    pub eps: f64,
}

fn default_theta_eps() -> f64 {
    crate::envs::DEFAULT_THETA_EPS
}

impl Default for ThetaSpec {
    fn default() -> Self {
        ThetaSpec {
            row_p: 0.0,
            col_p: 0.0,
            eps: default_theta_eps(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase", deny_unknown_fields)]
pub enum GraphSpec {
    Er { p: f64 },
    Ba { m: usize },
    Knn { k: usize },
    Empty,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub name: FamilyKind,
    #[serde(default)]
    pub omega: Option<f64>,
    #[serde(default)]
    pub a_mu: Option<f64>,
}

impl FamilySpec {
    pub fn build(&self) -> Result<LinkFamily> {
        let mut fam = LinkFamily::from_kind(self.name, self.omega.unwrap_or(0.01))
            .map_err(|e| Error::Config(format!("family.omega: {e}")))?;
        if let Some(omega) = self.omega {
            fam = fam.with_omega(omega);
        }
        if let Some(a) = self.a_mu {
            if !(a > 0.0) {
                return Err(Error::Config(format!(
                    "family.a_mu must be positive, got {a}"
                )));
            }
            fam = fam.with_a_mu(a);
        }
        Ok(fam)
    }
}

/// Every policy knob; unset fields fall back to `[policy]`, then to the
/// built-in defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySettings {
    pub t1: Option<usize>,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub nu: Option<f64>,
    pub lambda2: Option<f64>,
    pub lambda_perp: Option<f64>,
    pub delta: Option<f64>,
    pub tau: Option<f64>,
    pub zeta: Option<f64>,
    pub exploration: Option<Exploration>,
    pub width_scale: Option<f64>,
    pub stage1_max_iters: Option<usize>,
}

impl PolicySettings {
    fn or(&self, base: &PolicySettings) -> PolicySettings {
        PolicySettings {
            t1: self.t1.or(base.t1),
            lambda: self.lambda.or(base.lambda),
            alpha: self.alpha.or(base.alpha),
            nu: self.nu.or(base.nu),
            lambda2: self.lambda2.or(base.lambda2),
            lambda_perp: self.lambda_perp.or(base.lambda_perp),
            delta: self.delta.or(base.delta),
            tau: self.tau.or(base.tau),
            zeta: self.zeta.or(base.zeta),
            exploration: self.exploration.or(base.exploration),
            width_scale: self.width_scale.or(base.width_scale),
            stage1_max_iters: self.stage1_max_iters.or(base.stage1_max_iters),
        }
    }

    fn apply(&self, cfg: &mut PolicyConfig) {
        if self.t1.is_some() {
            cfg.t1 = self.t1;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if self.nu.is_some() {
            cfg.nu = self.nu;
        }
        if let Some(v) = self.lambda2 {
            cfg.lambda2 = v;
        }
        if self.lambda_perp.is_some() {
            cfg.lambda_perp = self.lambda_perp;
        }
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if self.tau.is_some() {
            cfg.tau = self.tau;
        }
        if let Some(v) = self.zeta {
            cfg.zeta = v;
        }
        if let Some(v) = self.exploration {
            cfg.exploration = v;
        }
        if let Some(v) = self.width_scale {
            cfg.width_scale = v;
        }
        if let Some(v) = self.stage1_max_iters {
            cfg.stage1_max_iters = v;
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ex = &self.experiment;
        if ex.reps == 0 {
            return Err(Error::Config("experiment.reps must be at least 1".into()));
        }
        if ex.horizon < 2 {
            return Err(Error::Config(
                "experiment.horizon must be at least 2".into(),
            ));
        }
        if !(ex.hit_pct > 0.0 && ex.hit_pct < 100.0) {
            return Err(Error::Config(format!(
                "experiment.hit_pct must lie in (0, 100), got {}",
                ex.hit_pct
            )));
        }
        if ex.policies.is_empty() {
            return Err(Error::Config("experiment.policies is empty".into()));
        }
        for name in &ex.policies {
            name.parse::<PolicyKind>().map_err(|_| {
                Error::Config(format!("experiment.policies: unknown policy '{name}'"))
            })?;
        }
        for name in self.policies.keys() {
            name.parse::<PolicyKind>()
                .map_err(|_| Error::Config(format!("policies.{name}: unknown policy")))?;
        }
        match self.graph {
            GraphSpec::Er { p } if !(0.0..=1.0).contains(&p) => {
                return Err(Error::Config(format!(
                    "graph.p must lie in [0, 1], got {p}"
                )))
            }
            GraphSpec::Ba { m: 0 } => {
                return Err(Error::Config("graph.m must be at least 1".into()))
            }
            GraphSpec::Knn { k: 0 } => {
                return Err(Error::Config("graph.k must be at least 1".into()))
            }
            _ => {}
        }
        self.validate_instance()?;
        self.family
            .build()
            .map_err(|e| Error::Config(format!("family: {e}")))?;
        Ok(())
    }

    fn validate_instance(&self) -> Result<()> {
        let (d1, d2, rank, n, theta) = match &self.instance {
            InstanceSpec::Gaussian {
                d1,
                d2,
                rank,
                n,
                theta,
            } => (*d1, *d2, *rank, *n, theta),
            InstanceSpec::Outer {
                d1,
                d2,
                rank,
                n1,
                n2,
                theta,
            } => (*d1, *d2, *rank, n1 * n2, theta),
            InstanceSpec::Matrix { rank: Some(0), .. } => {
                return Err(Error::Config("instance.rank must be at least 1".into()))
            }
            InstanceSpec::Matrix { .. } => return Ok(()),
        };
        if d1 == 0 || d2 == 0 || n == 0 {
            return Err(Error::Config(
                "instance dimensions and action count must be positive".into(),
            ));
        }
        if rank == 0 || rank > d1.min(d2) {
            return Err(Error::Config(format!(
                "instance.rank {rank} outside [1, min(d1, d2) = {}]",
                d1.min(d2)
            )));
        }
        for (key, p) in [("row_p", theta.row_p), ("col_p", theta.col_p)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!(
                    "instance.theta.{key} must lie in [0, 1], got {p}"
                )));
            }
        }
        if !(theta.eps > 0.0) {
            return Err(Error::Config(format!(
                "instance.theta.eps must be positive, got {}",
                theta.eps
            )));
        }
        match self.graph {
            GraphSpec::Ba { m } if m >= n => Err(Error::Config(format!(
                "graph.m = {m} needs more than {m} actions, instance has {n}"
            ))),
            GraphSpec::Knn { k } if k >= n => Err(Error::Config(format!(
                "graph.k = {k} needs more than {k} actions, instance has {n}"
            ))),
            _ => Ok(()),
        }
    }

    /// Rank handed to the policies; for ingested matrices without an
    /// explicit rank this is resolved per instance.
    pub fn rank(&self) -> Option<usize> {
        match &self.instance {
            InstanceSpec::Gaussian { rank, .. } | InstanceSpec::Outer { rank, .. } => Some(*rank),
            InstanceSpec::Matrix { rank, .. } => *rank,
        }
    }

    pub fn policy_kinds(&self) -> Vec<PolicyKind> {
        self.experiment
            .policies
            .iter()
            .map(|n| n.parse().expect("validated"))
            .collect()
    }

    /// Resolved configuration for one policy in one rep.
    pub fn policy_config(&self, kind: PolicyKind, rank: usize, seed: u64) -> PolicyConfig {
        let mut cfg = PolicyConfig::new(kind, self.experiment.horizon, rank, seed);
        cfg.hit_pct = self.experiment.hit_pct;
        let settings = match self.policies.get(kind.name()) {
            Some(own) => own.or(&self.policy),
            None => self.policy.clone(),
        };
        settings.apply(&mut cfg);
        cfg
    }
}
