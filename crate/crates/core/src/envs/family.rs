//! Canonical exponential-family reward models.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Bound applied to the Poisson linear predictor inside `b` and `mu`.
pub const POISSON_CLIP: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Linear,
    Logistic,
    Poisson,
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "gaussian" => Ok(FamilyKind::Linear),
            "logistic" | "bernoulli" => Ok(FamilyKind::Logistic),
            "poisson" => Ok(FamilyKind::Poisson),
            other => Err(Error::invalid(format!("unknown family '{other}'"))),
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FamilyKind::Linear => "linear",
            FamilyKind::Logistic => "logistic",
            FamilyKind::Poisson => "poisson",
        })
    }
}

/// One pair of base draws consumed per reward. Keeping both lets every
/// family read the same per-round noise stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseDraw {
    pub normal: f64,
    pub uniform: f64,
}

/// A GLM reward family together with the constants the algorithms need.
///
/// `c_mu`/`k_mu` bound `mu'` on `[-1, 1]`; `a_mu` scales the Laplacian
/// penalty and defaults to `k_mu²`; `omega` is the sub-Gaussian noise scale
/// used in confidence widths.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkFamily {
    pub kind: FamilyKind,
    pub c_mu: f64,
    pub k_mu: f64,
    pub a_mu: f64,
    pub r_max: f64,
    pub omega: f64,
    pub phi: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LinkFamily {
    pub fn linear(omega: f64) -> crate::error::Result<Self> {
        if !(omega > 0.0) {
            return Err(Error::invalid(format!(
                "linear family needs omega > 0, got {omega}"
            )));
        }
        Ok(LinkFamily {
            kind: FamilyKind::Linear,
            c_mu: 1.0,
            k_mu: 1.0,
            a_mu: 1.0,
            r_max: 1.0,
            omega,
            phi: omega * omega,
        })
    }

    pub fn logistic() -> Self {
        let s1 = sigmoid(1.0);
        let k_mu = 0.25;
        LinkFamily {
            kind: FamilyKind::Logistic,
            c_mu: s1 * (1.0 - s1),
            k_mu,
            a_mu: k_mu * k_mu,
            r_max: 0.5 + k_mu,
            // a Bernoulli variable is 1/2-sub-Gaussian
            omega: 0.5,
            phi: 1.0,
        }
    }

    pub fn poisson() -> Self {
        let e = std::f64::consts::E;
        LinkFamily {
            kind: FamilyKind::Poisson,
            c_mu: 1.0 / e,
            k_mu: e,
            a_mu: e * e,
            r_max: 1.0 + e,
            // unit-rate Poisson has unit variance
            omega: 1.0,
            phi: 1.0,
        }
    }

    /// Default family for `kind`; `omega` only applies to the linear family.
    pub fn from_kind(kind: FamilyKind, omega: f64) -> crate::error::Result<Self> {
        match kind {
            FamilyKind::Linear => LinkFamily::linear(omega),
            FamilyKind::Logistic => Ok(LinkFamily::logistic()),
            FamilyKind::Poisson => Ok(LinkFamily::poisson()),
        }
    }

    pub fn with_a_mu(mut self, a_mu: f64) -> Self {
        self.a_mu = a_mu;
        self
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    fn clip(&self, z: f64) -> f64 {
        match self.kind {
            FamilyKind::Poisson => z.clamp(-POISSON_CLIP, POISSON_CLIP),
            _ => z,
        }
    }

    /// Log-partition function.
    pub fn b(&self, z: f64) -> f64 {
        match self.kind {
            FamilyKind::Linear => 0.5 * z * z,
            FamilyKind::Logistic => {
                // log(1 + e^z) without overflow
                if z > 0.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                }
            }
            FamilyKind::Poisson => self.clip(z).exp(),
        }
    }

    /// Inverse link `mu = b'`.
    pub fn mu(&self, z: f64) -> f64 {
        match self.kind {
            FamilyKind::Linear => z,
            FamilyKind::Logistic => sigmoid(z),
            FamilyKind::Poisson => self.clip(z).exp(),
        }
    }

    pub fn mu_prime(&self, z: f64) -> f64 {
        match self.kind {
            FamilyKind::Linear => 1.0,
            FamilyKind::Logistic => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            FamilyKind::Poisson => self.clip(z).exp(),
        }
    }

    /// Reward for linear predictor `z` using one base draw.
    pub fn sample_from(&self, z: f64, draw: NoiseDraw) -> f64 {
        match self.kind {
            FamilyKind::Linear => z + self.omega * draw.normal,
            FamilyKind::Logistic => {
                if draw.uniform < self.mu(z) {
                    1.0
                } else {
                    0.0
                }
            }
            FamilyKind::Poisson => poisson_inverse_cdf(self.mu(z), draw.uniform),
        }
    }
}

/// Smallest `k` with `P(N <= k) >= u` for `N ~ Poisson(rate)`.
fn poisson_inverse_cdf(rate: f64, u: f64) -> f64 {
    let mut k = 0u64;
    let mut pmf = (-rate).exp();
    let mut cdf = pmf;
    // the cap only matters for pathological rates near the clip bound
    while cdf < u && k < 1_000_000 {
        k += 1;
        pmf *= rate / k as f64;
        cdf += pmf;
        if pmf == 0.0 && cdf < u {
            break;
        }
    }
    k as f64
}
