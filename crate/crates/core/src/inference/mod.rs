//! Stochastic EM fitting: a coordinate-wise Gibbs E-step over class labels
//! alternating with a damped-Newton M-step over `(theta, alpha, beta)`.

mod em;
mod gibbs;
mod mstep;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use em::{canonicalize, fit, FitConfig, FitProvenance, FitResult};
pub use gibbs::gibbs_sweep;
pub use mstep::{m_step, MStepOptions, MStepOutput, MStepSolver, SEPARATION_LOG_ODDS};

/// Which parameter blocks a fit estimates; the rest are held at zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Restriction {
    /// `theta`, `alpha` and `beta`.
    Full,
    /// `K = 1`, `theta = 0`, `alpha = 0`: logistic regression on the covariates.
    Baseline,
    /// `alpha = 0`, `beta = 0`: the classical stochastic blockmodel.
    #[serde(rename = "pure-sbm")]
    PureBlockmodel,
    /// `alpha = 0`: blockmodel plus covariates.
    NoAlpha,
}

impl Restriction {
    pub fn estimates_theta(self) -> bool {
        !matches!(self, Restriction::Baseline)
    }

    pub fn estimates_alpha(self) -> bool {
        matches!(self, Restriction::Full)
    }

    pub fn estimates_beta(self) -> bool {
        !matches!(self, Restriction::PureBlockmodel)
    }
}

impl FromStr for Restriction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "full" => Ok(Self::Full),
            "baseline" => Ok(Self::Baseline),
            "pure-sbm" | "pure_blockmodel" | "pure-blockmodel" => Ok(Self::PureBlockmodel),
            "no-alpha" | "no_alpha" => Ok(Self::NoAlpha),
            other => Err(Error::InvalidConfig(format!("unknown model restriction `{other}`"))),
        }
    }
}

impl fmt::Display for Restriction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Baseline => "baseline",
            Self::PureBlockmodel => "pure-sbm",
            Self::NoAlpha => "no-alpha",
        })
    }
}
