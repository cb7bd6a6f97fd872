//! Incentive mechanisms and their unit rewards.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ReducedModel;

/// Fraction of D_p below which the fixed-budget rebate is not evaluated:
/// its unit reward R/G is replaced by a sentinel that forces full reduction.
pub const FBR_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    None,
    Fbr,
    Tdp,
    #[serde(rename = "so")]
    SocialOptimum,
}

impl FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(MechanismKind::None),
            "fbr" => Ok(MechanismKind::Fbr),
            "tdp" => Ok(MechanismKind::Tdp),
            "so" => Ok(MechanismKind::SocialOptimum),
            other => Err(Error::Mechanism(format!("unknown mechanism '{other}'"))),
        }
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MechanismKind::None => "none",
            MechanismKind::Fbr => "fbr",
            MechanismKind::Tdp => "tdp",
            MechanismKind::SocialOptimum => "so",
        })
    }
}

/// A mechanism with its parameter: the fixed-budget rebate pays R·x/G, time-of-day
/// pricing pays r·x, and the social optimum is the fictitious mechanism whose
/// unit reward is h′(G)(D_p − G).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Mechanism {
    None,
    Fbr { budget: f64 },
    Tdp { rate: f64 },
    SocialOptimum,
}

impl Mechanism {
    pub fn fbr(budget: f64) -> Result<Self> {
        check_parameter(budget)?;
        Ok(Mechanism::Fbr { budget })
    }

    pub fn tdp(rate: f64) -> Result<Self> {
        check_parameter(rate)?;
        Ok(Mechanism::Tdp { rate })
    }

    /// Builds a mechanism of `kind`; the parameter is ignored for `None` and `SocialOptimum`.
    pub fn with_parameter(kind: MechanismKind, parameter: f64) -> Result<Self> {
        match kind {
            MechanismKind::None => Ok(Mechanism::None),
            MechanismKind::Fbr => Mechanism::fbr(parameter),
            MechanismKind::Tdp => Mechanism::tdp(parameter),
            MechanismKind::SocialOptimum => Ok(Mechanism::SocialOptimum),
        }
    }

    pub fn kind(&self) -> MechanismKind {
        match self {
            Mechanism::None => MechanismKind::None,
            Mechanism::Fbr { .. } => MechanismKind::Fbr,
            Mechanism::Tdp { .. } => MechanismKind::Tdp,
            Mechanism::SocialOptimum => MechanismKind::SocialOptimum,
        }
    }

    pub fn parameter(&self) -> Option<f64> {
        match self {
            Mechanism::Fbr { budget } => Some(*budget),
            Mechanism::Tdp { rate } => Some(*rate),
            _ => None,
        }
    }

    /// Whether the reward diverges at G → 0.
    pub fn is_singular_at_zero(&self) -> bool {
        matches!(self, Mechanism::Fbr { budget } if *budget > 0.0)
    }

    /// Unit reward r_j(G): marginal reward per unit of reduction.
    pub fn unit_reward(&self, model: &ReducedModel, g: f64) -> f64 {
        match *self {
            Mechanism::None => 0.0,
            Mechanism::Fbr { budget } => {
                if budget == 0.0 {
                    0.0
                } else if g < FBR_FLOOR * model.aggregate_demand() {
                    f64::MAX
                } else {
                    budget / g
                }
            }
            Mechanism::Tdp { rate } => rate,
            Mechanism::SocialOptimum => {
                let room = model.aggregate_demand() - g;
                if room == 0.0 {
                    0.0
                } else {
                    model.h_slope(g) * room
                }
            }
        }
    }

    /// Derivative r′_j(G) of the unit reward.
    pub fn unit_reward_slope(&self, model: &ReducedModel, g: f64) -> f64 {
        match *self {
            Mechanism::None | Mechanism::Tdp { .. } => 0.0,
            Mechanism::Fbr { budget } => -budget / (g * g),
            Mechanism::SocialOptimum => {
                let b = model.benefit_fn();
                b.curvature(g) * (model.aggregate_demand() - g) - b.slope(g)
            }
        }
    }

    /// Subscription price increase Δp_j that balances the budget at `g_eq`.
    pub fn price_increase(&self, model: &ReducedModel, g_eq: f64) -> f64 {
        let share = model.peak_cap() / model.aggregate_demand();
        match *self {
            Mechanism::Fbr { budget } => budget * share,
            Mechanism::Tdp { rate } => rate * g_eq * share,
            Mechanism::None | Mechanism::SocialOptimum => 0.0,
        }
    }

    /// Net transfer M^j(x, G) to a user contributing `x`, priced at `g_eq`.
    pub fn transfer(&self, model: &ReducedModel, x: f64, g: f64, g_eq: f64) -> f64 {
        let gross = match *self {
            Mechanism::Fbr { budget } if g > 0.0 => budget * x / g,
            Mechanism::Tdp { rate } => rate * x,
            _ => 0.0,
        };
        gross - self.price_increase(model, g_eq)
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mechanism::Fbr { budget } => write!(f, "fbr(R={budget})"),
            Mechanism::Tdp { rate } => write!(f, "tdp(r={rate})"),
            other => write!(f, "{}", other.kind()),
        }
    }
}

fn check_parameter(v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Mechanism(format!("parameter must be finite and non-negative, got {v}")))
    }
}
