//! Population, utility primitives, and the reduction of the peak/off-peak
//! demand model to a one-dimensional public-good game.
//!
//! After the reduction, a user of type θ choosing a peak-time reduction
//! `x ∈ [0, d_p]` has utility
//!
//! ```text
//! u_θ(x, G) = ū_θ + (d_p − x) h(G) − c_θ(x) − p
//! ```
//!
//! where `G` is the aggregate reduction, `c_θ` the cost of shifting and `h`
//! the (negative, increasing) unit benefit of decongestion. Everything the
//! equilibrium solvers need is behind the [`ShiftCost`] and [`Benefit`]
//! traits, so structural and directly-specified models are interchangeable.

mod audit;
mod families;
mod structural;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::TypeGrid;

pub use audit::{assumption_audit, AuditCheck, AuditReport};
pub use families::{LinearBenefit, PowerBenefit, PsDelayBenefit, QuadraticBenefit, QuadraticCost};
pub use structural::{LogUtility, StructuralCost};

/// Cost of shifting c_θ(x) and its derivative, for every type.
pub trait ShiftCost: Send + Sync + fmt::Debug {
    fn cost(&self, theta: f64, x: f64) -> f64;

    fn marginal(&self, theta: f64, x: f64) -> f64;

    /// Baseline reduction x̲_θ maximizing the latency-free utility.
    fn baseline(&self, _theta: f64) -> f64 {
        0.0
    }

    /// Latency-free maximum utility ū_θ.
    fn latency_free_utility(&self, _theta: f64) -> f64 {
        0.0
    }

    /// Off-peak demand z*_θ(x) chosen alongside a reduction `x`.
    fn optimal_shift(&self, _theta: f64, x: f64) -> f64 {
        x
    }
}

/// Unit benefit of decongestion h(G) with first and second derivatives.
pub trait Benefit: Send + Sync + fmt::Debug {
    fn value(&self, g: f64) -> f64;
    fn slope(&self, g: f64) -> f64;
    fn curvature(&self, g: f64) -> f64;

    /// Smallest G at which h is finite.
    fn domain_floor(&self) -> f64 {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    /// Structural: P_θ(y) = (1 + type_slope·θ)·peak_scale·ln(1 + y/d_p),
    /// O_θ = off_peak_ratio·P_θ; the cost of shifting is derived.
    LogUtility {
        peak_scale: f64,
        #[serde(default = "one")]
        type_slope: f64,
        off_peak_ratio: f64,
    },
    /// Reduced: c_θ(x) = ½·scale·(1 + type_slope·θ)·x².
    Quadratic {
        scale: f64,
        #[serde(default = "one")]
        type_slope: f64,
        #[serde(default)]
        baseline_utility: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BenefitSpec {
    /// h(G) = −L0·δ(ρ_p) with the processor-sharing delay δ(ρ) = δ0/(1 − ρ).
    PsDelay { disutility_scale: f64 },
    /// h(G) = scale·(G^exponent − D_p^exponent).
    Power { scale: f64, exponent: f64 },
    /// h(G) = −½·curvature·(D_p − G)².
    Quadratic { curvature: f64 },
    /// h(G) = slope·(G − D_p). Not strictly concave.
    Linear { slope: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pricing {
    /// Monthly subscription price p ($).
    pub subscription: f64,
    /// Usage price q ($/Gbit).
    #[serde(default)]
    pub usage: f64,
}

/// Access-point parameters used for loads and delays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    pub capacity_gbps: f64,
    pub peak_hours: f64,
    pub off_peak_hours: f64,
    /// δ0 in seconds.
    pub base_delay_s: f64,
    /// Initial off-peak demand (Gbits); affects reported off-peak load only.
    #[serde(default)]
    pub off_peak_base_demand: f64,
}

impl Network {
    /// Peak-period volume C·T_p in Gbits.
    pub fn peak_volume(&self) -> f64 {
        self.capacity_gbps * self.peak_hours * 3600.0
    }

    pub fn off_peak_volume(&self) -> f64 {
        self.capacity_gbps * self.off_peak_hours * 3600.0
    }

    /// Processor-sharing delay; infinite at or above saturation.
    pub fn delay(&self, load: f64) -> f64 {
        if load < 1.0 {
            self.base_delay_s / (1.0 - load)
        } else {
            f64::INFINITY
        }
    }
}

/// Full set of primitives a reduced model is built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Primitives {
    pub cost: CostSpec,
    pub benefit: BenefitSpec,
    pub pricing: Pricing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<Network>,
}

fn one() -> f64 {
    1.0
}

/// Per-node constants of the reduction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TypeProfile {
    pub baseline: f64,
    pub latency_free_utility: f64,
}

/// The one-dimensional public-good game on a discretized population.
#[derive(Clone, Debug)]
pub struct ReducedModel {
    grid: TypeGrid,
    cost: Arc<dyn ShiftCost>,
    benefit: Arc<dyn Benefit>,
    profiles: Vec<TypeProfile>,
    subscription_price: f64,
    network: Option<Network>,
}

impl ReducedModel {
    pub fn new(
        grid: TypeGrid,
        cost: Arc<dyn ShiftCost>,
        benefit: Arc<dyn Benefit>,
        subscription_price: f64,
        network: Option<Network>,
    ) -> Self {
        let profiles = grid
            .nodes()
            .iter()
            .map(|n| TypeProfile {
                baseline: cost.baseline(n.theta),
                latency_free_utility: cost.latency_free_utility(n.theta),
            })
            .collect();
        ReducedModel { grid, cost, benefit, profiles, subscription_price, network }
    }

    /// Same population and benefit with a different cost of shifting.
    pub fn with_cost(&self, cost: Arc<dyn ShiftCost>) -> Self {
        ReducedModel::new(
            self.grid.clone(),
            cost,
            Arc::clone(&self.benefit),
            self.subscription_price,
            self.network.clone(),
        )
    }

    pub fn grid(&self) -> &TypeGrid {
        &self.grid
    }

    pub fn cost_fn(&self) -> &Arc<dyn ShiftCost> {
        &self.cost
    }

    pub fn benefit_fn(&self) -> &Arc<dyn Benefit> {
        &self.benefit
    }

    pub fn profiles(&self) -> &[TypeProfile] {
        &self.profiles
    }

    pub fn network(&self) -> Option<&Network> {
        self.network.as_ref()
    }

    pub fn subscription_price(&self) -> f64 {
        self.subscription_price
    }

    pub fn peak_cap(&self) -> f64 {
        self.grid.peak_cap()
    }

    pub fn aggregate_demand(&self) -> f64 {
        self.grid.aggregate_demand()
    }

    pub fn h(&self, g: f64) -> f64 {
        self.benefit.value(g)
    }

    pub fn h_slope(&self, g: f64) -> f64 {
        self.benefit.slope(g)
    }

    pub fn cost(&self, theta: f64, x: f64) -> f64 {
        self.cost.cost(theta, x)
    }

    pub fn marginal_cost(&self, theta: f64, x: f64) -> f64 {
        self.cost.marginal(theta, x)
    }

    /// z*_θ(x), validating the range of `x`.
    pub fn optimal_shift(&self, theta: f64, x: f64) -> Result<f64> {
        let d_p = self.peak_cap();
        if !(0.0..=d_p).contains(&x) {
            return Err(Error::OutOfRange { x, d_p });
        }
        Ok(self.cost.optimal_shift(theta, x))
    }
}

/// Builds the reduced model, first checking the primitives: P_θ and O_θ
/// increasing and strictly concave on `[0, d_p]` at every node, and L_p
/// increasing and strictly convex below capacity.
pub fn reduce_model(grid: &TypeGrid, prim: &Primitives) -> Result<ReducedModel> {
    let d_p = grid.peak_cap();
    let aggregate = grid.aggregate_demand();
    if !(prim.pricing.subscription >= 0.0 && prim.pricing.usage >= 0.0) {
        return Err(Error::Config("prices must be non-negative".into()));
    }
    if let Some(net) = &prim.network {
        let ok = [net.capacity_gbps, net.peak_hours, net.off_peak_hours, net.base_delay_s]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
            && net.off_peak_base_demand >= 0.0;
        if !ok {
            return Err(Error::Config("network parameters must be positive".into()));
        }
    }

    let cost: Arc<dyn ShiftCost> = match &prim.cost {
        CostSpec::LogUtility { peak_scale, type_slope, off_peak_ratio } => {
            let utility = LogUtility {
                peak_scale: *peak_scale,
                type_slope: *type_slope,
                off_peak_ratio: *off_peak_ratio,
                peak_cap: d_p,
            };
            for (i, node) in grid.nodes().iter().enumerate() {
                utility.check_shape(node.theta).map_err(|what| {
                    Error::Audit(format!("node {i} (theta = {}): {what}", node.theta))
                })?;
            }
            Arc::new(StructuralCost::new(utility, prim.pricing.usage))
        }
        CostSpec::Quadratic { scale, type_slope, baseline_utility } => Arc::new(QuadraticCost {
            scale: *scale,
            type_slope: *type_slope,
            baseline_utility: *baseline_utility,
        }),
    };

    let benefit: Arc<dyn Benefit> = match &prim.benefit {
        BenefitSpec::PsDelay { disutility_scale } => {
            let net = prim.network.as_ref().ok_or_else(|| {
                Error::Config("benefit kind ps_delay requires a [network] section".into())
            })?;
            let b = PsDelayBenefit {
                disutility_scale: *disutility_scale,
                base_delay: net.base_delay_s,
                peak_volume: net.peak_volume(),
                aggregate_demand: aggregate,
            };
            b.check_peak_disutility().map_err(Error::Audit)?;
            Arc::new(b)
        }
        BenefitSpec::Power { scale, exponent } => Arc::new(PowerBenefit {
            scale: *scale,
            exponent: *exponent,
            aggregate_demand: aggregate,
        }),
        BenefitSpec::Quadratic { curvature } => {
            Arc::new(QuadraticBenefit { curvature: *curvature, aggregate_demand: aggregate })
        }
        BenefitSpec::Linear { slope } => {
            Arc::new(LinearBenefit { slope: *slope, aggregate_demand: aggregate })
        }
    };

    Ok(ReducedModel::new(
        grid.clone(),
        cost,
        benefit,
        prim.pricing.subscription,
        prim.network.clone(),
    ))
}
