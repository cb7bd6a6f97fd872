//! Sensitivity of the mechanisms to a misestimated cost of shifting.
//!
//! The provider fixes R* and r* for the estimated costs c_θ while users
//! actually have c̃_θ = c_θ + ε·p_θ. To first order the perturbed equilibrium
//! of mechanism j moves by J_ε/(1 + α_j), where J_ε is the shift of the
//! aggregate response at G*(0) and α_j the negated slope of that response.
//! A mechanism is more robust when its 1/(1 + α_j) is closer to the social
//! optimum's.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{optimal_parameters_at, solve_social_optimum, OptimalParameters};
use crate::equilibrium::{aggregate_response, response_profile, solve_equilibrium, SolverSettings};
use crate::error::{Error, Result};
use crate::mechanism::Mechanism;
use crate::model::{assumption_audit, ReducedModel, ShiftCost};

/// Shape p_θ of a cost perturbation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Direction {
    /// p_θ = c_θ: the cost of shifting scaled by 1 + ε.
    #[default]
    Scale,
    /// p_θ(x) = slope·x.
    Linear { slope: f64 },
}

impl Direction {
    fn value(&self, base: &dyn ShiftCost, theta: f64, x: f64) -> f64 {
        match *self {
            Direction::Scale => base.cost(theta, x),
            Direction::Linear { slope } => slope * x,
        }
    }

    fn slope(&self, base: &dyn ShiftCost, theta: f64, x: f64) -> f64 {
        match *self {
            Direction::Scale => base.marginal(theta, x),
            Direction::Linear { slope } => slope,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::Scale => f.write_str("scale"),
            Direction::Linear { slope } => write!(f, "linear:{slope}"),
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    /// `scale` or `linear:<slope>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("scale") {
            return Ok(Direction::Scale);
        }
        if let Some(rest) = s.strip_prefix("linear:") {
            let slope = rest
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad linear slope '{rest}': {e}")))?;
            return Ok(Direction::Linear { slope });
        }
        Err(Error::Config(format!("unknown perturbation direction '{s}' (expected scale or linear:<slope>)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub epsilon: f64,
    pub direction: Direction,
}

/// c̃_θ = c_θ + ε·p_θ. Baselines, latency-free utilities and shifts are those
/// of the estimated model: only the cost of shifting is misestimated.
#[derive(Debug)]
pub struct PerturbedCost {
    base: Arc<dyn ShiftCost>,
    perturbation: Perturbation,
}

impl PerturbedCost {
    pub fn new(base: Arc<dyn ShiftCost>, perturbation: Perturbation) -> Self {
        PerturbedCost { base, perturbation }
    }
}

impl ShiftCost for PerturbedCost {
    fn cost(&self, theta: f64, x: f64) -> f64 {
        let Perturbation { epsilon, direction } = self.perturbation;
        self.base.cost(theta, x) + epsilon * direction.value(self.base.as_ref(), theta, x)
    }

    fn marginal(&self, theta: f64, x: f64) -> f64 {
        let Perturbation { epsilon, direction } = self.perturbation;
        self.base.marginal(theta, x) + epsilon * direction.slope(self.base.as_ref(), theta, x)
    }

    fn baseline(&self, theta: f64) -> f64 {
        self.base.baseline(theta)
    }

    fn latency_free_utility(&self, theta: f64) -> f64 {
        self.base.latency_free_utility(theta)
    }

    fn optimal_shift(&self, theta: f64, x: f64) -> f64 {
        self.base.optimal_shift(theta, x)
    }
}

pub fn perturbed_model(model: &ReducedModel, perturbation: Perturbation) -> ReducedModel {
    model.with_cost(Arc::new(PerturbedCost::new(Arc::clone(model.cost_fn()), perturbation)))
}

/// Richardson-extrapolated derivative of `f` at `x` from centred or
/// one-sided differences.
fn richardson<F: Fn(f64) -> Result<f64>>(f: &F, x: f64, step: f64, side: Side) -> Result<f64> {
    match side {
        Side::Centered => {
            let d = |h: f64| -> Result<f64> { Ok((f(x + h)? - f(x - h)?) / (2.0 * h)) };
            Ok((4.0 * d(step / 2.0)? - d(step)?) / 3.0)
        }
        Side::Forward | Side::Backward => {
            let s = if side == Side::Forward { 1.0 } else { -1.0 };
            let fx = f(x)?;
            let d = |h: f64| -> Result<f64> { Ok((f(x + s * h)? - fx) / (s * h)) };
            Ok(2.0 * d(step / 2.0)? - d(step)?)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    Centered,
    Forward,
    Backward,
}

/// Negated slope of a response map at `g0` by Richardson-refined centred
/// differences with step `step`.
pub fn negated_slope<F: Fn(f64) -> Result<f64>>(f: F, g0: f64, step: f64) -> Result<f64> {
    Ok(-richardson(&f, g0, step, Side::Centered)?)
}

const SLOPE_STEP: f64 = 1e-5;

fn branches(model: &ReducedModel, xs: &[f64]) -> Vec<u8> {
    let d_p = model.peak_cap();
    xs.iter().map(|&x| if x <= 0.0 { 0 } else if x >= d_p { 2 } else { 1 }).collect()
}

/// α_j = −dG^resp_j/dG at `g0`. When a node changes clamp branch inside the
/// stencil, the difference is taken on the side that keeps every branch.
pub fn response_slope(model: &ReducedModel, mech: &Mechanism, g0: f64) -> Result<f64> {
    let d = model.aggregate_demand();
    let step = SLOPE_STEP * d;
    if !(g0 - step > 0.0 && g0 + step < d) {
        return Err(Error::OutOfRange { x: g0, d_p: d });
    }
    let at = branches(model, &response_profile(model, mech, g0)?);
    let below = branches(model, &response_profile(model, mech, g0 - step)?);
    let above = branches(model, &response_profile(model, mech, g0 + step)?);
    let side = match (below == at, above == at) {
        (true, true) => Side::Centered,
        (_, true) => Side::Forward,
        (true, false) => Side::Backward,
        // Kinks on both sides: the centred stencil averages them.
        (false, false) => Side::Centered,
    };
    let f = |g: f64| aggregate_response(model, mech, g);
    Ok(-richardson(&f, g0, step, side)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Condition {
    /// FBR is closer to the perturbed optimum.
    C1,
    /// TDP is closer to the perturbed optimum.
    C2,
    /// The two sides agree within the relative tolerance.
    Boundary,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::C1 => "C1",
            Condition::C2 => "C2",
            Condition::Boundary => "boundary",
        })
    }
}

/// Relative gap below which two sides of a condition count as equal.
pub const BOUNDARY_RTOL: f64 = 1e-3;

fn compare(fbr_side: f64, tdp_side: f64) -> Condition {
    let scale = fbr_side.abs().max(tdp_side.abs());
    if scale == 0.0 || (fbr_side - tdp_side).abs() < BOUNDARY_RTOL * scale {
        Condition::Boundary
    } else if fbr_side < tdp_side {
        Condition::C1
    } else {
        Condition::C2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Slopes {
    pub fbr: f64,
    pub tdp: f64,
    pub so: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Classification {
    /// |1/(1+α_R) − 1/(1+α_SO)|.
    pub fbr_gap: f64,
    /// |1/(1+α_T) − 1/(1+α_SO)|.
    pub tdp_gap: f64,
    pub condition: Condition,
    /// |r′_R(G0) − r′_SO(G0)|.
    pub fbr_reward_gap: f64,
    /// |r′_T(G0) − r′_SO(G0)|.
    pub tdp_reward_gap: f64,
    pub reward_condition: Condition,
}

impl Classification {
    pub fn agree(&self) -> bool {
        self.condition == self.reward_condition
    }
}

/// Evaluates (C1)/(C2) from the response slopes and (C1′)/(C2′) from the
/// unit-reward derivatives at the common equilibrium `g0`.
pub fn classify_conditions(slopes: Slopes, model: &ReducedModel, params: &OptimalParameters) -> Classification {
    let inv = |a: f64| 1.0 / (1.0 + a);
    let fbr_gap = (inv(slopes.fbr) - inv(slopes.so)).abs();
    let tdp_gap = (inv(slopes.tdp) - inv(slopes.so)).abs();
    let g0 = params.g_star;
    let so = Mechanism::SocialOptimum.unit_reward_slope(model, g0);
    let fbr_reward_gap = (params.fbr().unit_reward_slope(model, g0) - so).abs();
    let tdp_reward_gap = (params.tdp().unit_reward_slope(model, g0) - so).abs();
    Classification {
        fbr_gap,
        tdp_gap,
        condition: compare(fbr_gap, tdp_gap),
        fbr_reward_gap,
        tdp_reward_gap,
        reward_condition: compare(fbr_reward_gap, tdp_reward_gap),
    }
}

/// J_ε: aggregate response at `g0` under perturbed costs minus the
/// unperturbed one, for a mechanism whose unit reward is the common one.
pub fn perturbation_response(model: &ReducedModel, mech: &Mechanism, perturbation: Perturbation, g0: f64) -> Result<f64> {
    let perturbed = perturbed_model(model, perturbation);
    Ok(aggregate_response(&perturbed, mech, g0)? - aggregate_response(model, mech, g0)?)
}

/// G0 + J_ε/(1 + α_j).
pub fn first_order_prediction(g0: f64, alpha: f64, j_eps: f64) -> f64 {
    g0 + j_eps / (1.0 + alpha)
}

/// Lower bound on |J_ε|/(|ε|·D_p) for a direction to count as first order.
pub const DEGENERATE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Outcome {
    pub public_good: f64,
    pub welfare: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub epsilon: f64,
    pub none: Outcome,
    pub fbr: Outcome,
    pub tdp: Outcome,
    pub optimum: Outcome,
    /// |G_FBR(ε) − G*(ε)|.
    pub fbr_distance: f64,
    pub tdp_distance: f64,
    pub j_eps: f64,
    pub predicted_fbr: f64,
    pub predicted_tdp: f64,
    pub predicted_so: f64,
}

fn outcome(model: &ReducedModel, mech: &Mechanism, settings: &SolverSettings) -> Result<Outcome> {
    let r = solve_equilibrium(model, mech, settings)?;
    Ok(Outcome { public_good: r.public_good, welfare: r.welfare })
}

/// Re-solves FBR(R*), TDP(r*), the optimum and the unregulated game on the
/// perturbed model, keeping the unperturbed parameters. First-order
/// predictions are filled from `slopes`.
pub fn perturbed_equilibria(
    model: &ReducedModel,
    perturbation: Perturbation,
    params: &OptimalParameters,
    slopes: Slopes,
    settings: &SolverSettings,
) -> Result<RobustnessRow> {
    let perturbed = perturbed_model(model, perturbation);
    let audit = assumption_audit(&perturbed);
    if let Some(bad) = audit.failures().next() {
        return Err(Error::Audit(format!(
            "perturbed model at epsilon = {}: {} ({})",
            perturbation.epsilon, bad.name, bad.detail
        )));
    }
    let g0 = params.g_star;
    let j_eps = perturbation_response(model, &Mechanism::SocialOptimum, perturbation, g0)?;
    if perturbation.epsilon != 0.0
        && j_eps.abs() / perturbation.epsilon.abs() < DEGENERATE_TOL * model.aggregate_demand()
    {
        return Err(Error::DegenerateDirection(j_eps.abs() / perturbation.epsilon.abs()));
    }
    let none = outcome(&perturbed, &Mechanism::None, settings)?;
    let fbr = outcome(&perturbed, &params.fbr(), settings)?;
    let tdp = outcome(&perturbed, &params.tdp(), settings)?;
    let optimum = outcome(&perturbed, &Mechanism::SocialOptimum, settings)?;
    Ok(RobustnessRow {
        epsilon: perturbation.epsilon,
        none,
        fbr,
        tdp,
        optimum,
        fbr_distance: (fbr.public_good - optimum.public_good).abs(),
        tdp_distance: (tdp.public_good - optimum.public_good).abs(),
        j_eps,
        predicted_fbr: first_order_prediction(g0, slopes.fbr, j_eps),
        predicted_tdp: first_order_prediction(g0, slopes.tdp, j_eps),
        predicted_so: first_order_prediction(g0, slopes.so, j_eps),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessReport {
    pub direction: Direction,
    pub parameters: OptimalParameters,
    pub slopes: Slopes,
    pub classification: Classification,
    pub rows: Vec<RobustnessRow>,
}

/// Slopes α_R, α_T, α_SO at the unperturbed optimum.
pub fn slopes_at(model: &ReducedModel, params: &OptimalParameters) -> Result<Slopes> {
    let g0 = params.g_star;
    Ok(Slopes {
        fbr: response_slope(model, &params.fbr(), g0)?,
        tdp: response_slope(model, &params.tdp(), g0)?,
        so: response_slope(model, &Mechanism::SocialOptimum, g0)?,
    })
}

pub fn robustness_report(
    model: &ReducedModel,
    epsilons: &[f64],
    direction: Direction,
    settings: &SolverSettings,
) -> Result<RobustnessReport> {
    let so = solve_social_optimum(model, settings)?;
    let parameters = optimal_parameters_at(model, so.public_good);
    let slopes = slopes_at(model, &parameters)?;
    let classification = classify_conditions(slopes, model, &parameters);
    let rows = epsilons
        .par_iter()
        .map(|&epsilon| {
            perturbed_equilibria(model, Perturbation { epsilon, direction }, &parameters, slopes, settings)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RobustnessReport { direction, parameters, slopes, classification, rows })
}

/// Half-width of the ε window in which the ordering is asserted.
pub const SMALL_EPSILON: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum VerdictStatus {
    Pass,
    Fail,
    /// ε = 0: all welfares coincide.
    Degenerate,
    /// Outside the small-ε window or at a boundary classification: reported only.
    Reported,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VerdictRow {
    pub epsilon: f64,
    /// Predicted mechanism strictly closer to G*(ε).
    pub distance_order: bool,
    /// W_worse < W_better < W*.
    pub welfare_order: bool,
    pub status: VerdictStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub condition: Condition,
    pub rows: Vec<VerdictRow>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.status != VerdictStatus::Fail)
    }
}

/// Checks the distance and welfare orderings implied by the classification
/// at every ε of the report.
pub fn robustness_verdict(report: &RobustnessReport) -> Verdict {
    let condition = report.classification.condition;
    let rows = report
        .rows
        .iter()
        .map(|row| {
            let (better, worse, d_better, d_worse) = match condition {
                Condition::C2 => (row.tdp, row.fbr, row.tdp_distance, row.fbr_distance),
                _ => (row.fbr, row.tdp, row.fbr_distance, row.tdp_distance),
            };
            let distance_order = d_better < d_worse;
            let welfare_order = worse.welfare < better.welfare && better.welfare < row.optimum.welfare;
            let status = if row.epsilon == 0.0 {
                VerdictStatus::Degenerate
            } else if condition == Condition::Boundary || row.epsilon.abs() > SMALL_EPSILON {
                VerdictStatus::Reported
            } else if distance_order && welfare_order {
                VerdictStatus::Pass
            } else {
                VerdictStatus::Fail
            };
            VerdictRow { epsilon: row.epsilon, distance_order, welfare_order, status }
        })
        .collect();
    Verdict { condition, rows }
}
