//! Social optimum, optimal mechanism parameters, and parameter sweeps.

use rayon::prelude::*;
use serde::Serialize;

use crate::equilibrium::{solve_equilibrium, Boundary, EquilibriumResult, SolverSettings};
use crate::error::{Error, Result};
use crate::mechanism::{Mechanism, MechanismKind};
use crate::model::ReducedModel;

/// Welfare-maximizing allocation. Its optimality conditions are the
/// equilibrium FOCs with the unit reward h′(G)(D_p − G), so the same solver
/// applies.
pub fn solve_social_optimum(model: &ReducedModel, settings: &SolverSettings) -> Result<EquilibriumResult> {
    solve_equilibrium(model, &Mechanism::SocialOptimum, settings)
}

/// Parameters implementing the social optimum: r* = h′(G*)(D_p − G*) and R* = G*·r*.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OptimalParameters {
    pub g_star: f64,
    pub rate: f64,
    pub budget: f64,
}

impl OptimalParameters {
    pub fn fbr(&self) -> Mechanism {
        Mechanism::Fbr { budget: self.budget }
    }

    pub fn tdp(&self) -> Mechanism {
        Mechanism::Tdp { rate: self.rate }
    }

    pub fn mechanism(&self, kind: MechanismKind) -> Mechanism {
        match kind {
            MechanismKind::Fbr => self.fbr(),
            MechanismKind::Tdp => self.tdp(),
            MechanismKind::None => Mechanism::None,
            MechanismKind::SocialOptimum => Mechanism::SocialOptimum,
        }
    }

    pub fn parameter(&self, kind: MechanismKind) -> Option<f64> {
        self.mechanism(kind).parameter()
    }
}

pub fn optimal_parameters_at(model: &ReducedModel, g_star: f64) -> OptimalParameters {
    let rate = Mechanism::SocialOptimum.unit_reward(model, g_star);
    OptimalParameters { g_star, rate, budget: g_star * rate }
}

pub fn optimal_parameters(model: &ReducedModel, settings: &SolverSettings) -> Result<OptimalParameters> {
    let so = solve_social_optimum(model, settings)?;
    Ok(optimal_parameters_at(model, so.public_good))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImplementationReport {
    pub parameters: OptimalParameters,
    pub optimum: EquilibriumResult,
    pub fbr: EquilibriumResult,
    pub tdp: EquilibriumResult,
    /// |G_eq − G*| / max(G*, tiny).
    pub fbr_relative_gap: f64,
    pub tdp_relative_gap: f64,
    /// max over nodes of |x_eq − x*|.
    pub fbr_max_node_gap: f64,
    pub tdp_max_node_gap: f64,
}

impl ImplementationReport {
    pub fn passed(&self, relative_tol: f64, node_tol: f64) -> bool {
        self.fbr_relative_gap <= relative_tol
            && self.tdp_relative_gap <= relative_tol
            && self.fbr_max_node_gap <= node_tol
            && self.tdp_max_node_gap <= node_tol
    }
}

/// Solves FBR(R*) and TDP(r*) and compares both with the social optimum.
pub fn verify_optimal_implementation(model: &ReducedModel, settings: &SolverSettings) -> Result<ImplementationReport> {
    let optimum = solve_social_optimum(model, settings)?;
    let parameters = optimal_parameters_at(model, optimum.public_good);
    let fbr = solve_equilibrium(model, &parameters.fbr(), settings)?;
    let tdp = solve_equilibrium(model, &parameters.tdp(), settings)?;
    let scale = optimum.public_good.max(f64::MIN_POSITIVE);
    let node_gap = |r: &EquilibriumResult| {
        r.contributions.iter().zip(&optimum.contributions).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    Ok(ImplementationReport {
        fbr_relative_gap: (fbr.public_good - optimum.public_good).abs() / scale,
        tdp_relative_gap: (tdp.public_good - optimum.public_good).abs() / scale,
        fbr_max_node_gap: node_gap(&fbr),
        tdp_max_node_gap: node_gap(&tdp),
        parameters,
        optimum,
        fbr,
        tdp,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub parameter: f64,
    pub public_good: f64,
    /// Equilibrium welfare before the participation rule.
    pub welfare: f64,
    /// W > 0: every user subscribes.
    pub participation: bool,
    /// Welfare with the participation rule applied (0 when nobody subscribes).
    pub recorded_welfare: f64,
    pub saturated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub kind: MechanismKind,
    pub points: Vec<SweepPoint>,
    /// Smallest parameter with G_eq > 0.
    pub lower_threshold: Option<f64>,
    /// Smallest parameter with G_eq = D_p.
    pub saturation_threshold: Option<f64>,
    /// Parameter beyond which W ≤ 0 and users stop subscribing.
    pub participation_limit: Option<f64>,
    /// Index of the grid point with the largest recorded welfare, ties broken
    /// by raw welfare.
    pub argmax: usize,
}

impl SweepResult {
    pub fn argmax_parameter(&self) -> f64 {
        self.points[self.argmax].parameter
    }

    /// Single rise-then-fall pattern of the raw welfare: once the discrete
    /// differences turn negative (beyond `tol`) they never turn positive again.
    pub fn is_unimodal(&self, tol: f64) -> bool {
        let mut falling = false;
        for w in self.points.windows(2) {
            let diff = w[1].welfare - w[0].welfare;
            if diff < -tol {
                falling = true;
            } else if diff > tol && falling {
                return false;
            }
        }
        true
    }

    /// Whether G_eq is non-decreasing along the grid up to `tol`.
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.points.windows(2).all(|w| w[1].public_good >= w[0].public_good - tol)
    }
}

const THRESHOLD_RTOL: f64 = 1e-6;

fn mechanism_for(kind: MechanismKind, parameter: f64) -> Result<Mechanism> {
    match kind {
        MechanismKind::Fbr | MechanismKind::Tdp => Mechanism::with_parameter(kind, parameter),
        other => Err(Error::Mechanism(format!("cannot sweep the parameterless mechanism '{other}'"))),
    }
}

fn solve_point(model: &ReducedModel, kind: MechanismKind, parameter: f64, settings: &SolverSettings) -> Result<SweepPoint> {
    let res = solve_equilibrium(model, &mechanism_for(kind, parameter)?, settings)?;
    let participation = res.welfare > 0.0;
    Ok(SweepPoint {
        parameter,
        public_good: res.public_good,
        welfare: res.welfare,
        participation,
        recorded_welfare: if participation { res.welfare } else { 0.0 },
        saturated: res.boundary == Boundary::Upper,
    })
}

/// Bisects a predicate that is false at `lo` and true at `hi` until the
/// bracket is `THRESHOLD_RTOL` of the initial `hi`; returns the upper end.
fn refine<F: Fn(f64) -> Result<bool>>(pred: F, mut lo: f64, mut hi: f64) -> Result<f64> {
    let width = THRESHOLD_RTOL * hi.abs();
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// First transition of `flag` from false to true, refined by bisection. When
/// the flag already holds at the first grid point the search extends down to
/// parameter 0.
fn first_transition<F>(points: &[SweepPoint], flag: impl Fn(&SweepPoint) -> bool, pred: F) -> Result<Option<f64>>
where
    F: Fn(f64) -> Result<bool>,
{
    let Some(k) = points.iter().position(&flag) else { return Ok(None) };
    if k > 0 {
        return refine(pred, points[k - 1].parameter, points[k].parameter).map(Some);
    }
    let first = points[0].parameter;
    if first <= 0.0 || pred(0.0)? {
        Ok(Some(first.min(0.0)))
    } else {
        refine(pred, 0.0, first).map(Some)
    }
}

/// Equilibria over a sorted grid of parameters for FBR or TDP, with the
/// threshold values located between grid points.
pub fn sweep(
    model: &ReducedModel,
    kind: MechanismKind,
    grid: &[f64],
    settings: &SolverSettings,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::Mechanism("empty sweep grid".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Mechanism("sweep grid must be strictly increasing".into()));
    }
    let points: Vec<SweepPoint> =
        grid.par_iter().map(|&p| solve_point(model, kind, p, settings)).collect::<Result<_>>()?;

    let floor = model.benefit_fn().domain_floor();
    let positive = |p: &SweepPoint| p.public_good > floor;
    let lower_threshold =
        first_transition(&points, positive, |p| Ok(positive(&solve_point(model, kind, p, settings)?)))?;
    let saturation_threshold =
        first_transition(&points, |p| p.saturated, |p| Ok(solve_point(model, kind, p, settings)?.saturated))?;

    let argmax = points
        .iter()
        .enumerate()
        .max_by(|a, b| {
            let key = |p: &SweepPoint| (p.recorded_welfare, p.welfare);
            let (ka, kb) = (key(a.1), key(b.1));
            ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
        })
        .map(|(i, _)| i)
        .unwrap_or(0);

    // Participation is lost on the far side of the welfare peak.
    let beyond = &points[argmax..];
    let participation_limit = match beyond.iter().position(|p| !p.participation) {
        Some(0) | None => None,
        Some(k) => Some(refine(
            |p| Ok(!solve_point(model, kind, p, settings)?.participation),
            beyond[k - 1].parameter,
            beyond[k].parameter,
        )?),
    };

    Ok(SweepResult { kind, points, lower_threshold, saturation_threshold, participation_limit, argmax })
}
