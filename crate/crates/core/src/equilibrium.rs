//! Best responses and the fixed-point Nash equilibrium.
//!
//! Given a public-good level `G`, each type best-responds by equating its
//! marginal cost of shifting with the externality it faces, `r_j(G) − h(G)`,
//! clamped to `[0, d_p]`. Integrating over types gives the aggregate response
//! `G^resp(G)`, which is continuous and non-increasing; the equilibrium is the
//! unique root of `Φ(G) = G^resp(G) − G`, located by bisection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::{Mechanism, FBR_FLOOR};
use crate::model::ReducedModel;
use crate::roots::bisect_decreasing;

/// Stopping rules for the fixed-point bisection, relative to D_p.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Stop once |Φ(G)| < root_tol·D_p.
    pub root_tol: f64,
    /// Stop once the bracket is narrower than width_tol·D_p.
    pub width_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { root_tol: 1e-9, width_tol: 1e-10, max_iter: 200 }
    }
}

/// Where the equilibrium sits in its bracket.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Boundary {
    /// Φ ≤ 0 at the lower end: nobody contributes beyond it.
    Lower,
    Interior,
    /// Φ ≥ 0 at D_p: every type reduces fully.
    Upper,
}

/// Peak/off-peak congestion at an outcome.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Congestion {
    pub peak_load: f64,
    pub off_peak_load: f64,
    pub peak_delay_s: f64,
    pub off_peak_delay_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub mechanism: Mechanism,
    /// Fixed point G^(eq) located by the bisection.
    pub public_good: f64,
    /// Σ w·x at the returned contributions.
    pub aggregate: f64,
    pub contributions: Vec<f64>,
    pub shifted: Vec<f64>,
    pub welfare: f64,
    pub congestion: Option<Congestion>,
    pub price_increase: f64,
    pub foc_residual: f64,
    pub iterations: usize,
    pub boundary: Boundary,
}

fn check_level(model: &ReducedModel, g: f64) -> Result<()> {
    let d = model.aggregate_demand();
    if (0.0..=d).contains(&g) {
        Ok(())
    } else {
        Err(Error::OutOfRange { x: g, d_p: d })
    }
}

/// Best response of one type to the externality `target = r_j(G) − h(G)`.
fn respond(model: &ReducedModel, theta: f64, target: f64) -> Result<f64> {
    let d_p = model.peak_cap();
    let low = model.marginal_cost(theta, 0.0);
    let high = model.marginal_cost(theta, d_p);
    if target.is_nan() || !(low < high) {
        return Err(Error::NonBracketing { theta, target });
    }
    if target <= low {
        return Ok(0.0);
    }
    if target >= high {
        return Ok(d_p);
    }
    Ok(bisect_decreasing(|x| target - model.marginal_cost(theta, x), 0.0, d_p))
}

/// Externality r_j(G) − h(G) faced by every type at level `g`.
pub fn externality(model: &ReducedModel, mech: &Mechanism, g: f64) -> f64 {
    mech.unit_reward(model, g) - model.h(g)
}

/// x^(resp)_θ(G): the clamped inverse of the marginal cost at the externality.
pub fn best_response(model: &ReducedModel, mech: &Mechanism, theta: f64, g: f64) -> Result<f64> {
    check_level(model, g)?;
    if mech.is_singular_at_zero() && g <= 0.0 {
        return Err(Error::Mechanism("fixed-budget rebate evaluated at G = 0".into()));
    }
    respond(model, theta, externality(model, mech, g))
}

/// Best responses of every grid node at level `g`.
pub fn response_profile(model: &ReducedModel, mech: &Mechanism, g: f64) -> Result<Vec<f64>> {
    check_level(model, g)?;
    if mech.is_singular_at_zero() && g <= 0.0 {
        return Err(Error::Mechanism("fixed-budget rebate evaluated at G = 0".into()));
    }
    let target = externality(model, mech, g);
    model.grid().nodes().iter().map(|n| respond(model, n.theta, target)).collect()
}

/// G^(resp)(G) = ∫ x^(resp)_θ(G) dμ(θ).
pub fn aggregate_response(model: &ReducedModel, mech: &Mechanism, g: f64) -> Result<f64> {
    let xs = response_profile(model, mech, g)?;
    Ok(weighted_sum(model, &xs))
}

fn weighted_sum(model: &ReducedModel, xs: &[f64]) -> f64 {
    model.grid().nodes().iter().zip(xs).map(|(n, x)| n.weight * x).sum()
}

/// Aggregate welfare of a contribution profile. Transfers cancel in
/// aggregate, so the mechanism does not enter.
pub fn welfare(model: &ReducedModel, contributions: &[f64]) -> f64 {
    let g = weighted_sum(model, contributions);
    let room = model.aggregate_demand() - g;
    let congestion = if room == 0.0 { 0.0 } else { model.h(g) * room };
    let shifting: f64 = model
        .grid()
        .nodes()
        .iter()
        .zip(contributions)
        .map(|(n, &x)| n.weight * model.cost(n.theta, x))
        .sum();
    let latency_free: f64 = model
        .grid()
        .nodes()
        .iter()
        .zip(model.profiles())
        .map(|(n, p)| n.weight * p.latency_free_utility)
        .sum();
    congestion - shifting + latency_free - model.subscription_price() * model.grid().total_mass()
}

/// Largest violation of the first-order conditions at `(x, G)`.
pub fn foc_residual(model: &ReducedModel, mech: &Mechanism, contributions: &[f64], g: f64) -> f64 {
    let d_p = model.peak_cap();
    let target = externality(model, mech, g);
    model
        .grid()
        .nodes()
        .iter()
        .zip(contributions)
        .map(|(n, &x)| {
            let marginal = target - model.marginal_cost(n.theta, x);
            if x <= 0.0 {
                marginal.max(0.0)
            } else if x >= d_p {
                (-marginal).max(0.0)
            } else {
                marginal.abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Lower end of the fixed-point bracket for `mech`.
pub fn bracket_floor(model: &ReducedModel, mech: &Mechanism) -> f64 {
    let floor = model.benefit_fn().domain_floor();
    if mech.is_singular_at_zero() {
        floor.max(FBR_FLOOR * model.aggregate_demand())
    } else {
        floor
    }
}

/// Φ(G) = G^resp(G) − G.
pub fn fixed_point_gap(model: &ReducedModel, mech: &Mechanism, g: f64) -> Result<f64> {
    Ok(aggregate_response(model, mech, g)? - g)
}

/// Unique Nash equilibrium of the game under `mech`.
pub fn solve_equilibrium(
    model: &ReducedModel,
    mech: &Mechanism,
    settings: &SolverSettings,
) -> Result<EquilibriumResult> {
    let d = model.aggregate_demand();
    let mut lo = bracket_floor(model, mech);
    let mut hi = d;
    let phi_lo = fixed_point_gap(model, mech, lo)?;
    let (g, iterations, boundary) = if phi_lo <= 0.0 {
        (lo, 0, Boundary::Lower)
    } else if fixed_point_gap(model, mech, hi)? >= 0.0 {
        (hi, 0, Boundary::Upper)
    } else {
        let mut found = None;
        for it in 1..=settings.max_iter {
            let mid = 0.5 * (lo + hi);
            let phi = fixed_point_gap(model, mech, mid)?;
            if phi.abs() < settings.root_tol * d || hi - lo < settings.width_tol * d {
                found = Some((mid, it));
                break;
            }
            if phi > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (g, it) = found.ok_or(Error::MaxIterations(settings.max_iter))?;
        (g, it, Boundary::Interior)
    };
    assemble(model, mech, g, iterations, boundary)
}

/// Evaluates every reported quantity at the fixed point `g`.
pub(crate) fn assemble(
    model: &ReducedModel,
    mech: &Mechanism,
    g: f64,
    iterations: usize,
    boundary: Boundary,
) -> Result<EquilibriumResult> {
    let contributions = response_profile(model, mech, g)?;
    let shifted: Vec<f64> = model
        .grid()
        .nodes()
        .iter()
        .zip(&contributions)
        .map(|(n, &x)| model.cost_fn().optimal_shift(n.theta, x))
        .collect();
    let aggregate = weighted_sum(model, &contributions);
    let congestion = model.network().map(|net| {
        let peak_load = (model.aggregate_demand() - g) / net.peak_volume();
        let off_peak_load = (net.off_peak_base_demand + weighted_sum(model, &shifted)) / net.off_peak_volume();
        Congestion {
            peak_load,
            off_peak_load,
            peak_delay_s: net.delay(peak_load),
            off_peak_delay_s: net.delay(off_peak_load),
        }
    });
    Ok(EquilibriumResult {
        mechanism: *mech,
        public_good: g,
        aggregate,
        welfare: welfare(model, &contributions),
        foc_residual: foc_residual(model, mech, &contributions, g),
        price_increase: mech.price_increase(model, g),
        contributions,
        shifted,
        congestion,
        iterations,
        boundary,
    })
}

/// All fixed points found by scanning Φ at `starts + 1` equally spaced
/// points of the bracket and bisecting every sign change. Corner solutions
/// count as roots.
pub fn fixed_point_roots(model: &ReducedModel, mech: &Mechanism, starts: usize) -> Result<Vec<f64>> {
    let lo = bracket_floor(model, mech);
    let hi = model.aggregate_demand();
    let n = starts.max(1);
    let gs: Vec<f64> = (0..=n).map(|k| (lo + (hi - lo) * k as f64 / n as f64).min(hi)).collect();
    let phis: Vec<f64> = gs.iter().map(|&g| fixed_point_gap(model, mech, g)).collect::<Result<_>>()?;
    let mut roots = Vec::new();
    if phis[0] <= 0.0 {
        roots.push(lo);
    }
    for k in 0..n {
        let (a, b) = (phis[k], phis[k + 1]);
        if a > 0.0 && b <= 0.0 {
            if b == 0.0 {
                roots.push(gs[k + 1]);
            } else {
                let root = bisect_decreasing(
                    |g| fixed_point_gap(model, mech, g).unwrap_or(f64::NAN),
                    gs[k],
                    gs[k + 1],
                );
                roots.push(root);
            }
        } else if a <= 0.0 && b > 0.0 {
            // An increasing crossing would be a second root.
            roots.push(0.5 * (gs[k] + gs[k + 1]));
        }
    }
    if phis[n] > 0.0 {
        roots.push(hi);
    }
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * hi);
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{example_one, two_atom};

    // Closed forms for the two-atom instance with s = 2 − G: best responses are
    // x_θ = (r_j(G) + s²/2)/k_θ with k = (1, 2), so G^resp(G) = 1.5·(r_j + s²/2).
    fn s_none() -> f64 {
        // 0.75 s² + s − 2 = 0
        (-1.0 + 7f64.sqrt()) / 1.5
    }

    #[test]
    fn two_atom_best_responses() {
        let m = two_atom();
        let none = Mechanism::None;
        assert!((best_response(&m, &none, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((best_response(&m, &none, 1.0, 1.0).unwrap() - 0.25).abs() < 1e-15);
        assert!((aggregate_response(&m, &none, 1.0).unwrap() - 0.75).abs() < 1e-15);

        // SO at G = 1.25358: x_a = 1.5 (2 − G)².
        let g = 1.25358;
        let expected = 1.5 * (2.0 - g) * (2.0 - g);
        let xa = best_response(&m, &Mechanism::SocialOptimum, 0.0, g).unwrap();
        assert!((xa - expected).abs() < 1e-14);
        assert!((xa - 0.83571).abs() < 1e-5);
    }

    #[test]
    fn first_branch_of_the_clamp() {
        // No congestion at G = D_p and no reward: only the baseline (0) remains.
        let m = two_atom();
        assert_eq!(best_response(&m, &Mechanism::None, 0.0, 2.0).unwrap(), 0.0);
        assert_eq!(aggregate_response(&m, &Mechanism::None, 2.0).unwrap(), 0.0);
        let m1 = example_one();
        let g = aggregate_response(&m1, &Mechanism::None, m1.aggregate_demand()).unwrap();
        let baseline: f64 = m1.grid().integrate(|i, _| m1.profiles()[i].baseline);
        assert_eq!(g, baseline);
    }

    #[test]
    fn full_reduction_branch() {
        let m = two_atom();
        // r − h ≥ c′(d_p) = 2 for both atoms.
        let rich = Mechanism::Tdp { rate: 5.0 };
        assert_eq!(best_response(&m, &rich, 1.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn out_of_range_levels() {
        let m = two_atom();
        assert!(best_response(&m, &Mechanism::None, 0.0, 2.5).is_err());
        assert!(best_response(&m, &Mechanism::Fbr { budget: 1.0 }, 0.0, 0.0).is_err());
    }

    #[test]
    fn two_atom_equilibrium_matches_closed_form() {
        let m = two_atom();
        let res = solve_equilibrium(&m, &Mechanism::None, &SolverSettings::default()).unwrap();
        let s = s_none();
        assert!((res.public_good - (2.0 - s)).abs() < 1e-8);
        assert!((res.public_good - 0.90283).abs() < 1e-5);
        assert!((res.contributions[0] - s * s / 2.0).abs() < 1e-8);
        assert!((res.contributions[1] - s * s / 4.0).abs() < 1e-8);
        assert!(res.foc_residual < 1e-9);
        assert_eq!(res.boundary, Boundary::Interior);
        assert!(res.congestion.is_none());

        let zero = solve_equilibrium(&m, &Mechanism::Fbr { budget: 0.0 }, &SolverSettings::default()).unwrap();
        assert_eq!(zero.public_good, res.public_good);
    }

    #[test]
    fn two_atom_welfare() {
        let m = two_atom();
        let s = s_none();
        let (xa, xb) = (s * s / 2.0, s * s / 4.0);
        // −s³/2 − (x_a²/2 + x_b²), evaluated independently.
        let expected = -s.powi(3) / 2.0 - (xa * xa / 2.0 + xb * xb);
        assert!((welfare(&m, &[xa, xb]) - expected).abs() < 1e-14);
        assert!((expected - (-0.932_074_462_537_657)).abs() < 1e-12);
        // All-zero profile: h(0)·D_p + Σū − p·μ(Θ) = −2·2.
        assert_eq!(welfare(&m, &[0.0, 0.0]), -4.0);
    }

    #[test]
    fn foc_residual_examples() {
        let m = two_atom();
        // (0.5, 0.25) solves the FOCs at G = 1 but is not a fixed point.
        assert!(foc_residual(&m, &Mechanism::None, &[0.5, 0.25], 1.0) < 1e-15);
        assert!((fixed_point_gap(&m, &Mechanism::None, 1.0).unwrap() + 0.25).abs() < 1e-15);

        let res = solve_equilibrium(&m, &Mechanism::None, &SolverSettings::default()).unwrap();
        let moved = [res.contributions[0] + 0.1, res.contributions[1]];
        let r = foc_residual(&m, &Mechanism::None, &moved, res.public_good);
        assert!((r - 0.1).abs() < 1e-8);
    }

    #[test]
    fn corner_equilibria() {
        let m = two_atom();
        let all = solve_equilibrium(&m, &Mechanism::Tdp { rate: 10.0 }, &SolverSettings::default()).unwrap();
        assert_eq!(all.boundary, Boundary::Upper);
        assert_eq!(all.public_good, 2.0);
        assert!(all.contributions.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn example_one_response_is_bounded_and_decreasing() {
        let m = example_one();
        let fbr = Mechanism::Fbr { budget: 5500.0 };
        let at_565 = aggregate_response(&m, &fbr, 565.0).unwrap();
        let at_500 = aggregate_response(&m, &fbr, 500.0).unwrap();
        assert!((0.0..=7200.0).contains(&at_565));
        assert!(at_565 < at_500);
    }

    #[test]
    fn unique_root_under_multistart() {
        let m = two_atom();
        for mech in [Mechanism::None, Mechanism::SocialOptimum, Mechanism::Fbr { budget: 0.7 }] {
            let roots = fixed_point_roots(&m, &mech, 10).unwrap();
            assert_eq!(roots.len(), 1, "{mech}: {roots:?}");
        }
    }
}
