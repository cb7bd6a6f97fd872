//! Shared test instances.

use crate::model::{reduce_model, BenefitSpec, CostSpec, Network, Pricing, Primitives, ReducedModel};
use crate::population::{build_type_grid, PopulationSpec};

/// Two unit atoms with c′ = x and c′ = 2x, d_p = 1, h(G) = −(2 − G)²/2, ū = p = 0.
pub(crate) fn two_atom() -> ReducedModel {
    let grid = build_type_grid(
        &PopulationSpec::Atoms { thetas: vec![0.0, 1.0], masses: vec![1.0, 1.0] },
        1,
        1.0,
    )
    .unwrap();
    let prim = Primitives {
        cost: CostSpec::Quadratic { scale: 1.0, type_slope: 1.0, baseline_utility: 0.0 },
        benefit: BenefitSpec::Quadratic { curvature: 1.0 },
        pricing: Pricing { subscription: 0.0, usage: 0.0 },
        network: None,
    };
    reduce_model(&grid, &prim).unwrap()
}

pub(crate) fn example_one_primitives() -> Primitives {
    Primitives {
        cost: CostSpec::LogUtility { peak_scale: 130.0, type_slope: 1.0, off_peak_ratio: 0.1 },
        benefit: BenefitSpec::PsDelay { disutility_scale: 0.065 },
        pricing: Pricing { subscription: 50.0, usage: 0.0 },
        network: Some(Network {
            capacity_gbps: 1.0,
            peak_hours: 2.0,
            off_peak_hours: 22.0,
            base_delay_s: 1.0,
            off_peak_base_demand: 7200.0,
        }),
    }
}

pub(crate) fn example_one_with(resolution: usize, prim: &Primitives) -> ReducedModel {
    let grid = build_type_grid(
        &PopulationSpec::Uniform { domain: [0.0, 1.0], total_mass: 1000.0 },
        resolution,
        7.2,
    )
    .unwrap();
    reduce_model(&grid, prim).unwrap()
}

pub(crate) fn example_one() -> ReducedModel {
    example_one_with(1000, &example_one_primitives())
}

pub(crate) fn example_two() -> ReducedModel {
    let mut prim = example_one_primitives();
    prim.benefit = BenefitSpec::Power { scale: 1.2e-3, exponent: 0.95 };
    example_one_with(1000, &prim)
}
