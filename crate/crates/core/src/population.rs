//! Discretized user-type populations.
//!
//! A population is either a finite list of atoms (type, mass) or a density on
//! a closed interval of types. Densities are discretized with the midpoint
//! rule on a uniform grid; each node carries the mass of its cell.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Population descriptor before discretization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PopulationSpec {
    /// Constant density on `domain` carrying `total_mass`.
    Uniform { domain: [f64; 2], total_mass: f64 },
    /// Piecewise-linear density given at equally spaced knots spanning `domain`.
    Density { domain: [f64; 2], knots: Vec<f64> },
    /// Explicit atoms.
    Atoms { thetas: Vec<f64>, masses: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TypeNode {
    pub theta: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TypeGrid {
    nodes: Vec<TypeNode>,
    total_mass: f64,
    peak_cap: f64,
    domain: (f64, f64),
    /// Cell width for density grids; `None` for atom lists.
    cell_width: Option<f64>,
}

impl TypeGrid {
    pub fn nodes(&self) -> &[TypeNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// μ(Θ).
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Maximum peak-time demand of a single user, d_p.
    pub fn peak_cap(&self) -> f64 {
        self.peak_cap
    }

    /// Aggregate maximum peak-time demand D_p = d_p μ(Θ).
    pub fn aggregate_demand(&self) -> f64 {
        self.peak_cap * self.total_mass
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn cell_width(&self) -> Option<f64> {
        self.cell_width
    }

    /// Weighted sum Σ w_i f(node_i).
    pub fn integrate<F: FnMut(usize, &TypeNode) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| n.weight * f(i, n))
            .sum()
    }

    /// Draws a type from μ/μ(Θ): a node is picked by mass, then jittered
    /// uniformly inside its cell for density grids.
    pub fn sample_type<R: Rng + ?Sized>(&self, cumulative: &[f64], rng: &mut R) -> f64 {
        let u = rng.random::<f64>() * self.total_mass;
        let idx = cumulative.partition_point(|&c| c <= u).min(self.nodes.len() - 1);
        let theta = self.nodes[idx].theta;
        match self.cell_width {
            Some(h) => theta + (rng.random::<f64>() - 0.5) * h,
            None => theta,
        }
    }

    /// Prefix sums of node weights, for use with [`TypeGrid::sample_type`].
    pub fn cumulative_weights(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .scan(0.0, |acc, n| {
                *acc += n.weight;
                Some(*acc)
            })
            .collect()
    }
}

/// Discretizes a population. `resolution` is the number of midpoint cells for
/// density populations and is ignored for atom lists.
pub fn build_type_grid(spec: &PopulationSpec, resolution: usize, peak_cap: f64) -> Result<TypeGrid> {
    if !(peak_cap > 0.0 && peak_cap.is_finite()) {
        return Err(Error::Population(format!("d_p must be positive, got {peak_cap}")));
    }
    match spec {
        PopulationSpec::Uniform { domain, total_mass } => {
            check_domain(domain)?;
            if !(*total_mass > 0.0 && total_mass.is_finite()) {
                return Err(Error::Population(format!(
                    "non-positive density: total mass {total_mass}"
                )));
            }
            let density = total_mass / (domain[1] - domain[0]);
            midpoint_grid(domain, resolution, peak_cap, |_| density, *total_mass)
        }
        PopulationSpec::Density { domain, knots } => {
            check_domain(domain)?;
            if knots.len() < 2 {
                return Err(Error::Population("density needs at least two knots".into()));
            }
            if let Some(v) = knots.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return Err(Error::Population(format!("non-positive density value {v}")));
            }
            let span = domain[1] - domain[0];
            let step = span / (knots.len() - 1) as f64;
            let exact: f64 = knots.windows(2).map(|w| 0.5 * (w[0] + w[1]) * step).sum();
            let eval = |t: f64| {
                let s = ((t - domain[0]) / step).clamp(0.0, (knots.len() - 1) as f64);
                let i = (s.floor() as usize).min(knots.len() - 2);
                let frac = s - i as f64;
                knots[i] * (1.0 - frac) + knots[i + 1] * frac
            };
            midpoint_grid(domain, resolution, peak_cap, eval, exact)
        }
        PopulationSpec::Atoms { thetas, masses } => {
            if thetas.is_empty() {
                return Err(Error::Population("empty atom list".into()));
            }
            if thetas.len() != masses.len() {
                return Err(Error::Population(format!(
                    "{} atom types but {} masses",
                    thetas.len(),
                    masses.len()
                )));
            }
            if let Some(m) = masses.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
                return Err(Error::Population(format!("atom mass must be positive, got {m}")));
            }
            if let Some(t) = thetas.iter().find(|t| !t.is_finite()) {
                return Err(Error::Population(format!("atom type must be finite, got {t}")));
            }
            let nodes: Vec<TypeNode> = thetas
                .iter()
                .zip(masses)
                .map(|(&theta, &weight)| TypeNode { theta, weight })
                .collect();
            let lo = thetas.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = thetas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Ok(TypeGrid {
                total_mass: masses.iter().sum(),
                nodes,
                peak_cap,
                domain: (lo, hi),
                cell_width: None,
            })
        }
    }
}

fn check_domain(domain: &[f64; 2]) -> Result<()> {
    if domain[0].is_finite() && domain[1].is_finite() && domain[1] > domain[0] {
        Ok(())
    } else {
        Err(Error::Population(format!("invalid type domain [{}, {}]", domain[0], domain[1])))
    }
}

fn midpoint_grid<F: Fn(f64) -> f64>(
    domain: &[f64; 2],
    resolution: usize,
    peak_cap: f64,
    density: F,
    exact_mass: f64,
) -> Result<TypeGrid> {
    if resolution == 0 {
        return Err(Error::Population("resolution must be at least 1".into()));
    }
    let h = (domain[1] - domain[0]) / resolution as f64;
    let mut nodes: Vec<TypeNode> = (0..resolution)
        .map(|i| {
            let theta = domain[0] + (i as f64 + 0.5) * h;
            TypeNode { theta, weight: density(theta) * h }
        })
        .collect();
    // Rescale so the discrete mass equals the exact integral of the density.
    let raw: f64 = nodes.iter().map(|n| n.weight).sum();
    let scale = exact_mass / raw;
    if (scale - 1.0).abs() > 1e-12 {
        for n in &mut nodes {
            n.weight *= scale;
        }
    }
    Ok(TypeGrid {
        nodes,
        total_mass: exact_mass,
        peak_cap,
        domain: (domain[0], domain[1]),
        cell_width: Some(h),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_one_population() {
        let spec = PopulationSpec::Uniform { domain: [0.0, 1.0], total_mass: 1000.0 };
        let grid = build_type_grid(&spec, 1000, 7.2).unwrap();
        assert_eq!(grid.len(), 1000);
        assert!(grid.nodes().iter().all(|n| (n.weight - 1.0).abs() < 1e-12));
        assert!((grid.total_mass() - 1000.0).abs() < 1e-9);
        assert!((grid.aggregate_demand() - 7200.0).abs() < 1e-9);
        let demand: f64 = grid.integrate(|_, _| 7.2);
        assert!((demand - grid.aggregate_demand()).abs() < 1e-9);
        assert!((grid.nodes()[0].theta - 0.0005).abs() < 1e-15);
    }

    #[test]
    fn single_and_double_atoms() {
        let one = PopulationSpec::Atoms { thetas: vec![0.0], masses: vec![1.0] };
        let g = build_type_grid(&one, 1, 1.0).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.aggregate_demand(), 1.0);

        let two = PopulationSpec::Atoms { thetas: vec![0.0, 1.0], masses: vec![1.0, 1.0] };
        let g = build_type_grid(&two, 1, 1.0).unwrap();
        assert_eq!(g.aggregate_demand(), 2.0);
    }

    #[test]
    fn rejects_bad_populations() {
        let empty = PopulationSpec::Atoms { thetas: vec![], masses: vec![] };
        assert!(matches!(build_type_grid(&empty, 1, 1.0), Err(Error::Population(_))));
        let neg = PopulationSpec::Uniform { domain: [0.0, 1.0], total_mass: -3.0 };
        assert!(build_type_grid(&neg, 10, 1.0).is_err());
        let dens = PopulationSpec::Density { domain: [0.0, 1.0], knots: vec![1.0, 0.0, 2.0] };
        assert!(build_type_grid(&dens, 10, 1.0).is_err());
        let uni = PopulationSpec::Uniform { domain: [0.0, 1.0], total_mass: 1.0 };
        assert!(build_type_grid(&uni, 0, 1.0).is_err());
    }

    #[test]
    fn density_mass_is_exact_integral() {
        // Linear density 1 + θ on [0, 1] has mass 1.5.
        let spec = PopulationSpec::Density { domain: [0.0, 1.0], knots: vec![1.0, 2.0] };
        let grid = build_type_grid(&spec, 7, 2.0).unwrap();
        assert!((grid.total_mass() - 1.5).abs() < 1e-12);
        let sum: f64 = grid.nodes().iter().map(|n| n.weight).sum();
        assert!((sum - 1.5).abs() < 1e-12);
        assert!((grid.aggregate_demand() - 3.0).abs() < 1e-12);
        // Heavier cells at the top of the domain.
        assert!(grid.nodes()[6].weight > grid.nodes()[0].weight);
    }

    #[test]
    fn sampling_stays_in_domain() {
        use rand::SeedableRng;
        let spec = PopulationSpec::Uniform { domain: [0.0, 1.0], total_mass: 10.0 };
        let grid = build_type_grid(&spec, 10, 1.0).unwrap();
        let cum = grid.cumulative_weights();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let t = grid.sample_type(&cum, &mut rng);
            assert!((0.0..=1.0).contains(&t));
        }
    }
}
