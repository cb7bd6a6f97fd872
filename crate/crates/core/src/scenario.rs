//! TOML scenario files: a complete problem instance with solver settings.

use serde::{Deserialize, Serialize};

use crate::equilibrium::SolverSettings;
use crate::error::{Error, Result};
use crate::model::{reduce_model, BenefitSpec, CostSpec, Network, Pricing, Primitives, ReducedModel};
use crate::population::{build_type_grid, PopulationSpec, TypeGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSection {
    #[serde(flatten)]
    pub spec: PopulationSpec,
    /// Midpoint cells for density populations.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Maximum peak demand per user d_p (Gbits).
    pub peak_demand: f64,
}

fn default_resolution() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub population: PopulationSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<Network>,
    pub pricing: Pricing,
    pub cost: CostSpec,
    pub benefit: BenefitSpec,
    #[serde(default)]
    pub solver: SolverSettings,
}

fn config_error(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string().trim_end().to_string())
}

/// Sets `path = value` in a TOML table; `value` is read as a TOML literal and
/// falls back to a bare string.
fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not of the form key=value")))?;
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let keys: Vec<&str> = path.trim().split('.').map(str::trim).collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("bad override key '{path}'")));
    }
    let (leaf, parents) = keys.split_last().expect("non-empty key path");
    let mut cursor = table;
    for key in parents {
        cursor = cursor
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{path}': '{key}' is not a table")))?;
    }
    cursor.insert(leaf.to_string(), value);
    Ok(())
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(config_error)?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Parses `text` after applying `key.path=value` overrides.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Scenario::from_toml_str(text);
        }
        let mut table: toml::Table = text.parse().map_err(config_error)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let merged = toml::to_string(&table).map_err(config_error)?;
        Scenario::from_toml_str(&merged)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(config_error)
    }

    fn validate(&self) -> Result<()> {
        let s = &self.solver;
        if !(s.root_tol > 0.0 && s.width_tol > 0.0 && s.max_iter > 0) {
            return Err(Error::Config("solver tolerances and max_iter must be positive".into()));
        }
        if self.population.resolution == 0 {
            return Err(Error::Config("population.resolution must be at least 1".into()));
        }
        Ok(())
    }

    pub fn primitives(&self) -> Primitives {
        Primitives {
            cost: self.cost.clone(),
            benefit: self.benefit.clone(),
            pricing: self.pricing.clone(),
            network: self.network.clone(),
        }
    }

    pub fn type_grid(&self) -> Result<TypeGrid> {
        build_type_grid(&self.population.spec, self.population.resolution, self.population.peak_demand)
    }

    /// Discretizes the population and reduces the model, running the
    /// primitive audits.
    pub fn build(&self) -> Result<ReducedModel> {
        reduce_model(&self.type_grid()?, &self.primitives())
    }
}
