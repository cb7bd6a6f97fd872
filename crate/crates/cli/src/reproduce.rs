//! Data behind the published tables and figures.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::Deserialize;

use decongest::design::{optimal_parameters_at, solve_social_optimum, OptimalParameters};
use decongest::equilibrium::{aggregate_response, solve_equilibrium, EquilibriumResult};
use decongest::mechanism::{Mechanism, MechanismKind};
use decongest::robustness::{perturbed_equilibria, slopes_at, Direction, Perturbation};

use crate::commands::{header, load_scenario, parse_grid, robustness_table, sha256_hex, sweep_table, Loaded};
use crate::table::{emit, fmt_num, Table};
use crate::{bundled, ToleranceFailure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Table1,
    Table2,
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpectedCell {
    cell: String,
    target: f64,
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Expectations {
    #[serde(default)]
    table1: Vec<ExpectedCell>,
    #[serde(default)]
    table2: Vec<ExpectedCell>,
}

/// Perturbation size of the published robustness table.
const TABLE2_EPSILON: f64 = 0.5;

fn scenarios(explicit: Option<&str>, defaults: &[&str], overrides: &[String]) -> Result<Vec<Loaded>> {
    match explicit {
        Some(s) => Ok(vec![load_scenario(s, overrides)?]),
        None => defaults.iter().map(|d| load_scenario(d, overrides)).collect(),
    }
}

fn optimum(l: &Loaded) -> Result<(EquilibriumResult, OptimalParameters)> {
    let so = solve_social_optimum(&l.model, &l.scenario.solver)?;
    let p = optimal_parameters_at(&l.model, so.public_good);
    Ok((so, p))
}

fn outcome_cells(prefix: &str, res: &EquilibriumResult, cells: &mut BTreeMap<String, f64>) {
    cells.insert(format!("{prefix}.public_good_gbits"), res.public_good);
    cells.insert(format!("{prefix}.welfare_usd"), res.welfare);
    if let Some(c) = res.congestion {
        cells.insert(format!("{prefix}.rho_p"), c.peak_load);
        cells.insert(format!("{prefix}.rho_o"), c.off_peak_load);
        cells.insert(format!("{prefix}.delay_p_s"), c.peak_delay_s);
        cells.insert(format!("{prefix}.delay_o_s"), c.off_peak_delay_s);
    }
}

/// Compares computed cells with the expectations; returns the table and the
/// names of failing cells.
fn comparison(name: &str, expected: &[ExpectedCell], computed: &BTreeMap<String, f64>) -> Result<(Table, Vec<String>)> {
    let mut t = Table::new(name, &["cell", "published", "computed", "deviation", "tolerance", "tolerance_kind", "pass"]);
    let mut failed = Vec::new();
    for e in expected {
        let Some(&value) = computed.get(&e.cell) else {
            bail!("expectations name unknown cell '{}' (known: {})", e.cell, computed.keys().cloned().collect::<Vec<_>>().join(", "));
        };
        let (deviation, tol, kind) = match (e.rel_tol, e.abs_tol) {
            (Some(r), None) => ((value - e.target).abs() / e.target.abs(), r, "relative"),
            (None, Some(a)) => ((value - e.target).abs(), a, "absolute"),
            _ => bail!("cell '{}' needs exactly one of rel_tol or abs_tol", e.cell),
        };
        let pass = deviation <= tol;
        if !pass {
            failed.push(e.cell.clone());
        }
        t.push(vec![
            e.cell.as_str().into(),
            e.target.into(),
            value.into(),
            deviation.into(),
            tol.into(),
            kind.into(),
            pass.into(),
        ]);
    }
    Ok((t, failed))
}

fn table1(l: &Loaded, exp: &Expectations) -> Result<(Vec<Table>, Vec<String>)> {
    let none = solve_equilibrium(&l.model, &Mechanism::None, &l.scenario.solver)?;
    let (so, p) = optimum(l)?;
    let mut cells = BTreeMap::new();
    outcome_cells("none", &none, &mut cells);
    outcome_cells("optimum", &so, &mut cells);
    let (mut t, failed) = comparison("table1", &exp.table1, &cells)?;
    t.note(format!("R_star [$]: {}", fmt_num(p.budget)));
    t.note(format!("r_star [$/Gbit]: {}", fmt_num(p.rate)));
    t.note(format!("delta_p_fbr at R_star [$]: {}", fmt_num(p.fbr().price_increase(&l.model, p.g_star))));
    t.note(format!("delta_p_tdp at r_star [$]: {}", fmt_num(p.tdp().price_increase(&l.model, p.g_star))));
    Ok((vec![t], failed))
}

fn table2(l: &Loaded, exp: &Expectations) -> Result<(Vec<Table>, Vec<String>)> {
    let (_, p) = optimum(l)?;
    let slopes = slopes_at(&l.model, &p)?;
    let pert = Perturbation { epsilon: TABLE2_EPSILON, direction: Direction::Scale };
    let row = perturbed_equilibria(&l.model, pert, &p, slopes, &l.scenario.solver)?;
    let mut cells = BTreeMap::new();
    for (prefix, o) in [("none", row.none), ("fbr", row.fbr), ("tdp", row.tdp), ("optimum", row.optimum)] {
        cells.insert(format!("{prefix}.public_good_gbits"), o.public_good);
        cells.insert(format!("{prefix}.welfare_usd"), o.welfare);
    }
    let (mut t, failed) = comparison("table2", &exp.table2, &cells)?;
    t.note(format!("epsilon: {TABLE2_EPSILON}  direction: scale"));
    t.note(format!(
        "welfare ordering W_tdp < W_fbr < W_so: {}",
        row.tdp.welfare < row.fbr.welfare && row.fbr.welfare < row.optimum.welfare
    ));
    Ok((vec![t], failed))
}

fn fig1(l: &Loaded) -> Result<Table> {
    let (_, p) = optimum(l)?;
    let mut t = Table::new(
        format!("fig1_{}", l.name),
        &["G [Gbits]", "G_resp_fbr [Gbits]", "G_resp_tdp [Gbits]", "G_resp_so [Gbits]", "identity [Gbits]"],
    );
    t.note(format!("R_star [$]: {}  r_star [$/Gbit]: {}", fmt_num(p.budget), fmt_num(p.rate)));
    let hi = (2.0 * p.g_star).min(l.model.aggregate_demand());
    let n = 200;
    for k in 1..=n {
        let g = hi * k as f64 / n as f64;
        t.push(vec![
            g.into(),
            aggregate_response(&l.model, &p.fbr(), g)?.into(),
            aggregate_response(&l.model, &p.tdp(), g)?.into(),
            aggregate_response(&l.model, &Mechanism::SocialOptimum, g)?.into(),
            g.into(),
        ]);
    }
    Ok(t)
}

fn fig2(l: &Loaded) -> Result<Vec<Table>> {
    let (_, p) = optimum(l)?;
    let fbr: Vec<f64> = parse_grid("0:14:0.1")?.iter().map(|v| v * p.budget).collect();
    let tdp: Vec<f64> = parse_grid("0:2:0.05")?.iter().map(|v| v * p.rate).collect();
    Ok(vec![
        sweep_table(&format!("fig2_fbr_{}", l.name), l, MechanismKind::Fbr, &fbr, &p)?,
        sweep_table(&format!("fig2_tdp_{}", l.name), l, MechanismKind::Tdp, &tdp, &p)?,
    ])
}

/// Unit rewards around G*; the range is G*·[0.75, 1.25].
fn fig4(l: &Loaded) -> Result<Table> {
    let (_, p) = optimum(l)?;
    let mut t = Table::new(format!("fig4_{}", l.name), &["G [Gbits]", "r_fbr [$/Gbit]", "r_tdp [$/Gbit]", "r_so [$/Gbit]"]);
    let n = 100;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut rows = Vec::new();
    for k in 0..=n {
        let g = p.g_star * (0.75 + 0.5 * k as f64 / n as f64);
        let so = Mechanism::SocialOptimum.unit_reward(&l.model, g);
        lo = lo.min(so);
        hi = hi.max(so);
        rows.push(vec![g.into(), p.fbr().unit_reward(&l.model, g).into(), p.tdp().unit_reward(&l.model, g).into(), so.into()]);
    }
    t.note(format!("G_star [Gbits]: {}  range: [0.75, 1.25] x G_star", fmt_num(p.g_star)));
    t.note(format!("r_so max/min: {}", fmt_num(hi / lo)));
    t.rows = rows;
    Ok(t)
}

pub fn run(target: Target, scenario: Option<&str>, expectations: Option<&Path>, overrides: &[String], out: Option<&Path>) -> Result<()> {
    let exp_text = match expectations {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => bundled::EXPECTATIONS.to_string(),
    };
    let name = format!("{target:?}").to_lowercase();
    let defaults: &[&str] = match target {
        Target::Fig3 | Target::Fig4 | Target::Fig5 => &["example1", "example2"],
        _ => &["example1"],
    };
    let exp_hash = sha256_hex(&exp_text);
    let mut failed = Vec::new();
    for (i, l) in scenarios(scenario, defaults, overrides)?.iter().enumerate() {
        let tables = match target {
            Target::Table1 | Target::Table2 => {
                let exp: Expectations = toml::from_str(&exp_text).context("parsing expectations")?;
                let (t, f) = if target == Target::Table1 { table1(l, &exp)? } else { table2(l, &exp)? };
                failed.extend(f);
                t
            }
            Target::Fig1 => vec![fig1(l)?],
            Target::Fig2 => fig2(l)?,
            Target::Fig3 | Target::Fig5 => {
                let eps = parse_grid("-0.5:0.5:0.05")?;
                vec![robustness_table(&format!("{name}_{}", l.name), l, &eps, Direction::Scale)?.0]
            }
            Target::Fig4 => vec![fig4(l)?],
        };
        let mut head = header("reproduce", &name, &[l]);
        if matches!(target, Target::Table1 | Target::Table2) {
            head.push(format!("expectations_sha256: {exp_hash}"));
        }
        if i > 0 && out.is_none() {
            println!();
        }
        emit(&tables, &head, out)?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(ToleranceFailure(failed.join(", ")).into())
    }
}
