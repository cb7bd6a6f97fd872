use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

use decongest::design::{optimal_parameters_at, solve_social_optimum, sweep, verify_optimal_implementation, OptimalParameters};
use decongest::equilibrium::{solve_equilibrium, EquilibriumResult};
use decongest::lottery::{band_checks, run_lottery, sample_profile, LotterySpec};
use decongest::mechanism::{Mechanism, MechanismKind};
use decongest::model::{assumption_audit, ReducedModel};
use decongest::robustness::{robustness_report, robustness_verdict, Direction, VerdictStatus};
use decongest::scenario::Scenario;

use crate::table::{emit, fmt_num, Cell, Table};
use crate::{bundled, Command, Common, MechArgs};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A parsed scenario with its reduced model and canonical hash.
pub struct Loaded {
    pub name: String,
    pub scenario: Scenario,
    pub model: ReducedModel,
    pub hash: String,
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn load_scenario(spec: &str, overrides: &[String]) -> Result<Loaded> {
    let (origin, text) = bundled::load(spec)?;
    let scenario =
        Scenario::parse_with_overrides(&text, overrides).with_context(|| format!("loading scenario {origin}"))?;
    let canonical = scenario.to_toml_string()?;
    let model = scenario.build().with_context(|| format!("building scenario {origin}"))?;
    let audit = assumption_audit(&model);
    if let Some(bad) = audit.failures().next() {
        return Err(decongest::Error::Audit(format!("{}: {}", bad.name, bad.detail)))
            .with_context(|| format!("scenario {origin}"));
    }
    Ok(Loaded { name: scenario.name.clone(), scenario, model, hash: sha256_hex(&canonical) })
}

pub fn header(command: &str, options: &str, loaded: &[&Loaded]) -> Vec<String> {
    let mut h = vec![format!("decongest {VERSION}"), format!("command: {command} {options}").trim_end().to_string()];
    for l in loaded {
        h.push(format!("scenario: {}", l.name));
        h.push(format!("config_sha256: {}", l.hash));
    }
    h
}

fn require_scenario(common: &Common) -> Result<Loaded> {
    let Some(spec) = common.scenario_arg() else {
        bail!("a scenario is required (positional or --scenario)");
    };
    load_scenario(spec, &common.overrides)
}

/// `start:stop:step` (inclusive) or `a,b,c`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    if spec.contains(':') {
        let parts: Vec<f64> = spec
            .split(':')
            .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad number '{p}' in grid '{spec}'")))
            .collect::<Result<_>>()?;
        let [start, stop, step] = parts[..] else { bail!("grid '{spec}' must be start:stop:step") };
        if !(step > 0.0) || stop < start {
            bail!("grid '{spec}' needs step > 0 and stop >= start");
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        // Rounded to 12 decimals so decimal steps land on the decimal values.
        Ok((0..=n).map(|k| start + k as f64 * step).map(|v| (v * 1e12).round() / 1e12).collect())
    } else {
        spec.split(',')
            .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad number '{p}' in grid '{spec}'")))
            .collect()
    }
}

pub fn summary_rows(t: &mut Table, res: &EquilibriumResult) {
    t.kv("mechanism", res.mechanism.kind().to_string());
    if let Some(p) = res.mechanism.parameter() {
        let unit = if res.mechanism.kind() == MechanismKind::Fbr { "parameter [$]" } else { "parameter [$/Gbit]" };
        t.kv(unit, p);
    }
    t.kv("G_eq [Gbits]", res.public_good);
    t.kv("W_eq [$]", res.welfare);
    if let Some(c) = res.congestion {
        t.kv("rho_p", c.peak_load);
        t.kv("rho_o", c.off_peak_load);
        t.kv("delay_p [s]", c.peak_delay_s);
        t.kv("delay_o [s]", c.off_peak_delay_s);
    }
    t.kv("delta_p [$]", res.price_increase);
    t.kv("foc_residual [$/Gbit]", res.foc_residual);
    t.kv("iterations", res.iterations);
    t.kv("boundary", format!("{:?}", res.boundary).to_lowercase());
}

pub fn node_table(model: &ReducedModel, res: &EquilibriumResult) -> Table {
    let mut t = Table::new("equilibrium", &["theta", "weight", "x_eq [Gbits]", "z_star [Gbits]", "marginal_residual [$/Gbit]"]);
    let target = res.mechanism.unit_reward(model, res.public_good) - model.h(res.public_good);
    for ((n, &x), &z) in model.grid().nodes().iter().zip(&res.contributions).zip(&res.shifted) {
        let residual = target - model.marginal_cost(n.theta, x);
        t.push(vec![n.theta.into(), n.weight.into(), x.into(), z.into(), residual.into()]);
    }
    t
}

fn resolve_mechanism(kind: MechanismKind, budget: Option<f64>, rate: Option<f64>, opt: impl FnOnce() -> Result<OptimalParameters>) -> Result<Mechanism> {
    Ok(match kind {
        MechanismKind::Fbr => Mechanism::fbr(match budget {
            Some(b) => b,
            None => opt()?.budget,
        })?,
        MechanismKind::Tdp => Mechanism::tdp(match rate {
            Some(r) => r,
            None => opt()?.rate,
        })?,
        MechanismKind::None => Mechanism::None,
        MechanismKind::SocialOptimum => Mechanism::SocialOptimum,
    })
}

fn optimum_of(l: &Loaded) -> Result<OptimalParameters> {
    let so = solve_social_optimum(&l.model, &l.scenario.solver)?;
    Ok(optimal_parameters_at(&l.model, so.public_good))
}

fn cmd_solve(common: Common, m: MechArgs) -> Result<()> {
    let l = require_scenario(&common)?;
    let mech = resolve_mechanism(m.mech, m.budget, m.rate, || optimum_of(&l))?;
    let res = solve_equilibrium(&l.model, &mech, &l.scenario.solver)?;
    let mut summary = Table::summary("summary");
    summary_rows(&mut summary, &res);
    let options = match mech.parameter() {
        Some(p) => format!("--mech {} --param {}", mech.kind(), fmt_num(p)),
        None => format!("--mech {}", mech.kind()),
    };
    emit(&[summary, node_table(&l.model, &res)], &header("solve", &options, &[&l]), common.out.as_deref())
}

fn cmd_optimum(common: Common) -> Result<()> {
    let l = require_scenario(&common)?;
    let rep = verify_optimal_implementation(&l.model, &l.scenario.solver)?;
    let p = rep.parameters;
    let mut summary = Table::summary("summary");
    summary_rows(&mut summary, &rep.optimum);
    summary.kv("R_star [$]", p.budget);
    summary.kv("r_star [$/Gbit]", p.rate);
    summary.kv("delta_p_fbr [$]", p.fbr().price_increase(&l.model, p.g_star));
    summary.kv("delta_p_tdp [$]", p.tdp().price_increase(&l.model, p.g_star));
    summary.kv("fbr_G_eq [Gbits]", rep.fbr.public_good);
    summary.kv("tdp_G_eq [Gbits]", rep.tdp.public_good);
    summary.kv("fbr_relative_gap", rep.fbr_relative_gap);
    summary.kv("tdp_relative_gap", rep.tdp_relative_gap);
    summary.kv("fbr_max_node_gap [Gbits]", rep.fbr_max_node_gap);
    summary.kv("tdp_max_node_gap [Gbits]", rep.tdp_max_node_gap);
    emit(&[summary, node_table(&l.model, &rep.optimum)], &header("optimum", "", &[&l]), common.out.as_deref())
}

pub fn sweep_table(name: &str, l: &Loaded, kind: MechanismKind, grid: &[f64], opt: &OptimalParameters) -> Result<Table> {
    let star = opt.parameter(kind).context("sweeps need fbr or tdp")?;
    let res = sweep(&l.model, kind, grid, &l.scenario.solver)?;
    let unit = if kind == MechanismKind::Fbr { "$" } else { "$/Gbit" };
    let p_col = format!("parameter [{unit}]");
    let mut t = Table::new(
        name,
        &[&p_col, "parameter_over_optimal", "G_eq [Gbits]", "W_eq [$]", "participation", "W_recorded [$]", "saturated"],
    );
    let opt_line = |v: Option<f64>| v.map(fmt_num).unwrap_or_else(|| "none".into());
    t.note(format!("mechanism: {kind}"));
    t.note(format!("optimal_parameter [{unit}]: {}", fmt_num(star)));
    t.note(format!("lower_threshold [{unit}]: {}", opt_line(res.lower_threshold)));
    t.note(format!("saturation_threshold [{unit}]: {}", opt_line(res.saturation_threshold)));
    t.note(format!("participation_limit [{unit}]: {}", opt_line(res.participation_limit)));
    t.note(format!("argmax_parameter [{unit}]: {}", fmt_num(res.argmax_parameter())));
    t.note(format!("unimodal: {}", res.is_unimodal(0.0)));
    for p in &res.points {
        t.push(vec![
            p.parameter.into(),
            (p.parameter / star).into(),
            p.public_good.into(),
            p.welfare.into(),
            p.participation.into(),
            p.recorded_welfare.into(),
            p.saturated.into(),
        ]);
    }
    Ok(t)
}

fn cmd_sweep(common: Common, kind: MechanismKind, grid: String, relative: bool) -> Result<()> {
    if !matches!(kind, MechanismKind::Fbr | MechanismKind::Tdp) {
        bail!("sweep needs --mech fbr or --mech tdp");
    }
    let l = require_scenario(&common)?;
    let opt = optimum_of(&l)?;
    let mut values = parse_grid(&grid)?;
    if relative {
        let star = opt.parameter(kind).expect("fbr or tdp");
        values.iter_mut().for_each(|v| *v *= star);
    }
    let t = sweep_table("sweep", &l, kind, &values, &opt)?;
    let options = format!("--mech {kind} --grid {grid}{}", if relative { " --relative" } else { "" });
    emit(&[t], &header("sweep", &options, &[&l]), common.out.as_deref())
}

pub fn robustness_table(name: &str, l: &Loaded, eps: &[f64], direction: Direction) -> Result<(Table, bool)> {
    let rep = robustness_report(&l.model, eps, direction, &l.scenario.solver)?;
    let verdict = robustness_verdict(&rep);
    let mut t = Table::new(
        name,
        &[
            "epsilon",
            "G_none [Gbits]",
            "G_fbr [Gbits]",
            "G_tdp [Gbits]",
            "G_so [Gbits]",
            "W_none [$]",
            "W_fbr [$]",
            "W_tdp [$]",
            "W_so [$]",
            "dist_fbr [Gbits]",
            "dist_tdp [Gbits]",
            "W_so_minus_fbr [$]",
            "W_so_minus_tdp [$]",
            "J_eps [Gbits]",
            "pred_fbr [Gbits]",
            "pred_tdp [Gbits]",
            "pred_so [Gbits]",
            "status",
        ],
    );
    let c = rep.classification;
    t.note(format!("direction: {direction}"));
    t.note(format!("R_star [$]: {}", fmt_num(rep.parameters.budget)));
    t.note(format!("r_star [$/Gbit]: {}", fmt_num(rep.parameters.rate)));
    t.note(format!("G_star [Gbits]: {}", fmt_num(rep.parameters.g_star)));
    t.note(format!("alpha_fbr: {}", fmt_num(rep.slopes.fbr)));
    t.note(format!("alpha_tdp: {}", fmt_num(rep.slopes.tdp)));
    t.note(format!("alpha_so: {}", fmt_num(rep.slopes.so)));
    t.note(format!("gap_fbr: {}  gap_tdp: {}  condition: {}", fmt_num(c.fbr_gap), fmt_num(c.tdp_gap), c.condition));
    t.note(format!(
        "reward_gap_fbr: {}  reward_gap_tdp: {}  reward_condition: {}  agree: {}",
        fmt_num(c.fbr_reward_gap),
        fmt_num(c.tdp_reward_gap),
        c.reward_condition,
        c.agree()
    ));
    t.note(format!("verdict: {}", if verdict.passed() { "pass" } else { "fail" }));
    for (row, v) in rep.rows.iter().zip(&verdict.rows) {
        let status = match v.status {
            VerdictStatus::Pass => "pass",
            VerdictStatus::Fail => "fail",
            VerdictStatus::Degenerate => "degenerate",
            VerdictStatus::Reported => "reported",
        };
        t.push(vec![
            row.epsilon.into(),
            row.none.public_good.into(),
            row.fbr.public_good.into(),
            row.tdp.public_good.into(),
            row.optimum.public_good.into(),
            row.none.welfare.into(),
            row.fbr.welfare.into(),
            row.tdp.welfare.into(),
            row.optimum.welfare.into(),
            row.fbr_distance.into(),
            row.tdp_distance.into(),
            (row.optimum.welfare - row.fbr.welfare).into(),
            (row.optimum.welfare - row.tdp.welfare).into(),
            row.j_eps.into(),
            row.predicted_fbr.into(),
            row.predicted_tdp.into(),
            row.predicted_so.into(),
            Cell::from(status),
        ]);
    }
    Ok((t, verdict.passed()))
}

fn cmd_robustness(common: Common, eps: String, direction: String) -> Result<()> {
    let direction: Direction = direction.parse()?;
    let l = require_scenario(&common)?;
    let eps_grid = parse_grid(&eps)?;
    let (t, _) = robustness_table("robustness", &l, &eps_grid, direction)?;
    let options = format!("--eps {eps} --direction {direction}");
    emit(&[t], &header("robustness", &options, &[&l]), common.out.as_deref())
}

fn cmd_lottery(common: Common, budget: Option<f64>, users: usize, rounds: u64, seed: u64, coverage: f64) -> Result<()> {
    if !(coverage > 0.0 && coverage < 1.0) {
        bail!("coverage must lie in (0, 1)");
    }
    let l = require_scenario(&common)?;
    let budget = match budget {
        Some(b) => b,
        None => optimum_of(&l)?.budget,
    };
    let mech = Mechanism::fbr(budget)?;
    let eq = solve_equilibrium(&l.model, &mech, &l.scenario.solver)?;
    let contributions = sample_profile(&l.model, &mech, eq.public_good, users, seed)?;
    let spec = LotterySpec { contributions, prize: budget, rounds, seed };
    let out = run_lottery(&spec)?;
    let checks = band_checks(&spec, &out, coverage)?;
    let outside = checks.iter().filter(|c| !c.inside).count();
    let contributing = spec.contributions.iter().filter(|&&x| x > 0.0).count();

    let mut t = Table::new(
        "lottery",
        &["user", "x [Gbits]", "wins", "expected_reward [$]", "empirical_reward [$]", "band_low [$]", "band_high [$]", "inside"],
    );
    t.note(format!("prize [$]: {}", fmt_num(budget)));
    t.note(format!("G_eq [Gbits]: {}", fmt_num(eq.public_good)));
    t.note(format!("users: {users}  rounds: {rounds}  seed: {seed}  coverage: {coverage}"));
    t.note(format!("winning_rounds: {}  total_paid [$]: {}", out.winning_rounds, fmt_num(out.total_paid)));
    t.note(format!(
        "contributing_users: {contributing}  outside_band: {outside}  expected_outside: {}",
        fmt_num(contributing as f64 * (1.0 - coverage))
    ));
    for (c, (&x, &wins)) in checks.iter().zip(spec.contributions.iter().zip(&out.win_counts)) {
        t.push(vec![
            c.user.into(),
            x.into(),
            wins.into(),
            c.expected_reward.into(),
            c.empirical_reward.into(),
            c.lower_reward.into(),
            c.upper_reward.into(),
            c.inside.into(),
        ]);
    }
    let options = format!("--R {} --users {users} --rounds {rounds} --seed {seed} --coverage {coverage}", fmt_num(budget));
    emit(&[t], &header("lottery", &options, &[&l]), common.out.as_deref())
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Solve { common, mech } => cmd_solve(common, mech),
        Command::Optimum { common } => cmd_optimum(common),
        Command::Sweep { common, mech, grid, relative } => cmd_sweep(common, mech, grid, relative),
        Command::Robustness { common, eps, direction } => cmd_robustness(common, eps, direction),
        Command::Lottery { common, budget, users, rounds, seed, coverage } => {
            cmd_lottery(common, budget, users, rounds, seed, coverage)
        }
        Command::Reproduce { target, scenario, expectations, overrides, out, format: _ } => {
            crate::reproduce::run(target, scenario.as_deref(), expectations.as_deref(), &overrides, out.as_deref())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0:1:0.25").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(parse_grid("-0.5:0.5:0.1").unwrap().len(), 11);
        assert_eq!(parse_grid("-0.5:0.5:0.1").unwrap()[3], -0.2);
        assert_eq!(parse_grid("1, 2,5").unwrap(), vec![1.0, 2.0, 5.0]);
        assert_eq!(parse_grid("0").unwrap(), vec![0.0]);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("a,b").is_err());
    }
}
