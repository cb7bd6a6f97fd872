use super::ReducedModel;

const CHECK_POINTS: usize = 33;

/// Outcome of one numerical assumption check.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Largest violation magnitude seen (0 when passed).
    pub worst_violation: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&AuditCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AuditCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

struct Tally {
    name: &'static str,
    worst: f64,
    detail: Option<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Tally { name, worst: 0.0, detail: None }
    }

    fn flag(&mut self, magnitude: f64, detail: impl FnOnce() -> String) {
        let magnitude = if magnitude.is_nan() { f64::INFINITY } else { magnitude };
        if self.detail.is_none() || magnitude > self.worst {
            self.worst = magnitude;
            self.detail = Some(detail());
        }
    }

    fn finish(self) -> AuditCheck {
        match self.detail {
            None => AuditCheck { name: self.name, passed: true, worst_violation: 0.0, detail: String::new() },
            Some(detail) => AuditCheck { name: self.name, passed: false, worst_violation: self.worst, detail },
        }
    }
}

/// Numerically verifies the standing assumptions on a reduced model:
///
/// * `A1`: h increasing and strictly concave on `[0, D_p]`;
/// * `A2`: each c_θ non-negative, zero at x̲_θ, differentiable, with strictly
///   increasing derivative, and increasing on `[x̲_θ, d_p]`;
/// * `A3`: c′_θ(d_p) bounded over the grid.
///
/// Strict inequalities are tested against a rounding allowance proportional
/// to the magnitudes involved, so exactly linear pieces fail.
pub fn assumption_audit(model: &ReducedModel) -> AuditReport {
    AuditReport { checks: vec![audit_benefit(model), audit_costs(model), audit_bounded_marginal(model)] }
}

fn rounding(values: &[f64]) -> f64 {
    64.0 * f64::EPSILON * values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn audit_benefit(model: &ReducedModel) -> AuditCheck {
    let mut tally = Tally::new("A1");
    let d = model.aggregate_demand();
    let floor = model.benefit_fn().domain_floor();
    // The lowest point is kept off the floor, where h may be singular.
    let lo = floor + 1e-3 * (d - floor);
    let step = (d - lo) / (CHECK_POINTS - 1) as f64;
    let gs: Vec<f64> = (0..CHECK_POINTS).map(|k| lo + k as f64 * step).collect();
    let hs: Vec<f64> = gs.iter().map(|&g| model.h(g)).collect();
    for k in 0..CHECK_POINTS - 1 {
        let rise = hs[k + 1] - hs[k];
        if !(rise > rounding(&hs[k..k + 2])) {
            tally.flag(-rise, || format!("h not increasing on [{}, {}]", gs[k], gs[k + 1]));
        }
    }
    for k in 0..CHECK_POINTS - 2 {
        let second = hs[k + 2] - 2.0 * hs[k + 1] + hs[k];
        if !(second < -rounding(&hs[k..k + 3])) {
            tally.flag(second.max(0.0), || format!("h not strictly concave around G = {}", gs[k + 1]));
        }
    }
    tally.finish()
}

fn audit_costs(model: &ReducedModel) -> AuditCheck {
    let mut tally = Tally::new("A2");
    let d_p = model.peak_cap();
    let step = d_p / (CHECK_POINTS - 1) as f64;
    let fd = 1e-6 * d_p;
    let xs: Vec<f64> = (0..CHECK_POINTS).map(|k| k as f64 * step).collect();
    for (i, (node, prof)) in model.grid().nodes().iter().zip(model.profiles()).enumerate() {
        let theta = node.theta;
        let cs: Vec<f64> = xs.iter().map(|&x| model.cost(theta, x)).collect();
        let ms: Vec<f64> = xs.iter().map(|&x| model.marginal_cost(theta, x)).collect();
        let scale = rounding(&cs).max(rounding(&ms));

        let at_base = model.cost(theta, prof.baseline);
        if at_base.abs() > scale {
            tally.flag(at_base.abs(), || format!("node {i}: c(x_low) = {at_base} != 0"));
        }
        for (k, &c) in cs.iter().enumerate() {
            if c < -scale {
                tally.flag(-c, || format!("node {i}: c({}) = {c} < 0", xs[k]));
            }
        }
        for k in 0..CHECK_POINTS - 1 {
            let rise = ms[k + 1] - ms[k];
            if !(rise > scale) {
                tally.flag(-rise, || {
                    format!("node {i}: c' not strictly increasing on [{}, {}]", xs[k], xs[k + 1])
                });
            }
            if xs[k] >= prof.baseline && cs[k + 1] < cs[k] - scale {
                tally.flag(cs[k] - cs[k + 1], || {
                    format!("node {i}: c decreasing above the baseline at x = {}", xs[k])
                });
            }
        }
        // Differentiability: one-sided difference quotients agree at interior points.
        for &x in &xs[1..CHECK_POINTS - 1] {
            let c0 = model.cost(theta, x);
            let fwd = (model.cost(theta, x + fd) - c0) / fd;
            let bwd = (c0 - model.cost(theta, x - fd)) / fd;
            let gap = (fwd - bwd).abs();
            if !(gap <= 1e-3 * (1.0 + fwd.abs().max(bwd.abs()))) {
                tally.flag(gap, || format!("node {i}: c not differentiable at x = {x}"));
            }
        }
    }
    tally.finish()
}

fn audit_bounded_marginal(model: &ReducedModel) -> AuditCheck {
    let mut tally = Tally::new("A3");
    let d_p = model.peak_cap();
    for (i, node) in model.grid().nodes().iter().enumerate() {
        let m = model.marginal_cost(node.theta, d_p);
        if !m.is_finite() {
            tally.flag(f64::INFINITY, || format!("node {i}: c'(d_p) = {m}"));
        }
    }
    tally.finish()
}
