use super::{Benefit, ShiftCost};

/// c_θ(x) = ½·scale·(1 + type_slope·θ)·x², with x̲_θ = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticCost {
    pub scale: f64,
    pub type_slope: f64,
    pub baseline_utility: f64,
}

impl QuadraticCost {
    fn stiffness(&self, theta: f64) -> f64 {
        self.scale * (1.0 + self.type_slope * theta)
    }
}

impl ShiftCost for QuadraticCost {
    fn cost(&self, theta: f64, x: f64) -> f64 {
        0.5 * self.stiffness(theta) * x * x
    }

    fn marginal(&self, theta: f64, x: f64) -> f64 {
        self.stiffness(theta) * x
    }

    fn latency_free_utility(&self, _theta: f64) -> f64 {
        self.baseline_utility
    }
}

/// h(G) = −L0·δ0 / (1 − (D_p − G)/(C·T_p)); −∞ once the peak period saturates.
#[derive(Clone, Debug, PartialEq)]
pub struct PsDelayBenefit {
    pub disutility_scale: f64,
    pub base_delay: f64,
    pub peak_volume: f64,
    pub aggregate_demand: f64,
}

impl PsDelayBenefit {
    /// Distance to saturation, C·T_p − (D_p − G).
    fn headroom(&self, g: f64) -> f64 {
        self.peak_volume - self.aggregate_demand + g
    }

    /// Peak disutility L_p(Y) = L0·δ(Y/(C·T_p)) of aggregate peak demand Y.
    pub fn peak_disutility(&self, demand: f64) -> f64 {
        let load = demand / self.peak_volume;
        if load < 1.0 {
            self.disutility_scale * self.base_delay / (1.0 - load)
        } else {
            f64::INFINITY
        }
    }

    /// L_p increasing and strictly convex on `[0, min(D_p, C·T_p))`.
    pub(crate) fn check_peak_disutility(&self) -> Result<(), String> {
        const POINTS: usize = 33;
        let top = self.aggregate_demand.min(self.peak_volume * (1.0 - 1e-6));
        let step = top / (POINTS - 1) as f64;
        let vals: Vec<f64> = (0..POINTS).map(|k| self.peak_disutility(k as f64 * step)).collect();
        if vals.windows(2).any(|w| !(w[1] > w[0])) {
            return Err("peak disutility L_p is not increasing".into());
        }
        if vals.windows(3).any(|w| !(w[2] - 2.0 * w[1] + w[0] > 0.0)) {
            return Err("peak disutility L_p is not strictly convex".into());
        }
        Ok(())
    }
}

impl Benefit for PsDelayBenefit {
    fn value(&self, g: f64) -> f64 {
        -self.peak_disutility(self.aggregate_demand - g)
    }

    fn slope(&self, g: f64) -> f64 {
        let room = self.headroom(g);
        if room <= 0.0 {
            return f64::INFINITY;
        }
        self.disutility_scale * self.base_delay * self.peak_volume / (room * room)
    }

    fn curvature(&self, g: f64) -> f64 {
        let room = self.headroom(g);
        if room <= 0.0 {
            return f64::NEG_INFINITY;
        }
        -2.0 * self.disutility_scale * self.base_delay * self.peak_volume / (room * room * room)
    }

    fn domain_floor(&self) -> f64 {
        (self.aggregate_demand - self.peak_volume).max(0.0)
    }
}

/// h(G) = scale·(G^exponent − D_p^exponent).
#[derive(Clone, Debug, PartialEq)]
pub struct PowerBenefit {
    pub scale: f64,
    pub exponent: f64,
    pub aggregate_demand: f64,
}

impl Benefit for PowerBenefit {
    fn value(&self, g: f64) -> f64 {
        self.scale * (g.powf(self.exponent) - self.aggregate_demand.powf(self.exponent))
    }

    fn slope(&self, g: f64) -> f64 {
        self.scale * self.exponent * g.powf(self.exponent - 1.0)
    }

    fn curvature(&self, g: f64) -> f64 {
        self.scale * self.exponent * (self.exponent - 1.0) * g.powf(self.exponent - 2.0)
    }
}

/// h(G) = −½·curvature·(D_p − G)².
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticBenefit {
    pub curvature: f64,
    pub aggregate_demand: f64,
}

impl Benefit for QuadraticBenefit {
    fn value(&self, g: f64) -> f64 {
        let s = self.aggregate_demand - g;
        -0.5 * self.curvature * s * s
    }

    fn slope(&self, g: f64) -> f64 {
        self.curvature * (self.aggregate_demand - g)
    }

    fn curvature(&self, _g: f64) -> f64 {
        -self.curvature
    }
}

/// h(G) = slope·(G − D_p).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearBenefit {
    pub slope: f64,
    pub aggregate_demand: f64,
}

impl Benefit for LinearBenefit {
    fn value(&self, g: f64) -> f64 {
        self.slope * (g - self.aggregate_demand)
    }

    fn slope(&self, _g: f64) -> f64 {
        self.slope
    }

    fn curvature(&self, _g: f64) -> f64 {
        0.0
    }
}
