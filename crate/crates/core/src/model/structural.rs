use super::ShiftCost;
use crate::roots::maximize_concave;

/// Logarithmic peak/off-peak utilities:
/// P_θ(y) = (1 + type_slope·θ)·peak_scale·ln(1 + y/d_p) and
/// O_θ(z) = off_peak_ratio·P_θ(z).
#[derive(Clone, Debug, PartialEq)]
pub struct LogUtility {
    pub peak_scale: f64,
    pub type_slope: f64,
    pub off_peak_ratio: f64,
    pub peak_cap: f64,
}

impl LogUtility {
    fn multiplier(&self, theta: f64) -> f64 {
        (1.0 + self.type_slope * theta) * self.peak_scale
    }

    pub fn peak(&self, theta: f64, y: f64) -> f64 {
        self.multiplier(theta) * (y / self.peak_cap).ln_1p()
    }

    pub fn peak_marginal(&self, theta: f64, y: f64) -> f64 {
        self.multiplier(theta) / (self.peak_cap + y)
    }

    pub fn off_peak(&self, theta: f64, z: f64) -> f64 {
        self.off_peak_ratio * self.peak(theta, z)
    }

    pub fn off_peak_marginal(&self, theta: f64, z: f64) -> f64 {
        self.off_peak_ratio * self.peak_marginal(theta, z)
    }

    /// Numerical check that P_θ and O_θ are increasing and strictly concave
    /// on `[0, d_p]`.
    pub(crate) fn check_shape(&self, theta: f64) -> Result<(), String> {
        const POINTS: usize = 17;
        let step = self.peak_cap / (POINTS - 1) as f64;
        for (name, scale) in [("peak utility", 1.0), ("off-peak utility", self.off_peak_ratio)] {
            let vals: Vec<f64> =
                (0..POINTS).map(|k| scale * self.peak(theta, k as f64 * step)).collect();
            if vals.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(format!("{name} is not increasing"));
            }
            if vals.windows(3).any(|w| !(w[2] - 2.0 * w[1] + w[0] < 0.0)) {
                return Err(format!("{name} is not strictly concave"));
            }
        }
        Ok(())
    }
}

/// Cost of shifting derived from structural utilities and a usage price.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuralCost {
    utility: LogUtility,
    usage_price: f64,
}

impl StructuralCost {
    pub fn new(utility: LogUtility, usage_price: f64) -> Self {
        StructuralCost { utility, usage_price }
    }

    pub fn utility(&self) -> &LogUtility {
        &self.utility
    }

    fn tol(&self) -> f64 {
        1e-10 * self.utility.peak_cap
    }

    /// z_{θ,max}: maximizer of O_θ(z) − z·q on `[0, d_p]`.
    pub fn shift_cap(&self, theta: f64) -> f64 {
        let q = self.usage_price;
        maximize_concave(
            |z| self.utility.off_peak(theta, z) - z * q,
            |z| self.utility.off_peak_marginal(theta, z) - q,
            0.0,
            self.utility.peak_cap,
            self.tol(),
        )
    }

    /// Latency-free utility of reducing peak demand by `x`.
    pub fn latency_free(&self, theta: f64, x: f64) -> f64 {
        let q = self.usage_price;
        let d_p = self.utility.peak_cap;
        let z = x.min(self.shift_cap(theta));
        self.utility.peak(theta, d_p - x) - (d_p - x) * q + self.utility.off_peak(theta, z) - z * q
    }

    fn latency_free_slope_with_cap(&self, theta: f64, x: f64, cap: f64) -> f64 {
        let q = self.usage_price;
        let d_p = self.utility.peak_cap;
        // Past the cap the shifted volume is fixed. A cap at d_p leaves no
        // such region, and x = d_p takes the left derivative.
        let shifted = if x < cap || cap >= d_p { self.utility.off_peak_marginal(theta, x) - q } else { 0.0 };
        -self.utility.peak_marginal(theta, d_p - x) + q + shifted
    }
}

impl ShiftCost for StructuralCost {
    fn cost(&self, theta: f64, x: f64) -> f64 {
        let base = self.baseline(theta);
        self.latency_free(theta, base) - self.latency_free(theta, x)
    }

    fn marginal(&self, theta: f64, x: f64) -> f64 {
        let cap = self.shift_cap(theta);
        -self.latency_free_slope_with_cap(theta, x, cap)
    }

    fn baseline(&self, theta: f64) -> f64 {
        let cap = self.shift_cap(theta);
        maximize_concave(
            |x| self.latency_free(theta, x),
            |x| self.latency_free_slope_with_cap(theta, x, cap),
            0.0,
            self.utility.peak_cap,
            self.tol(),
        )
    }

    fn latency_free_utility(&self, theta: f64) -> f64 {
        self.latency_free(theta, self.baseline(theta))
    }

    fn optimal_shift(&self, theta: f64, x: f64) -> f64 {
        x.min(self.shift_cap(theta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cost(usage_price: f64) -> StructuralCost {
        StructuralCost::new(LogUtility { peak_scale: 130.0, type_slope: 1.0, off_peak_ratio: 0.1, peak_cap: 7.2 }, usage_price)
    }

    #[test]
    fn marginal_is_continuous_at_the_peak_cap() {
        // With q = 0 everything shifts: c′(d_p) = P′(0) − O′(d_p) = 0.95·M/d_p.
        let c = cost(0.0);
        for theta in [0.0, 0.3, 1.0] {
            let m = (1.0 + theta) * 130.0;
            assert_eq!(c.shift_cap(theta), 7.2);
            assert!((c.marginal(theta, 7.2) - 0.95 * m / 7.2).abs() < 1e-12);
            assert!((c.marginal(theta, 7.2) - c.marginal(theta, 7.2 - 1e-9)).abs() < 1e-8);
        }
    }

    #[test]
    fn shifting_stops_at_an_interior_cap() {
        // O′(z) = q at z = 0.1·M/q − d_p.
        let q = 1.0;
        let c = cost(q);
        let cap = c.shift_cap(0.0);
        assert!((cap - (13.0 - 7.2)).abs() < 1e-8);
        let x = cap + 0.5;
        assert!((c.marginal(0.0, x) - (130.0 / (14.4 - x) - q)).abs() < 1e-12);
    }
}
