//! Per-cell statistics and the shared confidence formulas.
//!
//! Everything here is deliberately small and closed-form: the confidence
//! radius `e_t`, the per-level variation bound `V_h`, monotone upper/lower
//! envelopes on the regression function per cell, the pinched function `f`
//! whose distance from 1/2 lower-bounds `|eta - 1/2|`, and the uniform
//! deviation slack of the empirical marginal.

use crate::partition::TreeParams;

/// Hölder smoothness parameters of the regression function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessParams {
    /// Hölder constant `L > 0`.
    pub l: f64,
    /// Hölder exponent `beta` in `(0, 1]`.
    pub beta: f64,
}

impl SmoothnessParams {
    pub fn new(l: f64, beta: f64) -> Self {
        SmoothnessParams { l, beta }
    }
}

/// Confidence radius `e_t = sqrt(2 log(2 pi^2 t^3 n / 3) / n_hi)`.
///
/// `t` is the algorithm's round index, `n` the total label budget, `n_hi`
/// the number of labels collected in the cell. By convention the radius is
/// infinite for an unsampled cell.
pub fn confidence_radius(t: u64, n_hi: u64, n: u64) -> f64 {
    if n_hi == 0 {
        return f64::INFINITY;
    }
    let arg = 2.0 * std::f64::consts::PI.powi(2) * (t as f64).powi(3) * (n as f64) / 3.0;
    (2.0 * arg.ln() / (n_hi as f64)).sqrt()
}

/// Variation bound `V_h = L (v1 rho^h)^beta` for a cell at depth `h`.
pub fn variation_bound(h: u32, sm: &SmoothnessParams, tp: &TreeParams) -> f64 {
    sm.l * (tp.v1 * tp.rho.powi(h as i32)).powf(sm.beta)
}

/// Running statistics and confidence envelope of one cell.
///
/// `upper` is non-increasing and `lower` non-decreasing across updates; on
/// refinement children copy the parent envelope but restart the counts.
#[derive(Debug, Clone, Copy)]
pub struct CellStats {
    /// Labels collected while this exact cell was active.
    pub n_hi: u64,
    /// Sum of observed labels.
    pub sum_y: u64,
    /// Upper envelope `u_t` on the max of eta over the cell.
    pub upper: f64,
    /// Lower envelope `l_t` on the min of eta over the cell.
    pub lower: f64,
}

impl Default for CellStats {
    fn default() -> Self {
        CellStats {
            n_hi: 0,
            sum_y: 0,
            upper: f64::INFINITY,
            lower: f64::NEG_INFINITY,
        }
    }
}

impl CellStats {
    /// Child stats: inherited envelope, fresh counts.
    pub fn inherit(&self) -> CellStats {
        CellStats {
            n_hi: 0,
            sum_y: 0,
            upper: self.upper,
            lower: self.lower,
        }
    }

    pub fn eta_hat(&self) -> f64 {
        if self.n_hi == 0 {
            f64::NAN
        } else {
            self.sum_y as f64 / self.n_hi as f64
        }
    }

    /// Record one label.
    pub fn observe(&mut self, y: u8) {
        self.n_hi += 1;
        self.sum_y += u64::from(y);
    }

    /// Shrink the envelope using the current estimate:
    /// `u <- min(u, eta_hat + e_t + V_h)`, `l <- max(l, eta_hat - e_t - V_h)`.
    pub fn update_bounds(&mut self, t: u64, n: u64, v_h: f64) {
        if self.n_hi == 0 {
            return;
        }
        let e = confidence_radius(t, self.n_hi, n);
        let eta = self.eta_hat();
        self.upper = self.upper.min(eta + e + v_h);
        self.lower = self.lower.max(eta - e - v_h);
    }

    /// Uncertainty index `I = u - l` used for candidate selection.
    pub fn index_i1(&self) -> f64 {
        self.upper - self.lower
    }

    /// Pinched value: `u` if `u < 1/2`, `l` if `l > 1/2`, else `1/2`.
    /// Satisfies `|f - 1/2| <= |eta - 1/2|` whenever the envelope is valid.
    pub fn f_value(&self) -> f64 {
        if self.upper < 0.5 {
            self.upper
        } else if self.lower > 0.5 {
            self.lower
        } else {
            0.5
        }
    }

    /// `|f - 1/2| = max(0, l - 1/2, 1/2 - u)`.
    pub fn dist_from_half(&self) -> f64 {
        (self.lower - 0.5).max(0.5 - self.upper).max(0.0)
    }
}

/// Uniform deviation slack of the empirical measure over threshold level
/// sets: `s_m = 2 sqrt(18 log(2 pi^2 m^2 n / 3) / m)`.
pub fn slack(m: u64, n: u64) -> f64 {
    let arg = 2.0 * std::f64::consts::PI.powi(2) * (m as f64).powi(2) * (n as f64) / 3.0;
    2.0 * (18.0 * arg.ln() / (m as f64)).sqrt()
}

/// Empirical marginal built from a log of unlabelled draws.
#[derive(Debug, Clone, Default)]
pub struct EmpiricalMeasure {
    samples: Vec<Vec<f64>>,
}

impl EmpiricalMeasure {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> u64 {
        self.samples.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, x: Vec<f64>) {
        self.samples.push(x);
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn slack(&self, n: u64) -> f64 {
        slack(self.len().max(1), n)
    }

    /// Fraction of logged samples inside the union of the given boxes.
    pub fn level_mass(&self, boxes: &[crate::partition::Cell]) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let hits = self
            .samples
            .iter()
            .filter(|x| boxes.iter().any(|b| b.contains(x)))
            .count();
        hits as f64 / self.samples.len() as f64
    }
}
