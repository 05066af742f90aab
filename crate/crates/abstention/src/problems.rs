//! Synthetic classification problems with analytic ground truth.
//!
//! A [`ProblemInstance`] bundles a regression function `eta`, a marginal over
//! `[0,1]^D` (sampler plus box measure), recorded smoothness/margin
//! descriptors, and whatever closed forms the construction admits
//! (`gamma_delta`, Bayes risks, per-segment integrals of `eta` in 1D).
//! Everything downstream — oracles, algorithms, risk evaluation — works
//! through this type.

use crate::estimate::SmoothnessParams;
use crate::partition::Cell;
use crate::{Error, Result};
use rand::Rng;

/// Margin parameters: `P(|eta - gamma| <= t) <= c0 * t^alpha0` near thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginParams {
    pub c0: f64,
    pub alpha0: f64,
}

/// Detectability parameters: `P(|eta - gamma| <= t) >= c1 * t^alpha1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectParams {
    pub c1: f64,
    pub alpha1: f64,
}

/// Recorded properties of a constructed instance.
#[derive(Debug, Clone, Copy)]
pub struct Descriptors {
    pub smoothness: SmoothnessParams,
    pub margin: Option<MarginParams>,
    pub detect: Option<DetectParams>,
    /// Set when a direction vector had to be normalized at construction.
    pub normalized_direction: bool,
}

/// A monotone link for generalized-linear instances, mapping the real line
/// into `[-1/2, 1/2]` with `psi(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsiSpec {
    /// `z/4`, clipped to `[-1/2, 1/2]`.
    LinearQuarter,
    /// `slope * z`, clipped to `[-1/2, 1/2]`.
    Linear { slope: f64 },
    /// `1/(1 + exp(-k z)) - 1/2`.
    Logistic { k: f64 },
}

impl PsiSpec {
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            PsiSpec::LinearQuarter => (z / 4.0).clamp(-0.5, 0.5),
            PsiSpec::Linear { slope } => (slope * z).clamp(-0.5, 0.5),
            PsiSpec::Logistic { k } => 1.0 / (1.0 + (-k * z).exp()) - 0.5,
        }
    }

    pub fn holder(&self) -> SmoothnessParams {
        match self {
            PsiSpec::LinearQuarter => SmoothnessParams::new(0.25, 1.0),
            PsiSpec::Linear { slope } => SmoothnessParams::new(slope.abs(), 1.0),
            PsiSpec::Logistic { k } => SmoothnessParams::new(k / 4.0, 1.0),
        }
    }
}

/// Regression-function families covered by the suite.
#[derive(Debug, Clone)]
pub enum EtaKind {
    /// `eta(x) = x` on `[0,1]`.
    Linear1d,
    /// Constant value everywhere.
    Const(f64),
    /// `eta(x) = lo` for `x1 < at`, `hi` otherwise.
    Step1d { at: f64, lo: f64, hi: f64 },
    /// Monotone power-law ramp along one axis, built by
    /// [`make_holder_instance`].
    Ramp(RampEta),
    /// Minimax hard-instance construction of [`make_lower_bound_instance`].
    LowerBound(Box<LowerBoundGeometry>),
    /// `eta(x) = psi(<x, w>) + 1/2` with unit `w`.
    Glm { w: Vec<f64>, psi: PsiSpec },
    /// Restriction of a GLM instance to the unit circle in a coordinate
    /// plane, parameterized by `tau` in `[0,1]`:
    /// `eta(tau) = psi(amp * cos(2 pi tau - phase)) + 1/2`.
    CirclePair { amp: f64, phase: f64, psi: PsiSpec },
}

/// Ramp geometry: crosses `lambda` at `s1` and `1 - lambda` at `s2` with
/// local exponent `p`, clamped into `[0,1]`.
#[derive(Debug, Clone, Copy)]
pub struct RampEta {
    pub axis: usize,
    pub lambda: f64,
    pub l: f64,
    pub p: f64,
    pub s1: f64,
    pub s2: f64,
    pub mid: f64,
}

impl RampEta {
    fn eval(&self, s: f64) -> f64 {
        let g = if s <= self.mid {
            let d = s - self.s1;
            self.lambda + self.l * d.abs().powf(self.p).copysign(d)
        } else {
            let d = self.s2 - s;
            1.0 - self.lambda - self.l * d.abs().powf(self.p).copysign(d)
        };
        g.clamp(0.0, 1.0)
    }
}

/// Marginal distributions available to instances.
#[derive(Debug, Clone)]
pub enum Marginal {
    /// Lebesgue measure on `[0,1]^D`.
    UniformCube { dim: usize },
    /// The hard-instance density (mass per bump cube, corner blobs).
    LowerBound(Box<LowerBoundGeometry>),
}

/// Geometry of the lower-bound construction: bump cubes of side `eps`
/// inside two corner balls carrying the thresholds, two more corner balls
/// pinned at 0 and 1, Hölder ramps in between, and an atomless density.
#[derive(Debug, Clone)]
pub struct LowerBoundGeometry {
    pub dim: usize,
    pub eps: f64,
    pub w_mass: f64,
    pub lambda: f64,
    pub l: f64,
    pub beta: f64,
    /// Number of bump cubes per threshold ball.
    pub m_tilde: usize,
    /// Sign per bump cube; length `2 * m_tilde`.
    pub sigma: Vec<i8>,
    /// Corners `e1..e4` (and `e5` when `q5_mass` is set).
    corners: Vec<Vec<f64>>,
    /// Bump-cube centers inside `Q1` then `Q2`.
    centers: Vec<Vec<f64>>,
    /// Ramp extents.
    z1: f64,
    z2: f64,
    /// Bounded-rate variant: mass assigned to the `eta = 1/2` corner ball.
    q5_mass: Option<f64>,
}

/// Sign vector indexing one lower-bound instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaVector(pub Vec<i8>);

impl SigmaVector {
    pub fn random(len: usize, rng: &mut impl Rng) -> Self {
        SigmaVector((0..len).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
    }

    pub fn all_plus(len: usize) -> Self {
        SigmaVector(vec![1; len])
    }
}

/// A synthetic joint distribution plus its recorded analytic structure.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub name: String,
    pub dim: usize,
    pub kind: EtaKind,
    pub marginal: Marginal,
    pub descriptors: Descriptors,
    /// When set, label draws return `1{eta >= 1/2}` instead of
    /// `Bernoulli(eta)`; used for noiseless simulations.
    pub hard_labels: bool,
}

/// Result of a measure computation: exact values carry `stderr = 0`.
#[derive(Debug, Clone, Copy)]
pub struct MeasureEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// Monte-Carlo controls for measure/risk fallbacks.
#[derive(Debug, Clone, Copy)]
pub struct McOptions {
    pub samples: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        // Keeps measure standard errors around 5e-4.
        McOptions { samples: 1_000_000 }
    }
}

impl ProblemInstance {
    /// Regression function value at `x`.
    pub fn eta(&self, x: &[f64]) -> f64 {
        match &self.kind {
            EtaKind::Linear1d => x[0],
            EtaKind::Const(c) => *c,
            EtaKind::Step1d { at, lo, hi } => {
                if x[0] < *at {
                    *lo
                } else {
                    *hi
                }
            }
            EtaKind::Ramp(r) => r.eval(x[r.axis]),
            EtaKind::LowerBound(g) => g.eta(x),
            EtaKind::Glm { w, psi } => {
                let z: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
                psi.eval(z) + 0.5
            }
            EtaKind::CirclePair { amp, phase, psi } => {
                let theta = 2.0 * std::f64::consts::PI * x[0];
                psi.eval(amp * (theta - phase).cos()) + 0.5
            }
        }
    }

    /// Draw one point from the marginal.
    pub fn sample_x(&self, rng: &mut impl Rng) -> Vec<f64> {
        match &self.marginal {
            Marginal::UniformCube { dim } => (0..*dim).map(|_| rng.random::<f64>()).collect(),
            Marginal::LowerBound(g) => g.sample(rng),
        }
    }

    /// Draw a label at `x`: `Bernoulli(eta(x))`, or the hard threshold for
    /// noiseless instances.
    pub fn sample_label(&self, x: &[f64], rng: &mut impl Rng) -> u8 {
        let e = self.eta(x);
        if self.hard_labels {
            u8::from(e >= 0.5)
        } else {
            u8::from(rng.random::<f64>() < e)
        }
    }

    /// Exact measure of one box, when the marginal admits it.
    pub fn box_measure(&self, cell: &Cell) -> Option<f64> {
        match &self.marginal {
            Marginal::UniformCube { .. } => Some(cell.volume()),
            Marginal::LowerBound(g) => g.box_measure(cell),
        }
    }

    /// `P_X` of a disjoint union of boxes: exact when every box resolves in
    /// closed form, otherwise Monte-Carlo with the recorded standard error.
    pub fn measure(&self, boxes: &[Cell], mc: &McOptions, rng: &mut impl Rng) -> MeasureEstimate {
        let exact: Option<f64> = boxes.iter().map(|b| self.box_measure(b)).sum();
        if let Some(value) = exact {
            return MeasureEstimate { value, stderr: 0.0 };
        }
        let mut hits = 0u64;
        for _ in 0..mc.samples {
            let x = self.sample_x(rng);
            if boxes.iter().any(|b| b.contains(&x)) {
                hits += 1;
            }
        }
        let p = hits as f64 / mc.samples as f64;
        MeasureEstimate {
            value: p,
            stderr: (p * (1.0 - p) / mc.samples as f64).sqrt(),
        }
    }

    /// Closed-form `gamma_delta = sup{gamma : P(|eta - 1/2| <= gamma) <= delta}`.
    pub fn gamma_delta_analytic(&self, delta: f64) -> Option<f64> {
        match &self.kind {
            EtaKind::Linear1d => Some((delta / 2.0).min(0.5)),
            EtaKind::Const(c) => {
                // Band mass is a step at |c - 1/2|.
                let d = (c - 0.5).abs();
                if d > 0.0 {
                    Some(if delta < 1.0 { d } else { 0.5 })
                } else {
                    Some(0.0)
                }
            }
            _ => None,
        }
    }

    /// Closed-form band mass `P(|eta - 1/2| <= gamma)`.
    pub fn band_mass_analytic(&self, gamma: f64) -> Option<f64> {
        match &self.kind {
            EtaKind::Linear1d => Some((2.0 * gamma).min(1.0)),
            EtaKind::Const(c) => Some(if (c - 0.5).abs() <= gamma { 1.0 } else { 0.0 }),
            _ => None,
        }
    }

    /// Closed-form `int_a^b eta dP_X` for one-dimensional analytic instances.
    pub fn seg_eta_integral(&self, a: f64, b: f64) -> Option<f64> {
        if self.dim != 1 || b < a {
            return None;
        }
        match (&self.kind, &self.marginal) {
            (EtaKind::Linear1d, Marginal::UniformCube { .. }) => Some(0.5 * (b * b - a * a)),
            (EtaKind::Const(c), Marginal::UniformCube { .. }) => Some(c * (b - a)),
            (EtaKind::Step1d { at, lo, hi }, Marginal::UniformCube { .. }) => {
                let below = (b.min(*at) - a).max(0.0);
                let above = (b - a.max(*at)).max(0.0);
                Some(lo * below + hi * above)
            }
            _ => None,
        }
    }

    /// Bayes risk in the fixed-cost setting, when available in closed form.
    pub fn bayes_fixed_risk_analytic(&self, lambda: f64) -> Option<f64> {
        match &self.kind {
            EtaKind::Linear1d => Some(lambda - lambda * lambda),
            EtaKind::Const(c) => {
                let m = c.min(1.0 - c).min(lambda);
                Some(m)
            }
            _ => None,
        }
    }

    /// Bayes misclassification risk in the bounded-rate setting.
    pub fn bayes_bounded_risk_analytic(&self, delta: f64) -> Option<f64> {
        match &self.kind {
            EtaKind::Linear1d => {
                let g = self.gamma_delta_analytic(delta)?;
                let a = 0.5 - g;
                Some(a * a)
            }
            _ => None,
        }
    }
}

/// Canonical test instance: `eta(x) = x`, uniform marginal on `[0,1]`.
///
/// Satisfies the Hölder condition with `(L, beta) = (1, 1)`, the margin
/// condition with `(C0, alpha0) = (2, 1)`, and detectability with
/// `(C1, alpha1) = (1, 1)`; `gamma_delta = delta / 2`.
pub fn make_linear_1d() -> ProblemInstance {
    ProblemInstance {
        name: "linear1d".into(),
        dim: 1,
        kind: EtaKind::Linear1d,
        marginal: Marginal::UniformCube { dim: 1 },
        descriptors: Descriptors {
            smoothness: SmoothnessParams::new(1.0, 1.0),
            margin: Some(MarginParams { c0: 2.0, alpha0: 1.0 }),
            detect: Some(DetectParams { c1: 1.0, alpha1: 1.0 }),
            normalized_direction: false,
        },
        hard_labels: false,
    }
}

/// Constant regression function, uniform marginal; mostly for edge-case tests.
pub fn make_const(dim: usize, value: f64) -> ProblemInstance {
    ProblemInstance {
        name: format!("const{value}"),
        dim,
        kind: EtaKind::Const(value),
        marginal: Marginal::UniformCube { dim },
        descriptors: Descriptors {
            smoothness: SmoothnessParams::new(1.0, 1.0),
            margin: None,
            detect: None,
            normalized_direction: false,
        },
        hard_labels: false,
    }
}

/// Two-level step along the first axis (not Hölder; used by adaptive tests
/// with noiseless labels).
pub fn make_step_1d(at: f64, lo: f64, hi: f64) -> ProblemInstance {
    ProblemInstance {
        name: "step1d".into(),
        dim: 1,
        kind: EtaKind::Step1d { at, lo, hi },
        marginal: Marginal::UniformCube { dim: 1 },
        descriptors: Descriptors {
            smoothness: SmoothnessParams::new(1.0, 1.0),
            margin: None,
            detect: None,
            normalized_direction: false,
        },
        hard_labels: false,
    }
}

/// Monotone ramp instance crossing `lambda` and `1 - lambda` with local
/// exponent `1/alpha0`, Hölder-`(L, beta)` by construction, uniform marginal.
///
/// The seed jitters the ramp placement and (for `D > 1`) the active axis.
pub fn make_holder_instance(
    l: f64,
    beta: f64,
    alpha0: f64,
    lambda: f64,
    dim: usize,
    seed: u64,
) -> Result<ProblemInstance> {
    if !(0.0 < beta && beta <= 1.0) || l <= 0.0 || alpha0 < 0.0 || !(0.0 < lambda && lambda < 0.5) {
        return Err(Error::InvalidConfig(format!(
            "holder instance needs 0<beta<=1, L>0, alpha0>=0, 0<lambda<1/2; got L={l} beta={beta} alpha0={alpha0} lambda={lambda}"
        )));
    }
    let p = if alpha0 > 0.0 { 1.0 / alpha0 } else { 1.0 };
    if p < beta {
        return Err(Error::InvalidConfig(format!(
            "margin exponent alpha0={alpha0} incompatible with beta={beta} (needs alpha0 <= 1/beta)"
        )));
    }
    // Half-width of the rise between the two crossings.
    let wid = ((0.5 - lambda) / l).powf(1.0 / p);
    if wid > 0.5 {
        return Err(Error::InvalidConfig(format!(
            "L={l} too small to connect lambda to 1-lambda inside the cube"
        )));
    }
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let slackw = 0.5 - wid;
    let mid = 0.5 + rng.random_range(-0.5..0.5) * slackw.min(0.1);
    let axis = if dim > 1 { rng.random_range(0..dim) } else { 0 };
    let ramp = RampEta { axis, lambda, l, p, s1: mid - wid, s2: mid + wid, mid };

    // Record the margin constant as the supremum of band-mass / t^alpha0 on a
    // grid, with a little headroom for the statistical check.
    let mut c0 = 0.0f64;
    let grid = 200_000;
    let etas: Vec<f64> = (0..grid)
        .map(|i| ramp.eval((i as f64 + 0.5) / grid as f64))
        .collect();
    for k in 1..=100 {
        let t = k as f64 / 100.0;
        for thr in [lambda, 1.0 - lambda] {
            let mass = etas.iter().filter(|e| (**e - thr).abs() <= t).count() as f64
                / grid as f64;
            if alpha0 > 0.0 {
                c0 = c0.max(mass / t.powf(alpha0));
            } else {
                c0 = c0.max(mass);
            }
        }
    }
    // For p < 1 the two power branches joined at the midpoint inflate the
    // Hölder constant by at most 2^{1-p}.
    let l_rec = if p < 1.0 { l * 2f64.powf(1.0 - p) } else { l };
    Ok(ProblemInstance {
        name: format!("holder(L={l},beta={beta},alpha0={alpha0})"),
        dim,
        kind: EtaKind::Ramp(ramp),
        marginal: Marginal::UniformCube { dim },
        descriptors: Descriptors {
            smoothness: SmoothnessParams::new(l_rec, beta),
            margin: Some(MarginParams { c0: c0 * 1.05, alpha0 }),
            detect: None,
            normalized_direction: false,
        },
        hard_labels: false,
    })
}

impl LowerBoundGeometry {
    fn ball_dist(&self, x: &[f64], corner: &[f64]) -> f64 {
        let d: f64 = x
            .iter()
            .zip(corner)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        (d - 1.0 / 3.0).max(0.0)
    }

    /// Bump profile `phi_z(x) = L (eps/2)^beta u((2/eps) ||x - z||)` with
    /// `u(z) = max{(1-z)^beta, 0}`.
    fn bump(&self, x: &[f64], z: &[f64]) -> f64 {
        let d: f64 = x
            .iter()
            .zip(z)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let arg = 2.0 / self.eps * d;
        let u = (1.0 - arg).max(0.0).powf(self.beta);
        self.l * (self.eps / 2.0).powf(self.beta) * u
    }

    fn eta(&self, x: &[f64]) -> f64 {
        // Inside the two threshold balls: baseline plus at most one bump.
        for (j, base) in [(0usize, self.lambda), (1usize, 1.0 - self.lambda)] {
            if self.ball_dist(x, &self.corners[j]) == 0.0 {
                for (idx, z) in self.centers[j * self.m_tilde..(j + 1) * self.m_tilde]
                    .iter()
                    .enumerate()
                {
                    let cube_in = z
                        .iter()
                        .zip(x)
                        .all(|(zc, xc)| (xc - zc).abs() <= self.eps / 2.0);
                    if cube_in {
                        let s = f64::from(self.sigma[j * self.m_tilde + idx]);
                        return base + s * self.bump(x, z);
                    }
                }
                return base;
            }
        }
        if self.ball_dist(x, &self.corners[2]) == 0.0 {
            return 1.0;
        }
        if self.ball_dist(x, &self.corners[3]) == 0.0 {
            return 0.0;
        }
        // Hölder ramps off the four balls, then the flat 1/2 background.
        let d1 = self.ball_dist(x, &self.corners[0]);
        if d1 <= self.z1 {
            return self.lambda + self.l * d1.powf(self.beta);
        }
        let d2 = self.ball_dist(x, &self.corners[1]);
        if d2 <= self.z1 {
            return 1.0 - self.lambda - self.l * d2.powf(self.beta);
        }
        let d3 = self.ball_dist(x, &self.corners[2]);
        if d3 <= self.z2 {
            return 1.0 - self.l * d3.powf(self.beta);
        }
        let d4 = self.ball_dist(x, &self.corners[3]);
        if d4 <= self.z2 {
            return self.l * d4.powf(self.beta);
        }
        0.5
    }

    fn weights(&self) -> (f64, f64, f64) {
        let bump_total = 2.0 * self.m_tilde as f64 * self.w_mass;
        match self.q5_mass {
            Some(q5) => ((1.0 - q5 - bump_total) / 2.0, q5, bump_total),
            None => ((1.0 - bump_total) / 2.0, 0.0, bump_total),
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let (q34, q5, bump_total) = self.weights();
        let r = rng.random::<f64>();
        if r < bump_total {
            // Uniform over the inner half-cube of one bump.
            let idx = rng.random_range(0..2 * self.m_tilde);
            let z = &self.centers[idx];
            return z
                .iter()
                .map(|c| c + rng.random_range(-0.25..0.25) * self.eps)
                .collect();
        }
        let corner = if r < bump_total + q34 {
            &self.corners[2]
        } else if r < bump_total + 2.0 * q34 {
            &self.corners[3]
        } else {
            debug_assert!(q5 > 0.0);
            &self.corners[4]
        };
        // Rejection sampling from the corner ball intersected with the cube.
        loop {
            let x: Vec<f64> = corner
                .iter()
                .map(|c| {
                    let lo = (c - 1.0 / 3.0).max(0.0);
                    let hi = (c + 1.0 / 3.0).min(1.0);
                    rng.random_range(lo..hi)
                })
                .collect();
            if self.ball_dist(&x, corner) == 0.0 {
                return x;
            }
        }
    }

    fn box_measure(&self, cell: &Cell) -> Option<f64> {
        let mut total = 0.0;
        // Bump cubes: uniform on the inner half-cube, overlap is exact.
        for z in &self.centers {
            let mut frac = 1.0;
            for (d, zc) in z.iter().enumerate() {
                let lo = zc - self.eps / 4.0;
                let hi = zc + self.eps / 4.0;
                let ov = (cell.upper[d].min(hi) - cell.lower[d].max(lo)).max(0.0);
                frac *= ov / (hi - lo);
            }
            total += self.w_mass * frac;
        }
        let (q34, q5, _) = self.weights();
        let blobs: Vec<(usize, f64)> = match self.q5_mass {
            Some(_) => vec![(2, q34), (3, q34), (4, q5)],
            None => vec![(2, q34), (3, q34)],
        };
        for (ci, mass) in blobs {
            let corner = &self.corners[ci];
            // Bounding box of the corner ball within the cube.
            let mut disjoint = false;
            let mut covers = true;
            for d in 0..self.dim {
                let lo = (corner[d] - 1.0 / 3.0).max(0.0);
                let hi = (corner[d] + 1.0 / 3.0).min(1.0);
                if cell.upper[d] <= lo || cell.lower[d] >= hi {
                    disjoint = true;
                }
                if cell.lower[d] > lo || cell.upper[d] < hi {
                    covers = false;
                }
            }
            if disjoint {
                continue;
            }
            if covers {
                total += mass;
            } else {
                // Partial overlap with a ball sector has no closed form here.
                return None;
            }
        }
        Some(total)
    }
}

/// Number of bump cubes per threshold ball for a given `(dim, eps)`; callers
/// use it to size the sign vector.
pub fn lower_bound_cube_count(dim: usize, eps: f64) -> Result<usize> {
    let g = build_lb_grid(dim, eps)?;
    Ok(g.0)
}

fn build_lb_grid(dim: usize, eps: f64) -> Result<(usize, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    let per_side = (1.0 / eps).round() as usize;
    if per_side == 0 || ((per_side as f64) * eps - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!("eps={eps} must divide 1 evenly")));
    }
    let corners = lb_corners(dim, false);
    let mut per_ball: Vec<Vec<Vec<f64>>> = vec![Vec::new(), Vec::new()];
    // Enumerate grid cubes near the two threshold corners only.
    let reach = ((1.0 / 3.0) / eps).ceil() as usize + 1;
    for (j, corner) in corners.iter().take(2).enumerate() {
        let mut idx = vec![0usize; dim];
        'outer: loop {
            let z: Vec<f64> = idx
                .iter()
                .zip(corner)
                .map(|(k, c)| {
                    let side = if *c == 0.0 { *k } else { per_side - 1 - *k };
                    (side as f64 + 0.5) * eps
                })
                .collect();
            // Strict containment: the farthest cube corner stays in the ball.
            let far: f64 = z
                .iter()
                .zip(corner)
                .map(|(zc, cc)| {
                    let d = (zc - cc).abs() + eps / 2.0;
                    d * d
                })
                .sum::<f64>()
                .sqrt();
            if far <= 1.0 / 3.0 {
                per_ball[j].push(z);
            }
            // Advance the counter over the reach^dim block.
            for d in 0..dim {
                idx[d] += 1;
                if idx[d] < reach.min(per_side) {
                    continue 'outer;
                }
                idx[d] = 0;
            }
            break;
        }
        per_ball[j].sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    let m_tilde = per_ball[0].len().min(per_ball[1].len());
    per_ball[0].truncate(m_tilde);
    per_ball[1].truncate(m_tilde);
    let (q1, q2) = (per_ball.remove(0), per_ball.remove(0));
    Ok((m_tilde, q1, q2))
}

fn lb_corners(dim: usize, with_q5: bool) -> Vec<Vec<f64>> {
    let mut corners = vec![
        vec![0.0; dim],
        vec![1.0; dim],
        {
            let mut c = vec![0.0; dim];
            c[0] = 1.0;
            c
        },
        {
            let mut c = vec![1.0; dim];
            c[0] = 0.0;
            c
        },
    ];
    if with_q5 {
        let mut c = vec![0.0; dim];
        c[0] = 1.0;
        c[1] = 1.0;
        corners.push(c);
    }
    corners
}

/// Hard-instance generator from the minimax construction: bump cubes of side
/// `eps` carrying mass `w` each, thresholds at `lambda` and `1 - lambda`,
/// pure-0/1 corner balls, Hölder interpolation in between.
///
/// `bounded_rate_delta`, when set (requires `D >= 3`), moves mass
/// `delta - 2 m w` onto a fifth corner ball where `eta = 1/2`.
pub fn make_lower_bound_instance(
    dim: usize,
    eps: f64,
    w: f64,
    sigma: &SigmaVector,
    lambda: f64,
    l: f64,
    beta: f64,
    bounded_rate_delta: Option<f64>,
) -> Result<ProblemInstance> {
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    if !(0.0 < lambda && lambda < 0.5) || !(0.0 < beta && beta <= 1.0) {
        return Err(Error::InvalidConfig("need 0<lambda<1/2 and 0<beta<=1".into()));
    }
    if l < 3.0 {
        return Err(Error::InvalidConfig(format!("need L >= 3, got {l}")));
    }
    let amp = l * (eps / 2.0).powf(beta);
    if amp >= 0.5 - lambda {
        return Err(Error::InvalidConfig(format!(
            "bump amplitude {amp} must stay below 1/2 - lambda = {}",
            0.5 - lambda
        )));
    }
    if amp > lambda {
        return Err(Error::InvalidConfig(format!(
            "bump amplitude {amp} over lambda={lambda} would push eta outside [0,1]"
        )));
    }
    let (m_tilde, q1, q2) = build_lb_grid(dim, eps)?;
    if m_tilde == 0 {
        return Err(Error::InvalidConfig("eps too coarse: no cube fits inside a corner ball".into()));
    }
    if sigma.0.len() != 2 * m_tilde {
        return Err(Error::InvalidConfig(format!(
            "sigma length {} does not match 2 * m_tilde = {}",
            sigma.0.len(),
            2 * m_tilde
        )));
    }
    if m_tilde as f64 * w > 0.5 {
        return Err(Error::InvalidConfig("need m_tilde * w <= 1/2".into()));
    }
    if let Some(delta) = bounded_rate_delta {
        if dim < 3 {
            return Err(Error::InvalidConfig("bounded-rate variant needs D >= 3 (a fifth corner)".into()));
        }
        if delta <= 2.0 * m_tilde as f64 * w || delta >= 1.0 {
            return Err(Error::InvalidConfig("need 2 m w < delta < 1 for the bounded-rate variant".into()));
        }
    }
    let z1 = ((0.5 - lambda) / l).powf(1.0 / beta);
    let z2 = (0.5 / l).powf(1.0 / beta);
    let mut centers = q1;
    centers.extend(q2);
    let geom = LowerBoundGeometry {
        dim,
        eps,
        w_mass: w,
        lambda,
        l,
        beta,
        m_tilde,
        sigma: sigma.0.clone(),
        corners: lb_corners(dim, bounded_rate_delta.is_some()),
        centers,
        z1,
        z2,
        q5_mass: bounded_rate_delta.map(|d| d - 2.0 * m_tilde as f64 * w),
    };
    let c0 = (8.0f64 / 3.0).powf(beta * 1.0);
    Ok(ProblemInstance {
        name: format!("lower_bound(D={dim},eps={eps})"),
        dim,
        kind: EtaKind::LowerBound(Box::new(geom.clone())),
        marginal: Marginal::LowerBound(Box::new(geom)),
        descriptors: Descriptors {
            smoothness: SmoothnessParams::new(l, beta),
            margin: Some(MarginParams { c0, alpha0: 1.0 }),
            detect: None,
            normalized_direction: false,
        },
        hard_labels: false,
    })
}

/// Generalized-linear instance `eta(x) = psi(<x, w*>) + 1/2`, uniform
/// marginal. A non-unit direction is normalized and flagged.
pub fn make_glm_instance(w_star: &[f64], psi: PsiSpec) -> Result<ProblemInstance> {
    if w_star.is_empty() {
        return Err(Error::InvalidDimension(0));
    }
    if psi.eval(0.0).abs() > 1e-12 {
        return Err(Error::InvalidConfig("psi(0) must be 0".into()));
    }
    let norm: f64 = w_star.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidConfig("w* must be nonzero".into()));
    }
    let normalized = (norm - 1.0).abs() > 1e-9;
    let w: Vec<f64> = w_star.iter().map(|v| v / norm).collect();
    let sm = psi.holder();
    Ok(ProblemInstance {
        name: "glm".into(),
        dim: w.len(),
        kind: EtaKind::Glm { w, psi },
        marginal: Marginal::UniformCube { dim: w_star.len() },
        descriptors: Descriptors {
            smoothness: sm,
            margin: None,
            detect: None,
            normalized_direction: normalized,
        },
        hard_labels: false,
    })
}

/// Restriction of a GLM problem to the unit circle in the plane spanned by
/// coordinates `(0, j)`, parameterized over `[0,1]`.
pub fn make_circle_pair(w: &[f64], j: usize, psi: PsiSpec) -> ProblemInstance {
    let amp = (w[0] * w[0] + w[j] * w[j]).sqrt();
    let phase = w[j].atan2(w[0]);
    let sm = psi.holder();
    let two_pi = 2.0 * std::f64::consts::PI;
    ProblemInstance {
        name: format!("circle_pair(1,{})", j + 1),
        dim: 1,
        kind: EtaKind::CirclePair { amp, phase, psi },
        marginal: Marginal::UniformCube { dim: 1 },
        descriptors: Descriptors {
            smoothness: SmoothnessParams::new(sm.l * two_pi.powf(sm.beta), sm.beta),
            margin: None,
            detect: None,
            normalized_direction: false,
        },
        hard_labels: false,
    }
}

/// Parsed/serializable description of an instance, for reproducible
/// experiment configs.
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSpec {
    Linear1d,
    Const { dim: usize, value: f64 },
    Holder { l: f64, beta: f64, alpha0: f64, lambda: f64, dim: usize, seed: u64 },
    LowerBound { dim: usize, eps: f64, w: f64, lambda: f64, l: f64, beta: f64, sigma_seed: u64 },
    Glm { w: Vec<f64>, psi: PsiSpec },
}

impl InstanceSpec {
    pub fn build(&self) -> Result<ProblemInstance> {
        match self {
            InstanceSpec::Linear1d => Ok(make_linear_1d()),
            InstanceSpec::Const { dim, value } => Ok(make_const(*dim, *value)),
            InstanceSpec::Holder { l, beta, alpha0, lambda, dim, seed } => {
                make_holder_instance(*l, *beta, *alpha0, *lambda, *dim, *seed)
            }
            InstanceSpec::LowerBound { dim, eps, w, lambda, l, beta, sigma_seed } => {
                use rand::SeedableRng;
                let m = lower_bound_cube_count(*dim, *eps)?;
                let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(*sigma_seed);
                let sigma = SigmaVector::random(2 * m, &mut rng);
                make_lower_bound_instance(*dim, *eps, *w, &sigma, *lambda, *l, *beta, None)
            }
            InstanceSpec::Glm { w, psi } => make_glm_instance(w, *psi),
        }
    }

    /// Flat `key=value` lines describing this instance.
    pub fn to_kv(&self) -> String {
        match self {
            InstanceSpec::Linear1d => "instance=linear1d".into(),
            InstanceSpec::Const { dim, value } => {
                format!("instance=const\nconst.dim={dim}\nconst.value={value}")
            }
            InstanceSpec::Holder { l, beta, alpha0, lambda, dim, seed } => format!(
                "instance=holder\nholder.l={l}\nholder.beta={beta}\nholder.alpha0={alpha0}\nholder.lambda={lambda}\nholder.dim={dim}\nholder.seed={seed}"
            ),
            InstanceSpec::LowerBound { dim, eps, w, lambda, l, beta, sigma_seed } => format!(
                "instance=lower_bound\nlb.dim={dim}\nlb.eps={eps}\nlb.w={w}\nlb.lambda={lambda}\nlb.l={l}\nlb.beta={beta}\nlb.sigma_seed={sigma_seed}"
            ),
            InstanceSpec::Glm { w, psi } => {
                let ws = w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
                let ps = match psi {
                    PsiSpec::LinearQuarter => "linear_quarter".into(),
                    PsiSpec::Linear { slope } => format!("linear:{slope}"),
                    PsiSpec::Logistic { k } => format!("logistic:{k}"),
                };
                format!("instance=glm\nglm.w={ws}\nglm.psi={ps}")
            }
        }
    }

    /// Parse from `key=value` lines produced by [`InstanceSpec::to_kv`].
    pub fn parse_kv(text: &str) -> Result<Self> {
        let mut kv = std::collections::HashMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                kv.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let bad = |k: &str| Error::InvalidConfig(format!("missing or malformed key {k}"));
        let getf = |kv: &std::collections::HashMap<String, String>, k: &str| -> Result<f64> {
            kv.get(k).ok_or_else(|| bad(k))?.parse().map_err(|_| bad(k))
        };
        let getu = |kv: &std::collections::HashMap<String, String>, k: &str| -> Result<u64> {
            kv.get(k).ok_or_else(|| bad(k))?.parse().map_err(|_| bad(k))
        };
        match kv.get("instance").map(String::as_str) {
            Some("linear1d") | None => Ok(InstanceSpec::Linear1d),
            Some("const") => Ok(InstanceSpec::Const {
                dim: getu(&kv, "const.dim")? as usize,
                value: getf(&kv, "const.value")?,
            }),
            Some("holder") => Ok(InstanceSpec::Holder {
                l: getf(&kv, "holder.l")?,
                beta: getf(&kv, "holder.beta")?,
                alpha0: getf(&kv, "holder.alpha0")?,
                lambda: getf(&kv, "holder.lambda")?,
                dim: getu(&kv, "holder.dim")? as usize,
                seed: getu(&kv, "holder.seed")?,
            }),
            Some("lower_bound") => Ok(InstanceSpec::LowerBound {
                dim: getu(&kv, "lb.dim")? as usize,
                eps: getf(&kv, "lb.eps")?,
                w: getf(&kv, "lb.w")?,
                lambda: getf(&kv, "lb.lambda")?,
                l: getf(&kv, "lb.l")?,
                beta: getf(&kv, "lb.beta")?,
                sigma_seed: getu(&kv, "lb.sigma_seed")?,
            }),
            Some("glm") => {
                let w: Vec<f64> = kv
                    .get("glm.w")
                    .ok_or_else(|| bad("glm.w"))?
                    .split(',')
                    .map(|s| s.trim().parse().map_err(|_| bad("glm.w")))
                    .collect::<Result<_>>()?;
                let psi = match kv.get("glm.psi").map(String::as_str) {
                    Some("linear_quarter") | None => PsiSpec::LinearQuarter,
                    Some(s) if s.starts_with("linear:") => PsiSpec::Linear {
                        slope: s[7..].parse().map_err(|_| bad("glm.psi"))?,
                    },
                    Some(s) if s.starts_with("logistic:") => PsiSpec::Logistic {
                        k: s[9..].parse().map_err(|_| bad("glm.psi"))?,
                    },
                    Some(other) => {
                        return Err(Error::InvalidConfig(format!("unknown psi {other}")))
                    }
                };
                Ok(InstanceSpec::Glm { w, psi })
            }
            Some(other) => Err(Error::InvalidConfig(format!("unknown instance {other}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn holder_check(inst: &ProblemInstance, pairs: usize, seed: u64) {
        let sm = inst.descriptors.smoothness;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        for _ in 0..pairs {
            let a = inst.sample_x(&mut rng);
            let b = inst.sample_x(&mut rng);
            let d: f64 = a
                .iter()
                .zip(&b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            let gap = (inst.eta(&a) - inst.eta(&b)).abs();
            assert!(
                gap <= sm.l * d.powf(sm.beta) + 1e-9,
                "Hölder violated: gap={gap} bound={} on {}",
                sm.l * d.powf(sm.beta),
                inst.name
            );
        }
    }

    #[test]
    fn linear_1d_closed_forms() {
        let inst = make_linear_1d();
        assert_eq!(inst.eta(&[0.5]), 0.5);
        assert!((inst.gamma_delta_analytic(0.2).unwrap() - 0.1).abs() < 1e-15);
        // Bayes fixed-cost risk at lambda = 0.2:
        // int_0^0.2 x dx + int_0.8^1 (1-x) dx + 0.2 * 0.6 = 0.16.
        assert!((inst.bayes_fixed_risk_analytic(0.2).unwrap() - 0.16).abs() < 1e-15);
        holder_check(&inst, 10_000, 5);
    }

    #[test]
    fn holder_instance_passes_statistical_checks() {
        let a = make_holder_instance(1.0, 1.0, 1.0, 0.2, 1, 11).unwrap();
        holder_check(&a, 10_000, 17);
        let b = make_holder_instance(1.0, 0.5, 1.0, 0.2, 1, 11).unwrap();
        holder_check(&b, 10_000, 19);

        // Margin: empirical band mass / t stays below the recorded constant.
        let inst = a;
        let MarginParams { c0, alpha0 } = inst.descriptors.margin.unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let xs: Vec<Vec<f64>> = (0..40_000).map(|_| inst.sample_x(&mut rng)).collect();
        for k in 1..=20 {
            let t = k as f64 / 100.0;
            let mass = xs
                .iter()
                .filter(|x| (inst.eta(x) - 0.2).abs() <= t)
                .count() as f64
                / xs.len() as f64;
            assert!(
                mass <= c0 * t.powf(alpha0) + 0.01,
                "t={t} mass={mass} c0={c0}"
            );
        }
    }

    #[test]
    fn holder_instance_rejects_bad_params() {
        assert!(make_holder_instance(1.0, 0.0, 1.0, 0.2, 1, 0).is_err());
        assert!(make_holder_instance(1.0, 1.0, 1.0, 0.6, 1, 0).is_err());
        assert!(make_holder_instance(0.1, 1.0, 1.0, 0.2, 1, 0).is_err());
    }

    #[test]
    fn lower_bound_instance_geometry() {
        let dim = 2;
        let eps = 1.0 / 16.0;
        let m = lower_bound_cube_count(dim, eps).unwrap();
        assert!(m >= 1);
        let sigma = SigmaVector::all_plus(2 * m);
        let w = 0.4 / m as f64;
        let inst =
            make_lower_bound_instance(dim, eps, w, &sigma, 0.2, 3.0, 1.0, None).unwrap();

        // At a bump center with sigma = +1 in Q1: eta = lambda + L (eps/2)^beta.
        let EtaKind::LowerBound(g) = &inst.kind else { panic!() };
        let z = g.centers[0].clone();
        let amp = 3.0 * (eps / 2.0);
        assert!((inst.eta(&z) - (0.2 + amp)).abs() < 1e-12);
        // At distance eps/2 along an axis the bump has died out.
        let mut edge = z.clone();
        edge[0] += eps / 2.0;
        assert!((inst.eta(&edge) - 0.2).abs() < 1e-12);

        // Total mass normalizes, and a bump's inner cube carries exactly w.
        let root = Cell::root(dim);
        assert!((inst.box_measure(&root).unwrap() - 1.0).abs() < 1e-9);
        let bump_box = Cell {
            depth: 0,
            index: 1,
            lower: z.iter().map(|c| c - eps / 4.0).collect(),
            upper: z.iter().map(|c| c + eps / 4.0).collect(),
        };
        assert!((inst.box_measure(&bump_box).unwrap() - w).abs() < 1e-12);

        holder_check(&inst, 10_000, 31);
        // eta stays inside [0,1] on sampled points.
        let mut rng = ChaCha12Rng::seed_from_u64(37);
        for _ in 0..20_000 {
            let x = inst.sample_x(&mut rng);
            let e = inst.eta(&x);
            assert!((0.0..=1.0).contains(&e), "eta({x:?}) = {e}");
        }
    }

    #[test]
    fn lower_bound_rejects_bad_configs() {
        let m = lower_bound_cube_count(2, 1.0 / 16.0).unwrap();
        let sigma = SigmaVector::all_plus(2 * m);
        // L < 3
        assert!(
            make_lower_bound_instance(2, 1.0 / 16.0, 1e-3, &sigma, 0.2, 2.0, 1.0, None).is_err()
        );
        // sigma length mismatch
        let bad = SigmaVector::all_plus(3);
        assert!(
            make_lower_bound_instance(2, 1.0 / 16.0, 1e-3, &bad, 0.2, 3.0, 1.0, None).is_err()
        );
        // amplitude too large: eps/2 * L close to 1/2 - lambda
        assert!(
            make_lower_bound_instance(2, 0.5, 1e-3, &SigmaVector::all_plus(0), 0.2, 3.0, 1.0, None)
                .is_err()
        );
    }

    #[test]
    fn lower_bound_bounded_rate_variant_normalizes() {
        // The optional fifth corner ball takes mass delta - 2 m w and the
        // density still integrates to one (D >= 3).
        let dim = 3;
        let eps = 1.0 / 12.0;
        let m = lower_bound_cube_count(dim, eps).unwrap();
        assert!(m >= 1);
        let sigma = SigmaVector::all_plus(2 * m);
        let w = 0.01 / m as f64;
        let inst = make_lower_bound_instance(dim, eps, w, &sigma, 0.2, 3.0, 1.0, Some(0.3)).unwrap();
        let root = Cell::root(dim);
        assert!((inst.box_measure(&root).unwrap() - 1.0).abs() < 1e-9);
        // eta = 1/2 on the fifth ball; its mass is exactly delta - 2 m w.
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mut band = 0u64;
        let total = 40_000u64;
        for _ in 0..total {
            let x = inst.sample_x(&mut rng);
            if (inst.eta(&x) - 0.5).abs() < 1e-12 {
                band += 1;
            }
        }
        let expected = 0.3 - 2.0 * m as f64 * w;
        let got = band as f64 / total as f64;
        assert!(
            (got - expected).abs() < 0.01,
            "eta = 1/2 mass {got} vs expected {expected}"
        );
        // The variant requires a fifth corner, so D = 2 is rejected.
        let m2 = lower_bound_cube_count(2, 1.0 / 16.0).unwrap();
        assert!(make_lower_bound_instance(
            2,
            1.0 / 16.0,
            1e-3,
            &SigmaVector::all_plus(2 * m2),
            0.2,
            3.0,
            1.0,
            Some(0.3)
        )
        .is_err());
    }

    #[test]
    fn measure_is_additive() {
        let inst = make_linear_1d();
        let a = Cell { depth: 2, index: 1, lower: vec![0.0], upper: vec![0.25] };
        let b = Cell { depth: 2, index: 3, lower: vec![0.5], upper: vec![0.75] };
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let opts = McOptions { samples: 10_000 };
        let ma = inst.measure(std::slice::from_ref(&a), &opts, &mut rng);
        let mb = inst.measure(std::slice::from_ref(&b), &opts, &mut rng);
        let mab = inst.measure(&[a, b], &opts, &mut rng);
        assert_eq!(ma.stderr, 0.0);
        assert!((ma.value + mb.value - mab.value).abs() < 1e-12);
        assert!((mab.value - 0.5).abs() < 1e-12);

        let half = Cell { depth: 1, index: 1, lower: vec![0.0], upper: vec![0.5] };
        assert!((inst.measure(&[half], &opts, &mut rng).value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn glm_instance_values() {
        let inst = make_glm_instance(&[1.0, 0.0], PsiSpec::LinearQuarter).unwrap();
        assert!((inst.eta(&[0.8, 0.3]) - 0.7).abs() < 1e-12);
        assert!(!inst.descriptors.normalized_direction);
        // x orthogonal to w*: eta = 1/2.
        assert!((inst.eta(&[0.0, 0.9]) - 0.5).abs() < 1e-12);

        let scaled = make_glm_instance(&[2.0, 0.0], PsiSpec::LinearQuarter).unwrap();
        assert!(scaled.descriptors.normalized_direction);
        assert!((scaled.eta(&[0.8, 0.3]) - 0.7).abs() < 1e-12);

        // Monotone along w* on random lines.
        let w = [0.6, 0.8];
        let inst = make_glm_instance(&w, PsiSpec::LinearQuarter).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..200 {
            let base = inst.sample_x(&mut rng);
            let t1 = rng.random_range(0.0..0.3);
            let t2 = t1 + rng.random_range(0.0..0.3);
            let p1: Vec<f64> = base.iter().zip(&w).map(|(b, wi)| b + t1 * wi).collect();
            let p2: Vec<f64> = base.iter().zip(&w).map(|(b, wi)| b + t2 * wi).collect();
            assert!(inst.eta(&p2) >= inst.eta(&p1) - 1e-12);
        }
        holder_check(&inst, 10_000, 41);
    }

    #[test]
    fn instance_spec_round_trips() {
        let specs = vec![
            InstanceSpec::Linear1d,
            InstanceSpec::Const { dim: 2, value: 0.9 },
            InstanceSpec::Holder { l: 1.0, beta: 0.5, alpha0: 1.0, lambda: 0.2, dim: 1, seed: 3 },
            InstanceSpec::LowerBound {
                dim: 2,
                eps: 1.0 / 16.0,
                w: 1e-3,
                lambda: 0.2,
                l: 3.0,
                beta: 1.0,
                sigma_seed: 1,
            },
            InstanceSpec::Glm { w: vec![0.6, 0.8], psi: PsiSpec::Linear { slope: 0.3 } },
        ];
        for spec in specs {
            let text = spec.to_kv();
            let back = InstanceSpec::parse_kv(&text).unwrap();
            assert_eq!(spec, back);
            spec.build().unwrap();
        }
    }
}
