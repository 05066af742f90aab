//! Computationally feasible learner for generalized-linear regression
//! functions `eta(x) = psi(<x, w*>) + 1/2`.
//!
//! The direction `w*` is recovered through `D - 1` two-dimensional angle
//! problems: restrict the problem to the unit circle in the plane of
//! coordinates `(1, j)`, run the fixed-cost learner over the circle
//! parameter, and read the bisector of the region estimated above the
//! `1 - lambda` level (pushed away from the region below `lambda`). The
//! per-pair angles are then reassembled by anchoring the first coordinate.

use crate::engine::default_h_max;
use crate::estimate::SmoothnessParams;
use crate::fixed_cost::run_algorithm1;
use crate::oracle::Oracle;
use crate::partition::TreeParams;
use crate::problems::{make_circle_pair, EtaKind, ProblemInstance};
use crate::{Error, Result};

/// One two-dimensional angle estimation task: coordinates `(1, pair_j+1)`
/// of the ambient problem, restricted to the unit circle.
#[derive(Debug, Clone)]
pub struct AngleProblem<'a> {
    pub instance: &'a ProblemInstance,
    /// Second coordinate of the pair (0-based index, `>= 1`).
    pub pair_j: usize,
    pub budget: u64,
    pub lambda: f64,
}

/// Estimated angle for one coordinate pair.
#[derive(Debug, Clone, Copy)]
pub struct PairAngle {
    /// Angle in `[0, 2 pi)` of the normalized projection of `w*` onto the
    /// pair plane.
    pub theta_hat: f64,
    pub labels_used: u64,
}

/// Recovered direction estimate.
#[derive(Debug, Clone)]
pub struct RecoveredDirection {
    pub w_hat: Vec<f64>,
    /// Per-pair angle estimates (`D - 1` of them).
    pub pair_angles: Vec<f64>,
    /// Labels spent per pair.
    pub pair_labels: Vec<u64>,
    /// Pairs whose plane projection was too close to orthogonal to `e1`.
    pub degenerate: Vec<bool>,
    pub labels_used: u64,
}

fn glm_parts(instance: &ProblemInstance) -> Result<(&[f64], crate::problems::PsiSpec)> {
    match &instance.kind {
        EtaKind::Glm { w, psi } => Ok((w, *psi)),
        _ => Err(Error::InvalidConfig("angle estimation needs a GLM instance".into())),
    }
}

/// Estimate the pair angle by running the fixed-cost learner on the circle
/// restriction and orienting its level-set evidence.
///
/// Every activated cell (refined ancestors included — their labels are real
/// observations at their centers) contributes its estimate to a
/// variance-weighted first-harmonic fit `eta - 1/2 ~ A cos + B sin`; the
/// angle is `atan2(B, A)`, the bisector of the region fitted above the
/// upper level and away from the region below the lower one.
pub fn estimate_angle_2d(ap: &AngleProblem<'_>, seed: u64) -> Result<PairAngle> {
    let (w, psi) = glm_parts(ap.instance)?;
    if ap.pair_j == 0 || ap.pair_j >= w.len() {
        return Err(Error::InvalidConfig(format!("pair index {} out of range", ap.pair_j)));
    }
    let mut circle = make_circle_pair(w, ap.pair_j, psi);
    circle.hard_labels = ap.instance.hard_labels;
    let sm = circle.descriptors.smoothness;
    let tp = TreeParams::default_for_dim(1)?;
    let mut oracle = Oracle::membership(ap.budget, seed);
    let out = run_algorithm1(&circle, &mut oracle, ap.budget, ap.lambda, sm, tp)?;

    let two_pi = 2.0 * std::f64::consts::PI;
    let (a, b);
    let mut informative = 0usize;
    if ap.instance.hard_labels {
        // Deterministic labels make the profile a step arc; the arc-length
        // quadrature over the live tiling is symmetric and alias-free.
        let (mut vx, mut vy) = (0.0f64, 0.0f64);
        for leaf in &out.leaves {
            if leaf.n_hi == 0 || !leaf.eta_hat.is_finite() {
                continue;
            }
            informative += 1;
            let width = leaf.cell.upper[0] - leaf.cell.lower[0];
            let theta = two_pi * 0.5 * (leaf.cell.lower[0] + leaf.cell.upper[0]);
            vx += width * (leaf.eta_hat - 0.5) * theta.cos();
            vy += width * (leaf.eta_hat - 0.5) * theta.sin();
        }
        a = vx;
        b = vy;
    } else {
        // Stochastic labels sit exactly at cell centers, so a
        // variance-weighted harmonic fit through the point design (refined
        // ancestors included) is unbiased and close to efficient.
        let (mut scc, mut sss, mut scs, mut syc, mut sys) = (0.0f64, 0.0, 0.0, 0.0, 0.0);
        for leaf in &out.history {
            if leaf.n_hi == 0 || !leaf.eta_hat.is_finite() {
                continue;
            }
            informative += 1;
            let theta = two_pi * 0.5 * (leaf.cell.lower[0] + leaf.cell.upper[0]);
            let pq = (leaf.eta_hat * (1.0 - leaf.eta_hat)).max(0.04);
            let wgt = leaf.n_hi as f64 / pq;
            let (c, s) = (theta.cos(), theta.sin());
            scc += wgt * c * c;
            sss += wgt * s * s;
            scs += wgt * c * s;
            syc += wgt * (leaf.eta_hat - 0.5) * c;
            sys += wgt * (leaf.eta_hat - 0.5) * s;
        }
        let det = scc * sss - scs * scs;
        if informative < 2 || det.abs() < 1e-12 {
            return Err(Error::InsufficientBudget(format!(
                "level structure not resolved with {} labels on pair (1, {})",
                out.labels_used,
                ap.pair_j + 1
            )));
        }
        a = (sss * syc - scs * sys) / det;
        b = (scc * sys - scs * syc) / det;
    }
    if informative == 0 || (a * a + b * b).sqrt() < 1e-12 {
        return Err(Error::InsufficientBudget(format!(
            "no level-set signal with {} labels on pair (1, {})",
            out.labels_used,
            ap.pair_j + 1
        )));
    }
    let mut theta = b.atan2(a);
    if theta < 0.0 {
        theta += two_pi;
    }
    Ok(PairAngle { theta_hat: theta, labels_used: out.labels_used })
}

/// Reassemble a direction from the `D - 1` pair angles and the sign of the
/// first coordinate. Angles encode `atan2(w_j, w_1)`; the first coordinate
/// is the anchor, so near-orthogonal pairs (`cos theta ~ 0`) are flagged.
pub fn reassemble(dim: usize, angles: &[f64], first_sign: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    if dim < 2 || angles.len() != dim - 1 {
        return Err(Error::InvalidConfig(format!(
            "need D-1 = {} angles, got {}",
            dim.saturating_sub(1),
            angles.len()
        )));
    }
    if dim == 2 {
        return Ok((vec![angles[0].cos(), angles[0].sin()], vec![false]));
    }
    let mut degenerate = vec![false; dim - 1];
    let mut raw = vec![1.0f64];
    for (k, th) in angles.iter().enumerate() {
        let c = th.cos();
        let s = th.sin();
        if c.abs() < 1e-9 {
            degenerate[k] = true;
            // The pair pins w_1 ~ 0; the ratio magnitude is unusable, keep
            // only the sign information.
            raw.push(s.signum() * 1e9);
        } else {
            raw.push(s / c);
        }
    }
    let norm: f64 = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let sign = if first_sign < 0.0 { -1.0 } else { 1.0 };
    Ok((raw.iter().map(|v| sign * v / norm).collect(), degenerate))
}

/// The dimension-coupling loop: one angle problem per coordinate pair plus
/// one sign anchor for the first coordinate.
pub fn dimension_coupling(
    dim: usize,
    mut angle_of_pair: impl FnMut(usize) -> Result<PairAngle>,
    first_sign: impl FnOnce() -> f64,
) -> Result<RecoveredDirection> {
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    let mut angles = Vec::with_capacity(dim - 1);
    let mut pair_labels = Vec::with_capacity(dim - 1);
    let mut labels = 0u64;
    for j in 1..dim {
        let pa = angle_of_pair(j)?;
        angles.push(pa.theta_hat);
        pair_labels.push(pa.labels_used);
        labels += pa.labels_used;
    }
    let sign = if dim == 2 { 1.0 } else { first_sign() };
    let (w_hat, degenerate) = reassemble(dim, &angles, sign)?;
    Ok(RecoveredDirection {
        w_hat,
        pair_angles: angles,
        pair_labels,
        degenerate,
        labels_used: labels,
    })
}

/// Full pipeline: recover `w*` of a GLM instance with `n` labels per pair.
///
/// The sign anchor queries the label at `e1`; with noisy labels a small
/// majority vote is used, with hard labels a single query suffices.
pub fn recover_direction(
    instance: &ProblemInstance,
    n_per_pair: u64,
    lambda: f64,
    seed: u64,
) -> Result<RecoveredDirection> {
    let dim = instance.dim;
    let mut anchor_labels = 0u64;
    let mut rd = dimension_coupling(
        dim,
        |j| {
            let ap = AngleProblem { instance, pair_j: j, budget: n_per_pair, lambda };
            estimate_angle_2d(&ap, seed.wrapping_add(j as u64))
        },
        || {
            let votes = if instance.hard_labels { 1 } else { 64 };
            let mut oracle = Oracle::membership(votes, seed.wrapping_mul(0x9e37_79b9));
            let mut e1 = vec![0.0; dim];
            e1[0] = 1.0;
            let mut ones = 0u64;
            for _ in 0..votes {
                if oracle.label_at(&e1, instance).unwrap_or(0) == 1 {
                    ones += 1;
                }
            }
            anchor_labels = votes;
            if 2 * ones >= votes {
                1.0
            } else {
                -1.0
            }
        },
    )?;
    rd.labels_used += anchor_labels;
    Ok(rd)
}

/// Order-level sample-complexity bound with leading constant 1:
/// `n = (1 / nu_inv(eps / (D-1)))^{2 + 1/beta}`.
pub fn sample_complexity(
    epsilon: f64,
    dim: usize,
    beta: f64,
    nu_inverse: impl Fn(f64) -> f64,
) -> f64 {
    let per_pair = epsilon / (dim as f64 - 1.0);
    (1.0 / nu_inverse(per_pair)).powf(2.0 + 1.0 / beta)
}

/// Depth cap note: the circle runs reuse the fixed-cost learner, whose
/// depth cap is `ceil(ln n)`.
pub fn circle_depth_cap(n: u64) -> u32 {
    default_h_max(n)
}

/// Pointwise accuracy scale of the circle runs (used for reporting):
/// `b_n ~ (n / log n)^{-beta/(2 beta + 1)}` up to constants.
pub fn circle_accuracy_scale(n: u64, sm: &SmoothnessParams) -> f64 {
    let nn = n as f64;
    (nn / nn.ln()).powf(-sm.beta / (2.0 * sm.beta + 1.0))
}
