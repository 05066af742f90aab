//! Reference classifiers, risk functionals and convergence-rate fitting.
//!
//! Risks are computed exactly by piecewise integration when the instance
//! provides closed forms (the one-dimensional analytic family), otherwise by
//! Monte-Carlo with a reported standard error.

use crate::classifier::{AbstainClassifier, ClassifierLeaf, Decision};
use crate::partition::Cell;
use crate::problems::{McOptions, ProblemInstance};
use crate::{Error, Result};
use rand::Rng;

/// Which abstention model a risk is computed under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskMode {
    /// `R_lambda = P(err, not abstain) + lambda P(abstain)`.
    Fixed { lambda: f64 },
    /// Misclassification risk only; the abstention rate is reported alongside.
    Bounded,
}

/// Risk evaluation result.
#[derive(Debug, Clone, Copy)]
pub struct RiskReport {
    pub risk: f64,
    pub abstain_rate: f64,
    /// Gap to the Bayes reference under the same mode.
    pub excess: f64,
    /// Standard error when any Monte-Carlo estimate entered the numbers.
    pub mc_stderr: Option<f64>,
}

/// The pointwise Bayes rule for the fixed-cost problem.
#[derive(Debug, Clone, Copy)]
pub struct BayesFixedRule {
    pub lambda: f64,
}

impl BayesFixedRule {
    /// Label 1, 0, or abstain according to which of `1 - eta`, `eta`,
    /// `lambda` is smallest.
    pub fn decide(&self, eta: f64) -> Decision {
        let miss1 = 1.0 - eta;
        let miss0 = eta;
        if miss1 <= miss0 && miss1 <= self.lambda {
            Decision::One
        } else if miss0 <= self.lambda {
            Decision::Zero
        } else {
            Decision::Abstain
        }
    }
}

/// Bayes classifier and its risk for the fixed-cost problem.
pub fn bayes_fixed_cost(
    instance: &ProblemInstance,
    lambda: f64,
    mc: &McOptions,
    rng: &mut impl Rng,
) -> (BayesFixedRule, f64) {
    let rule = BayesFixedRule { lambda };
    if let Some(r) = instance.bayes_fixed_risk_analytic(lambda) {
        return (rule, r);
    }
    let mut acc = 0.0;
    for _ in 0..mc.samples {
        let x = instance.sample_x(rng);
        let eta = instance.eta(&x);
        acc += match rule.decide(eta) {
            Decision::One => 1.0 - eta,
            Decision::Zero => eta,
            _ => lambda,
        };
    }
    (rule, acc / mc.samples as f64)
}

/// `gamma_delta = sup{gamma >= 0 : P(|eta - 1/2| <= gamma) <= delta}`;
/// analytic when available, otherwise bisection over a fixed Monte-Carlo
/// sample to tolerance 1e-4.
pub fn gamma_delta(
    instance: &ProblemInstance,
    delta: f64,
    rng: &mut impl Rng,
) -> f64 {
    gamma_delta_opts(instance, delta, rng, false)
}

/// As [`gamma_delta`], with an option to force the Monte-Carlo path (used to
/// cross-check the analytic values).
pub fn gamma_delta_opts(
    instance: &ProblemInstance,
    delta: f64,
    rng: &mut impl Rng,
    force_mc: bool,
) -> f64 {
    if !force_mc {
        if let Some(g) = instance.gamma_delta_analytic(delta) {
            return g;
        }
    }
    if delta <= 0.0 {
        return 0.0;
    }
    let samples = 100_000;
    let dists: Vec<f64> = (0..samples)
        .map(|_| {
            let x = instance.sample_x(rng);
            (instance.eta(&x) - 0.5).abs()
        })
        .collect();
    let mass = |g: f64| dists.iter().filter(|d| **d <= g).count() as f64 / samples as f64;
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    if mass(hi) <= delta {
        return hi;
    }
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) <= delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Decision regions of a 1D classifier as elementary intervals.
fn elementary_intervals(g: &AbstainClassifier) -> Vec<(f64, f64, Decision)> {
    let mut cuts = vec![0.0, 1.0];
    for (lo, hi, _) in g.voronoi_1d() {
        cuts.push(lo);
        cuts.push(hi);
    }
    for leaf in &g.leaves {
        if leaf.contained.is_some() {
            cuts.push(leaf.cell.lower[0]);
            cuts.push(leaf.cell.upper[0]);
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let mut out = Vec::with_capacity(cuts.len());
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 0.0 {
            continue;
        }
        let mid = [0.5 * (a + b)];
        if let Ok(d) = g.predict(&mid) {
            out.push((a, b, d));
        }
    }
    out
}

/// Risk of a classifier under the given mode: exact piecewise integration
/// when the instance is 1D-analytic, Monte-Carlo otherwise.
pub fn risk_of(
    instance: &ProblemInstance,
    g: &AbstainClassifier,
    mode: RiskMode,
    mc: &McOptions,
    rng: &mut impl Rng,
) -> RiskReport {
    let analytic = instance.dim == 1
        && g.dim == 1
        && instance.seg_eta_integral(0.0, 1.0).is_some()
        && instance.box_measure(&Cell::root(1)).is_some();
    let (risk, abstain, stderr) = if analytic {
        let mut risk = 0.0;
        let mut abstain = 0.0;
        for (a, b, d) in elementary_intervals(g) {
            let (p0, p1, pd) = d.weights();
            let seg = Cell { depth: 0, index: 1, lower: vec![a], upper: vec![b] };
            let mass = instance.box_measure(&seg).unwrap();
            let int_eta = instance.seg_eta_integral(a, b).unwrap();
            risk += p0 * int_eta + p1 * (mass - int_eta);
            abstain += pd * mass;
            if let RiskMode::Fixed { lambda } = mode {
                risk += pd * lambda * mass;
            }
        }
        (risk, abstain, None)
    } else {
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        let mut abst = 0.0;
        for _ in 0..mc.samples {
            let x = instance.sample_x(rng);
            let eta = instance.eta(&x);
            let (p0, p1, pd) = g.predict(&x).map(|d| d.weights()).unwrap_or((0.0, 0.0, 0.0));
            let mut r = p0 * eta + p1 * (1.0 - eta);
            if let RiskMode::Fixed { lambda } = mode {
                r += pd * lambda;
            }
            acc += r;
            acc2 += r * r;
            abst += pd;
        }
        let nn = mc.samples as f64;
        let mean = acc / nn;
        let var = (acc2 / nn - mean * mean).max(0.0);
        (mean, abst / nn, Some((var / nn).sqrt()))
    };

    let bayes = match mode {
        RiskMode::Fixed { lambda } => bayes_fixed_cost(instance, lambda, mc, rng).1,
        RiskMode::Bounded => match instance.bayes_bounded_risk_analytic(abstain_budget(instance, g, abstain)) {
            Some(r) => r,
            None => bayes_bounded_mc(instance, abstain, mc, rng),
        },
    };
    RiskReport { risk, abstain_rate: abstain, excess: risk - bayes, mc_stderr: stderr }
}

/// Bounded-mode comparisons are made at the classifier's own abstention
/// rate (the natural budget it actually used).
fn abstain_budget(_instance: &ProblemInstance, _g: &AbstainClassifier, rate: f64) -> f64 {
    rate.clamp(0.0, 1.0)
}

fn bayes_bounded_mc(
    instance: &ProblemInstance,
    delta: f64,
    mc: &McOptions,
    rng: &mut impl Rng,
) -> f64 {
    let g = gamma_delta(instance, delta, rng);
    let mut acc = 0.0;
    for _ in 0..mc.samples {
        let x = instance.sample_x(rng);
        let eta = instance.eta(&x);
        if (eta - 0.5).abs() > g {
            acc += eta.min(1.0 - eta);
        }
    }
    acc / mc.samples as f64
}

/// Risk of a classifier against an explicit Bayes reference risk (used when
/// the comparison budget is fixed by the experiment, not by the classifier).
pub fn risk_against(
    instance: &ProblemInstance,
    g: &AbstainClassifier,
    mode: RiskMode,
    bayes_risk: f64,
    mc: &McOptions,
    rng: &mut impl Rng,
) -> RiskReport {
    let mut rep = risk_of(instance, g, mode, mc, rng);
    rep.excess = rep.risk - bayes_risk;
    rep
}

/// Histogram plug-in baseline: `n` i.i.d. labelled pairs, a uniform grid
/// with side `n^{-1/(2 beta + D)}`, empirical `eta` per bin (1/2 for empty
/// bins), then either the pointwise fixed-cost rule or the bounded-rate
/// prefix construction.
pub fn passive_plugin(
    instance: &ProblemInstance,
    n: u64,
    mode: RiskMode,
    delta: f64,
    rng: &mut impl Rng,
) -> Result<AbstainClassifier> {
    if n == 0 {
        return Err(Error::InvalidConfig("passive baseline needs n >= 1".into()));
    }
    let beta = instance.descriptors.smoothness.beta;
    let d = instance.dim;
    let bins_per_axis = ((n as f64).powf(1.0 / (2.0 * beta + d as f64)).round() as usize).max(1);
    let total_bins = bins_per_axis.pow(d as u32);
    let mut counts = vec![0u64; total_bins];
    let mut sums = vec![0u64; total_bins];
    for _ in 0..n {
        let x = instance.sample_x(rng);
        let y = instance.sample_label(&x, rng);
        let mut idx = 0usize;
        for xi in &x {
            let b = ((xi * bins_per_axis as f64) as usize).min(bins_per_axis - 1);
            idx = idx * bins_per_axis + b;
        }
        counts[idx] += 1;
        sums[idx] += u64::from(y);
    }
    let eta_hat: Vec<f64> = counts
        .iter()
        .zip(&sums)
        .map(|(c, s)| if *c == 0 { 0.5 } else { *s as f64 / *c as f64 })
        .collect();

    let bin_cell = |idx: usize| -> Cell {
        let mut rem = idx;
        let mut lower = vec![0.0; d];
        let mut upper = vec![0.0; d];
        for axis in (0..d).rev() {
            let b = rem % bins_per_axis;
            rem /= bins_per_axis;
            lower[axis] = b as f64 / bins_per_axis as f64;
            upper[axis] = (b + 1) as f64 / bins_per_axis as f64;
        }
        Cell { depth: 0, index: idx as u64 + 1, lower, upper }
    };

    let leaves: Vec<ClassifierLeaf> = match mode {
        RiskMode::Fixed { lambda } => {
            let rule = BayesFixedRule { lambda };
            (0..total_bins)
                .map(|i| ClassifierLeaf {
                    cell: bin_cell(i),
                    projected: rule.decide(eta_hat[i]),
                    contained: None,
                })
                .collect()
        }
        RiskMode::Bounded => {
            // Sort bins by |eta_hat - 1/2| ascending; abstain on the largest
            // prefix of mass at most delta plus a randomized boundary bin.
            let mut order: Vec<usize> = (0..total_bins).collect();
            order.sort_by(|a, b| {
                (eta_hat[*a] - 0.5)
                    .abs()
                    .total_cmp(&(eta_hat[*b] - 0.5).abs())
                    .then(a.cmp(b))
            });
            let mut contained: Vec<Option<Decision>> = vec![None; total_bins];
            let mut cum = 0.0;
            let mut it = order.iter().peekable();
            while let Some(&i) = it.peek() {
                let mass = instance.box_measure(&bin_cell(*i)).unwrap_or(0.0);
                if cum + mass <= delta + 1e-12 {
                    contained[*i] = Some(Decision::Abstain);
                    cum += mass;
                    it.next();
                } else {
                    if mass > 0.0 {
                        let c_prime = ((delta - cum) / mass).clamp(0.0, 1.0);
                        if c_prime > 0.0 {
                            let j_prime = if eta_hat[*i] > 0.5 { 1.0 } else { 0.0 };
                            contained[*i] = Some(Decision::Randomized {
                                p0: (1.0 - c_prime) * (1.0 - j_prime),
                                p1: (1.0 - c_prime) * j_prime,
                                p_abstain: c_prime,
                            });
                        }
                    }
                    break;
                }
            }
            (0..total_bins)
                .map(|i| ClassifierLeaf {
                    cell: bin_cell(i),
                    projected: if eta_hat[i] > 0.5 { Decision::One } else { Decision::Zero },
                    contained: contained[i],
                })
                .collect()
        }
    };
    Ok(AbstainClassifier { dim: d, leaves })
}

/// Least-squares fit of `ln(excess)` against `ln(n)`.
#[derive(Debug, Clone, Copy)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub points_used: usize,
    pub points_dropped: usize,
}

/// Fit a convergence rate; non-positive risks are dropped.
pub fn fit_rate(budgets: &[u64], excess_risks: &[f64]) -> Result<RateFit> {
    if budgets.len() != excess_risks.len() {
        return Err(Error::InvalidConfig("budget/risk length mismatch".into()));
    }
    let pts: Vec<(f64, f64)> = budgets
        .iter()
        .zip(excess_risks)
        .filter(|(_, r)| **r > 0.0)
        .map(|(n, r)| ((*n as f64).ln(), r.ln()))
        .collect();
    let dropped = budgets.len() - pts.len();
    if pts.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 positive risk points, have {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    Ok(RateFit {
        slope,
        intercept: (sy - slope * sx) / n,
        points_used: pts.len(),
        points_dropped: dropped,
    })
}
