//! Bounded-rate abstention with an exactly known input marginal.
//!
//! The abstention threshold `gamma_delta` is unknown, so each round the
//! non-discarded cells are sorted by how far their pinched estimate sits from
//! 1/2, and the sorted prefix crossing mass `delta` brackets the threshold
//! from below (`gamma1_hat`) and above (`gamma2_hat`). Cells whose confidence
//! interval misses the resulting uncertainty bands are classified. The final
//! classifier abstains on the largest prefix of mass at most `delta` plus a
//! randomized slice of the next cell, hitting `delta` exactly.

use crate::classifier::{AbstainClassifier, ClassifierLeaf, Decision};
use crate::engine::{
    default_h_max, ActiveRun, DepthRule, LeafSummary, RunParams, Status, StepOutcome,
};
use crate::estimate::SmoothnessParams;
use crate::oracle::Oracle;
use crate::partition::{CellId, TreeParams};
use crate::problems::ProblemInstance;
use crate::trace::{Action, RunTrace, TraceRow};
use crate::{Error, Result};

/// One cell as seen by the threshold estimator: its `|f - 1/2|` value and
/// probability mass, sorted ascending by `(dist, id)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SortCell {
    pub dist: f64,
    pub mass: f64,
    pub id: CellId,
}

/// Threshold bracket extracted from the sorted cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdEstimate {
    pub gamma1_hat: f64,
    pub gamma2_hat: f64,
    /// 1-based index of the first prefix whose mass exceeds `delta`.
    pub k_t: usize,
    /// Mass of the strict prefix (`S1`) and of the covering prefix (`S2`).
    pub s1_mass: f64,
    pub s2_mass: f64,
}

/// Sort cells ascending by `(|f - 1/2|, depth, index)`.
pub fn sort_cells(cells: &mut [SortCell]) {
    cells.sort_unstable_by(|a, b| a.dist.total_cmp(&b.dist).then(a.id.cmp(&b.id)));
}

/// Step-4 estimator: `k_t = min{k >= 1 : P(E_1 u .. u E_k) > delta}`,
/// `gamma1_hat` the distance of cell `k_t - 1` (0 for an empty prefix),
/// `gamma2_hat` the distance of cell `k_t`.
pub fn estimate_thresholds(sorted: &[SortCell], delta: f64) -> Result<ThresholdEstimate> {
    let mut cum = 0.0;
    let mut prev_dist = 0.0;
    let mut prev_cum = 0.0;
    for (idx, c) in sorted.iter().enumerate() {
        cum += c.mass;
        if cum > delta {
            return Ok(ThresholdEstimate {
                gamma1_hat: if idx == 0 { 0.0 } else { prev_dist },
                gamma2_hat: c.dist,
                k_t: idx + 1,
                s1_mass: prev_cum,
                s2_mass: cum,
            });
        }
        prev_dist = c.dist;
        prev_cum = cum;
    }
    Err(Error::DegenerateConfig(format!(
        "total cell mass {cum} never exceeds delta = {delta}"
    )))
}

/// Rule used to drop cells from the unclassified set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateRule {
    /// Keep a cell iff `[l, u]` intersects
    /// `[1/2 + g1, 1/2 + g2 + 3J] u [1/2 - g2 - 3J, 1/2 - g1]`.
    #[default]
    IntervalBands,
    /// Pseudo-code variant: drop iff `|f - 1/2| > g2 + 3J` or `< g1`.
    DistanceGap,
}

/// True when the cell stays unclassified under the chosen rule.
pub fn keep_unclassified(
    rule: UpdateRule,
    lower: f64,
    upper: f64,
    dist: f64,
    est: &ThresholdEstimate,
    j_t: f64,
) -> bool {
    let g1 = est.gamma1_hat;
    let g2 = est.gamma2_hat + 3.0 * j_t;
    match rule {
        UpdateRule::IntervalBands => {
            let hit = |a: f64, b: f64| lower <= b && a <= upper;
            hit(0.5 + g1, 0.5 + g2) || hit(0.5 - g2, 0.5 - g1)
        }
        UpdateRule::DistanceGap => !(dist > g2 || dist < g1),
    }
}

/// Options for Algorithm 2.
#[derive(Debug, Clone, Copy)]
pub struct Algo2Options {
    pub update_rule: UpdateRule,
}

impl Default for Algo2Options {
    fn default() -> Self {
        Algo2Options { update_rule: UpdateRule::IntervalBands }
    }
}

#[derive(Debug)]
pub struct Algo2Output {
    pub classifier: AbstainClassifier,
    pub trace: RunTrace,
    pub leaves: Vec<LeafSummary>,
    pub labels_used: u64,
}

fn sorted_live_cells(run: &ActiveRun<'_>) -> Result<Vec<(usize, SortCell)>> {
    let mut cells = Vec::new();
    for s in run.live_slots() {
        let leaf = &run.leaves[s];
        if leaf.status == Status::Discarded {
            continue;
        }
        let mass = leaf.measure.ok_or_else(|| {
            Error::InvalidConfig(
                "algorithm 2 needs an analytic marginal for every cell".into(),
            )
        })?;
        cells.push((
            s,
            SortCell { dist: leaf.stats.dist_from_half(), mass, id: leaf.cell.id() },
        ));
    }
    cells.sort_unstable_by(|a, b| a.1.dist.total_cmp(&b.1.dist).then(a.1.id.cmp(&b.1.id)));
    Ok(cells)
}

/// Run the known-marginal bounded-rate algorithm.
pub fn run_algorithm2(
    instance: &ProblemInstance,
    oracle: &mut Oracle,
    n: u64,
    delta: f64,
    smoothness: SmoothnessParams,
    tree: TreeParams,
    opts: Algo2Options,
) -> Result<Algo2Output> {
    if !(0.0 < delta && delta < 1.0) {
        return Err(Error::InvalidConfig(format!("delta={delta} not in (0, 1)")));
    }
    if n == 0 {
        return Err(Error::InvalidConfig("budget must be at least 1".into()));
    }
    let params = RunParams {
        budget: n,
        smoothness,
        tree,
        depth: DepthRule::AtMost(default_h_max(n)),
    };
    let mut run = ActiveRun::new(instance, oracle, params)?;
    let mut trace = RunTrace::default();

    loop {
        let sorted = sorted_live_cells(&run)?;
        let flat: Vec<SortCell> = sorted.iter().map(|(_, c)| *c).collect();
        let est = estimate_thresholds(&flat, delta)?;

        let Some(slot) = run.select_candidate() else {
            trace.push(TraceRow::new(run.t, 0, 0, Action::Halt, 0.0, run.labels_used()));
            break;
        };
        let (h, i) = run.leaves[slot].cell.id();
        let j_t = run.leaves[slot].stats.index_i1();
        let outcome = run.refine_or_label(slot)?;
        let action = match outcome {
            StepOutcome::Refined { .. } => Action::Refine,
            StepOutcome::Labelled { y } => Action::Label { y },
            StepOutcome::Discarded => Action::Discard,
            StepOutcome::BudgetExhausted => break,
        };

        // End-of-round reclassification against the current bands.
        if j_t.is_finite() {
            let drop: Vec<usize> = run
                .live_slots()
                .filter(|&s| run.leaves[s].status == Status::Unclassified)
                .filter(|&s| {
                    let leaf = &run.leaves[s];
                    !keep_unclassified(
                        opts.update_rule,
                        leaf.stats.lower,
                        leaf.stats.upper,
                        leaf.stats.dist_from_half(),
                        &est,
                        j_t,
                    )
                })
                .collect();
            for s in drop {
                run.set_status(s, Status::Classified);
            }
        }

        let mut row = TraceRow::new(run.t, h, i, action, j_t, run.labels_used());
        row.gamma1 = Some(est.gamma1_hat);
        row.gamma2 = Some(est.gamma2_hat);
        row.k_t = Some(est.k_t);
        row.j_t = Some(j_t);
        trace.push(row);
        run.t += 1;
        if !run.budget_left()
            && matches!(outcome, StepOutcome::Labelled { .. } | StepOutcome::Discarded)
        {
            break;
        }
    }

    let classifier = finalize_classifier2(&run, delta)?;
    Ok(Algo2Output {
        labels_used: run.labels_used(),
        leaves: run.summaries(),
        classifier,
        trace,
    })
}

/// Build the final classifier: abstain on the largest sorted prefix with
/// mass at most `delta`, randomize the next cell so the abstention measure
/// equals `delta` exactly, and decide the rest by the sign of the envelope.
fn finalize_classifier2(run: &ActiveRun<'_>, delta: f64) -> Result<AbstainClassifier> {
    let sorted = sorted_live_cells(run)?;
    let mut cum = 0.0;
    let mut prefix: Vec<usize> = Vec::new();
    let mut boundary: Option<(usize, f64)> = None;
    for (slot, c) in &sorted {
        if cum + c.mass <= delta + 1e-12 {
            cum += c.mass;
            prefix.push(*slot);
        } else {
            boundary = Some((*slot, c.mass));
            break;
        }
    }
    let mut contained: std::collections::HashMap<usize, Decision> = std::collections::HashMap::new();
    for s in &prefix {
        contained.insert(*s, Decision::Abstain);
    }
    if let Some((slot, mass)) = boundary {
        if mass > 0.0 {
            let c_prime = ((delta - cum) / mass).clamp(0.0, 1.0);
            if c_prime > 0.0 {
                // j' = 1 when the boundary cell's pinched value sits above 1/2.
                let j_prime = if run.leaves[slot].stats.lower > 0.5 { 1.0 } else { 0.0 };
                contained.insert(
                    slot,
                    Decision::Randomized {
                        p0: (1.0 - c_prime) * (1.0 - j_prime),
                        p1: (1.0 - c_prime) * j_prime,
                        p_abstain: c_prime,
                    },
                );
            }
        }
    }
    let leaves = run
        .live_slots()
        .map(|s| {
            let leaf = &run.leaves[s];
            let projected = if leaf.stats.upper > 0.5 || leaf.status == Status::Discarded {
                Decision::One
            } else {
                // Covers l < 1/2 and the degenerate l = u = 1/2 corner.
                Decision::Zero
            };
            ClassifierLeaf {
                cell: leaf.cell.clone(),
                projected,
                contained: contained.get(&s).copied(),
            }
        })
        .collect();
    Ok(AbstainClassifier { dim: run.instance.dim, leaves })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_linear_1d, McOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn cells(masses: &[f64], dists: &[f64]) -> Vec<SortCell> {
        masses
            .iter()
            .zip(dists)
            .enumerate()
            .map(|(k, (m, d))| SortCell { dist: *d, mass: *m, id: (1, k as u64 + 1) })
            .collect()
    }

    #[test]
    fn threshold_estimate_hand_simulation() {
        let sorted = cells(&[0.5, 0.3, 0.2], &[0.05, 0.1, 0.2]);
        let est = estimate_thresholds(&sorted, 0.6).unwrap();
        assert_eq!(est.k_t, 2);
        assert!((est.gamma1_hat - 0.05).abs() < 1e-15);
        assert!((est.gamma2_hat - 0.1).abs() < 1e-15);

        let est = estimate_thresholds(&sorted, 0.4).unwrap();
        assert_eq!(est.k_t, 1);
        assert_eq!(est.gamma1_hat, 0.0);
        assert!((est.gamma2_hat - 0.05).abs() < 1e-15);

        let est = estimate_thresholds(&sorted, 0.999).unwrap();
        assert_eq!(est.k_t, 3);

        assert!(estimate_thresholds(&sorted[..1], 0.6).is_err());
    }

    #[test]
    fn update_rule_interval_intersections() {
        let est = ThresholdEstimate {
            gamma1_hat: 0.05,
            gamma2_hat: 0.1,
            k_t: 2,
            s1_mass: 0.5,
            s2_mass: 0.8,
        };
        let j = 0.02;
        // Upper band is [0.55, 0.66]: an interval reaching into it stays.
        assert!(keep_unclassified(UpdateRule::IntervalBands, 0.52, 0.66, 0.02, &est, j));
        // Fully above the band: classified.
        assert!(!keep_unclassified(UpdateRule::IntervalBands, 0.9, 0.95, 0.4, &est, j));
        // Lower band is [0.34, 0.45].
        assert!(keep_unclassified(UpdateRule::IntervalBands, 0.40, 0.44, 0.06, &est, j));
    }

    #[test]
    fn final_classifier_hits_delta_exactly() {
        let inst = make_linear_1d();
        let tp = TreeParams::default_for_dim(1).unwrap();
        let sm = SmoothnessParams::new(1.0, 1.0);
        for (n, seed) in [(64u64, 1u64), (256, 2), (1024, 3)] {
            let mut oracle = Oracle::membership(n, seed);
            let out = run_algorithm2(
                &inst,
                &mut oracle,
                n,
                0.2,
                sm,
                tp,
                Algo2Options::default(),
            )
            .unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(seed + 100);
            let m = out
                .classifier
                .abstain_measure(&inst, &McOptions { samples: 1000 }, &mut rng);
            assert_eq!(m.stderr, 0.0, "expected the exact path");
            assert!(
                (m.value - 0.2).abs() <= 1e-9,
                "abstention measure {} != delta at n={n}",
                m.value
            );
        }
    }

    #[test]
    fn budget_of_one_still_yields_feasible_classifier() {
        let inst = make_linear_1d();
        let tp = TreeParams::default_for_dim(1).unwrap();
        let sm = SmoothnessParams::new(1.0, 1.0);
        let mut oracle = Oracle::membership(1, 9);
        let out =
            run_algorithm2(&inst, &mut oracle, 1, 0.3, sm, tp, Algo2Options::default()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let m = out
            .classifier
            .abstain_measure(&inst, &McOptions { samples: 1000 }, &mut rng);
        assert!((m.value - 0.3).abs() <= 1e-9);
    }

    #[test]
    fn trace_j_t_non_increasing() {
        let inst = make_linear_1d();
        let tp = TreeParams::default_for_dim(1).unwrap();
        let sm = SmoothnessParams::new(1.0, 1.0);
        let mut oracle = Oracle::membership(300, 21);
        let out =
            run_algorithm2(&inst, &mut oracle, 300, 0.2, sm, tp, Algo2Options::default()).unwrap();
        let js: Vec<f64> = out
            .trace
            .rows
            .iter()
            .filter_map(|r| r.j_t)
            .filter(|j| j.is_finite())
            .collect();
        for w in js.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn distance_gap_variant_runs_and_stays_feasible() {
        let inst = make_linear_1d();
        let tp = TreeParams::default_for_dim(1).unwrap();
        let sm = SmoothnessParams::new(1.0, 1.0);
        let opts = Algo2Options { update_rule: UpdateRule::DistanceGap };
        let mut oracle = Oracle::membership(512, 33);
        let out = run_algorithm2(&inst, &mut oracle, 512, 0.2, sm, tp, opts).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(34);
        let m = out
            .classifier
            .abstain_measure(&inst, &McOptions { samples: 100 }, &mut rng);
        assert!((m.value - 0.2).abs() <= 1e-9);
    }

    #[test]
    fn pinched_values_lower_bound_distance_from_half() {
        // |f - 1/2| <= |eta(x) - 1/2| on sampled points of each cell, for a
        // run where the confidence envelopes held (fixed seed).
        let inst = make_linear_1d();
        let tp = TreeParams::default_for_dim(1).unwrap();
        let sm = SmoothnessParams::new(1.0, 1.0);
        let mut oracle = Oracle::membership(512, 55);
        let out =
            run_algorithm2(&inst, &mut oracle, 512, 0.2, sm, tp, Algo2Options::default()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(56);
        use rand::Rng;
        for leaf in &out.leaves {
            let dist = (leaf.lower - 0.5).max(0.5 - leaf.upper).max(0.0);
            for _ in 0..50 {
                let x = rng.random_range(leaf.cell.lower[0]..leaf.cell.upper[0]);
                assert!(
                    dist <= (inst.eta(&[x]) - 0.5).abs() + 1e-9,
                    "pinching violated on cell ({}, {})",
                    leaf.cell.depth,
                    leaf.cell.index
                );
            }
        }
    }

    #[test]
    fn rejects_bad_delta() {
        let inst = make_linear_1d();
        let tp = TreeParams::default_for_dim(1).unwrap();
        let sm = SmoothnessParams::new(1.0, 1.0);
        let mut oracle = Oracle::membership(8, 2);
        assert!(
            run_algorithm2(&inst, &mut oracle, 8, 1.2, sm, tp, Algo2Options::default()).is_err()
        );
    }
}
