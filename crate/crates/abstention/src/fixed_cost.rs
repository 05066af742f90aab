//! Fixed-cost abstention: abstaining costs a known `lambda` in `(0, 1/2)`.
//!
//! Each round the most uncertain unclassified cell is either refined (when
//! its stochastic error dropped below the cell's variation bound) or gets one
//! more label. A cell leaves the unclassified set once its confidence
//! interval clears both decision thresholds `lambda` and `1 - lambda`. The
//! final classifier assigns, per cell: `1` when the upper envelope exceeds
//! `1 - lambda` (discarded cells default to `1`), else `0` when the lower
//! envelope is below `lambda`, else abstain.

use crate::classifier::{AbstainClassifier, ClassifierLeaf, Decision};
use crate::engine::{
    default_h_max, ActiveRun, DepthRule, LeafSummary, RunParams, Status, StepOutcome,
};
use crate::estimate::{CellStats, SmoothnessParams};
use crate::oracle::Oracle;
use crate::partition::TreeParams;
use crate::trace::{Action, RunTrace, TraceRow};
use crate::{Error, Result};

/// Outcome of the per-cell classification test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellClass {
    /// `u < lambda`: confidently label-0 region.
    ClassifiedA,
    /// `l > 1 - lambda`: confidently label-1 region.
    ClassifiedB,
    /// `lambda < l <= u < 1 - lambda`: confidently abstain region.
    ClassifiedC,
    /// The interval still touches a threshold.
    Unclassified,
}

/// Classification test: a cell is classified iff its interval misses both
/// thresholds `{lambda, 1 - lambda}`.
pub fn classify_check(stats: &CellStats, lambda: f64) -> CellClass {
    if stats.upper < lambda {
        CellClass::ClassifiedA
    } else if stats.lower > 1.0 - lambda {
        CellClass::ClassifiedB
    } else if stats.lower > lambda && stats.upper < 1.0 - lambda {
        CellClass::ClassifiedC
    } else {
        CellClass::Unclassified
    }
}

/// Result of one fixed-cost run.
#[derive(Debug)]
pub struct Algo1Output {
    pub classifier: AbstainClassifier,
    pub trace: RunTrace,
    pub leaves: Vec<LeafSummary>,
    /// Every cell ever activated, refined ancestors included.
    pub history: Vec<LeafSummary>,
    pub labels_used: u64,
}

/// Run the fixed-cost algorithm with budget `n` and abstention cost `lambda`.
pub fn run_algorithm1(
    instance: &crate::problems::ProblemInstance,
    oracle: &mut Oracle,
    n: u64,
    lambda: f64,
    smoothness: SmoothnessParams,
    tree: TreeParams,
) -> Result<Algo1Output> {
    if !(0.0 < lambda && lambda < 0.5) {
        return Err(Error::InvalidConfig(format!("lambda={lambda} not in (0, 1/2)")));
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
        let Some(slot) = run.select_candidate() else {
            trace.push(TraceRow::new(run.t, 0, 0, Action::Halt, 0.0, run.labels_used()));
            break;
        };
        let (h, i) = run.leaves[slot].cell.id();
        let i_value = run.leaves[slot].stats.index_i1();
        let outcome = run.refine_or_label(slot)?;
        let action = match outcome {
            StepOutcome::Refined { .. } => Action::Refine,
            StepOutcome::Labelled { y } => {
                if classify_check(&run.leaves[slot].stats, lambda) != CellClass::Unclassified {
                    run.set_status(slot, Status::Classified);
                }
                Action::Label { y }
            }
            StepOutcome::Discarded => Action::Discard,
            StepOutcome::BudgetExhausted => break,
        };
        trace.push(TraceRow::new(run.t, h, i, action, i_value, run.labels_used()));
        run.t += 1;
        if !run.budget_left() && matches!(outcome, StepOutcome::Labelled { .. } | StepOutcome::Discarded) {
            break;
        }
    }

    let classifier = build_classifier(&run, lambda);
    Ok(Algo1Output {
        labels_used: run.labels_used(),
        leaves: run.summaries(),
        history: run.summaries_with_ancestors(),
        classifier,
        trace,
    })
}

fn build_classifier(run: &ActiveRun<'_>, lambda: f64) -> AbstainClassifier {
    let leaves = run
        .live_slots()
        .map(|s| {
            let leaf = &run.leaves[s];
            let projected = if leaf.stats.upper > 1.0 - lambda || leaf.status == Status::Discarded
            {
                Decision::One
            } else if leaf.stats.lower < lambda {
                Decision::Zero
            } else {
                Decision::Abstain
            };
            ClassifierLeaf { cell: leaf.cell.clone(), projected, contained: None }
        })
        .collect();
    AbstainClassifier { dim: run.instance.dim, leaves }
}
