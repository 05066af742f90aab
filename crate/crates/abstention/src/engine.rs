//! Shared run machinery for the tree-refinement algorithms.
//!
//! Owns the active tiling (leaf cells with per-cell statistics and
//! classification status), a point locator, and a lazy max-heap over the
//! uncertainty index used for candidate selection. The algorithm modules
//! drive it: select a candidate, refine or label it, reclassify cells.

use crate::estimate::{confidence_radius, variation_bound, CellStats, SmoothnessParams};
use crate::oracle::{LabelOutcome, Oracle};
use crate::partition::{Cell, CellTree, TreeParams};
use crate::problems::ProblemInstance;
use crate::{Error, Result};
use std::collections::BinaryHeap;

/// Classification status of an active cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Unclassified,
    Classified,
    Discarded,
    /// Refined away; kept only as a tombstone.
    Dead,
}

/// One active cell with its running state.
#[derive(Debug, Clone)]
pub struct LeafState {
    pub cell: Cell,
    pub stats: CellStats,
    pub status: Status,
    /// Analytic `P_X` of the cell, when the marginal admits one.
    pub measure: Option<f64>,
    /// Bumped on every change; invalidates stale heap entries.
    version: u64,
    /// Indices into the unlabelled log (setting 3).
    pub unl: Vec<u32>,
}

/// Snapshot of a leaf for post-run audits.
#[derive(Debug, Clone)]
pub struct LeafSummary {
    pub cell: Cell,
    pub n_hi: u64,
    pub eta_hat: f64,
    pub upper: f64,
    pub lower: f64,
    pub status: Status,
}

/// Depth gate for the refinement rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthRule {
    /// Refine while `h <= h_max`.
    AtMost(u32),
    /// Refine while `h < h_max`.
    Below(u32),
}

impl DepthRule {
    fn allows(&self, h: u32) -> bool {
        match self {
            DepthRule::AtMost(hm) => h <= *hm,
            DepthRule::Below(hm) => h < *hm,
        }
    }
}

/// Parameters shared by every run.
#[derive(Debug, Clone, Copy)]
pub struct RunParams {
    pub budget: u64,
    pub smoothness: SmoothnessParams,
    pub tree: TreeParams,
    pub depth: DepthRule,
}

/// Default depth cap `ceil(ln n)` used by the fixed-cost and known-marginal
/// algorithms.
pub fn default_h_max(n: u64) -> u32 {
    (n.max(2) as f64).ln().ceil() as u32
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    key: f64,
    h: u32,
    i: u64,
    slot: usize,
    version: u64,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Max by key; ties prefer the lexicographically smaller (h, i).
        self.key
            .total_cmp(&other.key)
            .then_with(|| other.h.cmp(&self.h))
            .then_with(|| other.i.cmp(&self.i))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// What happened to the selected candidate this round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Refined { children: (usize, usize) },
    Labelled { y: u8 },
    Discarded,
    BudgetExhausted,
}

/// Mutable run state over one instance/oracle pair.
pub struct ActiveRun<'a> {
    pub instance: &'a ProblemInstance,
    pub oracle: &'a mut Oracle,
    pub params: RunParams,
    pub leaves: Vec<LeafState>,
    locator: CellTree,
    heap: BinaryHeap<HeapEntry>,
    pub t: u64,
    unclassified: usize,
    /// Unlabelled point log (setting 3), flat storage with stride `dim`.
    unl_flat: Vec<f64>,
}

impl<'a> ActiveRun<'a> {
    pub fn new(
        instance: &'a ProblemInstance,
        oracle: &'a mut Oracle,
        params: RunParams,
    ) -> Result<Self> {
        params.tree.validate()?;
        if params.tree.dim != instance.dim {
            return Err(Error::InvalidConfig(format!(
                "tree dimension {} != instance dimension {}",
                params.tree.dim, instance.dim
            )));
        }
        let root = Cell::root(instance.dim);
        let measure = instance.box_measure(&root);
        let leaf = LeafState {
            cell: root,
            stats: CellStats::default(),
            status: Status::Unclassified,
            measure,
            version: 0,
            unl: Vec::new(),
        };
        let mut heap = BinaryHeap::new();
        heap.push(HeapEntry {
            key: f64::INFINITY,
            h: 0,
            i: 1,
            slot: 0,
            version: 0,
        });
        Ok(ActiveRun {
            instance,
            oracle,
            params,
            leaves: vec![leaf],
            locator: CellTree::new(0),
            heap,
            t: 1,
            unclassified: 1,
            unl_flat: Vec::new(),
        })
    }

    pub fn labels_used(&self) -> u64 {
        self.oracle.labels_used()
    }

    pub fn budget_left(&self) -> bool {
        self.oracle.labels_used() < self.params.budget
    }

    pub fn unclassified_count(&self) -> usize {
        self.unclassified
    }

    fn entry_valid(&self, e: &HeapEntry) -> bool {
        let leaf = &self.leaves[e.slot];
        leaf.status == Status::Unclassified && leaf.version == e.version
    }

    /// Slot of the unclassified cell with the largest index `I = u - l`
    /// (ties toward the smallest `(h, i)`), or `None` when all cells are
    /// classified.
    pub fn select_candidate(&mut self) -> Option<usize> {
        while let Some(e) = self.heap.peek() {
            if self.entry_valid(e) {
                return Some(e.slot);
            }
            self.heap.pop();
        }
        None
    }

    /// Current `J_t`: the candidate's index value.
    pub fn max_index(&mut self) -> Option<f64> {
        self.select_candidate()
            .map(|slot| self.leaves[slot].stats.index_i1())
    }

    fn push_entry(&mut self, slot: usize) {
        let leaf = &self.leaves[slot];
        if leaf.status == Status::Unclassified {
            self.heap.push(HeapEntry {
                key: leaf.stats.index_i1(),
                h: leaf.cell.depth,
                i: leaf.cell.index,
                slot,
                version: leaf.version,
            });
        }
    }

    /// Change a leaf's status (bumps its version so stale heap entries die).
    pub fn set_status(&mut self, slot: usize, status: Status) {
        let prev = self.leaves[slot].status;
        if prev == status {
            return;
        }
        if prev == Status::Unclassified {
            self.unclassified -= 1;
        }
        if status == Status::Unclassified {
            self.unclassified += 1;
        }
        self.leaves[slot].status = status;
        self.leaves[slot].version += 1;
        if status == Status::Unclassified {
            self.push_entry(slot);
        }
    }

    /// Split `slot` into its two children, which inherit the confidence
    /// envelope but restart their counts. Unlabelled points are reassigned.
    pub fn refine(&mut self, slot: usize) -> (usize, usize) {
        let parent = self.leaves[slot].clone();
        let axis = parent.cell.split_axis();
        let cut = 0.5 * (parent.cell.lower[axis] + parent.cell.upper[axis]);
        let (lo, hi) = parent.cell.split();
        let (mut lo_unl, mut hi_unl) = (Vec::new(), Vec::new());
        let dim = self.instance.dim;
        for &pi in &parent.unl {
            if self.unl_flat[pi as usize * dim + axis] <= cut {
                lo_unl.push(pi);
            } else {
                hi_unl.push(pi);
            }
        }
        let lo_slot = self.leaves.len();
        self.leaves.push(LeafState {
            measure: self.instance.box_measure(&lo),
            cell: lo,
            stats: parent.stats.inherit(),
            status: Status::Unclassified,
            version: 0,
            unl: lo_unl,
        });
        let hi_slot = self.leaves.len();
        self.leaves.push(LeafState {
            measure: self.instance.box_measure(&hi),
            cell: hi,
            stats: parent.stats.inherit(),
            status: Status::Unclassified,
            version: 0,
            unl: hi_unl,
        });
        self.unclassified += 2;
        self.locator
            .split_at(&parent.cell.center(), axis, cut, lo_slot, hi_slot);
        self.set_status(slot, Status::Dead);
        self.leaves[slot].unl.clear();
        self.push_entry(lo_slot);
        self.push_entry(hi_slot);
        (lo_slot, hi_slot)
    }

    /// Refine the candidate if its stochastic error dropped below the
    /// variation bound (and depth allows), otherwise request a label.
    /// The caller is responsible for any post-label classification check.
    pub fn refine_or_label(&mut self, slot: usize) -> Result<StepOutcome> {
        let leaf = &self.leaves[slot];
        let h = leaf.cell.depth;
        let e = confidence_radius(self.t, leaf.stats.n_hi, self.params.budget);
        let v = variation_bound(h, &self.params.smoothness, &self.params.tree);
        if e < v && self.params.depth.allows(h) {
            let children = self.refine(slot);
            return Ok(StepOutcome::Refined { children });
        }
        if !self.budget_left() {
            return Ok(StepOutcome::BudgetExhausted);
        }
        match self.oracle.request_label(&self.leaves[slot].cell, self.instance)? {
            LabelOutcome::Label { y, .. } => {
                let v_h = variation_bound(h, &self.params.smoothness, &self.params.tree);
                let t = self.t;
                let n = self.params.budget;
                let leaf = &mut self.leaves[slot];
                leaf.stats.observe(y);
                leaf.stats.update_bounds(t, n, v_h);
                leaf.version += 1;
                self.push_entry(slot);
                Ok(StepOutcome::Labelled { y })
            }
            LabelOutcome::Discarded => {
                self.set_status(slot, Status::Discarded);
                Ok(StepOutcome::Discarded)
            }
        }
    }

    /// Append fresh unlabelled draws and assign them to their leaves.
    pub fn add_unlabelled(&mut self, count: u64) {
        let dim = self.instance.dim;
        self.unl_flat.reserve(count as usize * dim);
        // Draw in chunks to keep the oracle ledger coarse and avoid holding
        // a second copy of a huge batch.
        let mut left = count;
        while left > 0 {
            let take = left.min(65_536);
            let pts = self.oracle.draw_unlabelled(take, self.instance);
            for p in pts {
                let slot = self.locator.locate(&p);
                let idx = (self.unl_flat.len() / dim) as u32;
                self.unl_flat.extend_from_slice(&p);
                self.leaves[slot].unl.push(idx);
            }
            left -= take;
        }
    }

    /// Number of unlabelled points logged.
    pub fn unlabelled_count(&self) -> u64 {
        (self.unl_flat.len() / self.instance.dim.max(1)) as u64
    }

    /// One logged unlabelled point.
    pub fn unlabelled_point(&self, idx: u32) -> &[f64] {
        let d = self.instance.dim;
        &self.unl_flat[idx as usize * d..(idx as usize + 1) * d]
    }

    /// Slots of all live (non-tombstone) leaves.
    pub fn live_slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.leaves
            .iter()
            .enumerate()
            .filter(|(_, l)| l.status != Status::Dead)
            .map(|(s, _)| s)
    }

    pub fn summaries(&self) -> Vec<LeafSummary> {
        self.leaves
            .iter()
            .filter(|l| l.status != Status::Dead)
            .map(|l| LeafSummary {
                cell: l.cell.clone(),
                n_hi: l.stats.n_hi,
                eta_hat: l.stats.eta_hat(),
                upper: l.stats.upper,
                lower: l.stats.lower,
                status: l.status,
            })
            .collect()
    }

    /// Snapshots of every cell ever activated, refined ancestors included
    /// (their labels are real observations at their centers).
    pub fn summaries_with_ancestors(&self) -> Vec<LeafSummary> {
        self.leaves
            .iter()
            .map(|l| LeafSummary {
                cell: l.cell.clone(),
                n_hi: l.stats.n_hi,
                eta_hat: l.stats.eta_hat(),
                upper: l.stats.upper,
                lower: l.stats.lower,
                status: l.status,
            })
            .collect()
    }
}
