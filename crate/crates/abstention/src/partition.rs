//! Hierarchical dyadic partition of the unit cube `[0,1]^D`.
//!
//! Cells are axis-aligned boxes produced by repeatedly halving the longest
//! axis (ties broken toward the lowest axis index), so cells stay
//! quasi-cubic. A cell at depth `h` with index `i` splits into children
//! `(h+1, 2i-1)` and `(h+1, 2i)`. With the standard parameter choice
//! `rho = 2^{-1/D}`, `v1 = 2 sqrt(D)` every cell's box is contained in the
//! ball of radius `v1 * rho^h` around its center.

use crate::{Error, Result};

/// Shape parameters of the tree of partitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    /// Input dimension `D`.
    pub dim: usize,
    /// Shrink factor per level, in `(0,1)`.
    pub rho: f64,
    /// Outer-ball constant, `>= 1`.
    pub v1: f64,
    /// Inner-ball constant, in `(0,1]`.
    pub v2: f64,
}

impl TreeParams {
    /// Standard parameters for the dyadic partition of `[0,1]^D`:
    /// `rho = 2^{-1/D}`, `v1 = 2 sqrt(D)`, `v2 = 1/2`.
    pub fn default_for_dim(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let d = dim as f64;
        Ok(TreeParams {
            dim,
            rho: 2f64.powf(-1.0 / d),
            v1: 2.0 * d.sqrt(),
            v2: 0.5,
        })
    }

    /// Same shape but with a caller-chosen outer constant `v1 >= 1`.
    pub fn with_v1(mut self, v1: f64) -> Self {
        self.v1 = v1;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidConfig(format!("rho={} not in (0,1)", self.rho)));
        }
        if !(self.v2 > 0.0 && self.v2 <= 1.0 && self.v1 >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < v2 <= 1 <= v1, got v1={} v2={}",
                self.v1, self.v2
            )));
        }
        Ok(())
    }
}

/// Identifier of a cell: `(depth, index-within-level)`, index is 1-based.
pub type CellId = (u32, u64);

/// One cell of the partition: an axis-aligned box with its tree coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Depth `h` in the tree (root is 0).
    pub depth: u32,
    /// Index `i` within the level, `1 <= i <= 2^h`.
    pub index: u64,
    /// Per-axis lower bounds.
    pub lower: Vec<f64>,
    /// Per-axis upper bounds.
    pub upper: Vec<f64>,
}

impl Cell {
    /// The root cell `[0,1]^D`.
    pub fn root(dim: usize) -> Cell {
        Cell {
            depth: 0,
            index: 1,
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn id(&self) -> CellId {
        (self.depth, self.index)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Box midpoint; serves as the cell center `x_{h,i}`.
    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| b - a)
            .product()
    }

    /// Closed-box membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(xi, (a, b))| *xi >= *a && *xi <= *b)
    }

    /// Euclidean distance from `x` to the cell center.
    pub fn center_dist(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(xi, (a, b))| {
                let c = 0.5 * (a + b);
                (xi - c) * (xi - c)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Distance from the center to the farthest corner of the box.
    pub fn center_corner_dist(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| {
                let half = 0.5 * (b - a);
                half * half
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Axis along which this cell splits: longest side, ties toward the
    /// lowest axis index.
    pub fn split_axis(&self) -> usize {
        let mut best = 0;
        let mut best_len = self.upper[0] - self.lower[0];
        for axis in 1..self.dim() {
            let len = self.upper[axis] - self.lower[axis];
            if len > best_len {
                best = axis;
                best_len = len;
            }
        }
        best
    }

    /// Split into the two children `(h+1, 2i-1)` and `(h+1, 2i)`. The low
    /// half takes the odd index.
    pub fn split(&self) -> (Cell, Cell) {
        let axis = self.split_axis();
        let mid = 0.5 * (self.lower[axis] + self.upper[axis]);
        let mut lo = Cell {
            depth: self.depth + 1,
            index: 2 * self.index - 1,
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        };
        lo.upper[axis] = mid;
        let mut hi = Cell {
            depth: self.depth + 1,
            index: 2 * self.index,
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        };
        hi.lower[axis] = mid;
        (lo, hi)
    }
}

/// Refine a leaf cell into its two children.
pub fn refine(cell: &Cell) -> (Cell, Cell) {
    cell.split()
}

/// Nearest-center projection onto a set of leaves. Ties break toward the
/// lexicographically smallest `(depth, index)`, so the result is
/// deterministic.
pub fn project<'a>(leaves: &'a [Cell], x: &[f64]) -> Result<&'a Cell> {
    if x.iter().any(|xi| !(0.0..=1.0).contains(xi)) {
        return Err(Error::OutOfDomain);
    }
    leaves
        .iter()
        .min_by(|a, b| {
            a.center_dist(x)
                .total_cmp(&b.center_dist(x))
                .then(a.id().cmp(&b.id()))
        })
        .ok_or_else(|| Error::InvalidConfig("empty leaf set".into()))
}

/// Point-location tree over a dyadic tiling: maps a point to the slot of the
/// leaf whose box contains it, in `O(depth)`. Slots are caller-managed
/// payload indices.
#[derive(Debug, Clone)]
pub struct CellTree {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { slot: usize },
    Split { axis: usize, cut: f64, lo: usize, hi: usize },
}

impl CellTree {
    /// Tree with the root cell assigned to `slot`.
    pub fn new(root_slot: usize) -> Self {
        CellTree {
            nodes: vec![Node::Leaf { slot: root_slot }],
        }
    }

    /// Slot of the leaf containing `x`. Points on a shared boundary land in
    /// the low child.
    pub fn locate(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { slot } => return *slot,
                Node::Split { axis, cut, lo, hi } => {
                    at = if x[*axis] <= *cut { *lo } else { *hi };
                }
            }
        }
    }

    /// Replace the leaf currently holding `old_slot`'s region (located via
    /// any interior point `probe`) with a split at `(axis, cut)` and two new
    /// leaf slots.
    pub fn split_at(&mut self, probe: &[f64], axis: usize, cut: f64, lo_slot: usize, hi_slot: usize) {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { .. } => break,
                Node::Split { axis, cut, lo, hi } => {
                    at = if probe[axis] <= cut { lo } else { hi };
                }
            }
        }
        let lo_id = self.nodes.len();
        self.nodes.push(Node::Leaf { slot: lo_slot });
        let hi_id = self.nodes.len();
        self.nodes.push(Node::Leaf { slot: hi_slot });
        self.nodes[at] = Node::Split { axis, cut, lo: lo_id, hi: hi_id };
    }
}
