//! Piecewise-constant abstaining classifiers over a cell tiling.
//!
//! A classifier carries one leaf per active cell. Prediction first checks
//! explicit region decisions (the mass-calibrated abstain cells of the
//! bounded-rate algorithms, matched by box containment), then falls back to
//! the decision of the nearest-center cell.

use crate::partition::Cell;
use crate::problems::{McOptions, MeasureEstimate, ProblemInstance};
use crate::Result;
use rand::Rng;

/// Tri-valued (possibly randomized) decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Zero,
    One,
    Abstain,
    /// `(p0, p1, p_abstain)`, summing to 1.
    Randomized { p0: f64, p1: f64, p_abstain: f64 },
}

impl Decision {
    /// Probability weights `(p0, p1, p_abstain)`.
    pub fn weights(&self) -> (f64, f64, f64) {
        match self {
            Decision::Zero => (1.0, 0.0, 0.0),
            Decision::One => (0.0, 1.0, 0.0),
            Decision::Abstain => (0.0, 0.0, 1.0),
            Decision::Randomized { p0, p1, p_abstain } => (*p0, *p1, *p_abstain),
        }
    }

    pub fn abstain_weight(&self) -> f64 {
        self.weights().2
    }
}

#[derive(Debug, Clone)]
pub struct ClassifierLeaf {
    pub cell: Cell,
    /// Decision used when this cell wins the nearest-center projection.
    pub projected: Decision,
    /// Region decision claimed by box containment, overriding projection.
    pub contained: Option<Decision>,
}

/// Total abstaining classifier over the cube.
#[derive(Debug, Clone)]
pub struct AbstainClassifier {
    pub dim: usize,
    pub leaves: Vec<ClassifierLeaf>,
}

impl AbstainClassifier {
    pub fn predict(&self, x: &[f64]) -> Result<Decision> {
        for leaf in &self.leaves {
            if leaf.contained.is_some() && leaf.cell.contains(x) {
                return Ok(leaf.contained.unwrap());
            }
        }
        // Nearest-center fallback over all leaves.
        let mut best: Option<(&ClassifierLeaf, f64)> = None;
        for leaf in &self.leaves {
            let d = leaf.cell.center_dist(x);
            let better = match best {
                None => true,
                Some((b, bd)) => {
                    d < bd || (d == bd && leaf.cell.id() < b.cell.id())
                }
            };
            if better {
                best = Some((leaf, d));
            }
        }
        if x.iter().any(|xi| !(0.0..=1.0).contains(xi)) {
            return Err(crate::Error::OutOfDomain);
        }
        Ok(best
            .map(|(l, _)| l.projected)
            .ok_or_else(|| crate::Error::InvalidConfig("classifier has no leaves".into()))?)
    }

    /// `P_X(g = abstain)`: exact when the structure allows, Monte-Carlo
    /// otherwise.
    pub fn abstain_measure(
        &self,
        instance: &ProblemInstance,
        mc: &McOptions,
        rng: &mut impl Rng,
    ) -> MeasureEstimate {
        let contained_abstains_only = self
            .leaves
            .iter()
            .all(|l| l.projected.abstain_weight() == 0.0);
        if contained_abstains_only {
            // Only explicit region cells abstain; sum their analytic masses.
            let mut total = 0.0;
            let mut exact = true;
            for l in &self.leaves {
                if let Some(d) = &l.contained {
                    let w = d.abstain_weight();
                    if w > 0.0 {
                        match instance.box_measure(&l.cell) {
                            Some(m) => total += w * m,
                            None => {
                                exact = false;
                                break;
                            }
                        }
                    }
                }
            }
            if exact {
                return MeasureEstimate { value: total, stderr: 0.0 };
            }
        } else if self.dim == 1 && self.leaves.iter().all(|l| l.contained.is_none()) {
            // Pure projection classifier in 1D: integrate over the
            // nearest-center partition.
            if let Some(v) = self.abstain_measure_1d(instance) {
                return MeasureEstimate { value: v, stderr: 0.0 };
            }
        }
        let mut acc = 0.0;
        for _ in 0..mc.samples {
            let x = instance.sample_x(rng);
            acc += self.predict(&x).map(|d| d.abstain_weight()).unwrap_or(0.0);
        }
        let p = acc / mc.samples as f64;
        MeasureEstimate {
            value: p,
            stderr: (p * (1.0 - p) / mc.samples as f64).sqrt(),
        }
    }

    fn abstain_measure_1d(&self, instance: &ProblemInstance) -> Option<f64> {
        let mut total = 0.0;
        for (lo, hi, leaf) in self.voronoi_1d() {
            let w = leaf.projected.abstain_weight();
            if w > 0.0 {
                let seg = Cell { depth: 0, index: 1, lower: vec![lo], upper: vec![hi] };
                total += w * instance.box_measure(&seg)?;
            }
        }
        Some(total)
    }

    /// Nearest-center partition of `[0,1]` induced by the leaves (1D only):
    /// segments `(lo, hi)` owned by each leaf.
    pub fn voronoi_1d(&self) -> Vec<(f64, f64, &ClassifierLeaf)> {
        assert_eq!(self.dim, 1);
        let mut order: Vec<&ClassifierLeaf> = self.leaves.iter().collect();
        order.sort_by(|a, b| {
            a.cell.center()[0]
                .total_cmp(&b.cell.center()[0])
                .then(a.cell.id().cmp(&b.cell.id()))
        });
        let mut out = Vec::with_capacity(order.len());
        for (k, leaf) in order.iter().enumerate() {
            let c = leaf.cell.center()[0];
            let lo = if k == 0 {
                0.0
            } else {
                0.5 * (order[k - 1].cell.center()[0] + c)
            };
            let hi = if k + 1 == order.len() {
                1.0
            } else {
                0.5 * (c + order[k + 1].cell.center()[0])
            };
            out.push((lo, hi, *leaf));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::Cell;
    use crate::problems::make_linear_1d;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn leaf(lo: f64, hi: f64, id: (u32, u64), d: Decision) -> ClassifierLeaf {
        ClassifierLeaf {
            cell: Cell { depth: id.0, index: id.1, lower: vec![lo], upper: vec![hi] },
            projected: d,
            contained: None,
        }
    }

    #[test]
    fn predict_total_over_random_points() {
        let g = AbstainClassifier {
            dim: 1,
            leaves: vec![
                leaf(0.0, 0.5, (1, 1), Decision::Zero),
                leaf(0.5, 1.0, (1, 2), Decision::One),
            ],
        };
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = [rng.random::<f64>()];
            g.predict(&x).unwrap();
        }
        assert_eq!(g.predict(&[0.1]).unwrap(), Decision::Zero);
        assert_eq!(g.predict(&[0.9]).unwrap(), Decision::One);
    }

    #[test]
    fn containment_overrides_projection() {
        let mut abstain_leaf = leaf(0.4, 0.6, (3, 3), Decision::One);
        abstain_leaf.contained = Some(Decision::Abstain);
        let g = AbstainClassifier {
            dim: 1,
            leaves: vec![
                leaf(0.0, 0.4, (2, 1), Decision::Zero),
                abstain_leaf,
                leaf(0.6, 1.0, (2, 4), Decision::One),
            ],
        };
        assert_eq!(g.predict(&[0.5]).unwrap(), Decision::Abstain);
        // Outside the box the override does not apply even if that cell is
        // the nearest by center.
        assert_eq!(g.predict(&[0.61]).unwrap(), Decision::One);
    }

    #[test]
    fn abstain_measure_exact_for_region_classifier() {
        let inst = make_linear_1d();
        let mut a = leaf(0.4, 0.6, (3, 3), Decision::One);
        a.contained = Some(Decision::Abstain);
        let mut b = leaf(0.6, 0.7, (3, 4), Decision::One);
        b.contained = Some(Decision::Randomized { p0: 0.0, p1: 0.5, p_abstain: 0.5 });
        let g = AbstainClassifier {
            dim: 1,
            leaves: vec![leaf(0.0, 0.4, (2, 1), Decision::Zero), a, b, leaf(0.7, 1.0, (2, 4), Decision::One)],
        };
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let m = g.abstain_measure(&inst, &McOptions { samples: 100 }, &mut rng);
        assert_eq!(m.stderr, 0.0);
        assert!((m.value - (0.2 + 0.5 * 0.1)).abs() < 1e-12);
    }

    #[test]
    fn abstain_measure_exact_for_projection_classifier_1d() {
        let inst = make_linear_1d();
        // Centers 0.25 / 0.75; boundary at 0.5. Abstain left of 0.5.
        let g = AbstainClassifier {
            dim: 1,
            leaves: vec![
                leaf(0.0, 0.5, (1, 1), Decision::Abstain),
                leaf(0.5, 1.0, (1, 2), Decision::One),
            ],
        };
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let m = g.abstain_measure(&inst, &McOptions { samples: 100 }, &mut rng);
        assert_eq!(m.stderr, 0.0);
        assert!((m.value - 0.5).abs() < 1e-12);
    }
}
