use serde::{Deserialize, Serialize};

use super::scheme::DesignScheme;
use crate::model::{DensityBounds, HybridState};

/// One admissible (queue indicator, density interval) pair for a cell.
/// `lo == hi` pins the density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellOption {
    pub queued: bool,
    pub lo: f64,
    pub hi: f64,
}

impl CellOption {
    pub fn interval(queued: bool, lo: f64, hi: f64) -> Self {
        Self { queued, lo, hi: hi.max(lo) }
    }

    pub fn pinned(queued: bool, at: f64) -> Self {
        Self { queued, lo: at, hi: at }
    }

    pub fn is_pinned(&self) -> bool {
        self.hi - self.lo <= 1e-12 * (1.0 + self.hi.abs())
    }
}

/// A single product box of states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub cells: Vec<CellOption>,
}

impl StateBox {
    pub fn free_count(&self) -> usize {
        self.cells.iter().filter(|c| !c.is_pinned()).count()
    }
}

/// States with a queue in buffer `buffer`, as a product over cells of
/// per-cell option lists. Expanding the product gives the union of boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongestionSet {
    pub buffer: usize,
    pub cells: Vec<Vec<CellOption>>,
}

impl CongestionSet {
    pub fn box_count(&self) -> usize {
        self.cells.iter().map(Vec::len).product()
    }

    pub fn max_free_count(&self) -> usize {
        self.cells
            .iter()
            .map(|opts| usize::from(opts.iter().any(|o| !o.is_pinned())))
            .sum()
    }

    /// Drops the queued branch of every listed cell other than the set's own
    /// buffer. An empty buffer without demand stays empty.
    pub fn restrict_unqueued(&mut self, idle: &[bool]) {
        for (j, opts) in self.cells.iter_mut().enumerate() {
            if j != self.buffer && idle[j] && opts.iter().any(|o| !o.queued) {
                opts.retain(|o| !o.queued);
            }
        }
    }

    /// All boxes, in odometer order with the last cell varying fastest.
    pub fn boxes(&self) -> Vec<StateBox> {
        let mut out = Vec::with_capacity(self.box_count());
        let mut idx = vec![0usize; self.cells.len()];
        loop {
            out.push(StateBox {
                cells: idx.iter().zip(&self.cells).map(|(&i, o)| o[i]).collect(),
            });
            let mut d = self.cells.len();
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < self.cells[d].len() {
                    break;
                }
                idx[d] = 0;
            }
        }
    }
}

fn either(lb: f64, uw: f64, hi: f64) -> Vec<CellOption> {
    vec![CellOption::interval(false, lb, hi), CellOption::interval(true, uw, hi)]
}

/// Congestion set of buffer `k` under `scheme`.
pub fn congestion_set(scheme: DesignScheme, k: usize, bounds: &DensityBounds) -> CongestionSet {
    let cells = bounds.lower_no_queue.len();
    let lb = &bounds.lower_no_queue;
    let uw = &bounds.lower_with_queue;
    let bar = &bounds.upper_free;
    let tilde = &bounds.upper_blocked;
    let opts = (0..cells)
        .map(|j| match scheme {
            DesignScheme::Localized => match (k, j) {
                (0, 0) => vec![CellOption::pinned(true, uw[0])],
                (_, 0) => vec![CellOption::pinned(false, lb[0])],
                (0, _) => either(lb[j], uw[j], bar[j]),
                _ => vec![CellOption::interval(true, uw[j], bar[j])],
            },
            DesignScheme::FullyCoordinated => {
                if j == k {
                    vec![CellOption::interval(true, uw[j], tilde[j])]
                } else {
                    either(lb[j], uw[j], tilde[j])
                }
            }
            DesignScheme::PartiallyCoordinated(_) => {
                if k > 0 && j < k {
                    // Upstream cells telescope away; only the adjacent density enters.
                    vec![CellOption::pinned(false, lb[j])]
                } else if j == k {
                    vec![CellOption::interval(true, uw[j], tilde[j])]
                } else {
                    either(lb[j], uw[j], tilde[j])
                }
            }
        })
        .collect();
    CongestionSet { buffer: k, cells: opts }
}

/// Congestion sets of all buffers.
pub fn congestion_sets(scheme: DesignScheme, bounds: &DensityBounds) -> Vec<CongestionSet> {
    (0..bounds.lower_no_queue.len())
        .map(|k| congestion_set(scheme, k, bounds))
        .collect()
}

/// Union of `2^K` boxes indexed by queue indicators: an empty buffer keeps its
/// cell in `[lower_no_queue, upper_blocked]`, a queued one in
/// `[lower_with_queue, upper_blocked]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantSet {
    pub lower_empty: Vec<f64>,
    pub lower_queued: Vec<f64>,
    pub upper: Vec<f64>,
}

impl InvariantSet {
    pub fn box_count(&self) -> usize {
        1usize << self.upper.len()
    }

    /// Box for the indicator bit pattern `mask` (bit `j` set = buffer `j` queued).
    pub fn state_box(&self, mask: usize) -> StateBox {
        StateBox {
            cells: (0..self.upper.len())
                .map(|j| {
                    let q = mask >> j & 1 == 1;
                    let lo = if q { self.lower_queued[j] } else { self.lower_empty[j] };
                    CellOption::interval(q, lo, self.upper[j])
                })
                .collect(),
        }
    }

    /// Membership with an absolute tolerance per coordinate.
    pub fn contains(&self, state: &HybridState, tol: &[f64]) -> bool {
        self.violation(state, tol).is_none()
    }

    /// First coordinate outside the set, with the signed excess.
    pub fn violation(&self, state: &HybridState, tol: &[f64]) -> Option<(usize, f64)> {
        for j in 0..self.upper.len() {
            let n = state.densities_veh_per_km[j];
            let lo = if state.queues_veh[j] > 0.0 {
                self.lower_queued[j]
            } else {
                self.lower_empty[j]
            };
            if n < lo - tol[j] {
                return Some((j, n - lo));
            }
            if n > self.upper[j] + tol[j] {
                return Some((j, n - self.upper[j]));
            }
        }
        None
    }
}

/// Invariant set for the bounds of a policy. The same box family serves all
/// three schemes; only the bounds differ.
pub fn invariant_set(bounds: &DensityBounds) -> InvariantSet {
    InvariantSet {
        lower_empty: bounds.lower_no_queue.clone(),
        lower_queued: bounds.lower_with_queue.clone(),
        upper: bounds.upper_blocked.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds3() -> DensityBounds {
        DensityBounds {
            lower_no_queue: vec![35.0, 32.0, 26.0],
            lower_with_queue: vec![40.0, 38.0, 30.0],
            upper_free: vec![40.0, 180.0, 200.0],
            upper_blocked: vec![64.0, 180.0, 200.0],
            nu: vec![f64::NAN, 38.0, 30.0],
        }
    }

    #[test]
    fn localized_sets() {
        let mut b = bounds3();
        for v in [
            &mut b.lower_no_queue,
            &mut b.lower_with_queue,
            &mut b.upper_free,
            &mut b.upper_blocked,
            &mut b.nu,
        ] {
            v.truncate(2);
        }
        let e2 = congestion_set(DesignScheme::Localized, 1, &b);
        assert_eq!(e2.box_count(), 1);
        let bx = &e2.boxes()[0];
        assert_eq!(bx.cells[0], CellOption::pinned(false, 35.0));
        assert_eq!(bx.cells[1], CellOption::interval(true, 38.0, 180.0));
        let e1 = congestion_set(DesignScheme::Localized, 0, &b);
        assert_eq!(e1.box_count(), 2);
        assert_eq!(e1.max_free_count(), 1);
    }

    #[test]
    fn full_coordination_counts() {
        let b = bounds3();
        let e = congestion_set(DesignScheme::FullyCoordinated, 1, &b);
        assert_eq!(e.box_count(), 4);
        assert!(e.boxes().iter().all(|bx| bx.cells[1].queued));
        assert_eq!(invariant_set(&b).box_count(), 8);
    }

    #[test]
    fn invariant_membership() {
        let b = bounds3();
        let m = invariant_set(&b);
        let s = HybridState::new(0, vec![0.0; 3], b.lower_no_queue.clone());
        assert!(m.contains(&s, &[0.0; 3]));
        let s = HybridState::new(0, vec![1.0, 0.0, 0.0], b.lower_no_queue.clone());
        assert!(!m.contains(&s, &[0.0; 3]));
    }
}
