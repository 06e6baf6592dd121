//! Worst-case weighted net flow over a congestion set.
//!
//! On a product box the objective is piecewise quadratic: every flow is a
//! piecewise-linear function of one density, weights are affine, and each
//! cell outflow is the minimum of a function of its own density and one of
//! the next cell's density. Cutting every free axis at the spline knots makes
//! all pieces affine; the remaining `min` is handled by splitting the sub-box
//! along the switching line. Each piece is a quadratic over a polytope, whose
//! maximum is found by enumerating active sets.

use serde::{Deserialize, Serialize};

use super::netflow::NetFlowTerms;
use super::poly::{Interval, Poly2, Scalar, MAX_VARS};
use super::scheme::Weight;
use super::sets::{CellOption, CongestionSet, StateBox};
use crate::error::{Error, Result};
use crate::model::bounds::{buffer_outflow_pwl, capped_sending_pwl, upstream_space_pwl};
use crate::model::flow::{flows_with_rates, Flows};
use crate::model::{HighwayConfig, MarkovCapacityModel, Metering, PartialPolicy, Pwl};

/// Grid-plus-polish settings for sets with too many free densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridFallback {
    /// Grid points per option interval, on top of the spline knots.
    pub points_per_axis: usize,
    /// Maximum coordinate-ascent sweeps after the grid pass.
    pub polish_sweeps: usize,
}

impl Default for GridFallback {
    fn default() -> Self {
        Self {
            points_per_axis: 41,
            polish_sweeps: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerOptions {
    /// Largest number of free densities solved exactly.
    pub exact_limit: usize,
    pub fallback: Option<GridFallback>,
    /// Skip sub-boxes whose interval bound cannot beat the incumbent.
    pub prune: bool,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            exact_limit: MAX_VARS,
            fallback: None,
            prune: true,
        }
    }
}

impl InnerOptions {
    pub fn with_fallback(fallback: GridFallback) -> Self {
        Self {
            fallback: Some(fallback),
            ..Self::default()
        }
    }
}

/// Maximum and a maximizing state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerMax {
    pub value: f64,
    pub queued: Vec<bool>,
    pub densities: Vec<f64>,
    /// False when the grid fallback produced the value.
    pub exact: bool,
}

/// The weighted net flow of one buffer in one mode, ready to be maximized.
#[derive(Debug, Clone)]
pub struct NetFlowProblem<'a> {
    cfg: &'a HighwayConfig,
    markov: &'a MarkovCapacityModel,
    gains: PartialPolicy,
    mode: usize,
    terms: NetFlowTerms,
    weights: Vec<Weight>,
}

/// Affine piece `c0 + slope x` of a spline on one window, with its range.
#[derive(Debug, Clone, Copy)]
struct Piece {
    c0: f64,
    slope: f64,
    at_lo: f64,
    at_hi: f64,
}

impl Piece {
    fn of(s: &Pwl, a: f64, b: f64) -> Self {
        let (ya, yb) = (s.eval(a), s.eval(b));
        if b > a {
            let slope = (yb - ya) / (b - a);
            Self { c0: ya - slope * a, slope, at_lo: ya, at_hi: yb }
        } else {
            Self { c0: ya, slope: 0.0, at_lo: ya, at_hi: ya }
        }
    }

    fn interval(&self) -> Interval {
        Interval::new(self.at_lo, self.at_hi)
    }

    fn poly(&self, var: Option<usize>) -> Poly2 {
        match var {
            Some(_) => Poly2::affine(self.c0, var, self.slope),
            None => Poly2::constant(self.at_lo),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Window {
    lo: f64,
    hi: f64,
    inflow: Piece,
    weight: Piece,
    send: Piece,
    space: Option<Piece>,
}

struct CellAxis {
    var: Option<usize>,
    windows: Vec<Window>,
}

/// Linear constraint `a.x <= b`.
#[derive(Debug, Clone, Copy)]
struct Halfspace {
    a: [f64; MAX_VARS],
    b: f64,
}

impl<'a> NetFlowProblem<'a> {
    pub fn new<M: Metering + ?Sized>(
        cfg: &'a HighwayConfig,
        markov: &'a MarkovCapacityModel,
        metering: &M,
        mode: usize,
        buffer: usize,
        weights: Vec<Weight>,
    ) -> Self {
        Self {
            cfg,
            markov,
            gains: PartialPolicy::from_metering(metering, cfg.cell_count()),
            mode,
            terms: NetFlowTerms::new(cfg, buffer),
            weights,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.cfg.cell_count()
    }

    /// Objective at a point.
    pub fn value_at(&self, queued: &[bool], densities: &[f64]) -> f64 {
        let k = self.cell_count();
        let rates: Vec<Option<f64>> = (0..k)
            .map(|j| self.gains.metering_rate(j, densities[j]))
            .collect();
        let mut fl = Flows::zeros(k);
        flows_with_rates(self.cfg, self.markov, self.mode, queued, densities, &rates, &mut fl);
        let rho: Vec<f64> = self
            .weights
            .iter()
            .zip(densities)
            .map(|(w, &n)| w.eval(n))
            .collect();
        self.terms.combine(&rho, &fl.inflow, &fl.outflow)
    }

    /// Maximum over the whole set.
    pub fn maximize(&self, set: &CongestionSet, opts: &InnerOptions) -> Result<InnerMax> {
        let free = set.max_free_count();
        if free > opts.exact_limit.min(MAX_VARS) {
            return match opts.fallback {
                Some(fb) => Ok(self.maximize_on_grid(set, &fb)),
                None => Err(Error::Unsupported {
                    free,
                    limit: opts.exact_limit.min(MAX_VARS),
                }),
            };
        }
        let mut best: Option<InnerMax> = None;
        for bx in set.boxes() {
            let floor = best.as_ref().map(|b| b.value);
            if let Some(m) = self.maximize_box(&bx, floor, opts.prune) {
                if best.as_ref().is_none_or(|b| m.value > b.value) {
                    best = Some(m);
                }
            }
        }
        Ok(best.expect("a congestion set has at least one box"))
    }

    fn splines(&self, j: usize, opt: &CellOption) -> [Option<Pwl>; 4] {
        let (lo, hi) = (opt.lo, opt.hi);
        let cap = self.markov.capacity(self.mode, j);
        [
            Some(buffer_outflow_pwl(self.cfg, &self.gains, j, opt.queued, lo, hi)),
            Some(self.weights[j].pwl(lo, hi)),
            Some(capped_sending_pwl(self.cfg, j, cap, lo, hi)),
            (j > 0).then(|| upstream_space_pwl(self.cfg, &self.gains, j, opt.queued, lo, hi)),
        ]
    }

    fn axes(&self, bx: &StateBox) -> Vec<CellAxis> {
        let mut next_var = 0;
        bx.cells
            .iter()
            .enumerate()
            .map(|(j, opt)| {
                let [r, w, a, b] = self.splines(j, opt);
                let (r, w, a) = (r.unwrap(), w.unwrap(), a.unwrap());
                let window = |lo: f64, hi: f64| Window {
                    lo,
                    hi,
                    inflow: Piece::of(&r, lo, hi),
                    weight: Piece::of(&w, lo, hi),
                    send: Piece::of(&a, lo, hi),
                    space: b.as_ref().map(|b| Piece::of(b, lo, hi)),
                };
                if opt.is_pinned() {
                    return CellAxis {
                        var: None,
                        windows: vec![window(opt.lo, opt.lo)],
                    };
                }
                let mut cuts: Vec<f64> = [&r, &w, &a]
                    .into_iter()
                    .chain(b.as_ref())
                    .flat_map(|s| s.knots().iter().copied())
                    .filter(|&x| x >= opt.lo && x <= opt.hi)
                    .chain([opt.lo, opt.hi])
                    .collect();
                cuts.sort_by(f64::total_cmp);
                let tol = 1e-12 * (1.0 + opt.hi.abs());
                cuts.dedup_by(|x, y| (*x - *y).abs() <= tol);
                let var = Some(next_var);
                next_var += 1;
                CellAxis {
                    var,
                    windows: cuts.windows(2).map(|c| window(c[0], c[1])).collect(),
                }
            })
            .collect()
    }

    fn upper_bound(&self, pick: &[&Window]) -> f64 {
        let k = pick.len();
        let rho: Vec<Interval> = pick.iter().map(|w| w.weight.interval()).collect();
        let r: Vec<Interval> = pick.iter().map(|w| w.inflow.interval()).collect();
        let f: Vec<Interval> = (0..k)
            .map(|j| {
                let a = pick[j].send.interval();
                if j + 1 < k {
                    a.min(pick[j + 1].space.unwrap().interval())
                } else {
                    a
                }
            })
            .collect();
        self.terms.combine(&rho, &r, &f).hi
    }

    /// Exact maximum over one box. With `floor`, returns `None` if nothing
    /// beats it.
    pub fn maximize_box(&self, bx: &StateBox, floor: Option<f64>, prune: bool) -> Option<InnerMax> {
        let axes = self.axes(bx);
        let k = axes.len();
        let dims = axes.iter().filter(|a| a.var.is_some()).count();
        assert!(dims <= MAX_VARS, "box has {dims} free densities");

        // Enumerate sub-boxes with their interval bounds.
        let mut subs: Vec<(f64, Vec<usize>)> = Vec::new();
        let mut idx = vec![0usize; k];
        loop {
            let pick: Vec<&Window> = (0..k).map(|j| &axes[j].windows[idx[j]]).collect();
            let ub = if prune { self.upper_bound(&pick) } else { f64::INFINITY };
            subs.push((ub, idx.clone()));
            let mut d = k;
            let done = loop {
                if d == 0 {
                    break true;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < axes[d].windows.len() {
                    break false;
                }
                idx[d] = 0;
            };
            if done {
                break;
            }
        }
        if prune {
            subs.sort_by(|a, b| b.0.total_cmp(&a.0));
        }

        let mut best_val = floor.unwrap_or(f64::NEG_INFINITY);
        let mut best_x: Option<[f64; MAX_VARS]> = None;
        let mut best_pick: Vec<usize> = Vec::new();
        for (ub, pick_idx) in &subs {
            let slack = 1e-9 * (1.0 + best_val.abs());
            if prune && best_val.is_finite() && *ub <= best_val + slack {
                break;
            }
            let pick: Vec<&Window> = (0..k).map(|j| &axes[j].windows[pick_idx[j]]).collect();
            if let Some((v, x)) = self.solve_sub_box(&axes, &pick, dims) {
                if v > best_val {
                    best_val = v;
                    best_x = Some(x);
                    best_pick = pick_idx.clone();
                }
            }
        }
        let x = best_x?;
        let densities: Vec<f64> = (0..k)
            .map(|j| {
                let w = &axes[j].windows[best_pick[j]];
                match axes[j].var {
                    Some(v) => x[v].clamp(w.lo, w.hi),
                    None => w.lo,
                }
            })
            .collect();
        let queued: Vec<bool> = bx.cells.iter().map(|c| c.queued).collect();
        let value = self.value_at(&queued, &densities);
        Some(InnerMax {
            value,
            queued,
            densities,
            exact: true,
        })
    }

    fn solve_sub_box(
        &self,
        axes: &[CellAxis],
        pick: &[&Window],
        dims: usize,
    ) -> Option<(f64, [f64; MAX_VARS])> {
        let k = pick.len();
        let var = |j: usize| axes[j].var;
        let mut box_cons: Vec<Halfspace> = Vec::with_capacity(2 * dims);
        for j in 0..k {
            if let Some(v) = var(j) {
                let mut a = [0.0; MAX_VARS];
                a[v] = 1.0;
                box_cons.push(Halfspace { a, b: pick[j].hi });
                a[v] = -1.0;
                box_cons.push(Halfspace { a, b: -pick[j].lo });
            }
        }

        // Outflow of each cell: own sending side, downstream space side, or both.
        enum Out {
            Send,
            Space,
            Split,
        }
        let choice: Vec<Out> = (0..k)
            .map(|j| {
                if j + 1 == k {
                    return Out::Send;
                }
                let a = pick[j].send;
                let b = pick[j + 1].space.unwrap();
                let (amin, amax) = (a.at_lo.min(a.at_hi), a.at_lo.max(a.at_hi));
                let (bmin, bmax) = (b.at_lo.min(b.at_hi), b.at_lo.max(b.at_hi));
                if amax <= bmin {
                    Out::Send
                } else if amin >= bmax {
                    Out::Space
                } else {
                    Out::Split
                }
            })
            .collect();
        let splits: Vec<usize> = (0..k).filter(|&j| matches!(choice[j], Out::Split)).collect();

        let rho: Vec<Poly2> = (0..k).map(|j| pick[j].weight.poly(var(j))).collect();
        let r: Vec<Poly2> = (0..k).map(|j| pick[j].inflow.poly(var(j))).collect();
        let send: Vec<Poly2> = (0..k).map(|j| pick[j].send.poly(var(j))).collect();
        let space: Vec<Option<Poly2>> = (0..k)
            .map(|j| (j + 1 < k).then(|| pick[j + 1].space.unwrap().poly(var(j + 1))))
            .collect();

        let mut best: Option<(f64, [f64; MAX_VARS])> = None;
        for mask in 0..(1usize << splits.len()) {
            let mut cons = box_cons.clone();
            let f: Vec<Poly2> = (0..k)
                .map(|j| match choice[j] {
                    Out::Send => send[j],
                    Out::Space => space[j].unwrap(),
                    Out::Split => {
                        let bit = splits.iter().position(|&s| s == j).unwrap();
                        let use_space = mask >> bit & 1 == 1;
                        let (lo_side, hi_side) = if use_space {
                            (space[j].unwrap(), send[j])
                        } else {
                            (send[j], space[j].unwrap())
                        };
                        // Chosen side must be the smaller one.
                        let d = lo_side - hi_side;
                        cons.push(Halfspace { a: d.g, b: -d.c });
                        lo_side
                    }
                })
                .collect();
            let obj = self.terms.combine(&rho, &r, &f);
            if let Some((v, x)) = maximize_quadratic(&obj, &cons, dims) {
                if best.is_none_or(|(bv, _)| v > bv) {
                    best = Some((v, x));
                }
            }
        }
        best
    }

    /// Grid dynamic programme over the chain followed by coordinate ascent.
    fn maximize_on_grid(&self, set: &CongestionSet, fb: &GridFallback) -> InnerMax {
        let k = set.cells.len();
        struct Cand {
            opt: usize,
            n: f64,
            r: f64,
            rho: f64,
            send: f64,
            space: f64,
        }
        let cands: Vec<Vec<Cand>> = (0..k)
            .map(|j| {
                let mut out = Vec::new();
                for (oi, opt) in set.cells[j].iter().enumerate() {
                    let [r, w, a, b] = self.splines(j, opt);
                    let (r, w, a) = (r.unwrap(), w.unwrap(), a.unwrap());
                    let mut pts: Vec<f64> = if opt.is_pinned() {
                        vec![opt.lo]
                    } else {
                        let g = fb.points_per_axis.max(2);
                        let mut v: Vec<f64> = (0..g)
                            .map(|i| opt.lo + (opt.hi - opt.lo) * i as f64 / (g - 1) as f64)
                            .collect();
                        for s in [&r, &w, &a].into_iter().chain(b.as_ref()) {
                            v.extend(s.knots().iter().filter(|&&x| x > opt.lo && x < opt.hi));
                        }
                        v.sort_by(f64::total_cmp);
                        v.dedup();
                        v
                    };
                    pts.shrink_to_fit();
                    for n in pts {
                        out.push(Cand {
                            opt: oi,
                            n,
                            r: r.eval(n),
                            rho: w.eval(n),
                            send: a.eval(n),
                            space: b.as_ref().map_or(f64::INFINITY, |b| b.eval(n)),
                        });
                    }
                }
                out
            })
            .collect();

        let t = &self.terms;
        let unary = |j: usize, c: &Cand| {
            let mut u = t.coef[j] * t.demand[j] - t.coef[j] * (1.0 - c.rho) * c.r;
            if j + 1 == k {
                u -= t.outflow_factor(j, c.rho, None) * c.send;
            }
            u
        };
        let pair = |j: usize, a: &Cand, b: &Cand| {
            -t.outflow_factor(j, a.rho, Some(b.rho)) * a.send.min(b.space)
        };

        let mut score: Vec<f64> = cands[0].iter().map(|c| unary(0, c)).collect();
        let mut back: Vec<Vec<usize>> = Vec::with_capacity(k);
        back.push(Vec::new());
        for j in 1..k {
            let mut next = Vec::with_capacity(cands[j].len());
            let mut arg = Vec::with_capacity(cands[j].len());
            for cb in &cands[j] {
                let (mut bv, mut bi) = (f64::NEG_INFINITY, 0);
                for (i, ca) in cands[j - 1].iter().enumerate() {
                    let v = score[i] + pair(j - 1, ca, cb);
                    if v > bv {
                        bv = v;
                        bi = i;
                    }
                }
                next.push(bv + unary(j, cb));
                arg.push(bi);
            }
            score = next;
            back.push(arg);
        }
        let mut i = (0..score.len())
            .max_by(|&a, &b| score[a].total_cmp(&score[b]).then(b.cmp(&a)))
            .unwrap();
        let mut chosen = vec![(0usize, 0.0f64); k];
        for j in (0..k).rev() {
            chosen[j] = (cands[j][i].opt, cands[j][i].n);
            if j > 0 {
                i = back[j][i];
            }
        }

        let mut queued: Vec<bool> = (0..k).map(|j| set.cells[j][chosen[j].0].queued).collect();
        let mut dens: Vec<f64> = chosen.iter().map(|c| c.1).collect();
        let mut value = self.value_at(&queued, &dens);
        for _ in 0..fb.polish_sweeps {
            let before = value;
            for j in 0..k {
                for opt in &set.cells[j] {
                    let mut cells: Vec<CellOption> = (0..k)
                        .map(|i| CellOption::pinned(queued[i], dens[i]))
                        .collect();
                    cells[j] = *opt;
                    if let Some(m) = self.maximize_box(&StateBox { cells }, Some(value), true) {
                        if m.value > value {
                            value = m.value;
                            queued = m.queued;
                            dens = m.densities;
                        }
                    }
                }
            }
            if value - before <= 1e-9 * (1.0 + value.abs()) {
                break;
            }
        }
        InnerMax {
            value,
            queued,
            densities: dens,
            exact: false,
        }
    }
}

/// Solves a dense square system in place; `None` if numerically singular.
fn solve_dense(a: &mut [[f64; 2 * MAX_VARS]; 2 * MAX_VARS], b: &mut [f64; 2 * MAX_VARS], n: usize) -> Option<()> {
    let scale = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .fold(0.0f64, |m, (i, j)| m.max(a[i][j].abs()));
    if scale == 0.0 {
        return if n == 0 { Some(()) } else { None };
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() <= 1e-11 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[row][c] -= f * a[col][c];
                }
                b[row] -= f * b[col];
            }
        }
    }
    for row in (0..n).rev() {
        let mut s = b[row];
        for c in row + 1..n {
            s -= a[row][c] * b[c];
        }
        b[row] = s / a[row][row];
    }
    Some(())
}

/// Global maximum of a quadratic over `{x : cons}` in `dims` variables, by
/// enumerating candidate active sets of size at most `dims`.
fn maximize_quadratic(obj: &Poly2, cons: &[Halfspace], dims: usize) -> Option<(f64, [f64; MAX_VARS])> {
    let m = cons.len();
    let mut best: Option<(f64, [f64; MAX_VARS])> = None;
    let mut active = Vec::with_capacity(dims);
    let mut visit = |active: &[usize]| {
        let n = dims + active.len();
        let mut a = [[0.0; 2 * MAX_VARS]; 2 * MAX_VARS];
        let mut rhs = [0.0; 2 * MAX_VARS];
        for i in 0..dims {
            for j in 0..dims {
                a[i][j] = obj.h[i][j];
            }
            for (c, &ci) in active.iter().enumerate() {
                a[i][dims + c] = -cons[ci].a[i];
            }
            rhs[i] = -obj.g[i];
        }
        for (c, &ci) in active.iter().enumerate() {
            for j in 0..dims {
                a[dims + c][j] = cons[ci].a[j];
            }
            rhs[dims + c] = cons[ci].b;
        }
        if solve_dense(&mut a, &mut rhs, n).is_none() {
            return;
        }
        let mut x = [0.0; MAX_VARS];
        x[..dims].copy_from_slice(&rhs[..dims]);
        let feasible = cons.iter().all(|h| {
            let lhs: f64 = (0..dims).map(|i| h.a[i] * x[i]).sum();
            let scale = 1.0 + h.b.abs() + (0..dims).map(|i| (h.a[i] * x[i]).abs()).sum::<f64>();
            lhs <= h.b + 1e-9 * scale
        });
        if feasible {
            let v = obj.eval(&x);
            if best.is_none_or(|(bv, _)| v > bv) {
                best = Some((v, x));
            }
        }
    };
    fn rec(
        start: usize,
        m: usize,
        left: usize,
        active: &mut Vec<usize>,
        cons: &[Halfspace],
        visit: &mut dyn FnMut(&[usize]),
    ) {
        visit(active);
        if left == 0 {
            return;
        }
        for i in start..m {
            // Opposite faces of the same coordinate are never active together.
            let clash = active.iter().any(|&j| {
                (0..MAX_VARS).all(|d| cons[i].a[d] == -cons[j].a[d]) && cons[i].a.iter().any(|&v| v != 0.0)
            });
            if clash {
                continue;
            }
            active.push(i);
            rec(i + 1, m, left - 1, active, cons, visit);
            active.pop();
        }
    }
    rec(0, m, dims, &mut active, cons, &mut visit);
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_on_square() {
        // -(x-0.3)^2 - (y-2)^2 on [0,1]^2: max at (0.3, 1).
        let mut obj = Poly2::constant(-(0.09 + 4.0));
        obj.g = [0.6, 4.0, 0.0];
        obj.h[0][0] = -2.0;
        obj.h[1][1] = -2.0;
        let cons = [
            Halfspace { a: [1.0, 0.0, 0.0], b: 1.0 },
            Halfspace { a: [-1.0, 0.0, 0.0], b: 0.0 },
            Halfspace { a: [0.0, 1.0, 0.0], b: 1.0 },
            Halfspace { a: [0.0, -1.0, 0.0], b: 0.0 },
        ];
        let (v, x) = maximize_quadratic(&obj, &cons, 2).unwrap();
        assert!((x[0] - 0.3).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
        assert!((v + 1.0).abs() < 1e-12);
    }

    #[test]
    fn saddle_attains_corner() {
        // xy on [-1,2]x[-1,3]: max 6 at (2,3).
        let mut obj = Poly2::constant(0.0);
        obj.h[0][1] = 1.0;
        obj.h[1][0] = 1.0;
        let cons = [
            Halfspace { a: [1.0, 0.0, 0.0], b: 2.0 },
            Halfspace { a: [-1.0, 0.0, 0.0], b: 1.0 },
            Halfspace { a: [0.0, 1.0, 0.0], b: 3.0 },
            Halfspace { a: [0.0, -1.0, 0.0], b: 1.0 },
        ];
        let (v, _) = maximize_quadratic(&obj, &cons, 2).unwrap();
        assert!((v - 6.0).abs() < 1e-12);
    }
}
