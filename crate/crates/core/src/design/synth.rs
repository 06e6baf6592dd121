use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use crate::error::{Error, Result};
use crate::model::{
    density_bounds, AffineControlPolicy, HighwayConfig, MarkovCapacityModel,
    PartialPolicy, RampGain,
};
use crate::stability::drift::{buffer_drift, mean_drift, verdict_of, Verdict, STABLE_MARGIN};
use crate::stability::{DesignScheme, InnerOptions, PcWeight};

/// Largest highway the fully coordinated grid search accepts.
pub const FULL_COORDINATION_LIMIT: usize = 3;

/// Drift of one grid point; `None` when its bounds or weights are undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub u: Vec<f64>,
    pub kappa: Vec<f64>,
    pub drift: Option<f64>,
}

/// Outcome of one downstream-to-upstream stage of partial coordination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    /// 1-based cell index of the ramp.
    pub ramp: usize,
    pub u: f64,
    pub kappa: f64,
    pub drift: f64,
    pub log: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub scheme: DesignScheme,
    /// Best policy found, feasible or not.
    pub policy: Option<AffineControlPolicy>,
    /// Mean drift of `policy`, or the certified mainline demand in throughput mode.
    pub objective: f64,
    pub feasible: bool,
    /// Largest certified mainline demand, throughput mode only.
    pub throughput: Option<f64>,
    pub stages: Vec<StageResult>,
    pub log: Vec<Candidate>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignOptions {
    pub inner: InnerOptions,
    pub keep_log: bool,
    /// Drifts within `tie_tolerance * (1 + |best|)` of the best count as ties.
    pub tie_tolerance: f64,
    pub tie_break: TieBreak,
}

/// How near-ties in drift are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Lowest `u`, then lowest `kappa`, ramp by ramp.
    #[default]
    Lexicographic,
    /// Largest total `kappa`, then lexicographic. Stronger feedback leaves
    /// upstream stages of partial coordination a smaller invariant set.
    StrongestFeedback,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            inner: InnerOptions::default(),
            keep_log: true,
            tie_tolerance: 1e-9,
            tie_break: TieBreak::Lexicographic,
        }
    }
}

/// Treats undefined bounds or degenerate weights as an infeasible candidate.
fn soft(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(_) | Err(Error::NoRoot { .. }) | Err(Error::DegenerateWeight { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Index of the minimum drift; near-ties go to the earliest candidate, which
/// is the lexicographically smallest since grids enumerate in that order.
pub fn select_best(cands: &[Candidate], tie_tolerance: f64) -> Option<usize> {
    select_best_by(cands, tie_tolerance, TieBreak::Lexicographic)
}

pub fn select_best_by(cands: &[Candidate], tie_tolerance: f64, rule: TieBreak) -> Option<usize> {
    let best = cands
        .iter()
        .filter_map(|c| c.drift)
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    let cut = best + tie_tolerance * (1.0 + best.abs());
    let total = |c: &Candidate| c.kappa.iter().sum::<f64>();
    let mut pick: Option<usize> = None;
    for (i, c) in cands.iter().enumerate() {
        if !c.drift.is_some_and(|d| d <= cut) {
            continue;
        }
        let better = match (pick, rule) {
            (None, _) => true,
            (Some(_), TieBreak::Lexicographic) => false,
            (Some(p), TieBreak::StrongestFeedback) => total(c) > total(&cands[p]),
        };
        if better {
            pick = Some(i);
        }
    }
    pick
}

fn evaluate<F>(grid: &GridSpec, eval: F) -> Result<Vec<Candidate>>
where
    F: Fn(&[f64], &[f64]) -> Result<Option<f64>> + Sync,
{
    grid.candidates()
        .into_par_iter()
        .map(|(u, kappa)| {
            let drift = eval(&u, &kappa)?;
            Ok(Candidate { u, kappa, drift })
        })
        .collect()
}

fn policy_drift(
    scheme: DesignScheme,
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    u: &[f64],
    kappa: &[f64],
    inner: &InnerOptions,
) -> Result<Option<f64>> {
    let p = AffineControlPolicy::from_pairs(u, kappa)?;
    soft(mean_drift(scheme, &p, cfg, markov, inner).map(|r| r.mean_drift))
}

fn grid_search(
    scheme: DesignScheme,
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    grid: &GridSpec,
    opts: &DesignOptions,
) -> Result<DesignResult> {
    markov.check_against(cfg)?;
    grid.validate(cfg.cell_count() - 1)?;
    let log = evaluate(grid, |u, k| policy_drift(scheme, cfg, markov, u, k, &opts.inner))?;
    let best = select_best_by(&log, opts.tie_tolerance, opts.tie_break);
    let (policy, objective) = match best {
        Some(i) => (
            Some(AffineControlPolicy::from_pairs(&log[i].u, &log[i].kappa)?),
            log[i].drift.unwrap_or(f64::INFINITY),
        ),
        None => (None, f64::INFINITY),
    };
    Ok(DesignResult {
        scheme,
        policy,
        objective,
        feasible: objective < -STABLE_MARGIN,
        throughput: None,
        stages: Vec::new(),
        log: if opts.keep_log { log } else { Vec::new() },
    })
}

/// Localized design on a two-cell highway: minimize the mean drift over the grid.
pub fn design_localized(
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    grid: &GridSpec,
    opts: &DesignOptions,
) -> Result<DesignResult> {
    if cfg.cell_count() != 2 {
        return Err(Error::validation("cells", "localized design needs exactly 2 cells"));
    }
    grid_search(DesignScheme::Localized, cfg, markov, grid, opts)
}

/// Fully coordinated design over the joint grid of every ramp.
pub fn design_full(
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    grid: &GridSpec,
    opts: &DesignOptions,
) -> Result<DesignResult> {
    if cfg.cell_count() > FULL_COORDINATION_LIMIT {
        return Err(Error::TooLarge {
            cells: cfg.cell_count(),
            limit: FULL_COORDINATION_LIMIT,
        });
    }
    if cfg.cell_count() < 2 {
        return Err(Error::validation("cells", "design needs at least one on-ramp"));
    }
    grid_search(DesignScheme::FullyCoordinated, cfg, markov, grid, opts)
}

/// Whether some grid point certifies stability (no log, stops early).
fn any_stable(
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    grid: &GridSpec,
    inner: &InnerOptions,
) -> bool {
    grid.candidates().into_par_iter().any(|(u, k)| {
        matches!(
            policy_drift(DesignScheme::Localized, cfg, markov, &u, &k, inner),
            Ok(Some(d)) if d < -STABLE_MARGIN
        )
    })
}

/// Largest mainline demand (to within `tolerance`) for which some grid point
/// certifies stability, with the best policy at that demand as witness.
pub fn design_localized_throughput(
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    grid: &GridSpec,
    tolerance: f64,
    opts: &DesignOptions,
) -> Result<DesignResult> {
    if !(tolerance > 0.0) {
        return Err(Error::validation("tolerance", "must be > 0"));
    }
    let at = |alpha: f64| -> Result<HighwayConfig> {
        let mut d = cfg.demands();
        d[0] = alpha;
        cfg.with_demands(&d)
    };
    let full = design_localized(cfg, markov, grid, opts)?;
    let target = cfg.buffer(0).demand_veh_per_hr;
    if full.feasible {
        return Ok(DesignResult {
            objective: target,
            throughput: Some(target),
            ..full
        });
    }
    let (mut lo, mut hi) = (0.0, target);
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if any_stable(&at(mid)?, markov, grid, &opts.inner) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let witness = if lo > 0.0 {
        design_localized(&at(lo)?, markov, grid, opts)?
    } else {
        full
    };
    let feasible = lo > 0.0 && witness.feasible;
    Ok(DesignResult {
        objective: lo,
        feasible,
        throughput: Some(lo),
        ..witness
    })
}

fn idle(cfg: &HighwayConfig, k: usize) -> bool {
    k > 0 && cfg.buffer(k).demand_veh_per_hr == 0.0
}

/// Partially coordinated design: one grid search per ramp from the most
/// downstream to the most upstream, each with the downstream gains fixed and
/// the upstream ramps unmetered. The mainline buffer is checked last.
/// Ramps without demand are excluded from the feasibility verdict.
pub fn design_partial(
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    grid: &GridSpec,
    weight: PcWeight,
    opts: &DesignOptions,
) -> Result<DesignResult> {
    let k_total = cfg.cell_count();
    if k_total < 2 {
        return Err(Error::validation("cells", "design needs at least one on-ramp"));
    }
    markov.check_against(cfg)?;
    grid.validate_ranges(k_total - 1)?;
    let scheme = DesignScheme::PartiallyCoordinated(weight);
    let mut partial = PartialPolicy::unmetered(k_total);
    let mut stages = Vec::with_capacity(k_total - 1);
    for k in (1..k_total).rev() {
        let sub = grid.ramp(k - 1);
        let log = evaluate(&sub, |u, kappa| {
            let mut trial = partial.clone();
            trial.set(k, RampGain::new(u[0], kappa[0])?);
            let bounds = match density_bounds(cfg, markov, &trial) {
                Ok(b) => b,
                Err(Error::NoRoot { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            soft(buffer_drift(scheme, k, &trial, cfg, markov, &bounds, &opts.inner).map(|r| r.0))
        })?;
        let best = select_best_by(&log, opts.tie_tolerance, opts.tie_break);
        let drift = best.and_then(|i| log[i].drift).unwrap_or(f64::INFINITY);
        // A ramp without demand never queues from an empty start, so its
        // stage only picks the least-bad gain.
        if drift >= -STABLE_MARGIN && !idle(cfg, k) {
            return Err(Error::SubproblemInfeasible {
                ramp: k + 1,
                best: drift,
            });
        }
        let Some(i) = best else {
            return Err(Error::SubproblemInfeasible {
                ramp: k + 1,
                best: drift,
            });
        };
        let (u, kappa) = (log[i].u[0], log[i].kappa[0]);
        partial.set(k, RampGain::new(u, kappa)?);
        stages.push(StageResult {
            ramp: k + 1,
            u,
            kappa,
            drift,
            log: if opts.keep_log { log } else { Vec::new() },
        });
    }
    let policy = partial.complete().expect("every ramp was assigned");
    let report = mean_drift(scheme, &policy, cfg, markov, &opts.inner)?;
    let objective = report
        .buffer_means
        .iter()
        .enumerate()
        .filter(|&(k, _)| !idle(cfg, k))
        .map(|(_, &d)| d)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(DesignResult {
        scheme,
        feasible: verdict_of(objective) == Verdict::Stable,
        objective,
        policy: Some(policy),
        throughput: None,
        stages,
        log: Vec::new(),
    })
}

/// Mean drift of every grid candidate under `scheme`, in grid order.
pub fn drift_surface(
    scheme: DesignScheme,
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    grid: &GridSpec,
    opts: &DesignOptions,
) -> Result<Vec<Candidate>> {
    grid.validate(cfg.cell_count() - 1)?;
    evaluate(grid, |u, k| policy_drift(scheme, cfg, markov, u, k, &opts.inner))
}

/// Free-flow flow entering each cell: upstream arrivals plus its own ramp.
pub fn free_flow_arrivals(cfg: &HighwayConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(cfg.cell_count());
    for k in 0..cfg.cell_count() {
        let upstream = if k == 0 { 0.0 } else { cfg.cell(k - 1).mainline_ratio * out[k - 1] };
        out.push(upstream + cfg.buffer(k).demand_veh_per_hr);
    }
    out
}

/// Two-cell section ending at ramp `k` (0-based, `k >= 1`). Its upstream
/// buffer carries everything entering cell `k - 1` at free flow and can
/// release up to that cell's largest capacity.
pub fn ramp_section(
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    k: usize,
) -> Result<(HighwayConfig, MarkovCapacityModel)> {
    if k == 0 || k >= cfg.cell_count() {
        return Err(Error::validation("section", format!("no on-ramp at cell {}", k + 1)));
    }
    let arrivals = free_flow_arrivals(cfg);
    let sub = cfg.section(k - 1, k)?;
    let upstream = if k == 1 {
        *cfg.buffer(0)
    } else {
        let demand = arrivals[k - 1];
        crate::model::BufferParams {
            capacity_veh_per_hr: demand.max(markov.max_capacity(k - 1)),
            demand_veh_per_hr: demand,
        }
    };
    let sub = sub.with_buffer(0, upstream)?;
    let caps = markov
        .capacities()
        .iter()
        .map(|row| vec![row[k - 1], row[k]])
        .collect();
    let sub_markov = MarkovCapacityModel::new(caps, markov.rates().to_vec())?;
    Ok((sub, sub_markov))
}

/// Localized design for every ramp of a long highway, each on its own
/// two-cell section. Sections without a certificate keep their
/// lowest-drift grid point and are reported infeasible.
pub fn design_localized_sections(
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    grid: &GridSpec,
    opts: &DesignOptions,
) -> Result<DesignResult> {
    let k_total = cfg.cell_count();
    if k_total < 2 {
        return Err(Error::validation("cells", "design needs at least one on-ramp"));
    }
    grid.validate_ranges(k_total - 1)?;
    let mut stages = Vec::with_capacity(k_total - 1);
    for k in 1..k_total {
        let (sub, sub_markov) = ramp_section(cfg, markov, k)?;
        let r = design_localized(&sub, &sub_markov, &grid.ramp(k - 1), opts)?;
        let p = r.policy.as_ref().ok_or(Error::SubproblemInfeasible {
            ramp: k + 1,
            best: f64::INFINITY,
        })?;
        let g = p.gains()[0];
        stages.push(StageResult {
            ramp: k + 1,
            u: g.u_veh_per_hr,
            kappa: g.kappa_kmh,
            drift: r.objective,
            log: r.log,
        });
    }
    let policy = AffineControlPolicy::new(
        stages
            .iter()
            .map(|s| RampGain::new(s.u, s.kappa))
            .collect::<Result<_>>()?,
    )?;
    let worst = stages.iter().map(|s| s.drift).fold(f64::NEG_INFINITY, f64::max);
    Ok(DesignResult {
        scheme: DesignScheme::Localized,
        policy: Some(policy),
        objective: worst,
        feasible: worst < -STABLE_MARGIN,
        throughput: None,
        stages,
        log: Vec::new(),
    })
}
