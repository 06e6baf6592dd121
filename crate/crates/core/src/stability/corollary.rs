use serde::{Deserialize, Serialize};

use super::drift::mean_drift_unit_weights;
use super::inner::InnerOptions;
use super::scheme::{gamma, DesignScheme, PcWeight};
use crate::error::Result;
use crate::model::bounds::buffer_outflow_pwl;
use crate::model::flow::onramp_flow;
use crate::model::{density_bounds, DensityBounds, HighwayConfig, MarkovCapacityModel, Metering, Pwl};

/// Whether cell `k + 1` always leaves room for the full outflow of cell `k`,
/// for each interface `k = 0..K-1`.
pub fn check_decoupling<M: Metering>(
    metering: &M,
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    bounds: &DensityBounds,
) -> Vec<bool> {
    (0..cfg.cell_count().saturating_sub(1))
        .map(|k| {
            let next = k + 1;
            let (lo, hi) = (bounds.lower_no_queue[next], bounds.upper_free[next]);
            let c = cfg.cell(next);
            let space = Pwl::affine(
                lo,
                hi.max(lo),
                c.congestion_wave_speed_kmh * c.jam_density_veh_per_km,
                -c.congestion_wave_speed_kmh,
            )
            .sub(&buffer_outflow_pwl(cfg, metering, next, true, lo, hi.max(lo)));
            space.minimum().1 >= cfg.cell(k).mainline_ratio * markov.max_capacity(k)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corollary1 {
    /// The special case applies, so the verdict is necessary and sufficient.
    pub applicable: bool,
    pub stable_iff: bool,
}

/// Necessary-and-sufficient check for decoupled two-cell sections.
pub fn corollary1_verdict<M: Metering>(
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    metering: &M,
) -> Result<Corollary1> {
    let applicable = cfg.cell_count() == 2 && {
        let bounds = density_bounds(cfg, markov, metering)?;
        pc_conditions(cfg, markov, metering, &bounds)
    };
    let beta = cfg.cell(0).mainline_ratio;
    let a = cfg.demands();
    let stable_iff = a[0] < markov.mean_capacity(0) && beta * a[0] + a[1] < markov.mean_capacity(1);
    Ok(Corollary1 {
        applicable,
        stable_iff,
    })
}

/// Decoupling plus the bottleneck conditions at every merge.
fn pc_conditions<M: Metering>(
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    metering: &M,
    bounds: &DensityBounds,
) -> bool {
    if !check_decoupling(metering, cfg, markov, bounds).into_iter().all(|x| x) {
        return false;
    }
    if cfg.buffer(0).capacity_veh_per_hr < markov.max_capacity(0) {
        return false;
    }
    let betas = cfg.betas();
    let a = cfg.demands();
    (1..cfg.cell_count()).all(|k| {
        let crit = markov.critical_density(cfg, k);
        let mu = metering.metering_rate(k, crit);
        let fmax = markov.max_capacity(k);
        let free = betas[k - 1] * markov.min_capacity(k - 1) + onramp_flow(cfg, k, false, crit, mu);
        let upstream: f64 = (0..k).map(|i| gamma(i, k, &betas) * a[i]).sum();
        let queued = upstream + onramp_flow(cfg, k, true, crit, mu);
        free >= fmax && queued >= fmax
    })
}

/// On decoupled highways the partially coordinated drift with unit weights
/// coincides with the fully coordinated one. Returns false if the conditions
/// fail, otherwise whether the two objectives agree.
pub fn corollary2_equivalence_check<M: Metering>(
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    metering: &M,
    opts: &InnerOptions,
) -> Result<bool> {
    let bounds = density_bounds(cfg, markov, metering)?;
    if !pc_conditions(cfg, markov, metering, &bounds) {
        return Ok(false);
    }
    let fc = mean_drift_unit_weights(DesignScheme::FullyCoordinated, metering, cfg, markov, opts)?;
    let pc = mean_drift_unit_weights(
        DesignScheme::PartiallyCoordinated(PcWeight::LowerAnchored),
        metering,
        cfg,
        markov,
        opts,
    )?;
    Ok((fc.mean_drift - pc.mean_drift).abs() <= 1e-6 * (1.0 + fc.mean_drift.abs()))
}
