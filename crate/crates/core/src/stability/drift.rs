use serde::{Deserialize, Serialize};

use super::inner::{InnerOptions, NetFlowProblem};
use super::scheme::{weights, DesignScheme, Weight};
use super::sets::congestion_set;
use crate::error::{Error, Result};
use crate::model::{density_bounds, DensityBounds, HighwayConfig, MarkovCapacityModel, Metering};

/// Margin below zero required before a drift counts as negative.
pub const STABLE_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Stable,
    Unknown,
}

/// Worst-case net flow of one buffer in one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeDrift {
    pub buffer: usize,
    pub mode: usize,
    pub value: f64,
    pub queued: Vec<bool>,
    pub densities: Vec<f64>,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub scheme: DesignScheme,
    pub bounds: DensityBounds,
    /// Buffer-major, then mode.
    pub entries: Vec<ModeDrift>,
    /// Steady-state average of the worst-case net flow, per buffer.
    pub buffer_means: Vec<f64>,
    pub mean_drift: f64,
    pub verdict: Verdict,
    /// `-1 / mean_drift` when negative: queue bound up to an unknown constant factor.
    pub queue_bound_proxy: f64,
}

impl DriftReport {
    pub fn is_stable(&self) -> bool {
        self.verdict == Verdict::Stable
    }

    pub fn entry(&self, buffer: usize, mode: usize) -> &ModeDrift {
        self.entries
            .iter()
            .find(|e| e.buffer == buffer && e.mode == mode)
            .expect("entry exists")
    }
}

pub fn verdict_of(mean_drift: f64) -> Verdict {
    if mean_drift < -STABLE_MARGIN {
        Verdict::Stable
    } else {
        Verdict::Unknown
    }
}

/// Steady-state mean of the worst-case net flow of buffer `k`, with per-mode detail.
pub fn buffer_drift<M: Metering>(
    scheme: DesignScheme,
    k: usize,
    metering: &M,
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    bounds: &DensityBounds,
    opts: &InnerOptions,
) -> Result<(f64, Vec<ModeDrift>)> {
    let w = weights(scheme, k, bounds)?;
    buffer_drift_with_weights(scheme, k, metering, cfg, markov, bounds, w, opts)
}

#[allow(clippy::too_many_arguments)]
fn buffer_drift_with_weights<M: Metering>(
    scheme: DesignScheme,
    k: usize,
    metering: &M,
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    bounds: &DensityBounds,
    w: Vec<Weight>,
    opts: &InnerOptions,
) -> Result<(f64, Vec<ModeDrift>)> {
    let mut set = congestion_set(scheme, k, bounds);
    let idle: Vec<bool> = cfg.buffers().iter().map(|b| b.demand_veh_per_hr == 0.0).collect();
    set.restrict_unqueued(&idle);
    let p = markov.steady_state();
    let mut mean = 0.0;
    let mut rows = Vec::with_capacity(markov.mode_count());
    for (s, &ps) in p.iter().enumerate() {
        let prob = NetFlowProblem::new(cfg, markov, metering, s, k, w.clone());
        let m = prob.maximize(&set, opts)?;
        mean += ps * m.value;
        rows.push(ModeDrift {
            buffer: k,
            mode: s,
            value: m.value,
            queued: m.queued,
            densities: m.densities,
            exact: m.exact,
        });
    }
    Ok((mean, rows))
}

fn check_scheme(scheme: DesignScheme, cfg: &HighwayConfig) -> Result<()> {
    if scheme == DesignScheme::Localized && cfg.cell_count() != 2 {
        return Err(Error::validation(
            "scheme",
            format!("localized drift needs exactly 2 cells, got {}", cfg.cell_count()),
        ));
    }
    Ok(())
}

fn assemble(
    scheme: DesignScheme,
    bounds: DensityBounds,
    per_buffer: Vec<(f64, Vec<ModeDrift>)>,
) -> DriftReport {
    let buffer_means: Vec<f64> = per_buffer.iter().map(|(m, _)| *m).collect();
    let mean_drift = buffer_means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let verdict = verdict_of(mean_drift);
    DriftReport {
        scheme,
        bounds,
        entries: per_buffer.into_iter().flat_map(|(_, e)| e).collect(),
        buffer_means,
        mean_drift,
        verdict,
        queue_bound_proxy: if mean_drift < 0.0 { -1.0 / mean_drift } else { f64::INFINITY },
    }
}

/// Mean drift of a policy under a scheme, over all buffers.
pub fn mean_drift<M: Metering>(
    scheme: DesignScheme,
    metering: &M,
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    opts: &InnerOptions,
) -> Result<DriftReport> {
    check_scheme(scheme, cfg)?;
    let bounds = density_bounds(cfg, markov, metering)?;
    let per_buffer = (0..cfg.cell_count())
        .map(|k| buffer_drift(scheme, k, metering, cfg, markov, &bounds, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(scheme, bounds, per_buffer))
}

/// Mean drift with every weight fixed to one.
pub fn mean_drift_unit_weights<M: Metering>(
    scheme: DesignScheme,
    metering: &M,
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    opts: &InnerOptions,
) -> Result<DriftReport> {
    check_scheme(scheme, cfg)?;
    let bounds = density_bounds(cfg, markov, metering)?;
    let ones = vec![Weight::One; cfg.cell_count()];
    let per_buffer = (0..cfg.cell_count())
        .map(|k| {
            buffer_drift_with_weights(scheme, k, metering, cfg, markov, &bounds, ones.clone(), opts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(scheme, bounds, per_buffer))
}
