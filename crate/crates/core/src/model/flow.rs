use super::markov::MarkovCapacityModel;
use super::params::{HighwayConfig, HybridState, Metering};

/// Flow into cell 1 from the upstream mainline buffer.
#[inline]
pub fn mainline_inflow(cfg: &HighwayConfig, queued: bool, density: f64) -> f64 {
    let b = cfg.buffer(0);
    let supply = if queued { b.capacity_veh_per_hr } else { b.demand_veh_per_hr };
    supply.min(cfg.cell(0).receiving(density)).max(0.0)
}

/// Flow from on-ramp `k` (0-based, `k >= 1`) given its metering rate, if any.
#[inline]
pub fn onramp_flow(
    cfg: &HighwayConfig,
    k: usize,
    queued: bool,
    density: f64,
    metering_rate: Option<f64>,
) -> f64 {
    let b = cfg.buffer(k);
    let supply = if queued { b.capacity_veh_per_hr } else { b.demand_veh_per_hr };
    let mut r = supply.min(cfg.cell(k).receiving(density));
    if let Some(mu) = metering_rate {
        r = r.min(mu.max(0.0));
    }
    r.max(0.0)
}

/// Flow out of buffer `k` into cell `k` under a metering policy.
#[inline]
pub fn buffer_outflow<M: Metering>(
    cfg: &HighwayConfig,
    metering: &M,
    k: usize,
    queued: bool,
    density: f64,
) -> f64 {
    if k == 0 {
        mainline_inflow(cfg, queued, density)
    } else {
        onramp_flow(cfg, k, queued, density, metering.metering_rate(k, density))
    }
}

/// Outflow of cell `k` given the downstream buffer's flow `next_inflow`
/// (ignored for the last cell).
#[inline]
pub fn cell_outflow(
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    mode: usize,
    k: usize,
    densities: &[f64],
    next_inflow: f64,
) -> f64 {
    let c = cfg.cell(k);
    let mut f = c.sending(densities[k]).min(markov.capacity(mode, k));
    if k + 1 < cfg.cell_count() {
        let space = (cfg.cell(k + 1).receiving(densities[k + 1]) - next_inflow).max(0.0);
        f = f.min(space / c.mainline_ratio);
    }
    f.max(0.0)
}

/// Buffer flows `r` and cell outflows `f` at one instant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Flows {
    pub inflow: Vec<f64>,
    pub outflow: Vec<f64>,
}

impl Flows {
    pub fn zeros(cells: usize) -> Self {
        Self {
            inflow: vec![0.0; cells],
            outflow: vec![0.0; cells],
        }
    }
}

/// Fills `out` given explicit per-ramp metering rates (`None` = unmetered;
/// entry 0 is ignored).
pub fn flows_with_rates(
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    mode: usize,
    queued: &[bool],
    densities: &[f64],
    rates: &[Option<f64>],
    out: &mut Flows,
) {
    let supply: Vec<f64> = (0..cfg.cell_count())
        .map(|k| {
            let b = cfg.buffer(k);
            if queued[k] { b.capacity_veh_per_hr } else { b.demand_veh_per_hr }
        })
        .collect();
    flows_with_supply(cfg, markov, mode, &supply, densities, rates, out);
}

/// Like [`flows_with_rates`] but with each buffer's available release rate
/// given directly, so a nearly empty queue can release only what it holds.
pub fn flows_with_supply(
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    mode: usize,
    supply: &[f64],
    densities: &[f64],
    rates: &[Option<f64>],
    out: &mut Flows,
) {
    let k_total = cfg.cell_count();
    out.inflow.resize(k_total, 0.0);
    out.outflow.resize(k_total, 0.0);
    for k in 0..k_total {
        let mut r = supply[k].min(cfg.cell(k).receiving(densities[k]));
        if k > 0 {
            if let Some(mu) = rates[k] {
                r = r.min(mu.max(0.0));
            }
        }
        out.inflow[k] = r.max(0.0);
    }
    for k in 0..k_total {
        let next = if k + 1 < k_total { out.inflow[k + 1] } else { 0.0 };
        out.outflow[k] = cell_outflow(cfg, markov, mode, k, densities, next);
    }
}

/// Flows at a hybrid state under a policy.
pub fn flows<M: Metering>(
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    metering: &M,
    state: &HybridState,
) -> Flows {
    let n = &state.densities_veh_per_km;
    let queued: Vec<bool> = state.queues_veh.iter().map(|&q| q > 0.0).collect();
    let rates: Vec<Option<f64>> = (0..cfg.cell_count())
        .map(|k| metering.metering_rate(k, n[k]))
        .collect();
    let mut out = Flows::zeros(cfg.cell_count());
    flows_with_rates(cfg, markov, state.mode, &queued, n, &rates, &mut out);
    out
}

/// Queue rates `G` and density rates `H` implied by a set of flows.
pub fn rates_from_flows(cfg: &HighwayConfig, fl: &Flows) -> (Vec<f64>, Vec<f64>) {
    let k_total = cfg.cell_count();
    let mut g = Vec::with_capacity(k_total);
    let mut h = Vec::with_capacity(k_total);
    for k in 0..k_total {
        g.push(cfg.buffer(k).demand_veh_per_hr - fl.inflow[k]);
        let upstream = if k == 0 {
            0.0
        } else {
            cfg.cell(k - 1).mainline_ratio * fl.outflow[k - 1]
        };
        h.push((upstream + fl.inflow[k] - fl.outflow[k]) / cfg.cell(k).length_km);
    }
    (g, h)
}

/// Vector fields `(G, H)` of the queue and density dynamics.
pub fn dynamics<M: Metering>(
    state: &HybridState,
    metering: &M,
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
) -> (Vec<f64>, Vec<f64>) {
    rates_from_flows(cfg, &flows(cfg, markov, metering, state))
}
