use serde::{Deserialize, Serialize};

use super::markov::MarkovCapacityModel;
use super::params::{HighwayConfig, Metering};
use super::pwl::Pwl;
use crate::error::{Error, Result};

/// Density boundaries of the invariant set for a given policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityBounds {
    /// Lower bound with an empty buffer.
    pub lower_no_queue: Vec<f64>,
    /// Lower bound with a queued buffer.
    pub lower_with_queue: Vec<f64>,
    /// Upper bound when the cell is not blocked from downstream.
    pub upper_free: Vec<f64>,
    /// Upper bound when the cell may be blocked from downstream.
    pub upper_blocked: Vec<f64>,
    /// Root of the queued-ramp balance equation (cells `2..=K`; entry 0 unused).
    pub nu: Vec<f64>,
}

/// Buffer-to-cell flow `r_k(queued, n)` as a piecewise-linear function on `[lo, hi]`.
pub fn buffer_outflow_pwl<M: Metering>(
    cfg: &HighwayConfig,
    metering: &M,
    k: usize,
    queued: bool,
    lo: f64,
    hi: f64,
) -> Pwl {
    let c = cfg.cell(k);
    let b = cfg.buffer(k);
    let supply = if queued { b.capacity_veh_per_hr } else { b.demand_veh_per_hr };
    let receiving = Pwl::affine(
        lo,
        hi,
        c.congestion_wave_speed_kmh * c.jam_density_veh_per_km,
        -c.congestion_wave_speed_kmh,
    );
    let mut r = receiving.min_const(supply);
    if k > 0 {
        if let Some(g) = metering.gain(k) {
            r = r.min(&Pwl::affine(lo, hi, g.u_veh_per_hr, -g.kappa_kmh).max_const(0.0));
        }
    }
    r.max_const(0.0)
}

/// Sending flow capped by capacity, `min(v n, F)`, on `[lo, hi]`.
pub fn capped_sending_pwl(cfg: &HighwayConfig, k: usize, capacity: f64, lo: f64, hi: f64) -> Pwl {
    Pwl::affine(lo, hi, 0.0, cfg.cell(k).free_flow_speed_kmh).min_const(capacity)
}

/// Receiving space for cell `k - 1`'s mainline outflow, in units of that outflow:
/// `max(0, w_k (n_jam - n_k) - r_k(queued, n_k)) / beta_{k-1}` on `[lo, hi]`.
pub fn upstream_space_pwl<M: Metering>(
    cfg: &HighwayConfig,
    metering: &M,
    k: usize,
    queued: bool,
    lo: f64,
    hi: f64,
) -> Pwl {
    let c = cfg.cell(k);
    let receiving = Pwl::affine(
        lo,
        hi,
        c.congestion_wave_speed_kmh * c.jam_density_veh_per_km,
        -c.congestion_wave_speed_kmh,
    );
    receiving
        .sub(&buffer_outflow_pwl(cfg, metering, k, queued, lo, hi))
        .max_const(0.0)
        .scale(1.0 / cfg.cell(k - 1).mainline_ratio)
}

/// Computes all four density boundaries for the policy.
pub fn density_bounds<M: Metering>(
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    metering: &M,
) -> Result<DensityBounds> {
    let k_total = cfg.cell_count();
    let cell = |k: usize| cfg.cell(k);
    let fmax = |k: usize| markov.max_capacity(k);
    let fmin = |k: usize| markov.min_capacity(k);

    let mut lower = vec![0.0; k_total];
    let mut queued = vec![0.0; k_total];
    let mut nu = vec![f64::NAN; k_total];

    lower[0] = cfg.buffer(0).demand_veh_per_hr.min(fmax(0)) / cell(0).free_flow_speed_kmh;
    queued[0] = cfg.buffer(0).capacity_veh_per_hr.min(fmax(0)) / cell(0).free_flow_speed_kmh;
    for k in 1..k_total {
        let c = cell(k);
        let through = cell(k - 1).mainline_ratio
            * cell(k - 1).sending(lower[k - 1]).min(fmin(k - 1));
        lower[k] = (through + cfg.buffer(k).demand_veh_per_hr).min(fmax(k)) / c.free_flow_speed_kmh;

        // through + r_k(1, n) - v n is strictly decreasing in n.
        let jam = c.jam_density_veh_per_km;
        let balance = buffer_outflow_pwl(cfg, metering, k, true, 0.0, jam)
            .sub(&Pwl::affine(0.0, jam, -through, c.free_flow_speed_kmh));
        let root = balance.first_root().ok_or(Error::NoRoot { cell: k + 1 })?;
        nu[k] = root;
        queued[k] = root.min(fmax(k) / c.free_flow_speed_kmh);
    }

    let upper_free: Vec<f64> = (0..k_total)
        .map(|k| cell(k).jam_density_veh_per_km - fmin(k) / cell(k).congestion_wave_speed_kmh)
        .collect();

    let mut upper_blocked = upper_free.clone();
    for k in (0..k_total.saturating_sub(1)).rev() {
        let next = k + 1;
        let (lo, hi) = (lower[next], upper_blocked[next].max(lower[next]));
        // A ramp without demand never holds a queue, so it adds nothing.
        let ramp_queued = cfg.buffer(next).demand_veh_per_hr > 0.0;
        let min_space = upstream_space_pwl(cfg, metering, next, ramp_queued, lo, hi).minimum().1
            * cell(k).mainline_ratio;
        let c = cell(k);
        upper_blocked[k] = c.jam_density_veh_per_km
            - fmin(k).min(min_space / c.mainline_ratio) / c.congestion_wave_speed_kmh;
    }

    Ok(DensityBounds {
        lower_no_queue: lower,
        lower_with_queue: queued,
        upper_free,
        upper_blocked,
        nu,
    })
}

/// Minimum receiving flow left for mainline traffic entering cell `k`
/// over `[lower_no_queue, upper_blocked]`, with the ramp queued if it has demand.
pub fn min_mainline_receiving<M: Metering>(
    cfg: &HighwayConfig,
    metering: &M,
    bounds: &DensityBounds,
    k: usize,
) -> f64 {
    let lo = bounds.lower_no_queue[k];
    let hi = bounds.upper_blocked[k].max(lo);
    let ramp_queued = cfg.buffer(k).demand_veh_per_hr > 0.0;
    upstream_space_pwl(cfg, metering, k, ramp_queued, lo, hi).minimum().1 * cfg.cell(k - 1).mainline_ratio
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::flow::buffer_outflow;
    use crate::model::params::{AffineControlPolicy, BufferParams, CellParams};
    use approx::assert_abs_diff_eq;

    fn table_one() -> (HighwayConfig, MarkovCapacityModel) {
        let cell = |jam, beta| CellParams {
            length_km: 1.0,
            free_flow_speed_kmh: 100.0,
            congestion_wave_speed_kmh: 25.0,
            jam_density_veh_per_km: jam,
            mainline_ratio: beta,
        };
        let cfg = HighwayConfig::new(
            vec![cell(200.0, 0.75), cell(300.0, 0.0)],
            vec![
                BufferParams { capacity_veh_per_hr: 4000.0, demand_veh_per_hr: 3500.0 },
                BufferParams { capacity_veh_per_hr: 1200.0, demand_veh_per_hr: 600.0 },
            ],
        )
        .unwrap();
        let markov = MarkovCapacityModel::new(
            vec![vec![4000.0, 6000.0], vec![4000.0, 3000.0]],
            vec![vec![0.0, 0.9], vec![0.9, 0.0]],
        )
        .unwrap();
        (cfg, markov)
    }

    #[test]
    fn two_cell_bounds() {
        let (cfg, markov) = table_one();
        let p = AffineControlPolicy::from_pairs(&[4750.0], &[25.0]).unwrap();
        let b = density_bounds(&cfg, &markov, &p).unwrap();
        assert_abs_diff_eq!(b.lower_no_queue[0], 35.0);
        assert_abs_diff_eq!(b.lower_with_queue[0], 40.0);
        assert_abs_diff_eq!(b.upper_free[1], 180.0);
        assert_eq!(b.upper_blocked[1], b.upper_free[1]);
        // 0.75 * 3500 + 600 = 3225 veh/h through cell 2.
        assert_abs_diff_eq!(b.lower_no_queue[1], 32.25, epsilon = 1e-12);
        // 2625 + 1200 = 100 nu.
        assert_abs_diff_eq!(b.nu[1], 38.25, epsilon = 1e-9);
        assert_abs_diff_eq!(b.lower_with_queue[1], 38.25, epsilon = 1e-9);
    }

    #[test]
    fn blocked_bound_matches_grid_oracle() {
        let (cfg, markov) = table_one();
        let p = AffineControlPolicy::from_pairs(&[4750.0], &[25.0]).unwrap();
        let b = density_bounds(&cfg, &markov, &p).unwrap();
        let (lo, hi) = (b.lower_no_queue[1], b.upper_blocked[1]);
        let n = 200_001;
        let r2 = (0..n)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                cfg.cell(1).receiving(x) - buffer_outflow(&cfg, &p, 1, true, x)
            })
            .fold(f64::INFINITY, f64::min);
        let expected = 200.0 - 4000.0f64.min(r2 / 0.75) / 25.0;
        assert_abs_diff_eq!(b.upper_blocked[0], expected, epsilon = 1e-6);
        assert_abs_diff_eq!(min_mainline_receiving(&cfg, &p, &b, 1), r2, epsilon = 1e-6);
    }

    #[test]
    fn nu_residual_is_tiny() {
        let (cfg, markov) = table_one();
        for (u, kappa) in [(2500.0, 50.0), (6000.0, 0.0), (4000.0, 10.0)] {
            let p = AffineControlPolicy::from_pairs(&[u], &[kappa]).unwrap();
            let b = density_bounds(&cfg, &markov, &p).unwrap();
            let nu = b.nu[1];
            let lhs = 0.75 * 3500.0f64.min(4000.0) + buffer_outflow(&cfg, &p, 1, true, nu);
            assert!((lhs - 100.0 * nu).abs() < 1e-9 * 100.0);
        }
    }
}
