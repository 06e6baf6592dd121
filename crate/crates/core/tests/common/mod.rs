#![allow(dead_code)]

pub mod oracles;

use proptest::prelude::*;
use ssctm_core::model::{BufferParams, CellParams, HighwayConfig, MarkovCapacityModel};

pub fn cell(jam: f64, beta: f64) -> CellParams {
    CellParams {
        length_km: 1.0,
        free_flow_speed_kmh: 100.0,
        congestion_wave_speed_kmh: 25.0,
        jam_density_veh_per_km: jam,
        mainline_ratio: beta,
    }
}

pub fn buffer(capacity: f64, demand: f64) -> BufferParams {
    BufferParams {
        capacity_veh_per_hr: capacity,
        demand_veh_per_hr: demand,
    }
}

/// The two-cell section with a switching capacity drop in cell 2.
pub fn two_cell(alpha1: f64, alpha2: f64) -> (HighwayConfig, MarkovCapacityModel) {
    let cfg = HighwayConfig::new(
        vec![cell(200.0, 0.75), cell(300.0, 0.0)],
        vec![buffer(4000.0, alpha1), buffer(1200.0, alpha2)],
    )
    .unwrap();
    let markov = MarkovCapacityModel::new(
        vec![vec![4000.0, 6000.0], vec![4000.0, 3000.0]],
        vec![vec![0.0, 0.9], vec![0.9, 0.0]],
    )
    .unwrap();
    (cfg, markov)
}

pub fn table_one() -> (HighwayConfig, MarkovCapacityModel) {
    two_cell(3500.0, 600.0)
}

pub fn table_three() -> (HighwayConfig, MarkovCapacityModel) {
    let cfg = HighwayConfig::new(
        vec![cell(200.0, 0.75), cell(300.0, 0.6), cell(300.0, 0.0)],
        vec![buffer(4000.0, 3500.0), buffer(1200.0, 600.0), buffer(1200.0, 800.0)],
    )
    .unwrap();
    let markov = MarkovCapacityModel::new(
        vec![vec![4000.0, 6000.0, 6000.0], vec![4000.0, 3000.0, 2500.0]],
        vec![vec![0.0, 0.9], vec![0.9, 0.0]],
    )
    .unwrap();
    (cfg, markov)
}

/// Generator matrix of an irreducible chain: a ring plus random extra edges.
pub fn arb_rates(max_modes: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_modes).prop_flat_map(|m| {
        (
            prop::collection::vec(0.05f64..5.0, m),
            prop::collection::vec(prop::option::weighted(0.4, 0.01f64..5.0), m * m),
        )
            .prop_map(move |(ring, extra)| {
                let mut r = vec![vec![0.0; m]; m];
                for s in 0..m {
                    for t in 0..m {
                        if s != t {
                            r[s][t] = extra[s * m + t].unwrap_or(0.0);
                        }
                    }
                    if m > 1 {
                        r[s][(s + 1) % m] += ring[s];
                    }
                }
                r
            })
    })
}

/// A random highway with 1..=max_cells cells and a random capacity chain.
/// Capacities respect `F <= v w n_jam / (v + w)` so the diagram is triangular.
pub fn arb_highway(max_cells: usize, max_modes: usize) -> impl Strategy<Value = (HighwayConfig, MarkovCapacityModel)> {
    (1..=max_cells, arb_rates(max_modes)).prop_flat_map(|(k, rates)| {
        let m = rates.len();
        (
            prop::collection::vec((0.3f64..2.0, 60.0f64..120.0, 15.0f64..30.0, 120.0f64..320.0, 0.3f64..1.0), k),
            prop::collection::vec((500.0f64..6000.0, 0.0f64..1.0), k),
            prop::collection::vec(0.3f64..1.0, m * k),
        )
            .prop_map(move |(geo, buf, cap)| {
                let cells: Vec<CellParams> = geo
                    .iter()
                    .enumerate()
                    .map(|(i, &(l, v, w, jam, beta))| CellParams {
                        length_km: l,
                        free_flow_speed_kmh: v,
                        congestion_wave_speed_kmh: w,
                        jam_density_veh_per_km: jam,
                        mainline_ratio: if i + 1 == k { 0.0 } else { beta },
                    })
                    .collect();
                let buffers = buf.iter().map(|&(u, frac)| buffer(u, u * frac)).collect();
                let caps = (0..m)
                    .map(|s| {
                        (0..k)
                            .map(|i| {
                                let c = &cells[i];
                                let top = c.free_flow_speed_kmh * c.congestion_wave_speed_kmh
                                    * c.jam_density_veh_per_km
                                    / (c.free_flow_speed_kmh + c.congestion_wave_speed_kmh);
                                (top * cap[s * k + i]).floor()
                            })
                            .collect()
                    })
                    .collect();
                (
                    HighwayConfig::new(cells, buffers).unwrap(),
                    MarkovCapacityModel::new(caps, rates.clone()).unwrap(),
                )
            })
    })
}
