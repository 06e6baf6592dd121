//! Shared fixtures for the benchmarks under `benches/`.

use ssctm_core::model::{BufferParams, CellParams, HighwayConfig, MarkovCapacityModel};

fn cell(jam: f64, beta: f64) -> CellParams {
    CellParams {
        length_km: 1.0,
        free_flow_speed_kmh: 100.0,
        congestion_wave_speed_kmh: 25.0,
        jam_density_veh_per_km: jam,
        mainline_ratio: beta,
    }
}

fn buffer(capacity: f64, demand: f64) -> BufferParams {
    BufferParams {
        capacity_veh_per_hr: capacity,
        demand_veh_per_hr: demand,
    }
}

/// Two cells with a capacity drop in cell 2.
pub fn two_cell() -> (HighwayConfig, MarkovCapacityModel) {
    let cfg = HighwayConfig::new(
        vec![cell(200.0, 0.75), cell(300.0, 0.0)],
        vec![buffer(4000.0, 3500.0), buffer(1200.0, 600.0)],
    )
    .expect("valid two-cell section");
    let markov = MarkovCapacityModel::new(
        vec![vec![4000.0, 6000.0], vec![4000.0, 3000.0]],
        vec![vec![0.0, 0.9], vec![0.9, 0.0]],
    )
    .expect("irreducible chain");
    (cfg, markov)
}

/// Three cells with drops in cells 2 and 3.
pub fn three_cell() -> (HighwayConfig, MarkovCapacityModel) {
    let cfg = HighwayConfig::new(
        vec![cell(200.0, 0.75), cell(300.0, 0.6), cell(300.0, 0.0)],
        vec![buffer(4000.0, 3500.0), buffer(1200.0, 600.0), buffer(1200.0, 800.0)],
    )
    .expect("valid three-cell section");
    let markov = MarkovCapacityModel::new(
        vec![vec![4000.0, 6000.0, 6000.0], vec![4000.0, 3000.0, 2500.0]],
        vec![vec![0.0, 0.9], vec![0.9, 0.0]],
    )
    .expect("irreducible chain");
    (cfg, markov)
}
