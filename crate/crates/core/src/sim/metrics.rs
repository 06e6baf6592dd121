use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::engine::Observer;
use crate::error::{Error, Result};
use crate::model::{Flows, HighwayConfig};

/// State after one step and the flows applied during it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub mode: usize,
    pub queues: Vec<f64>,
    pub densities: Vec<f64>,
    pub inflow: Vec<f64>,
    pub outflow: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// State before the first step; its flows are zero.
    pub initial: StepRecord,
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn new(initial: StepRecord) -> Self {
        Self {
            initial,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records that averages run over: every step, or the initial state for a
    /// zero-length run.
    pub fn samples(&self) -> &[StepRecord] {
        if self.records.is_empty() {
            std::slice::from_ref(&self.initial)
        } else {
            &self.records
        }
    }
}

impl Observer for Trajectory {
    fn observe(&mut self, step: usize, mode: usize, queues: &[f64], densities: &[f64], flows: &Flows) {
        self.records.push(StepRecord {
            step,
            mode,
            queues: queues.to_vec(),
            densities: densities.to_vec(),
            inflow: flows.inflow.clone(),
            outflow: flows.outflow.clone(),
        });
    }
}

/// Time-averaged total queue over the run.
pub fn time_avg_queue(traj: &Trajectory) -> f64 {
    let s = traj.samples();
    s.iter().map(|r| r.queues.iter().sum::<f64>()).sum::<f64>() / s.len() as f64
}

/// Vehicle hours in cells and buffers.
pub fn vht(traj: &Trajectory, cfg: &HighwayConfig, dt_hr: f64) -> f64 {
    traj.samples()
        .iter()
        .map(|r| vehicles(cfg, &r.queues, &r.densities))
        .sum::<f64>()
        * dt_hr
}

#[inline]
fn vehicles(cfg: &HighwayConfig, queues: &[f64], densities: &[f64]) -> f64 {
    let on_road: f64 = cfg
        .cells()
        .iter()
        .zip(densities)
        .map(|(c, n)| c.length_km * n)
        .sum();
    on_road + queues.iter().sum::<f64>()
}

/// Mean density per cell (rows) and time bin (columns).
pub fn density_map(traj: &Trajectory, dt_hr: f64, bin_minutes: f64) -> Result<Vec<Vec<f64>>> {
    let samples = traj.samples();
    let per_bin = bin_minutes / 60.0 / dt_hr;
    let bin_steps = per_bin.round() as usize;
    if !(bin_minutes > 0.0) || bin_steps == 0 || (per_bin - bin_steps as f64).abs() > 1e-6 {
        return Err(Error::validation("bin_minutes", "must be a positive multiple of the step"));
    }
    let bin_steps = bin_steps.min(samples.len());
    if !samples.len().is_multiple_of(bin_steps) {
        return Err(Error::validation("bin_minutes", "must divide the horizon"));
    }
    let cells = samples[0].densities.len();
    let bins = samples.len() / bin_steps;
    let mut map = vec![vec![0.0; bins]; cells];
    for (b, chunk) in samples.chunks(bin_steps).enumerate() {
        for r in chunk {
            for (k, &n) in r.densities.iter().enumerate() {
                map[k][b] += n;
            }
        }
        for row in map.iter_mut() {
            row[b] /= chunk.len() as f64;
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourMetrics {
    /// Hour index from the start of the run.
    pub hour: usize,
    pub time_avg_queue_veh: f64,
    pub vht_veh_hr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub time_avg_queue_veh: f64,
    pub vht_veh_hr: f64,
    /// Time-averaged queue per buffer.
    pub buffer_avg_queue_veh: Vec<f64>,
    pub hourly: Vec<HourMetrics>,
}

/// Streaming form of the metrics, fed step by step.
pub struct MetricsAccumulator {
    lengths: Vec<f64>,
    dt_hr: f64,
    steps: usize,
    queue_sum: Vec<f64>,
    vehicle_sum: f64,
    hour_queue: Vec<f64>,
    hour_vehicles: Vec<f64>,
    hour_steps: Vec<usize>,
    initial: (Vec<f64>, Vec<f64>),
}

impl MetricsAccumulator {
    pub fn new(cfg: &HighwayConfig, sim: &SimConfig) -> Self {
        let k = cfg.cell_count();
        Self {
            lengths: cfg.cells().iter().map(|c| c.length_km).collect(),
            dt_hr: sim.dt_hr,
            steps: 0,
            queue_sum: vec![0.0; k],
            vehicle_sum: 0.0,
            hour_queue: Vec::new(),
            hour_vehicles: Vec::new(),
            hour_steps: Vec::new(),
            initial: (
                sim.initial_state.queues_veh.clone(),
                sim.initial_state.densities_veh_per_km.clone(),
            ),
        }
    }

    fn push(&mut self, hour: usize, queues: &[f64], densities: &[f64]) {
        let mut total_q = 0.0;
        for (s, &q) in self.queue_sum.iter_mut().zip(queues) {
            *s += q;
            total_q += q;
        }
        let road: f64 = self.lengths.iter().zip(densities).map(|(l, n)| l * n).sum();
        self.vehicle_sum += road + total_q;
        if self.hour_steps.len() <= hour {
            self.hour_queue.resize(hour + 1, 0.0);
            self.hour_vehicles.resize(hour + 1, 0.0);
            self.hour_steps.resize(hour + 1, 0);
        }
        self.hour_queue[hour] += total_q;
        self.hour_vehicles[hour] += road + total_q;
        self.hour_steps[hour] += 1;
        self.steps += 1;
    }

    pub fn finish(mut self) -> Metrics {
        if self.steps == 0 {
            let (q, n) = std::mem::take(&mut self.initial);
            self.push(0, &q, &n);
        }
        let steps = self.steps as f64;
        let hourly = (0..self.hour_steps.len())
            .filter(|&h| self.hour_steps[h] > 0)
            .map(|h| HourMetrics {
                hour: h,
                time_avg_queue_veh: self.hour_queue[h] / self.hour_steps[h] as f64,
                vht_veh_hr: self.hour_vehicles[h] * self.dt_hr,
            })
            .collect();
        Metrics {
            time_avg_queue_veh: self.queue_sum.iter().sum::<f64>() / steps,
            vht_veh_hr: self.vehicle_sum * self.dt_hr,
            buffer_avg_queue_veh: self.queue_sum.iter().map(|s| s / steps).collect(),
            hourly,
        }
    }
}

impl Observer for MetricsAccumulator {
    #[inline]
    fn observe(&mut self, step: usize, _mode: usize, queues: &[f64], densities: &[f64], _flows: &Flows) {
        let hour = ((step - 1) as f64 * self.dt_hr + 1e-9).floor() as usize;
        self.push(hour, queues, densities);
    }
}

/// Metrics of a stored trajectory, identical to the streaming ones.
pub fn metrics_of(traj: &Trajectory, cfg: &HighwayConfig, sim: &SimConfig) -> Metrics {
    let mut acc = MetricsAccumulator::new(cfg, sim);
    for r in &traj.records {
        acc.observe(r.step, r.mode, &r.queues, &r.densities, &Flows::default());
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BufferParams, CellParams};

    fn record(step: usize, q: [f64; 2], n: [f64; 2]) -> StepRecord {
        StepRecord {
            step,
            mode: 0,
            queues: q.to_vec(),
            densities: n.to_vec(),
            inflow: vec![0.0; 2],
            outflow: vec![0.0; 2],
        }
    }

    fn traj(steps: usize, q: [f64; 2], n: [f64; 2]) -> Trajectory {
        let mut t = Trajectory::new(record(0, q, n));
        t.records = (1..=steps).map(|s| record(s, q, n)).collect();
        t
    }

    fn cfg() -> HighwayConfig {
        let cell = |l| CellParams {
            length_km: l,
            free_flow_speed_kmh: 100.0,
            congestion_wave_speed_kmh: 25.0,
            jam_density_veh_per_km: 200.0,
            mainline_ratio: 0.0,
        };
        let b = BufferParams { capacity_veh_per_hr: 1000.0, demand_veh_per_hr: 0.0 };
        let mut c = cell(2.0);
        c.mainline_ratio = 0.5;
        HighwayConfig::new(vec![c, cell(0.5)], vec![b, b]).unwrap()
    }

    #[test]
    fn queue_average_of_constant_run() {
        assert_eq!(time_avg_queue(&traj(10, [0.0, 0.0], [1.0, 1.0])), 0.0);
        assert_eq!(time_avg_queue(&traj(10, [1.0, 2.0], [1.0, 1.0])), 3.0);
    }

    #[test]
    fn vht_of_constant_run() {
        let dt = 1.0 / 360.0;
        assert_eq!(vht(&traj(7, [0.0, 0.0], [0.0, 0.0]), &cfg(), dt), 0.0);
        // 2 km * 4 + 0.5 km * 4 = 10 vehicles
        let h = vht(&traj(7, [0.0, 0.0], [4.0, 4.0]), &cfg(), dt);
        assert!((h - 10.0 * 7.0 * dt).abs() < 1e-12);
    }

    #[test]
    fn density_map_bins() {
        let dt = 1.0 / 60.0;
        let mut t = traj(4, [0.0, 0.0], [0.0, 0.0]);
        for (i, r) in t.records.iter_mut().enumerate() {
            r.densities = vec![i as f64, 10.0];
        }
        let map = density_map(&t, dt, 2.0).unwrap();
        assert_eq!(map, vec![vec![0.5, 2.5], vec![10.0, 10.0]]);
        let mean_bins: f64 = map[0].iter().sum::<f64>() / 2.0;
        assert_eq!(mean_bins, 1.5);
        assert!(density_map(&t, dt, 3.0).is_err());
        let single = traj(1, [0.0, 0.0], [3.0, 4.0]);
        assert_eq!(density_map(&single, dt, 1.0).unwrap(), vec![vec![3.0], vec![4.0]]);
    }
}
