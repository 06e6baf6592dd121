use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baseline::{update_rates, BaselineSpec};
use super::config::{next_mode, ModePath, SimConfig};
use super::metrics::{Metrics, MetricsAccumulator, StepRecord, Trajectory};
use crate::error::{Error, Result};
use crate::model::flow::{flows_with_supply, Flows};
use crate::model::{AffineControlPolicy, HighwayConfig, HybridState, MarkovCapacityModel, Metering};

/// How on-ramps are metered during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Strategy {
    NoControl,
    Affine { policy: AffineControlPolicy },
    /// Affine policies switched at the given steps (sorted by start step).
    AffineSchedule { schedule: Vec<(usize, AffineControlPolicy)> },
    Baseline { spec: BaselineSpec },
}

impl Strategy {
    pub fn affine(policy: AffineControlPolicy) -> Self {
        Self::Affine { policy }
    }

    pub fn label(&self) -> String {
        match self {
            Self::NoControl => "no_control".into(),
            Self::Affine { .. } => "affine".into(),
            Self::AffineSchedule { .. } => "affine_schedule".into(),
            Self::Baseline { spec } => spec.name().into(),
        }
    }

    pub fn validate(&self, cfg: &HighwayConfig) -> Result<()> {
        let k = cfg.cell_count();
        let check = |p: &AffineControlPolicy| {
            if p.cell_count() != k {
                Err(Error::validation("policy", format!("built for {} cells, highway has {k}", p.cell_count())))
            } else {
                Ok(())
            }
        };
        match self {
            Self::NoControl => Ok(()),
            Self::Affine { policy } => check(policy),
            Self::AffineSchedule { schedule } => {
                if schedule.is_empty() {
                    return Err(Error::validation("policy schedule", "must not be empty"));
                }
                if schedule.windows(2).any(|w| w[1].0 < w[0].0) {
                    return Err(Error::validation("policy schedule", "must be sorted by start step"));
                }
                schedule.iter().try_for_each(|(_, p)| check(p))
            }
            Self::Baseline { spec } => spec.validate(cfg),
        }
    }
}

/// Per-run controller memory.
struct Controller<'a> {
    strategy: &'a Strategy,
    schedule_pos: usize,
    mu: Vec<f64>,
    prev_density: Vec<f64>,
    upper: Vec<f64>,
}

impl<'a> Controller<'a> {
    fn new(strategy: &'a Strategy, cfg: &HighwayConfig, initial: &[f64]) -> Self {
        let upper: Vec<f64> = (1..cfg.cell_count())
            .map(|k| cfg.buffer(k).capacity_veh_per_hr)
            .collect();
        Self {
            strategy,
            schedule_pos: 0,
            mu: upper.clone(),
            prev_density: initial.to_vec(),
            upper,
        }
    }

    /// Writes metering rates for ramps `1..K` into `out` (`None` = unmetered).
    fn rates(&mut self, step: usize, density: &[f64], out: &mut [Option<f64>]) {
        out[0] = None;
        match self.strategy {
            Strategy::NoControl => out[1..].fill(None),
            Strategy::Affine { policy } => affine_rates(policy, density, out),
            Strategy::AffineSchedule { schedule } => {
                while self.schedule_pos + 1 < schedule.len() && schedule[self.schedule_pos + 1].0 <= step {
                    self.schedule_pos += 1;
                }
                affine_rates(&schedule[self.schedule_pos].1, density, out);
            }
            Strategy::Baseline { spec } => {
                if step.is_multiple_of(spec.update_period_steps) {
                    update_rates(spec, &mut self.mu, density, &self.prev_density, &self.upper);
                    self.prev_density.copy_from_slice(density);
                }
                for (o, &m) in out[1..].iter_mut().zip(&self.mu) {
                    *o = Some(m);
                }
            }
        }
    }
}

#[inline]
fn affine_rates(policy: &AffineControlPolicy, density: &[f64], out: &mut [Option<f64>]) {
    for (k, o) in out.iter_mut().enumerate().skip(1) {
        *o = policy.metering_rate(k, density[k]);
    }
}

/// Reusable per-run buffers.
struct Workspace {
    supply: Vec<f64>,
    rates: Vec<Option<f64>>,
    flows: Flows,
}

impl Workspace {
    fn new(cells: usize) -> Self {
        Self {
            supply: vec![0.0; cells],
            rates: vec![None; cells],
            flows: Flows::zeros(cells),
        }
    }
}

/// One Euler step of queues and densities in place, using `ws.rates` as the
/// metering rates. A queue releases at most what it holds plus its arrivals.
#[inline]
#[allow(clippy::too_many_arguments)]
fn euler(
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    mode: usize,
    dt: f64,
    bypass: Option<&[f64]>,
    q: &mut [f64],
    n: &mut [f64],
    ws: &mut Workspace,
) {
    let k_total = q.len();
    for k in 0..k_total {
        let b = cfg.buffer(k);
        ws.supply[k] = if q[k] > 0.0 {
            b.capacity_veh_per_hr.min(b.demand_veh_per_hr + q[k] / dt)
        } else {
            b.demand_veh_per_hr
        };
        if let Some(th) = bypass {
            if q[k] > th[k] {
                ws.rates[k] = None;
            }
        }
    }
    flows_with_supply(cfg, markov, mode, &ws.supply, n, &ws.rates, &mut ws.flows);
    let fl = &ws.flows;
    for k in 0..k_total {
        let c = cfg.cell(k);
        let arrivals = cfg.buffer(k).demand_veh_per_hr;
        // A buffer that released everything it held ends exactly empty
        // rather than with a rounding residue that still counts as a queue.
        let drained = q[k] > 0.0 && fl.inflow[k] >= arrivals + q[k] / dt;
        q[k] = if drained { 0.0 } else { (q[k] + dt * (arrivals - fl.inflow[k])).max(0.0) };
        let upstream = if k == 0 { 0.0 } else { cfg.cell(k - 1).mainline_ratio * fl.outflow[k - 1] };
        let h = (upstream + fl.inflow[k] - fl.outflow[k]) / c.length_km;
        n[k] = (n[k] + dt * h).clamp(0.0, c.jam_density_veh_per_km);
    }
}

/// One step of the hybrid process under a fixed metering policy, drawing the
/// next mode from `rng`.
pub fn step<M: Metering, R: Rng + ?Sized>(
    state: &HybridState,
    metering: &M,
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    sim: &SimConfig,
    rng: &mut R,
) -> HybridState {
    let k_total = cfg.cell_count();
    let mut ws = Workspace::new(k_total);
    let mut q = state.queues_veh.clone();
    let mut n = state.densities_veh_per_km.clone();
    for k in 1..k_total {
        ws.rates[k] = metering.metering_rate(k, n[k]);
    }
    let th = sim.queue_thresholds(k_total);
    euler(cfg, markov, state.mode, sim.dt_hr, th.as_deref(), &mut q, &mut n, &mut ws);
    let mode = next_mode(markov.rates(), state.mode, sim.dt_hr, rng.gen::<f64>());
    HybridState::new(mode, q, n)
}

/// Receives the state after every step together with the flows applied in it.
pub trait Observer {
    fn observe(&mut self, step: usize, mode: usize, queues: &[f64], densities: &[f64], flows: &Flows);
}

/// Runs `sim.horizon_steps` steps along a pre-sampled mode path. Step `t`
/// (1-based) is reported after it is applied.
pub fn run_with<O: Observer>(
    strategy: &Strategy,
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    sim: &SimConfig,
    path: &ModePath,
    observer: &mut O,
) -> Result<()> {
    sim.validate(cfg, markov)?;
    strategy.validate(cfg)?;
    if path.len() < sim.horizon_steps + 1 {
        return Err(Error::validation("mode path", "shorter than the horizon"));
    }
    let k_total = cfg.cell_count();
    let mut cfg_now = cfg.clone();
    let mut next_override = 0;
    let mut q = sim.initial_state.queues_veh.clone();
    let mut n = sim.initial_state.densities_veh_per_km.clone();
    let mut ctrl = Controller::new(strategy, cfg, &n);
    let mut ws = Workspace::new(k_total);
    let th = sim.queue_thresholds(k_total);
    for t in 0..sim.horizon_steps {
        while next_override < sim.demand_schedule.len() && sim.demand_schedule[next_override].start_step <= t {
            cfg_now = cfg.with_demands(&sim.demand_schedule[next_override].demand_veh_per_hr)?;
            next_override += 1;
        }
        if sim.controlled_at(t) {
            ctrl.rates(t, &n, &mut ws.rates);
        } else {
            ws.rates.fill(None);
        }
        euler(&cfg_now, markov, path.at(t), sim.dt_hr, th.as_deref(), &mut q, &mut n, &mut ws);
        observer.observe(t + 1, path.at(t + 1), &q, &n, &ws.flows);
    }
    Ok(())
}

/// Full trajectory of one run; the mode path is drawn from `sim.seed`.
pub fn simulate(
    strategy: &Strategy,
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    sim: &SimConfig,
) -> Result<Trajectory> {
    let path = sample_path(markov, sim, 0);
    simulate_on(strategy, cfg, markov, sim, &path)
}

pub fn simulate_on(
    strategy: &Strategy,
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    sim: &SimConfig,
    path: &ModePath,
) -> Result<Trajectory> {
    let s0 = &sim.initial_state;
    let mut traj = Trajectory::new(StepRecord {
        step: 0,
        mode: s0.mode,
        queues: s0.queues_veh.clone(),
        densities: s0.densities_veh_per_km.clone(),
        inflow: vec![0.0; cfg.cell_count()],
        outflow: vec![0.0; cfg.cell_count()],
    });
    traj.records.reserve(sim.horizon_steps);
    run_with(strategy, cfg, markov, sim, path, &mut traj)?;
    Ok(traj)
}

/// Metrics of one run without storing the trajectory.
pub fn run_metrics(
    strategy: &Strategy,
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    sim: &SimConfig,
    path: &ModePath,
) -> Result<Metrics> {
    let mut acc = MetricsAccumulator::new(cfg, sim);
    run_with(strategy, cfg, markov, sim, path, &mut acc)?;
    Ok(acc.finish())
}

/// Mode path of replication `replication` under `sim.seed`.
pub fn sample_path(markov: &MarkovCapacityModel, sim: &SimConfig, replication: u64) -> ModePath {
    ModePath::sample(
        markov,
        sim.dt_hr,
        sim.horizon_steps,
        sim.initial_state.mode,
        sim.seed,
        replication,
    )
}

/// Metrics of `replications` independent runs, in replication order.
pub fn replicate_metrics(
    strategy: &Strategy,
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    sim: &SimConfig,
    replications: usize,
) -> Result<Vec<Metrics>> {
    (0..replications as u64)
        .into_par_iter()
        .map(|r| run_metrics(strategy, cfg, markov, sim, &sample_path(markov, sim, r)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BufferParams, CellParams, Unmetered};
    use crate::sim::metrics::time_avg_queue;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table_one(alpha: [f64; 2]) -> (HighwayConfig, MarkovCapacityModel) {
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
                BufferParams { capacity_veh_per_hr: 4000.0, demand_veh_per_hr: alpha[0] },
                BufferParams { capacity_veh_per_hr: 1200.0, demand_veh_per_hr: alpha[1] },
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
    fn empty_road_without_demand_stays_empty() {
        let (cfg, markov) = table_one([0.0, 0.0]);
        let sim = SimConfig::ten_seconds(1, 1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = HybridState::empty(2);
        let next = step(&s, &Unmetered, &cfg, &markov, &sim, &mut rng);
        assert_eq!(next.queues_veh, s.queues_veh);
        assert_eq!(next.densities_veh_per_km, s.densities_veh_per_km);
    }

    #[test]
    fn free_flow_equilibrium_is_nearly_stationary() {
        // 3500 in, 35*100 out of cell 1; 0.75*3500 + 600 = 60*100*... cell 2 holds 3225/100.
        let (cfg, _) = table_one([3500.0, 600.0]);
        let markov = MarkovCapacityModel::single_mode(vec![4000.0, 6000.0]).unwrap();
        let sim = SimConfig::ten_seconds(1, 1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = HybridState::new(0, vec![0.0, 0.0], vec![35.0, 32.25]);
        let next = step(&s, &Unmetered, &cfg, &markov, &sim, &mut rng);
        for (a, b) in next.densities_veh_per_km.iter().zip(&s.densities_veh_per_km) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_horizon_keeps_only_the_initial_state() {
        let (cfg, markov) = table_one([3500.0, 600.0]);
        let mut sim = SimConfig::ten_seconds(0, 1, 2);
        sim.initial_state.queues_veh = vec![1.0, 2.0];
        let t = simulate(&Strategy::NoControl, &cfg, &markov, &sim).unwrap();
        assert!(t.is_empty());
        assert_eq!(time_avg_queue(&t), 3.0);
    }

    #[test]
    fn same_seed_gives_identical_trajectories() {
        let (cfg, markov) = table_one([3500.0, 600.0]);
        let sim = SimConfig::ten_seconds(5_000, 42, 2);
        let p = AffineControlPolicy::from_pairs(&[4750.0], &[25.0]).unwrap();
        let a = simulate(&Strategy::affine(p.clone()), &cfg, &markov, &sim).unwrap();
        let b = simulate(&Strategy::affine(p), &cfg, &markov, &sim).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5_000);
    }

    #[test]
    fn streaming_metrics_match_stored_trajectory() {
        let (cfg, markov) = table_one([3500.0, 600.0]);
        let sim = SimConfig::ten_seconds(2_000, 3, 2);
        let path = sample_path(&markov, &sim, 0);
        let t = simulate_on(&Strategy::NoControl, &cfg, &markov, &sim, &path).unwrap();
        let m = run_metrics(&Strategy::NoControl, &cfg, &markov, &sim, &path).unwrap();
        assert_eq!(m, crate::sim::metrics::metrics_of(&t, &cfg, &sim));
        assert!((m.time_avg_queue_veh - time_avg_queue(&t)).abs() < 1e-9);
    }

    #[test]
    fn vehicles_are_conserved() {
        let (cfg, markov) = table_one([3700.0, 900.0]);
        let sim = SimConfig::ten_seconds(3_000, 9, 2);
        let p = AffineControlPolicy::from_pairs(&[4000.0], &[20.0]).unwrap();
        let t = simulate(&Strategy::affine(p), &cfg, &markov, &sim).unwrap();
        let mut prev = &t.initial;
        for r in &t.records {
            let stock = |r: &crate::sim::StepRecord| r.queues.iter().sum::<f64>() + r.densities.iter().sum::<f64>();
            let exits = (1.0 - 0.75) * r.outflow[0] + r.outflow[1];
            let expected = stock(prev) + sim.dt_hr * (3700.0 + 900.0 - exits);
            assert!((stock(r) - expected).abs() < 1e-8, "step {}", r.step);
            prev = r;
        }
    }

    #[test]
    fn queue_cap_disables_metering() {
        let (cfg, markov) = table_one([3500.0, 1000.0]);
        let mut sim = SimConfig::ten_seconds(1, 1, 2);
        sim.queue_cap_veh_per_lane = Some(40.0);
        sim.lanes_per_ramp = Some(vec![1, 1]);
        sim.initial_state = HybridState::new(0, vec![0.0, 50.0], vec![35.0, 40.0]);
        let strict = Strategy::affine(AffineControlPolicy::from_pairs(&[100.0], &[0.0]).unwrap());
        let t = simulate(&strict, &cfg, &markov, &sim).unwrap();
        assert_eq!(t.records[0].inflow[1], 1200.0);
        sim.initial_state.queues_veh[1] = 30.0;
        let t = simulate(&strict, &cfg, &markov, &sim).unwrap();
        assert_eq!(t.records[0].inflow[1], 100.0);
    }

    #[test]
    fn demand_schedule_switches_inflow() {
        let (cfg, markov) = table_one([3500.0, 600.0]);
        let mut sim = SimConfig::ten_seconds(4, 1, 2);
        sim.demand_schedule = vec![crate::sim::DemandOverride {
            start_step: 2,
            demand_veh_per_hr: vec![1000.0, 100.0],
        }];
        let t = simulate(&Strategy::NoControl, &cfg, &markov, &sim).unwrap();
        assert_eq!(t.records[1].inflow[0], 3500.0);
        assert_eq!(t.records[2].inflow[0], 1000.0);
    }

    #[test]
    fn coarse_step_is_rejected() {
        let (cfg, markov) = table_one([3500.0, 600.0]);
        let sim = SimConfig::new(2.0, 10, 1, HybridState::empty(2));
        assert!(simulate(&Strategy::NoControl, &cfg, &markov, &sim).is_err());
    }
}
