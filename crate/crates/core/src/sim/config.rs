use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HighwayConfig, HybridState, MarkovCapacityModel};

/// Name of the generator behind every sampled path, for run metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.3), stream = replication index";

/// Demand vector that takes effect from `start_step` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandOverride {
    pub start_step: usize,
    pub demand_veh_per_hr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt_hr: f64,
    pub horizon_steps: usize,
    pub seed: u64,
    /// Metering is bypassed on a ramp whose queue exceeds this many vehicles per lane.
    pub queue_cap_veh_per_lane: Option<f64>,
    pub lanes_per_ramp: Option<Vec<u32>>,
    pub initial_state: HybridState,
    /// Sorted by `start_step`.
    pub demand_schedule: Vec<DemandOverride>,
    /// Steps `[start, end)` during which ramps are metered; always if `None`.
    pub control_window: Option<(usize, usize)>,
}

impl SimConfig {
    pub fn new(dt_hr: f64, horizon_steps: usize, seed: u64, initial_state: HybridState) -> Self {
        Self {
            dt_hr,
            horizon_steps,
            seed,
            queue_cap_veh_per_lane: None,
            lanes_per_ramp: None,
            initial_state,
            demand_schedule: Vec::new(),
            control_window: None,
        }
    }

    /// Ten-second steps, empty highway in mode 1.
    pub fn ten_seconds(horizon_steps: usize, seed: u64, cells: usize) -> Self {
        Self::new(10.0 / 3600.0, horizon_steps, seed, HybridState::empty(cells))
    }

    pub fn validate(&self, cfg: &HighwayConfig, markov: &MarkovCapacityModel) -> Result<()> {
        if !(self.dt_hr.is_finite() && self.dt_hr > 0.0) {
            return Err(Error::validation("dt", "must be finite and > 0"));
        }
        let fastest = (0..markov.mode_count())
            .map(|s| markov.exit_rate(s))
            .fold(0.0, f64::max);
        if self.dt_hr * fastest >= 1.0 {
            return Err(Error::validation(
                "dt",
                format!("dt * max exit rate = {} must be < 1", self.dt_hr * fastest),
            ));
        }
        self.initial_state.validate(cfg, markov.mode_count())?;
        let k = cfg.cell_count();
        if let Some(c) = self.queue_cap_veh_per_lane {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::validation("queue_cap", "must be finite and > 0"));
            }
        }
        if let Some(l) = &self.lanes_per_ramp {
            if l.len() != k || l.contains(&0) {
                return Err(Error::validation("lanes", format!("need {k} positive entries")));
            }
        }
        let mut last = None;
        for d in &self.demand_schedule {
            if d.demand_veh_per_hr.len() != k {
                return Err(Error::validation("demand schedule", format!("rows need {k} entries")));
            }
            if last.is_some_and(|l| d.start_step < l) {
                return Err(Error::validation("demand schedule", "rows must be sorted by start"));
            }
            last = Some(d.start_step);
            cfg.with_demands(&d.demand_veh_per_hr)?;
        }
        Ok(())
    }

    /// Per-ramp vehicle threshold for the metering bypass.
    pub fn queue_thresholds(&self, cells: usize) -> Option<Vec<f64>> {
        self.queue_cap_veh_per_lane.map(|cap| {
            (0..cells)
                .map(|k| {
                    let lanes = self.lanes_per_ramp.as_ref().map_or(1, |l| l[k]);
                    cap * f64::from(lanes)
                })
                .collect()
        })
    }

    pub fn controlled_at(&self, step: usize) -> bool {
        self.control_window
            .is_none_or(|(a, b)| step >= a && step < b)
    }
}

/// Pre-sampled capacity modes, one per step start plus the final state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePath {
    modes: Vec<u16>,
}

impl ModePath {
    /// At most one transition per step, to `t` with probability `rate[s][t] * dt`.
    pub fn sample(
        markov: &MarkovCapacityModel,
        dt_hr: f64,
        steps: usize,
        initial_mode: usize,
        seed: u64,
        stream: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let rates = markov.rates();
        let mut modes = Vec::with_capacity(steps + 1);
        let mut s = initial_mode;
        modes.push(s as u16);
        for _ in 0..steps {
            s = next_mode(rates, s, dt_hr, rng.gen::<f64>());
            modes.push(s as u16);
        }
        Self { modes }
    }

    pub fn constant(mode: usize, steps: usize) -> Self {
        Self {
            modes: vec![mode as u16; steps + 1],
        }
    }

    #[inline]
    pub fn at(&self, step: usize) -> usize {
        self.modes[step] as usize
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> impl Iterator<Item = usize> + '_ {
        self.modes.iter().map(|&m| m as usize)
    }
}

/// Mode after one step from `s` given a uniform draw.
#[inline]
pub fn next_mode(rates: &[Vec<f64>], s: usize, dt_hr: f64, draw: f64) -> usize {
    let mut acc = 0.0;
    for (t, &r) in rates[s].iter().enumerate() {
        acc += r * dt_hr;
        if draw < acc {
            return t;
        }
    }
    s
}
