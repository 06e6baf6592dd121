//! Brute-force references and instance generators shared by the integration
//! tests and the acceptance suite.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use ssctm_core::model::{
    density_bounds, AffineControlPolicy, BufferParams, CellParams, HighwayConfig, MarkovCapacityModel,
};
use ssctm_core::stability::scheme::weights;
use ssctm_core::stability::{
    congestion_set, corollary1_verdict, weighted_net_flow, DesignScheme, InnerOptions, NetFlowProblem, StateBox,
};
use ssctm_core::model::HybridState;

pub fn cell(v: f64, w: f64, jam: f64, beta: f64) -> CellParams {
    CellParams {
        length_km: 1.0,
        free_flow_speed_kmh: v,
        congestion_wave_speed_kmh: w,
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

fn policy(u: f64, kappa: f64) -> AffineControlPolicy {
    AffineControlPolicy::from_pairs(&[u], &[kappa]).unwrap()
}

/// Brute-force maximum over one box: a dense grid of about 10^5 points,
/// then repeated zooming around the best point found.
pub fn dense_box_max(bx: &StateBox, eval: &dyn Fn(&[f64]) -> f64) -> f64 {
    let free: Vec<usize> = (0..bx.cells.len()).filter(|&j| !bx.cells[j].is_pinned()).collect();
    let mut point: Vec<f64> = bx.cells.iter().map(|c| c.lo).collect();
    let mut lo: Vec<f64> = free.iter().map(|&j| bx.cells[j].lo).collect();
    let mut hi: Vec<f64> = free.iter().map(|&j| bx.cells[j].hi).collect();
    if free.is_empty() {
        return eval(&point);
    }
    let mut per_axis = (1e5f64.powf(1.0 / free.len() as f64)).ceil() as usize;
    let mut best = f64::NEG_INFINITY;
    let mut arg = point.clone();
    for _ in 0..40 {
        let total = per_axis.pow(free.len() as u32);
        for idx in 0..total {
            let mut rem = idx;
            for (a, &j) in free.iter().enumerate() {
                let i = rem % per_axis;
                rem /= per_axis;
                point[j] = lo[a] + (hi[a] - lo[a]) * i as f64 / (per_axis - 1) as f64;
            }
            let v = eval(&point);
            if v > best {
                best = v;
                arg.clone_from(&point);
            }
        }
        for (a, &j) in free.iter().enumerate() {
            let (l0, h0) = (bx.cells[j].lo, bx.cells[j].hi);
            let span = 2.0 * (hi[a] - lo[a]) / (per_axis - 1) as f64;
            lo[a] = (arg[j] - span).max(l0);
            hi[a] = (arg[j] + span).min(h0);
        }
        per_axis = 21;
    }
    best
}

/// Random two-cell instance with a random affine policy.
pub fn random_two_cell(rng: &mut ChaCha8Rng) -> (HighwayConfig, MarkovCapacityModel, AffineControlPolicy) {
    loop {
        let v = rng.gen_range(80.0..120.0);
        let w = rng.gen_range(15.0..30.0);
        let jam = [rng.gen_range(150.0..250.0), rng.gen_range(200.0..350.0)];
        let beta = rng.gen_range(0.5..0.95);
        let top = |j: f64| v * w * j / (v + w);
        let caps: Vec<Vec<f64>> = (0..2)
            .map(|_| vec![top(jam[0]) * rng.gen_range(0.6..1.0), top(jam[1]) * rng.gen_range(0.4..1.0)])
            .collect();
        let u1 = rng.gen_range(3000.0..6000.0);
        let u2 = rng.gen_range(600.0..1800.0);
        let cfg = HighwayConfig::new(
            vec![cell(v, w, jam[0], beta), cell(v, w, jam[1], 0.0)],
            vec![buffer(u1, u1 * rng.gen_range(0.5..1.0)), buffer(u2, u2 * rng.gen_range(0.1..0.9))],
        )
        .unwrap();
        let rate = [rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0)];
        let markov = MarkovCapacityModel::new(caps, vec![vec![0.0, rate[0]], vec![rate[1], 0.0]]).unwrap();
        let p = policy(rng.gen_range(2500.0..6000.0), rng.gen_range(0.0..50.0));
        let Ok(bounds) = density_bounds(&cfg, &markov, &p) else { continue };
        if weights(DesignScheme::Localized, 0, &bounds).is_ok() {
            return (cfg, markov, p);
        }
    }
}

/// Worst relative gap between the exact inner maximum and the dense grid,
/// over every buffer and mode of a two-cell instance.
pub fn inner_oracle_gap(cfg: &HighwayConfig, markov: &MarkovCapacityModel, p: &AffineControlPolicy) -> f64 {
    let bounds = density_bounds(cfg, markov, p).unwrap();
    let opts = InnerOptions::default();
    let mut worst = 0.0f64;
    for k in 0..2 {
        let w = weights(DesignScheme::Localized, k, &bounds).unwrap();
        let set = congestion_set(DesignScheme::Localized, k, &bounds);
        for s in 0..markov.mode_count() {
            let exact = NetFlowProblem::new(cfg, markov, p, s, k, w.clone()).maximize(&set, &opts).unwrap().value;
            let oracle = set
                .boxes()
                .iter()
                .map(|bx| {
                    let queues: Vec<f64> = bx.cells.iter().map(|c| f64::from(u8::from(c.queued))).collect();
                    dense_box_max(bx, &|n: &[f64]| {
                        let state = HybridState::new(s, queues.clone(), n.to_vec());
                        weighted_net_flow(DesignScheme::Localized, k, &state, p, cfg, markov, &bounds).unwrap()
                    })
                })
                .fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max((exact - oracle).abs() / exact.abs().max(1.0));
        }
    }
    worst
}

/// Random decoupled two-cell section with cell 2 as the bottleneck, drawn
/// until the special case applies.
pub fn applicable_two_cell(rng: &mut ChaCha8Rng) -> (HighwayConfig, MarkovCapacityModel, AffineControlPolicy) {
    loop {
        let (v, w) = (100.0, 25.0);
        let beta: f64 = rng.gen_range(0.4..0.7);
        let jam = [rng.gen_range(250.0..400.0), rng.gen_range(350.0..450.0)];
        let f1: [f64; 2] = [rng.gen_range(3000.0..4500.0), rng.gen_range(3000.0..4500.0)];
        let f1max = f1[0].max(f1[1]);
        let f1min = f1[0].min(f1[1]);
        let f2min = beta * f1max + rng.gen_range(0.0..800.0);
        let f2 = [f2min, f2min * rng.gen_range(1.0..1.1)];
        let u1 = f1max * rng.gen_range(1.0..1.2);
        let mean1: f64 = 0.5 * (f1[0] + f1[1]);
        let a1 = (f1min * rng.gen_range(0.6..1.0) + (mean1 - f1min) * rng.gen_range(0.0..1.5)).min(u1);
        let a2 = (f2[1] - beta * f1min).max(0.0) + rng.gen_range(0.0..300.0);
        let u2 = a2 * rng.gen_range(1.0..1.8);
        let kappa = rng.gen_range(2.0..20.0);
        let crit2 = f2[1] / v;
        let u = rng.gen_range(0.0..1.0) * (u2 + kappa * crit2) + kappa * crit2;
        let flip = rng.gen_bool(0.5);
        let rates = [rng.gen_range(0.2..3.0), rng.gen_range(0.2..3.0)];
        let Ok(cfg) = HighwayConfig::new(
            vec![cell(v, w, jam[0], beta), cell(v, w, jam[1], 0.0)],
            vec![buffer(u1, a1), buffer(u2, a2)],
        ) else {
            continue;
        };
        let caps = if flip {
            vec![vec![f1[0], f2[1]], vec![f1[1], f2[0]]]
        } else {
            vec![vec![f1[0], f2[0]], vec![f1[1], f2[1]]]
        };
        let markov = MarkovCapacityModel::new(caps, vec![vec![0.0, rates[0]], vec![rates[1], 0.0]]).unwrap();
        if markov.check_against(&cfg).is_err() || u <= 0.0 {
            continue;
        }
        let p = policy(u, kappa);
        if matches!(corollary1_verdict(&cfg, &markov, &p), Ok(c) if c.applicable) {
            return (cfg, markov, p);
        }
    }
}

/// Largest violation of the offset equations, computed from the definition.
pub fn offset_residual(z: &[Vec<f64>], rates: &[Vec<f64>], p: &[f64], b: &[Vec<f64>]) -> f64 {
    let m = rates.len();
    let mut worst = 0.0f64;
    for k in 0..z[0].len() {
        let mean: f64 = (0..m).map(|t| p[t] * z[t][k]).sum();
        for s in 0..m {
            let jump: f64 = (0..m).map(|t| rates[s][t] * (b[t][k] - b[s][k])).sum();
            worst = worst.max((z[s][k] + jump - mean).abs());
        }
    }
    worst
}
