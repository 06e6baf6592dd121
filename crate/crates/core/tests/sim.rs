mod common;

use approx::assert_abs_diff_eq;
use common::{arb_highway, buffer, cell, table_one, two_cell};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssctm_core::model::{
    density_bounds, AffineControlPolicy, Flows, HighwayConfig, HybridState, MarkovCapacityModel,
};
use ssctm_core::sim::{
    density_map, run_with, sample_path, simulate, simulate_on, step, time_avg_queue, vht, ModePath,
    Observer, SimConfig, StepRecord, Strategy, Trajectory,
};
use ssctm_core::stability::invariant_set;
use statrs::distribution::{ContinuousCDF, StudentsT};

const DT: f64 = 10.0 / 3600.0;

fn table_one_policy(kappa: f64) -> Strategy {
    Strategy::affine(AffineControlPolicy::from_pairs(&[4750.0], &[kappa]).unwrap())
}

fn record(step: usize, queues: Vec<f64>, densities: Vec<f64>) -> StepRecord {
    let k = queues.len();
    StepRecord { step, mode: 0, queues, densities, inflow: vec![0.0; k], outflow: vec![0.0; k] }
}

struct BoundsCheck<'a> {
    cfg: &'a HighwayConfig,
    worst: f64,
}

impl Observer for BoundsCheck<'_> {
    fn observe(&mut self, _step: usize, _mode: usize, queues: &[f64], densities: &[f64], _flows: &Flows) {
        for (k, (&q, &n)) in queues.iter().zip(densities).enumerate() {
            let jam = self.cfg.cell(k).jam_density_veh_per_km;
            let bad = (-q).max(-n).max(n - jam).max(0.0);
            self.worst = self.worst.max(if q.is_finite() && n.is_finite() { bad } else { f64::INFINITY });
        }
    }
}

#[test]
fn zero_demand_empty_highway_is_fixed() {
    let (cfg, markov) = two_cell(0.0, 0.0);
    let sim = SimConfig::ten_seconds(1, 1, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s0 = HybridState::empty(2);
    let s1 = step(&s0, &ssctm_core::model::Unmetered, &cfg, &markov, &sim, &mut rng);
    assert_eq!(s1.queues_veh, s0.queues_veh);
    assert_eq!(s1.densities_veh_per_km, s0.densities_veh_per_km);
}

#[test]
fn free_flow_equilibrium_is_stationary() {
    let (cfg, _) = table_one();
    let markov = MarkovCapacityModel::single_mode(vec![4000.0, 6000.0]).unwrap();
    let mut sim = SimConfig::ten_seconds(100, 1, 2);
    sim.initial_state = HybridState::new(0, vec![0.0, 0.0], vec![35.0, 32.25]);
    let traj = simulate(&table_one_policy(25.0), &cfg, &markov, &sim).unwrap();
    for r in &traj.records {
        assert_eq!(r.queues, vec![0.0, 0.0]);
        assert_abs_diff_eq!(r.densities[0], 35.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.densities[1], 32.25, epsilon = 1e-9);
    }
}

#[test]
fn zero_horizon_keeps_only_the_initial_state() {
    let (cfg, markov) = table_one();
    let mut sim = SimConfig::ten_seconds(0, 3, 2);
    sim.initial_state = HybridState::new(1, vec![2.0, 1.0], vec![40.0, 50.0]);
    let traj = simulate(&table_one_policy(25.0), &cfg, &markov, &sim).unwrap();
    assert!(traj.is_empty());
    assert_eq!(traj.samples().len(), 1);
    assert_eq!(time_avg_queue(&traj), 3.0);
}

#[test]
fn same_seed_same_trajectory() {
    let (cfg, markov) = table_one();
    let sim = SimConfig::ten_seconds(20_000, 11, 2);
    let a = simulate(&table_one_policy(25.0), &cfg, &markov, &sim).unwrap();
    let b = simulate(&table_one_policy(25.0), &cfg, &markov, &sim).unwrap();
    assert_eq!(a, b);
    let other = SimConfig { seed: 12, ..sim };
    assert_ne!(a, simulate(&table_one_policy(25.0), &cfg, &markov, &other).unwrap());
}

#[test]
fn queue_and_vht_hand_cases() {
    let cfg = HighwayConfig::new(vec![cell(200.0, 0.5), cell(300.0, 0.0)], vec![buffer(1.0, 0.0); 2]).unwrap();
    let mut t = Trajectory::new(record(0, vec![0.0; 2], vec![0.0; 2]));
    assert_eq!(time_avg_queue(&t), 0.0);
    assert_eq!(vht(&t, &cfg, DT), 0.0);
    for s in 1..=50 {
        t.records.push(record(s, vec![1.0, 2.0], vec![4.0, 6.0]));
    }
    assert_eq!(time_avg_queue(&t), 3.0);
    // 10 vehicles on the road plus 3 queued, for 50 steps.
    assert_abs_diff_eq!(vht(&t, &cfg, DT), 13.0 * 50.0 * DT, epsilon = 1e-12);
}

#[test]
fn density_map_aggregates() {
    let single = Trajectory {
        initial: record(0, vec![0.0; 2], vec![0.0; 2]),
        records: vec![record(1, vec![0.0; 2], vec![12.0, 34.0])],
    };
    assert_eq!(density_map(&single, 1.0 / 60.0, 1.0).unwrap(), vec![vec![12.0], vec![34.0]]);

    let (cfg, markov) = table_one();
    let sim = SimConfig::ten_seconds(360, 5, 2);
    let traj = simulate(&table_one_policy(25.0), &cfg, &markov, &sim).unwrap();
    let map = density_map(&traj, DT, 5.0).unwrap();
    assert_eq!(map[0].len(), 12);
    for k in 0..2 {
        let direct = traj.records.iter().map(|r| r.densities[k]).sum::<f64>() / 360.0;
        let binned = map[k].iter().sum::<f64>() / 12.0;
        assert_abs_diff_eq!(direct, binned, epsilon = 1e-9);
    }

    let flat = Trajectory {
        initial: record(0, vec![0.0; 2], vec![0.0; 2]),
        records: (1..=60).map(|s| record(s, vec![0.0; 2], vec![7.0, 9.0])).collect(),
    };
    let map = density_map(&flat, DT, 1.0).unwrap();
    assert!(map[0].iter().all(|&x| x == 7.0) && map[1].iter().all(|&x| x == 9.0));
}

#[test]
fn mode_occupancy_matches_steady_state() {
    let (_, markov) = table_one();
    let steps = 1_000_000;
    let path = ModePath::sample(&markov, DT, steps, 0, 2024, 0);
    let in_second = path.modes().skip(1).filter(|&s| s == 1).count() as f64;
    let p = markov.steady_state()[1];
    // Occupancy samples are serially correlated; the binomial variance is
    // inflated by (1 + rho) / (1 - rho) with rho = 1 - (a + b).
    let (a, b) = (0.9 * DT, 0.9 * DT);
    let rho = 1.0 - a - b;
    let sigma = (p * (1.0 - p) / steps as f64 * (1.0 + rho) / (1.0 - rho)).sqrt();
    let freq = in_second / steps as f64;
    assert!((freq - p).abs() < 3.0 * sigma, "occupancy {freq} vs {p} (sigma {sigma})");
}

#[test]
fn switching_frequency_is_rate_times_step() {
    let (_, markov) = table_one();
    let path = ModePath::sample(&markov, DT, 1_000_000, 0, 99, 3);
    let modes: Vec<usize> = path.modes().collect();
    let (mut trials, mut moves) = (0.0, 0.0);
    for w in modes.windows(2) {
        if w[0] == 0 {
            trials += 1.0;
            if w[1] == 1 {
                moves += 1.0;
            }
        }
    }
    let p = 0.9 * DT;
    assert_abs_diff_eq!(p, 0.0025, epsilon = 1e-15);
    let sigma = (p * (1.0 - p) / trials).sqrt();
    assert!((moves / trials - p).abs() < 3.0 * sigma, "{} vs {p}", moves / trials);
}

#[test]
fn overloaded_mainline_queue_grows() {
    // Mainline demand above the mean capacity of cell 1.
    let cfg = HighwayConfig::new(
        vec![cell(200.0, 0.75), cell(300.0, 0.0)],
        vec![buffer(5000.0, 4300.0), buffer(1200.0, 600.0)],
    )
    .unwrap();
    let (_, markov) = table_one();
    assert!(4300.0 > markov.mean_capacity(0));
    let sim = SimConfig::ten_seconds(100_000, 8, 2);
    let traj = simulate(&table_one_policy(25.0), &cfg, &markov, &sim).unwrap();
    let pts: Vec<(f64, f64)> = traj
        .records
        .iter()
        .step_by(100)
        .map(|r| (r.step as f64 * DT, r.queues.iter().sum()))
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    let sse: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let se = (sse / (n - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, n - 2.0).unwrap();
    let p_value = 1.0 - t.cdf(slope / se);
    assert!(slope > 0.0 && p_value < 0.01, "slope {slope} veh/hr, p {p_value}");
}

#[test]
fn replications_agree_on_long_run_queue() {
    let (cfg, markov) = table_one();
    let strat = table_one_policy(24.0);
    let sim = SimConfig::ten_seconds(1_000_000, 7, 2);
    let single = time_avg_queue(&simulate(&strat, &cfg, &markov, &sim).unwrap());
    let reps: Vec<f64> = (1..=10)
        .map(|r| time_avg_queue(&simulate_on(&strat, &cfg, &markov, &sim, &sample_path(&markov, &sim, r)).unwrap()))
        .collect();
    let mean = reps.iter().sum::<f64>() / reps.len() as f64;
    assert!((single - mean).abs() <= 0.15 * mean, "single run {single}, replicated mean {mean}");
}

#[test]
fn runs_stay_in_the_invariant_set() {
    let (cfg, markov) = table_one();
    let policy = AffineControlPolicy::from_pairs(&[4750.0], &[25.0]).unwrap();
    let set = invariant_set(&density_bounds(&cfg, &markov, &policy).unwrap());
    let tol: Vec<f64> = cfg.cells().iter().map(|c| 1e-6 * c.jam_density_veh_per_km).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for start in 0..40 {
        let bx = set.state_box(rng.gen_range(0..set.box_count()));
        let queues = bx.cells.iter().map(|c| if c.queued { rng.gen_range(0.1..50.0) } else { 0.0 }).collect();
        let densities = bx.cells.iter().map(|c| rng.gen_range(c.lo..=c.hi)).collect();
        let mut sim = SimConfig::ten_seconds(10_000, 100 + start, 2);
        sim.initial_state = HybridState::new(rng.gen_range(0..2), queues, densities);
        assert!(set.contains(&sim.initial_state, &tol));
        let traj = simulate(&Strategy::affine(policy.clone()), &cfg, &markov, &sim).unwrap();
        for r in &traj.records {
            let s = HybridState::new(r.mode, r.queues.clone(), r.densities.clone());
            assert!(set.violation(&s, &tol).is_none(), "start {start} left the set at step {}: {:?}", r.step, set.violation(&s, &tol));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn state_stays_in_bounds(
        (cfg, markov) in arb_highway(4, 3),
        gains in prop::collection::vec((1.0f64..8000.0, 0.0f64..60.0), 3),
        seed in any::<u64>(),
        cap in prop::option::of(1.0f64..40.0),
    ) {
        let k = cfg.cell_count();
        let fastest = (0..markov.mode_count()).map(|s| markov.exit_rate(s)).fold(0.0, f64::max);
        let mut sim = SimConfig::ten_seconds(100_000, seed, k);
        sim.queue_cap_veh_per_lane = cap;
        prop_assume!(sim.dt_hr * fastest < 1.0);
        let strategy = if k == 1 {
            Strategy::NoControl
        } else {
            let (u, kappa): (Vec<f64>, Vec<f64>) = gains[..k - 1].iter().copied().unzip();
            Strategy::affine(AffineControlPolicy::from_pairs(&u, &kappa).unwrap())
        };
        let path = sample_path(&markov, &sim, 0);
        let mut check = BoundsCheck { cfg: &cfg, worst: 0.0 };
        run_with(&strategy, &cfg, &markov, &sim, &path, &mut check).unwrap();
        prop_assert_eq!(check.worst, 0.0);
    }
}
