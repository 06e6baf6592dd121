use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::params::HighwayConfig;
use crate::error::{Error, Result};

/// Continuous-time Markov chain over capacity modes.
///
/// `capacities[s][k]` is the capacity of cell `k` in mode `s`; rates are per hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovCapacityModel {
    capacities: Vec<Vec<f64>>,
    rates: Vec<Vec<f64>>,
    #[serde(skip)]
    steady: Vec<f64>,
}

/// Mean, maximum and minimum capacity of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityStats {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
}

impl MarkovCapacityModel {
    pub fn new(capacities: Vec<Vec<f64>>, rates: Vec<Vec<f64>>) -> Result<Self> {
        let m = capacities.len();
        if m == 0 {
            return Err(Error::validation("capacities", "at least one mode is required"));
        }
        let k = capacities[0].len();
        if k == 0 {
            return Err(Error::validation("capacities", "at least one cell is required"));
        }
        for (s, row) in capacities.iter().enumerate() {
            if row.len() != k {
                return Err(Error::validation(
                    format!("capacities mode {}", s + 1),
                    format!("expected {k} cells, got {}", row.len()),
                ));
            }
            if let Some(c) = row.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
                return Err(Error::validation(
                    format!("capacities mode {}", s + 1),
                    format!("must be finite and > 0, got {c}"),
                ));
            }
        }
        let rates = if m == 1 && rates.is_empty() { vec![vec![0.0]] } else { rates };
        if rates.len() != m || rates.iter().any(|r| r.len() != m) {
            return Err(Error::validation("rates", format!("must be a {m}x{m} matrix")));
        }
        for (s, row) in rates.iter().enumerate() {
            for (t, &r) in row.iter().enumerate() {
                if !(r.is_finite() && r >= 0.0) {
                    return Err(Error::validation(
                        format!("rates[{}][{}]", s + 1, t + 1),
                        format!("must be finite and >= 0, got {r}"),
                    ));
                }
                if s == t && r != 0.0 {
                    return Err(Error::validation(
                        format!("rates[{}][{}]", s + 1, t + 1),
                        "diagonal must be zero",
                    ));
                }
            }
        }
        if !is_irreducible(&rates) {
            return Err(Error::validation("rates", "the mode chain is reducible"));
        }
        let steady = steady_state(&rates)?;
        Ok(Self {
            capacities,
            rates,
            steady,
        })
    }

    /// Deterministic capacities.
    pub fn single_mode(capacities: Vec<f64>) -> Result<Self> {
        Self::new(vec![capacities], vec![])
    }

    /// Chain whose modes are all combinations of independent per-cell two-state
    /// chains. Each entry is `(cell, nominal, reduced, rate_down, rate_up)`.
    /// Cells not listed keep `base`.
    pub fn product_of_two_state(
        base: &[f64],
        perturbed: &[(usize, f64, f64, f64, f64)],
    ) -> Result<Self> {
        let n = perturbed.len();
        let m = 1usize << n;
        let mut capacities = Vec::with_capacity(m);
        for s in 0..m {
            let mut row = base.to_vec();
            for (bit, &(cell, nominal, reduced, _, _)) in perturbed.iter().enumerate() {
                row[cell] = if s >> bit & 1 == 0 { nominal } else { reduced };
            }
            capacities.push(row);
        }
        let mut rates = vec![vec![0.0; m]; m];
        for (s, row) in rates.iter_mut().enumerate() {
            for (bit, &(_, _, _, down, up)) in perturbed.iter().enumerate() {
                let t = s ^ (1 << bit);
                row[t] = if s >> bit & 1 == 0 { down } else { up };
            }
        }
        Self::new(capacities, rates)
    }

    pub fn mode_count(&self) -> usize {
        self.capacities.len()
    }

    pub fn cell_count(&self) -> usize {
        self.capacities[0].len()
    }

    #[inline]
    pub fn capacity(&self, mode: usize, k: usize) -> f64 {
        self.capacities[mode][k]
    }

    pub fn capacities(&self) -> &[Vec<f64>] {
        &self.capacities
    }

    pub fn rates(&self) -> &[Vec<f64>] {
        &self.rates
    }

    /// Total exit rate of mode `s`.
    pub fn exit_rate(&self, s: usize) -> f64 {
        self.rates[s].iter().sum()
    }

    pub fn steady_state(&self) -> &[f64] {
        &self.steady
    }

    pub fn max_capacity(&self, k: usize) -> f64 {
        self.capacities.iter().map(|r| r[k]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_capacity(&self, k: usize) -> f64 {
        self.capacities.iter().map(|r| r[k]).fold(f64::INFINITY, f64::min)
    }

    pub fn mean_capacity(&self, k: usize) -> f64 {
        capacity_stats(self, &self.steady, k).mean
    }

    /// Critical density `F_max / v` of cell `k`.
    pub fn critical_density(&self, cfg: &HighwayConfig, k: usize) -> f64 {
        self.max_capacity(k) / cfg.cell(k).free_flow_speed_kmh
    }

    /// Checks cell counts match and that every mode's capacity fits under
    /// the triangular fundamental diagram.
    pub fn check_against(&self, cfg: &HighwayConfig) -> Result<()> {
        if self.cell_count() != cfg.cell_count() {
            return Err(Error::validation(
                "capacities",
                format!(
                    "chain has {} cells, highway has {}",
                    self.cell_count(),
                    cfg.cell_count()
                ),
            ));
        }
        for k in 0..cfg.cell_count() {
            let c = cfg.cell(k);
            let crit = self.critical_density(cfg, k);
            let lhs = c.sending(crit);
            let rhs = c.receiving(crit);
            if lhs > rhs * (1.0 + 1e-12) {
                return Err(Error::validation(
                    format!("cell {} fundamental diagram", k + 1),
                    format!(
                        "capacity {lhs} exceeds receiving flow {rhs} at the critical density {crit}"
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Mean, max and min capacity of cell `k` under the distribution `p`.
pub fn capacity_stats(markov: &MarkovCapacityModel, p: &[f64], k: usize) -> CapacityStats {
    let mean = markov
        .capacities
        .iter()
        .zip(p)
        .map(|(row, &ps)| ps * row[k])
        .sum();
    CapacityStats {
        mean,
        max: markov.max_capacity(k),
        min: markov.min_capacity(k),
    }
}

/// Stationary distribution of the chain.
pub fn steady_state_probs(markov: &MarkovCapacityModel) -> Result<Vec<f64>> {
    steady_state(&markov.rates)
}

/// Generator matrix with rows summing to zero.
pub(crate) fn generator(rates: &[Vec<f64>]) -> DMatrix<f64> {
    let m = rates.len();
    DMatrix::from_fn(m, m, |s, t| {
        if s == t {
            -rates[s].iter().sum::<f64>()
        } else {
            rates[s][t]
        }
    })
}

/// Rank of the generator must be `m - 1` for a unique stationary law.
pub(crate) fn check_generator_rank(q: &DMatrix<f64>) -> Result<()> {
    let m = q.nrows();
    if m == 1 {
        return Ok(());
    }
    let scale = q.amax().max(1.0);
    let rank = q.clone().svd(false, false).rank(1e-12 * scale * m as f64);
    if rank != m - 1 {
        return Err(Error::SingularChain(format!(
            "generator rank is {rank}, expected {}",
            m - 1
        )));
    }
    Ok(())
}

fn steady_state(rates: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = rates.len();
    if m == 1 {
        return Ok(vec![1.0]);
    }
    let q = generator(rates);
    check_generator_rank(&q)?;
    // p^T Q = 0 with the last balance equation replaced by normalization.
    let mut a = q.transpose();
    for t in 0..m {
        a[(m - 1, t)] = 1.0;
    }
    let mut b = DVector::zeros(m);
    b[m - 1] = 1.0;
    let p = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::SingularChain("balance system is singular".into()))?;
    let mut p: Vec<f64> = p.iter().map(|x| x.max(0.0)).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    Ok(p)
}

/// Strong connectivity of the graph of positive rates.
pub(crate) fn is_irreducible(rates: &[Vec<f64>]) -> bool {
    let m = rates.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; m];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(s) = stack.pop() {
            for t in 0..m {
                let r = if forward { rates[s][t] } else { rates[t][s] };
                if r > 0.0 && !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        seen.into_iter().all(|x| x)
    };
    reach(true) && reach(false)
}

/// Infinity norm of the global balance residual.
pub fn balance_residual(rates: &[Vec<f64>], p: &[f64]) -> f64 {
    let m = rates.len();
    (0..m)
        .map(|s| {
            let inflow: f64 = (0..m).map(|t| p[t] * rates[t][s]).sum();
            let outflow: f64 = p[s] * rates[s].iter().sum::<f64>();
            (inflow - outflow).abs()
        })
        .fold(0.0, f64::max)
}
