use super::poly::Scalar;
use super::scheme::{coefficients, weights, DesignScheme, Weight};
use crate::error::Result;
use crate::model::flow::{flows, rates_from_flows};
use crate::model::{DensityBounds, HighwayConfig, HybridState, MarkovCapacityModel, Metering};

/// Constants of the weighted net flow seen by one buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetFlowTerms {
    pub coef: Vec<f64>,
    pub demand: Vec<f64>,
    pub beta: Vec<f64>,
}

impl NetFlowTerms {
    pub fn new(cfg: &HighwayConfig, k: usize) -> Self {
        let beta = cfg.betas();
        Self {
            coef: coefficients(k, &beta),
            demand: cfg.demands(),
            beta,
        }
    }

    pub fn constant_part(&self) -> f64 {
        self.coef.iter().zip(&self.demand).map(|(c, a)| c * a).sum()
    }

    /// Multiplier of `f_j` as a function of the two weights it touches.
    #[inline]
    pub fn outflow_factor<S: Scalar>(&self, j: usize, rho_j: S, rho_next: Option<S>) -> S {
        let mut w = rho_j * self.coef[j];
        if let Some(rn) = rho_next {
            w = w - rn * (self.beta[j] * self.coef[j + 1]);
        }
        w
    }

    /// `sum c_j a_j - sum c_j (1 - rho_j) r_j - sum f_j (c_j rho_j - beta_j c_{j+1} rho_{j+1})`,
    /// which equals `sum c_j (G_j + rho_j l_j H_j)`.
    pub fn combine<S: Scalar>(&self, rho: &[S], r: &[S], f: &[S]) -> S {
        let cells = self.coef.len();
        let mut acc = S::constant(self.constant_part());
        for j in 0..cells {
            let c = self.coef[j];
            if c == 0.0 {
                continue;
            }
            acc = acc - (S::constant(1.0) - rho[j].clone()) * r[j].clone() * c;
            let next = (j + 1 < cells).then(|| rho[j + 1].clone());
            acc = acc - self.outflow_factor(j, rho[j].clone(), next) * f[j].clone();
        }
        acc
    }
}

/// Weighted net flow of buffer `k` at one state.
pub fn weighted_net_flow<M: Metering>(
    scheme: DesignScheme,
    k: usize,
    state: &HybridState,
    metering: &M,
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    bounds: &DensityBounds,
) -> Result<f64> {
    let w = weights(scheme, k, bounds)?;
    Ok(net_flow_with_weights(k, state, metering, cfg, markov, &w))
}

pub(crate) fn net_flow_with_weights<M: Metering>(
    k: usize,
    state: &HybridState,
    metering: &M,
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    w: &[Weight],
) -> f64 {
    let fl = flows(cfg, markov, metering, state);
    let rho: Vec<f64> = w
        .iter()
        .zip(&state.densities_veh_per_km)
        .map(|(w, &n)| w.eval(n))
        .collect();
    NetFlowTerms::new(cfg, k).combine(&rho, &fl.inflow, &fl.outflow)
}

/// Same quantity evaluated directly from the dynamics, `sum c_j (G_j + rho_j l_j H_j)`.
pub fn net_flow_from_dynamics<M: Metering>(
    k: usize,
    state: &HybridState,
    metering: &M,
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    w: &[Weight],
) -> f64 {
    let (g, h) = rates_from_flows(cfg, &flows(cfg, markov, metering, state));
    let coef = coefficients(k, &cfg.betas());
    (0..cfg.cell_count())
        .map(|j| {
            let n = state.densities_veh_per_km[j];
            coef[j] * (g[j] + w[j].eval(n) * cfg.cell(j).length_km * h[j])
        })
        .sum()
}
