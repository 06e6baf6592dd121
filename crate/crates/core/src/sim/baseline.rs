use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::HighwayConfig;

/// Feedback law of a density-tracking ramp meter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineKind {
    /// One integral gain per on-ramp, acting on its own cell's density.
    Alinea { gains: Vec<f64> },
    /// Gain matrices with one row per on-ramp and one column per cell.
    Metaline {
        proportional: Vec<Vec<f64>>,
        integral: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    #[serde(flatten)]
    pub kind: BaselineKind,
    /// Target density of every cell.
    pub critical_density: Vec<f64>,
    /// Controller update period in simulation steps.
    #[serde(default = "one")]
    pub update_period_steps: usize,
}

fn one() -> usize {
    1
}

impl BaselineSpec {
    pub fn alinea(gains: Vec<f64>, critical_density: Vec<f64>) -> Self {
        Self {
            kind: BaselineKind::Alinea { gains },
            critical_density,
            update_period_steps: 1,
        }
    }

    pub fn metaline(
        proportional: Vec<Vec<f64>>,
        integral: Vec<Vec<f64>>,
        critical_density: Vec<f64>,
    ) -> Self {
        Self {
            kind: BaselineKind::Metaline {
                proportional,
                integral,
            },
            critical_density,
            update_period_steps: 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            BaselineKind::Alinea { .. } => "alinea",
            BaselineKind::Metaline { .. } => "metaline",
        }
    }

    pub fn validate(&self, cfg: &HighwayConfig) -> Result<()> {
        let k = cfg.cell_count();
        let ramps = k - 1;
        if self.critical_density.len() != k {
            return Err(Error::validation("critical_density", format!("need {k} entries")));
        }
        if self.update_period_steps == 0 {
            return Err(Error::validation("update_period_steps", "must be >= 1"));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match &self.kind {
            BaselineKind::Alinea { gains } => {
                if gains.len() != ramps || !finite(gains) {
                    return Err(Error::validation("alinea gains", format!("need {ramps} finite entries")));
                }
            }
            BaselineKind::Metaline {
                proportional,
                integral,
            } => {
                for (name, m) in [("metaline proportional", proportional), ("metaline integral", integral)] {
                    if m.len() != ramps || m.iter().any(|r| r.len() != k || !finite(r)) {
                        return Err(Error::validation(name, format!("must be {ramps}x{k}")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// One controller update. `rates` holds the on-ramp rates (cells 2..K) and is
/// overwritten with the new rates, each clamped to `[0, upper]`.
pub fn update_rates(
    spec: &BaselineSpec,
    rates: &mut [f64],
    density_now: &[f64],
    density_prev: &[f64],
    upper: &[f64],
) {
    let nc = &spec.critical_density;
    match &spec.kind {
        BaselineKind::Alinea { gains } => {
            for (i, mu) in rates.iter_mut().enumerate() {
                let k = i + 1;
                *mu -= gains[i] * (density_now[k] - nc[k]);
            }
        }
        BaselineKind::Metaline {
            proportional,
            integral,
        } => {
            for (i, mu) in rates.iter_mut().enumerate() {
                let mut delta = 0.0;
                for k in 0..density_now.len() {
                    delta += proportional[i][k] * (density_now[k] - density_prev[k])
                        + integral[i][k] * (density_now[k] - nc[k]);
                }
                *mu -= delta;
            }
        }
    }
    for (mu, &u) in rates.iter_mut().zip(upper) {
        *mu = mu.clamp(0.0, u);
    }
}

/// Allocating form of [`update_rates`].
pub fn baseline_control_step(
    spec: &BaselineSpec,
    previous: &[f64],
    density_now: &[f64],
    density_prev: &[f64],
    upper: &[f64],
) -> Vec<f64> {
    let mut out = previous.to_vec();
    update_rates(spec, &mut out, density_now, density_prev, upper);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alinea_moves_by_gain_times_error() {
        let spec = BaselineSpec::alinea(vec![40.0], vec![30.0, 30.0]);
        let out = baseline_control_step(&spec, &[1000.0], &[0.0, 31.0], &[0.0, 31.0], &[1500.0]);
        assert_eq!(out, vec![960.0]);
        let out = baseline_control_step(&spec, &[1000.0], &[0.0, 29.0], &[0.0, 29.0], &[1500.0]);
        assert_eq!(out, vec![1040.0]);
    }

    #[test]
    fn rates_are_clamped() {
        let spec = BaselineSpec::alinea(vec![40.0], vec![30.0, 30.0]);
        let low = baseline_control_step(&spec, &[10.0], &[0.0, 100.0], &[0.0, 100.0], &[1500.0]);
        assert_eq!(low, vec![0.0]);
        let high = baseline_control_step(&spec, &[1490.0], &[0.0, 0.0], &[0.0, 0.0], &[1500.0]);
        assert_eq!(high, vec![1500.0]);
    }

    #[test]
    fn metaline_combines_both_terms() {
        let spec = BaselineSpec::metaline(
            vec![vec![10.0, 20.0]],
            vec![vec![1.0, 2.0]],
            vec![30.0, 30.0],
        );
        // proportional: 10*1 + 20*2 = 50, integral: 1*1 + 2*2 = 5
        let out = baseline_control_step(&spec, &[1000.0], &[31.0, 32.0], &[30.0, 30.0], &[2000.0]);
        assert_eq!(out, vec![945.0]);
    }
}
