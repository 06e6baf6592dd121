use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HighwayConfig, MarkovCapacityModel};
use crate::sim::{run_metrics, sample_path, Metrics, SimConfig, Strategy};

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std_error: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std_error = if xs.len() > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, std_error }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourSummary {
    pub hour: usize,
    pub queue: Summary,
    pub vht: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub name: String,
    pub queue: Summary,
    pub vht: Summary,
    pub hourly: Vec<HourSummary>,
    /// One entry per replication, in replication order.
    pub runs: Vec<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub replications: usize,
    pub rows: Vec<StrategyRow>,
}

impl Comparison {
    pub fn row(&self, name: &str) -> Option<&StrategyRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Per-replication VHT of `a` minus that of `b`.
    pub fn paired_vht_difference(&self, a: &str, b: &str) -> Option<Vec<f64>> {
        let (a, b) = (self.row(a)?, self.row(b)?);
        Some(
            a.runs
                .iter()
                .zip(&b.runs)
                .map(|(x, y)| x.vht_veh_hr - y.vht_veh_hr)
                .collect(),
        )
    }
}

/// Runs every strategy on the same sampled mode paths (replication `r` uses
/// stream `r` of `sim.seed`) and summarizes queue and VHT.
pub fn compare_strategies(
    cfg: &HighwayConfig,
    markov: &MarkovCapacityModel,
    sim: &SimConfig,
    strategies: &[(String, Strategy)],
    replications: usize,
) -> Result<Comparison> {
    if replications == 0 {
        return Err(Error::validation("replications", "must be >= 1"));
    }
    let per_rep: Vec<Vec<Metrics>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let path = sample_path(markov, sim, r);
            strategies
                .iter()
                .map(|(_, s)| run_metrics(s, cfg, markov, sim, &path))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let rows = strategies
        .iter()
        .enumerate()
        .map(|(i, (name, _))| {
            let runs: Vec<Metrics> = per_rep.iter().map(|r| r[i].clone()).collect();
            let pick = |f: &dyn Fn(&Metrics) -> f64| Summary::of(&runs.iter().map(f).collect::<Vec<_>>());
            let hours = runs[0].hourly.len();
            let hourly = (0..hours)
                .map(|h| HourSummary {
                    hour: runs[0].hourly[h].hour,
                    queue: pick(&|m| m.hourly[h].time_avg_queue_veh),
                    vht: pick(&|m| m.hourly[h].vht_veh_hr),
                })
                .collect();
            StrategyRow {
                name: name.clone(),
                queue: pick(&|m| m.time_avg_queue_veh),
                vht: pick(&|m| m.vht_veh_hr),
                hourly,
                runs,
            }
        })
        .collect();
    Ok(Comparison { replications, rows })
}
