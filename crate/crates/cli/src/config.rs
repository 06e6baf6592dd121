//! Scenario files: TOML with `[highway]`, `[buffers]`, `[markov]` and
//! optional `[policy]`, `[policies.<name>]`, `[baseline]`, `[sim]`, `[grid]`
//! and `[design]` sections.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use ssctm_core::design::{DesignOptions, GridSpec, Range, TieBreak};
use ssctm_core::model::{
    AffineControlPolicy, BufferParams, CellParams, HighwayConfig, HybridState, MarkovCapacityModel,
};
use ssctm_core::sim::{BaselineSpec, DemandOverride, SimConfig};
use ssctm_core::stability::{GridFallback, InnerOptions, PcWeight};
use ssctm_core::Error;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub highway: HighwaySection,
    pub buffers: BuffersSection,
    pub markov: MarkovSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicySection>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub policies: BTreeMap<String, PolicySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HighwaySection {
    pub length_km: Vec<f64>,
    pub free_flow_speed_kmh: Vec<f64>,
    pub congestion_wave_speed_kmh: Vec<f64>,
    pub jam_density_veh_per_km: Vec<f64>,
    pub mainline_ratio: Vec<f64>,
    /// Informational; used to scale per-lane baseline gains when building configs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lanes: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuffersSection {
    pub capacity_veh_per_hr: Vec<f64>,
    pub demand_veh_per_hr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovSection {
    /// One row per mode, one column per cell.
    pub capacities: Vec<Vec<f64>>,
    /// Transition rates per hour, one row per mode; may be omitted with one mode.
    #[serde(default)]
    pub rates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    /// One entry per on-ramp, cells 2..K.
    pub u: Vec<f64>,
    pub kappa: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update_period_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critical_density: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alinea: Option<AlineaSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metaline: Option<MetalineSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlineaSection {
    pub gains: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetalineSection {
    pub proportional: Vec<Vec<f64>>,
    pub integral: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleRow {
    /// Hours after the start of the run.
    pub start_hr: f64,
    pub demand_veh_per_hr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt_s: f64,
    pub horizon_steps: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queue_cap_veh_per_lane: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lanes_per_ramp: Option<Vec<u32>>,
    /// Clock hour of step 0, used to label hourly output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_hour: Option<u32>,
    /// Metering is active for `[start, end)` hours after the start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_hours: Option<[f64; 2]>,
    /// 1-based.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_mode: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_queues: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_densities: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub demand_schedule: Vec<ScheduleRow>,
}

/// Ranges as `[lo, hi, step]`; a single row applies to every ramp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub u: Vec<[f64; 3]>,
    pub kappa: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    /// `lower_anchored` (default), `free_anchored` or `free_anchored_clamped`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pc_weight: Option<String>,
    /// Points per axis of the dense fallback used when a congestion set has
    /// more free cells than the exact solver handles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_tolerance: Option<f64>,
    /// `lexicographic` (default) or `strongest_feedback`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_break: Option<TieBreak>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub throughput_tolerance: Option<f64>,
}

/// A loaded and validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ConfigFile,
    pub cfg: HighwayConfig,
    pub markov: MarkovCapacityModel,
    pub policy: Option<AffineControlPolicy>,
    pub policies: BTreeMap<String, AffineControlPolicy>,
    pub alinea: Option<BaselineSpec>,
    pub metaline: Option<BaselineSpec>,
    pub sim: Option<SimConfig>,
    pub start_hour: u32,
    pub grid: Option<GridSpec>,
    pub pc_weight: PcWeight,
    pub design: DesignOptions,
    pub throughput_tolerance: f64,
}

fn within(section: &str, e: Error) -> CliError {
    match e {
        Error::Validation { field, reason } => CliError::Validation {
            field: format!("{section}.{field}"),
            reason,
        },
        other => CliError::Validation {
            field: section.to_string(),
            reason: other.to_string(),
        },
    }
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> CliError {
    CliError::Validation {
        field: field.into(),
        reason: reason.into(),
    }
}

fn check_len<T>(field: &str, v: &[T], k: usize) -> Result<(), CliError> {
    if v.len() != k {
        return Err(invalid(field, format!("expected {k} entries, got {}", v.len())));
    }
    Ok(())
}

pub fn parse_config(text: &str) -> Result<ConfigFile, CliError> {
    toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
}

pub fn write_config(file: &ConfigFile) -> Result<String, CliError> {
    toml::to_string(file).map_err(|e| CliError::Parse(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let file = parse_config(&text).map_err(|e| match e {
        CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Scenario::from_file(file)
}

fn parse_range(field: &str, r: &[f64; 3]) -> Result<Range, CliError> {
    let range = Range::new(r[0], r[1], r[2]);
    range.validate(field).map_err(|e| within("grid", e))?;
    Ok(range)
}

/// Parses `lo:hi:step` (or a single value) from a command-line flag.
pub fn parse_range_flag(s: &str) -> Result<[f64; 3], CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| {
        p.trim()
            .parse::<f64>()
            .map_err(|_| invalid("grid flag", format!("`{s}` is not lo:hi:step")))
    };
    match parts.as_slice() {
        [v] => {
            let v = num(v)?;
            Ok([v, v, 1.0])
        }
        [lo, hi, step] => Ok([num(lo)?, num(hi)?, num(step)?]),
        _ => Err(invalid("grid flag", format!("`{s}` is not lo:hi:step"))),
    }
}

pub fn pc_weight_from_name(name: &str) -> Result<PcWeight, CliError> {
    match name {
        "lower_anchored" => Ok(PcWeight::LowerAnchored),
        "free_anchored" => Ok(PcWeight::FreeAnchored { clamp: false }),
        "free_anchored_clamped" => Ok(PcWeight::FreeAnchored { clamp: true }),
        _ => Err(invalid(
            "design.pc_weight",
            "expected lower_anchored, free_anchored or free_anchored_clamped",
        )),
    }
}

impl Scenario {
    pub fn from_file(file: ConfigFile) -> Result<Self, CliError> {
        let h = &file.highway;
        let k = h.length_km.len();
        if k == 0 {
            return Err(invalid("highway.length_km", "needs at least one cell"));
        }
        for (name, v) in [
            ("highway.free_flow_speed_kmh", &h.free_flow_speed_kmh),
            ("highway.congestion_wave_speed_kmh", &h.congestion_wave_speed_kmh),
            ("highway.jam_density_veh_per_km", &h.jam_density_veh_per_km),
            ("highway.mainline_ratio", &h.mainline_ratio),
            ("buffers.capacity_veh_per_hr", &file.buffers.capacity_veh_per_hr),
            ("buffers.demand_veh_per_hr", &file.buffers.demand_veh_per_hr),
        ] {
            check_len(name, v, k)?;
        }
        if let Some(l) = &h.lanes {
            check_len("highway.lanes", l, k)?;
        }
        let cells = (0..k)
            .map(|i| CellParams {
                length_km: h.length_km[i],
                free_flow_speed_kmh: h.free_flow_speed_kmh[i],
                congestion_wave_speed_kmh: h.congestion_wave_speed_kmh[i],
                jam_density_veh_per_km: h.jam_density_veh_per_km[i],
                mainline_ratio: h.mainline_ratio[i],
            })
            .collect();
        let buffers = (0..k)
            .map(|i| BufferParams {
                capacity_veh_per_hr: file.buffers.capacity_veh_per_hr[i],
                demand_veh_per_hr: file.buffers.demand_veh_per_hr[i],
            })
            .collect();
        let cfg = HighwayConfig::new(cells, buffers).map_err(|e| within("highway", e))?;
        let markov = MarkovCapacityModel::new(file.markov.capacities.clone(), file.markov.rates.clone())
            .map_err(|e| within("markov", e))?;
        markov.check_against(&cfg).map_err(|e| within("markov", e))?;

        let to_policy = |name: &str, p: &PolicySection| -> Result<AffineControlPolicy, CliError> {
            check_len(&format!("{name}.u"), &p.u, k - 1)?;
            check_len(&format!("{name}.kappa"), &p.kappa, k - 1)?;
            AffineControlPolicy::from_pairs(&p.u, &p.kappa).map_err(|e| within(name, e))
        };
        let policy = file.policy.as_ref().map(|p| to_policy("policy", p)).transpose()?;
        let policies = file
            .policies
            .iter()
            .map(|(n, p)| Ok((n.clone(), to_policy(&format!("policies.{n}"), p)?)))
            .collect::<Result<BTreeMap<_, _>, CliError>>()?;

        let (alinea, metaline) = match &file.baseline {
            None => (None, None),
            Some(b) => {
                let nc = match &b.critical_density {
                    Some(v) => {
                        check_len("baseline.critical_density", v, k)?;
                        v.clone()
                    }
                    None => (0..k).map(|i| markov.critical_density(&cfg, i)).collect(),
                };
                let period = b.update_period_steps.unwrap_or(1);
                let finish = |mut spec: BaselineSpec, name: &str| -> Result<BaselineSpec, CliError> {
                    spec.update_period_steps = period;
                    spec.validate(&cfg).map_err(|e| within(name, e))?;
                    Ok(spec)
                };
                let alinea = b
                    .alinea
                    .as_ref()
                    .map(|a| finish(BaselineSpec::alinea(a.gains.clone(), nc.clone()), "baseline.alinea"))
                    .transpose()?;
                let metaline = b
                    .metaline
                    .as_ref()
                    .map(|m| {
                        finish(
                            BaselineSpec::metaline(m.proportional.clone(), m.integral.clone(), nc.clone()),
                            "baseline.metaline",
                        )
                    })
                    .transpose()?;
                (alinea, metaline)
            }
        };

        let (sim, start_hour) = match &file.sim {
            None => (None, 0),
            Some(s) => (Some(sim_config(s, &cfg, &markov)?), s.start_hour.unwrap_or(0)),
        };

        let grid = match &file.grid {
            None => None,
            Some(g) => {
                let expand = |name: &str, rows: &[[f64; 3]]| -> Result<Vec<Range>, CliError> {
                    let rows: Vec<[f64; 3]> = match rows.len() {
                        1 => vec![rows[0]; k - 1],
                        n if n == k - 1 => rows.to_vec(),
                        n => return Err(invalid(format!("grid.{name}"), format!("expected 1 or {} rows, got {n}", k - 1))),
                    };
                    rows.iter()
                        .enumerate()
                        .map(|(i, r)| parse_range(&format!("{name}[{}]", i + 2), r))
                        .collect()
                };
                let mut spec = GridSpec::new(expand("u", &g.u)?, expand("kappa", &g.kappa)?);
                if let Some(c) = g.cap {
                    spec.cap = c;
                }
                spec.validate_ranges(k - 1).map_err(|e| within("grid", e))?;
                Some(spec)
            }
        };

        let d = file.design.clone().unwrap_or(DesignSection {
            pc_weight: None,
            fallback_points: None,
            tie_tolerance: None,
            tie_break: None,
            throughput_tolerance: None,
        });
        let pc_weight = pc_weight_from_name(d.pc_weight.as_deref().unwrap_or("lower_anchored"))?;
        let mut design = DesignOptions::default();
        if let Some(n) = d.fallback_points {
            if n < 2 {
                return Err(invalid("design.fallback_points", "must be >= 2"));
            }
            design.inner = InnerOptions::with_fallback(GridFallback {
                points_per_axis: n,
                ..GridFallback::default()
            });
        }
        if let Some(t) = d.tie_tolerance {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(invalid("design.tie_tolerance", "must be finite and >= 0"));
            }
            design.tie_tolerance = t;
        }
        design.tie_break = d.tie_break.unwrap_or_default();
        let throughput_tolerance = d.throughput_tolerance.unwrap_or(1.0);
        if !(throughput_tolerance > 0.0) {
            return Err(invalid("design.throughput_tolerance", "must be > 0"));
        }

        Ok(Self {
            file,
            cfg,
            markov,
            policy,
            policies,
            alinea,
            metaline,
            sim,
            start_hour,
            grid,
            pc_weight,
            design,
            throughput_tolerance,
        })
    }
}

fn sim_config(s: &SimSection, cfg: &HighwayConfig, markov: &MarkovCapacityModel) -> Result<SimConfig, CliError> {
    let k = cfg.cell_count();
    if !(s.dt_s.is_finite() && s.dt_s > 0.0) {
        return Err(invalid("sim.dt_s", "must be finite and > 0"));
    }
    let dt_hr = s.dt_s / 3600.0;
    let to_step = |hours: f64| (hours * 3600.0 / s.dt_s).round() as usize;
    let mode = match s.initial_mode {
        Some(0) => return Err(invalid("sim.initial_mode", "modes are numbered from 1")),
        Some(m) => m - 1,
        None => 0,
    };
    let queues = s.initial_queues.clone().unwrap_or_else(|| vec![0.0; k]);
    let densities = s.initial_densities.clone().unwrap_or_else(|| vec![0.0; k]);
    let mut sim = SimConfig::new(dt_hr, s.horizon_steps, s.seed, HybridState::new(mode, queues, densities));
    sim.queue_cap_veh_per_lane = s.queue_cap_veh_per_lane;
    sim.lanes_per_ramp = s.lanes_per_ramp.clone();
    if let Some([a, b]) = s.control_hours {
        if !(a >= 0.0 && b > a) {
            return Err(invalid("sim.control_hours", "need 0 <= start < end"));
        }
        sim.control_window = Some((to_step(a), to_step(b)));
    }
    for (i, row) in s.demand_schedule.iter().enumerate() {
        if !(row.start_hr >= 0.0 && row.start_hr.is_finite()) {
            return Err(invalid(format!("sim.demand_schedule[{}].start_hr", i + 1), "must be >= 0"));
        }
        check_len(&format!("sim.demand_schedule[{}].demand_veh_per_hr", i + 1), &row.demand_veh_per_hr, k)?;
        sim.demand_schedule.push(DemandOverride {
            start_step: to_step(row.start_hr),
            demand_veh_per_hr: row.demand_veh_per_hr.clone(),
        });
    }
    sim.validate(cfg, markov).map_err(|e| within("sim", e))?;
    Ok(sim)
}
