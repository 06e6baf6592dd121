//! Controller synthesis by grid search and paired comparison of strategies.

pub mod compare;
pub mod grid;
pub mod synth;

pub use crate::sim::baseline::{baseline_control_step, BaselineKind, BaselineSpec};
pub use compare::{compare_strategies, Comparison, HourSummary, StrategyRow, Summary};
pub use grid::{GridSpec, Range, DEFAULT_GRID_CAP};
pub use synth::{
    design_full, design_localized, design_localized_sections, design_localized_throughput,
    design_partial, drift_surface, free_flow_arrivals, ramp_section,
    select_best, select_best_by,
    Candidate, DesignOptions, DesignResult, StageResult, TieBreak, FULL_COORDINATION_LIMIT,
};
