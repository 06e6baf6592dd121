//! Highway model: parameters, flows, dynamics and density boundaries.

pub mod bounds;
pub mod flow;
pub mod markov;
pub mod params;
pub mod pwl;

pub use bounds::{density_bounds, DensityBounds};
pub use flow::{
    buffer_outflow, cell_outflow, dynamics, flows, mainline_inflow, onramp_flow, Flows,
};
pub use markov::{capacity_stats, steady_state_probs, CapacityStats, MarkovCapacityModel};
pub use params::{
    AffineControlPolicy, BufferParams, CellParams, HighwayConfig, HybridState, Metering,
    PartialPolicy, RampGain, Unmetered,
};
pub use pwl::Pwl;
