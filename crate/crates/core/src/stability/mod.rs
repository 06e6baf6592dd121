//! Drift certificates: weighted net flows, congestion sets, the inner
//! maximization and the mean drift of a metering policy.

pub mod bsystem;
pub mod corollary;
pub mod drift;
pub mod inner;
pub mod netflow;
pub mod poly;
pub mod scheme;
pub mod sets;

pub use bsystem::{solve_b_system, LyapunovCertificate};
pub use corollary::{check_decoupling, corollary1_verdict, corollary2_equivalence_check, Corollary1};
pub use drift::{buffer_drift, mean_drift, mean_drift_unit_weights, verdict_of, DriftReport, ModeDrift, Verdict};
pub use inner::{GridFallback, InnerMax, InnerOptions, NetFlowProblem};
pub use netflow::weighted_net_flow;
pub use scheme::{gamma, DesignScheme, PcWeight, Weight};
pub use sets::{congestion_set, congestion_sets, invariant_set, CellOption, CongestionSet, InvariantSet, StateBox};
