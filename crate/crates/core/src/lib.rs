//! Asymptotic key-rate engine for decoy-state BB84 with a phase-randomized
//! weak coherent source and a two-detector threshold receiver.
//!
//! - [`math`]: binary entropy and Poisson statistics
//! - [`channel`]: photon-number-resolved yields, gains and error rates
//! - [`rates`]: the four compared rate formulas with term breakdowns
//! - [`decoy`]: vacuum + weak decoy bounds on single-photon parameters
//! - [`montecarlo`]: pulse-level simulation used to cross-check the model
//! - [`sweep`]: intensity optimization, distance sweeps and distance limits
//! - [`config`], [`report`]: configuration documents and tabular output

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod decoy;
pub mod error;
pub mod math;
pub mod montecarlo;
pub mod rates;
pub mod report;
pub mod sweep;

pub use channel::{build_yield_table, DetectorParams, LinkParams, SourceParams, YieldTable};
pub use config::{DeviceConfig, EstimationMode};
pub use decoy::{bounds_bracket_check, estimate_vacuum_weak, DecoyEstimate, IntensityMeasurement};
pub use error::{Error, Result};
pub use math::Probability;
pub use montecarlo::{compare_to_analytic, simulate_decoy_session, simulate_run, TallyReport};
pub use rates::{RateBreakdown, RateInputs, RateVariant};
pub use sweep::{distance_sweep, find_max_distance, optimize_mu, CurveResult, OptimizerSettings};
