//! Analysis of multi-GPU training telemetry.
//!
//! The crate turns raw per-GPU power and utilization samples into per-epoch
//! time, energy and utilization metrics ([`metrics`]), fits the power law
//! `t = alpha * N^(-beta)` of epoch time against GPU count ([`scaling`]),
//! and weighs power caps by their speed and energy cost ([`tradeoff`]).
//! [`synth`] generates runs with known ground truth for testing all of the
//! above.
//!
//! ```
//! use gpuscale::scaling::{fit_power_law, ScalingPoint};
//!
//! let points: Vec<ScalingPoint> = [2u32, 4, 8, 16]
//!     .iter()
//!     .map(|&n| ScalingPoint::new(n, 100.0 / f64::from(n)))
//!     .collect();
//! let fit = fit_power_law(&points).unwrap();
//! assert!((fit.beta - 1.0).abs() < 1e-12);
//! ```
//!
//! The guide under `book/` walks through each module; its code listings are
//! compiled and run as doc-tests of this crate.

pub mod metrics;
pub mod scaling;
pub mod synth;
pub mod telemetry;
pub mod tradeoff;

/// How strictly inputs are checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Validation {
    /// Any bad row or uncovered window is an error.
    #[default]
    Strict,
    /// Bad telemetry rows are dropped and counted; coverage problems become
    /// warnings.
    Lenient,
}

// mdbook cannot run listings that depend on this crate, so each chapter is
// pulled in as a doc comment and exercised by `cargo test --doc`.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/telemetry.md")]
    mod telemetry {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/scaling.md")]
    mod scaling {}
    #[doc = include_str!("../../../book/src/tradeoff.md")]
    mod tradeoff {}
    #[doc = include_str!("../../../book/src/synth.md")]
    mod synth {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
