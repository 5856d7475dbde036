//! State estimation on a linear equivalent circuit that mixes PMU phasors
//! with conventional RTU magnitude readings.
//!
//! The pipeline is [`network`] (case parsing and admittances),
//! [`powerflow`] (reference operating points), [`measurement`] (device
//! placement and noisy readings), [`estimator`] (circuit, objective and one
//! KKT solve) and [`evaluation`] (accuracy indices and campaigns).
//!
//! ```
//! use ecfse::estimator::{estimate, EstimatorConfig};
//! use ecfse::evaluation::Scenario;
//! use ecfse::measurement::{DeviceCounts, NoiseMode, PmuMode, StdDevConfig};
//! use ecfse::network::{builtin_case, parse_case};
//!
//! let net = parse_case(builtin_case("ieee14").unwrap())?;
//! let scenario = Scenario::prepare(&net, DeviceCounts::new(3, 6, 5), PmuMode::LineFlow, 0)?;
//! let meas = scenario.synthesize(&net, &StdDevConfig::default(), NoiseMode::Uniform, 0)?;
//! let result = estimate(&net, &meas, &EstimatorConfig::default())?;
//! assert_eq!(result.buses.len(), 14);
//! # Ok::<(), ecfse::Error>(())
//! ```

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod measurement;
pub mod network;
pub mod powerflow;
pub mod sparse;

pub use error::{Error, Result};

// The guide's code listings run as doc-tests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/quickstart.md")]
    mod quickstart {}
    #[doc = include_str!("../../../book/src/library.md")]
    mod library {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/measurements.md")]
    mod measurements {}
    #[doc = include_str!("../../../book/src/campaigns.md")]
    mod campaigns {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
