//! Estimation of weekly symptom-onset incidence from longitudinal
//! participatory survey data.
//!
//! The pipeline ingests weekly symptom reports, classifies new symptom
//! onsets ("incidents") under configurable symptom groupings, corrects
//! symptom-reporting bias by filtering to consistently-responding
//! participants, corrects self-selection bias by raking response weights
//! to a reference population's age margins, and produces weighted
//! incidence proportions with design-based 95% confidence intervals.

pub mod consistency;
pub mod data;
pub mod error;
pub mod estimation;
pub mod incidents;
pub mod raking;
pub mod summary;
pub mod sweep;
pub mod synth;
pub mod week;

pub use error::{Error, Result};
