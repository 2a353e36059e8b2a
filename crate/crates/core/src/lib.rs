//! Instanton tunnelling amplitudes for one-dimensional polynomial
//! multi-well potentials, with numerical references to check them against.

pub mod analysis;
pub mod dd;
pub mod error;
pub mod fluctuation;
pub mod instanton;
pub mod oracle;
pub mod poly;
pub mod potential;
pub mod quad;
pub mod tridiag;
pub mod twolevel;

pub use analysis::{analyze, AnalysisConfig, AnalysisReport};
pub use error::{Error, Result};
pub use potential::{PotentialModel, Preset, Well, WellPair};
