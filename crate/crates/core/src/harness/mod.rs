//! Seeded instances, experiment drivers and run reports.

pub mod config;
pub mod experiments;
pub mod instance;
pub mod report;
pub mod rng;
pub mod tolerances;

pub use config::{ExperimentConfig, Mode};
pub use experiments::run;
pub use instance::{generate_instance, SpectralProfile};
pub use report::{Check, RunReport};
pub use tolerances::Tolerances;
