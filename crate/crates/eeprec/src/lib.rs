//! Files, configuration and the command line around `eeprec-core`.
//!
//! The pipeline runs as separate stages, each reading the artifacts of the
//! ones before it from a run directory:
//!
//! | stage | reads | writes |
//! |---|---|---|
//! | `scene` | config | marker observations, camera priors, true cameras, true rig path |
//! | `calibrate` | markers, priors | refined camera poses |
//! | `render` | true cameras, rig path | PPM images, frame index, true circles |
//! | `detect` | images | single-view detections |
//! | `track` | images, refined cameras | track log, ball centers, effector poses |
//! | `simulate` | config | dataset of state records and position errors |
//! | `train` | dataset | model, training history, trajectory split |
//! | `estimate` | model, dataset, split | corrected position stream |
//! | `evaluate` | everything above that exists | reports, threshold table |

pub mod config;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod pipeline;

pub use config::PipelineConfig;
pub use error::CliError;
pub use pipeline::{run_pipeline, run_stage, Stage, StageReport};
