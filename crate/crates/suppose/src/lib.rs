//! SUPPOSe: super-resolution deconvolution of a single acquisition.
//!
//! The measured signal is modeled as a superposition of N virtual point
//! sources of equal intensity convolved with the instrument response; only
//! the source positions are fitted, by a genetic solver. Error-budget
//! bounds select the number of sources and report the achievable position
//! uncertainty.

pub mod assignment;
pub mod bounds;
pub mod calibration;
pub mod error;
pub mod eval;
pub mod forward;
pub mod ga;
pub mod grid;
pub mod io;
pub mod irf;
pub mod lsq;
pub mod objective;
pub mod pipeline;
pub mod sources;
pub mod synth;

pub use bounds::{estimate_optimum, greedy_find_alpha_n, sigma_tradeoff, BoundReport};
pub use error::{Error, Result};
pub use eval::{histogram_sources, matched_sigma, render_smoothed};
pub use forward::{evaluate_model, BackgroundMode};
pub use ga::{GaConfig, GaRunRecord, StopReason};
pub use grid::{signal_sum, PixelGrid, Point, SampledSignal};
pub use irf::{IrfCache, IrfFamily, IrfModel, PixelatedIrf};
pub use objective::{chi_squared, fitness, refit_alpha, ObjectiveContext};
pub use pipeline::{fit, NSelection, PipelineConfig};
pub use sources::{truncate_ground_truth, GroundTruth, SourceSet, TruncatedGroundTruth};
pub use synth::{NoiseModel, Scenario};
