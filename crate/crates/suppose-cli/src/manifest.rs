//! Run manifests: enough provenance to reproduce every output bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use suppose::bounds::{BoundReport, GreedyResult, SupportEstimate};
use suppose::ga::StopReason;
use suppose::pipeline::{FitOutcome, PipelineConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub digest: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub n: usize,
    pub alpha: f64,
    pub z: f64,
    pub chi2: f64,
    pub generations: usize,
    pub stop: StopReason,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub config: PipelineConfig,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
    pub run: RunSummary,
    pub n_op: Option<usize>,
    pub bound: Option<BoundReport>,
    pub greedy: Option<GreedyResult>,
    pub support: Option<SupportEstimate>,
    pub chi2_ceiling: Option<f64>,
    /// Chosen superpixel for the output histogram.
    pub superpixel: Option<f64>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &PipelineConfig, outcome: &FitOutcome) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: cfg.ga.seed,
            config: cfg.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            run: RunSummary {
                n: outcome.n,
                alpha: outcome.alpha,
                z: outcome.z,
                chi2: outcome.run.chi2,
                generations: outcome.run.generations,
                stop: outcome.run.stop,
            },
            n_op: outcome.n_op,
            bound: outcome.bound.clone(),
            greedy: outcome.greedy.clone(),
            support: outcome.support.clone(),
            chi2_ceiling: outcome.chi2_ceiling,
            superpixel: None,
        }
    }

    pub fn record_input(&mut self, path: &Path) {
        let digest = suppose::io::file_digest(path).unwrap_or_else(|_| "unavailable".into());
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            digest,
        });
    }
}
