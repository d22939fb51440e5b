//! Run configuration: a TOML file whose sections mirror the subcommands,
//! overlaid with command-line flags.

use std::fs;
use std::path::Path;

use meint::pipeline::{PipelineConfig, Variant};
use meint::simbench::{Scenario, SimConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub variant: Variant,
    /// Worker threads; unset uses one per core.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Keep only the K molecular columns with the smallest marginal p-values.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prescreen: Option<usize>,
    pub simulate: SimConfig,
    pub pipeline: PipelineConfig,
    pub evaluate: EvaluateConfig,
    pub benchmark: BenchmarkConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            variant: Variant::Proposed,
            threads: None,
            prescreen: None,
            simulate: SimConfig::default(),
            pipeline: PipelineConfig::default(),
            evaluate: EvaluateConfig::default(),
            benchmark: BenchmarkConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub splits: usize,
    /// Share of subjects in each training split.
    pub ratio: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self { splits: 200, ratio: 0.9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub replicates: usize,
    pub variants: Vec<Variant>,
    /// Scenario cells; empty runs the scenario given in `[simulate]`.
    pub scenarios: Vec<Scenario>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            replicates: 2,
            variants: Variant::ALL.to_vec(),
            scenarios: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Checks the values that serde cannot, naming the offending field.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: &str| Err(CliError::Usage(format!("invalid config field '{field}': {msg}")));
        self.simulate.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if self.threads == Some(0) {
            return bad("threads", "must be at least 1");
        }
        if self.prescreen == Some(0) {
            return bad("prescreen", "must keep at least one column");
        }
        if self.evaluate.splits == 0 {
            return bad("evaluate.splits", "must be at least 1");
        }
        if !(self.evaluate.ratio > 0.0 && self.evaluate.ratio < 1.0) {
            return bad("evaluate.ratio", "must lie in (0, 1)");
        }
        if self.benchmark.replicates == 0 {
            return bad("benchmark.replicates", "must be at least 1");
        }
        if self.benchmark.variants.is_empty() {
            return bad("benchmark.variants", "needs at least one variant");
        }
        let p = &self.pipeline;
        if p.lambda1.is_some() != p.lambda2.is_some() {
            return bad("pipeline.lambda1", "lambda1 and lambda2 must be given together");
        }
        for (field, v) in [("pipeline.lambda1", p.lambda1), ("pipeline.lambda2", p.lambda2)] {
            if v.is_some_and(|v| !(v >= 0.0 && v.is_finite())) {
                return bad(field, "must be a non-negative finite number");
            }
        }
        if !(p.gamma_ebic >= 0.0 && p.gamma_ebic.is_finite()) {
            return bad("pipeline.gamma_ebic", "must be a non-negative finite number");
        }
        if p.grid.len1 == 0 || p.grid.len2 == 0 {
            return bad("pipeline.grid", "grid lengths must be at least 1");
        }
        if !(p.variance_threshold > 0.0 && p.variance_threshold <= 1.0) {
            return bad("pipeline.variance_threshold", "must lie in (0, 1]");
        }
        if p.bicluster.permutations == 0 {
            return bad("pipeline.bicluster.permutations", "must be at least 1");
        }
        if !(p.bicluster.alpha > 0.0 && p.bicluster.alpha < 1.0) {
            return bad("pipeline.bicluster.alpha", "must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("[simulate]\ncorrr = \"R1\"\n").unwrap_err();
        assert!(err.to_string().contains("corrr"));
    }

    #[test]
    fn invalid_enum_lists_allowed_values() {
        let err = toml::from_str::<RunConfig>("[simulate]\ncorr = \"R4\"\n").unwrap_err().to_string();
        assert!(err.contains("R1") && err.contains("R3"), "{err}");
    }

    #[test]
    fn half_fixed_penalties_are_rejected() {
        let mut cfg = RunConfig::default();
        cfg.pipeline.lambda1 = Some(0.1);
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("lambda1"));
    }
}
