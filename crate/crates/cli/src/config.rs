//! Configuration file schema and merging.
//!
//! A TOML file with four optional tables; unknown keys anywhere are an
//! error. Flags override environment variables, which override the file.
//!
//! ```toml
//! [synth]      # generator settings, see `SynthConfig`
//! seed = 0
//! num_tasks = 100
//! length = [20, 60]
//! gap = [10, 15]
//!
//! [run]
//! suite = "suites/standard.jsonl"
//! out = "runs/forgetful"
//! policies = ["forgetful:window=5"]
//! modes = ["raw", "summary", "asm"]
//! retrieval = "all_active"        # or "link_closure", "recency_top_k:k=8"
//! budget = 4096
//! seed = 0
//! concurrency = 4
//! timing = "auto"                 # "measured" or "zero"
//!
//! [endpoint]   # ASMB_ENDPOINT / ASMB_MODEL / ASMB_API_KEY override url / model / api_key
//! url = "http://localhost:8000/v1/chat/completions"
//! model = "gpt-4o"
//! timeout_secs = 60
//! max_retries = 3
//! temperature = 0.0
//! backoff_ms = 500
//! max_in_flight = 4
//! trace = false
//!
//! [metrics]
//! text_threshold = 0.5            # omit for fractional ANLS credit
//! tcr_scope = "closure"           # or "all"
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use asmb_core::memory::HistoryMode;
use asmb_core::metrics::{MetricOptions, TcrScope};
use asmb_core::policy::EndpointConfig;
use asmb_core::runner::{RunConfig, Timing};
use asmb_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub synth: SynthConfig,
    pub run: RunSection,
    pub endpoint: EndpointSection,
    pub metrics: MetricsSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub suite: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub policies: Vec<String>,
    pub modes: Vec<HistoryMode>,
    pub retrieval: Option<String>,
    pub budget: Option<usize>,
    pub seed: Option<u64>,
    pub concurrency: Option<usize>,
    pub timing: Option<Timing>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointSection {
    pub url: Option<String>,
    pub model: Option<String>,
    /// Never written back out.
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub timeout_secs: Option<u64>,
    pub max_retries: Option<usize>,
    pub temperature: Option<f64>,
    pub backoff_ms: Option<u64>,
    pub max_in_flight: Option<usize>,
    pub trace: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub text_threshold: Option<f64>,
    pub tcr_scope: Option<TcrScope>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        let d = RunConfig::default();
        let retrieval = match &self.run.retrieval {
            Some(s) => s.parse().map_err(CliError::Input)?,
            None => d.retrieval,
        };
        let cfg = RunConfig {
            mode: d.mode,
            retrieval,
            budget: self.run.budget.unwrap_or(d.budget),
            seed: self.run.seed.unwrap_or(d.seed),
            concurrency: self.run.concurrency.unwrap_or(d.concurrency),
            timing: self.run.timing.unwrap_or(d.timing),
        };
        cfg.validate().map_err(CliError::Input)?;
        Ok(cfg)
    }

    /// Fills every unset run key with the value actually used, so the echoed
    /// file states the complete configuration.
    pub fn resolve_run(&mut self) -> Result<RunConfig, CliError> {
        let cfg = self.run_config()?;
        if self.run.modes.is_empty() {
            self.run.modes = HistoryMode::ALL.to_vec();
        }
        self.run.retrieval = Some(cfg.retrieval.to_string());
        self.run.budget = Some(cfg.budget);
        self.run.seed = Some(cfg.seed);
        self.run.concurrency = Some(cfg.concurrency);
        self.run.timing = Some(cfg.timing);
        Ok(cfg)
    }

    /// Endpoint settings, when a URL is configured.
    pub fn endpoint_config(&self) -> Option<EndpointConfig> {
        let e = &self.endpoint;
        let mut cfg = EndpointConfig::new(e.url.clone()?, e.model.clone().unwrap_or_default());
        cfg.api_key = e.api_key.clone();
        if let Some(s) = e.timeout_secs {
            cfg.timeout = Duration::from_secs(s);
        }
        if let Some(r) = e.max_retries {
            cfg.max_retries = r;
        }
        if let Some(t) = e.temperature {
            cfg.temperature = t;
        }
        if let Some(b) = e.backoff_ms {
            cfg.backoff = Duration::from_millis(b);
        }
        if let Some(m) = e.max_in_flight {
            cfg.max_in_flight = m;
        }
        if let Some(t) = e.trace {
            cfg.trace = t;
        }
        Some(cfg)
    }

    pub fn metric_options(&self) -> MetricOptions {
        MetricOptions {
            text_threshold: self.metrics.text_threshold,
            tcr_scope: self.metrics.tcr_scope.unwrap_or_default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use asmb_core::domain::Intent;

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<FileConfig>("[run]\nbudgett = 3\n").is_err());
        assert!(toml::from_str::<FileConfig>("[nope]\n").is_err());
        assert!(toml::from_str::<FileConfig>("[synth]\nlength = [30, 40]\n").is_ok());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = FileConfig::default();
        cfg.synth.intent_mix = [(Intent::Lookup, 0.5), (Intent::Booking, 0.5)].into_iter().collect();
        cfg.run.policies = vec!["forgetful:window=5".into()];
        cfg.run.modes = vec![HistoryMode::Raw];
        cfg.endpoint.api_key = Some("secret".into());
        cfg.endpoint.url = Some("http://x".into());
        let text = cfg.to_toml();
        assert!(!text.contains("secret"));
        let back: FileConfig = toml::from_str(&text).unwrap();
        cfg.endpoint.api_key = None;
        assert_eq!(back, cfg);
    }

    #[test]
    fn resolve_fills_defaults() {
        let mut cfg: FileConfig = toml::from_str("[run]\nretrieval = \"recency:4\"\n").unwrap();
        let rc = cfg.resolve_run().unwrap();
        assert_eq!(rc.budget, 4096);
        assert_eq!(cfg.run.retrieval.as_deref(), Some("recency_top_k:k=4"));
        assert_eq!(cfg.run.modes.len(), 3);
        let mut bad: FileConfig = toml::from_str("[run]\nbudget = 0\n").unwrap();
        assert!(bad.resolve_run().is_err());
    }
}
