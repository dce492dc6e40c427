pub mod analyze;
pub mod export;
pub mod filter;
pub mod generate;
pub mod pool_ops;
pub mod stats;

use std::path::Path;

use anyhow::{Context, Result};
use instructgen::bootstrap::PipelineConfig;

/// Load the pipeline config file when given, else defaults.
pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let config = match path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => PipelineConfig::default(),
    };
    Ok(config)
}

/// Every run announces what determinism hinges on.
pub fn announce(config: &PipelineConfig) {
    eprintln!(
        "run: config_digest={} rng_seed={}",
        config.digest(),
        config.rng_seed
    );
}

/// Announce variant for commands configured by flags rather than a pipeline
/// config file: the digest covers the effective parameters.
pub fn announce_params(params: &serde_json::Value, seed: u64) {
    eprintln!(
        "run: config_digest={} rng_seed={seed}",
        instructgen::digest::sha256_hex(params.to_string().as_bytes())
    );
}
