//! Optional TOML configuration shared by all subcommands. Command-line
//! flags override anything set here.

use std::path::Path;

use eorkit::phantom::BaselineConfig;
use eorkit::preprocess::PipelineConfig;
use serde::Deserialize;

use crate::Failure;

/// ```toml
/// seed = 7
/// jobs = 2
/// empty_dice = "one"        # or "undefined"
/// ci_method = "t"           # or "bootstrap"
/// confidence = 0.95
/// threshold_cm3 = 0.1
///
/// [pipeline.registration]
/// max_samples = 100000
///
/// [baseline]
/// tau_ed_flair = 1.5
/// ```
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub empty_dice: Option<String>,
    pub ci_method: Option<String>,
    pub confidence: Option<f64>,
    pub threshold_cm3: Option<f64>,
    pub atlas: Option<std::path::PathBuf>,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::input("Io", format!("{}: {e}", path.display())))?;
        let cfg: FileConfig =
            toml::from_str(&text).map_err(|e| Failure::input("InvalidConfig", format!("{}: {e}", path.display())))?;
        cfg.pipeline.registration.validate()?;
        Ok(cfg)
    }
}
