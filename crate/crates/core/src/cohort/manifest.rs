use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Timepoint {
    #[serde(rename = "preop")]
    Preop,
    /// Early postoperative scan, within 72 h of surgery.
    #[serde(rename = "EPS")]
    Eps,
    /// Late postoperative scan.
    #[serde(rename = "LPS")]
    Lps,
    #[serde(rename = "followup")]
    Followup,
}

impl Timepoint {
    pub fn name(self) -> &'static str {
        match self {
            Timepoint::Preop => "preop",
            Timepoint::Eps => "EPS",
            Timepoint::Lps => "LPS",
            Timepoint::Followup => "followup",
        }
    }
}

impl fmt::Display for Timepoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Timepoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "preop" => Ok(Timepoint::Preop),
            "EPS" | "eps" => Ok(Timepoint::Eps),
            "LPS" | "lps" => Ok(Timepoint::Lps),
            "followup" => Ok(Timepoint::Followup),
            other => Err(Error::Parse(format!("timepoint {other:?}"))),
        }
    }
}

/// One manifest entry: ground truth plus one prediction per model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCase {
    pub id: String,
    #[serde(default)]
    pub center: String,
    pub timepoint: Timepoint,
    pub gt: PathBuf,
    #[serde(default)]
    pub predictions: BTreeMap<String, PathBuf>,
}

/// Cohort manifest, stored as TOML:
///
/// ```toml
/// seed = 7                      # optional, records how a phantom cohort was made
///
/// [[case]]
/// id = "case000"
/// center = "phantom"
/// timepoint = "EPS"
/// gt = "case000/gt.nii.gz"
/// [case.predictions]
/// baseline = "case000/pred_baseline.nii.gz"
/// ```
///
/// Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Free-form generator settings for synthetic cohorts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<toml::Value>,
    #[serde(default, rename = "case")]
    pub cases: Vec<ManifestCase>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut m: Manifest = toml::from_str(text).map_err(|e| Error::Parse(format!("manifest: {e}")))?;
        m.base_dir = base_dir.into();
        let mut seen = std::collections::HashSet::new();
        for c in &m.cases {
            if !seen.insert(c.id.as_str()) {
                return Err(Error::Parse(format!("manifest: duplicate case id {:?}", c.id)));
            }
        }
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(format!("manifest: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Model names across all cases, sorted.
    pub fn models(&self) -> Vec<String> {
        let mut m: Vec<String> = self
            .cases
            .iter()
            .flat_map(|c| c.predictions.keys().cloned())
            .collect();
        m.sort();
        m.dedup();
        m
    }
}
