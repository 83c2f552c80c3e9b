use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Region;
use crate::volume::{Geometry, LabelVolume};

/// A model's output labels before harmonization; any value 0..=255.
#[derive(Debug, Clone, PartialEq)]
pub struct RawLabelMap {
    pub geom: Geometry,
    pub data: Vec<u8>,
}

/// How one model's output labels map onto the canonical scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScheme {
    pub model: String,
    /// Source label → canonical label. Label 0 maps to 0 unless listed.
    #[serde(default)]
    pub mapping: BTreeMap<String, u8>,
    /// Source labels discarded to background.
    #[serde(default)]
    pub drop: Vec<u8>,
    /// Canonical regions the model never produces; their metric cells are
    /// reported as not applicable.
    #[serde(default)]
    pub absent: Vec<Region>,
}

impl LabelScheme {
    pub fn identity(model: &str) -> Self {
        LabelScheme {
            model: model.to_string(),
            mapping: (0..=3u8).map(|v| (v.to_string(), v)).collect(),
            drop: Vec::new(),
            absent: Vec::new(),
        }
    }

    /// Dense lookup table; `None` marks unmapped source labels.
    pub fn table(&self) -> Result<[Option<u8>; 256]> {
        let mut t = [None; 256];
        t[0] = Some(0);
        for (k, &v) in &self.mapping {
            let src: u8 = k
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("scheme {}: source label {k:?}", self.model)))?;
            if v > 3 {
                return Err(Error::InvalidConfig(format!(
                    "scheme {}: target {v} outside the canonical range",
                    self.model
                )));
            }
            t[src as usize] = Some(v);
        }
        for &d in &self.drop {
            t[d as usize] = Some(0);
        }
        Ok(t)
    }

    pub fn is_applicable(&self, region: Region) -> bool {
        if self.absent.contains(&region) {
            return false;
        }
        // Composites are not applicable when every constituent is absent.
        !region
            .labels()
            .iter()
            .all(|&l| self.absent.iter().any(|a| a.labels() == [l]))
    }
}

/// Maps a model output onto the canonical scheme.
pub fn harmonize(pred: &RawLabelMap, scheme: &LabelScheme) -> Result<LabelVolume> {
    let table = scheme.table()?;
    let data = pred
        .data
        .iter()
        .map(|&v| table[v as usize].ok_or(Error::UnmappedLabel(v as i64)))
        .collect::<Result<Vec<u8>>>()?;
    LabelVolume::new(pred.geom.clone(), data)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SchemeFile {
    #[serde(default, rename = "scheme")]
    pub schemes: Vec<LabelScheme>,
}

impl SchemeFile {
    pub fn parse(text: &str) -> Result<Self> {
        let f: SchemeFile = toml::from_str(text).map_err(|e| Error::Parse(format!("scheme file: {e}")))?;
        for s in &f.schemes {
            s.table()?;
        }
        Ok(f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Scheme for `model`, or the identity scheme.
    pub fn get(&self, model: &str) -> LabelScheme {
        self.schemes
            .iter()
            .find(|s| s.model == model)
            .cloned()
            .unwrap_or_else(|| LabelScheme::identity(model))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(data: Vec<u8>) -> RawLabelMap {
        RawLabelMap {
            geom: Geometry::axis_aligned([data.len(), 1, 1], [1.0; 3], [0.0; 3]).unwrap(),
            data,
        }
    }

    #[test]
    fn identity_is_noop() {
        let r = raw(vec![0, 1, 2, 3, 2]);
        assert_eq!(harmonize(&r, &LabelScheme::identity("m")).unwrap().data, r.data);
    }

    #[test]
    fn remaps_drops_and_rejects() {
        let text = r#"
            [[scheme]]
            model = "brats"
            mapping = { "4" = 1, "2" = 2, "1" = 3 }

            [[scheme]]
            model = "deepeor"
            mapping = { "1" = 1, "2" = 2 }
            drop = [5]
            absent = ["CAV"]
        "#;
        let f = SchemeFile::parse(text).unwrap();
        let b = f.get("brats");
        assert_eq!(harmonize(&raw(vec![0, 4, 2, 1]), &b).unwrap().data, vec![0, 1, 2, 3]);
        let d = f.get("deepeor");
        assert_eq!(harmonize(&raw(vec![1, 5, 2]), &d).unwrap().data, vec![1, 0, 2]);
        assert!(!d.is_applicable(Region::Cav));
        assert!(d.is_applicable(Region::Tc));
        assert!(d.is_applicable(Region::Et));
        assert!(matches!(harmonize(&raw(vec![7]), &d), Err(Error::UnmappedLabel(7))));
        assert_eq!(f.get("other"), LabelScheme::identity("other"));
    }

    #[test]
    fn bad_target_rejected() {
        let text = "[[scheme]]\nmodel = \"x\"\nmapping = { \"1\" = 9 }\n";
        assert!(SchemeFile::parse(text).is_err());
    }
}
