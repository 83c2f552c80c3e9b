//! Extent-of-resection classification.
//!
//! A scan is a gross total resection (GTR) when its residual enhancing
//! tumor volume is strictly below the threshold (0.1 cm³ by default) and
//! residual tumor (RT) otherwise.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD_CM3: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EorClass {
    #[serde(rename = "GTR")]
    Gtr,
    #[serde(rename = "RT")]
    Rt,
}

impl fmt::Display for EorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EorClass::Gtr => "GTR",
            EorClass::Rt => "RT",
        })
    }
}

impl FromStr for EorClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "GTR" => Ok(EorClass::Gtr),
            "RT" => Ok(EorClass::Rt),
            other => Err(Error::Parse(format!("EOR class {other:?}"))),
        }
    }
}

/// How a *prediction* qualifies as residual tumor for the true-positive
/// subgroup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictedRtRule {
    /// Same volume threshold as the ground truth.
    #[default]
    Threshold,
    /// Any non-empty predicted enhancing tumor.
    Nonzero,
}

impl FromStr for PredictedRtRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(PredictedRtRule::Threshold),
            "nonzero" => Ok(PredictedRtRule::Nonzero),
            other => Err(Error::Parse(format!("predicted-RT rule {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EorConfig {
    pub threshold_cm3: f64,
    pub predicted_rt_rule: PredictedRtRule,
}

impl Default for EorConfig {
    fn default() -> Self {
        EorConfig {
            threshold_cm3: DEFAULT_THRESHOLD_CM3,
            predicted_rt_rule: PredictedRtRule::Threshold,
        }
    }
}

impl EorConfig {
    pub fn with_threshold(threshold_cm3: f64) -> Result<Self> {
        let cfg = EorConfig {
            threshold_cm3,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_cm3 > 0.0) || !self.threshold_cm3.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "EOR threshold must be positive, got {}",
                self.threshold_cm3
            )));
        }
        Ok(())
    }
}

/// GTR iff `et_volume_cm3 < threshold`.
pub fn classify_eor(et_volume_cm3: f64, cfg: &EorConfig) -> Result<EorClass> {
    if et_volume_cm3 < 0.0 || et_volume_cm3.is_nan() {
        return Err(Error::NegativeVolume(et_volume_cm3));
    }
    Ok(if et_volume_cm3 < cfg.threshold_cm3 {
        EorClass::Gtr
    } else {
        EorClass::Rt
    })
}

/// Class of a predicted volume under the configured predicted-RT rule.
pub fn classify_prediction(et_volume_cm3: f64, cfg: &EorConfig) -> Result<EorClass> {
    match cfg.predicted_rt_rule {
        PredictedRtRule::Threshold => classify_eor(et_volume_cm3, cfg),
        PredictedRtRule::Nonzero => {
            if et_volume_cm3 < 0.0 || et_volume_cm3.is_nan() {
                return Err(Error::NegativeVolume(et_volume_cm3));
            }
            Ok(if et_volume_cm3 > 0.0 { EorClass::Rt } else { EorClass::Gtr })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subgroup {
    All,
    /// Residual tumor in the ground truth.
    Positive,
    /// Residual tumor in both ground truth and prediction.
    TruePositive,
}

impl Subgroup {
    pub const ALL: [Subgroup; 3] = [Subgroup::All, Subgroup::Positive, Subgroup::TruePositive];

    pub fn name(self) -> &'static str {
        match self {
            Subgroup::All => "All",
            Subgroup::Positive => "Positive",
            Subgroup::TruePositive => "TruePositive",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Subgroup::All => "All subjects",
            Subgroup::Positive => "Positive subjects",
            Subgroup::TruePositive => "True positive subjects",
        }
    }
}

impl FromStr for Subgroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "All" => Ok(Subgroup::All),
            "Positive" => Ok(Subgroup::Positive),
            "TruePositive" => Ok(Subgroup::TruePositive),
            other => Err(Error::Parse(format!("subgroup {other:?}"))),
        }
    }
}

pub fn assign_subgroups(gt: EorClass, pred: EorClass) -> Vec<Subgroup> {
    let mut out = vec![Subgroup::All];
    if gt == EorClass::Rt {
        out.push(Subgroup::Positive);
        if pred == EorClass::Rt {
            out.push(Subgroup::TruePositive);
        }
    }
    out
}

/// Scores for one class treated as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of ground-truth cases of this class.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    /// Unweighted mean over GTR and RT.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub gtr: ClassScores,
    pub rt: ClassScores,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    /// `[[gt GTR→pred GTR, gt GTR→pred RT], [gt RT→pred GTR, gt RT→pred RT]]`.
    pub confusion: [[usize; 2]; 2],
    pub n: usize,
    /// Set when a class has zero denominators and was scored 0.
    pub degenerate_classes: Vec<EorClass>,
}

fn class_scores(pairs: &[(EorClass, EorClass)], class: EorClass) -> (ClassScores, bool) {
    let tp = pairs.iter().filter(|(g, p)| *g == class && *p == class).count();
    let pred_pos = pairs.iter().filter(|(_, p)| *p == class).count();
    let gt_pos = pairs.iter().filter(|(g, _)| *g == class).count();
    let precision = if pred_pos > 0 { tp as f64 / pred_pos as f64 } else { 0.0 };
    let recall = if gt_pos > 0 { tp as f64 / gt_pos as f64 } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (
        ClassScores {
            precision,
            recall,
            f1,
            support: gt_pos,
        },
        pred_pos == 0 || gt_pos == 0,
    )
}

/// Macro-averaged precision/recall/F1 over {GTR, RT} plus accuracy.
pub fn classification_metrics(pairs: &[(EorClass, EorClass)]) -> Result<ClassificationMetrics> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (gtr, gtr_deg) = class_scores(pairs, EorClass::Gtr);
    let (rt, rt_deg) = class_scores(pairs, EorClass::Rt);
    let correct = pairs.iter().filter(|(g, p)| g == p).count();
    let n = pairs.len();
    let accuracy = correct as f64 / n as f64;
    let mut confusion = [[0usize; 2]; 2];
    for (g, p) in pairs {
        confusion[(*g == EorClass::Rt) as usize][(*p == EorClass::Rt) as usize] += 1;
    }
    let mut degenerate_classes = Vec::new();
    if gtr_deg {
        degenerate_classes.push(EorClass::Gtr);
    }
    if rt_deg {
        degenerate_classes.push(EorClass::Rt);
    }
    if !degenerate_classes.is_empty() {
        log::warn!("classification metrics: degenerate class(es) {degenerate_classes:?} scored 0");
    }
    Ok(ClassificationMetrics {
        precision: (gtr.precision + rt.precision) / 2.0,
        recall: (gtr.recall + rt.recall) / 2.0,
        f1: (gtr.f1 + rt.f1) / 2.0,
        accuracy,
        gtr,
        rt,
        // Summed over both classes, micro precision and recall both reduce
        // to correct / total.
        micro_precision: accuracy,
        micro_recall: accuracy,
        micro_f1: accuracy,
        confusion,
        n,
        degenerate_classes,
    })
}
