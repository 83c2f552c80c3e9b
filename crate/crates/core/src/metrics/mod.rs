//! Per-case segmentation metrics.
//!
//! Overlap scores are computed from exact integer voxel counts, so a value
//! such as Dice is a single division of two integers converted to `f64`.
//! A metric that is undefined for the inputs (for example Dice of two empty
//! masks under [`EmptyPolicy::Undefined`]) is `None`.

mod surface;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use surface::{hausdorff95, percentile_linear, surface_voxels};
pub(crate) use surface::squared_edt;

use crate::error::{Error, Result};
use crate::volume::{Geometry, LabelVolume};

/// A canonical label or one of the BraTS composites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    #[serde(rename = "ET")]
    Et,
    #[serde(rename = "ED")]
    Ed,
    #[serde(rename = "CAV")]
    Cav,
    /// Whole tumor: every non-background label.
    #[serde(rename = "WT")]
    Wt,
    /// Tumor core: enhancing tumor plus cavity/necrosis.
    #[serde(rename = "TC")]
    Tc,
}

impl Region {
    pub const ALL: [Region; 5] = [Region::Et, Region::Ed, Region::Cav, Region::Wt, Region::Tc];
    pub const LABELS: [Region; 3] = [Region::Et, Region::Ed, Region::Cav];
    pub const BRATS: [Region; 3] = [Region::Et, Region::Wt, Region::Tc];

    /// Label values belonging to the region.
    pub fn labels(self) -> &'static [u8] {
        match self {
            Region::Et => &[1],
            Region::Ed => &[2],
            Region::Cav => &[3],
            Region::Wt => &[1, 2, 3],
            Region::Tc => &[1, 3],
        }
    }

    #[inline]
    pub fn contains(self, label: u8) -> bool {
        match self {
            Region::Et => label == 1,
            Region::Ed => label == 2,
            Region::Cav => label == 3,
            Region::Wt => (1..=3).contains(&label),
            Region::Tc => label == 1 || label == 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::Et => "ET",
            Region::Ed => "ED",
            Region::Cav => "CAV",
            Region::Wt => "WT",
            Region::Tc => "TC",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ET" => Ok(Region::Et),
            "ED" => Ok(Region::Ed),
            "CAV" | "NEC" => Ok(Region::Cav),
            "WT" => Ok(Region::Wt),
            "TC" => Ok(Region::Tc),
            other => Err(Error::Parse(format!("unknown region {other:?}"))),
        }
    }
}

/// How to score two empty masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmptyPolicy {
    /// Both-empty scores 1.0.
    One,
    /// Both-empty is undefined and excluded from aggregates.
    #[default]
    Undefined,
}

impl FromStr for EmptyPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(EmptyPolicy::One),
            "undefined" => Ok(EmptyPolicy::Undefined),
            other => Err(Error::Parse(format!("empty policy {other:?}"))),
        }
    }
}

/// Foreground voxel set of one region, on a label volume's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub geom: Geometry,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(geom: Geometry, data: Vec<bool>) -> Result<Self> {
        if data.len() != geom.len() {
            return Err(Error::GeometryMismatch(format!(
                "mask length {} != {} voxels",
                data.len(),
                geom.len()
            )));
        }
        Ok(BinaryMask { geom, data })
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }
}

pub fn extract_mask(lv: &LabelVolume, target: Region) -> BinaryMask {
    BinaryMask {
        geom: lv.geom.clone(),
        data: lv.data.iter().map(|&v| target.contains(v)).collect(),
    }
}

/// Voxel-wise confusion counts of `pred` against `gt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn gt_count(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn pred_count(&self) -> u64 {
        self.tp + self.fp
    }
}

pub fn confusion(gt: &BinaryMask, pred: &BinaryMask) -> Result<Confusion> {
    gt.geom.ensure_matches(&pred.geom)?;
    let mut c = Confusion::default();
    for (&g, &p) in gt.data.iter().zip(pred.data.iter()) {
        match (g, p) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn both_empty(c: &Confusion, policy: EmptyPolicy) -> Option<Option<f64>> {
    if c.gt_count() == 0 && c.pred_count() == 0 {
        Some(match policy {
            EmptyPolicy::One => Some(1.0),
            EmptyPolicy::Undefined => None,
        })
    } else {
        None
    }
}

pub fn dice_from(c: &Confusion, policy: EmptyPolicy) -> Option<f64> {
    both_empty(c, policy).unwrap_or_else(|| Some((2 * c.tp) as f64 / (c.gt_count() + c.pred_count()) as f64))
}

pub fn jaccard_from(c: &Confusion, policy: EmptyPolicy) -> Option<f64> {
    both_empty(c, policy).unwrap_or_else(|| Some(c.tp as f64 / (c.tp + c.fp + c.fn_) as f64))
}

pub fn vsi_from(c: &Confusion, policy: EmptyPolicy) -> Option<f64> {
    both_empty(c, policy).unwrap_or_else(|| {
        let a = c.gt_count();
        let b = c.pred_count();
        // 1 − |a − b|/(a + b) written as 2·min(a, b)/(a + b): same value,
        // one rounding, and never below Dice = 2·tp/(a + b) in floating point.
        Some((2 * a.min(b)) as f64 / (a + b) as f64)
    })
}

pub fn sensitivity_from(c: &Confusion) -> Option<f64> {
    (c.gt_count() > 0).then(|| c.tp as f64 / c.gt_count() as f64)
}

pub fn specificity_from(c: &Confusion) -> Option<f64> {
    (c.tn + c.fp > 0).then(|| c.tn as f64 / (c.tn + c.fp) as f64)
}

/// `2|A∩B| / (|A|+|B|)`.
pub fn dice(gt: &BinaryMask, pred: &BinaryMask, policy: EmptyPolicy) -> Result<Option<f64>> {
    Ok(dice_from(&confusion(gt, pred)?, policy))
}

/// `|A∩B| / |A∪B|`.
pub fn jaccard(gt: &BinaryMask, pred: &BinaryMask, policy: EmptyPolicy) -> Result<Option<f64>> {
    Ok(jaccard_from(&confusion(gt, pred)?, policy))
}

/// `1 − ||A|−|B|| / (|A|+|B|)`.
pub fn volumetric_similarity(gt: &BinaryMask, pred: &BinaryMask, policy: EmptyPolicy) -> Result<Option<f64>> {
    Ok(vsi_from(&confusion(gt, pred)?, policy))
}

/// `(TP/(TP+FN), TN/(TN+FP))`; sensitivity is undefined for an empty `gt`.
pub fn sensitivity_specificity(gt: &BinaryMask, pred: &BinaryMask) -> Result<(Option<f64>, Option<f64>)> {
    let c = confusion(gt, pred)?;
    Ok((sensitivity_from(&c), specificity_from(&c)))
}

pub fn volume_cm3(mask: &BinaryMask, spacing: [f64; 3]) -> f64 {
    mask.count() as f64 * spacing[0] * spacing[1] * spacing[2] / 1000.0
}

/// Volume of one region of a label map, in cm³.
pub fn region_volume_cm3(lv: &LabelVolume, region: Region) -> f64 {
    let n = lv.data.iter().filter(|&&v| region.contains(v)).count();
    n as f64 * lv.geom.voxel_volume_mm3() / 1000.0
}

/// All metrics for one region of one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub case_id: String,
    pub region: Region,
    pub dice: Option<f64>,
    pub jaccard: Option<f64>,
    pub vsi: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub hausdorff95: Option<f64>,
    pub gt_volume_cm3: f64,
    pub pred_volume_cm3: f64,
}

pub fn evaluate_region(
    case_id: &str,
    gt: &LabelVolume,
    pred: &LabelVolume,
    region: Region,
    policy: EmptyPolicy,
) -> Result<MetricRecord> {
    gt.geom.ensure_matches(&pred.geom)?;
    let a = extract_mask(gt, region);
    let b = extract_mask(pred, region);
    let c = confusion(&a, &b)?;
    let vox = gt.geom.voxel_volume_mm3() / 1000.0;
    Ok(MetricRecord {
        case_id: case_id.to_string(),
        region,
        dice: dice_from(&c, policy),
        jaccard: jaccard_from(&c, policy),
        vsi: vsi_from(&c, policy),
        sensitivity: sensitivity_from(&c),
        specificity: specificity_from(&c),
        hausdorff95: hausdorff95(&a, &b, gt.geom.spacing)?,
        gt_volume_cm3: c.gt_count() as f64 * vox,
        pred_volume_cm3: c.pred_count() as f64 * vox,
    })
}

/// One record per requested region, in the order given.
pub fn evaluate_case(
    case_id: &str,
    gt: &LabelVolume,
    pred: &LabelVolume,
    regions: &[Region],
    policy: EmptyPolicy,
) -> Result<Vec<MetricRecord>> {
    regions
        .iter()
        .map(|&r| evaluate_region(case_id, gt, pred, r, policy))
        .collect()
}
