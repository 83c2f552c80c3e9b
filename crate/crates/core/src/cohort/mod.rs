//! Cohort assembly, label harmonization, aggregate statistics and reports.

mod manifest;
mod quartile;
mod report;
mod scheme;
pub mod stats;
pub mod table;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use manifest::{Manifest, ManifestCase, Timepoint};
pub use quartile::{quartile_groups, QuartileBin, QuartileGroups};
pub use report::{
    build_report, ClassificationBlock, CohortSummary, QuartileBlock, ReportConfig, SubgroupCount,
    SummaryCell, TimepointFilter, VolumeRow,
};
pub use scheme::{harmonize, LabelScheme, RawLabelMap, SchemeFile};
pub use stats::{summarize_mean_ci, summarize_median_iqr, CiMethod, MeanCi, MedianIqr};
pub use table::{Metric, MetricRow};

use crate::eor::EorConfig;
use crate::error::{Error, Result};
use crate::metrics::{evaluate_case, region_volume_cm3, EmptyPolicy, Region};
use crate::nifti;
use crate::volume::{Label, LabelVolume};

/// One scan with its ground truth and harmonized predictions.
#[derive(Debug, Clone)]
pub struct CaseRecord {
    pub case_id: String,
    pub center: String,
    pub timepoint: Timepoint,
    pub gt: LabelVolume,
    pub predictions: BTreeMap<String, LabelVolume>,
}

impl CaseRecord {
    pub fn gt_et_cm3(&self) -> f64 {
        region_volume_cm3(&self.gt, Region::Et)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateConfig {
    pub regions: Vec<Region>,
    pub empty_policy: EmptyPolicy,
    pub eor: EorConfig,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            regions: Region::ALL.to_vec(),
            empty_policy: EmptyPolicy::Undefined,
            eor: EorConfig::default(),
        }
    }
}

/// Metric rows for every model of one in-memory case.
pub fn evaluate_record(case: &CaseRecord, schemes: &SchemeFile, cfg: &EvaluateConfig) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    let gt_et = case.gt_et_cm3();
    for (model, pred) in &case.predictions {
        let scheme = schemes.get(model);
        let pred_et = region_volume_cm3(pred, Region::Et);
        for rec in evaluate_case(&case.case_id, &case.gt, pred, &cfg.regions, cfg.empty_policy)? {
            rows.push(MetricRow {
                center: case.center.clone(),
                timepoint: case.timepoint,
                model: model.clone(),
                applicable: scheme.is_applicable(rec.region),
                gt_et_cm3: gt_et,
                pred_et_cm3: pred_et,
                record: rec,
            });
        }
    }
    Ok(rows)
}

/// A case (or one model of a case) that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFailure {
    pub case_id: String,
    pub model: Option<String>,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CohortEvaluation {
    pub rows: Vec<MetricRow>,
    pub failures: Vec<CaseFailure>,
}

fn failure(case_id: &str, model: Option<&str>, e: &Error) -> CaseFailure {
    CaseFailure {
        case_id: case_id.to_string(),
        model: model.map(str::to_string),
        code: e.code().to_string(),
        message: e.to_string(),
    }
}

/// Loads a raw model output and harmonizes it.
pub fn load_prediction(path: &std::path::Path, scheme: &LabelScheme) -> Result<LabelVolume> {
    let (_, grid) = nifti::read_nifti_file(path)?;
    let raw = RawLabelMap {
        data: nifti::grid_to_raw_labels(&grid)?,
        geom: grid.geom,
    };
    harmonize(&raw, scheme)
}

fn evaluate_manifest_case(
    manifest: &Manifest,
    case: &ManifestCase,
    schemes: &SchemeFile,
    cfg: &EvaluateConfig,
) -> (Vec<MetricRow>, Vec<CaseFailure>) {
    let gt = match nifti::read_label_file(manifest.resolve(&case.gt)) {
        Ok(g) => g,
        Err(e) => return (Vec::new(), vec![failure(&case.id, None, &e)]),
    };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (model, path) in &case.predictions {
        let scheme = schemes.get(model);
        let record = load_prediction(&manifest.resolve(path), &scheme).and_then(|pred| {
            let rec = CaseRecord {
                case_id: case.id.clone(),
                center: case.center.clone(),
                timepoint: case.timepoint,
                gt: gt.clone(),
                predictions: BTreeMap::from([(model.clone(), pred)]),
            };
            evaluate_record(&rec, schemes, cfg)
        });
        match record {
            Ok(r) => rows.extend(r),
            Err(e) => failures.push(failure(&case.id, Some(model), &e)),
        }
    }
    (rows, failures)
}

/// Evaluates every case of a manifest in parallel; output keeps manifest
/// order and failing cases are reported rather than dropped.
pub fn evaluate_manifest(manifest: &Manifest, schemes: &SchemeFile, cfg: &EvaluateConfig) -> CohortEvaluation {
    let per_case: Vec<_> = manifest
        .cases
        .par_iter()
        .map(|c| evaluate_manifest_case(manifest, c, schemes, cfg))
        .collect();
    let mut out = CohortEvaluation::default();
    for (rows, fails) in per_case {
        out.rows.extend(rows);
        out.failures.extend(fails);
    }
    out
}

/// Canonical label counts of a volume, for quick summaries.
pub fn label_counts(lv: &LabelVolume) -> [usize; 4] {
    [
        lv.count(Label::Background),
        lv.count(Label::Et),
        lv.count(Label::Ed),
        lv.count(Label::Cav),
    ]
}
