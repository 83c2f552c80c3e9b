//! Aggregation of per-case metric rows into report tables.
//!
//! Layout of the rendered Markdown:
//!
//! * a volume table per timepoint filter (median and interquartile range of
//!   ground-truth volumes, GTR/RT counts);
//! * a segmentation table per timepoint filter whose rows are subgroup ×
//!   label × metric and whose columns are models, each cell
//!   `mean (lo, hi)`; followed by the GTR-versus-RT classification block;
//! * a BraTS-style table of Dice, sensitivity, specificity and HD95 over
//!   ET, WT and TC;
//! * per-model quartile bins of enhancing tumor Dice by ground-truth volume.
//!
//! Cells for regions a model's scheme declares absent are left blank.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::quartile::{quartile_groups, QuartileGroups};
use super::stats::{population_sd, summarize_mean_ci, summarize_median_iqr, CiMethod, DEFAULT_BOOTSTRAP_SEED};
use super::table::{Metric, MetricRow};
use super::Timepoint;
use crate::eor::{assign_subgroups, classification_metrics, classify_eor, classify_prediction, ClassificationMetrics, EorClass, EorConfig, Subgroup};
use crate::error::{Error, Result};
use crate::metrics::Region;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TimepointFilter {
    /// Every case.
    All,
    Eps,
    Lps,
}

impl TimepointFilter {
    pub const REPORTED: [TimepointFilter; 3] = [TimepointFilter::All, TimepointFilter::Eps, TimepointFilter::Lps];

    pub fn accepts(self, tp: Timepoint) -> bool {
        match self {
            TimepointFilter::All => true,
            TimepointFilter::Eps => tp == Timepoint::Eps,
            TimepointFilter::Lps => tp == Timepoint::Lps,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            TimepointFilter::All => "Entire cohort",
            TimepointFilter::Eps => "Early postoperative scans",
            TimepointFilter::Lps => "Late postoperative scans",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportConfig {
    pub eor: EorConfig,
    pub ci_method: CiMethod,
    pub confidence: f64,
    pub seed: u64,
    /// Restrict to these models (all when `None`).
    pub models: Option<Vec<String>>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            eor: EorConfig::default(),
            ci_method: CiMethod::Bootstrap,
            confidence: 0.95,
            seed: DEFAULT_BOOTSTRAP_SEED,
            models: None,
        }
    }
}

/// Aggregate of one metric for one (filter, subgroup, model, region).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub filter: TimepointFilter,
    pub subgroup: Subgroup,
    pub model: String,
    pub region: Region,
    pub metric: Metric,
    pub applicable: bool,
    /// Values entering the statistics.
    pub n: usize,
    /// Cases in the subgroup whose value was undefined and excluded.
    pub n_undefined: usize,
    pub mean: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub sd: Option<f64>,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupCount {
    pub filter: TimepointFilter,
    pub model: String,
    pub subgroup: Subgroup,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationBlock {
    pub filter: TimepointFilter,
    pub model: String,
    pub metrics: Option<ClassificationMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeRow {
    pub filter: TimepointFilter,
    pub n: usize,
    pub gtr: usize,
    pub rt: usize,
    /// `(region, median, q1, q3)` over ground-truth volumes in cm³.
    pub volumes: Vec<(Region, f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileBlock {
    pub model: String,
    pub groups: Option<QuartileGroups>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub models: Vec<String>,
    pub cells: Vec<SummaryCell>,
    pub subgroup_counts: Vec<SubgroupCount>,
    pub classification: Vec<ClassificationBlock>,
    pub volumes: Vec<VolumeRow>,
    pub quartiles: Vec<QuartileBlock>,
}

/// Per-(case, model) facts shared by every region row.
struct CaseModel<'a> {
    timepoint: Timepoint,
    gt_class: EorClass,
    pred_class: EorClass,
    rows: BTreeMap<Region, &'a MetricRow>,
}

const SEGMENTATION_METRICS: [Metric; 3] = [Metric::Dice, Metric::Jaccard, Metric::Vsi];
const BRATS_METRICS: [Metric; 4] = [Metric::Dice, Metric::Sensitivity, Metric::Specificity, Metric::Hausdorff95];

/// Aggregates metric rows into a [`CohortSummary`].
pub fn build_report(rows: &[MetricRow], cfg: &ReportConfig) -> Result<CohortSummary> {
    cfg.eor.validate()?;
    let selected = |m: &str| cfg.models.as_ref().map_or(true, |ms| ms.iter().any(|x| x == m));
    let mut models: Vec<String> = rows.iter().map(|r| r.model.clone()).filter(|m| selected(m)).collect();
    models.sort();
    models.dedup();

    // (case order of first appearance, model) → facts
    let mut case_order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<(usize, String), CaseModel> = BTreeMap::new();
    for r in rows.iter().filter(|r| selected(&r.model)) {
        let ci = match case_order.iter().position(|c| *c == r.record.case_id) {
            Some(i) => i,
            None => {
                case_order.push(r.record.case_id.clone());
                case_order.len() - 1
            }
        };
        let key = (ci, r.model.clone());
        if !grouped.contains_key(&key) {
            grouped.insert(
                key.clone(),
                CaseModel {
                    timepoint: r.timepoint,
                    gt_class: classify_eor(r.gt_et_cm3, &cfg.eor)?,
                    pred_class: classify_prediction(r.pred_et_cm3, &cfg.eor)?,
                    rows: BTreeMap::new(),
                },
            );
        }
        let cm = grouped.get_mut(&key).expect("inserted above");
        if cm.rows.insert(r.record.region, r).is_some() {
            return Err(Error::Parse(format!(
                "duplicate row for case {} model {} region {}",
                r.record.case_id, r.model, r.record.region
            )));
        }
    }

    let mut summary = CohortSummary {
        models: models.clone(),
        cells: Vec::new(),
        subgroup_counts: Vec::new(),
        classification: Vec::new(),
        volumes: Vec::new(),
        quartiles: Vec::new(),
    };

    let regions: BTreeSet<Region> = grouped.values().flat_map(|c| c.rows.keys().copied()).collect();

    for filter in TimepointFilter::REPORTED {
        for model in &models {
            let members: Vec<&CaseModel> = grouped
                .iter()
                .filter(|((_, m), c)| m == model && filter.accepts(c.timepoint))
                .map(|(_, c)| c)
                .collect();
            for sg in Subgroup::ALL {
                let in_sg: Vec<&&CaseModel> = members
                    .iter()
                    .filter(|c| assign_subgroups(c.gt_class, c.pred_class).contains(&sg))
                    .collect();
                summary.subgroup_counts.push(SubgroupCount {
                    filter,
                    model: model.clone(),
                    subgroup: sg,
                    n: in_sg.len(),
                });
                for &region in &regions {
                    let applicable = in_sg
                        .iter()
                        .filter_map(|c| c.rows.get(&region))
                        .all(|r| r.applicable)
                        && members.iter().filter_map(|c| c.rows.get(&region)).all(|r| r.applicable);
                    for metric in [
                        Metric::Dice,
                        Metric::Jaccard,
                        Metric::Vsi,
                        Metric::Sensitivity,
                        Metric::Specificity,
                        Metric::Hausdorff95,
                    ] {
                        let all: Vec<Option<f64>> = in_sg
                            .iter()
                            .filter_map(|c| c.rows.get(&region))
                            .map(|r| metric.get(&r.record))
                            .collect();
                        let values: Vec<f64> = all.iter().flatten().copied().collect();
                        let mut cell = SummaryCell {
                            filter,
                            subgroup: sg,
                            model: model.clone(),
                            region,
                            metric,
                            applicable,
                            n: values.len(),
                            n_undefined: all.len() - values.len(),
                            mean: None,
                            ci_low: None,
                            ci_high: None,
                            sd: None,
                            median: None,
                            q1: None,
                            q3: None,
                        };
                        if applicable && !values.is_empty() {
                            let ci = summarize_mean_ci(&values, cfg.confidence, cfg.ci_method, cfg.seed)?;
                            let mi = summarize_median_iqr(&values)?;
                            cell.mean = Some(ci.mean);
                            cell.ci_low = Some(ci.lo);
                            cell.ci_high = Some(ci.hi);
                            cell.sd = Some(population_sd(&values)?);
                            cell.median = Some(mi.median);
                            cell.q1 = Some(mi.q1);
                            cell.q3 = Some(mi.q3);
                        }
                        summary.cells.push(cell);
                    }
                }
            }
            let pairs: Vec<(EorClass, EorClass)> = members.iter().map(|c| (c.gt_class, c.pred_class)).collect();
            summary.classification.push(ClassificationBlock {
                filter,
                model: model.clone(),
                metrics: if pairs.is_empty() {
                    None
                } else {
                    Some(classification_metrics(&pairs)?)
                },
            });
        }

        // Ground-truth volumes, one entry per case.
        let mut per_case: BTreeMap<usize, (EorClass, BTreeMap<Region, f64>)> = BTreeMap::new();
        for ((ci, _), c) in grouped.iter().filter(|(_, c)| filter.accepts(c.timepoint)) {
            let e = per_case.entry(*ci).or_insert_with(|| (c.gt_class, BTreeMap::new()));
            for (region, r) in &c.rows {
                e.1.insert(*region, r.record.gt_volume_cm3);
            }
        }
        let mut volumes = Vec::new();
        for region in Region::LABELS {
            let v: Vec<f64> = per_case.values().filter_map(|(_, m)| m.get(&region).copied()).collect();
            if !v.is_empty() {
                let q = summarize_median_iqr(&v)?;
                volumes.push((region, q.median, q.q1, q.q3));
            }
        }
        summary.volumes.push(VolumeRow {
            filter,
            n: per_case.len(),
            gtr: per_case.values().filter(|(c, _)| *c == EorClass::Gtr).count(),
            rt: per_case.values().filter(|(c, _)| *c == EorClass::Rt).count(),
            volumes,
        });
    }

    for model in &models {
        let points: Vec<(f64, f64)> = grouped
            .iter()
            .filter(|((_, m), c)| m == model && c.gt_class == EorClass::Rt)
            .filter_map(|(_, c)| {
                let r = c.rows.get(&Region::Et)?;
                Some((r.record.gt_volume_cm3, r.record.dice?))
            })
            .collect();
        summary.quartiles.push(match quartile_groups(&points) {
            Ok(g) => QuartileBlock {
                model: model.clone(),
                groups: Some(g),
                note: None,
            },
            Err(e) => QuartileBlock {
                model: model.clone(),
                groups: None,
                note: Some(e.to_string()),
            },
        });
    }
    Ok(summary)
}

fn f3(v: f64) -> String {
    format!("{v:.3}")
}

impl CohortSummary {
    pub fn cell(
        &self,
        filter: TimepointFilter,
        subgroup: Subgroup,
        model: &str,
        region: Region,
        metric: Metric,
    ) -> Option<&SummaryCell> {
        self.cells.iter().find(|c| {
            c.filter == filter && c.subgroup == subgroup && c.model == model && c.region == region && c.metric == metric
        })
    }

    pub fn subgroup_n(&self, filter: TimepointFilter, model: &str, subgroup: Subgroup) -> usize {
        self.subgroup_counts
            .iter()
            .find(|c| c.filter == filter && c.model == model && c.subgroup == subgroup)
            .map_or(0, |c| c.n)
    }

    pub fn classification_for(&self, filter: TimepointFilter, model: &str) -> Option<&ClassificationMetrics> {
        self.classification
            .iter()
            .find(|c| c.filter == filter && c.model == model)
            .and_then(|c| c.metrics.as_ref())
    }

    fn mean_ci_text(c: Option<&SummaryCell>) -> String {
        match c {
            Some(c) if c.applicable => match (c.mean, c.ci_low, c.ci_high) {
                (Some(m), Some(lo), Some(hi)) => format!("{} ({}, {})", f3(m), f3(lo), f3(hi)),
                _ => "-".to_string(),
            },
            _ => String::new(),
        }
    }

    /// Markdown rendering of every block.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let header = |s: &mut String, first: &[&str], models: &[String]| {
            let cols: Vec<String> = first.iter().map(|c| c.to_string()).chain(models.iter().cloned()).collect();
            let _ = writeln!(s, "| {} |", cols.join(" | "));
            let _ = writeln!(s, "|{}", "---|".repeat(cols.len()));
        };

        let _ = writeln!(s, "# Cohort report\n");
        let _ = writeln!(s, "## Ground-truth volumes\n");
        let _ = writeln!(s, "Volumes in cm³ as median (q1, q3).\n");
        let _ = writeln!(s, "| Timepoints | n | EOR GTR/RT | ET | ED | CAV |");
        let _ = writeln!(s, "|---|---|---|---|---|---|");
        for v in &self.volumes {
            let vol = |r: Region| {
                v.volumes
                    .iter()
                    .find(|x| x.0 == r)
                    .map_or("-".to_string(), |x| format!("{} ({}, {})", f3(x.1), f3(x.2), f3(x.3)))
            };
            let _ = writeln!(
                s,
                "| {} | {} | {}/{} | {} | {} | {} |",
                v.filter.title(),
                v.n,
                v.gtr,
                v.rt,
                vol(Region::Et),
                vol(Region::Ed),
                vol(Region::Cav)
            );
        }
        let _ = writeln!(s);

        for filter in TimepointFilter::REPORTED {
            let _ = writeln!(s, "## Segmentation performance: {}\n", filter.title());
            let _ = writeln!(s, "Mean (95% confidence interval); n per subgroup listed per model.\n");
            header(&mut s, &["Labels", "Metrics"], &self.models);
            for sg in Subgroup::ALL {
                let counts: Vec<String> = self
                    .models
                    .iter()
                    .map(|m| format!("n={}", self.subgroup_n(filter, m, sg)))
                    .collect();
                let _ = writeln!(s, "| *{}* | | {} |", sg.title(), counts.join(" | "));
                let regions: &[Region] = if sg == Subgroup::All { &Region::LABELS } else { &[Region::Et] };
                for &region in regions {
                    for (k, metric) in SEGMENTATION_METRICS.iter().enumerate() {
                        let label = if k == 0 { region.name() } else { "" };
                        let cells: Vec<String> = self
                            .models
                            .iter()
                            .map(|m| Self::mean_ci_text(self.cell(filter, sg, m, region, *metric)))
                            .collect();
                        let _ = writeln!(s, "| {} | {} | {} |", label, metric.name(), cells.join(" | "));
                    }
                }
            }
            let _ = writeln!(
                s,
                "| *Gross total resection versus residual tumor classification* | | {} |",
                vec![""; self.models.len()].join(" | ")
            );
            for (name, get) in [
                ("Precision", (|c: &ClassificationMetrics| c.precision) as fn(&ClassificationMetrics) -> f64),
                ("Recall", |c| c.recall),
                ("F1 Score", |c| c.f1),
                ("Accuracy", |c| c.accuracy),
            ] {
                let cells: Vec<String> = self
                    .models
                    .iter()
                    .map(|m| self.classification_for(filter, m).map_or("-".into(), |c| f3(get(c))))
                    .collect();
                let _ = writeln!(s, "| | {} | {} |", name, cells.join(" | "));
            }
            let _ = writeln!(s);
        }

        let _ = writeln!(s, "## BraTS-style metrics (entire cohort, all subjects)\n");
        let mut cols = vec!["Model".to_string(), "Statistic".to_string()];
        for metric in BRATS_METRICS {
            for region in Region::BRATS {
                cols.push(format!("{}_{}", metric.name(), region.name()));
            }
        }
        let _ = writeln!(s, "| {} |", cols.join(" | "));
        let _ = writeln!(s, "|{}", "---|".repeat(cols.len()));
        for m in &self.models {
            for (stat, get) in [
                ("Mean", (|c: &SummaryCell| c.mean) as fn(&SummaryCell) -> Option<f64>),
                ("SD", |c| c.sd),
                ("Median", |c| c.median),
                ("25 quantile", |c| c.q1),
                ("75 quantile", |c| c.q3),
            ] {
                let mut row = vec![m.clone(), stat.to_string()];
                for metric in BRATS_METRICS {
                    for region in Region::BRATS {
                        let c = self.cell(TimepointFilter::All, Subgroup::All, m, region, metric);
                        row.push(match c {
                            Some(c) if c.applicable => get(c).map_or("-".into(), f3),
                            _ => String::new(),
                        });
                    }
                }
                let _ = writeln!(s, "| {} |", row.join(" | "));
            }
        }
        let _ = writeln!(s);

        let _ = writeln!(s, "## ET Dice by ground-truth volume quartile (positive subjects)\n");
        for q in &self.quartiles {
            let _ = writeln!(s, "### {}\n", q.model);
            match &q.groups {
                Some(g) => {
                    let _ = writeln!(s, "| Quartile | ET volume range (cm³) | n | Mean Dice | Median Dice |");
                    let _ = writeln!(s, "|---|---|---|---|---|");
                    for (k, b) in g.bins.iter().enumerate() {
                        let open = if k == 0 { "[" } else { "(" };
                        let _ = writeln!(
                            s,
                            "| Q{} | {}{}, {}] | {} | {} | {} |",
                            k + 1,
                            open,
                            f3(b.lo),
                            f3(b.hi),
                            b.dice.len(),
                            b.mean_dice.map_or("-".into(), f3),
                            b.median_dice.map_or("-".into(), f3)
                        );
                    }
                }
                None => {
                    let _ = writeln!(s, "Not computed: {}", q.note.as_deref().unwrap_or(""));
                }
            }
            let _ = writeln!(s);
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Long-format CSV of every summary cell.
    pub fn cells_csv(&self) -> Result<String> {
        let mut wr = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Parse(e.to_string());
        wr.write_record([
            "filter", "subgroup", "model", "region", "metric", "applicable", "n", "n_undefined", "mean", "ci_low",
            "ci_high", "sd", "median", "q1", "q3",
        ])
        .map_err(err)?;
        let o = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for c in &self.cells {
            wr.write_record([
                format!("{:?}", c.filter),
                c.subgroup.name().to_string(),
                c.model.clone(),
                c.region.to_string(),
                c.metric.name().to_string(),
                c.applicable.to_string(),
                c.n.to_string(),
                c.n_undefined.to_string(),
                o(c.mean),
                o(c.ci_low),
                o(c.ci_high),
                o(c.sd),
                o(c.median),
                o(c.q1),
                o(c.q3),
            ])
            .map_err(err)?;
        }
        let bytes = wr.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricRecord;

    fn row(case: &str, tp: Timepoint, model: &str, region: Region, dice: Option<f64>, gt_et: f64, pred_et: f64) -> MetricRow {
        MetricRow {
            center: "c".into(),
            timepoint: tp,
            model: model.into(),
            applicable: true,
            gt_et_cm3: gt_et,
            pred_et_cm3: pred_et,
            record: MetricRecord {
                case_id: case.into(),
                region,
                dice,
                jaccard: dice,
                vsi: dice,
                sensitivity: dice,
                specificity: Some(1.0),
                hausdorff95: dice.map(|d| 10.0 * (1.0 - d)),
                gt_volume_cm3: if region == Region::Et { gt_et } else { 1.0 },
                pred_volume_cm3: pred_et,
            },
        }
    }

    #[test]
    fn subgroup_counts_and_means() {
        // 36 EPS cases: 23 GTR and 13 RT; 10 of the RT predicted RT.
        let mut rows = Vec::new();
        for i in 0..36 {
            let id = format!("c{i}");
            let (gt, pred, d) = if i < 23 {
                (0.0, 0.0, None)
            } else if i < 33 {
                (1.0, 1.0, Some(0.8))
            } else {
                (1.0, 0.0, Some(0.0))
            };
            rows.push(row(&id, Timepoint::Eps, "m", Region::Et, d, gt, pred));
        }
        let s = build_report(&rows, &ReportConfig { ci_method: CiMethod::T, ..Default::default() }).unwrap();
        assert_eq!(s.subgroup_n(TimepointFilter::Eps, "m", Subgroup::All), 36);
        assert_eq!(s.subgroup_n(TimepointFilter::Eps, "m", Subgroup::Positive), 13);
        assert_eq!(s.subgroup_n(TimepointFilter::Eps, "m", Subgroup::TruePositive), 10);
        assert_eq!(s.subgroup_n(TimepointFilter::Lps, "m", Subgroup::All), 0);
        let tp = s.cell(TimepointFilter::Eps, Subgroup::TruePositive, "m", Region::Et, Metric::Dice).unwrap();
        assert_eq!(tp.mean, Some(0.8));
        let all = s.cell(TimepointFilter::All, Subgroup::All, "m", Region::Et, Metric::Dice).unwrap();
        assert_eq!((all.n, all.n_undefined), (13, 23));
        assert!((all.mean.unwrap() - 8.0 / 13.0).abs() < 1e-12);
        let c = s.classification_for(TimepointFilter::Eps, "m").unwrap();
        assert!((c.accuracy - 33.0 / 36.0).abs() < 1e-15);
        assert_eq!(s.volumes[1].gtr, 23);
        assert_eq!(s.volumes[1].rt, 13);
        let md = s.to_markdown();
        assert!(md.contains("*Positive subjects*"));
        assert!(md.contains("| | Accuracy |"));
    }

    #[test]
    fn not_applicable_cells_are_blank() {
        let mut rows = Vec::new();
        for i in 0..4 {
            let mut r = row(&format!("c{i}"), Timepoint::Lps, "noc", Region::Cav, Some(0.5), 1.0, 1.0);
            r.applicable = false;
            rows.push(r);
            rows.push(row(&format!("c{i}"), Timepoint::Lps, "noc", Region::Et, Some(0.5), 1.0, 1.0));
        }
        let s = build_report(&rows, &ReportConfig::default()).unwrap();
        let c = s.cell(TimepointFilter::All, Subgroup::All, "noc", Region::Cav, Metric::Dice).unwrap();
        assert!(!c.applicable);
        assert_eq!(c.mean, None);
        assert!(s.to_markdown().contains("| CAV | Dice |  |"));
    }

    #[test]
    fn model_selection_commutes_with_subgroups() {
        let mut rows = Vec::new();
        for i in 0..6 {
            let gt = if i % 2 == 0 { 0.0 } else { 2.0 };
            rows.push(row(&format!("c{i}"), Timepoint::Eps, "a", Region::Et, Some(0.1 * i as f64), gt, gt));
            rows.push(row(&format!("c{i}"), Timepoint::Eps, "b", Region::Et, Some(0.05 * i as f64), gt, 0.0));
        }
        let full = build_report(&rows, &ReportConfig::default()).unwrap();
        let only_a = build_report(
            &rows,
            &ReportConfig {
                models: Some(vec!["a".into()]),
                ..Default::default()
            },
        )
        .unwrap();
        let pre_filtered: Vec<MetricRow> = rows.iter().filter(|r| r.model == "a").cloned().collect();
        let direct = build_report(&pre_filtered, &ReportConfig::default()).unwrap();
        let a_cells: Vec<&SummaryCell> = full.cells.iter().filter(|c| c.model == "a").collect();
        assert_eq!(a_cells, only_a.cells.iter().collect::<Vec<_>>());
        assert_eq!(only_a, direct);
    }
}
