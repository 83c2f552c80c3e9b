//! The per-case metrics CSV: one row per (case, model, region).
//!
//! Columns, in this fixed order:
//!
//! | column | meaning |
//! |---|---|
//! | `case_id`, `center`, `timepoint`, `model` | case identity |
//! | `region` | `ET`, `ED`, `CAV`, `WT` or `TC` |
//! | `applicable` | `false` when the model's scheme declares the region absent |
//! | `dice` … `hausdorff95` | metric values, `NA` when undefined |
//! | `gt_volume_cm3`, `pred_volume_cm3` | region volumes |
//! | `gt_et_cm3`, `pred_et_cm3` | enhancing tumor volumes used for EOR |
//!
//! Numbers are written in shortest round-trip form so re-reading the file
//! reproduces every value bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::Timepoint;
use crate::error::{Error, Result};
use crate::metrics::{MetricRecord, Region};

pub const COLUMNS: [&str; 16] = [
    "case_id",
    "center",
    "timepoint",
    "model",
    "region",
    "applicable",
    "dice",
    "jaccard",
    "vsi",
    "sensitivity",
    "specificity",
    "hausdorff95",
    "gt_volume_cm3",
    "pred_volume_cm3",
    "gt_et_cm3",
    "pred_et_cm3",
];

const NA: &str = "NA";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub center: String,
    pub timepoint: Timepoint,
    pub model: String,
    pub applicable: bool,
    pub gt_et_cm3: f64,
    pub pred_et_cm3: f64,
    pub record: MetricRecord,
}

impl MetricRow {
    pub fn region(&self) -> Region {
        self.record.region
    }
}

/// Metric columns that can be summarized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    Dice,
    Jaccard,
    Vsi,
    Sensitivity,
    Specificity,
    Hausdorff95,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Dice => "Dice",
            Metric::Jaccard => "JSC",
            Metric::Vsi => "VSI",
            Metric::Sensitivity => "Sensitivity",
            Metric::Specificity => "Specificity",
            Metric::Hausdorff95 => "Hausdorff95",
        }
    }

    pub fn get(self, r: &MetricRecord) -> Option<f64> {
        match self {
            Metric::Dice => r.dice,
            Metric::Jaccard => r.jaccard,
            Metric::Vsi => r.vsi,
            Metric::Sensitivity => r.sensitivity,
            Metric::Specificity => r.specificity,
            Metric::Hausdorff95 => r.hausdorff95,
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| x.to_string())
}

fn parse_f64(s: &str, col: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Parse(format!("metrics CSV: column {col}: {s:?}")))
}

fn parse_opt(s: &str, col: &str) -> Result<Option<f64>> {
    if s == NA {
        Ok(None)
    } else {
        parse_f64(s, col).map(Some)
    }
}

pub fn write_rows<W: Write>(w: W, rows: &[MetricRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Parse(format!("metrics CSV: {e}"));
    wr.write_record(COLUMNS).map_err(csv_err)?;
    for r in rows {
        let m = &r.record;
        wr.write_record([
            m.case_id.clone(),
            r.center.clone(),
            r.timepoint.to_string(),
            r.model.clone(),
            m.region.to_string(),
            r.applicable.to_string(),
            fmt_opt(m.dice),
            fmt_opt(m.jaccard),
            fmt_opt(m.vsi),
            fmt_opt(m.sensitivity),
            fmt_opt(m.specificity),
            fmt_opt(m.hausdorff95),
            m.gt_volume_cm3.to_string(),
            m.pred_volume_cm3.to_string(),
            r.gt_et_cm3.to_string(),
            r.pred_et_cm3.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn read_rows<R: Read>(r: R) -> Result<Vec<MetricRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let csv_err = |e: csv::Error| Error::Parse(format!("metrics CSV: {e}"));
    let header = rd.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != COLUMNS {
        return Err(Error::Parse(format!("metrics CSV: unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let f = |i: usize| &rec[i];
        let region: Region = f(4).parse()?;
        out.push(MetricRow {
            center: f(1).to_string(),
            timepoint: f(2).parse()?,
            model: f(3).to_string(),
            applicable: f(5)
                .parse()
                .map_err(|_| Error::Parse(format!("metrics CSV: applicable {:?}", f(5))))?,
            gt_et_cm3: parse_f64(f(14), COLUMNS[14])?,
            pred_et_cm3: parse_f64(f(15), COLUMNS[15])?,
            record: MetricRecord {
                case_id: f(0).to_string(),
                region,
                dice: parse_opt(f(6), COLUMNS[6])?,
                jaccard: parse_opt(f(7), COLUMNS[7])?,
                vsi: parse_opt(f(8), COLUMNS[8])?,
                sensitivity: parse_opt(f(9), COLUMNS[9])?,
                specificity: parse_opt(f(10), COLUMNS[10])?,
                hausdorff95: parse_opt(f(11), COLUMNS[11])?,
                gt_volume_cm3: parse_f64(f(12), COLUMNS[12])?,
                pred_volume_cm3: parse_f64(f(13), COLUMNS[13])?,
            },
        });
    }
    Ok(out)
}

pub fn write_rows_file(path: impl AsRef<Path>, rows: &[MetricRow]) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_rows(std::io::BufWriter::new(f), rows)
}

pub fn read_rows_file(path: impl AsRef<Path>) -> Result<Vec<MetricRow>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_rows(std::io::BufReader::new(f))
}
