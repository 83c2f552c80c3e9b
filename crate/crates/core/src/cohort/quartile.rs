use serde::{Deserialize, Serialize};

use super::stats::{mean, summarize_median_iqr};
use crate::error::{Error, Result};
use crate::metrics::percentile_linear;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileBin {
    /// Lower edge (exclusive, except for the first bin which is closed).
    pub lo: f64,
    /// Upper edge (inclusive).
    pub hi: f64,
    pub volumes: Vec<f64>,
    pub dice: Vec<f64>,
    pub mean_dice: Option<f64>,
    pub median_dice: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileGroups {
    /// Q1, Q2, Q3 of the volumes.
    pub edges: [f64; 3],
    pub bins: Vec<QuartileBin>,
}

/// Splits `(volume, dice)` points into four bins at the volume quartiles.
///
/// Bins are `[min, Q1]`, `(Q1, Q2]`, `(Q2, Q3]`, `(Q3, max]`, so a value
/// equal to an edge goes to the lower bin.
pub fn quartile_groups(points: &[(f64, f64)]) -> Result<QuartileGroups> {
    if points.len() < 4 {
        return Err(Error::TooFewCases {
            needed: 4,
            found: points.len(),
        });
    }
    let mut vols: Vec<f64> = points.iter().map(|p| p.0).collect();
    vols.sort_by(|a, b| a.total_cmp(b));
    let edges = [
        percentile_linear(&vols, 0.25),
        percentile_linear(&vols, 0.5),
        percentile_linear(&vols, 0.75),
    ];
    let lows = [vols[0], edges[0], edges[1], edges[2]];
    let highs = [edges[0], edges[1], edges[2], vols[vols.len() - 1]];
    let mut bins: Vec<QuartileBin> = (0..4)
        .map(|k| QuartileBin {
            lo: lows[k],
            hi: highs[k],
            volumes: Vec::new(),
            dice: Vec::new(),
            mean_dice: None,
            median_dice: None,
        })
        .collect();
    for &(v, d) in points {
        let k = edges.iter().position(|&e| v <= e).unwrap_or(3);
        bins[k].volumes.push(v);
        bins[k].dice.push(d);
    }
    for b in bins.iter_mut() {
        if !b.dice.is_empty() {
            b.mean_dice = Some(mean(&b.dice)?);
            b.median_dice = Some(summarize_median_iqr(&b.dice)?.median);
        }
    }
    Ok(QuartileGroups { edges, bins })
}
