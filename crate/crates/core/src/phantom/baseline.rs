//! A rule-based segmenter over z-scored sequences.
//!
//! Labels are assigned with precedence ET, then ED, then CAV:
//!
//! * ET: T1ce above `tau_et_t1ce` and T1w below `tau_et_t1w` (enhancing but
//!   not T1-bright). The boundary is then moved to the half-way level
//!   between normal tissue and the detected voxels, which keeps it in place
//!   whatever the z-scale of the scan; components under `min_et_component`
//!   voxels are removed;
//! * ED: FLAIR above `tau_ed_flair`;
//! * CAV: T1w below `tau_cav_t1w`, largest component only.
//!
//! All rules apply inside the brain mask. When a sequence looks noisy (the
//! robust noise estimate exceeds `noise_floor`) it is box-averaged over
//! 3×3×3 voxels first; clean inputs are thresholded as they are so edges
//! stay exact.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::percentile_linear;
use crate::preprocess::filter::box_mean3;
use crate::preprocess::morph::{largest_component, remove_small_components};
use crate::preprocess::{masked_mean_sd, BrainMask, Sequence};
use crate::volume::{LabelVolume, VoxelGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoothing {
    /// Smooth sequences whose noise estimate exceeds the floor.
    Auto,
    Always,
    Never,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// ET detection threshold on T1ce.
    pub tau_et_t1ce: f64,
    /// The ET boundary sits this far from the masked T1ce median towards
    /// the median of the detected voxels (never below the detection
    /// threshold); 0 keeps the detection threshold.
    pub et_boundary_fraction: f64,
    pub tau_et_t1w: f64,
    pub tau_ed_flair: f64,
    pub tau_cav_t1w: f64,
    pub min_et_component: usize,
    pub smoothing: Smoothing,
    /// Noise level (z units) above which `Auto` smooths.
    pub noise_floor: f64,
    /// Largest accepted |masked mean| of an input.
    pub normalization_tolerance: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            tau_et_t1ce: 2.5,
            et_boundary_fraction: 0.5,
            tau_et_t1w: 0.5,
            tau_ed_flair: 1.75,
            tau_cav_t1w: -0.9,
            min_et_component: 5,
            smoothing: Smoothing::Auto,
            noise_floor: 0.1,
            normalization_tolerance: 0.1,
        }
    }
}

/// Robust noise estimate: `1.4826 · median|v(x+1) − v(x)| / √2` over
/// x-neighbour pairs inside the mask.
pub fn estimate_noise(grid: &VoxelGrid, mask: &BrainMask) -> f64 {
    let nx = grid.dims()[0];
    let mut diffs: Vec<f64> = Vec::new();
    for i in 0..grid.data.len().saturating_sub(1) {
        if (i + 1) % nx != 0 && mask.contains(i) && mask.contains(i + 1) {
            diffs.push((grid.data[i + 1] - grid.data[i]).abs());
        }
    }
    if diffs.is_empty() {
        return 0.0;
    }
    diffs.sort_by(|a, b| a.total_cmp(b));
    1.4826 * percentile_linear(&diffs, 0.5) / std::f64::consts::SQRT_2
}

fn prepared(
    seqs: &BTreeMap<Sequence, VoxelGrid>,
    s: Sequence,
    mask: &BrainMask,
    cfg: &BaselineConfig,
) -> Result<Vec<f64>> {
    let g = seqs
        .get(&s)
        .ok_or_else(|| Error::MissingReferenceSequence(s.stem().into()))?;
    let (mu, _, _) = masked_mean_sd(g, mask)?;
    if mu.abs() > cfg.normalization_tolerance {
        return Err(Error::NotNormalized(mu));
    }
    let smooth = match cfg.smoothing {
        Smoothing::Always => true,
        Smoothing::Never => false,
        Smoothing::Auto => estimate_noise(g, mask) > cfg.noise_floor,
    };
    Ok(if smooth { box_mean3(&g.data, g.dims()) } else { g.data.clone() })
}

fn sorted_values(v: &[f64], keep: &[bool]) -> Vec<f64> {
    let mut out: Vec<f64> = v.iter().zip(keep).filter(|(_, &k)| k).map(|(&x, _)| x).collect();
    out.sort_by(|a, b| a.total_cmp(b));
    out
}

/// Segments z-scored T1w, T1ce and FLAIR volumes into canonical labels.
pub fn baseline_segment(
    seqs: &BTreeMap<Sequence, VoxelGrid>,
    mask: &BrainMask,
    cfg: &BaselineConfig,
) -> Result<LabelVolume> {
    let t1 = prepared(seqs, Sequence::T1w, mask, cfg)?;
    let t1ce = prepared(seqs, Sequence::T1ce, mask, cfg)?;
    let flair = prepared(seqs, Sequence::Flair, mask, cfg)?;
    let geom = mask.geom().clone();
    let dims = geom.dims;
    let inside = mask.to_bools();

    let candidate = |thr: f64| -> Vec<bool> {
        (0..inside.len())
            .map(|i| inside[i] && t1ce[i] > thr && t1[i] < cfg.tau_et_t1w)
            .collect()
    };
    let mut et_raw = candidate(cfg.tau_et_t1ce);
    let detected = sorted_values(&t1ce, &et_raw);
    if !detected.is_empty() && cfg.et_boundary_fraction > 0.0 {
        let base = percentile_linear(&sorted_values(&t1ce, &inside), 0.5);
        let level = percentile_linear(&detected, 0.5);
        let thr = base + cfg.et_boundary_fraction * (level - base);
        if thr > cfg.tau_et_t1ce {
            et_raw = candidate(thr);
        }
    }
    let et = remove_small_components(&et_raw, dims, cfg.min_et_component);
    let ed: Vec<bool> = (0..inside.len())
        .map(|i| inside[i] && !et[i] && flair[i] > cfg.tau_ed_flair)
        .collect();
    let cav_raw: Vec<bool> = (0..inside.len())
        .map(|i| inside[i] && !et[i] && !ed[i] && t1[i] < cfg.tau_cav_t1w)
        .collect();
    let cav = largest_component(&cav_raw, dims);

    let data = (0..inside.len())
        .map(|i| {
            if et[i] {
                1
            } else if ed[i] {
                2
            } else if cav[i] {
                3
            } else {
                0
            }
        })
        .collect();
    LabelVolume::new(geom, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{dice, extract_mask, EmptyPolicy, Region};
    use crate::phantom::{Component, PhantomSpec};
    use crate::preprocess::{zscore_normalize, MaskProvenance};

    fn spec(noise: f64, resection: f64) -> PhantomSpec {
        PhantomSpec {
            dims: [72, 72, 56],
            brain_semi_axes: [32.0, 34.0, 26.0],
            components: vec![
                Component::ellipsoid([2.0, -1.0, 1.0], [13.0, 12.0, 11.0], 2),
                Component::sphere([2.0, -1.0, 1.0], 6.0, 3),
                Component::sphere([8.0, -1.0, 1.0], 4.5, 1),
            ],
            noise_sigma: [noise; 4],
            resection_fraction: resection,
            seed: 5,
            ..Default::default()
        }
    }

    fn normalized(s: &PhantomSpec) -> (BTreeMap<Sequence, VoxelGrid>, BrainMask, LabelVolume) {
        let case = crate::phantom::generate_case(s).unwrap();
        let geom = s.geometry().unwrap();
        let brain: Vec<bool> = (0..geom.len())
            .map(|i| {
                let c = geom.coords(i);
                let w = geom.voxel_to_world([c[0] as f64, c[1] as f64, c[2] as f64]);
                (0..3).map(|k| (w[k] / s.brain_semi_axes[k]).powi(2)).sum::<f64>() <= 1.0
            })
            .collect();
        let mask = BrainMask::from_bools(geom, &brain, MaskProvenance::External).unwrap();
        let z = case
            .sequences
            .iter()
            .map(|(k, g)| (*k, zscore_normalize(g, &mask).unwrap()))
            .collect();
        (z, mask, case.gt)
    }

    fn label_dice(gt: &LabelVolume, pred: &LabelVolume, r: Region) -> f64 {
        dice(&extract_mask(gt, r), &extract_mask(pred, r), EmptyPolicy::One)
            .unwrap()
            .unwrap()
    }

    #[test]
    fn clean_phantom_is_nearly_exact() {
        let (z, mask, gt) = normalized(&spec(0.0, 0.0));
        let pred = baseline_segment(&z, &mask, &BaselineConfig::default()).unwrap();
        for r in [Region::Et, Region::Ed, Region::Cav] {
            assert!(label_dice(&gt, &pred, r) > 0.99, "{r}: {}", label_dice(&gt, &pred, r));
        }
    }

    #[test]
    fn noisy_phantom_stays_above_point_nine() {
        let (z, mask, gt) = normalized(&spec(0.5, 0.0));
        let pred = baseline_segment(&z, &mask, &BaselineConfig::default()).unwrap();
        for r in [Region::Et, Region::Ed, Region::Cav] {
            assert!(label_dice(&gt, &pred, r) > 0.90, "{r}: {}", label_dice(&gt, &pred, r));
        }
    }

    #[test]
    fn raising_et_threshold_never_grows_et() {
        let (z, mask, _) = normalized(&spec(0.5, 0.0));
        let mut prev: Option<Vec<bool>> = None;
        for tau in [1.5, 2.0, 2.5, 3.0, 4.0] {
            let cfg = BaselineConfig {
                tau_et_t1ce: tau,
                ..Default::default()
            };
            let et: Vec<bool> = baseline_segment(&z, &mask, &cfg).unwrap().data.iter().map(|&v| v == 1).collect();
            if let Some(p) = &prev {
                assert!(et.iter().zip(p).all(|(&now, &before)| !now || before));
            }
            prev = Some(et);
        }
    }

    #[test]
    fn raw_intensities_rejected() {
        let s = spec(0.0, 0.0);
        let case = crate::phantom::generate_case(&s).unwrap();
        let (_, mask, _) = normalized(&s);
        assert!(matches!(
            baseline_segment(&case.sequences, &mask, &BaselineConfig::default()),
            Err(Error::NotNormalized(_))
        ));
    }
}
