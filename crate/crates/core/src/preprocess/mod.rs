//! Atlas-space preprocessing: registration, resampling, brain masking and
//! z-score normalization.
//!
//! [`run_pipeline`] registers T1ce to the atlas, registers every other
//! sequence to T1ce and composes the two transforms, so each sequence is
//! interpolated exactly once. The brain mask is an external one when given,
//! otherwise [`skull_strip_fallback`] on the resampled T1w (T1ce when T1w is
//! missing). Each sequence is then z-scored under the mask.

pub mod filter;
pub mod morph;
mod register;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use register::{
    downsample, register, Registration, RegistrationConfig, SimilarityMetric, Stage, TraceSegment, PARAM_SCALE,
};

use crate::cohort::stats::stable_sum;
use crate::error::{Error, Result};
use crate::geometry::{nearest_index, trilinear_raw, AffineTransform};
use crate::nifti;
use crate::volume::{Geometry, LabelVolume, VoxelGrid};

/// Atlas grid size in voxels.
pub const ATLAS_DIMS: [usize; 3] = [240, 240, 155];
/// Atlas voxel spacing in mm.
pub const ATLAS_SPACING: [f64; 3] = [1.0, 1.0, 1.0];
/// Semi-axes (mm) of the brain ellipsoid in the synthetic atlas and in the
/// default phantom.
pub const SYNTHETIC_BRAIN_SEMI_AXES: [f64; 3] = [65.0, 80.0, 55.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sequence {
    T1w,
    T1ce,
    T2w,
    Flair,
}

impl Sequence {
    pub const ALL: [Sequence; 4] = [Sequence::T1w, Sequence::T1ce, Sequence::T2w, Sequence::Flair];

    /// File stem used for this sequence (`t1`, `t1ce`, `t2`, `flair`).
    pub fn stem(self) -> &'static str {
        match self {
            Sequence::T1w => "t1",
            Sequence::T1ce => "t1ce",
            Sequence::T2w => "t2",
            Sequence::Flair => "flair",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.stem())
    }
}

impl FromStr for Sequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t1" | "t1w" => Ok(Sequence::T1w),
            "t1ce" | "t1c" | "t1gd" => Ok(Sequence::T1ce),
            "t2" | "t2w" => Ok(Sequence::T2w),
            "flair" => Ok(Sequence::Flair),
            other => Err(Error::Parse(format!("sequence {other:?}"))),
        }
    }
}

/// The fixed reference space: a 240×240×155 grid at 1 mm.
#[derive(Debug, Clone, PartialEq)]
pub struct AtlasGrid {
    pub reference: VoxelGrid,
}

impl AtlasGrid {
    /// Wraps a reference volume after checking its grid.
    pub fn from_grid(reference: VoxelGrid) -> Result<Self> {
        let g = &reference.geom;
        if g.dims != ATLAS_DIMS || g.spacing.iter().any(|&s| (s - 1.0).abs() > 1e-6) {
            return Err(Error::GeometryMismatch(format!(
                "atlas must be {ATLAS_DIMS:?} at 1 mm, got {:?} at {:?}",
                g.dims, g.spacing
            )));
        }
        Ok(AtlasGrid { reference })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (_, grid) = nifti::read_nifti_file(path)?;
        Self::from_grid(grid)
    }

    /// Generated stand-in: a uniform brain ellipsoid centered on the world
    /// origin, intensity 1 inside and 0 outside.
    pub fn synthetic() -> Self {
        let geom = Geometry::centered(ATLAS_DIMS, ATLAS_SPACING).expect("valid atlas geometry");
        let g = geom.clone();
        let a = SYNTHETIC_BRAIN_SEMI_AXES;
        let reference = VoxelGrid::from_fn(geom, move |x, y, z| {
            let w = g.voxel_to_world([x as f64, y as f64, z as f64]);
            let r = (w[0] / a[0]).powi(2) + (w[1] / a[1]).powi(2) + (w[2] / a[2]).powi(2);
            if r <= 1.0 {
                1.0
            } else {
                0.0
            }
        });
        AtlasGrid { reference }
    }

    pub fn geom(&self) -> &Geometry {
        &self.reference.geom
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Trilinear,
    Nearest,
}

/// Voxel→voxel map from `target` voxels into `source` voxels, where `t`
/// maps source-world to target-world.
fn target_to_source(source: &Geometry, t: &AffineTransform, target: &Geometry) -> Result<[[f64; 4]; 3]> {
    Ok(source
        .affine
        .inverse()?
        .compose(&t.inverse()?)
        .compose(&target.affine)
        .rows())
}

/// Samples `grid` on `target`: each output voxel takes the input value at
/// the inverse image (under `t`) of its world position. Outside the input
/// the value is 0.
pub fn resample_to_grid(grid: &VoxelGrid, t: &AffineTransform, target: &Geometry, interp: Interpolation) -> Result<VoxelGrid> {
    let r = target_to_source(&grid.geom, t, target)?;
    let [nx, ny, _] = target.dims;
    let src_dims = grid.geom.dims;
    let mut data = vec![0.0; target.len()];
    data.par_chunks_mut(nx * ny).enumerate().for_each(|(z, plane)| {
        let zf = z as f64;
        for y in 0..ny {
            let yf = y as f64;
            for x in 0..nx {
                let xf = x as f64;
                let p = [
                    r[0][0] * xf + r[0][1] * yf + r[0][2] * zf + r[0][3],
                    r[1][0] * xf + r[1][1] * yf + r[1][2] * zf + r[1][3],
                    r[2][0] * xf + r[2][1] * yf + r[2][2] * zf + r[2][3],
                ];
                plane[x + nx * y] = match interp {
                    Interpolation::Trilinear => trilinear_raw(&grid.data, src_dims, p, 0.0),
                    Interpolation::Nearest => nearest_index(src_dims, p).map_or(0.0, |i| grid.data[i]),
                };
            }
        }
    });
    VoxelGrid::new(target.clone(), data)
}

/// Nearest-neighbour label resampling; voxels mapping outside the input
/// become background, so no new labels can appear.
pub fn resample_labels(labels: &LabelVolume, t: &AffineTransform, target: &Geometry) -> Result<LabelVolume> {
    let r = target_to_source(&labels.geom, t, target)?;
    let [nx, ny, _] = target.dims;
    let src_dims = labels.geom.dims;
    let mut data = vec![0u8; target.len()];
    data.par_chunks_mut(nx * ny).enumerate().for_each(|(z, plane)| {
        let zf = z as f64;
        for y in 0..ny {
            let yf = y as f64;
            for x in 0..nx {
                let xf = x as f64;
                let p = [
                    r[0][0] * xf + r[0][1] * yf + r[0][2] * zf + r[0][3],
                    r[1][0] * xf + r[1][1] * yf + r[1][2] * zf + r[1][3],
                    r[2][0] * xf + r[2][1] * yf + r[2][2] * zf + r[2][3],
                ];
                plane[x + nx * y] = nearest_index(src_dims, p).map_or(0, |i| labels.data[i]);
            }
        }
    });
    LabelVolume::new(target.clone(), data)
}

/// Resamples onto the atlas grid.
pub fn resample_to_atlas(grid: &VoxelGrid, t: &AffineTransform, atlas: &AtlasGrid, interp: Interpolation) -> Result<VoxelGrid> {
    resample_to_grid(grid, t, atlas.geom(), interp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskProvenance {
    External,
    Fallback,
}

/// A {0, 1} brain mask.
#[derive(Debug, Clone, PartialEq)]
pub struct BrainMask {
    pub volume: LabelVolume,
    pub provenance: MaskProvenance,
}

impl BrainMask {
    /// Accepts a label map whose values are all 0 or 1.
    pub fn external(volume: LabelVolume) -> Result<Self> {
        if let Some(&v) = volume.data.iter().find(|&&v| v > 1) {
            return Err(Error::LabelOutOfRange(v as i64));
        }
        Ok(BrainMask {
            volume,
            provenance: MaskProvenance::External,
        })
    }

    pub fn from_bools(geom: Geometry, mask: &[bool], provenance: MaskProvenance) -> Result<Self> {
        let volume = LabelVolume::new(geom, mask.iter().map(|&m| u8::from(m)).collect())?;
        Ok(BrainMask { volume, provenance })
    }

    pub fn geom(&self) -> &Geometry {
        &self.volume.geom
    }

    pub fn contains(&self, i: usize) -> bool {
        self.volume.data[i] != 0
    }

    pub fn to_bools(&self) -> Vec<bool> {
        self.volume.data.iter().map(|&v| v != 0).collect()
    }

    pub fn count(&self) -> usize {
        self.volume.data.iter().filter(|&&v| v != 0).count()
    }
}

/// Histogram bins for the Otsu threshold.
pub const OTSU_BINS: usize = 256;
/// Radius (voxels) of the closing ball.
pub const CLOSING_RADIUS: usize = 2;

/// Classical brain extraction: Otsu threshold, largest 6-connected
/// component, closing with a radius-2 ball, then filling enclosed cavities.
pub fn skull_strip_fallback(t1: &VoxelGrid) -> Result<BrainMask> {
    let threshold = otsu_or_constant(t1)?;
    let dims = t1.dims();
    let fg: Vec<bool> = t1.data.iter().map(|&v| v > threshold).collect();
    if !fg.iter().any(|&v| v) {
        return Err(Error::EmptyMask);
    }
    let largest = morph::largest_component(&fg, dims);
    let closed = morph::close_ball(&largest, dims, CLOSING_RADIUS);
    let filled = morph::fill_holes(&closed, dims);
    // Closing cannot split the component, but keep the single-component
    // guarantee explicit.
    let single = morph::largest_component(&filled, dims);
    BrainMask::from_bools(t1.geom.clone(), &single, MaskProvenance::Fallback)
}

fn otsu_or_constant(g: &VoxelGrid) -> Result<f64> {
    morph::otsu_threshold(&g.data, OTSU_BINS).ok_or(Error::ConstantImage)
}

/// Mean and population standard deviation of the masked voxels.
pub fn masked_mean_sd(grid: &VoxelGrid, mask: &BrainMask) -> Result<(f64, f64, usize)> {
    grid.geom.ensure_matches(mask.geom())?;
    let vals: Vec<f64> = grid
        .data
        .iter()
        .zip(&mask.volume.data)
        .filter(|(_, &m)| m != 0)
        .map(|(&v, _)| v)
        .collect();
    let n = vals.len();
    if n < 2 {
        return Err(Error::DegenerateMask(format!("{n} foreground voxels")));
    }
    let mu = stable_sum(&vals) / n as f64;
    let sq: Vec<f64> = vals.iter().map(|v| (v - mu) * (v - mu)).collect();
    let sd = (stable_sum(&sq) / n as f64).sqrt();
    Ok((mu, sd, n))
}

/// `(v − μ) / σ` inside the mask with population σ, 0 outside.
pub fn zscore_normalize(grid: &VoxelGrid, mask: &BrainMask) -> Result<VoxelGrid> {
    let (mu, sd, _) = masked_mean_sd(grid, mask)?;
    if !(sd > 0.0) {
        return Err(Error::DegenerateMask("zero intensity variance under the mask".into()));
    }
    let data = grid
        .data
        .iter()
        .zip(&mask.volume.data)
        .map(|(&v, &m)| if m != 0 { (v - mu) / sd } else { 0.0 })
        .collect();
    VoxelGrid::new(grid.geom.clone(), data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Used for T1ce→atlas, and for sequence→T1ce apart from the stages.
    pub registration: RegistrationConfig,
    /// Stages of the sequence→T1ce registrations. Sequences of one scan
    /// differ by head motion only, and the extra affine freedom lets NCC
    /// trade anatomy for contrast between differently weighted images.
    pub sequence_stages: Vec<Stage>,
    /// Keep the resampled, not yet normalized sequences in the output.
    pub keep_intermediates: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            registration: RegistrationConfig::default(),
            sequence_stages: vec![Stage::Rigid],
            keep_intermediates: false,
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("pipeline config: {e}")))?;
        cfg.registration.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Raw sequences of one scan in their native grids.
#[derive(Debug, Clone, Default)]
pub struct RawCase {
    pub sequences: BTreeMap<Sequence, VoxelGrid>,
    /// Precomputed brain mask on the atlas grid.
    pub external_mask: Option<LabelVolume>,
    /// Ground truth in the T1ce frame, carried to the atlas with nearest
    /// sampling.
    pub gt: Option<LabelVolume>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Sequence-world → atlas-world.
    pub transforms: BTreeMap<Sequence, AffineTransform>,
    /// The registration that produced each transform (T1ce: to the atlas;
    /// others: to T1ce).
    pub registrations: BTreeMap<Sequence, Registration>,
    /// Resampled but not normalized; empty unless intermediates were kept.
    pub resampled: BTreeMap<Sequence, VoxelGrid>,
    pub normalized: BTreeMap<Sequence, VoxelGrid>,
    pub mask: BrainMask,
    pub gt: Option<LabelVolume>,
}

/// Runs registration, resampling, masking and normalization for one scan.
pub fn run_pipeline(case: &RawCase, atlas: &AtlasGrid, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.registration.validate()?;
    let t1ce = case
        .sequences
        .get(&Sequence::T1ce)
        .ok_or_else(|| Error::MissingReferenceSequence("t1ce".into()))?;
    for s in Sequence::ALL {
        if !case.sequences.contains_key(&s) {
            log::warn!("pipeline: sequence {s} missing");
        }
    }
    if let Some(m) = &case.external_mask {
        atlas.geom().ensure_matches(&m.geom)?;
    }

    let seq_cfg = RegistrationConfig {
        stages: cfg.sequence_stages.clone(),
        ..cfg.registration.clone()
    };
    let mut transforms = BTreeMap::new();
    let mut registrations = BTreeMap::new();
    let reg_ce = register(t1ce, &atlas.reference, &cfg.registration)?;
    let t_ce = reg_ce.transform;
    log::info!("pipeline: t1ce→atlas metric {:.6}", reg_ce.metric);
    transforms.insert(Sequence::T1ce, t_ce);
    registrations.insert(Sequence::T1ce, reg_ce);
    for (&s, grid) in &case.sequences {
        if s == Sequence::T1ce {
            continue;
        }
        let reg = register(grid, t1ce, &seq_cfg)?;
        log::info!("pipeline: {s}→t1ce metric {:.6}", reg.metric);
        transforms.insert(s, t_ce.compose(&reg.transform));
        registrations.insert(s, reg);
    }

    let mut resampled = BTreeMap::new();
    for (&s, grid) in &case.sequences {
        resampled.insert(s, resample_to_atlas(grid, &transforms[&s], atlas, Interpolation::Trilinear)?);
    }

    let mask = match &case.external_mask {
        Some(m) => BrainMask::external(m.clone())?,
        None => {
            let src = resampled.get(&Sequence::T1w).unwrap_or(&resampled[&Sequence::T1ce]);
            skull_strip_fallback(src)?
        }
    };

    let mut normalized = BTreeMap::new();
    for (&s, grid) in &resampled {
        normalized.insert(s, zscore_normalize(grid, &mask)?);
    }
    let gt = case
        .gt
        .as_ref()
        .map(|g| resample_labels(g, &t_ce, atlas.geom()))
        .transpose()?;
    if !cfg.keep_intermediates {
        resampled.clear();
    }
    Ok(PipelineOutput {
        transforms,
        registrations,
        resampled,
        normalized,
        mask,
        gt,
    })
}
