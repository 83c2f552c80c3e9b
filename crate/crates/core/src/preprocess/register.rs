//! Intensity-based affine registration.
//!
//! The optimizer is an adaptive-step coordinate descent: each sweep tries
//! `±step` on every free parameter and keeps the first move that lowers the
//! cost by more than the tolerance; a sweep with no accepted move halves
//! the step. Levels run coarse to fine over a block-average pyramid, and a
//! rigid stage seeds the affine stage.
//!
//! Parameters describe the fixed→moving map centered on the fixed image
//! center. Steps are taken in scaled units: one unit is 1 mm of
//! translation, 0.02 rad of rotation, 0.02 of log-scale and 0.02 of shear,
//! which all move a point 50 mm from the center by about 1 mm.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::stats::stable_sum;
use crate::error::{Error, Result};
use crate::geometry::{trilinear_raw, AffineParams, AffineTransform};
use super::filter::{box_mean3, gradient_magnitude};
use super::morph::otsu_threshold;
use crate::volume::{Geometry, VoxelGrid};

/// Step length of one scaled unit for each of the 12 parameters.
pub const PARAM_SCALE: [f64; 12] = [1.0, 1.0, 1.0, 0.02, 0.02, 0.02, 0.02, 0.02, 0.02, 0.02, 0.02, 0.02];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMetric {
    /// Normalized cross-correlation, maximized.
    Ncc,
    /// Mean squared intensity difference, minimized.
    Mse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Translation and rotation (6 parameters).
    Rigid,
    /// All 12 parameters.
    Affine,
}

impl Stage {
    fn free(self) -> &'static [usize] {
        match self {
            Stage::Rigid => &[0, 1, 2, 3, 4, 5],
            Stage::Affine => &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    /// Number of pyramid levels; level `k` (from the finest) is downsampled
    /// by `2^k`, so the default 3 gives factors 4, 2, 1.
    pub pyramid_levels: usize,
    pub metric: SimilarityMetric,
    /// Sweeps per level and stage.
    pub max_iterations: usize,
    /// Initial step in scaled units at the finest level; coarser levels
    /// start at `initial_step × factor`.
    pub initial_step: f64,
    /// Step multiplier after a sweep with no accepted move.
    pub step_decay: f64,
    /// A level ends once the step drops below `min_step × factor`.
    pub min_step: f64,
    /// A move is accepted only if it lowers the cost by more than this.
    pub tolerance: f64,
    /// Stages run in order; empty means no registration (identity).
    pub stages: Vec<Stage>,
    /// Metric samples at the finest level; a level downsampled by `f` gets
    /// `max_samples / f²`. Samples favour fixed-image edges.
    pub max_samples: usize,
    /// Start from the translation that aligns intensity centroids.
    pub center_of_mass_init: bool,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig {
            pyramid_levels: 3,
            metric: SimilarityMetric::Ncc,
            max_iterations: 200,
            initial_step: 1.0,
            step_decay: 0.5,
            min_step: 0.05,
            tolerance: 1e-6,
            stages: vec![Stage::Rigid, Stage::Affine],
            max_samples: 150_000,
            center_of_mass_init: true,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("registration: {m}")));
        if self.pyramid_levels < 1 {
            return bad("pyramid_levels must be at least 1");
        }
        if self.pyramid_levels > 8 {
            return bad("pyramid_levels above 8");
        }
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return bad("initial_step must be positive");
        }
        if !(self.step_decay > 0.0 && self.step_decay < 1.0) {
            return bad("step_decay must lie in (0, 1)");
        }
        if !(self.min_step > 0.0 && self.min_step <= self.initial_step) {
            return bad("min_step must lie in (0, initial_step]");
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return bad("tolerance must be non-negative");
        }
        if self.max_samples < 64 {
            return bad("max_samples below 64");
        }
        Ok(())
    }

    /// Downsampling factors, coarsest first.
    pub fn factors(&self) -> Vec<usize> {
        (0..self.pyramid_levels).rev().map(|k| 1usize << k).collect()
    }
}

/// Accepted costs of one (stage, level) run, starting with the cost of the
/// incoming parameters. Strictly decreasing by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSegment {
    pub stage: Stage,
    pub factor: usize,
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registration {
    /// Maps moving-world coordinates to fixed-world coordinates.
    #[serde(skip)]
    pub transform: AffineTransform,
    /// Parameters of `transform` centered on `center`.
    pub params: AffineParams,
    pub center: [f64; 3],
    /// Final similarity at the finest level: NCC in `[-1, 1]` or MSE.
    pub metric: f64,
    /// False when no move improved the metric at any level; the transform
    /// is then the identity.
    pub improved: bool,
    pub trace: Vec<TraceSegment>,
    pub evaluations: usize,
}

impl Registration {
    /// Turns the "nothing improved" flag into an error.
    pub fn require_improvement(self) -> Result<Self> {
        if self.improved {
            Ok(self)
        } else {
            Err(Error::DidNotImprove)
        }
    }
}

/// Block-average downsampling by `f` on every axis; partial blocks at the
/// upper edges average the voxels they have.
pub fn downsample(grid: &VoxelGrid, f: usize) -> Result<VoxelGrid> {
    if f <= 1 {
        return Ok(grid.clone());
    }
    let [nx, ny, nz] = grid.dims();
    let nd = [nx.div_ceil(f), ny.div_ceil(f), nz.div_ceil(f)];
    let ff = f as f64;
    let to_fine = AffineTransform::scale_offset([ff; 3], [(ff - 1.0) / 2.0; 3]);
    let geom = Geometry::new(
        nd,
        [grid.geom.spacing[0] * ff, grid.geom.spacing[1] * ff, grid.geom.spacing[2] * ff],
        grid.geom.affine.compose(&to_fine),
    )?;
    let mut data = vec![0.0; nd[0] * nd[1] * nd[2]];
    data.par_chunks_mut(nd[0] * nd[1]).enumerate().for_each(|(cz, plane)| {
        for cy in 0..nd[1] {
            for cx in 0..nd[0] {
                let mut s = 0.0;
                let mut n = 0usize;
                for z in cz * f..((cz + 1) * f).min(nz) {
                    for y in cy * f..((cy + 1) * f).min(ny) {
                        let row = nx * (y + ny * z);
                        for x in cx * f..((cx + 1) * f).min(nx) {
                            s += grid.data[row + x];
                            n += 1;
                        }
                    }
                }
                plane[cx + nd[0] * cy] = s / n as f64;
            }
        }
    });
    VoxelGrid::new(geom, data)
}

/// Two passes of the 3×3×3 box filter (a 5-voxel tent). Damps noise and
/// the bias that trilinear interpolation of noise puts on the metric at
/// sub-voxel offsets.
fn smoothed(grid: &VoxelGrid) -> Result<VoxelGrid> {
    let dims = grid.dims();
    VoxelGrid::new(grid.geom.clone(), box_mean3(&box_mean3(&grid.data, dims), dims))
}

/// Centroid of the voxels above the Otsu threshold, in world coordinates.
fn centroid(grid: &VoxelGrid) -> [f64; 3] {
    let t = otsu_threshold(&grid.data, 256).unwrap_or(f64::NEG_INFINITY);
    let [nx, ny, _] = grid.dims();
    let mut acc = [0.0f64; 4];
    for (i, &v) in grid.data.iter().enumerate() {
        if v > t {
            acc[0] += (i % nx) as f64;
            acc[1] += ((i / nx) % ny) as f64;
            acc[2] += (i / (nx * ny)) as f64;
            acc[3] += 1.0;
        }
    }
    grid.geom
        .voxel_to_world([acc[0] / acc[3], acc[1] / acc[3], acc[2] / acc[3]])
}

/// Fixed-image voxels used by the metric, in scan order.
///
/// Edge voxels (gradient above its Otsu threshold) carry nearly all
/// of the alignment signal, so up to three quarters of the budget goes to
/// them, thinned evenly in scan order. The rest is a regular lattice over
/// the whole image, which keeps the intensity statistics representative.
fn sample_indices(fixed: &VoxelGrid, max_samples: usize) -> Vec<usize> {
    let dims = fixed.dims();
    let [nx, ny, nz] = dims;
    let total = nx * ny * nz;
    if total <= max_samples {
        return (0..total).collect();
    }
    let grad = gradient_magnitude(&fixed.data, dims);
    let mut idx: Vec<usize> = match otsu_threshold(&grad, 256) {
        Some(t) => {
            let edges: Vec<usize> = (0..total).filter(|&i| grad[i] > t).collect();
            let keep = edges.len().div_ceil(max_samples * 3 / 4).max(1);
            edges.into_iter().step_by(keep).collect()
        }
        None => Vec::new(),
    };
    let budget = (max_samples - idx.len()).max(1);
    let stride = ((total as f64 / budget as f64).cbrt().ceil() as usize).max(1);
    let off = stride / 2;
    for z in (off.min(nz - 1)..nz).step_by(stride) {
        for y in (off.min(ny - 1)..ny).step_by(stride) {
            for x in (off.min(nx - 1)..nx).step_by(stride) {
                idx.push(x + nx * (y + ny * z));
            }
        }
    }
    idx.sort_unstable();
    idx.dedup();
    idx
}

const CHUNK: usize = 4096;

/// Metric samples of one pyramid level.
struct Level {
    factor: usize,
    moving: VoxelGrid,
    fixed_to_world: AffineTransform,
    world_to_moving: AffineTransform,
    /// Voxel coordinates of the samples in the fixed image.
    points: Vec<[f64; 3]>,
    /// Fixed values; mean-centered for NCC.
    values: Vec<f64>,
    /// `Σ values²` for NCC.
    fixed_ss: f64,
    metric: SimilarityMetric,
}

impl Level {
    fn new(moving: VoxelGrid, fixed: &VoxelGrid, factor: usize, cfg: &RegistrationConfig) -> Result<Self> {
        let budget = (cfg.max_samples / (factor * factor)).max(64);
        let idx = sample_indices(fixed, budget);
        let points = idx
            .iter()
            .map(|&i| {
                let c = fixed.geom.coords(i);
                [c[0] as f64, c[1] as f64, c[2] as f64]
            })
            .collect();
        let mut values: Vec<f64> = idx.iter().map(|&i| fixed.data[i]).collect();
        let mut fixed_ss = 0.0;
        if cfg.metric == SimilarityMetric::Ncc {
            let m = stable_sum(&values) / values.len() as f64;
            values.iter_mut().for_each(|v| *v -= m);
            fixed_ss = stable_sum(&values.iter().map(|v| v * v).collect::<Vec<_>>());
            if !(fixed_ss > 0.0) {
                return Err(Error::ConstantImage);
            }
        }
        let world_to_moving = moving.geom.affine.inverse()?;
        Ok(Level {
            factor,
            moving,
            fixed_to_world: fixed.geom.affine,
            world_to_moving,
            points,
            values,
            fixed_ss,
            metric: cfg.metric,
        })
    }

    /// Cost of the fixed→moving world map `s` (lower is better).
    fn cost(&self, s: &AffineTransform) -> f64 {
        let v = self.world_to_moving.compose(s).compose(&self.fixed_to_world);
        let r = v.rows();
        let dims = self.moving.geom.dims;
        let data = &self.moving.data;
        let sample = |p: &[f64; 3]| {
            let q = [
                r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + r[0][3],
                r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + r[1][3],
                r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + r[2][3],
            ];
            trilinear_raw(data, dims, q, 0.0)
        };
        // Chunk partial sums are combined in chunk order, so the result
        // does not depend on how rayon schedules the chunks.
        let n = self.points.len() as f64;
        match self.metric {
            SimilarityMetric::Ncc => {
                let partial: Vec<[f64; 3]> = self
                    .points
                    .par_chunks(CHUNK)
                    .zip(self.values.par_chunks(CHUNK))
                    .map(|(ps, fs)| {
                        let mut acc = [0.0; 3];
                        for (p, &f) in ps.iter().zip(fs) {
                            let m = sample(p);
                            acc[0] += m;
                            acc[1] += m * m;
                            acc[2] += f * m;
                        }
                        acc
                    })
                    .collect();
                let mut s = [0.0; 3];
                for a in &partial {
                    for k in 0..3 {
                        s[k] += a[k];
                    }
                }
                let mvar = s[1] - s[0] * s[0] / n;
                if !(mvar > 0.0) {
                    return 1.0;
                }
                -(s[2] / (self.fixed_ss * mvar).sqrt())
            }
            SimilarityMetric::Mse => {
                let partial: Vec<f64> = self
                    .points
                    .par_chunks(CHUNK)
                    .zip(self.values.par_chunks(CHUNK))
                    .map(|(ps, fs)| {
                        ps.iter()
                            .zip(fs)
                            .map(|(p, &f)| {
                                let d = f - sample(p);
                                d * d
                            })
                            .sum::<f64>()
                    })
                    .collect();
                partial.iter().sum::<f64>() / n
            }
        }
    }
}

fn params_transform(p: &[f64; 12], center: [f64; 3]) -> AffineTransform {
    AffineTransform::from_params_centered(&AffineParams::from_array(p), center)
}

/// Registers `moving` onto `fixed`.
///
/// Returns the transform taking moving-world points to fixed-world points,
/// so resampling `moving` on the fixed grid evaluates it at the inverse
/// image of each fixed voxel. Deterministic for identical inputs and
/// configuration.
pub fn register(moving: &VoxelGrid, fixed: &VoxelGrid, cfg: &RegistrationConfig) -> Result<Registration> {
    cfg.validate()?;
    if moving.is_constant() || fixed.is_constant() {
        return Err(Error::ConstantImage);
    }
    let center = fixed.geom.center_world();
    let mut p = [0.0f64; 12];
    let mut evaluations = 0usize;
    let mut improved = false;
    let mut trace = Vec::new();

    let mut levels = Vec::new();
    for f in cfg.factors() {
        let mv = smoothed(&downsample(moving, f)?)?;
        let fx = smoothed(&downsample(fixed, f)?)?;
        levels.push(Level::new(mv, &fx, f, cfg)?);
    }

    if cfg.stages.is_empty() {
        let finest = levels.last().expect("at least one level");
        let c = finest.cost(&AffineTransform::identity());
        return Ok(Registration {
            transform: AffineTransform::identity(),
            params: AffineParams::default(),
            center,
            metric: to_metric(cfg.metric, c),
            improved: false,
            trace,
            evaluations: 1,
        });
    }

    if cfg.center_of_mass_init {
        let cf = centroid(fixed);
        let cm = centroid(moving);
        let mut q = [0.0; 12];
        for k in 0..3 {
            q[k] = cm[k] - cf[k];
        }
        let coarse = &levels[0];
        let c0 = coarse.cost(&params_transform(&p, center));
        let c1 = coarse.cost(&params_transform(&q, center));
        evaluations += 2;
        if c1 < c0 - cfg.tolerance {
            p = q;
            improved = true;
        }
    }

    for &stage in &cfg.stages {
        for level in &levels {
            let lf = level.factor as f64;
            let mut step = cfg.initial_step * lf;
            let mut best = level.cost(&params_transform(&p, center));
            evaluations += 1;
            let mut costs = vec![best];
            for _ in 0..cfg.max_iterations {
                if step < cfg.min_step * lf {
                    break;
                }
                let mut moved = false;
                for &k in stage.free() {
                    for dir in [1.0, -1.0] {
                        let mut trial = p;
                        trial[k] += dir * step * PARAM_SCALE[k];
                        let c = level.cost(&params_transform(&trial, center));
                        evaluations += 1;
                        if c < best - cfg.tolerance {
                            p = trial;
                            best = c;
                            costs.push(c);
                            moved = true;
                            break;
                        }
                    }
                }
                if !moved {
                    step *= cfg.step_decay;
                }
            }
            improved |= costs.len() > 1;
            trace.push(TraceSegment {
                stage,
                factor: level.factor,
                costs,
            });
        }
    }

    let s = if improved {
        params_transform(&p, center)
    } else {
        log::warn!("registration: no step improved the metric; returning identity");
        AffineTransform::identity()
    };
    let finest = levels.last().expect("at least one level");
    let final_cost = finest.cost(&s);
    evaluations += 1;
    let transform = s.inverse()?;
    Ok(Registration {
        params: transform.to_params_centered(center)?,
        transform,
        center,
        metric: to_metric(cfg.metric, final_cost),
        improved,
        trace,
        evaluations,
    })
}

fn to_metric(m: SimilarityMetric, cost: f64) -> f64 {
    match m {
        SimilarityMetric::Ncc => -cost,
        SimilarityMetric::Mse => cost,
    }
}
