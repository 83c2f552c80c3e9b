//! Synthetic multiparametric brain phantoms with exact ground truth.
//!
//! A phantom is a uniform brain ellipsoid with lesion components painted
//! over it in list order (later components win). Every voxel takes the
//! tissue found at its center, so ground-truth voxel sets follow directly
//! from the geometric description. Each sequence can carry its own
//! misalignment: the sequence shows at world point `x` the anatomy found at
//! `m⁻¹(x)`. The ground truth is drawn in the T1ce frame.
//!
//! Noise is Gaussian. Each z-slice of each sequence draws from its own
//! [`crate::rng::stream`] under the spec seed, so a spec fully determines
//! every output bit.

mod baseline;
mod cohort;

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use baseline::{baseline_segment, estimate_noise, BaselineConfig, Smoothing};
pub use cohort::{generate_cohort, write_case, CohortMember, CohortSpec, Range};

use crate::eor::{classify_eor, EorClass, EorConfig};
use crate::error::{Error, Result};
use crate::geometry::{AffineParams, AffineTransform};
use crate::metrics::{region_volume_cm3, Region};
use crate::preprocess::{
    run_pipeline, AtlasGrid, PipelineConfig, PipelineOutput, RawCase, Sequence, ATLAS_DIMS, ATLAS_SPACING,
    SYNTHETIC_BRAIN_SEMI_AXES,
};
use crate::rng::stream;
use crate::volume::{Geometry, LabelVolume, VoxelGrid};

/// Noise stream of one z-slice of one sequence.
fn noise_stream(s: Sequence, z: usize) -> u64 {
    ((100 + s.index() as u64) << 32) | z as u64
}

/// Intensities per sequence in `[T1w, T1ce, T2w, FLAIR]` order.
pub type Intensities = [f64; 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Sphere,
    Ellipsoid,
}

/// One lesion compartment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub shape: Shape,
    /// Center in world mm.
    pub center: [f64; 3],
    /// Semi-axes in mm; a sphere uses `radii[0]` on every axis.
    pub radii: [f64; 3],
    /// Canonical label 1 (ET), 2 (ED) or 3 (CAV).
    pub label: u8,
    /// Overrides the contrast table for this component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity: Option<Intensities>,
}

impl Component {
    pub fn sphere(center: [f64; 3], radius: f64, label: u8) -> Self {
        Component {
            shape: Shape::Sphere,
            center,
            radii: [radius; 3],
            label,
            intensity: None,
        }
    }

    pub fn ellipsoid(center: [f64; 3], radii: [f64; 3], label: u8) -> Self {
        Component {
            shape: Shape::Ellipsoid,
            center,
            radii,
            label,
            intensity: None,
        }
    }

    fn semi_axes(&self) -> [f64; 3] {
        match self.shape {
            Shape::Sphere => [self.radii[0]; 3],
            Shape::Ellipsoid => self.radii,
        }
    }
}

/// Tissue intensities per sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Contrast {
    pub background: Intensities,
    pub brain: Intensities,
    pub et: Intensities,
    pub ed: Intensities,
    pub cav: Intensities,
    pub skull: Intensities,
}

impl Default for Contrast {
    /// Brain is 1 everywhere. Enhancing tumor is bright on T1ce and mildly
    /// dark on T1w; edema is bright on FLAIR and T2w; the cavity holds
    /// fluid, dark on T1w, T1ce and FLAIR and bright on T2w.
    fn default() -> Self {
        Contrast {
            background: [0.0; 4],
            brain: [1.0; 4],
            et: [0.75, 4.0, 1.6, 2.0],
            ed: [0.85, 1.0, 2.0, 3.0],
            cav: [0.1, 0.1, 3.0, 0.2],
            skull: [1.8, 1.8, 0.6, 1.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub seed: u64,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub brain_semi_axes: [f64; 3],
    pub components: Vec<Component>,
    /// Noise standard deviation per sequence, in brain-intensity units.
    pub noise_sigma: Intensities,
    /// Misalignment per sequence, centered on the world origin.
    pub misalignment: BTreeMap<Sequence, AffineParams>,
    /// Fraction of enhancing tumor volume removed: ET radii are scaled by
    /// `(1 − f)^(1/3)`, and `f = 1` removes ET entirely.
    pub resection_fraction: f64,
    /// Adds a bright shell outside the brain with a dark gap in between.
    pub skull: bool,
    pub contrast: Contrast,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            seed: 0,
            dims: ATLAS_DIMS,
            spacing: ATLAS_SPACING,
            brain_semi_axes: SYNTHETIC_BRAIN_SEMI_AXES,
            components: Vec::new(),
            noise_sigma: [0.0; 4],
            misalignment: BTreeMap::new(),
            resection_fraction: 0.0,
            skull: false,
            contrast: Contrast::default(),
        }
    }
}

/// Skull shell, as multiples of the brain semi-axes.
const SKULL_INNER: f64 = 1.10;
const SKULL_OUTER: f64 = 1.18;

#[inline]
fn ellipsoid_r2(p: [f64; 3], c: [f64; 3], a: [f64; 3]) -> f64 {
    let dx = (p[0] - c[0]) / a[0];
    let dy = (p[1] - c[1]) / a[1];
    let dz = (p[2] - c[2]) / a[2];
    dx * dx + dy * dy + dz * dz
}

/// Tissue class at a point; lesion classes carry the component index.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Tissue {
    Background,
    Skull,
    Brain,
    Lesion(usize),
}

impl PhantomSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let s: PhantomSpec = toml::from_str(text).map_err(|e| Error::InvalidSpec(format!("phantom spec: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn geometry(&self) -> Result<Geometry> {
        Geometry::centered(self.dims, self.spacing).map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    /// Radius multiplier applied to ET components.
    pub fn et_scale(&self) -> f64 {
        (1.0 - self.resection_fraction).max(0.0).cbrt()
    }

    /// Components as rendered, with the resection applied and fully
    /// resected ET dropped.
    pub fn effective_components(&self) -> Vec<Component> {
        let k = self.et_scale();
        self.components
            .iter()
            .filter(|c| !(c.label == 1 && k == 0.0))
            .map(|c| {
                let mut c = c.clone();
                if c.label == 1 {
                    c.radii = c.radii.map(|r| r * k);
                }
                c
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        self.geometry()?;
        if self.brain_semi_axes.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return bad(format!("brain semi-axes {:?}", self.brain_semi_axes));
        }
        if !(0.0..=1.0).contains(&self.resection_fraction) {
            return bad(format!("resection fraction {}", self.resection_fraction));
        }
        if self.noise_sigma.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return bad(format!("noise sigma {:?}", self.noise_sigma));
        }
        for (s, p) in &self.misalignment {
            if p.to_array().iter().any(|v| !v.is_finite()) {
                return bad(format!("misalignment of {s} is not finite"));
            }
        }
        for (i, c) in self.components.iter().enumerate() {
            if !(1..=3).contains(&c.label) {
                return bad(format!("component {i}: label {}", c.label));
            }
            let a = c.semi_axes();
            if a.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
                return bad(format!("component {i}: radii {:?}", c.radii));
            }
            if !self.inside_brain(c.center, a) {
                return bad(format!("component {i} extends outside the brain"));
            }
        }
        Ok(())
    }

    /// Checks a dense set of surface points of the ellipsoid `(c, a)`.
    fn inside_brain(&self, c: [f64; 3], a: [f64; 3]) -> bool {
        const N: usize = 2000;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        (0..N).all(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / N as f64;
            let r = (1.0 - z * z).sqrt();
            let th = golden * i as f64;
            let p = [c[0] + a[0] * r * th.cos(), c[1] + a[1] * r * th.sin(), c[2] + a[2] * z];
            ellipsoid_r2(p, [0.0; 3], self.brain_semi_axes) <= 1.0
        }) && ellipsoid_r2(c, [0.0; 3], self.brain_semi_axes) <= 1.0
    }

    fn tissue_at(&self, comps: &[Component], p: [f64; 3]) -> Tissue {
        let rb = ellipsoid_r2(p, [0.0; 3], self.brain_semi_axes);
        if rb > 1.0 {
            if self.skull && rb >= SKULL_INNER * SKULL_INNER && rb <= SKULL_OUTER * SKULL_OUTER {
                return Tissue::Skull;
            }
            return Tissue::Background;
        }
        for (k, c) in comps.iter().enumerate().rev() {
            if ellipsoid_r2(p, c.center, c.semi_axes()) <= 1.0 {
                return Tissue::Lesion(k);
            }
        }
        Tissue::Brain
    }

    fn misalignment_of(&self, s: Sequence) -> AffineTransform {
        self.misalignment
            .get(&s)
            .map_or_else(AffineTransform::identity, |p| AffineTransform::from_params_centered(p, [0.0; 3]))
    }

    /// World position of every voxel center pulled back through `m`.
    fn render<T: Send + Copy + Default>(
        &self,
        geom: &Geometry,
        m: &AffineTransform,
        f: impl Fn(Tissue) -> T + Sync,
    ) -> Result<Vec<T>> {
        let comps = self.effective_components();
        let back = m.inverse()?.compose(&geom.affine).rows();
        let [nx, ny, _] = geom.dims;
        let mut out = vec![T::default(); geom.len()];
        out.par_chunks_mut(nx * ny).enumerate().for_each(|(z, plane)| {
            let zf = z as f64;
            for y in 0..ny {
                let yf = y as f64;
                for x in 0..nx {
                    let xf = x as f64;
                    let p = [
                        back[0][0] * xf + back[0][1] * yf + back[0][2] * zf + back[0][3],
                        back[1][0] * xf + back[1][1] * yf + back[1][2] * zf + back[1][3],
                        back[2][0] * xf + back[2][1] * yf + back[2][2] * zf + back[2][3],
                    ];
                    plane[x + nx * y] = f(self.tissue_at(&comps, p));
                }
            }
        });
        Ok(out)
    }

    /// Canonical labels on `geom` for anatomy seen through `m`.
    pub fn render_labels(&self, geom: &Geometry, m: &AffineTransform) -> Result<LabelVolume> {
        let comps = self.effective_components();
        let data = self.render(geom, m, |t| match t {
            Tissue::Lesion(k) => comps[k].label,
            _ => 0,
        })?;
        LabelVolume::new(geom.clone(), data)
    }

    /// Ground truth on the phantom grid, in the T1ce frame.
    pub fn ground_truth(&self) -> Result<LabelVolume> {
        self.render_labels(&self.geometry()?, &self.misalignment_of(Sequence::T1ce))
    }

    /// Ground truth on an arbitrary grid with no misalignment.
    pub fn ground_truth_on(&self, geom: &Geometry) -> Result<LabelVolume> {
        self.render_labels(geom, &AffineTransform::identity())
    }

    pub fn render_sequence(&self, s: Sequence) -> Result<VoxelGrid> {
        let geom = self.geometry()?;
        let comps = self.effective_components();
        let k = s.index();
        let c = &self.contrast;
        let sigma = self.noise_sigma[k];
        let mut data = self.render(&geom, &self.misalignment_of(s), |t| match t {
            Tissue::Background => c.background[k],
            Tissue::Skull => c.skull[k],
            Tissue::Brain => c.brain[k],
            Tissue::Lesion(j) => {
                let comp = &comps[j];
                comp.intensity.map_or_else(
                    || match comp.label {
                        1 => c.et[k],
                        2 => c.ed[k],
                        _ => c.cav[k],
                    },
                    |v| v[k],
                )
            }
        })?;
        if sigma > 0.0 {
            let plane = geom.dims[0] * geom.dims[1];
            data.par_chunks_mut(plane).enumerate().for_each(|(z, slice)| {
                let mut rng = stream(self.seed, noise_stream(s, z));
                for v in slice {
                    *v += sigma * rng.sample::<f64, _>(StandardNormal);
                }
            });
        }
        VoxelGrid::new(geom, data)
    }
}

/// A rendered phantom scan.
#[derive(Debug, Clone)]
pub struct PhantomCase {
    pub sequences: BTreeMap<Sequence, VoxelGrid>,
    pub gt: LabelVolume,
    pub gt_et_cm3: f64,
    pub eor: EorClass,
}

impl PhantomCase {
    pub fn to_raw_case(&self) -> RawCase {
        RawCase {
            sequences: self.sequences.clone(),
            external_mask: None,
            gt: Some(self.gt.clone()),
        }
    }

    pub fn into_raw_case(self) -> RawCase {
        RawCase {
            sequences: self.sequences,
            external_mask: None,
            gt: Some(self.gt),
        }
    }
}

/// Renders all four sequences and the ground truth.
pub fn generate_case(spec: &PhantomSpec) -> Result<PhantomCase> {
    spec.validate()?;
    let mut sequences = BTreeMap::new();
    for s in Sequence::ALL {
        sequences.insert(s, spec.render_sequence(s)?);
    }
    let gt = spec.ground_truth()?;
    let gt_et_cm3 = region_volume_cm3(&gt, Region::Et);
    Ok(PhantomCase {
        sequences,
        gt,
        gt_et_cm3,
        eor: classify_eor(gt_et_cm3, &EorConfig::default())?,
    })
}

/// A phantom scan after preprocessing and the baseline segmenter, with
/// ground truth and prediction on the atlas grid.
#[derive(Debug, Clone)]
pub struct SegmentedCase {
    pub output: PipelineOutput,
    pub gt: LabelVolume,
    pub pred: LabelVolume,
}

/// Preprocesses a rendered phantom and segments it with the baseline.
pub fn segment_case(
    case: PhantomCase,
    atlas: &AtlasGrid,
    pipeline: &PipelineConfig,
    baseline: &BaselineConfig,
) -> Result<SegmentedCase> {
    let mut output = run_pipeline(&case.into_raw_case(), atlas, pipeline)?;
    let pred = baseline_segment(&output.normalized, &output.mask, baseline)?;
    let gt = output.gt.take().expect("phantom cases carry ground truth");
    Ok(SegmentedCase { output, gt, pred })
}
