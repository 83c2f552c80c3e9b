//! Seeded phantom cohorts with an exact GTR:RT split.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Component, PhantomCase, PhantomSpec};
use crate::cohort::{Manifest, ManifestCase, Timepoint};
use crate::eor::EorClass;
use crate::error::{Error, Result};
use crate::geometry::AffineParams;
use crate::nifti::{self, DataType};
use crate::preprocess::Sequence;
use crate::rng::{stream, ChaCha8Rng};

const STREAM_CLASSES: u64 = 1;
const STREAM_TIMEPOINTS: u64 = 2;
const STREAM_PARAMS: u64 = 3;
const MAX_DRAWS: usize = 1000;

/// Closed interval `[lo, hi]` for a drawn parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range(pub f64, pub f64);

impl Range {
    fn draw(self, rng: &mut ChaCha8Rng) -> f64 {
        if self.1 > self.0 {
            rng.gen_range(self.0..self.1)
        } else {
            self.0
        }
    }

    fn valid(self) -> bool {
        self.0.is_finite() && self.1.is_finite() && self.0 <= self.1
    }
}

/// How a cohort is drawn. Grid, brain, contrast, noise and skull come from
/// `base`; lesion layout and misalignments are drawn per case.
///
/// Each case is an edema ellipsoid around a spherical cavity with an
/// enhancing nodule centered on the cavity wall. GTR cases have the nodule
/// fully resected; RT cases keep a resection fraction from
/// `rt_resection`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub n: usize,
    pub seed: u64,
    /// Exactly `round(n × gtr_fraction)` cases are GTR.
    pub gtr_fraction: f64,
    /// Exactly `round(n × lps_fraction)` cases are late scans; the rest
    /// are early.
    pub lps_fraction: f64,
    pub center: String,
    pub ed_radius_mm: Range,
    pub cav_radius_mm: Range,
    pub et_radius_mm: Range,
    pub rt_resection: Range,
    /// Per-axis bound on translations of non-T1ce sequences.
    pub max_translation_mm: f64,
    /// Per-axis bound on rotations of non-T1ce sequences.
    pub max_rotation_deg: f64,
    pub base: PhantomSpec,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            n: 20,
            seed: 20240601,
            gtr_fraction: 0.5,
            lps_fraction: 0.5,
            center: "phantom".into(),
            ed_radius_mm: Range(18.0, 26.0),
            cav_radius_mm: Range(8.0, 13.0),
            et_radius_mm: Range(5.0, 7.0),
            rt_resection: Range(0.0, 0.5),
            max_translation_mm: 0.0,
            max_rotation_deg: 0.0,
            base: PhantomSpec::default(),
        }
    }
}

impl CohortSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let s: CohortSpec = toml::from_str(text).map_err(|e| Error::InvalidSpec(format!("cohort spec: {e}")))?;
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

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(format!("cohort spec: {m}")));
        if self.n == 0 {
            return bad("n must be positive");
        }
        if !(0.0..=1.0).contains(&self.gtr_fraction) || !(0.0..=1.0).contains(&self.lps_fraction) {
            return bad("fractions must lie in [0, 1]");
        }
        for r in [self.ed_radius_mm, self.cav_radius_mm, self.et_radius_mm] {
            if !r.valid() || r.0 <= 0.0 {
                return bad("radius ranges must be positive and ordered");
            }
        }
        if !self.rt_resection.valid() || self.rt_resection.0 < 0.0 || self.rt_resection.1 >= 1.0 {
            return bad("rt_resection must lie in [0, 1)");
        }
        if !(self.max_translation_mm >= 0.0) || !(self.max_rotation_deg >= 0.0) {
            return bad("misalignment bounds must be non-negative");
        }
        let mut base = self.base.clone();
        base.components.clear();
        base.validate()
    }
}

/// One drawn case: its identity, the full phantom spec and the intended
/// EOR class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMember {
    pub id: String,
    pub index: usize,
    pub timepoint: Timepoint,
    pub class: EorClass,
    pub spec: PhantomSpec,
}

fn exact_split(n: usize, fraction: f64, seed: u64, stream_id: u64) -> Vec<bool> {
    let k = (n as f64 * fraction).round() as usize;
    let mut flags: Vec<bool> = (0..n).map(|i| i < k).collect();
    flags.shuffle(&mut stream(seed, stream_id));
    flags
}

fn unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let th = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).sqrt();
    [r * th.cos(), r * th.sin(), z]
}

fn draw_member(cs: &CohortSpec, index: usize, gtr: bool, lps: bool) -> Result<CohortMember> {
    let case_seed = cs.seed ^ index as u64;
    let mut rng = stream(case_seed, STREAM_PARAMS);
    let a = cs.base.brain_semi_axes;
    for _ in 0..MAX_DRAWS {
        let r_ed = cs.ed_radius_mm.draw(&mut rng);
        let ed_radii = [
            r_ed * rng.gen_range(0.85..1.15),
            r_ed * rng.gen_range(0.85..1.15),
            r_ed * rng.gen_range(0.85..1.15),
        ];
        let c = [
            rng.gen_range(-0.6..0.6) * a[0],
            rng.gen_range(-0.6..0.6) * a[1],
            rng.gen_range(-0.6..0.6) * a[2],
        ];
        let r_cav = cs.cav_radius_mm.draw(&mut rng);
        let r_et = cs.et_radius_mm.draw(&mut rng);
        let u = unit_vector(&mut rng);
        let et_center = [c[0] + r_cav * u[0], c[1] + r_cav * u[1], c[2] + r_cav * u[2]];
        let resection = if gtr { 1.0 } else { cs.rt_resection.draw(&mut rng) };
        let mut spec = cs.base.clone();
        spec.seed = case_seed;
        spec.resection_fraction = resection;
        spec.components = vec![
            Component::ellipsoid(c, ed_radii, 2),
            Component::sphere(c, r_cav, 3),
            Component::sphere(et_center, r_et, 1),
        ];
        let t = cs.max_translation_mm;
        let rot = cs.max_rotation_deg.to_radians();
        spec.misalignment = BTreeMap::new();
        if t > 0.0 || rot > 0.0 {
            for s in [Sequence::T1w, Sequence::T2w, Sequence::Flair] {
                let mut draw = |b: f64| if b > 0.0 { rng.gen_range(-b..b) } else { 0.0 };
                let p = AffineParams::rigid([draw(t), draw(t), draw(t)], [draw(rot), draw(rot), draw(rot)]);
                spec.misalignment.insert(s, p);
            }
        }
        if spec.validate().is_ok() {
            return Ok(CohortMember {
                id: format!("case{index:03}"),
                index,
                timepoint: if lps { Timepoint::Lps } else { Timepoint::Eps },
                class: if gtr { EorClass::Gtr } else { EorClass::Rt },
                spec,
            });
        }
    }
    Err(Error::InvalidSpec(format!(
        "case {index}: no lesion layout fits the brain after {MAX_DRAWS} draws"
    )))
}

/// Draws every member of a cohort. Rendering is left to the caller so
/// large cohorts never sit in memory at once.
pub fn generate_cohort(cs: &CohortSpec) -> Result<Vec<CohortMember>> {
    cs.validate()?;
    let gtr = exact_split(cs.n, cs.gtr_fraction, cs.seed, STREAM_CLASSES);
    let lps = exact_split(cs.n, cs.lps_fraction, cs.seed, STREAM_TIMEPOINTS);
    (0..cs.n).map(|i| draw_member(cs, i, gtr[i], lps[i])).collect()
}

/// Writes a rendered case as `<dir>/<stem>.nii.gz` per sequence plus
/// `gt.nii.gz`, and returns the manifest entry (paths relative to `root`).
pub fn write_case(root: &Path, member: &CohortMember, center: &str, case: &PhantomCase) -> Result<ManifestCase> {
    let dir = root.join(&member.id);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (s, grid) in &case.sequences {
        nifti::write_nifti_file(dir.join(format!("{}.nii.gz", s.stem())), grid, DataType::Float32)?;
    }
    nifti::write_label_file(dir.join("gt.nii.gz"), &case.gt)?;
    Ok(ManifestCase {
        id: member.id.clone(),
        center: center.to_string(),
        timepoint: member.timepoint,
        gt: PathBuf::from(&member.id).join("gt.nii.gz"),
        predictions: BTreeMap::new(),
    })
}

impl CohortSpec {
    /// A manifest header recording how the cohort was drawn.
    pub fn manifest(&self, cases: Vec<ManifestCase>) -> Result<Manifest> {
        let generator = toml::Value::try_from(self).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(Manifest {
            seed: Some(self.seed),
            generator: Some(generator),
            cases,
            base_dir: PathBuf::new(),
        })
    }

    /// Recovers the cohort spec stored by [`manifest`](Self::manifest).
    pub fn from_manifest(m: &Manifest) -> Result<Self> {
        let g = m
            .generator
            .clone()
            .ok_or_else(|| Error::InvalidSpec("manifest has no generator section".into()))?;
        let s: CohortSpec = g.try_into().map_err(|e: toml::de::Error| Error::InvalidSpec(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }
}
