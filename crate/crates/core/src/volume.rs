//! Dense 3D volumes sharing one geometry description.
//!
//! Voxels are stored with x varying fastest, then y, then z, which is the
//! NIfTI on-disk order: `index = x + nx * (y + ny * z)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::AffineTransform;

/// Grid size, voxel spacing in mm and the voxel-index → world-mm map.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub affine: AffineTransform,
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], affine: AffineTransform) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::HeaderInconsistent(format!("zero-sized dims {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::HeaderInconsistent(format!("non-positive spacing {spacing:?}")));
        }
        if affine.linear().determinant() == 0.0 {
            return Err(Error::SingularTransform);
        }
        Ok(Geometry {
            dims,
            spacing,
            affine,
        })
    }

    /// Axis-aligned grid with the given spacing whose voxel `(0,0,0)` sits
    /// at `origin`.
    pub fn axis_aligned(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        Self::new(dims, spacing, AffineTransform::scale_offset(spacing, origin))
    }

    /// Axis-aligned grid centered on the world origin.
    pub fn centered(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        let origin = [
            -(dims[0] as f64 - 1.0) * spacing[0] / 2.0,
            -(dims[1] as f64 - 1.0) * spacing[1] / 2.0,
            -(dims[2] as f64 - 1.0) * spacing[2] / 2.0,
        ];
        Self::axis_aligned(dims, spacing, origin)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [i % nx, (i / nx) % ny, i / (nx * ny)]
    }

    pub fn voxel_to_world(&self, p: [f64; 3]) -> [f64; 3] {
        self.affine.apply(p)
    }

    pub fn voxel_volume_mm3(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// World position of the grid's central voxel.
    pub fn center_world(&self) -> [f64; 3] {
        self.voxel_to_world([
            (self.dims[0] as f64 - 1.0) / 2.0,
            (self.dims[1] as f64 - 1.0) / 2.0,
            (self.dims[2] as f64 - 1.0) / 2.0,
        ])
    }

    /// Same dims, spacing and affine up to float32 storage precision.
    pub fn matches(&self, other: &Geometry) -> bool {
        if self.dims != other.dims {
            return false;
        }
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-5 * (1.0 + a.abs().max(b.abs()));
        self.spacing
            .iter()
            .zip(other.spacing.iter())
            .all(|(a, b)| close(*a, *b))
            && self
                .affine
                .matrix()
                .iter()
                .zip(other.affine.matrix().iter())
                .all(|(a, b)| close(*a, *b))
    }

    pub fn ensure_matches(&self, other: &Geometry) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "dims {:?} spacing {:?} vs dims {:?} spacing {:?}",
                self.dims, self.spacing, other.dims, other.spacing
            )))
        }
    }
}

/// A scalar image: one real value per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub geom: Geometry,
    pub data: Vec<f64>,
}

impl VoxelGrid {
    pub fn new(geom: Geometry, data: Vec<f64>) -> Result<Self> {
        if data.len() != geom.len() {
            return Err(Error::HeaderInconsistent(format!(
                "data length {} != {} voxels",
                data.len(),
                geom.len()
            )));
        }
        Ok(VoxelGrid { geom, data })
    }

    pub fn zeros(geom: Geometry) -> Self {
        let n = geom.len();
        VoxelGrid {
            geom,
            data: vec![0.0; n],
        }
    }

    pub fn from_fn(geom: Geometry, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(geom.len());
        for z in 0..geom.dims[2] {
            for y in 0..geom.dims[1] {
                for x in 0..geom.dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        VoxelGrid { geom, data }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geom.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.geom.spacing
    }

    pub fn affine(&self) -> &AffineTransform {
        &self.geom.affine
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.geom.index(x, y, z)]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn is_constant(&self) -> bool {
        let (lo, hi) = self.min_max();
        !(hi > lo)
    }
}

/// Canonical postoperative label scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Label {
    Background = 0,
    /// Contrast-enhancing residual tumor.
    Et = 1,
    /// Edema / infiltration.
    Ed = 2,
    /// Surgical cavity (necrosis preoperatively).
    Cav = 3,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Background),
            1 => Some(Label::Et),
            2 => Some(Label::Ed),
            3 => Some(Label::Cav),
            _ => None,
        }
    }
}

/// Integer label map in the canonical `{0, 1, 2, 3}` scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    pub geom: Geometry,
    pub data: Vec<u8>,
}

impl LabelVolume {
    pub fn new(geom: Geometry, data: Vec<u8>) -> Result<Self> {
        if data.len() != geom.len() {
            return Err(Error::HeaderInconsistent(format!(
                "label length {} != {} voxels",
                data.len(),
                geom.len()
            )));
        }
        if let Some(&bad) = data.iter().find(|&&v| v > 3) {
            return Err(Error::LabelOutOfRange(bad as i64));
        }
        Ok(LabelVolume { geom, data })
    }

    pub fn zeros(geom: Geometry) -> Self {
        let n = geom.len();
        LabelVolume {
            geom,
            data: vec![0; n],
        }
    }

    pub fn count(&self, label: Label) -> usize {
        self.data.iter().filter(|&&v| v == label as u8).count()
    }

    /// Labels present in the volume, ascending.
    pub fn label_set(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &v in &self.data {
            seen[v as usize] = true;
        }
        (0..=255u8).filter(|&v| seen[v as usize]).collect()
    }

    pub fn to_grid(&self) -> VoxelGrid {
        VoxelGrid {
            geom: self.geom.clone(),
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let g = Geometry::centered([3, 4, 5], [1.0; 3]).unwrap();
        for i in 0..g.len() {
            let [x, y, z] = g.coords(i);
            assert_eq!(g.index(x, y, z), i);
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(Geometry::axis_aligned([2, 2, 2], [1.0, 0.0, 1.0], [0.0; 3]).is_err());
        assert!(Geometry::axis_aligned([0, 2, 2], [1.0; 3], [0.0; 3]).is_err());
        let g = Geometry::centered([2, 2, 2], [1.0; 3]).unwrap();
        assert!(VoxelGrid::new(g.clone(), vec![0.0; 7]).is_err());
        assert!(matches!(
            LabelVolume::new(g, vec![0, 1, 2, 3, 4, 0, 0, 0]),
            Err(Error::LabelOutOfRange(4))
        ));
    }

    #[test]
    fn centered_grid_center_is_origin() {
        let g = Geometry::centered([240, 240, 155], [1.0; 3]).unwrap();
        let c = g.center_world();
        assert!(c.iter().all(|v| v.abs() < 1e-12));
    }
}
