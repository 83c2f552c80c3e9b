use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Invertible 4×4 homogeneous transform with last row `(0, 0, 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    matrix: Matrix4<f64>,
}

/// The 12-number optimizer parameterization of an affine map.
///
/// The linear part is `R · H · D` where `R = Rz·Ry·Rx` (ZYX Euler angles),
/// `H` is unit upper-triangular (shears `xy`, `xz`, `yz`) and
/// `D = diag(exp(log_scale))`. Translation is applied last. When a center
/// `c` is used the map is `x ↦ R·H·D·(x − c) + c + t`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AffineParams {
    pub translation: [f64; 3],
    /// Radians about x, y, z (composed as Rz·Ry·Rx).
    pub rotation: [f64; 3],
    pub log_scale: [f64; 3],
    /// `[xy, xz, yz]` entries of the unit upper-triangular shear.
    pub shear: [f64; 3],
}

impl AffineParams {
    pub const LEN: usize = 12;

    pub fn rigid(translation: [f64; 3], rotation: [f64; 3]) -> Self {
        AffineParams {
            translation,
            rotation,
            ..Default::default()
        }
    }

    pub fn to_array(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        out[0..3].copy_from_slice(&self.translation);
        out[3..6].copy_from_slice(&self.rotation);
        out[6..9].copy_from_slice(&self.log_scale);
        out[9..12].copy_from_slice(&self.shear);
        out
    }

    pub fn from_array(a: &[f64; 12]) -> Self {
        AffineParams {
            translation: [a[0], a[1], a[2]],
            rotation: [a[3], a[4], a[5]],
            log_scale: [a[6], a[7], a[8]],
            shear: [a[9], a[10], a[11]],
        }
    }
}

pub(crate) fn rotation_zyx(r: [f64; 3]) -> Matrix3<f64> {
    let (sx, cx) = r[0].sin_cos();
    let (sy, cy) = r[1].sin_cos();
    let (sz, cz) = r[2].sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
    let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let rz = Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
    rz * ry * rx
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl AffineTransform {
    pub fn identity() -> Self {
        AffineTransform {
            matrix: Matrix4::identity(),
        }
    }

    /// Builds from a full matrix; fails when the last row is not `(0,0,0,1)`
    /// or the linear part is singular.
    pub fn from_matrix(matrix: Matrix4<f64>) -> Result<Self> {
        let last = matrix.row(3);
        if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
            return Err(Error::HeaderInconsistent(
                "affine last row must be (0, 0, 0, 1)".into(),
            ));
        }
        let t = AffineTransform { matrix };
        if t.linear().determinant() == 0.0 || !t.linear().iter().all(|v| v.is_finite()) {
            return Err(Error::SingularTransform);
        }
        Ok(t)
    }

    /// Rows of the upper 3×4 block.
    pub fn from_rows(rows: [[f64; 4]; 3]) -> Result<Self> {
        let mut m = Matrix4::identity();
        for (r, row) in rows.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                m[(r, c)] = *v;
            }
        }
        Self::from_matrix(m)
    }

    pub fn translation(t: [f64; 3]) -> Self {
        let mut m = Matrix4::identity();
        m[(0, 3)] = t[0];
        m[(1, 3)] = t[1];
        m[(2, 3)] = t[2];
        AffineTransform { matrix: m }
    }

    /// Diagonal scaling plus offset, the usual voxel→world map of an
    /// axis-aligned grid.
    pub fn scale_offset(scale: [f64; 3], offset: [f64; 3]) -> Self {
        let mut m = Matrix4::identity();
        for i in 0..3 {
            m[(i, i)] = scale[i];
            m[(i, 3)] = offset[i];
        }
        AffineTransform { matrix: m }
    }

    pub fn from_params(p: &AffineParams) -> Self {
        Self::from_params_centered(p, [0.0; 3])
    }

    pub fn from_params_centered(p: &AffineParams, center: [f64; 3]) -> Self {
        let s = p.shear;
        let h = Matrix3::new(1.0, s[0], s[1], 0.0, 1.0, s[2], 0.0, 0.0, 1.0);
        let d = Matrix3::from_diagonal(&Vector3::new(
            p.log_scale[0].exp(),
            p.log_scale[1].exp(),
            p.log_scale[2].exp(),
        ));
        let lin = rotation_zyx(p.rotation) * h * d;
        let c = Vector3::from(center);
        let off = c + Vector3::from(p.translation) - lin * c;
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&lin);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&off);
        AffineTransform { matrix: m }
    }

    pub fn to_params(&self) -> Result<AffineParams> {
        self.to_params_centered([0.0; 3])
    }

    /// Inverse of [`from_params_centered`](Self::from_params_centered).
    ///
    /// Fails with `SingularTransform` for reflections, which the
    /// parameterization cannot express.
    pub fn to_params_centered(&self, center: [f64; 3]) -> Result<AffineParams> {
        let lin = self.linear();
        if lin.determinant() <= 0.0 {
            return Err(Error::SingularTransform);
        }
        // Gram-Schmidt QR: lin = Q·U with U upper triangular, positive diagonal.
        let a0 = lin.column(0).into_owned();
        let a1 = lin.column(1).into_owned();
        let a2 = lin.column(2).into_owned();
        let u00 = a0.norm();
        let q0 = a0 / u00;
        let u01 = q0.dot(&a1);
        let v1 = a1 - q0 * u01;
        let u11 = v1.norm();
        let q1 = v1 / u11;
        let u02 = q0.dot(&a2);
        let u12 = q1.dot(&a2);
        let v2 = a2 - q0 * u02 - q1 * u12;
        let u22 = v2.norm();
        let q2 = v2 / u22;
        let q = Matrix3::from_columns(&[q0, q1, q2]);

        let rotation = [
            q[(2, 1)].atan2(q[(2, 2)]),
            (-q[(2, 0)]).clamp(-1.0, 1.0).asin(),
            q[(1, 0)].atan2(q[(0, 0)]),
        ];
        let log_scale = [u00.ln(), u11.ln(), u22.ln()];
        let shear = [u01 / u11, u02 / u22, u12 / u22];
        let c = Vector3::from(center);
        let t = self.offset() - c + lin * c;
        Ok(AffineParams {
            translation: [t[0], t[1], t[2]],
            rotation,
            log_scale,
            shear,
        })
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn linear(&self) -> Matrix3<f64> {
        self.matrix.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn offset(&self) -> Vector3<f64> {
        self.matrix.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn rows(&self) -> [[f64; 4]; 3] {
        let m = &self.matrix;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(0, 3)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)], m[(1, 3)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)], m[(2, 3)]],
        ]
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.matrix * Vector4::new(p[0], p[1], p[2], 1.0);
        [v[0], v[1], v[2]]
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &AffineTransform) -> AffineTransform {
        AffineTransform {
            matrix: self.matrix * other.matrix,
        }
    }

    pub fn inverse(&self) -> Result<AffineTransform> {
        let lin = self.linear();
        let inv = lin.try_inverse().ok_or(Error::SingularTransform)?;
        if !inv.iter().all(|v| v.is_finite()) {
            return Err(Error::SingularTransform);
        }
        let off = -(inv * self.offset());
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&inv);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&off);
        Ok(AffineTransform { matrix: m })
    }

    pub fn max_abs_diff(&self, other: &AffineTransform) -> f64 {
        (self.matrix - other.matrix).abs().max()
    }

    /// Plain-text form: four whitespace-separated rows.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in 0..4 {
            let row: Vec<String> = (0..4).map(|c| format!("{:.17e}", self.matrix[(r, c)])).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let vals: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("transform: {e}"))))
            .collect::<Result<_>>()?;
        if vals.len() != 16 {
            return Err(Error::Parse(format!("transform: expected 16 numbers, got {}", vals.len())));
        }
        Self::from_matrix(Matrix4::from_row_slice(&vals))
    }
}
