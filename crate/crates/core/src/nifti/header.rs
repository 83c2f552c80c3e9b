use byteorder::{BigEndian, ByteOrder, LittleEndian};
use nalgebra::{Matrix3, Matrix4};

use crate::error::{Error, Result};
use crate::geometry::AffineTransform;

pub const HEADER_SIZE: usize = 348;
/// Header plus the 4-byte extension flag.
pub const MIN_VOX_OFFSET: usize = 352;
pub const MAGIC_SINGLE: [u8; 4] = *b"n+1\0";
pub const MAGIC_PAIR: [u8; 4] = *b"ni1\0";

/// Voxel storage types this crate reads and writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataType {
    Uint8,
    Int16,
    Int32,
    Float32,
    Float64,
    Uint16,
}

impl DataType {
    pub const ALL: [DataType; 6] = [
        DataType::Uint8,
        DataType::Int16,
        DataType::Int32,
        DataType::Float32,
        DataType::Float64,
        DataType::Uint16,
    ];

    pub fn code(self) -> i16 {
        match self {
            DataType::Uint8 => 2,
            DataType::Int16 => 4,
            DataType::Int32 => 8,
            DataType::Float32 => 16,
            DataType::Float64 => 64,
            DataType::Uint16 => 512,
        }
    }

    pub fn from_code(code: i16) -> Result<DataType> {
        Ok(match code {
            2 => DataType::Uint8,
            4 => DataType::Int16,
            8 => DataType::Int32,
            16 => DataType::Float32,
            64 => DataType::Float64,
            512 => DataType::Uint16,
            other => return Err(Error::UnsupportedDatatype(other)),
        })
    }

    pub fn bitpix(self) -> i16 {
        match self {
            DataType::Uint8 => 8,
            DataType::Int16 | DataType::Uint16 => 16,
            DataType::Int32 | DataType::Float32 => 32,
            DataType::Float64 => 64,
        }
    }

    pub fn bytes(self) -> usize {
        self.bitpix() as usize / 8
    }

    pub fn is_integer(self) -> bool {
        !matches!(self, DataType::Float32 | DataType::Float64)
    }

    /// Inclusive value range for integer types.
    pub fn int_range(self) -> Option<(f64, f64)> {
        match self {
            DataType::Uint8 => Some((0.0, u8::MAX as f64)),
            DataType::Int16 => Some((i16::MIN as f64, i16::MAX as f64)),
            DataType::Int32 => Some((i32::MIN as f64, i32::MAX as f64)),
            DataType::Uint16 => Some((0.0, u16::MAX as f64)),
            _ => None,
        }
    }
}

/// The NIfTI-1 header, field for field.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub sizeof_hdr: i32,
    pub dim_info: u8,
    pub dim: [i16; 8],
    pub intent_p1: f32,
    pub intent_p2: f32,
    pub intent_p3: f32,
    pub intent_code: i16,
    pub datatype: i16,
    pub bitpix: i16,
    pub slice_start: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub slice_end: i16,
    pub slice_code: u8,
    pub xyzt_units: u8,
    pub cal_max: f32,
    pub cal_min: f32,
    pub slice_duration: f32,
    pub toffset: f32,
    pub descrip: [u8; 80],
    pub aux_file: [u8; 24],
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern_b: f32,
    pub quatern_c: f32,
    pub quatern_d: f32,
    pub qoffset_x: f32,
    pub qoffset_y: f32,
    pub qoffset_z: f32,
    pub srow_x: [f32; 4],
    pub srow_y: [f32; 4],
    pub srow_z: [f32; 4],
    pub intent_name: [u8; 16],
    pub magic: [u8; 4],
    /// Raw bytes between the header and `vox_offset`, extension flag included.
    pub extension: Vec<u8>,
    /// Whether the source stream was big-endian.
    pub big_endian: bool,
}

impl Default for NiftiHeader {
    fn default() -> Self {
        NiftiHeader {
            sizeof_hdr: HEADER_SIZE as i32,
            dim_info: 0,
            dim: [3, 1, 1, 1, 1, 1, 1, 1],
            intent_p1: 0.0,
            intent_p2: 0.0,
            intent_p3: 0.0,
            intent_code: 0,
            datatype: DataType::Float32.code(),
            bitpix: 32,
            slice_start: 0,
            pixdim: [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            vox_offset: MIN_VOX_OFFSET as f32,
            scl_slope: 1.0,
            scl_inter: 0.0,
            slice_end: 0,
            slice_code: 0,
            // mm + seconds
            xyzt_units: 2 | 8,
            cal_max: 0.0,
            cal_min: 0.0,
            slice_duration: 0.0,
            toffset: 0.0,
            descrip: [0; 80],
            aux_file: [0; 24],
            qform_code: 0,
            sform_code: 0,
            quatern_b: 0.0,
            quatern_c: 0.0,
            quatern_d: 0.0,
            qoffset_x: 0.0,
            qoffset_y: 0.0,
            qoffset_z: 0.0,
            srow_x: [1.0, 0.0, 0.0, 0.0],
            srow_y: [0.0, 1.0, 0.0, 0.0],
            srow_z: [0.0, 0.0, 1.0, 0.0],
            intent_name: [0; 16],
            magic: MAGIC_SINGLE,
            extension: vec![0; 4],
            big_endian: false,
        }
    }
}

macro_rules! codec {
    ($name:ident, $write:ident, $E:ty) => {
        fn $name(b: &[u8]) -> NiftiHeader {
            let i16s = |o: usize| <$E>::read_i16(&b[o..]);
            let f32s = |o: usize| <$E>::read_f32(&b[o..]);
            let mut h = NiftiHeader {
                sizeof_hdr: <$E>::read_i32(&b[0..]),
                dim_info: b[39],
                ..Default::default()
            };
            for i in 0..8 {
                h.dim[i] = i16s(40 + 2 * i);
                h.pixdim[i] = f32s(76 + 4 * i);
            }
            h.intent_p1 = f32s(56);
            h.intent_p2 = f32s(60);
            h.intent_p3 = f32s(64);
            h.intent_code = i16s(68);
            h.datatype = i16s(70);
            h.bitpix = i16s(72);
            h.slice_start = i16s(74);
            h.vox_offset = f32s(108);
            h.scl_slope = f32s(112);
            h.scl_inter = f32s(116);
            h.slice_end = i16s(120);
            h.slice_code = b[122];
            h.xyzt_units = b[123];
            h.cal_max = f32s(124);
            h.cal_min = f32s(128);
            h.slice_duration = f32s(132);
            h.toffset = f32s(136);
            h.descrip.copy_from_slice(&b[148..228]);
            h.aux_file.copy_from_slice(&b[228..252]);
            h.qform_code = i16s(252);
            h.sform_code = i16s(254);
            h.quatern_b = f32s(256);
            h.quatern_c = f32s(260);
            h.quatern_d = f32s(264);
            h.qoffset_x = f32s(268);
            h.qoffset_y = f32s(272);
            h.qoffset_z = f32s(276);
            for i in 0..4 {
                h.srow_x[i] = f32s(280 + 4 * i);
                h.srow_y[i] = f32s(296 + 4 * i);
                h.srow_z[i] = f32s(312 + 4 * i);
            }
            h.intent_name.copy_from_slice(&b[328..344]);
            h.magic.copy_from_slice(&b[344..348]);
            h
        }

        fn $write(h: &NiftiHeader, b: &mut [u8]) {
            <$E>::write_i32(&mut b[0..], h.sizeof_hdr);
            b[39] = h.dim_info;
            for i in 0..8 {
                <$E>::write_i16(&mut b[40 + 2 * i..], h.dim[i]);
                <$E>::write_f32(&mut b[76 + 4 * i..], h.pixdim[i]);
            }
            let f32_fields = [
                (56, h.intent_p1),
                (60, h.intent_p2),
                (64, h.intent_p3),
                (108, h.vox_offset),
                (112, h.scl_slope),
                (116, h.scl_inter),
                (124, h.cal_max),
                (128, h.cal_min),
                (132, h.slice_duration),
                (136, h.toffset),
                (256, h.quatern_b),
                (260, h.quatern_c),
                (264, h.quatern_d),
                (268, h.qoffset_x),
                (272, h.qoffset_y),
                (276, h.qoffset_z),
            ];
            for (o, v) in f32_fields {
                <$E>::write_f32(&mut b[o..], v);
            }
            let i16_fields = [
                (68, h.intent_code),
                (70, h.datatype),
                (72, h.bitpix),
                (74, h.slice_start),
                (120, h.slice_end),
                (252, h.qform_code),
                (254, h.sform_code),
            ];
            for (o, v) in i16_fields {
                <$E>::write_i16(&mut b[o..], v);
            }
            b[122] = h.slice_code;
            b[123] = h.xyzt_units;
            b[148..228].copy_from_slice(&h.descrip);
            b[228..252].copy_from_slice(&h.aux_file);
            for i in 0..4 {
                <$E>::write_f32(&mut b[280 + 4 * i..], h.srow_x[i]);
                <$E>::write_f32(&mut b[296 + 4 * i..], h.srow_y[i]);
                <$E>::write_f32(&mut b[312 + 4 * i..], h.srow_z[i]);
            }
            b[328..344].copy_from_slice(&h.intent_name);
            b[344..348].copy_from_slice(&h.magic);
        }
    };
}

codec!(decode_le, encode_le, LittleEndian);
codec!(decode_be, encode_be, BigEndian);

impl NiftiHeader {
    /// Parses the first 348 bytes; byte order is detected from `sizeof_hdr`.
    pub fn parse(bytes: &[u8]) -> Result<NiftiHeader> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::TruncatedData {
                needed: HEADER_SIZE,
                found: bytes.len(),
            });
        }
        let mut h = if LittleEndian::read_i32(bytes) == HEADER_SIZE as i32 {
            decode_le(bytes)
        } else if BigEndian::read_i32(bytes) == HEADER_SIZE as i32 {
            let mut h = decode_be(bytes);
            h.big_endian = true;
            h
        } else {
            return Err(Error::HeaderInconsistent(format!(
                "sizeof_hdr is neither 348 nor byte-swapped 348 ({})",
                LittleEndian::read_i32(bytes)
            )));
        };
        if h.magic != MAGIC_SINGLE && h.magic != MAGIC_PAIR {
            return Err(Error::BadMagic(h.magic));
        }
        h.extension.clear();
        h.validate()?;
        Ok(h)
    }

    /// Serializes the 348 header bytes in the header's byte order.
    pub fn to_bytes(&self) -> [u8; HEADER_SIZE] {
        let mut b = [0u8; HEADER_SIZE];
        if self.big_endian {
            encode_be(self, &mut b);
        } else {
            encode_le(self, &mut b);
        }
        b
    }

    pub fn data_type(&self) -> Result<DataType> {
        DataType::from_code(self.datatype)
    }

    fn validate(&self) -> Result<()> {
        let dt = self.data_type()?;
        if self.bitpix != dt.bitpix() {
            return Err(Error::HeaderInconsistent(format!(
                "bitpix {} does not match datatype {}",
                self.bitpix, self.datatype
            )));
        }
        let rank = self.dim[0];
        if !(1..=7).contains(&rank) {
            return Err(Error::HeaderInconsistent(format!("dim[0] = {rank}")));
        }
        for i in 1..=rank as usize {
            if self.dim[i] < 1 {
                return Err(Error::HeaderInconsistent(format!("dim[{i}] = {}", self.dim[i])));
            }
        }
        for i in 4..=rank as usize {
            if self.dim[i] > 1 {
                return Err(Error::HeaderInconsistent(format!(
                    "non-singleton dim[{i}] = {}; only 3D volumes are supported",
                    self.dim[i]
                )));
            }
        }
        Ok(())
    }

    /// Spatial dims, padding missing axes with 1.
    pub fn dims3(&self) -> [usize; 3] {
        let rank = self.dim[0] as usize;
        let mut d = [1usize; 3];
        for (i, v) in d.iter_mut().enumerate() {
            if i + 1 <= rank {
                *v = self.dim[i + 1] as usize;
            }
        }
        d
    }

    pub fn spacing3(&self) -> [f64; 3] {
        [
            self.pixdim[1].abs() as f64,
            self.pixdim[2].abs() as f64,
            self.pixdim[3].abs() as f64,
        ]
    }

    pub fn data_offset(&self) -> Result<usize> {
        let off = self.vox_offset;
        if self.magic == MAGIC_SINGLE && !(off >= MIN_VOX_OFFSET as f32) {
            return Err(Error::HeaderInconsistent(format!("vox_offset {off} < 352")));
        }
        if off < 0.0 || off.fract() != 0.0 {
            return Err(Error::HeaderInconsistent(format!("vox_offset {off}")));
        }
        Ok(off as usize)
    }

    /// Voxel → world affine: sform when `sform_code > 0`, else qform when
    /// `qform_code > 0`, else `diag(pixdim)`.
    pub fn affine(&self) -> Result<AffineTransform> {
        if self.sform_code > 0 {
            let rows = [self.srow_x, self.srow_y, self.srow_z].map(|r| r.map(|v| v as f64));
            AffineTransform::from_rows(rows)
        } else if self.qform_code > 0 {
            AffineTransform::from_matrix(self.qform_matrix())
        } else {
            let s = self.spacing3();
            Ok(AffineTransform::scale_offset(s, [0.0; 3]))
        }
    }

    /// Quaternion expansion of the qform fields.
    pub fn qform_matrix(&self) -> Matrix4<f64> {
        let mut b = self.quatern_b as f64;
        let mut c = self.quatern_c as f64;
        let mut d = self.quatern_d as f64;
        let mut a = 1.0 - (b * b + c * c + d * d);
        if a < 1.0e-7 {
            // Special case: 180 degree rotation, renormalize (b, c, d).
            let n = 1.0 / (b * b + c * c + d * d).sqrt();
            b *= n;
            c *= n;
            d *= n;
            a = 0.0;
        } else {
            a = a.sqrt();
        }
        let fix = |v: f32| if v > 0.0 { v as f64 } else { 1.0 };
        let xd = fix(self.pixdim[1]);
        let yd = fix(self.pixdim[2]);
        let mut zd = fix(self.pixdim[3]);
        // qfac of 0 is treated as +1.
        if self.pixdim[0] < 0.0 {
            zd = -zd;
        }
        Matrix4::new(
            (a * a + b * b - c * c - d * d) * xd,
            2.0 * (b * c - a * d) * yd,
            2.0 * (b * d + a * c) * zd,
            self.qoffset_x as f64,
            2.0 * (b * c + a * d) * xd,
            (a * a + c * c - b * b - d * d) * yd,
            2.0 * (c * d - a * b) * zd,
            self.qoffset_y as f64,
            2.0 * (b * d - a * c) * xd,
            2.0 * (c * d + a * b) * yd,
            (a * a + d * d - c * c - b * b) * zd,
            self.qoffset_z as f64,
            0.0,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Fills the qform fields (and `pixdim[0]`) from an affine, using the
    /// nearest orthogonal matrix when the linear part has shear.
    pub fn set_qform_from(&mut self, affine: &AffineTransform) {
        let lin = affine.linear();
        let off = affine.offset();
        let mut cols = [lin.column(0).into_owned(), lin.column(1).into_owned(), lin.column(2).into_owned()];
        for c in cols.iter_mut() {
            let n = c.norm();
            if n > 0.0 {
                *c /= n;
            }
        }
        let m = Matrix3::from_columns(&cols);
        let svd = m.svd(true, true);
        let mut r = match (svd.u, svd.v_t) {
            (Some(u), Some(vt)) => u * vt,
            _ => Matrix3::identity(),
        };
        let qfac = if r.determinant() > 0.0 {
            1.0
        } else {
            for i in 0..3 {
                r[(i, 2)] = -r[(i, 2)];
            }
            -1.0
        };
        let (r11, r12, r13) = (r[(0, 0)], r[(0, 1)], r[(0, 2)]);
        let (r21, r22, r23) = (r[(1, 0)], r[(1, 1)], r[(1, 2)]);
        let (r31, r32, r33) = (r[(2, 0)], r[(2, 1)], r[(2, 2)]);
        let mut a = r11 + r22 + r33 + 1.0;
        let (b, c, d);
        if a > 0.5 {
            a = 0.5 * a.sqrt();
            b = 0.25 * (r32 - r23) / a;
            c = 0.25 * (r13 - r31) / a;
            d = 0.25 * (r21 - r12) / a;
        } else {
            let xd = 1.0 + r11 - (r22 + r33);
            let yd = 1.0 + r22 - (r11 + r33);
            let zd = 1.0 + r33 - (r11 + r22);
            let (aa, bb, cc, dd);
            if xd > 1.0 {
                bb = 0.5 * xd.sqrt();
                cc = 0.25 * (r12 + r21) / bb;
                dd = 0.25 * (r13 + r31) / bb;
                aa = 0.25 * (r32 - r23) / bb;
            } else if yd > 1.0 {
                cc = 0.5 * yd.sqrt();
                bb = 0.25 * (r12 + r21) / cc;
                dd = 0.25 * (r23 + r32) / cc;
                aa = 0.25 * (r13 - r31) / cc;
            } else {
                dd = 0.5 * zd.sqrt();
                bb = 0.25 * (r13 + r31) / dd;
                cc = 0.25 * (r23 + r32) / dd;
                aa = 0.25 * (r21 - r12) / dd;
            }
            if aa < 0.0 {
                a = -aa;
                b = -bb;
                c = -cc;
                d = -dd;
            } else {
                a = aa;
                b = bb;
                c = cc;
                d = dd;
            }
        }
        let _ = a;
        self.quatern_b = b as f32;
        self.quatern_c = c as f32;
        self.quatern_d = d as f32;
        self.qoffset_x = off[0] as f32;
        self.qoffset_y = off[1] as f32;
        self.qoffset_z = off[2] as f32;
        self.pixdim[0] = qfac as f32;
        self.qform_code = 1;
    }

    pub fn set_sform_from(&mut self, affine: &AffineTransform) {
        let rows = affine.rows();
        self.srow_x = rows[0].map(|v| v as f32);
        self.srow_y = rows[1].map(|v| v as f32);
        self.srow_z = rows[2].map(|v| v as f32);
        self.sform_code = 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AffineParams;

    #[test]
    fn byte_swapped_header_parses_identically() {
        let mut h = NiftiHeader {
            dim: [3, 5, 6, 7, 1, 1, 1, 1],
            pixdim: [1.0, 0.9, 1.1, 2.5, 0.0, 0.0, 0.0, 0.0],
            datatype: 4,
            bitpix: 16,
            scl_slope: 2.0,
            scl_inter: -3.5,
            qform_code: 1,
            sform_code: 2,
            quatern_c: 0.25,
            qoffset_y: -12.0,
            srow_x: [0.9, 0.0, 0.1, -40.0],
            ..Default::default()
        };
        h.descrip[..5].copy_from_slice(b"hello");
        h.extension.clear();
        let le = h.to_bytes();
        let be = NiftiHeader {
            big_endian: true,
            ..h.clone()
        }
        .to_bytes();
        assert_ne!(le, be);
        let a = NiftiHeader::parse(&le).unwrap();
        let mut b = NiftiHeader::parse(&be).unwrap();
        assert!(b.big_endian);
        b.big_endian = false;
        assert_eq!(a, b);
        assert_eq!(a, h);
    }

    #[test]
    fn rejects_bad_magic_and_bitpix() {
        let mut h = NiftiHeader::default();
        h.magic = *b"abcd";
        assert!(matches!(NiftiHeader::parse(&h.to_bytes()), Err(Error::BadMagic(_))));
        let mut h = NiftiHeader::default();
        h.bitpix = 16;
        assert!(matches!(
            NiftiHeader::parse(&h.to_bytes()),
            Err(Error::HeaderInconsistent(_))
        ));
        let mut h = NiftiHeader::default();
        h.datatype = 32;
        assert!(matches!(
            NiftiHeader::parse(&h.to_bytes()),
            Err(Error::UnsupportedDatatype(32))
        ));
        let mut h = NiftiHeader::default();
        h.sizeof_hdr = 540;
        assert!(NiftiHeader::parse(&h.to_bytes()).is_err());
    }

    #[test]
    fn four_d_singleton_squeezes_multi_frame_rejected() {
        let mut h = NiftiHeader {
            dim: [4, 4, 5, 6, 1, 1, 1, 1],
            ..Default::default()
        };
        let p = NiftiHeader::parse(&h.to_bytes()).unwrap();
        assert_eq!(p.dims3(), [4, 5, 6]);
        h.dim[4] = 3;
        assert!(matches!(
            NiftiHeader::parse(&h.to_bytes()),
            Err(Error::HeaderInconsistent(_))
        ));
    }

    #[test]
    fn qform_round_trip_for_rigid_affine() {
        for (rot, qfac_neg) in [([0.1, -0.3, 0.7], false), ([2.9, 0.2, -1.0], true), ([0.0, 0.0, 3.1], false)] {
            let mut lin = AffineTransform::from_params(&AffineParams::rigid([10.0, -20.0, 5.0], rot));
            // Voxel spacing; negative qfac flips the third axis.
            let sz = if qfac_neg { -2.0 } else { 2.0 };
            lin = lin.compose(&AffineTransform::scale_offset([0.5, 1.5, sz], [0.0; 3]));
            let mut h = NiftiHeader {
                pixdim: [1.0, 0.5, 1.5, 2.0, 0.0, 0.0, 0.0, 0.0],
                ..Default::default()
            };
            h.set_qform_from(&lin);
            let m = h.qform_matrix();
            let back = AffineTransform::from_matrix(m).unwrap();
            assert!(back.max_abs_diff(&lin) < 1e-5, "{:?}", back.max_abs_diff(&lin));
            assert_eq!(h.pixdim[0], if qfac_neg { -1.0 } else { 1.0 });
        }
    }

    #[test]
    fn qfac_zero_treated_as_positive() {
        let h = NiftiHeader {
            pixdim: [0.0, 1.0, 1.0, 3.0, 0.0, 0.0, 0.0, 0.0],
            qform_code: 1,
            ..Default::default()
        };
        assert_eq!(h.qform_matrix()[(2, 2)], 3.0);
    }
}
