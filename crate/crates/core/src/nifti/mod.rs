//! NIfTI-1 reading and writing, plain or gzip-wrapped.
//!
//! Only the six scalar datatypes in [`DataType`] are accepted. Voxel values
//! are decoded into `f64` with the header's `scl_slope`/`scl_inter` applied,
//! and the voxel→world affine is resolved with sform taking precedence over
//! qform.

mod header;

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

pub use header::{DataType, NiftiHeader, HEADER_SIZE, MAGIC_PAIR, MAGIC_SINGLE, MIN_VOX_OFFSET};

use crate::error::{Error, Result};
use crate::volume::{Geometry, LabelVolume, VoxelGrid};

/// Tolerance for accepting float-encoded label values as integers.
pub const LABEL_ROUNDING_TOLERANCE: f64 = 1e-6;

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

pub fn is_gzip(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[..2] == GZIP_MAGIC
}

fn inflate(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(bytes.len() * 4);
    MultiGzDecoder::new(bytes)
        .read_to_end(&mut out)
        .map_err(|e| Error::HeaderInconsistent(format!("gzip stream: {e}")))?;
    Ok(out)
}

/// Decodes a single-file NIfTI-1 stream.
///
/// With `gz` set the stream must be gzip-wrapped; otherwise gzip is still
/// detected from its magic prefix.
pub fn read_nifti(bytes: &[u8], gz: bool) -> Result<(NiftiHeader, VoxelGrid)> {
    let inflated;
    let raw = if gz || is_gzip(bytes) {
        if !is_gzip(bytes) {
            return Err(Error::HeaderInconsistent("expected a gzip stream".into()));
        }
        inflated = inflate(bytes)?;
        &inflated[..]
    } else {
        bytes
    };
    if raw.len() < MIN_VOX_OFFSET {
        return Err(Error::TruncatedData {
            needed: MIN_VOX_OFFSET,
            found: raw.len(),
        });
    }
    let mut header = NiftiHeader::parse(raw)?;
    if header.magic != MAGIC_SINGLE {
        return Err(Error::HeaderInconsistent(
            "header/data pair stream; use read_nifti_pair".into(),
        ));
    }
    let offset = header.data_offset()?;
    if offset > raw.len() {
        return Err(Error::TruncatedData {
            needed: offset,
            found: raw.len(),
        });
    }
    header.extension = raw[HEADER_SIZE..offset].to_vec();
    let grid = decode_voxels(&header, &raw[offset..])?;
    Ok((header, grid))
}

/// Decodes an `.hdr`/`.img` pair (magic `ni1`).
pub fn read_nifti_pair(hdr: &[u8], img: &[u8]) -> Result<(NiftiHeader, VoxelGrid)> {
    let hdr = if is_gzip(hdr) { inflate(hdr)? } else { hdr.to_vec() };
    let img = if is_gzip(img) { inflate(img)? } else { img.to_vec() };
    let header = NiftiHeader::parse(&hdr)?;
    if header.magic != MAGIC_PAIR {
        return Err(Error::BadMagic(header.magic));
    }
    let offset = header.data_offset()?;
    if offset > img.len() {
        return Err(Error::TruncatedData {
            needed: offset,
            found: img.len(),
        });
    }
    let grid = decode_voxels(&header, &img[offset..])?;
    Ok((header, grid))
}

fn decode_voxels(h: &NiftiHeader, data: &[u8]) -> Result<VoxelGrid> {
    let dt = h.data_type()?;
    let dims = h.dims3();
    let n = dims[0] * dims[1] * dims[2];
    let needed = n * dt.bytes();
    if data.len() < needed {
        return Err(Error::TruncatedData {
            needed,
            found: data.len(),
        });
    }
    let spacing = h.spacing3();
    if spacing.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::HeaderInconsistent(format!("pixdim spacing {spacing:?}")));
    }
    let geom = Geometry::new(dims, spacing, h.affine()?)?;
    let mut values = if h.big_endian {
        decode_raw::<BigEndian>(dt, &data[..needed])
    } else {
        decode_raw::<LittleEndian>(dt, &data[..needed])
    };
    let slope = h.scl_slope as f64;
    if slope != 0.0 && slope.is_finite() {
        let inter = if h.scl_inter.is_finite() { h.scl_inter as f64 } else { 0.0 };
        if slope != 1.0 || inter != 0.0 {
            for v in values.iter_mut() {
                *v = *v * slope + inter;
            }
        }
    }
    VoxelGrid::new(geom, values)
}

fn decode_raw<E: ByteOrder>(dt: DataType, b: &[u8]) -> Vec<f64> {
    match dt {
        DataType::Uint8 => b.iter().map(|&v| v as f64).collect(),
        DataType::Int16 => b.chunks_exact(2).map(|c| E::read_i16(c) as f64).collect(),
        DataType::Uint16 => b.chunks_exact(2).map(|c| E::read_u16(c) as f64).collect(),
        DataType::Int32 => b.chunks_exact(4).map(|c| E::read_i32(c) as f64).collect(),
        DataType::Float32 => b.chunks_exact(4).map(|c| E::read_f32(c) as f64).collect(),
        DataType::Float64 => b.chunks_exact(8).map(E::read_f64).collect(),
    }
}

/// Options for [`write_nifti_with`].
#[derive(Debug, Clone, Default)]
pub struct WriteOptions {
    pub gz: bool,
    /// Round and clamp real values into integer datatypes instead of
    /// failing with `LossyConversion`.
    pub quantize: bool,
    /// Raw extension bytes to carry after the header (starting with the
    /// 4-byte extension flag). Empty means "no extensions".
    pub extension: Vec<u8>,
    pub description: Option<String>,
}

pub fn write_nifti(grid: &VoxelGrid, datatype: DataType, gz: bool) -> Result<Vec<u8>> {
    write_nifti_with(
        grid,
        datatype,
        &WriteOptions {
            gz,
            ..Default::default()
        },
    )
}

/// Encodes a single-file little-endian NIfTI-1 stream with the sform set
/// from the grid affine (`sform_code = 1`) and a matching qform.
pub fn write_nifti_with(grid: &VoxelGrid, datatype: DataType, opts: &WriteOptions) -> Result<Vec<u8>> {
    let dims = grid.dims();
    if dims.iter().any(|&d| d > i16::MAX as usize) {
        return Err(Error::HeaderInconsistent(format!("dims {dims:?} exceed NIfTI-1 limits")));
    }
    let extension = if opts.extension.is_empty() {
        vec![0u8; 4]
    } else {
        if opts.extension.len() < 4 || (opts.extension.len() - 4) % 16 != 0 {
            return Err(Error::HeaderInconsistent(
                "extension block must be the 4-byte flag plus 16-byte multiples".into(),
            ));
        }
        opts.extension.clone()
    };
    let sp = grid.spacing();
    let mut h = NiftiHeader {
        dim: [3, dims[0] as i16, dims[1] as i16, dims[2] as i16, 1, 1, 1, 1],
        datatype: datatype.code(),
        bitpix: datatype.bitpix(),
        pixdim: [1.0, sp[0] as f32, sp[1] as f32, sp[2] as f32, 1.0, 1.0, 1.0, 1.0],
        vox_offset: (HEADER_SIZE + extension.len()) as f32,
        ..Default::default()
    };
    if let Some(d) = &opts.description {
        let n = d.len().min(79);
        h.descrip[..n].copy_from_slice(&d.as_bytes()[..n]);
    }
    h.set_qform_from(grid.affine());
    h.set_sform_from(grid.affine());

    let mut out = Vec::with_capacity(HEADER_SIZE + extension.len() + grid.data.len() * datatype.bytes());
    out.extend_from_slice(&h.to_bytes());
    out.extend_from_slice(&extension);
    encode_values(&grid.data, datatype, opts.quantize, &mut out)?;

    if opts.gz {
        let mut enc = GzEncoder::new(Vec::with_capacity(out.len() / 4), Compression::default());
        enc.write_all(&out).and_then(|_| enc.try_finish()).map_err(|e| Error::io("<gzip>", e))?;
        return enc.finish().map_err(|e| Error::io("<gzip>", e));
    }
    Ok(out)
}

fn encode_values(data: &[f64], dt: DataType, quantize: bool, out: &mut Vec<u8>) -> Result<()> {
    let ints: Option<Vec<f64>> = match dt.int_range() {
        Some((lo, hi)) => {
            let mut v = Vec::with_capacity(data.len());
            for &x in data {
                if quantize {
                    let r = if x.is_nan() { 0.0 } else { x.round().clamp(lo, hi) };
                    v.push(r);
                } else if x.fract() != 0.0 || !(x >= lo && x <= hi) {
                    return Err(Error::LossyConversion(format!(
                        "value {x} does not fit {dt:?} without quantization"
                    )));
                } else {
                    v.push(x);
                }
            }
            Some(v)
        }
        None => None,
    };
    let src = ints.as_deref().unwrap_or(data);
    let mut buf = [0u8; 8];
    for &x in src {
        let n = dt.bytes();
        match dt {
            DataType::Uint8 => buf[0] = x as u8,
            DataType::Int16 => LittleEndian::write_i16(&mut buf, x as i16),
            DataType::Uint16 => LittleEndian::write_u16(&mut buf, x as u16),
            DataType::Int32 => LittleEndian::write_i32(&mut buf, x as i32),
            DataType::Float32 => LittleEndian::write_f32(&mut buf, x as f32),
            DataType::Float64 => LittleEndian::write_f64(&mut buf, x),
        }
        out.extend_from_slice(&buf[..n]);
    }
    Ok(())
}

/// Reads a label map, accepting float storage within
/// [`LABEL_ROUNDING_TOLERANCE`] of an integer.
pub fn read_label_volume(bytes: &[u8], gz: bool) -> Result<LabelVolume> {
    let (_, grid) = read_nifti(bytes, gz)?;
    grid_to_labels(&grid)
}

pub fn grid_to_labels(grid: &VoxelGrid) -> Result<LabelVolume> {
    let mut out = Vec::with_capacity(grid.data.len());
    for &v in &grid.data {
        let r = v.round();
        if !((v - r).abs() <= LABEL_ROUNDING_TOLERANCE) {
            return Err(Error::NonIntegerLabels(v));
        }
        if !(0.0..=3.0).contains(&r) {
            return Err(Error::LabelOutOfRange(r as i64));
        }
        out.push(r as u8);
    }
    LabelVolume::new(grid.geom.clone(), out)
}

/// Like [`grid_to_labels`] but keeps any non-negative integer up to 255,
/// for model outputs that still need label harmonization.
pub fn grid_to_raw_labels(grid: &VoxelGrid) -> Result<Vec<u8>> {
    grid.data
        .iter()
        .map(|&v| {
            let r = v.round();
            if !((v - r).abs() <= LABEL_ROUNDING_TOLERANCE) {
                Err(Error::NonIntegerLabels(v))
            } else if !(0.0..=255.0).contains(&r) {
                Err(Error::LabelOutOfRange(r as i64))
            } else {
                Ok(r as u8)
            }
        })
        .collect()
}

pub fn write_label_volume(labels: &LabelVolume, gz: bool) -> Result<Vec<u8>> {
    write_nifti(&labels.to_grid(), DataType::Uint8, gz)
}

fn path_is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

pub fn read_nifti_file(path: impl AsRef<Path>) -> Result<(NiftiHeader, VoxelGrid)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_nifti(&bytes, false)
}

pub fn read_label_file(path: impl AsRef<Path>) -> Result<LabelVolume> {
    let (_, grid) = read_nifti_file(path)?;
    grid_to_labels(&grid)
}

/// Writes `grid`, gzip-compressing when the path ends in `.gz`.
pub fn write_nifti_file(path: impl AsRef<Path>, grid: &VoxelGrid, datatype: DataType) -> Result<()> {
    let path = path.as_ref();
    let bytes = write_nifti(grid, datatype, path_is_gz(path))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_label_file(path: impl AsRef<Path>, labels: &LabelVolume) -> Result<()> {
    write_nifti_file(path, &labels.to_grid(), DataType::Uint8)
}
