use crate::volume::{LabelVolume, VoxelGrid};

/// Value returned for samples outside the grid.
pub const DEFAULT_OUT_OF_BOUNDS: f64 = 0.0;

/// Trilinear sample at continuous voxel coordinates `p`.
///
/// Coordinates outside `[0, n-1]` on any axis yield `oob`.
#[inline]
pub fn trilinear_sample_with(grid: &VoxelGrid, p: [f64; 3], oob: f64) -> f64 {
    trilinear_raw(&grid.data, grid.geom.dims, p, oob)
}

pub fn trilinear_sample(grid: &VoxelGrid, p: [f64; 3]) -> f64 {
    trilinear_sample_with(grid, p, DEFAULT_OUT_OF_BOUNDS)
}

#[inline]
fn axis_cell(x: f64, n: usize) -> Option<(usize, f64)> {
    let hi = (n - 1) as f64;
    if !(x >= 0.0 && x <= hi) {
        return None;
    }
    if n == 1 {
        return Some((0, 0.0));
    }
    let i0 = (x.floor() as usize).min(n - 2);
    Some((i0, x - i0 as f64))
}

#[inline]
pub(crate) fn trilinear_raw(data: &[f64], dims: [usize; 3], p: [f64; 3], oob: f64) -> f64 {
    let (Some((x0, fx)), Some((y0, fy)), Some((z0, fz))) = (
        axis_cell(p[0], dims[0]),
        axis_cell(p[1], dims[1]),
        axis_cell(p[2], dims[2]),
    ) else {
        return oob;
    };
    let nx = dims[0];
    let sx = usize::from(dims[0] > 1);
    let sy = if dims[1] > 1 { nx } else { 0 };
    let sz = if dims[2] > 1 { nx * dims[1] } else { 0 };
    let i = x0 + nx * (y0 + dims[1] * z0);
    let c00 = data[i] * (1.0 - fx) + data[i + sx] * fx;
    let c10 = data[i + sy] * (1.0 - fx) + data[i + sy + sx] * fx;
    let c01 = data[i + sz] * (1.0 - fx) + data[i + sz + sx] * fx;
    let c11 = data[i + sz + sy] * (1.0 - fx) + data[i + sz + sy + sx] * fx;
    let c0 = c00 * (1.0 - fy) + c10 * fy;
    let c1 = c01 * (1.0 - fy) + c11 * fy;
    c0 * (1.0 - fz) + c1 * fz
}

/// Linear index of the voxel whose center is nearest to `p`, ties going to
/// the lower index; `None` outside the grid.
#[inline]
pub fn nearest_index(dims: [usize; 3], p: [f64; 3]) -> Option<usize> {
    let mut idx = [0usize; 3];
    for a in 0..3 {
        let r = (p[a] - 0.5).ceil();
        if !(r >= 0.0 && r <= (dims[a] - 1) as f64) {
            return None;
        }
        idx[a] = r as usize;
    }
    Some(idx[0] + dims[0] * (idx[1] + dims[1] * idx[2]))
}

pub fn nearest_sample(grid: &VoxelGrid, p: [f64; 3]) -> f64 {
    nearest_index(grid.geom.dims, p).map_or(0.0, |i| grid.data[i])
}

pub fn nearest_label(labels: &LabelVolume, p: [f64; 3]) -> u8 {
    nearest_index(labels.geom.dims, p).map_or(0, |i| labels.data[i])
}
