//! Small dense filters shared by registration and the baseline segmenter.

use rayon::prelude::*;

/// 3×3×3 mean, averaging over the neighbours that exist. The neighbourhood
/// is a product of per-axis windows, so three 1-D passes give it exactly.
pub fn box_mean3(data: &[f64], dims: [usize; 3]) -> Vec<f64> {
    let mut a = data.to_vec();
    let mut b = vec![0.0; data.len()];
    for axis in 0..3 {
        box_axis(&a, &mut b, dims, axis);
        std::mem::swap(&mut a, &mut b);
    }
    a
}

fn box_axis(src: &[f64], dst: &mut [f64], dims: [usize; 3], axis: usize) {
    let [nx, ny, _] = dims;
    let n = dims[axis];
    let stride = [1, nx, nx * ny][axis];
    dst.par_chunks_mut(nx * ny).enumerate().for_each(|(z, plane)| {
        let base = z * nx * ny;
        for y in 0..ny {
            for x in 0..nx {
                let i = base + x + nx * y;
                let c = [x, y, z][axis];
                let mut s = src[i];
                let mut k = 1.0;
                if c > 0 {
                    s += src[i - stride];
                    k += 1.0;
                }
                if c + 1 < n {
                    s += src[i + stride];
                    k += 1.0;
                }
                plane[x + nx * y] = s / k;
            }
        }
    });
}

/// Central-difference gradient magnitude in voxel units; one-sided at the
/// borders, zero along axes of length one.
pub fn gradient_magnitude(data: &[f64], dims: [usize; 3]) -> Vec<f64> {
    let [nx, ny, _] = dims;
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let c = [i % nx, (i / nx) % ny, i / (nx * ny)];
            let mut g2 = 0.0;
            for (axis, stride) in [1, nx, nx * ny].into_iter().enumerate() {
                let n = dims[axis];
                if n < 2 {
                    continue;
                }
                let lo = if c[axis] > 0 { i - stride } else { i };
                let hi = if c[axis] + 1 < n { i + stride } else { i };
                let span = if c[axis] > 0 && c[axis] + 1 < n { 2.0 } else { 1.0 };
                let d = (data[hi] - data[lo]) / span;
                g2 += d * d;
            }
            g2.sqrt()
        })
        .collect()
}
