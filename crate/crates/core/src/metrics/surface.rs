use super::BinaryMask;
use crate::error::Result;

/// Foreground voxels with a background face-neighbor or lying on the
/// volume border.
pub fn surface_voxels(mask: &BinaryMask) -> Vec<bool> {
    let [nx, ny, nz] = mask.geom.dims;
    let d = &mask.data;
    let mut out = vec![false; d.len()];
    let sy = nx;
    let sz = nx * ny;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + sy * y + sz * z;
                if !d[i] {
                    continue;
                }
                out[i] = x == 0
                    || y == 0
                    || z == 0
                    || x + 1 == nx
                    || y + 1 == ny
                    || z + 1 == nz
                    || !d[i - 1]
                    || !d[i + 1]
                    || !d[i - sy]
                    || !d[i + sy]
                    || !d[i - sz]
                    || !d[i + sz];
            }
        }
    }
    out
}

/// Linear-interpolation percentile (`q` in `[0, 1]`) of ascending values.
pub fn percentile_linear(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Lower envelope of parabolas `f(q) + w2·(p − q)²` over finite sites.
fn edt_1d(f: &[f64], w2: f64, out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k: isize = -1;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let fq = f[q] + w2 * (q * q) as f64;
        loop {
            if k < 0 {
                k = 0;
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            let vk = v[k as usize];
            let s = (fq - (f[vk] + w2 * (vk * vk) as f64)) / (2.0 * w2 * (q - vk) as f64);
            if s <= z[k as usize] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k as usize] = q;
            z[k as usize] = s;
            z[k as usize + 1] = f64::INFINITY;
            break;
        }
    }
    if k < 0 {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut j = 0usize;
    for (p, o) in out.iter_mut().enumerate() {
        while z[j + 1] < p as f64 {
            j += 1;
        }
        let d = p as f64 - v[j] as f64;
        *o = f[v[j]] + w2 * d * d;
    }
}

/// Squared Euclidean distance (mm²) from every voxel to the nearest
/// feature voxel, on a box of `dims`.
pub(crate) fn squared_edt(features: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let mut g: Vec<f64> = features.iter().map(|&f| if f { 0.0 } else { f64::INFINITY }).collect();
    let longest = nx.max(ny).max(nz);
    let mut line = vec![0.0; longest];
    let mut res = vec![0.0; longest];
    let mut v = vec![0usize; longest];
    let mut zb = vec![0.0; longest + 1];

    let mut pass = |g: &mut Vec<f64>, n: usize, stride: usize, starts: &mut dyn Iterator<Item = usize>, w2: f64| {
        for s in starts {
            for i in 0..n {
                line[i] = g[s + i * stride];
            }
            edt_1d(&line[..n], w2, &mut res[..n], &mut v, &mut zb);
            for i in 0..n {
                g[s + i * stride] = res[i];
            }
        }
    };
    let sx2 = spacing[0] * spacing[0];
    let sy2 = spacing[1] * spacing[1];
    let sz2 = spacing[2] * spacing[2];
    pass(&mut g, nz, nx * ny, &mut (0..nx * ny), sz2);
    pass(&mut g, ny, nx, &mut (0..nz).flat_map(|z| (0..nx).map(move |x| x + nx * ny * z)), sy2);
    pass(&mut g, nx, 1, &mut (0..ny * nz).map(|r| r * nx), sx2);
    g
}

/// 95th-percentile symmetric surface distance in mm; `None` when either
/// mask is empty.
pub fn hausdorff95(gt: &BinaryMask, pred: &BinaryMask, spacing: [f64; 3]) -> Result<Option<f64>> {
    gt.geom.ensure_matches(&pred.geom)?;
    if gt.is_empty() || pred.is_empty() {
        return Ok(None);
    }
    let sa = surface_voxels(gt);
    let sb = surface_voxels(pred);

    // Every surface voxel lies inside this box, so a distance transform
    // restricted to it is exact.
    let dims = gt.geom.dims;
    let mut lo = dims;
    let mut hi = [0usize; 3];
    for (i, (&a, &b)) in sa.iter().zip(sb.iter()).enumerate() {
        if a || b {
            let c = gt.geom.coords(i);
            for k in 0..3 {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
    }
    let bdims = [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1];
    let crop = |src: &[bool]| -> Vec<bool> {
        let mut out = Vec::with_capacity(bdims[0] * bdims[1] * bdims[2]);
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                let row = gt.geom.index(lo[0], y, z);
                out.extend_from_slice(&src[row..row + bdims[0]]);
            }
        }
        out
    };
    let ca = crop(&sa);
    let cb = crop(&sb);

    let directed = |from: &[bool], to: &[bool]| -> f64 {
        let dt = squared_edt(to, bdims, spacing);
        let mut d: Vec<f64> = from
            .iter()
            .zip(dt.iter())
            .filter(|(&f, _)| f)
            .map(|(_, &d2)| d2.sqrt())
            .collect();
        d.sort_by(|a, b| a.total_cmp(b));
        percentile_linear(&d, 0.95)
    };
    let ab = directed(&ca, &cb);
    let ba = directed(&cb, &ca);
    Ok(Some(ab.max(ba)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;

    fn mask(dims: [usize; 3], spacing: [f64; 3], on: &[[usize; 3]]) -> BinaryMask {
        let g = Geometry::axis_aligned(dims, spacing, [0.0; 3]).unwrap();
        let mut data = vec![false; g.len()];
        for c in on {
            data[g.index(c[0], c[1], c[2])] = true;
        }
        BinaryMask::new(g, data).unwrap()
    }

    #[test]
    fn single_voxels_three_apart() {
        let a = mask([8, 4, 4], [1.0; 3], &[[1, 1, 1]]);
        let b = mask([8, 4, 4], [1.0; 3], &[[4, 1, 1]]);
        assert_eq!(hausdorff95(&a, &b, [1.0; 3]).unwrap(), Some(3.0));
        let a = mask([8, 4, 4], [2.0, 1.0, 1.0], &[[1, 1, 1]]);
        let b = mask([8, 4, 4], [2.0, 1.0, 1.0], &[[4, 1, 1]]);
        assert_eq!(hausdorff95(&a, &b, [2.0, 1.0, 1.0]).unwrap(), Some(6.0));
    }

    #[test]
    fn identical_is_zero_empty_is_none() {
        let a = mask([5, 5, 5], [1.0; 3], &[[1, 1, 1], [2, 2, 2], [2, 1, 1]]);
        assert_eq!(hausdorff95(&a, &a, [1.0; 3]).unwrap(), Some(0.0));
        let e = mask([5, 5, 5], [1.0; 3], &[]);
        assert_eq!(hausdorff95(&a, &e, [1.0; 3]).unwrap(), None);
    }

    #[test]
    fn interior_voxels_are_not_surface() {
        let mut on = Vec::new();
        for z in 1..4 {
            for y in 1..4 {
                for x in 1..4 {
                    on.push([x, y, z]);
                }
            }
        }
        let m = mask([5, 5, 5], [1.0; 3], &on);
        let s = surface_voxels(&m);
        assert_eq!(s.iter().filter(|&&v| v).count(), 26);
        assert!(!s[m.geom.index(2, 2, 2)]);
        let full = mask([2, 2, 2], [1.0; 3], &[[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [0, 0, 1], [1, 0, 1], [0, 1, 1], [1, 1, 1]]);
        assert!(surface_voxels(&full).iter().all(|&v| v));
    }

    #[test]
    fn percentile_matches_linear_rule() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile_linear(&v, 0.5), 3.0);
        assert_eq!(percentile_linear(&v, 0.25), 2.0);
        assert!((percentile_linear(&v, 0.95) - 4.8).abs() < 1e-12);
        assert_eq!(percentile_linear(&[7.0], 0.95), 7.0);
    }
}
