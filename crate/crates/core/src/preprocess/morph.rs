//! Binary morphology on dense masks: 6-connected components, ball closing,
//! hole filling and Otsu thresholding.

use std::collections::VecDeque;

use crate::metrics::squared_edt;

const NEIGHBORS: [[isize; 3]; 6] = [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];

#[inline]
fn step(dims: [usize; 3], c: [usize; 3], d: [isize; 3]) -> Option<usize> {
    let mut out = [0usize; 3];
    for k in 0..3 {
        let v = c[k] as isize + d[k];
        if v < 0 || v >= dims[k] as isize {
            return None;
        }
        out[k] = v as usize;
    }
    Some(out[0] + dims[0] * (out[1] + dims[1] * out[2]))
}

#[inline]
fn coords(dims: [usize; 3], i: usize) -> [usize; 3] {
    [i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])]
}

/// 6-connected component labels (1-based, numbered in scan order; 0 for
/// background) and the size of each component.
pub fn connected_components(mask: &[bool], dims: [usize; 3]) -> (Vec<u32>, Vec<usize>) {
    let mut labels = vec![0u32; mask.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..mask.len() {
        if !mask[seed] || labels[seed] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        labels[seed] = id;
        queue.push_back(seed);
        let mut size = 0usize;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let c = coords(dims, i);
            for d in NEIGHBORS {
                if let Some(j) = step(dims, c, d) {
                    if mask[j] && labels[j] == 0 {
                        labels[j] = id;
                        queue.push_back(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// The largest 6-connected component; ties go to the one met first in scan
/// order. Empty input gives an empty mask.
pub fn largest_component(mask: &[bool], dims: [usize; 3]) -> Vec<bool> {
    let (labels, sizes) = connected_components(mask, dims);
    let Some(best) = sizes
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, usize)>, (k, &s)| match acc {
            Some((_, bs)) if bs >= s => acc,
            _ => Some((k, s)),
        })
        .map(|(k, _)| k as u32 + 1)
    else {
        return vec![false; mask.len()];
    };
    labels.iter().map(|&l| l == best).collect()
}

/// Drops 6-connected components with fewer than `min_size` voxels.
pub fn remove_small_components(mask: &[bool], dims: [usize; 3], min_size: usize) -> Vec<bool> {
    let (labels, sizes) = connected_components(mask, dims);
    labels
        .iter()
        .map(|&l| l != 0 && sizes[l as usize - 1] >= min_size)
        .collect()
}

/// Voxels reachable from the image border through background are kept as
/// background; every other background voxel is filled.
pub fn fill_holes(mask: &[bool], dims: [usize; 3]) -> Vec<bool> {
    let mut outside = vec![false; mask.len()];
    let mut queue = VecDeque::new();
    let [nx, ny, nz] = dims;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let border = x == 0 || y == 0 || z == 0 || x + 1 == nx || y + 1 == ny || z + 1 == nz;
                let i = x + nx * (y + ny * z);
                if border && !mask[i] && !outside[i] {
                    outside[i] = true;
                    queue.push_back(i);
                }
            }
        }
    }
    while let Some(i) = queue.pop_front() {
        let c = coords(dims, i);
        for d in NEIGHBORS {
            if let Some(j) = step(dims, c, d) {
                if !mask[j] && !outside[j] {
                    outside[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    outside.iter().map(|&o| !o).collect()
}

/// Morphological closing with the digital ball `{o : |o|² ≤ r²}` (voxel
/// units). Voxels outside the image count as background.
pub fn close_ball(mask: &[bool], dims: [usize; 3], radius: usize) -> Vec<bool> {
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for (i, &m) in mask.iter().enumerate() {
        if m {
            any = true;
            let c = coords(dims, i);
            for k in 0..3 {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
    }
    if !any || radius == 0 {
        return mask.to_vec();
    }
    // Local box padded far enough that the dilation fits and the erosion
    // sees background on every side.
    let pad = 2 * radius + 2;
    let origin: [isize; 3] = std::array::from_fn(|k| lo[k] as isize - pad as isize);
    let ld: [usize; 3] = std::array::from_fn(|k| hi[k] - lo[k] + 1 + 2 * pad);
    let n = ld[0] * ld[1] * ld[2];
    let mut local = vec![false; n];
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                if mask[x + dims[0] * (y + dims[1] * z)] {
                    let lx = (x as isize - origin[0]) as usize;
                    let ly = (y as isize - origin[1]) as usize;
                    let lz = (z as isize - origin[2]) as usize;
                    local[lx + ld[0] * (ly + ld[1] * lz)] = true;
                }
            }
        }
    }
    let r2 = (radius * radius) as f64;
    let d_in = squared_edt(&local, ld, [1.0; 3]);
    let dilated: Vec<bool> = d_in.iter().map(|&d| d <= r2).collect();
    let background: Vec<bool> = dilated.iter().map(|&d| !d).collect();
    let d_out = squared_edt(&background, ld, [1.0; 3]);

    let mut out = mask.to_vec();
    for lz in 0..ld[2] {
        let z = lz as isize + origin[2];
        if z < 0 || z >= dims[2] as isize {
            continue;
        }
        for ly in 0..ld[1] {
            let y = ly as isize + origin[1];
            if y < 0 || y >= dims[1] as isize {
                continue;
            }
            for lx in 0..ld[0] {
                let x = lx as isize + origin[0];
                if x < 0 || x >= dims[0] as isize {
                    continue;
                }
                let li = lx + ld[0] * (ly + ld[1] * lz);
                if dilated[li] && d_out[li] > r2 {
                    out[x as usize + dims[0] * (y as usize + dims[1] * z as usize)] = true;
                }
            }
        }
    }
    out
}

/// Otsu threshold over a `bins`-bin histogram spanning `[min, max]`.
/// Foreground is `v > threshold`. Returns `None` for constant input.
pub fn otsu_threshold(values: &[f64], bins: usize) -> Option<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        return None;
    }
    let width = (hi - lo) / bins as f64;
    let mut hist = vec![0u64; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        hist[b] += 1;
    }
    let total: u64 = hist.iter().sum();
    let mids: Vec<f64> = (0..bins).map(|b| lo + (b as f64 + 0.5) * width).collect();
    let sum_all: f64 = hist.iter().zip(&mids).map(|(&h, &m)| h as f64 * m).sum();
    let (mut w0, mut sum0) = (0u64, 0.0);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for b in 0..bins - 1 {
        w0 += hist[b];
        sum0 += hist[b] as f64 * mids[b];
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let m0 = sum0 / w0 as f64;
        let m1 = (sum_all - sum0) / w1 as f64;
        let between = w0 as f64 * w1 as f64 * (m0 - m1) * (m0 - m1);
        if between > best.0 {
            best = (between, b);
        }
    }
    Some(lo + (best.1 + 1) as f64 * width)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball_offsets(r: i64) -> Vec<[i64; 3]> {
        let mut v = Vec::new();
        for z in -r..=r {
            for y in -r..=r {
                for x in -r..=r {
                    if x * x + y * y + z * z <= r * r {
                        v.push([x, y, z]);
                    }
                }
            }
        }
        v
    }

    // Direct closing by explicit ball offsets, with outside treated as
    // background.
    fn brute_close(mask: &[bool], dims: [usize; 3], r: i64) -> Vec<bool> {
        let offs = ball_offsets(r);
        let at = |m: &[bool], x: i64, y: i64, z: i64| -> bool {
            x >= 0
                && y >= 0
                && z >= 0
                && (x as usize) < dims[0]
                && (y as usize) < dims[1]
                && (z as usize) < dims[2]
                && m[x as usize + dims[0] * (y as usize + dims[1] * z as usize)]
        };
        // Dilation evaluated on demand so points just outside the image are
        // handled too.
        let dil = |x: i64, y: i64, z: i64| offs.iter().any(|o| at(mask, x + o[0], y + o[1], z + o[2]));
        let mut out = vec![false; mask.len()];
        for (i, o) in out.iter_mut().enumerate() {
            let c = coords(dims, i);
            let (x, y, z) = (c[0] as i64, c[1] as i64, c[2] as i64);
            *o = offs.iter().all(|q| dil(x + q[0], y + q[1], z + q[2]));
        }
        out
    }

    fn lcg_mask(dims: [usize; 3], seed: u64, density: f64) -> Vec<bool> {
        let mut s = seed;
        (0..dims[0] * dims[1] * dims[2])
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) < density
            })
            .collect()
    }

    #[test]
    fn closing_matches_brute_force() {
        let dims = [12, 10, 9];
        for seed in 0..6 {
            let m = lcg_mask(dims, seed, 0.15 + 0.05 * seed as f64);
            for r in 1..=2 {
                assert_eq!(close_ball(&m, dims, r as usize), brute_close(&m, dims, r), "seed {seed} r {r}");
            }
        }
    }

    #[test]
    fn components_and_largest() {
        let dims = [5, 1, 1];
        let m = [true, false, true, true, false];
        let (labels, sizes) = connected_components(&m, dims);
        assert_eq!(labels, vec![1, 0, 2, 2, 0]);
        assert_eq!(sizes, vec![1, 2]);
        assert_eq!(largest_component(&m, dims), vec![false, false, true, true, false]);
        assert_eq!(remove_small_components(&m, dims, 2), vec![false, false, true, true, false]);
    }

    #[test]
    fn diagonal_voxels_are_separate() {
        let dims = [2, 2, 1];
        let m = [true, false, false, true];
        assert_eq!(connected_components(&m, dims).1, vec![1, 1]);
    }

    #[test]
    fn holes_filled_open_pockets_kept() {
        // 5³ shell with a hollow center, plus a notch open to the border.
        let dims = [5, 5, 5];
        let mut m = vec![false; 125];
        for z in 1..4 {
            for y in 1..4 {
                for x in 1..4 {
                    if !(x == 2 && y == 2 && z == 2) {
                        m[x + 5 * (y + 5 * z)] = true;
                    }
                }
            }
        }
        let f = fill_holes(&m, dims);
        assert!(f[2 + 5 * (2 + 5 * 2)]);
        assert_eq!(f.iter().filter(|&&v| v).count(), 27);
    }

    #[test]
    fn otsu_splits_two_levels() {
        let mut v = vec![0.0; 700];
        v.extend(vec![10.0; 300]);
        let t = otsu_threshold(&v, 256).unwrap();
        assert!(t > 0.0 && t < 10.0);
        assert_eq!(otsu_threshold(&[3.0; 4], 256), None);
    }
}
