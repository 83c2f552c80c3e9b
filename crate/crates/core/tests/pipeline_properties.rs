//! Property tests for registration, resampling, normalization and the
//! phantom generator.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use eorkit::phantom::{baseline_segment, BaselineConfig, Component, PhantomSpec};
use eorkit::preprocess::{
    register, resample_labels, resample_to_atlas, zscore_normalize, AtlasGrid, BrainMask, Interpolation, MaskProvenance,
    RegistrationConfig, Sequence, SimilarityMetric, ATLAS_DIMS,
};
use eorkit::{AffineParams, AffineTransform, Geometry, LabelVolume, VoxelGrid};
use proptest::prelude::*;

fn small_spec(seed: u64) -> PhantomSpec {
    PhantomSpec {
        seed,
        dims: [40, 40, 32],
        brain_semi_axes: [17.0, 18.0, 13.0],
        components: vec![
            Component::sphere([3.0, -2.0, 1.0], 6.0, 2),
            Component::sphere([3.0, -2.0, 1.0], 3.0, 3),
            Component::sphere([6.0, -2.0, 1.0], 2.5, 1),
        ],
        noise_sigma: [0.05; 4],
        ..Default::default()
    }
}

fn brain_mask(spec: &PhantomSpec) -> BrainMask {
    let geom = spec.geometry().unwrap();
    let a = spec.brain_semi_axes;
    let m: Vec<bool> = (0..geom.len())
        .map(|i| {
            let c = geom.coords(i);
            let w = geom.voxel_to_world([c[0] as f64, c[1] as f64, c[2] as f64]);
            (0..3).map(|k| (w[k] / a[k]).powi(2)).sum::<f64>() <= 1.0
        })
        .collect();
    BrainMask::from_bools(geom, &m, MaskProvenance::External).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn registration_is_deterministic_with_monotone_trace(
        t in prop::array::uniform3(-3.0..3.0f64),
        rz in -0.08..0.08f64,
        mse in any::<bool>(),
    ) {
        let fixed = small_spec(1).render_sequence(Sequence::T1ce).unwrap();
        let mut moved = small_spec(2);
        moved.misalignment.insert(Sequence::T1ce, AffineParams::rigid(t, [0.0, 0.0, rz]));
        let moving = moved.render_sequence(Sequence::T1ce).unwrap();
        let cfg = RegistrationConfig {
            metric: if mse { SimilarityMetric::Mse } else { SimilarityMetric::Ncc },
            ..Default::default()
        };
        let a = register(&moving, &fixed, &cfg).unwrap();
        let b = register(&moving, &fixed, &cfg).unwrap();
        prop_assert_eq!(
            a.params.to_array().map(f64::to_bits),
            b.params.to_array().map(f64::to_bits)
        );
        for seg in &a.trace {
            for w in seg.costs.windows(2) {
                prop_assert!(w[1] <= w[0], "accepted step raised the cost: {:?}", w);
            }
        }
    }

    #[test]
    fn atlas_resampling_always_lands_on_the_atlas_grid(p in prop::array::uniform3(-20.0..20.0f64), r in -0.3..0.3f64) {
        let atlas = AtlasGrid::synthetic();
        let grid = VoxelGrid::from_fn(Geometry::centered([8, 9, 7], [3.0, 2.5, 4.0]).unwrap(), |x, y, z| (x + 2 * y + 3 * z) as f64);
        let t = AffineTransform::from_params(&AffineParams::rigid(p, [r, 0.0, -r]));
        let out = resample_to_atlas(&grid, &t, &atlas, Interpolation::Trilinear).unwrap();
        prop_assert_eq!(out.dims(), ATLAS_DIMS);
        prop_assert_eq!(out.spacing(), [1.0; 3]);
        prop_assert!(out.geom.matches(atlas.geom()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn zscore_is_idempotent(data in prop::collection::vec(-100.0..100.0f64, 27), keep in prop::collection::vec(any::<bool>(), 27)) {
        let geom = Geometry::centered([3, 3, 3], [1.0; 3]).unwrap();
        let mask = BrainMask::from_bools(geom.clone(), &keep, MaskProvenance::External).unwrap();
        let grid = VoxelGrid::new(geom, data).unwrap();
        if let Ok(once) = zscore_normalize(&grid, &mask) {
            let twice = zscore_normalize(&once, &mask).unwrap();
            for (a, b) in once.data.iter().zip(&twice.data) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn label_resampling_keeps_the_label_set(
        data in prop::collection::vec(prop::sample::select(vec![0u8, 1, 3]), 125),
        p in prop::array::uniform3(-3.0..3.0f64),
        r in -0.5..0.5f64,
    ) {
        let lv = LabelVolume::new(Geometry::centered([5, 5, 5], [1.0; 3]).unwrap(), data.clone()).unwrap();
        let t = AffineTransform::from_params(&AffineParams::rigid(p, [0.0, r, 0.0]));
        let target = Geometry::centered([7, 6, 5], [0.8, 1.1, 1.3]).unwrap();
        let out = resample_labels(&lv, &t, &target).unwrap();
        for v in out.data {
            prop_assert!(v == 0 || data.contains(&v));
        }
    }

    #[test]
    fn sphere_volumes_match_center_inclusion(
        c in prop::array::uniform3(-4.0..4.0f64),
        r in 1.0..6.0f64,
        sp in prop::array::uniform3(0.6..1.5f64),
    ) {
        let spec = PhantomSpec {
            dims: [24, 24, 24],
            spacing: sp,
            brain_semi_axes: [11.0, 11.0, 11.0],
            components: vec![Component::sphere(c, r, 1)],
            ..Default::default()
        };
        prop_assume!(spec.validate().is_ok());
        let gt = spec.ground_truth().unwrap();
        let geom = spec.geometry().unwrap();
        let brute = (0..geom.len())
            .filter(|&i| {
                let v = geom.coords(i);
                let w = geom.voxel_to_world([v[0] as f64, v[1] as f64, v[2] as f64]);
                (0..3).map(|k| (w[k] - c[k]).powi(2)).sum::<f64>() <= r * r
            })
            .count();
        prop_assert_eq!(gt.data.iter().filter(|&&v| v == 1).count(), brute);
    }
}

/// Normalized sequences and mask of one noisy phantom, built once.
fn normalized() -> &'static (BTreeMap<Sequence, VoxelGrid>, BrainMask) {
    static CELL: OnceLock<(BTreeMap<Sequence, VoxelGrid>, BrainMask)> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut spec = small_spec(5);
        spec.noise_sigma = [0.3; 4];
        let mask = brain_mask(&spec);
        let seqs = Sequence::ALL
            .iter()
            .map(|&s| (s, zscore_normalize(&spec.render_sequence(s).unwrap(), &mask).unwrap()))
            .collect();
        (seqs, mask)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn raising_the_et_threshold_never_grows_et(t1 in 1.0..4.0f64, dt in 0.0..2.0f64) {
        let (seqs, mask) = normalized();
        let et = |tau: f64| {
            let cfg = BaselineConfig { tau_et_t1ce: tau, ..Default::default() };
            baseline_segment(seqs, mask, &cfg).unwrap().data.iter().map(|&v| v == 1).collect::<Vec<bool>>()
        };
        let (lo, hi) = (et(t1), et(t1 + dt));
        prop_assert!(lo.iter().zip(&hi).all(|(&l, &h)| l || !h));
    }
}
