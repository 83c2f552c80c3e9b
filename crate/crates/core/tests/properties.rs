//! Property tests for the algebraic invariants of geometry, metrics, NIfTI
//! I/O, EOR classification and cohort summaries.

use std::collections::BTreeSet;

use eorkit::cohort::{
    build_report, harmonize, summarize_mean_ci, CiMethod, LabelScheme, MetricRow, RawLabelMap, ReportConfig,
    Timepoint, TimepointFilter,
};
use eorkit::eor::{classification_metrics, classify_eor, EorClass, EorConfig, Subgroup};
use eorkit::geometry::{nearest_label, trilinear_sample};
use eorkit::metrics::{
    confusion, dice, hausdorff95, jaccard, percentile_linear, sensitivity_specificity, volumetric_similarity,
    BinaryMask, EmptyPolicy, MetricRecord, Region,
};
use eorkit::nifti::{read_nifti, write_nifti, DataType};
use eorkit::{AffineParams, AffineTransform, Geometry, LabelVolume, VoxelGrid};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn params() -> impl Strategy<Value = AffineParams> {
    (
        prop::array::uniform3(-20.0..20.0f64),
        prop::array::uniform3(-0.6..0.6f64),
        prop::array::uniform3(-0.3..0.3f64),
        prop::array::uniform3(-0.2..0.2f64),
    )
        .prop_map(|(translation, rotation, log_scale, shear)| AffineParams {
            translation,
            rotation,
            log_scale,
            shear,
        })
}

fn mask_pair() -> impl Strategy<Value = (BinaryMask, BinaryMask, [f64; 3])> {
    (prop::array::uniform3(2usize..7), prop::array::uniform3(0.5..2.5f64)).prop_flat_map(|(dims, sp)| {
        let n = dims[0] * dims[1] * dims[2];
        (prop::collection::vec(any::<bool>(), n), prop::collection::vec(any::<bool>(), n)).prop_map(move |(a, b)| {
            let g = Geometry::centered(dims, sp).unwrap();
            (BinaryMask::new(g.clone(), a).unwrap(), BinaryMask::new(g, b).unwrap(), sp)
        })
    })
}

/// Same masks with the x and z axes swapped in storage.
fn transposed(m: &BinaryMask) -> BinaryMask {
    let [nx, ny, nz] = m.geom.dims;
    let sp = m.geom.spacing;
    let g = Geometry::centered([nz, ny, nx], [sp[2], sp[1], sp[0]]).unwrap();
    let mut data = vec![false; m.data.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                data[z + nz * (y + ny * x)] = m.data[x + nx * (y + ny * z)];
            }
        }
    }
    BinaryMask::new(g, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn compose_matches_sequential_application(a in params(), b in params(), p in prop::array::uniform3(-100.0..100.0f64)) {
        let ta = AffineTransform::from_params(&a);
        let tb = AffineTransform::from_params(&b);
        let lhs = ta.compose(&tb).apply(p);
        let rhs = ta.apply(tb.apply(p));
        for k in 0..3 {
            prop_assert!((lhs[k] - rhs[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn inverse_round_trips_points(a in params(), p in prop::array::uniform3(-100.0..100.0f64)) {
        let t = AffineTransform::from_params(&a);
        let q = t.inverse().unwrap().apply(t.apply(p));
        for k in 0..3 {
            prop_assert!((q[k] - p[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn params_round_trip(a in params(), c in prop::array::uniform3(-50.0..50.0f64)) {
        let t = AffineTransform::from_params_centered(&a, c);
        let back = t.to_params_centered(c).unwrap();
        let t2 = AffineTransform::from_params_centered(&back, c);
        prop_assert!(t.max_abs_diff(&t2) < 1e-9);
    }

    #[test]
    fn trilinear_is_exact_on_affine_fields(
        coef in prop::array::uniform4(-5.0..5.0f64),
        p in prop::array::uniform3(0.0..5.0f64),
    ) {
        let g = Geometry::centered([6, 6, 6], [1.0; 3]).unwrap();
        let grid = VoxelGrid::from_fn(g, |x, y, z| coef[0] * x as f64 + coef[1] * y as f64 + coef[2] * z as f64 + coef[3]);
        let want = coef[0] * p[0] + coef[1] * p[1] + coef[2] * p[2] + coef[3];
        prop_assert!((trilinear_sample(&grid, p) - want).abs() < 1e-9);
    }

    #[test]
    fn nearest_never_invents_labels(
        data in prop::collection::vec(prop::sample::select(vec![0u8, 2, 3]), 64),
        p in prop::array::uniform3(-2.0..6.0f64),
    ) {
        let lv = LabelVolume::new(Geometry::centered([4, 4, 4], [1.0; 3]).unwrap(), data.clone()).unwrap();
        let v = nearest_label(&lv, p);
        prop_assert!(v == 0 || data.contains(&v));
    }

    #[test]
    fn metrics_are_symmetric_and_bounded((a, b, sp) in mask_pair()) {
        let p = EmptyPolicy::Undefined;
        prop_assert_eq!(dice(&a, &b, p).unwrap(), dice(&b, &a, p).unwrap());
        prop_assert_eq!(jaccard(&a, &b, p).unwrap(), jaccard(&b, &a, p).unwrap());
        prop_assert_eq!(volumetric_similarity(&a, &b, p).unwrap(), volumetric_similarity(&b, &a, p).unwrap());
        let hab = hausdorff95(&a, &b, sp).unwrap();
        prop_assert_eq!(hab, hausdorff95(&b, &a, sp).unwrap());
        let (se, sp_) = sensitivity_specificity(&a, &b).unwrap();
        for v in [dice(&a, &b, p).unwrap(), jaccard(&a, &b, p).unwrap(), volumetric_similarity(&a, &b, p).unwrap(), se, sp_]
            .into_iter()
            .flatten()
        {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if let Some(h) = hab {
            let d = a.geom.dims;
            let diag = ((0..3).map(|k| ((d[k] - 1) as f64 * sp[k]).powi(2)).sum::<f64>()).sqrt();
            prop_assert!(h >= 0.0 && h <= diag + 1e-12);
        }
    }

    #[test]
    fn dice_jaccard_identity_and_vsi_bound((a, b, _) in mask_pair()) {
        let p = EmptyPolicy::Undefined;
        if let (Some(d), Some(j), Some(v)) =
            (dice(&a, &b, p).unwrap(), jaccard(&a, &b, p).unwrap(), volumetric_similarity(&a, &b, p).unwrap())
        {
            prop_assert!((d - 2.0 * j / (1.0 + j)).abs() < 1e-12);
            prop_assert!(v >= d);
        }
    }

    #[test]
    fn hd95_of_self_is_zero_and_below_max((a, b, sp) in mask_pair()) {
        if !a.is_empty() {
            prop_assert_eq!(hausdorff95(&a, &a, sp).unwrap(), Some(0.0));
        }
        // P100 of the same directed distances bounds P95 from above.
        let pts = |m: &BinaryMask| -> Vec<[f64; 3]> {
            let s = eorkit::metrics::surface_voxels(m);
            (0..m.data.len())
                .filter(|&i| s[i])
                .map(|i| {
                    let c = m.geom.coords(i);
                    [c[0] as f64 * sp[0], c[1] as f64 * sp[1], c[2] as f64 * sp[2]]
                })
                .collect()
        };
        if let Some(h) = hausdorff95(&a, &b, sp).unwrap() {
            let (pa, pb) = (pts(&a), pts(&b));
            let directed_max = |x: &[[f64; 3]], y: &[[f64; 3]]| {
                x.iter()
                    .map(|p| {
                        y.iter()
                            .map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
                            .fold(f64::INFINITY, f64::min)
                    })
                    .fold(0.0, f64::max)
            };
            prop_assert!(h <= directed_max(&pa, &pb).max(directed_max(&pb, &pa)) + 1e-12);
        }
    }

    #[test]
    fn metrics_ignore_storage_order((a, b, sp) in mask_pair()) {
        let (ta, tb) = (transposed(&a), transposed(&b));
        let p = EmptyPolicy::One;
        prop_assert_eq!(confusion(&a, &b).unwrap(), confusion(&ta, &tb).unwrap());
        prop_assert_eq!(dice(&a, &b, p).unwrap(), dice(&ta, &tb, p).unwrap());
        let (h, th) = (hausdorff95(&a, &b, sp).unwrap(), hausdorff95(&ta, &tb, [sp[2], sp[1], sp[0]]).unwrap());
        match (h, th) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn percentile_is_monotone(mut v in prop::collection::vec(-1e3..1e3f64, 1..50), q1 in 0.0..1.0f64, q2 in 0.0..1.0f64) {
        v.sort_by(f64::total_cmp);
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        prop_assert!(percentile_linear(&v, lo) <= percentile_linear(&v, hi));
        prop_assert_eq!(percentile_linear(&v, 0.0), v[0]);
        prop_assert_eq!(percentile_linear(&v, 1.0), v[v.len() - 1]);
    }

    #[test]
    fn raising_the_threshold_never_turns_gtr_into_rt(v in 0.0..5.0f64, t1 in 0.01..2.0f64, dt in 0.0..2.0f64) {
        let lo = EorConfig::with_threshold(t1).unwrap();
        let hi = EorConfig::with_threshold(t1 + dt).unwrap();
        if classify_eor(v, &lo).unwrap() == EorClass::Gtr {
            prop_assert_eq!(classify_eor(v, &hi).unwrap(), EorClass::Gtr);
        }
    }

    #[test]
    fn classification_is_order_free_and_accuracy_is_micro(
        mut pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..40),
        seed in any::<u64>(),
    ) {
        let to = |b: bool| if b { EorClass::Rt } else { EorClass::Gtr };
        let p: Vec<_> = pairs.iter().map(|&(g, q)| (to(g), to(q))).collect();
        let m = classification_metrics(&p).unwrap();
        pairs.shuffle(&mut eorkit::rng::stream(seed, 0));
        let shuffled: Vec<_> = pairs.iter().map(|&(g, q)| (to(g), to(q))).collect();
        prop_assert_eq!(&m, &classification_metrics(&shuffled).unwrap());
        prop_assert!((m.accuracy - m.micro_precision).abs() < 1e-12);
        prop_assert!((m.accuracy - m.micro_recall).abs() < 1e-12);
    }

    #[test]
    fn harmonize_preserves_counts(data in prop::collection::vec(0u8..6, 1..200), dropped in 0u8..6) {
        let mut scheme = LabelScheme::identity("m");
        scheme.mapping.insert("4".into(), 2);
        scheme.mapping.insert("5".into(), 1);
        scheme.mapping.remove(&dropped.to_string());
        scheme.drop.push(dropped);
        let n = data.len();
        let raw = RawLabelMap { geom: Geometry::centered([n, 1, 1], [1.0; 3]).unwrap(), data: data.clone() };
        let out = harmonize(&raw, &scheme).unwrap();
        prop_assert_eq!(out.data.len(), n);
        let fg_src = data.iter().filter(|&&v| v != 0).count();
        let dropped_fg = if dropped == 0 { 0 } else { data.iter().filter(|&&v| v == dropped).count() };
        prop_assert_eq!(out.data.iter().filter(|&&v| v != 0).count(), fg_src - dropped_fg);
    }

    #[test]
    fn bootstrap_interval_shrinks_with_more_data(v in prop::collection::vec(0.0..1.0f64, 5..20)) {
        let once = summarize_mean_ci(&v, 0.95, CiMethod::Bootstrap, 1).unwrap();
        let four: Vec<f64> = v.iter().cycle().take(4 * v.len()).copied().collect();
        let more = summarize_mean_ci(&four, 0.95, CiMethod::Bootstrap, 1).unwrap();
        // Half the width is the expected shrinkage; allow resampling noise.
        prop_assert!(more.hi - more.lo <= (once.hi - once.lo) * 0.75 + 1e-12);
    }
}

fn nifti_case() -> impl Strategy<Value = (DataType, bool, [usize; 3], u64)> {
    (prop::sample::select(DataType::ALL.to_vec()), any::<bool>(), prop::array::uniform3(1usize..6), any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nifti_round_trip_is_exact((dt, gz, dims, seed) in nifti_case()) {
        let mut rng = eorkit::rng::stream(seed, 0);
        let (lo, hi) = dt.int_range().unwrap_or((-1e6, 1e6));
        let geom = Geometry::axis_aligned(dims, [0.5, 1.0, 2.5], [-10.0, 3.0, 7.5]).unwrap();
        let n = geom.len();
        let data: Vec<f64> = (0..n)
            .map(|_| {
                let v = rng.gen_range(lo..hi);
                match dt {
                    DataType::Float32 => v as f32 as f64,
                    DataType::Float64 => v,
                    _ => v.round().clamp(lo, hi),
                }
            })
            .collect();
        let grid = VoxelGrid::new(geom, data).unwrap();
        let (_, back) = read_nifti(&write_nifti(&grid, dt, gz).unwrap(), gz).unwrap();
        prop_assert_eq!(back.dims(), grid.dims());
        prop_assert!(back.affine().max_abs_diff(grid.affine()) == 0.0);
        for (a, b) in back.data.iter().zip(&grid.data) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

fn row(case: usize, tp: Timepoint, model: &str, region: Region, dice: Option<f64>, gt_et: f64, pred_et: f64) -> MetricRow {
    MetricRow {
        center: "c".into(),
        timepoint: tp,
        model: model.into(),
        applicable: true,
        gt_et_cm3: gt_et,
        pred_et_cm3: pred_et,
        record: MetricRecord {
            case_id: format!("case{case:03}"),
            region,
            dice,
            jaccard: dice.map(|d| d / (2.0 - d)),
            vsi: dice,
            sensitivity: dice,
            specificity: Some(1.0),
            hausdorff95: dice.map(|d| 10.0 * (1.0 - d)),
            gt_volume_cm3: gt_et,
            pred_volume_cm3: pred_et,
        },
    }
}

fn cohort_rows() -> impl Strategy<Value = Vec<MetricRow>> {
    prop::collection::vec((any::<bool>(), 0.0..3.0f64, 0.0..3.0f64, 0.0..1.0f64, 0.0..1.0f64), 4..14).prop_map(|cases| {
        let mut rows = Vec::new();
        for (i, (lps, gt, pred, d1, d2)) in cases.into_iter().enumerate() {
            let tp = if lps { Timepoint::Lps } else { Timepoint::Eps };
            for (model, d) in [("a", d1), ("b", d2)] {
                for region in [Region::Et, Region::Ed] {
                    let dice = (gt > 0.0 || pred > 0.0).then_some(d);
                    rows.push(row(i, tp, model, region, dice, gt, pred * d));
                }
            }
        }
        rows
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn subgroups_nest_and_commute_with_model_selection(rows in cohort_rows()) {
        let cfg = ReportConfig { ci_method: CiMethod::T, ..Default::default() };
        let full = build_report(&rows, &cfg).unwrap();
        let only_a: Vec<MetricRow> = rows.iter().filter(|r| r.model == "a").cloned().collect();
        let selected = build_report(&only_a, &cfg).unwrap();
        let via_config = build_report(&rows, &ReportConfig { models: Some(vec!["a".into()]), ..cfg.clone() }).unwrap();
        for filter in TimepointFilter::REPORTED {
            let n = |s: &eorkit::cohort::CohortSummary, sg| s.subgroup_n(filter, "a", sg);
            prop_assert!(n(&full, Subgroup::TruePositive) <= n(&full, Subgroup::Positive));
            prop_assert!(n(&full, Subgroup::Positive) <= n(&full, Subgroup::All));
            for sg in Subgroup::ALL {
                prop_assert_eq!(n(&full, sg), n(&selected, sg));
                prop_assert_eq!(n(&full, sg), n(&via_config, sg));
            }
        }
        let a_cells: Vec<_> = full.cells.iter().filter(|c| c.model == "a").collect();
        let sel_cells: Vec<_> = selected.cells.iter().collect();
        prop_assert_eq!(a_cells, sel_cells);
    }

    #[test]
    fn summary_is_reproducible_from_the_csv(rows in cohort_rows()) {
        let mut buf = Vec::new();
        eorkit::cohort::table::write_rows(&mut buf, &rows).unwrap();
        let back = eorkit::cohort::table::read_rows(&buf[..]).unwrap();
        prop_assert_eq!(&back, &rows);
        let cfg = ReportConfig::default();
        prop_assert_eq!(build_report(&rows, &cfg).unwrap(), build_report(&back, &cfg).unwrap());
    }
}

#[test]
fn every_datatype_is_exercised() {
    let seen: BTreeSet<i16> = DataType::ALL.iter().map(|d| d.code()).collect();
    assert_eq!(seen.len(), 6);
}
