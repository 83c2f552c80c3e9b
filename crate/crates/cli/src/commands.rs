use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use eorkit::cohort::stats::DEFAULT_BOOTSTRAP_SEED;
use eorkit::cohort::table::{read_rows_file, write_rows_file};
use eorkit::cohort::{
    build_report, evaluate_manifest, load_prediction, CiMethod, CohortSummary, EvaluateConfig, Manifest, MetricRow,
    ReportConfig, SchemeFile, Timepoint,
};
use eorkit::eor::{self, classification_metrics, classify_prediction, ClassificationMetrics, EorClass, EorConfig};
use eorkit::metrics::{region_volume_cm3, EmptyPolicy, Region};
use eorkit::nifti::{read_label_file, read_nifti_file, write_label_file, write_nifti_file, DataType};
use eorkit::phantom::{generate_case, generate_cohort, segment_case, write_case, CohortMember, CohortSpec};
use eorkit::preprocess::{run_pipeline, AtlasGrid, RawCase, Sequence, Stage};

use crate::{
    create_out_dir, write_file, CiArg, ClassifyArgs, Context, EmptyDice, EvaluateArgs, Failure, Format, PhantomArgs,
    PreprocessArgs, ReportArgs, StageArg, StatsArgs,
};

fn load_atlas(ctx: &Context, flag: Option<&PathBuf>) -> Result<AtlasGrid, Failure> {
    match flag.or(ctx.file.atlas.as_ref()) {
        Some(p) => Ok(AtlasGrid::load(p)?),
        None => Ok(AtlasGrid::synthetic()),
    }
}

fn load_schemes(path: Option<&PathBuf>) -> Result<SchemeFile, Failure> {
    Ok(match path {
        Some(p) => SchemeFile::load(p)?,
        None => SchemeFile::default(),
    })
}

fn eor_config(ctx: &Context, flag: Option<f64>) -> Result<EorConfig, Failure> {
    match flag.or(ctx.file.threshold_cm3) {
        Some(t) => Ok(EorConfig::with_threshold(t)?),
        None => Ok(EorConfig::default()),
    }
}

fn report_config(ctx: &Context, a: &StatsArgs) -> Result<ReportConfig, Failure> {
    let ci_method = match (a.ci_method, &ctx.file.ci_method) {
        (Some(CiArg::T), _) => CiMethod::T,
        (Some(CiArg::Bootstrap), _) => CiMethod::Bootstrap,
        (None, Some(s)) => s.parse()?,
        (None, None) => CiMethod::default(),
    };
    let confidence = a.confidence.or(ctx.file.confidence).unwrap_or(0.95);
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Failure::input("Usage", format!("--confidence must lie in (0, 1), got {confidence}")));
    }
    Ok(ReportConfig {
        eor: eor_config(ctx, a.threshold)?,
        ci_method,
        confidence,
        seed: ctx.seed.unwrap_or(DEFAULT_BOOTSTRAP_SEED),
        models: (!a.models.is_empty()).then(|| a.models.clone()),
    })
}

/// `<dir>/<stem>.nii.gz`, else `<dir>/<stem>.nii`.
fn find_volume(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["nii.gz", "nii"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

fn write_summary(out: &Path, summary: &CohortSummary) -> Result<(), Failure> {
    write_file(&out.join("report.md"), summary.to_markdown())?;
    write_file(&out.join("summary.json"), summary.to_json()?)?;
    write_file(&out.join("summary_cells.csv"), summary.cells_csv()?)
}

pub fn preprocess(ctx: &Context, a: PreprocessArgs) -> Result<(), Failure> {
    let mut cfg = ctx.file.pipeline.clone();
    if !a.stages.is_empty() {
        cfg.registration.stages = a
            .stages
            .iter()
            .map(|s| match s {
                StageArg::Rigid => Stage::Rigid,
                StageArg::Affine => Stage::Affine,
            })
            .collect();
    }
    cfg.registration.validate()?;

    let mut paths = BTreeMap::new();
    for s in Sequence::ALL {
        let explicit = match s {
            Sequence::T1w => &a.t1,
            Sequence::T1ce => &a.t1ce,
            Sequence::T2w => &a.t2,
            Sequence::Flair => &a.flair,
        };
        if let Some(p) = explicit.clone().or_else(|| a.case.as_deref().and_then(|d| find_volume(d, s.stem()))) {
            paths.insert(s, p);
        }
    }
    if !paths.contains_key(&Sequence::T1ce) {
        return Err(eorkit::Error::MissingReferenceSequence("t1ce".into()).into());
    }
    let gt_path = a.gt.clone().or_else(|| a.case.as_deref().and_then(|d| find_volume(d, "gt")));

    let mut case = RawCase::default();
    for (s, p) in &paths {
        case.sequences.insert(*s, read_nifti_file(p)?.1);
    }
    case.gt = gt_path.map(read_label_file).transpose()?;
    case.external_mask = a.mask.as_ref().map(read_label_file).transpose()?;
    let atlas = load_atlas(ctx, a.atlas.as_ref())?;
    let out = run_pipeline(&case, &atlas, &cfg)?;

    create_out_dir(&a.out)?;
    let mut registrations = serde_json::Map::new();
    for (s, grid) in &out.normalized {
        write_nifti_file(a.out.join(format!("{}.nii.gz", s.stem())), grid, DataType::Float32)?;
        write_file(&a.out.join(format!("{}.affine.txt", s.stem())), out.transforms[s].to_text())?;
        let r = &out.registrations[s];
        registrations.insert(
            s.stem().into(),
            json!({ "metric": r.metric, "improved": r.improved, "evaluations": r.evaluations }),
        );
    }
    write_label_file(a.out.join("mask.nii.gz"), &out.mask.volume)?;
    if let Some(gt) = &out.gt {
        write_label_file(a.out.join("gt.nii.gz"), gt)?;
    }
    let info = json!({
        "mask": out.mask.provenance,
        "mask_voxels": out.mask.count(),
        "registrations": registrations,
    });
    write_file(&a.out.join("preprocess.json"), serde_json::to_string_pretty(&info).map_err(|e| Failure::internal(e.to_string()))?)
}

pub fn evaluate(ctx: &Context, a: EvaluateArgs) -> Result<(), Failure> {
    let empty_policy = match (a.empty_dice, &ctx.file.empty_dice) {
        (Some(EmptyDice::One), _) => EmptyPolicy::One,
        (Some(EmptyDice::Undefined), _) => EmptyPolicy::Undefined,
        (None, Some(s)) => s.parse()?,
        (None, None) => EmptyPolicy::default(),
    };
    let report_cfg = report_config(ctx, &a.stats)?;
    let eval_cfg = EvaluateConfig {
        empty_policy,
        eor: report_cfg.eor,
        ..Default::default()
    };
    let manifest = Manifest::load(&a.manifest)?;
    let schemes = load_schemes(a.schemes.as_ref())?;
    if manifest.cases.is_empty() {
        return Err(eorkit::Error::EmptyInput.into());
    }

    let ev = evaluate_manifest(&manifest, &schemes, &eval_cfg);
    create_out_dir(&a.out)?;
    write_rows_file(a.out.join("metrics.csv"), &ev.rows)?;
    let failures = serde_json::to_value(&ev.failures).map_err(|e| Failure::internal(e.to_string()))?;
    write_file(&a.out.join("failures.json"), format!("{failures:#}\n"))?;
    if ev.rows.is_empty() {
        let mut f = Failure::input("NoCaseEvaluated", "every case failed");
        f.details = Some(failures);
        return Err(f);
    }
    write_summary(&a.out, &build_report(&ev.rows, &report_cfg)?)?;
    if !ev.failures.is_empty() {
        return Err(Failure::partial(
            format!("{} case(s) or model(s) failed; the rest were evaluated", ev.failures.len()),
            failures,
        ));
    }
    Ok(())
}

pub fn report(ctx: &Context, a: ReportArgs) -> Result<(), Failure> {
    let cfg = report_config(ctx, &a.stats)?;
    let rows = read_rows_file(&a.metrics)?;
    let summary = build_report(&rows, &cfg)?;
    match &a.out {
        Some(out) => {
            create_out_dir(out)?;
            write_summary(out, &summary)
        }
        None => {
            let text = match a.format {
                Format::Md => summary.to_markdown(),
                Format::Json => summary.to_json()?,
                Format::Csv => summary.cells_csv()?,
            };
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct EorEntry {
    case_id: String,
    timepoint: Timepoint,
    model: String,
    gt_et_cm3: f64,
    pred_et_cm3: f64,
    gt_class: EorClass,
    pred_class: EorClass,
}

fn entry(case_id: &str, tp: Timepoint, model: &str, gt: f64, pred: f64, cfg: &EorConfig) -> Result<EorEntry, Failure> {
    Ok(EorEntry {
        case_id: case_id.into(),
        timepoint: tp,
        model: model.into(),
        gt_et_cm3: gt,
        pred_et_cm3: pred,
        gt_class: eor::classify_eor(gt, cfg)?,
        pred_class: classify_prediction(pred, cfg)?,
    })
}

fn entries_from_rows(rows: &[MetricRow], cfg: &EorConfig) -> Result<Vec<EorEntry>, Failure> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for r in rows {
        if seen.insert((r.record.case_id.clone(), r.model.clone())) {
            out.push(entry(&r.record.case_id, r.timepoint, &r.model, r.gt_et_cm3, r.pred_et_cm3, cfg)?);
        }
    }
    Ok(out)
}

/// Entries in manifest order plus `(case, model, error)` failures.
fn entries_from_manifest(
    m: &Manifest,
    schemes: &SchemeFile,
    cfg: &EorConfig,
) -> (Vec<EorEntry>, Vec<serde_json::Value>) {
    let per_case: Vec<_> = m
        .cases
        .par_iter()
        .map(|c| {
            let mut entries = Vec::new();
            let mut failures = Vec::new();
            let gt = match read_label_file(m.resolve(&c.gt)) {
                Ok(g) => region_volume_cm3(&g, Region::Et),
                Err(e) => {
                    failures.push(json!({ "case_id": c.id, "model": null, "code": e.code(), "message": e.to_string() }));
                    return (entries, failures);
                }
            };
            for (model, path) in &c.predictions {
                let res = load_prediction(&m.resolve(path), &schemes.get(model))
                    .map_err(Failure::from)
                    .and_then(|p| entry(&c.id, c.timepoint, model, gt, region_volume_cm3(&p, Region::Et), cfg));
                match res {
                    Ok(e) => entries.push(e),
                    Err(f) => failures.push(json!({ "case_id": c.id, "model": model, "code": f.code, "message": f.message })),
                }
            }
            (entries, failures)
        })
        .collect();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (e, f) in per_case {
        entries.extend(e);
        failures.extend(f);
    }
    (entries, failures)
}

fn f3(v: f64) -> String {
    format!("{v:.3}")
}

fn classification_markdown(entries: &[EorEntry], per_model: &[(String, ClassificationMetrics)], cfg: &EorConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Extent of resection\n");
    let _ = writeln!(
        s,
        "A case is GTR when its enhancing tumor volume is below {} cm³, RT otherwise.\n",
        cfg.threshold_cm3
    );
    let _ = writeln!(s, "| Case | Timepoint | Model | GT ET (cm³) | Predicted ET (cm³) | GT | Predicted |");
    let _ = writeln!(s, "|---|---|---|---|---|---|---|");
    for e in entries {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} |",
            e.case_id,
            e.timepoint,
            e.model,
            f3(e.gt_et_cm3),
            f3(e.pred_et_cm3),
            e.gt_class,
            e.pred_class
        );
    }
    let models: Vec<&str> = per_model.iter().map(|(m, _)| m.as_str()).collect();
    let _ = writeln!(s, "\n## Gross total resection versus residual tumor classification\n");
    let _ = writeln!(s, "| | {} |", models.join(" | "));
    let _ = writeln!(s, "|---|{}", "---|".repeat(models.len()));
    for (name, get) in [
        ("Precision", (|c: &ClassificationMetrics| c.precision) as fn(&ClassificationMetrics) -> f64),
        ("Recall", |c| c.recall),
        ("F1 Score", |c| c.f1),
        ("Accuracy", |c| c.accuracy),
    ] {
        let cells: Vec<String> = per_model.iter().map(|(_, c)| f3(get(c))).collect();
        let _ = writeln!(s, "| {} | {} |", name, cells.join(" | "));
    }
    let _ = writeln!(s, "\nConfusion matrices (rows: ground truth GTR, RT; columns: predicted GTR, RT):\n");
    let _ = writeln!(s, "| Model | GTR→GTR | GTR→RT | RT→GTR | RT→RT |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    for (m, c) in per_model {
        let k = c.confusion;
        let _ = writeln!(s, "| {m} | {} | {} | {} | {} |", k[0][0], k[0][1], k[1][0], k[1][1]);
    }
    s
}

pub fn classify_eor(ctx: &Context, a: ClassifyArgs) -> Result<(), Failure> {
    let cfg = eor_config(ctx, a.threshold)?;
    let (entries, failures) = match (&a.manifest, &a.metrics) {
        (Some(m), _) => {
            let manifest = Manifest::load(m)?;
            let schemes = load_schemes(a.schemes.as_ref())?;
            entries_from_manifest(&manifest, &schemes, &cfg)
        }
        (None, Some(p)) => (entries_from_rows(&read_rows_file(p)?, &cfg)?, Vec::new()),
        (None, None) => unreachable!("clap requires one input"),
    };
    if entries.is_empty() {
        let mut f = Failure::input("NoCaseEvaluated", "no case could be classified");
        f.details = Some(json!(failures));
        return Err(f);
    }
    let mut by_model: BTreeMap<&str, Vec<(EorClass, EorClass)>> = BTreeMap::new();
    for e in &entries {
        by_model.entry(&e.model).or_default().push((e.gt_class, e.pred_class));
    }
    let per_model = by_model
        .into_iter()
        .map(|(m, pairs)| Ok((m.to_string(), classification_metrics(&pairs)?)))
        .collect::<Result<Vec<_>, Failure>>()?;
    let md = classification_markdown(&entries, &per_model, &cfg);

    match &a.out {
        Some(out) => {
            create_out_dir(out)?;
            let mut wr = csv::Writer::from_writer(Vec::new());
            for e in &entries {
                wr.serialize(e).map_err(|e| Failure::internal(e.to_string()))?;
            }
            write_file(&out.join("eor.csv"), wr.into_inner().map_err(|e| Failure::internal(e.to_string()))?)?;
            write_file(&out.join("classification.md"), &md)?;
            let blocks: BTreeMap<_, _> = per_model.iter().map(|(m, c)| (m.as_str(), c)).collect();
            let text = serde_json::to_string_pretty(&blocks).map_err(|e| Failure::internal(e.to_string()))?;
            write_file(&out.join("classification.json"), text)?;
        }
        None => print!("{md}"),
    }
    if !failures.is_empty() {
        return Err(Failure::partial(
            format!("{} case(s) or model(s) failed; the rest were classified", failures.len()),
            json!(failures),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct CohortRow<'a> {
    id: &'a str,
    timepoint: Timepoint,
    class: EorClass,
    gt_et_cm3: f64,
}

pub fn phantom(ctx: &Context, a: PhantomArgs) -> Result<(), Failure> {
    let mut cs = match &a.spec {
        Some(p) => CohortSpec::load(p)?,
        None => CohortSpec::default(),
    };
    if let Some(n) = a.n {
        cs.n = n;
    }
    if let Some(f) = a.gtr_fraction {
        cs.gtr_fraction = f;
    }
    if let Some(s) = a.noise {
        cs.base.noise_sigma = [s; 4];
    }
    if let Some(seed) = ctx.seed {
        cs.seed = seed;
    }
    cs.validate()?;
    let atlas = a.baseline.then(|| load_atlas(ctx, a.atlas.as_ref())).transpose()?;
    let members = generate_cohort(&cs)?;
    create_out_dir(&a.out)?;

    let make = |m: &CohortMember| -> Result<(eorkit::cohort::ManifestCase, f64), Failure> {
        let case = generate_case(&m.spec)?;
        let gt_et = case.gt_et_cm3;
        let mut entry = write_case(&a.out, m, &cs.center, &case)?;
        if let Some(atlas) = &atlas {
            log::info!("{}: preprocessing and segmenting", m.id);
            let seg = segment_case(case, atlas, &ctx.file.pipeline, &ctx.file.baseline)?;
            let rel = PathBuf::from(&m.id);
            write_label_file(a.out.join(rel.join("gt_atlas.nii.gz")), &seg.gt)?;
            write_label_file(a.out.join(rel.join("pred_baseline.nii.gz")), &seg.pred)?;
            entry.gt = rel.join("gt_atlas.nii.gz");
            entry.predictions.insert("baseline".into(), rel.join("pred_baseline.nii.gz"));
        }
        Ok((entry, gt_et))
    };
    let results: Vec<_> = members.par_iter().map(|m| (m, make(m))).collect();

    let mut cases = Vec::new();
    let mut wr = csv::Writer::from_writer(Vec::new());
    let mut failures = Vec::new();
    for (m, r) in results {
        match r {
            Ok((entry, gt_et)) => {
                wr.serialize(CohortRow {
                    id: &m.id,
                    timepoint: m.timepoint,
                    class: m.class,
                    gt_et_cm3: gt_et,
                })
                .map_err(|e| Failure::internal(e.to_string()))?;
                cases.push(entry);
            }
            Err(f) => failures.push(json!({ "case_id": m.id, "code": f.code, "message": f.message })),
        }
    }
    write_file(&a.out.join("cohort.csv"), wr.into_inner().map_err(|e| Failure::internal(e.to_string()))?)?;
    cs.manifest(cases)?.save(a.out.join("manifest.toml"))?;
    if !failures.is_empty() {
        return Err(Failure::partial(format!("{} case(s) failed", failures.len()), json!(failures)));
    }
    Ok(())
}
