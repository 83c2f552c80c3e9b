use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eorkit::cohort::Manifest;
use eorkit::nifti::{read_label_file, read_nifti_file, write_label_file};
use eorkit::preprocess::ATLAS_DIMS;

fn eorkit(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eorkit"))
        .current_dir(cwd)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no JSON in {text}"));
    serde_json::from_str(line).unwrap()
}

const SMALL_SPEC: &str = r#"
n = 6
seed = 11
gtr_fraction = 0.5
ed_radius_mm = [9.0, 11.0]
cav_radius_mm = [4.0, 5.0]
et_radius_mm = [5.0, 5.5]
rt_resection = [0.0, 0.2]

[base]
dims = [64, 64, 48]
brain_semi_axes = [29.0, 30.0, 23.0]
noise_sigma = [0.05, 0.05, 0.05, 0.05]
"#;

fn files_under(root: &Path) -> BTreeSet<PathBuf> {
    let mut out = BTreeSet::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out
}

/// A small phantom cohort plus an imperfect model that keeps every other
/// ET voxel, and a model that never outputs cavity.
fn cohort(dir: &Path) -> PathBuf {
    std::fs::write(dir.join("spec.toml"), SMALL_SPEC).unwrap();
    let o = eorkit(dir, &["phantom", "--spec", "spec.toml", "--out", "cohort"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let root = dir.join("cohort");
    let mut manifest = Manifest::load(root.join("manifest.toml")).unwrap();
    for case in &mut manifest.cases {
        let dir = root.join(&case.id);
        let mut gt = read_label_file(dir.join("gt.nii.gz")).unwrap();
        let mut k = 0;
        for v in gt.data.iter_mut().filter(|v| **v == 1) {
            if k % 2 == 1 {
                *v = 0;
            }
            k += 1;
        }
        write_label_file(dir.join("half.nii.gz"), &gt).unwrap();
        for v in gt.data.iter_mut().filter(|v| **v == 3) {
            *v = 0;
        }
        write_label_file(dir.join("nocav.nii.gz"), &gt).unwrap();
        for model in ["half", "nocav"] {
            case.predictions.insert(model.into(), Path::new(&case.id).join(format!("{model}.nii.gz")));
        }
    }
    manifest.save(root.join("manifest.toml")).unwrap();
    std::fs::write(
        dir.join("schemes.toml"),
        "[[scheme]]\nmodel = \"nocav\"\nmapping = { 0 = 0, 1 = 1, 2 = 2 }\nabsent = [\"CAV\"]\n",
    )
    .unwrap();
    root
}

#[test]
fn help_documents_every_flag_and_unknown_flags_fail() {
    let dir = tempfile::tempdir().unwrap();
    for (sub, flags) in [
        ("preprocess", &["--case", "--t1ce", "--mask", "--atlas", "--stages", "--out", "--seed", "--jobs", "--config"][..]),
        ("evaluate", &["--manifest", "--schemes", "--empty-dice", "--ci-method", "--confidence", "--threshold", "--models", "--out"]),
        ("classify-eor", &["--manifest", "--metrics", "--threshold", "--out"]),
        ("phantom", &["--spec", "--n", "--gtr-fraction", "--noise", "--baseline", "--out"]),
        ("report", &["--metrics", "--format", "--ci-method", "--out"]),
    ] {
        let o = eorkit(dir.path(), &[sub, "--help"]);
        assert_eq!(code(&o), 0);
        let help = String::from_utf8_lossy(&o.stdout);
        for f in flags {
            assert!(help.contains(f), "{sub} --help lacks {f}");
        }
    }
    let o = eorkit(dir.path(), &["report", "--metrics", "x.csv", "--bogus"]);
    assert_eq!(code(&o), 2);
    assert_eq!(stderr_json(&o)["error"], "Usage");
    assert!(files_under(dir.path()).is_empty());
}

#[test]
fn missing_t1ce_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("case")).unwrap();
    let o = eorkit(dir.path(), &["preprocess", "--case", "case", "--out", "out"]);
    assert_eq!(code(&o), 2);
    assert_eq!(stderr_json(&o)["error"], "MissingReferenceSequence");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn phantom_evaluate_classify_report() {
    let dir = tempfile::tempdir().unwrap();
    let root = cohort(dir.path());

    // Exact class split, recorded next to the manifest.
    let classes = std::fs::read_to_string(root.join("cohort.csv")).unwrap();
    assert_eq!(classes.lines().filter(|l| l.contains(",GTR,")).count(), 3);

    let o = eorkit(dir.path(), &["evaluate", "--manifest", "cohort/manifest.toml", "--schemes", "schemes.toml", "--out", "eval"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let md = std::fs::read_to_string(dir.path().join("eval/report.md")).unwrap();
    for needle in ["*All subjects*", "*Positive subjects*", "*True positive subjects*", "| | Accuracy |"] {
        assert!(md.contains(needle), "report lacks {needle}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("eval/summary.json")).unwrap()).unwrap();
    let nocav_cav = summary["cells"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["model"] == "nocav" && c["region"] == "CAV");
    for c in nocav_cav {
        assert_eq!(c["applicable"], false);
        assert!(c["mean"].is_null());
    }

    // Confusion against the generator's classes: the model keeps half of
    // every ET, which stays above 0.1 cm³ for these radii.
    let o = eorkit(dir.path(), &["classify-eor", "--manifest", "cohort/manifest.toml", "--out", "eor"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let block = std::fs::read_to_string(dir.path().join("eor/classification.md")).unwrap();
    for row in ["| Precision |", "| Recall |", "| F1 Score |", "| Accuracy |"] {
        assert!(block.contains(row));
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("eor/classification.json")).unwrap()).unwrap();
    assert_eq!(json["nocav"]["confusion"], serde_json::json!([[3, 0], [0, 3]]));

    // Same classification from the metrics CSV.
    let o = eorkit(dir.path(), &["classify-eor", "--metrics", "eval/metrics.csv"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout), block);

    // A larger threshold never yields fewer GTR calls.
    let gtr_calls = |t: &str| {
        let o = eorkit(dir.path(), &["classify-eor", "--metrics", "eval/metrics.csv", "--threshold", t]);
        String::from_utf8_lossy(&o.stdout).lines().filter(|l| l.ends_with("| GTR |")).count()
    };
    assert!(gtr_calls("0.2") >= gtr_calls("0.1"));
    assert!(gtr_calls("1000") >= gtr_calls("0.2"));

    // Report re-summarizes the CSV without reading volumes.
    let o = eorkit(dir.path(), &["report", "--metrics", "eval/metrics.csv"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout), md);
    let o = eorkit(dir.path(), &["report", "--metrics", "eval/metrics.csv", "--format", "json", "--seed", "5"]);
    assert_eq!(code(&o), 0);
    assert!(serde_json::from_slice::<serde_json::Value>(&o.stdout).is_ok());

    let written: BTreeSet<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    let expected: BTreeSet<_> = ["spec.toml", "schemes.toml", "cohort", "eval", "eor"].iter().map(Into::into).collect();
    assert_eq!(written, expected);
}

fn cell_mean(summary: &serde_json::Value, subgroup: &str, model: &str, region: &str) -> Option<f64> {
    summary["cells"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| {
            c["filter"] == "All" && c["subgroup"] == subgroup && c["model"] == model && c["region"] == region && c["metric"] == "Dice"
        })
        .and_then(|c| c["mean"].as_f64())
}

#[test]
fn empty_dice_policy_only_moves_all_subjects() {
    let dir = tempfile::tempdir().unwrap();
    cohort(dir.path());
    for (policy, out) in [("undefined", "a"), ("one", "b")] {
        let o = eorkit(
            dir.path(),
            &["evaluate", "--manifest", "cohort/manifest.toml", "--empty-dice", policy, "--ci-method", "t", "--out", out],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let load = |d: &str| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(d).join("summary.json")).unwrap()).unwrap()
    };
    let (a, b) = (load("a"), load("b"));
    assert_ne!(cell_mean(&a, "All", "half", "ET"), cell_mean(&b, "All", "half", "ET"));
    assert_eq!(cell_mean(&a, "Positive", "half", "ET"), cell_mean(&b, "Positive", "half", "ET"));
}

#[test]
fn missing_prediction_is_a_partial_failure() {
    let dir = tempfile::tempdir().unwrap();
    let root = cohort(dir.path());
    std::fs::remove_file(root.join("case002/half.nii.gz")).unwrap();
    let o = eorkit(dir.path(), &["evaluate", "--manifest", "cohort/manifest.toml", "--out", "eval"]);
    assert_eq!(code(&o), 3);
    let err = stderr_json(&o);
    assert_eq!(err["error"], "PartialFailure");
    assert_eq!(err["details"][0]["case_id"], "case002");
    assert_eq!(err["details"][0]["model"], "half");
    let csv = std::fs::read_to_string(dir.path().join("eval/metrics.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("case002,") && l.contains(",nocav,")));
    assert!(!csv.lines().any(|l| l.starts_with("case002,") && l.contains(",half,")));
    assert!(dir.path().join("eval/report.md").exists());
}

#[test]
fn phantom_generation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.toml"), SMALL_SPEC).unwrap();
    for out in ["a", "b"] {
        let o = eorkit(dir.path(), &["phantom", "--spec", "spec.toml", "--n", "3", "--seed", "99", "--out", out]);
        assert_eq!(code(&o), 0);
    }
    let files = files_under(&dir.path().join("a"));
    assert_eq!(files, files_under(&dir.path().join("b")));
    for f in files {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(&f)).unwrap(),
            std::fs::read(dir.path().join("b").join(&f)).unwrap(),
            "{f:?} differs"
        );
    }
}

#[test]
fn preprocess_writes_atlas_grid_outputs_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.toml"), SMALL_SPEC).unwrap();
    let o = eorkit(dir.path(), &["phantom", "--spec", "spec.toml", "--n", "1", "--out", "cohort"]);
    assert_eq!(code(&o), 0);
    for out in ["p1", "p2"] {
        let o = eorkit(dir.path(), &["preprocess", "--case", "cohort/case000", "--out", out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["t1", "t1ce", "t2", "flair", "mask"] {
        let p = dir.path().join("p1").join(format!("{name}.nii.gz"));
        let (_, grid) = read_nifti_file(&p).unwrap();
        assert_eq!(grid.dims(), ATLAS_DIMS);
        assert_eq!(grid.spacing(), [1.0; 3]);
    }
    for f in files_under(&dir.path().join("p1")) {
        assert_eq!(
            std::fs::read(dir.path().join("p1").join(&f)).unwrap(),
            std::fs::read(dir.path().join("p2").join(&f)).unwrap(),
            "{f:?} differs between runs"
        );
    }
    assert!(dir.path().join("p1/t1ce.affine.txt").exists());
    assert!(dir.path().join("p1/gt.nii.gz").exists());
}
