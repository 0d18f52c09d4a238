mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{blobs_csv, linear_csv, stabx_bin, write};
use stabx::score::load_scores;

fn stabx(args: &[&str], cwd: &Path) -> Output {
    Command::new(stabx_bin()).args(args).current_dir(cwd).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn two_regression_datasets(dir: &Path) {
    write(dir, "a.csv", &linear_csv(60, 6, &[2.0, 1.0], 0.5, 1));
    write(dir, "b.csv", &linear_csv(50, 5, &[1.0, 0.5, 0.2], 0.5, 2));
}

const TWO_BY_THREE: &str = r#"
output_dir = "run"
seed = 9
datasets = [
  { id = "a", path = "a.csv", task = "regression", target = "y" },
  { id = "b", path = "b.csv", task = "regression", target = "y" },
]
methods = [
  { id = "ridge", builtin = "ridge" },
  { id = "lasso", builtin = "lasso" },
  { id = "perm", builtin = "permutation" },
]
[perturbation]
repeats = 5
"#;

#[test]
fn two_datasets_three_methods_give_six_cells_and_three_by_three_tables() {
    let d = tempfile::tempdir().unwrap();
    two_regression_datasets(d.path());
    write(d.path(), "c.toml", TWO_BY_THREE);
    let o = stabx(&["pipeline", "c.toml"], d.path());
    assert_eq!(code(&o), 0, "{}", text(&o));
    let s = load_scores(&d.path().join("run")).unwrap();
    assert_eq!(s.within.len(), 6);
    assert!(s.within.iter().all(|w| w.n_ok == 5 && w.cell.as_ref().unwrap().n_pairs == 10));
    for ds in ["a", "b"] {
        assert_eq!(s.between.iter().filter(|r| r.dataset == ds).count(), 9);
        let table = std::fs::read_to_string(d.path().join(format!("run/report/between_{ds}_feature_importance.csv"))).unwrap();
        assert_eq!(table.lines().count(), 4);
        assert!(table.lines().all(|l| l.split(',').count() == 4));
    }
    // Diagonal of the between table is the self-agreement of aligned repeats.
    assert!(s.between.iter().filter(|r| r.method_a == r.method_b).all(|r| r.value == Some(1.0)));

    // A second run reuses every job.
    let o = stabx(&["pipeline", "c.toml"], d.path());
    assert!(text(&o).contains("30 jobs, 30 reused, 0 failed"), "{}", text(&o));
}

#[test]
fn rescoring_changes_metric_without_rerunning_methods() {
    let d = tempfile::tempdir().unwrap();
    two_regression_datasets(d.path());
    write(d.path(), "blobs.csv", &blobs_csv(60, 3, 3, 1.0, 0.0, 3));
    let cfg = TWO_BY_THREE.replace(
        "]\nmethods = [",
        "  { id = \"blobs\", path = \"blobs.csv\", task = \"unsupervised\", truth = \"truth\" },\n]\nmethods = [\n  { id = \"km\", builtin = { method = \"kmeans\", init = \"random\", n_init = 1 } },",
    );
    write(d.path(), "c.toml", &cfg);
    assert_eq!(code(&stabx(&["pipeline", "c.toml"], d.path())), 0);
    let run = d.path().join("run");
    let before = load_scores(&run).unwrap();
    let artifacts = common::tree(&run.join("artifacts"));

    let o = stabx(&["score", "run", "--k", "5", "--partition-metric", "fm"], d.path());
    assert_eq!(code(&o), 0, "{}", text(&o));
    let after = load_scores(&run).unwrap();
    assert_eq!(common::tree(&run.join("artifacts")), artifacts);
    let metric = |s: &stabx::score::Scores, m: &str, ds: &str| s.within.iter().find(|w| w.method == m && w.dataset == ds).unwrap().metric.clone();
    assert_eq!(metric(&before, "ridge", "a"), "ao@6");
    assert_eq!(metric(&after, "ridge", "a"), "ao@5");
    assert_eq!(metric(&before, "km", "blobs"), "ari");
    assert_eq!(metric(&after, "km", "blobs"), "fm");

    assert_eq!(code(&stabx(&["report", "run"], d.path())), 0);
    let heat = std::fs::read_to_string(run.join("report/within_clustering.csv")).unwrap();
    assert!(heat.contains(",fm,"), "{heat}");
}

#[test]
fn scoring_an_empty_directory_is_fatal() {
    let d = tempfile::tempdir().unwrap();
    let o = stabx(&["score", "."], d.path());
    assert_eq!(code(&o), 3);
    std::fs::create_dir(d.path().join("artifacts")).unwrap();
    let o = stabx(&["score", "."], d.path());
    assert_eq!(code(&o), 3);
    assert!(text(&o).contains("no artifacts"), "{}", text(&o));
}

#[test]
fn missing_runner_fails_before_any_work() {
    let d = tempfile::tempdir().unwrap();
    two_regression_datasets(d.path());
    let cfg = TWO_BY_THREE.replace(
        "{ id = \"perm\", builtin = \"permutation\" },",
        "{ id = \"ext\", runner = { command = [\"./no-such-runner\"], task = \"feature_importance\" } },",
    );
    write(d.path(), "c.toml", &cfg);
    let o = stabx(&["pipeline", "c.toml"], d.path());
    assert_eq!(code(&o), 1);
    assert!(text(&o).contains("no-such-runner"), "{}", text(&o));
    assert!(!d.path().join("run").exists());
}

#[test]
fn every_config_problem_is_reported_with_exit_one() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "c.json", r#"{"output_dir": "r", "datasets": [], "methods": [], "perturbation": {"repeats": 1}}"#);
    let o = stabx(&["pipeline", "c.json"], d.path());
    assert_eq!(code(&o), 1);
    let t = text(&o);
    assert!(t.contains("no datasets") && t.contains("no methods") && t.contains("repeats"), "{t}");
}

#[test]
fn crashing_runner_gives_partial_failure_and_missing_cell() {
    let d = tempfile::tempdir().unwrap();
    two_regression_datasets(d.path());
    let cfg = TWO_BY_THREE.replace(
        "{ id = \"perm\", builtin = \"permutation\" },",
        "{ id = \"crash\", runner = { command = [\"sh\", \"-c\", \"echo boom >&2; exit 4\"], task = \"feature_importance\" } },",
    );
    write(d.path(), "c.toml", &cfg);
    let o = stabx(&["pipeline", "c.toml"], d.path());
    assert_eq!(code(&o), 2, "{}", text(&o));
    let s = load_scores(&d.path().join("run")).unwrap();
    let crash: Vec<_> = s.within.iter().filter(|w| w.method == "crash").collect();
    assert_eq!(crash.len(), 2);
    assert!(crash.iter().all(|w| w.cell.is_none() && w.n_ok == 0));
    let heat = std::fs::read_to_string(d.path().join("run/report/within_feature_importance.csv")).unwrap();
    assert!(heat.lines().skip(1).all(|l| l.ends_with(',')), "missing cells stay empty: {heat}");
    let log = std::fs::read_to_string(d.path().join("run/artifacts/a/crash/0.work/stderr.log")).unwrap();
    assert_eq!(log.trim(), "boom");
}

#[test]
fn validate_runner_accepts_a_wrapped_builtin_and_flags_a_broken_one() {
    let d = tempfile::tempdir().unwrap();
    let script = format!(
        "#!/bin/sh\ncase \"$(cat \"$1\")\" in\n  *'\"task\": \"clustering\"'*) m=kmeans;;\n  *'\"task\": \"dimension_reduction\"'*) m=pca;;\n  *) m=ridge;;\nesac\nexec '{}' run-builtin --method \"$m\" \"$1\"\n",
        stabx_bin()
    );
    let path = write(d.path(), "wrap.sh", &script);
    std::process::Command::new("chmod").arg("+x").arg(&path).status().unwrap();
    let o = stabx(&["validate-runner", "--", "./wrap.sh"], d.path());
    assert_eq!(code(&o), 0, "{}", text(&o));
    let t = text(&o);
    for task in ["feature_importance: ok", "clustering: ok", "dimension_reduction: ok"] {
        assert!(t.contains(task), "{t}");
    }

    let o = stabx(&["validate-runner", "--tasks", "clustering", "--", "sh", "-c", "echo 'sample_id,label' > /dev/null"], d.path());
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("clustering: invalid_output"), "{}", text(&o));
}

#[test]
fn perturb_writes_a_replayable_plan() {
    let d = tempfile::tempdir().unwrap();
    write(d.path(), "a.csv", &linear_csv(40, 3, &[1.0], 0.1, 1));
    let args = ["perturb", "--data", "a.csv", "--target", "y", "--task", "regression", "--kind", "split", "--repeats", "4", "--seed", "3", "--out"];
    let o1 = stabx(&[&args[..], &["p1.json"]].concat(), d.path());
    let o2 = stabx(&[&args[..], &["p2.json"]].concat(), d.path());
    assert_eq!((code(&o1), code(&o2)), (0, 0), "{}", text(&o1));
    let p1 = std::fs::read(d.path().join("p1.json")).unwrap();
    assert_eq!(p1, std::fs::read(d.path().join("p2.json")).unwrap());
    let plan: stabx_core::perturb::PerturbationPlan = serde_json::from_slice(&p1).unwrap();
    assert_eq!(plan.len(), 4);
    assert!(plan.repeats.iter().all(|r| r.retained.as_ref().map(Vec::len) == Some(28) && r.held_out.as_ref().map(Vec::len) == Some(12)));

    let o = stabx(&["perturb", "--data", "a.csv", "--kind", "jitter", "--out", "x.json"], d.path());
    assert_eq!(code(&o), 1);
}
