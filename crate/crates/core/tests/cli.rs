use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mlime"))
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn text(o: &[u8]) -> String {
    String::from_utf8_lossy(o).into_owned()
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn write_config(dir: &std::path::Path) -> PathBuf {
    let cfg = format!(
        r#"master_seed = 7
[grid]
datasets = ["{}"]
models = ["gnb", "forest"]
sigmas = [0.5, "default"]
instances = 2
[eval]
m = 500
[explainer]
n_train_samples = 300
[models.forest]
n_trees = 10
"#,
        data("wine.csv").display()
    );
    let path = dir.join("grid.toml");
    std::fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn benchmark_writes_outputs_and_is_thread_count_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let mut records = Vec::new();
    for jobs in ["1", "2"] {
        let out = dir.path().join(format!("out{jobs}"));
        let o = run(bin().args(["benchmark", "--config"]).arg(&cfg).args(["--jobs", jobs, "--out"]).arg(&out));
        assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
        for f in ["records.csv", "summary.md", "resolved_config.toml", "timings.csv", "errors.csv"] {
            assert!(out.join(f).exists(), "missing {f}");
        }
        records.push(std::fs::read(out.join("records.csv")).unwrap());
    }
    assert_eq!(records[0], records[1]);
    let csv = text(&records[0]);
    assert!(csv.starts_with("dataset,model,method,sigma,instance,rmse,m,rmax,seed,wall_ms\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2 * 3);
    let resolved = std::fs::read_to_string(dir.path().join("out1/resolved_config.toml")).unwrap();
    assert!(resolved.contains("master_seed = 7"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let mut outs = Vec::new();
    for seed in ["7", "8"] {
        let out = dir.path().join(format!("s{seed}"));
        let o = run(bin().args(["benchmark", "--config"]).arg(&cfg).args(["--seed", seed, "--out"]).arg(&out));
        assert_eq!(o.status.code(), Some(0));
        outs.push(std::fs::read(out.join("records.csv")).unwrap());
    }
    assert_ne!(outs[0], outs[1]);
}

#[test]
fn failed_cells_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "[grid]\ndatasets = [\"{}\"]\nmodels = [\"external:exit 1\"]\nsigmas = [1.0]\ninstances = 1\n[eval]\nm = 100\n",
        data("wine.csv").display()
    );
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, cfg).unwrap();
    let out = dir.path().join("out");
    let o = run(bin().args(["benchmark", "--config"]).arg(&path).arg("--out").arg(&out));
    assert_eq!(o.status.code(), Some(2));
    let errors = std::fs::read_to_string(out.join("errors.csv")).unwrap();
    assert_eq!(errors.lines().count(), 1 + 3);
}

#[test]
fn explain_mlime_reports_attributions_and_terms() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin()
        .args(["explain", "--dataset"])
        .arg(data("wine.csv"))
        .args(["--model", "gnb", "--method", "mlime", "--sigma", "1", "--instance", "0", "--out"])
        .arg(dir.path()));
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let report = text(&o.stdout);
    let attributions = report.lines().skip_while(|l| !l.starts_with("attribution")).skip(1);
    assert_eq!(attributions.take_while(|l| l.starts_with("  ")).count(), 13);
    assert!(report.contains("MARS terms"));
    assert!(report.contains("fidelity rmse"));
    let file = dir.path().join("explain_wine_gnb_mlime_0.txt");
    assert_eq!(std::fs::read_to_string(file).unwrap(), report);
}

#[test]
fn explain_lime_has_no_term_dump() {
    let o = run(bin()
        .args(["explain", "--dataset"])
        .arg(data("wine.csv"))
        .args(["--model", "gnb", "--method", "lime", "--sigma", "default", "--instance", "5"]));
    assert_eq!(o.status.code(), Some(0));
    assert!(!text(&o.stdout).contains("MARS terms"));
}

#[test]
fn usage_errors_exit_one() {
    let wine = data("wine.csv");
    let cases: Vec<Vec<std::ffi::OsString>> = vec![
        vec!["explain".into(), "--dataset".into(), wine.clone().into(), "--model".into(), "gnb".into(),
             "--method".into(), "shap".into(), "--sigma".into(), "1".into(), "--instance".into(), "0".into()],
        vec!["explain".into(), "--dataset".into(), wine.clone().into(), "--model".into(), "gnb".into(),
             "--method".into(), "lime".into(), "--sigma".into(), "-1".into(), "--instance".into(), "0".into()],
        vec!["explain".into(), "--dataset".into(), wine.into(), "--model".into(), "gnb".into(),
             "--method".into(), "lime".into(), "--sigma".into(), "1".into(), "--instance".into(), "100000".into()],
        vec!["benchmark".into(), "--config".into(), "/nonexistent/grid.toml".into()],
        vec!["frobnicate".into()],
    ];
    for args in cases {
        let o = run(bin().args(&args));
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn selftest_passes() {
    let o = run(bin().arg("selftest"));
    assert_eq!(o.status.code(), Some(0));
    let out = text(&o.stdout);
    assert!(out.lines().all(|l| !l.starts_with("FAIL")));
    assert!(out.contains("checks passed"));
}
