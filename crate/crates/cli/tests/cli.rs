use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sortnet"));
    c.env_remove("ARROWFLOW_THREADS");
    c
}

fn iris() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/iris.csv")
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("cfg.json");
    let sep = if extra.is_empty() { "" } else { "," };
    std::fs::write(
        &path,
        format!(r#"{{"layers":[16],"embed_dim":8,"iterations":60,"simulations":2,"views":3{sep}{extra}}}"#),
    )
    .unwrap();
    path
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(1)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn train_is_deterministic_and_eval_matches_saved_split() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let model = dir.path().join("model.json");
    let a = stdout(&run(bin()
        .args(["train", "--data"])
        .arg(iris())
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&model)));
    let b = stdout(&run(bin().args(["train", "--data"]).arg(iris()).arg("--config").arg(&cfg)));
    assert_eq!(a, b);
    let rows = data_rows(&a);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "iris");
    assert_eq!(rows[0][5], "2");

    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(saved["format_version"], 1);
    let eval = stdout(&run(bin().arg("eval").arg("--model").arg(&model).arg("--data").arg(iris())));
    let row = &data_rows(&eval)[0];
    assert_eq!(row[2], "none");
    let err: f64 = row[3].parse().unwrap();
    assert!((err - saved["test_error"].as_f64().unwrap()).abs() < 1e-3);
}

#[test]
fn gaussian_grid_emits_one_row_per_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let model = dir.path().join("m.json");
    stdout(&run(bin().arg("train").arg("--data").arg(iris()).arg("--config").arg(&cfg).arg("--out").arg(&model)));
    let out = stdout(&run(bin()
        .arg("eval")
        .arg("--model")
        .arg(&model)
        .arg("--data")
        .arg(iris())
        .args(["--perturb", "gaussian:0,0.1,0.25,0.5,1.0,2.0"])));
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0][2], "gaussian:0");
    assert_eq!(rows[0][4], "0.0000");
}

#[test]
fn native_rank_model_ignores_monotone_transforms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), r#""encoding":"native-rank""#);
    let model = dir.path().join("m.json");
    stdout(&run(bin().arg("train").arg("--data").arg(iris()).arg("--config").arg(&cfg).arg("--out").arg(&model)));
    let mut cmd = bin();
    cmd.arg("eval").arg("--model").arg(&model).arg("--data").arg(iris());
    for f in ["log1p", "sqrt_abs", "signed_square", "scale_0.01", "scale_100"] {
        cmd.args(["--perturb", &format!("monotone:{f}")]);
    }
    let rows = data_rows(&stdout(&run(&mut cmd)));
    let clean = data_rows(&stdout(&run(bin().arg("eval").arg("--model").arg(&model).arg("--data").arg(iris()))));
    assert_eq!(rows.len(), 5);
    for r in rows {
        assert_eq!(r[3], clean[0][3], "{}", r[2]);
    }
}

#[test]
fn sweep_covers_grid_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let grid = dir.path().join("grid.json");
    std::fs::write(&grid, r#"{"layers":[[8],[16]],"embed_dim":[6,8]}"#).unwrap();
    let out = dir.path().join("sweep.csv");
    let sweep = || {
        stdout(&run(bin()
            .arg("sweep")
            .arg("--data")
            .arg(iris())
            .arg("--grid")
            .arg(&grid)
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&out)))
    };
    assert_eq!(data_rows(&sweep()).len(), 4);
    assert_eq!(data_rows(&sweep()).len(), 0);
    let saved = std::fs::read_to_string(&out).unwrap();
    assert_eq!(data_rows(&saved).len(), 4);
}

#[test]
fn knn_reports_learning_gain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = stdout(&run(bin()
        .arg("knn")
        .arg("--data")
        .arg(iris())
        .arg("--config")
        .arg(&cfg)
        .args(["--k", "1,3"])));
    assert!(out.lines().next().unwrap().ends_with("learning_gain"));
    assert_eq!(data_rows(&out).len(), 2);
}

#[test]
fn energy_reproduces_layer_ratio() {
    let out = stdout(&run(bin().arg("energy")));
    assert!(out.contains("sort,total,,25472,2547.20"));
    assert!(out.contains("mlp,total,,8448,37913.60"));
    assert!(out.contains("ratio,mlp/sort,,,14.8844"));
    assert!(out.contains("sort,total,,350140,35014.00"));
}

#[test]
fn oracle_suite_passes() {
    let o = run(bin().arg("proptest"));
    let text = stdout(&o);
    assert!(!text.contains(",false"));
}

#[test]
fn encode_emits_one_row_per_sample_and_view() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = stdout(&run(bin().arg("encode").arg("--data").arg(iris()).arg("--config").arg(&cfg)));
    assert_eq!(out.lines().count(), 1 + 150 * 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"views": 0}"#).unwrap();
    let o = run(bin().arg("train").arg("--data").arg(iris()).arg("--config").arg(&bad));
    assert_eq!(o.status.code(), Some(2));

    let no_label = dir.path().join("nolabel.csv");
    std::fs::write(&no_label, "only\n1.0\n2.0\n").unwrap();
    let o = run(bin().arg("train").arg("--data").arg(&no_label));
    assert_eq!(o.status.code(), Some(3));

    let o = run(bin().arg("energy").env("ARROWFLOW_THREADS", "zero"));
    assert_eq!(o.status.code(), Some(2));
    let o = run(bin().arg("energy").args(["--threads", "2"]).env("ARROWFLOW_THREADS", "1"));
    assert!(o.status.success());
}
