use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gram-profile"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect()
}

const MP: &str = r#"{
  "c": 1.0,
  "profile": {"kind": "constant", "value": 1.0},
  "z_grid": [[0.0, 1.0], [1.0, 0.5]]
}"#;

const ENSEMBLE: &str = r#"{
  "profile": {"kind": "constant", "value": 1.0},
  "h": {"type": "product", "lambda_law": [[0.0, 1.0]], "m": 64},
  "ensemble": {"entry_law": "gaussian", "rows": 40, "cols": 80},
  "density": {"points": 400, "epsilon": 0.003},
  "noise": {"s_sq": 1.0},
  "seeds": [3, 1, 2]
}"#;

#[test]
fn solve_reproduces_the_quadratic_root_at_i() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "mp.json", MP);
    let out = tmp.path().join("out");
    let o = run("solve", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("solve.csv")).unwrap();
    assert!(text.contains("z_re,z_im,f_re,f_im,ft_re,ft_im,dual_resid,iters"));
    assert!(text.lines().any(|l| l.starts_with("# config_hash=")));
    let row: Vec<f64> = data_rows(&text)
        .into_iter()
        .map(|l| {
            l.split(',')
                .map(|v| v.parse().unwrap())
                .collect::<Vec<f64>>()
        })
        .find(|r| r[0] == 0.0 && r[1] == 1.0)
        .unwrap();
    assert!(
        (row[2] - 0.30024).abs() < 1e-5 && (row[3] - 0.62481).abs() < 1e-5,
        "{row:?}"
    );
    assert!(row[6] <= 1e-8);
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run_solve.json")).unwrap()).unwrap();
    assert_eq!(record["config"]["c"], 1.0);
    assert!(record["rng"].as_str().unwrap().contains("ChaCha8"));
}

#[test]
fn c_above_one_without_transpose_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.json",
        r#"{"c": 1.5, "profile": {"kind": "constant", "value": 1.0}, "z_grid": [[0.0, 1.0]]}"#,
    );
    let o = run("solve", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("allow_transpose"));
}

#[test]
fn malformed_config_reports_line_and_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.json",
        "{\n  \"c\": 0.5,\n  \"profile\": 3\n}",
    );
    let o = run("solve", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn solver_failures_map_to_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let slow = write_config(
        tmp.path(),
        "slow.json",
        r#"{"c": 0.5, "profile": {"kind": "constant", "value": 1.0},
            "z_grid": [[0.0, 0.5]], "solver": {"max_iters": 2}}"#,
    );
    assert_eq!(
        run("solve", &slow, &tmp.path().join("a"), &[])
            .status
            .code(),
        Some(3)
    );
    let guarded = write_config(
        tmp.path(),
        "guard.json",
        r#"{"c": 0.5, "profile": {"kind": "constant", "value": 1.0},
            "z_grid": [[0.0, 0.5]], "solver": {"min_denominator": 1e6}}"#,
    );
    assert_eq!(
        run("solve", &guarded, &tmp.path().join("b"), &[])
            .status
            .code(),
        Some(4)
    );
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "e.json", ENSEMBLE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        for cmd in ["simulate", "compare"] {
            let o = run(cmd, &cfg, dir, &["--threads", "2"]);
            assert!(
                o.status.success(),
                "{cmd}: {}",
                String::from_utf8_lossy(&o.stderr)
            );
        }
    }
    let mut names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 8, "{names:?}");
    for name in names {
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn compare_reports_sorted_seeds_and_median() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "e.json", ENSEMBLE);
    let out = tmp.path().join("out");
    let o = run("compare", &cfg, &out, &["--seeds", "5,1-2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("compare.csv")).unwrap();
    let seeds: Vec<&str> = data_rows(&csv)
        .iter()
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(seeds, ["1", "2", "5"]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("compare.json")).unwrap()).unwrap();
    assert_eq!(report["per_seed"].as_array().unwrap().len(), 3);
    let median = report["median_ks"].as_f64().unwrap();
    assert!(median > 0.0 && median < 0.15, "{median}");
    assert!(fs::read_to_string(out.join("limit_cdf.csv"))
        .unwrap()
        .contains("x,cdf"));
}

#[test]
fn compare_refuses_artifacts_from_another_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "e.json", ENSEMBLE);
    let other = write_config(
        tmp.path(),
        "f.json",
        &ENSEMBLE.replace("\"rows\": 40", "\"rows\": 20"),
    );
    let out = tmp.path().join("out");
    assert!(run("simulate", &cfg, &out, &[]).status.success());
    let o = run("compare", &other, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("different config"));
}

#[test]
fn capacity_in_nats_and_bits() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "e.json", ENSEMBLE);
    let read = |dir: &Path| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(dir.join("capacity.json")).unwrap()).unwrap()
    };
    let (n, b) = (tmp.path().join("n"), tmp.path().join("b"));
    assert!(run("capacity", &cfg, &n, &[]).status.success());
    assert!(run("capacity", &cfg, &b, &["--bits"]).status.success());
    let (rn, rb) = (read(&n), read(&b));
    assert_eq!(rn["unit"], "nats");
    assert_eq!(rb["unit"], "bits");
    let ln2 = std::f64::consts::LN_2;
    let limit_n = rn["limit"].as_f64().unwrap();
    assert!((rb["limit"].as_f64().unwrap() * ln2 - limit_n).abs() < 1e-12);
    assert!(rn["relative_gap"].as_f64().unwrap() < 0.05);
}

#[test]
fn wide_ensembles_are_transposed_and_labelled() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "t.json",
        r#"{"allow_transpose": true,
            "profile": {"kind": "constant", "value": 1.0},
            "ensemble": {"entry_law": "uniform", "rows": 30, "cols": 15},
            "seeds": [7]}"#,
    );
    let out = tmp.path().join("out");
    let o = run("simulate", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("spectrum_seed_7.csv")).unwrap();
    assert!(text.contains("# convention=transposed"));
    assert_eq!(data_rows(&text).len(), 15);

    let plain = write_config(
        tmp.path(),
        "u.json",
        r#"{"profile": {"kind": "constant", "value": 1.0},
            "ensemble": {"entry_law": "uniform", "rows": 30, "cols": 15}, "seeds": [7]}"#,
    );
    assert_eq!(
        run("simulate", &plain, &tmp.path().join("p"), &[])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn cogram_density_carries_the_atom() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "d.json",
        r#"{"c": 0.5, "profile": {"kind": "constant", "value": 1.0},
            "density": {"points": 300, "epsilon": 0.01, "side": "cogram"}}"#,
    );
    let out = tmp.path().join("out");
    let o = run("density", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("density.csv")).unwrap();
    assert!(text.contains("# atom_at_zero=0.5"));
    assert!(text.contains("x,density"));
    assert_eq!(data_rows(&text).len(), 300);
}
