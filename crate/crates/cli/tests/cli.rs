use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn diamond(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diamond"))
        .args(args)
        .env_remove("DIAMOND_THREADS")
        .output()
        .expect("spawn diamond")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn run_with_zero_steps_writes_the_initial_levels() {
    let out = stdout(&diamond(&["run", "--steps", "0", "--N", "8"]));
    let r = rows(&out);
    assert_eq!(
        r[0],
        ["level", "diamond", "slot", "x", "t", "z0", "z1", "z2"]
    );
    assert_eq!(r.len(), 1 + 2 * 8);
    assert!(r[1..9]
        .iter()
        .all(|row| row[0] == "0" && row[4] == "0.0000000000000000e0"));
    assert!(r[9..].iter().all(|row| row[0] == "1"));
}

#[test]
fn rk_snapshot_has_every_slot() {
    let out = stdout(&diamond(&[
        "run", "--scheme", "rk", "--r", "3", "--N", "10", "--steps", "1",
    ]));
    let r = rows(&out);
    assert_eq!(r.len(), 1 + 10 * 7);
    assert!(r[1..].iter().all(|row| row[0] == "2"));
    // every number carries 17 significant digits
    let x = &r[1][3];
    let mantissa = x.split('e').next().unwrap().replace(['-', '.'], "");
    assert_eq!(mantissa.len(), 17);
}

#[test]
fn converge_writes_table_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("simple.csv");
    let o = diamond(&[
        "converge",
        "--scheme",
        "simple",
        "--N0",
        "40",
        "--levels",
        "6",
        "--lambda",
        "0.5",
        "-o",
        csv.to_str().unwrap(),
    ]);
    stdout(&o);
    let r = rows(&fs::read_to_string(&csv).unwrap());
    assert_eq!(r[0], ["N", "dt", "error"]);
    assert_eq!(r.len(), 7);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(csv.with_extension("json")).unwrap()).unwrap();
    let slope = summary["fitted_slope"].as_f64().unwrap();
    assert!((slope - 2.0).abs() < 0.2, "{slope}");
    assert_eq!(summary["config"]["N"], 40);
}

#[test]
fn solvability_grid() {
    let out = stdout(&diamond(&[
        "solvability",
        "--rmax",
        "5",
        "--lambda-grid",
        "21",
    ]));
    let r = rows(&out);
    assert_eq!(r[0], ["r", "lambda", "min_singular_value"]);
    assert_eq!(r.len(), 106);
    assert!(r[1..]
        .iter()
        .all(|row| row[2].parse::<f64>().unwrap() > 0.0));
}

#[test]
fn dispersion_curves() {
    let out = stdout(&diamond(&[
        "dispersion",
        "--system",
        "cubic",
        "--lambda",
        "1",
        "--resolution",
        "32",
        "--window",
        "2",
    ]));
    let r = rows(&out);
    assert_eq!(r[0], ["curve_id", "xi", "omega", "x", "y"]);
    for id in [
        "lambda=1/continuous",
        "lambda=1/discrete",
        "lambda=1/boundary",
    ] {
        assert!(r.iter().any(|row| row[0] == id), "{id}");
    }
}

#[test]
fn dispersion_from_matrix_file() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.json");
    fs::write(
        &m,
        r#"{"k": [[0,-1,0],[1,0,0],[0,0,0]], "l": [[0,0,1],[0,0,0],[-1,0,0]], "s": [[0,0,0],[0,1,0],[0,0,-1]]}"#,
    )
    .unwrap();
    let out = stdout(&diamond(&[
        "dispersion",
        "--system",
        "linear-matrix-file",
        "--matrix-file",
        m.to_str().unwrap(),
        "--lambda",
        "0.5",
        "--resolution",
        "16",
    ]));
    assert!(out.lines().count() > 10);
}

#[test]
fn conservation_residuals_are_small() {
    let out = stdout(&diamond(&[
        "conservation",
        "--scheme",
        "rk",
        "--r",
        "1",
        "--N",
        "20",
        "--steps",
        "2",
    ]));
    let r = rows(&out);
    assert_eq!(r.len(), 1 + 4 * 20);
    assert!(r[1..]
        .iter()
        .all(|row| row[2].parse::<f64>().unwrap() < 1e-9));
}

#[test]
fn check_reports_ok() {
    let o = diamond(&["check", "--rmax", "8"]);
    assert_eq!(stdout(&o).trim(), "ok");
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"N": 6, "steps": 0, "system": "linear_wave"}"#).unwrap();
    let c = cfg.to_str().unwrap();
    assert_eq!(rows(&stdout(&diamond(&["run", "--config", c]))).len(), 13);
    assert_eq!(
        rows(&stdout(&diamond(&["run", "--config", c, "--N", "5"]))).len(),
        11
    );
}

#[test]
fn custom_system_file() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("sys.json");
    fs::write(
        &m,
        r#"{"k": [[0,-1,0],[1,0,0],[0,0,0]], "l": [[0,0,1],[0,0,0],[-1,0,0]], "s": [[-1,0,0],[0,1,0],[0,0,-1]]}"#,
    )
    .unwrap();
    let args = [
        "run",
        "--system",
        "custom_file",
        "--system-file",
        m.to_str().unwrap(),
        "--N",
        "10",
    ];
    // no known solution, so exact initialization is a configuration error
    assert_eq!(diamond(&args).status.code(), Some(2));
    let mut euler = args.to_vec();
    euler.extend(["--init", "euler"]);
    assert_eq!(rows(&stdout(&diamond(&euler))).len(), 21);
}

#[test]
fn exit_codes() {
    assert_eq!(diamond(&["run", "--lambda", "-1"]).status.code(), Some(2));
    assert_eq!(
        diamond(&["run", "--steps", "1", "--T", "1"]).status.code(),
        Some(2)
    );
    assert_eq!(diamond(&["bogus"]).status.code(), Some(2));
    let missing = diamond(&["run", "--config", "/nonexistent/c.json"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(!missing.stderr.is_empty());
    let fail = diamond(&["run", "--max-iter", "1", "--tol", "1e-15"]);
    assert_eq!(fail.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&fail.stderr).contains("solver failure"));
    let bad_env = Command::new(env!("CARGO_BIN_EXE_diamond"))
        .args(["run", "--N", "4"])
        .env("DIAMOND_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad_env.status.code(), Some(2));
}

#[test]
fn thread_flag_overrides_environment() {
    let args = ["run", "--N", "16", "--steps", "2"];
    let base = stdout(&diamond(&args));
    let o = Command::new(env!("CARGO_BIN_EXE_diamond"))
        .args(args)
        .args(["--threads", "3"])
        .env("DIAMOND_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(String::from_utf8(o.stdout).unwrap(), base);
    assert!(Path::new(env!("CARGO_BIN_EXE_diamond")).exists());
}
