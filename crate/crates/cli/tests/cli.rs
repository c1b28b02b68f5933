use std::path::Path;
use std::process::{Command, Output};

use chldp::optimizer::deterministic_path;
use chldp::CoefficientSpec;

fn chldp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chldp"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("CHLDP_OUT_DIR")
        .output()
        .expect("binary runs")
}

/// Header and data rows of a CSV written by the binary, provenance line checked.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let prov = lines.next().unwrap();
    assert!(prov.starts_with("# chldp ") && prov.contains("config_sha256="), "{prov}");
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

#[test]
fn validate_default_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = chldp(dir.path(), &["validate"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = read_csv(&dir.path().join("validate.csv"));
    assert!(rows.iter().all(|r| r[col(&h, "passed")] == "true"));
}

#[test]
fn unbounded_sigma_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[model.diffusion]\nkind = \"shifted_sine\"\nc = 10.0\n").unwrap();
    let out = chldp(dir.path(), &["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(dir.path().join("validate.csv").exists());
    let out = chldp(dir.path(), &["rate", "--y", "0.3", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rate_at_deterministic_endpoint_is_zero() {
    let c = CoefficientSpec::default().build().unwrap();
    let y0 = deterministic_path(&c, 8, 64, 0.5).unwrap().terminal_at(1.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = chldp(dir.path(), &["rate", "--n", "8", "--y", &format!("{y0:?}")]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = read_csv(&dir.path().join("rate.csv"));
    assert_eq!(h, ["y", "I", "iterations", "grad_norm", "residual", "converged"]);
    let i: f64 = rows[0][col(&h, "I")].parse().unwrap();
    assert!(i.abs() < 1e-10, "I = {i}");
}

#[test]
fn rate_curve_and_dump() {
    let dir = tempfile::tempdir().unwrap();
    let out = chldp(dir.path(), &["rate", "--n", "4", "--m", "16", "--y-list", "0.2,0.4", "--dump"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = read_csv(&dir.path().join("rate.csv"));
    let i: Vec<f64> = rows.iter().map(|r| r[col(&h, "I")].parse().unwrap()).collect();
    assert!(i[1] > i[0] && i[0] > 0.0);
    let bytes = std::fs::read(dir.path().join("rate_path_1.bin")).unwrap();
    let path = chldp::io::read_path(&mut bytes.as_slice()).unwrap();
    assert!((path.terminal_at(1.0).unwrap() - 0.4).abs() < 1e-8);
}

#[test]
fn green_check_rate() {
    let dir = tempfile::tempdir().unwrap();
    let out = chldp(dir.path(), &["green-check", "--n-list", "8,16,32,64"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = read_csv(&dir.path().join("green_check.csv"));
    assert_eq!(rows.len(), 4);
    let slope: f64 = rows[0][col(&h, "slope_e2")].parse().unwrap();
    assert!(slope <= -1.7, "slope {slope}");
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "n_list = [4, 8]\nm = 16\ny = 0.3\n[rate]\nmulti_start = false\n").unwrap();
    let out = chldp(dir.path(), &["converge", "--config", cfg.to_str().unwrap(), "--n-list", "2,4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = read_csv(&dir.path().join("converge.csv"));
    let ns: Vec<&str> = rows.iter().map(|r| r[col(&h, "n")].as_str()).collect();
    assert_eq!(ns, ["2", "4"]);
    assert!(rows.iter().all(|r| r[col(&h, "m")] == "16"));
}

#[test]
fn bad_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(chldp(dir.path(), &["simulate", "--eps", "2"]).status.code(), Some(2));
    assert_eq!(chldp(dir.path(), &["simulate", "--n", "0"]).status.code(), Some(2));
    assert_eq!(chldp(dir.path(), &["mc-verify"]).status.code(), Some(2));
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "not_a_key = 3\n").unwrap();
    assert_eq!(chldp(dir.path(), &["validate", "-c", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(chldp(dir.path(), &["validate", "-c", "/nonexistent.toml"]).status.code(), Some(2));
}

#[test]
fn plain_mc_underflow_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = chldp(
        dir.path(),
        &["mc-verify", "--no-importance", "--n", "4", "--m", "16", "--y", "5", "--samples", "200", "--eps", "0.01"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("importance sampling"));
}

#[test]
fn outputs_are_byte_identical_across_thread_counts() {
    let runs: [&[&str]; 3] = [
        &["simulate", "--n", "8", "--m", "32", "--eps", "0.1", "--paths", "12", "--full-path"],
        &["mc-verify", "--n", "4", "--m", "16", "--y", "0.4", "--samples", "2000", "--eps-list", "0.3,0.2"],
        &["converge", "--n-list", "2,4,8", "--m", "16", "--y", "0.3"],
    ];
    let files = ["simulate_paths.csv", "mc_verify.csv", "converge.csv"];
    for (args, file) in runs.iter().zip(files) {
        let mut outputs = Vec::new();
        for threads in ["1", "3"] {
            let dir = tempfile::tempdir().unwrap();
            let mut a = args.to_vec();
            a.extend(["--threads", threads, "--seed", "9"]);
            let out = chldp(dir.path(), &a);
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
            outputs.push(std::fs::read(dir.path().join(file)).unwrap());
        }
        assert_eq!(outputs[0], outputs[1], "{file} differs between 1 and 3 threads");
    }
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_chldp"))
        .args(["simulate", "--paths", "2", "--n", "4", "--m", "8"])
        .env("CHLDP_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let (h, rows) = read_csv(&dir.path().join("simulate_terminal.csv"));
    assert_eq!(h, ["path", "x", "value"]);
    assert_eq!(rows.len(), 8);
}

#[test]
fn props_report_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = chldp(dir.path(), &["props", "--seed", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = read_csv(&dir.path().join("props.csv"));
    assert!(rows.len() >= 40);
    assert!(rows.iter().all(|r| r[col(&h, "passed")] == "true"));
}
