use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SMALL: [&str; 4] = ["--nodes", "128", "--radius", "12"];

fn choquard(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_choquard"))
        .args(args)
        .current_dir(dir)
        .env_remove("CHOQUARD_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn run(dir: &Path, command: &str, extra: &[&str]) -> Output {
    let out = dir.join("out");
    let mut args = vec![command, "--out", out.to_str().unwrap()];
    args.extend(SMALL);
    args.extend(extra);
    choquard(&args, dir)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn error_kind(dir: &Path) -> String {
    json(dir.join("out/error.json"))["kind"].as_str().unwrap().to_owned()
}

#[test]
fn solve_then_verify_round_trip() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let o = run(d, "solve", &["--mass", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let result = json(d.join("out/result.json"));
    assert_eq!(result["schema"], 1);
    assert!(result["energy"].as_f64().unwrap() > 0.0);
    let profile = fs::read_to_string(d.join("out/profile.csv")).unwrap();
    assert!(profile.lines().count() > 128);

    let o = run(d, "verify", &["--result", "out/result.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(d.join("out/verification.json"));
    assert_eq!(report["pass"], true);
    assert_eq!(report["reproduced"], true);
}

#[test]
fn verify_rejects_a_tampered_result() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(code(&run(d, "solve", &["--mass", "1"])), 0);
    let mut result = json(d.join("out/result.json"));
    let u = result["u_hat"]["u"].as_array_mut().unwrap();
    for (i, v) in u.iter_mut().enumerate() {
        let x = v.as_f64().unwrap();
        *v = (x * if i % 2 == 0 { 1.01 } else { 0.99 }).into();
    }
    fs::write(d.join("tampered.json"), serde_json::to_string(&result).unwrap()).unwrap();
    let o = run(d, "verify", &["--result", "tampered.json"]);
    assert_eq!(code(&o), 1);
    assert_eq!(error_kind(d), "numeric.verification_failed");
    assert_eq!(json(d.join("out/verification.json"))["pass"], false);
}

#[test]
fn missing_mass_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let o = run(d, "solve", &[]);
    assert_eq!(code(&o), 2);
    let err = json(d.join("out/error.json"));
    assert_eq!(err["kind"], "config.missing_field");
    assert_eq!(err["exit_code"], 2);
    assert_eq!(err["command"], "solve");
    assert!(!d.join("out/result.json").exists());
}

#[test]
fn unknown_keys_and_bad_overrides_exit_2() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(d.join("cfg.json"), r#"{"problem": {"mass": 1, "colour": "red"}}"#).unwrap();
    assert_eq!(code(&run(d, "solve", &["--config", "cfg.json"])), 2);
    assert_eq!(error_kind(d), "config.invalid");
    assert_eq!(code(&run(d, "solve", &["--mass", "1", "--set", "numerics.bogus=1"])), 2);
    assert_eq!(code(&run(d, "solve", &["--mass", "1", "--set", "no-equals-sign"])), 2);
    assert_eq!(code(&run(d, "solve", &["--mass", "-1"])), 2);
    assert_eq!(code(&run(d, "solve", &["--mass", "1", "--set", "numerics.strategy=newton"])), 2);
    assert_eq!(error_kind(d), "config.unknown_name");
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(d.join("cfg.json"), r#"{"problem": {"mass": 2}, "numerics": {"nodes": 64, "radius": 12}}"#).unwrap();
    let o = choquard(&["solve", "-c", "cfg.json", "--nodes", "96", "-o", "out"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let result = json(d.join("out/result.json"));
    assert_eq!(result["config"]["mass"], 2.0);
    assert_eq!(result["config"]["nodes"], 96);
    assert_eq!(result["config"]["radius"], 12.0);
}

#[test]
fn hypothesis_violation_needs_force() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let p6 = ["--mass", "1", "--set", "problem.nonlinearity.params.p=6"];
    let o = run(d, "solve", &p6);
    assert_eq!(code(&o), 2);
    assert_eq!(error_kind(d), "config.hypothesis_violation");

    // forced past the audit, the solver either fails numerically or flags its result
    let mut forced = p6.to_vec();
    forced.extend(["--force", "--set", "numerics.max_iters=50"]);
    let o = run(d, "solve", &forced);
    assert!(matches!(code(&o), 0 | 1), "{}", String::from_utf8_lossy(&o.stderr));
    if code(&o) == 1 {
        assert!(error_kind(d).starts_with("numeric."));
    }
}

#[test]
fn audit_reports_witness_and_exits_0() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let o = run(d, "audit", &["--set", "problem.nonlinearity.params.p=2"]);
    assert_eq!(code(&o), 0);
    let report = json(d.join("out/audit.json"));
    assert_eq!(report["schema"], 1);
    let h1 = report["conditions"].as_array().unwrap().iter().find(|c| c["id"] == "H1").unwrap();
    assert_eq!(h1["verdict"], "fail");
    assert!(h1["witness"]["t"].as_f64().unwrap() > 0.0);
}

fn csv_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn fiber_scan_has_one_sign_change_and_footer() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let o = run(d, "fiber-scan", &["--mass", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(d.join("out/fiber_scan.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "s,I,P");
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 401);
    let changes = rows.windows(2).filter(|w| (w[0][2] > 0.0) != (w[1][2] > 0.0)).count();
    assert_eq!(changes, 1);
    let footer = text.lines().last().unwrap();
    let s_u: f64 = footer.strip_prefix("# s(u) = ").unwrap().parse().unwrap();

    // left of s(u) the slope stays positive
    let to = format!("numerics.scan.to={}", s_u - 0.5);
    let o = run(d, "fiber-scan", &["--mass", "1", "--set", "numerics.scan.from=-2", "--set", &to]);
    assert_eq!(code(&o), 0);
    let rows = csv_rows(&fs::read_to_string(d.join("out/fiber_scan.csv")).unwrap());
    assert!(rows.iter().all(|r| r[2] > 0.0));
}

#[test]
fn fiber_scan_of_a_zero_field_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let o = run(d, "fiber-scan", &["--mass", "0"]);
    assert_eq!(code(&o), 2);
    assert_eq!(error_kind(d), "config.invalid");
}

#[test]
fn sweep_writes_the_energy_table() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let o = run(d, "sweep", &["--masses", "0.5,1,2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(d.join("out/sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "m,E,mu,iterations,status");
    let mut energies = Vec::new();
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 5);
        assert_eq!(cols[4], "converged");
        for c in &cols[..3] {
            let mantissa = c.trim_start_matches('-').split('e').next().unwrap();
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{c}");
        }
        energies.push(cols[1].parse::<f64>().unwrap());
    }
    assert_eq!(energies.len(), 3);
    assert!(energies.windows(2).all(|w| w[0] > w[1]));
    assert!(d.join("out/asymptotic.json").exists());
    assert_eq!(json(d.join("out/sweep.json"))["schema"], 1);
}

#[test]
fn sweep_needs_ascending_masses() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(code(&run(d, "sweep", &["--masses", "2,1,4"])), 2);
    assert_eq!(code(&run(d, "sweep", &["--masses", "1,2"])), 2);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let mut args = vec!["audit"];
    args.extend(SMALL);
    let o = Command::new(env!("CARGO_BIN_EXE_choquard"))
        .args(&args)
        .current_dir(d)
        .env("CHOQUARD_OUTPUT_DIR", d.join("from-env"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(d.join("from-env/audit.json").exists());

    let o = choquard(&args, d);
    assert_eq!(code(&o), 0);
    assert!(d.join("choquard-output/audit.json").exists());
}

#[test]
fn help_lists_the_schema() {
    let tmp = TempDir::new().unwrap();
    for args in [vec!["--help"], vec!["solve", "--help"], vec!["sweep", "--help"]] {
        let o = choquard(&args, tmp.path());
        assert_eq!(code(&o), 0);
        let text = String::from_utf8_lossy(&o.stdout);
        for key in ["problem:", "numerics:", "output:", "CHOQUARD_OUTPUT_DIR", "EXIT CODES"] {
            assert!(text.contains(key), "{key} missing from {args:?} help");
        }
    }
}

#[test]
fn unknown_subcommand_exits_2() {
    let tmp = TempDir::new().unwrap();
    let o = choquard(&["explode"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(tmp.path().join("choquard-output/error.json").exists());
}

#[test]
fn kernel_dump_reloads_to_the_same_result() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let o = run(d, "solve", &["--mass", "1", "--set", "output.kernel_dump=true"]);
    assert_eq!(code(&o), 0);
    let dumped = d.join("out/kernel.bin");
    assert!(fs::metadata(&dumped).unwrap().len() > 128 * 128 * 8);
    let first = fs::read_to_string(d.join("out/result.json")).unwrap();

    fs::copy(&dumped, d.join("cached.bin")).unwrap();
    let o = run(d, "solve", &["--mass", "1", "--set", "numerics.kernel_file=cached.bin"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(d.join("out/result.json")).unwrap(), first);

    // a cached kernel for another grid is refused
    let o = run(d, "solve", &["--mass", "1", "--nodes", "64", "--set", "numerics.kernel_file=cached.bin"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn no_temporary_files_are_left_behind() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(code(&run(d, "solve", &["--mass", "1"])), 0);
    assert_eq!(code(&run(d, "fiber-scan", &["--mass", "1"])), 0);
    let mut names: Vec<String> =
        fs::read_dir(d.join("out")).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["fiber_scan.csv", "profile.csv", "result.json"]);
}

#[test]
fn crosscheck_agrees_in_three_dimensions() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let o = run(d, "crosscheck", &["--set", "numerics.crosscheck.side=32"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("out/crosscheck.csv").exists());
    assert_eq!(json(d.join("out/crosscheck.json"))["schema"], 1);
    assert_eq!(code(&run(d, "crosscheck", &["--set", "problem.dimension=4"])), 2);
}
