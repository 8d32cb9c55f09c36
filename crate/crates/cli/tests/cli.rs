use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const MODEL: &str = r#"{"modes":[{"omega_n_rad_s":6.283185307179586,"zeta":0.0}],"v_max_mm_s":240.0,"x_f_mm":400.0}"#;

fn swayopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swayopt"))
        .args(args)
        .env("SWAYOPT_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn model(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn profile(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn switches(doc: &serde_json::Value) -> Vec<f64> {
    doc["switch_times_s"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn error_kind(out: &Output) -> String {
    let doc: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    doc["error"].as_str().unwrap().to_string()
}

#[test]
fn closed_form_design_at_400() {
    let dir = TempDir::new().unwrap();
    let m = model(&dir, "m.json", MODEL);
    let doc = profile(&swayopt(&["design", "--model", s(&m), "--closed-form"]));
    let ts = switches(&doc);
    let t_f = doc["t_f_s"].as_f64().unwrap();
    assert_eq!(ts.len(), 4);
    // Off zones are 2 T1 wide and the maneuver lasts 2 T2.
    assert!(((ts[1] - ts[0]) / 2.0 - 0.0409).abs() < 5e-5);
    assert!((t_f / 2.0 - 0.9151).abs() < 5e-5);
}

#[test]
fn boundary_displacement_gives_a_pulse() {
    let dir = TempDir::new().unwrap();
    let m = model(&dir, "m.json", MODEL);
    let doc = profile(&swayopt(&["design", "--model", s(&m), "--xf", "240"]));
    assert!(switches(&doc).is_empty());
    assert!((doc["t_f_s"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn robust_design_is_slower() {
    let dir = TempDir::new().unwrap();
    let m = model(&dir, "m.json", MODEL);
    let plain = profile(&swayopt(&["design", "--model", s(&m), "--xf", "100"]));
    let robust = profile(&swayopt(&["design", "--model", s(&m), "--xf", "100", "--robust"]));
    let t_plain = plain["t_f_s"].as_f64().unwrap();
    assert!((t_plain - (0.5 + 100.0 / 480.0)).abs() < 1e-12);
    assert!(robust["t_f_s"].as_f64().unwrap() > t_plain);
}

#[test]
fn design_output_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let m = model(&dir, "m.json", MODEL);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let r = swayopt(&["design", "--model", s(&m), "--robust", "--out", s(&out)]);
        assert!(r.status.success());
        fs::read(out).unwrap()
    };
    assert_eq!(run("a.json"), run("b.json"));
}

#[test]
fn hz_flag_converts_frequencies() {
    let dir = TempDir::new().unwrap();
    let m = model(&dir, "hz.json", r#"{"modes":[{"omega_n_rad_s":1.0}],"v_max_mm_s":240.0,"x_f_mm":240.0}"#);
    let doc = profile(&swayopt(&["design", "--model", s(&m), "--hz"]));
    assert!(switches(&doc).is_empty());
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let m = model(&dir, "m.json", MODEL);
    let missing = swayopt(&["design", "--model", "/nonexistent/model.json"]);
    assert_eq!(exit_code(&missing), 3);
    assert_eq!(error_kind(&missing), "input");

    let bad = model(&dir, "bad.json", r#"{"modes":[{"omega_n_rad_s":-1.0}],"v_max_mm_s":240.0,"x_f_mm":1.0}"#);
    let out = swayopt(&["design", "--model", s(&bad)]);
    assert_eq!(exit_code(&out), 3);
    assert_eq!(error_kind(&out), "domain");

    let two = model(
        &dir,
        "two.json",
        r#"{"modes":[{"omega_n_rad_s":4.29,"zeta":0.0026},{"omega_n_rad_s":38.7,"zeta":0.026}],"v_max_mm_s":240.0,"x_f_mm":100.0}"#,
    );
    let out = swayopt(&["design", "--model", s(&two), "--max-switches", "2"]);
    assert_eq!(exit_code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(error_kind(&out), "infeasible");

    assert_eq!(exit_code(&swayopt(&["design", "--model", s(&m), "--max-switches", "3"])), 3);
    assert_eq!(exit_code(&swayopt(&["frobnicate"])), 3);
    assert_eq!(exit_code(&swayopt(&[])), 3);
    assert_eq!(exit_code(&swayopt(&["--help"])), 0);
}

#[test]
fn simulate_is_independent_of_the_sampling_step() {
    let dir = TempDir::new().unwrap();
    let m = model(&dir, "m.json", MODEL);
    let prof = dir.path().join("p.json");
    assert!(swayopt(&["design", "--model", s(&m), "--out", s(&prof)]).status.success());
    let terminal = |dt: &str| {
        let out = swayopt(&["simulate", "--model", s(&m), "--profile", s(&prof), "--dt", dt, "--augmented"]);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        let t_f = 1.830265615577964;
        let row = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
            .find(|r| (r[0] - t_f).abs() < 1e-9)
            .expect("terminal sample");
        row
    };
    let (a, b) = (terminal("0.01"), terminal("0.005"));
    assert_eq!(a.len(), 6);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
    }
}

#[test]
fn zones_subcommand_rejects_damped_models() {
    let dir = TempDir::new().unwrap();
    let m = model(&dir, "d.json", r#"{"modes":[{"omega_n_rad_s":6.28,"zeta":0.01}],"v_max_mm_s":240.0,"x_f_mm":1.0}"#);
    assert_eq!(exit_code(&swayopt(&["zones", "--model", s(&m), "--xf-max", "700"])), 3);
}

#[test]
fn repro_fig4_has_collapses_at_240_and_480() {
    let dir = TempDir::new().unwrap();
    let out = swayopt(&["--repro", "fig4", "--out-dir", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let zones = fs::read_to_string(dir.path().join("fig4_zones.csv")).unwrap();
    assert_eq!(zones.lines().count(), 701);
    // Rows on a boundary are pulses with zero off-zone width.
    for x in ["240", "480"] {
        let row = zones.lines().find(|l| l.split(',').next() == Some(x)).unwrap();
        assert_eq!(row.split(',').nth(2), Some("0"));
    }
    let tr = fs::read_to_string(dir.path().join("fig4_transitions.csv")).unwrap();
    let xs: Vec<f64> = tr.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(xs.iter().any(|x| (x - 240.0).abs() < 1e-6));
    assert!(xs.iter().any(|x| (x - 480.0).abs() < 1e-6));
    assert!(tr.lines().skip(1).all(|l| l.ends_with(",collapse")));
}

#[test]
fn repro_fig6_writes_both_sweeps() {
    let dir = TempDir::new().unwrap();
    let out = swayopt(&["--repro", "fig6", "--xf", "50", "--out-dir", s(dir.path())]);
    assert!(out.status.success());
    let read = |name: &str| -> Vec<(f64, f64)> {
        fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| {
                let mut it = l.split(',').map(|v| v.parse::<f64>().unwrap());
                (it.next().unwrap(), it.next().unwrap())
            })
            .collect()
    };
    let plain = read("fig6_sweep_nonrobust.csv");
    let robust = read("fig6_sweep_robust.csv");
    assert_eq!(plain.len(), 121);
    assert_eq!(robust.len(), 121);
    assert!((plain[0].0 - 0.7).abs() < 1e-12 && (plain[120].0 - 1.3).abs() < 1e-12);
    let nominal = plain.iter().zip(&robust).find(|(p, _)| (p.0 - 1.0).abs() < 1e-9).unwrap();
    assert!(nominal.0 .1 < 1e-12 && nominal.1 .1 < 1e-12);
}

#[test]
fn sweep_and_transitions_subcommands() {
    let dir = TempDir::new().unwrap();
    let m = model(&dir, "m.json", MODEL);
    let out = swayopt(&["sweep", "--model", s(&m), "--points", "11"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("omega_ratio,V_mm2_s2"));
    assert_eq!(text.lines().count(), 12);

    let out = swayopt(&["transitions", "--model", s(&m), "--xf-max", "300"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "x_f_mm,t_cr_s,kind");
    let x: f64 = lines[1].split(',').next().unwrap().parse().unwrap();
    assert!((x - 240.0).abs() < 1e-6);
}

#[test]
fn grid_design_table() {
    let dir = TempDir::new().unwrap();
    let m = model(&dir, "m.json", MODEL);
    let out = swayopt(&["design", "--model", s(&m), "--grid", "0,300,3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x_f_mm,robust_flag,N,T1_s,T2_s,T3_s,T4_s,tf_s");
    assert!(lines[1].starts_with("100,0,2,"));
    assert!(lines[2].starts_with("200,0,2,"));
    assert!(lines[3].starts_with("300,0,4,"));
}
