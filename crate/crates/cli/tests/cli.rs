use std::path::{Path, PathBuf};
use std::process::Command;

use wentzell_cli::{input_digest, parse_config_str, run};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wentzell"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const LINEAR: &str = r#"{
    "schema_version": 1,
    "geometry": { "kind": "interval", "length": 1.0, "bulk_elements": 64 },
    "initial_data": { "kind": "modes", "displacement": [{ "mode": 2, "value": 0.05 }] },
    "time": { "t_end": 1.0, "dt": 0.001 },
    "galerkin": { "n": 8 }
}"#;

const SCENARIO1: &str = r#"{
    "schema_version": 1,
    "geometry": { "kind": "interval", "length": 1.0, "bulk_elements": 64 },
    "nonlinearity": {
        "f": { "powers": [{ "coefficient": 1.0, "exponent": 4.0 }] },
        "g": { "powers": [{ "coefficient": -1.0, "exponent": 2.0 }] }
    },
    "time": { "t_end": 1.0, "dt": 0.01 }
}"#;

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn eig_writes_constant_mode_first() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", LINEAR);
    let out = tmp.path().join("out");
    let status = bin().args(["eig", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap().status;
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("eigs.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("index,lambda,node_0"));
    let row1: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row1[0], "1");
    let lambda1: f64 = row1[1].parse().unwrap();
    assert!((lambda1 - 1.0).abs() <= 1e-9);
    for name in ["eigs.svg", "stiffness.mtx", "mass.mtx", "summary.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn linear_simulation_is_monotone_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", LINEAR);
    let out = tmp.path().join("out");
    let status = bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap().status;
    assert!(status.success());
    let s = summary(&out);
    assert_eq!(s["flags"]["energy_monotone"], true);
    let names: Vec<&str> = s["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    let mut sorted = names.clone();
    sorted.sort_unstable();
    sorted.dedup();
    assert_eq!(sorted.len(), names.len(), "every check listed once");
    assert!(names.contains(&"energy_monotone") && names.contains(&"weak_residual"));
    // defaults are echoed
    assert_eq!(s["config"]["fractional"]["theta"], 0.5);
    assert_eq!(s["config"]["fractional"]["realization"], "block_r2");
    assert_eq!(s["config"]["fractional"]["exponent_convention"], "theta");
    let header = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(header.starts_with("t,energy,kinetic,elastic"));
}

#[test]
fn scenario_one_balance_is_satisfied() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SCENARIO1);
    let out = tmp.path().join("out");
    let status = bin().args(["balance", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap().status;
    assert!(status.success());
    assert_eq!(summary(&out)["balance_verdict"], "Satisfied");
    let b: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("balance.json")).unwrap()).unwrap();
    assert_eq!(b["report"]["scenario_results"]["superlinear_gap"], true);
    assert!(b["report"]["scenario_results"]["sublinear"].is_null());
    assert!(out.join("balance_probes.csv").exists() && out.join("balance.svg").exists());
}

#[test]
fn failing_check_gives_nonzero_exit() {
    // a tight identity tolerance cannot be met at this step size
    let tmp = tempfile::tempdir().unwrap();
    let text = LINEAR.replace("\"galerkin\"", "\"checks\": { \"identity_tolerance\": 1e-30 }, \"galerkin\"");
    let cfg = write_config(tmp.path(), "c.json", &text);
    let out = tmp.path().join("out");
    let st = bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap().status;
    assert_eq!(st.code(), Some(1));
    let s = summary(&out);
    let failed: Vec<_> = s["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["passed"] == false)
        .collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0]["name"], "identity_residual");

    // disabling it restores a clean exit
    let text = LINEAR.replace("\"galerkin\"", "\"checks\": { \"identity\": false }, \"galerkin\"");
    let cfg = write_config(tmp.path(), "d.json", &text);
    let st = bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(tmp.path().join("o2")).output().unwrap().status;
    assert!(st.success());
}

#[test]
fn invalid_config_reports_path_and_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let text = LINEAR.replace("\"time\"", "\"fractional\": { \"theta\": 0.3 }, \"time\"");
    let cfg = write_config(tmp.path(), "c.json", &text);
    let out = bin().args(["eig", "--config"]).arg(&cfg).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("fractional.theta") && err.contains("[1/2, 1]"), "{err}");

    let text = LINEAR.replace("\"time\"", "\"fractional\": { \"omega\": 0.4 }, \"nonlinearity\": { \"epsilon\": 0.4 }, \"time\"");
    let cfg = write_config(tmp.path(), "d.json", &text);
    let out = bin().args(["eig", "--config"]).arg(&cfg).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ε ∈ (0, ω)"));
}

#[test]
fn digest_tracks_semantic_fields_only() {
    let base = parse_config_str(LINEAR).unwrap();
    let d0 = input_digest(&base);
    let mut moved = base.clone();
    moved.output_dir = Some("elsewhere".into());
    assert_eq!(input_digest(&moved), d0);
    for text in [
        LINEAR.replace("\"dt\": 0.001", "\"dt\": 0.002"),
        LINEAR.replace("\"n\": 8", "\"n\": 9"),
        LINEAR.replace("\"value\": 0.05", "\"value\": 0.06"),
        LINEAR.replace("\"time\"", "\"seed\": 3, \"time\""),
        LINEAR.replace("\"time\"", "\"fractional\": { \"theta\": 0.6 }, \"time\""),
    ] {
        assert_ne!(input_digest(&parse_config_str(&text).unwrap()), d0);
    }
    // spelling out a default is not a semantic change
    let explicit = LINEAR.replace("\"time\"", "\"fractional\": { \"theta\": 0.5 }, \"time\"");
    assert_eq!(input_digest(&parse_config_str(&explicit).unwrap()), d0);
}

#[test]
fn seed_flag_and_thread_cap_keep_outputs_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"{
        "schema_version": 1,
        "geometry": { "kind": "periodic_slab", "length": 1.0, "circumference": 2.0, "bulk_elements": 4, "periodic_points": 8 },
        "initial_data": { "kind": "random_modes", "modes": 5, "scale": 0.3 },
        "time": { "t_end": 0.2, "dt": 0.01 },
        "galerkin": { "n": 6, "convergence": [2, 4, 6] }
    }"#;
    let cfg = write_config(tmp.path(), "c.json", text);
    let go = |dir: &str, seed: &str, threads: &str| {
        let out = tmp.path().join(dir);
        let st = bin()
            .args(["converge", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(["--seed", seed])
            .env("WENTZELL_THREADS", threads)
            .output()
            .unwrap();
        assert!(st.status.success());
        std::fs::read(out.join("convergence.csv")).unwrap()
    };
    let a = go("a", "5", "1");
    let b = go("b", "5", "3");
    let c = go("c", "6", "2");
    assert_eq!(a, b);
    assert_ne!(a, c);

    let bad = bin()
        .args(["eig", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("d"))
        .env("WENTZELL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn library_run_matches_every_command() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SCENARIO1.replace(
        "\"time\"",
        "\"galerkin\": { \"n\": 4, \"convergence\": [2, 4] }, \"bvp\": { \"bulk\": [{ \"shape\": \"constant\", \"value\": 1.0 }] }, \"time\"",
    );
    let cfg = parse_config_str(&text).unwrap();
    use wentzell_cli::Command::*;
    for cmd in [Eig, Simulate, Balance, Poincare, Bvp, Converge] {
        let out = tmp.path().join(format!("{cmd:?}"));
        let s = run(&cfg, cmd, &out).unwrap();
        assert!(!s.checks.is_empty());
        for a in &s.artifacts {
            assert!(out.join(a).exists(), "{cmd:?}: {a}");
        }
        assert_eq!(s.input_digest.len(), 64);
    }
    let poincare = run(&cfg, Poincare, &tmp.path().join("p")).unwrap();
    assert!(poincare.check("poincare_lower_bound").unwrap().passed);
    let bvp = run(&cfg, Bvp, &tmp.path().join("b")).unwrap();
    assert!(bvp.check("bvp_residual").unwrap().passed);
}
