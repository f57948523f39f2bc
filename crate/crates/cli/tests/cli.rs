use std::path::Path;
use std::process::{Command, Output};

use mfg_core::grid::{read_snapshot, write_snapshot};

fn mfg(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfg"))
        .args(args)
        .env("MFG_OUT_ROOT", root)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn solve_constant(root: &Path, out: &Path) {
    let o = mfg(
        &[
            "solve",
            "--builtin",
            "constant1d",
            "--out",
            out.to_str().unwrap(),
        ],
        root,
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn counterexample_conjugate_values() {
    let tmp = tempfile::tempdir().unwrap();
    for (at, want) in [("2.5", "1.5"), ("1", "0.25")] {
        let o = mfg(
            &["conjugate-table", "--phi", "counterexample", "--at", at],
            tmp.path(),
        );
        assert!(o.status.success());
        assert_eq!(stdout(&o).trim(), want);
    }
    let o = mfg(
        &[
            "--json-summary",
            "conjugate-table",
            "--phi",
            "counterexample",
            "--at",
            "2.5",
        ],
        tmp.path(),
    );
    let row = &json(&o)["rows"][0];
    assert!((row["numerical"].as_f64().unwrap() - 1.5).abs() <= 2e-4);
}

#[test]
fn conjugate_table_is_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mfg(
        &[
            "conjugate-table",
            "--phi",
            "quadratic",
            "--from",
            "-2",
            "--to",
            "2",
            "--points",
            "5",
        ],
        tmp.path(),
    );
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "p,phi_star,numerical");
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[1], "-2,2,2");
}

#[test]
fn solve_writes_a_checksummed_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mfg(
        &["--json-summary", "solve", "--builtin", "constant1d"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let cert = &json(&o)["certificate"];
    assert!(cert["converged"].as_bool().unwrap());
    assert!(cert["rel_gap"].as_f64().unwrap() <= 1e-5);

    let dir = tmp.path().join("constant1d");
    let manifest = std::fs::read_to_string(dir.join("manifest.txt")).unwrap();
    for name in [
        "spec.toml",
        "certificate.txt",
        "gap_history.csv",
        "mass_balance.csv",
        "m.snap",
        "z.snap",
        "u.snap",
        "alpha.snap",
        "w.snap",
    ] {
        let line = manifest
            .lines()
            .find(|l| l.ends_with(&format!("  {name}")))
            .unwrap_or_else(|| panic!("{name}"));
        let bytes = std::fs::read(dir.join(name)).unwrap();
        use sha2::Digest;
        let hash: String = sha2::Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        assert!(line.starts_with(&hash), "{name}");
    }
    let hist = std::fs::read_to_string(dir.join("gap_history.csv")).unwrap();
    assert!(hist.starts_with("iteration,primal,dual,gap,rel_gap,residual\n"));
}

#[test]
fn tampered_snapshot_fails_with_named_check() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    solve_constant(tmp.path(), &dir);
    let o = mfg(&["verify", "--in", dir.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));

    let path = dir.join("m.snap");
    let mut snap = read_snapshot(&path).unwrap();
    snap.data[40] *= 1.05;
    write_snapshot(&path, &snap).unwrap();
    let o = mfg(&["verify", "--in", dir.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: kind=verification detail=failed checks: "));
    assert!(err.contains("continuity_residual"));
    assert!(err.contains("manifest_checksum(m.snap)"));
}

#[test]
fn pipeline_reports_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let dir = tmp.path().join(run);
        let d = dir.to_str().unwrap();
        solve_constant(tmp.path(), &dir);
        assert!(mfg(&["verify", "--in", d], tmp.path()).status.success());
        let o = mfg(
            &[
                "simulate",
                "--solve-dir",
                d,
                "--agents",
                "20000",
                "--seed",
                "3",
            ],
            tmp.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(mfg(&["report", "--in", d], tmp.path()).status.success());
        reports.push(std::fs::read(dir.join("report.txt")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let text = String::from_utf8(reports.pop().unwrap()).unwrap();
    for section in [
        "[certificate]",
        "[checks]",
        "[verdict]",
        "[simulation]",
        "[density_comparison]",
        "[gap_history]",
    ] {
        assert!(text.contains(section), "{section}");
    }
}

#[test]
fn simulation_summary_and_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    solve_constant(tmp.path(), &dir);
    let out = tmp.path().join("sim");
    let o = mfg(
        &[
            "--json-summary",
            "simulate",
            "--solve-dir",
            dir.to_str().unwrap(),
            "--agents",
            "100000",
            "--out",
            out.to_str().unwrap(),
            "--trajectories",
            "3",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["injected"].as_u64(), Some(0));
    assert_eq!(v["clamp_fraction"].as_f64(), Some(0.0));
    assert!(v["relative_l1_final"].as_f64().unwrap() < 0.05);
    let traj = std::fs::read_to_string(out.join("trajectories.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 3 * 33);
    assert!(
        std::fs::read_to_string(out.join("density_comparison.csv"))
            .unwrap()
            .lines()
            .count()
            == 34
    );
}

#[test]
fn checkpoint_resume_finishes_the_solve() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = tmp.path().join("state.ckpt");
    let ck = ck.to_str().unwrap();
    let o = mfg(
        &[
            "solve",
            "--builtin",
            "constant1d",
            "--checkpoint",
            ck,
            "--max-iterations",
            "50",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).starts_with("error: kind=not_converged "));
    let o = mfg(
        &[
            "--json-summary",
            "solve",
            "--builtin",
            "constant1d",
            "--checkpoint",
            ck,
            "--resume",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(json(&o)["certificate"]["iterations"].as_u64().unwrap() > 50);
}

#[test]
fn errors_are_one_machine_readable_line() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mfg(&["solve", "--builtin", "nosuch"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: kind=config detail="));

    let o = mfg(
        &[
            "verify",
            "--in",
            tmp.path().join("missing").to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(!o.status.success());
    assert_eq!(stderr(&o).lines().count(), 1);
    assert!(stderr(&o).starts_with("error: kind=io "));

    let bad = tmp.path().join("bad.toml");
    let mut spec = mfg_core::problem::builtin("influx1d").unwrap();
    spec.influx = mfg_core::problem::InfluxSpec::Constant { value: -1.0 };
    std::fs::write(&bad, spec.to_toml().unwrap()).unwrap();
    let o = mfg(&["validate", "--config", bad.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).starts_with("error: kind=assumption "),
        "{}",
        stderr(&o)
    );
    assert!(stdout(&o).contains("data-sign"));
}

#[test]
fn validate_round_trips_the_instance() {
    let tmp = tempfile::tempdir().unwrap();
    let emitted = tmp.path().join("inst.toml");
    let o = mfg(
        &[
            "validate",
            "--builtin",
            "paperexample2d",
            "--emit",
            emitted.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = mfg(
        &[
            "--json-summary",
            "validate",
            "--config",
            emitted.to_str().unwrap(),
        ],
        tmp.path(),
    );
    let v = json(&o);
    assert_eq!(v["valid"].as_bool(), Some(true));
    assert_eq!(v["name"].as_str(), Some("paperexample2d"));
}
