use std::path::Path;
use std::process::{Command, Output};

fn bifstep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bifstep"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

fn slip(vw: f64) -> f64 {
    (1.0 + 15.0 / (1.0 + 100.0 * vw * vw)) * vw
}

#[test]
fn flow_curve_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = bifstep(&["flow-curve", "--output_dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(&dir.path().join("flow_curve.csv"));
    assert!(text.starts_with("vw,q,sigma_w\n"));
    assert!(!text.contains('\r'));
    assert_eq!(text.matches("vw,q,sigma_w").count(), 1);
    let table = rows(&text);
    assert_eq!(table.len(), 601);
    let at = table
        .iter()
        .find(|r| (r[0] - 0.1).abs() < 1e-12)
        .expect("row at vw = 0.1");
    assert!((at[2] - 0.85).abs() < 1e-12);
    assert!((at[1] - (0.1 + 0.85 / 3.0)).abs() < 1e-12);

    let ext = read(&dir.path().join("flow_curve_extrema.csv"));
    let lines: Vec<&str> = ext.lines().collect();
    assert_eq!(lines[0], "kind,vw,q,sigma_w");
    assert!(lines[1].starts_with("max,0.1173"));
    assert!(lines[2].starts_with("min,0.3409"));
}

#[test]
fn empty_range_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bifstep(&[
        "flow-curve",
        "--output_dir",
        dir.path().to_str().unwrap(),
        "--vw_max",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# test\nre = 0.01\nbogus_key = 3\n").unwrap();
    let out = bifstep(&["flow-curve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("run.conf:3"), "{err}");
    assert!(err.contains("bogus_key"), "{err}");
}

#[test]
fn bad_override_value_is_rejected() {
    let out = bifstep(&["stability", "--q", "abc"]);
    assert_eq!(out.status.code(), Some(2));
    let out = bifstep(&["stability", "--n_nodes", "20"]);
    assert_eq!(out.status.code(), Some(2), "even node counts are invalid");
}

#[test]
fn missing_subcommand_fails() {
    assert!(!bifstep(&[]).status.success());
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(
        &cfg,
        format!("output_dir = {}\nn_points = 11  # coarse\n", dir.path().display()),
    )
    .unwrap();
    let out = bifstep(&["flow-curve", "--config", cfg.to_str().unwrap(), "--n_points=21"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(rows(&read(&dir.path().join("flow_curve.csv"))).len(), 21);
}

#[test]
fn rest_state_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = bifstep(&["stability", "--output_dir", d, "--q", "0", "--n_nodes", "21"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(&dir.path().join("eigs_q0.csv"));
    assert!(text.starts_with("re_lambda,im_lambda,ritz_residual\n"));
    let eigs = rows(&text);
    assert!(!eigs.is_empty());
    assert!(eigs.iter().all(|r| r[0] < 0.0), "{eigs:?}");
}

#[test]
fn stability_output_is_deterministic() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().to_str().unwrap();
        let out = bifstep(&["stability", "--output_dir", d, "--q", "0.45", "--n_nodes", "21"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        read(&dir.path().join("eigs_q0.45.csv"))
    };
    assert_eq!(run(), run());
}

#[test]
fn transient_at_rest_on_the_branch() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = bifstep(&[
        "transient",
        "--output_dir",
        d,
        "--n_nodes",
        "51",
        "--q_init",
        "0.3",
        "--q_run",
        "0.3",
        "--t_max",
        "0.01",
        "--record_every",
        "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("no sustained oscillation"));
    let text = read(&dir.path().join("transient.csv"));
    assert!(text.starts_with("t,grad_p,vw,q_check,t1_mid\n"));
    let table = rows(&text);
    assert_eq!(table.len(), 1000);
    for r in &table {
        assert!((r[3] - 0.3).abs() < 1e-11);
        assert!((-r[1] - slip(r[2])).abs() < 1e-10);
        for (a, b) in r[1..].iter().zip(&table[0][1..]) {
            assert!((a - b).abs() < 1e-10, "{r:?} vs {:?}", table[0]);
        }
    }
}

#[test]
fn shipped_default_config_matches_builtin_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.conf");
    let cfg = bifstep_cli::RunConfig::from_file(&path).unwrap();
    assert_eq!(cfg, bifstep_cli::RunConfig::default());
    let fine = bifstep_cli::RunConfig::from_file(&path.with_file_name("fine.conf")).unwrap();
    assert_eq!((fine.n_nodes, fine.dt, fine.cycle_dt), (Some(801), Some(1e-5), 1e-5));
}
