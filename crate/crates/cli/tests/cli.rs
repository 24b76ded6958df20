use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use imexlava::butcher::{canonical_pair, format_pair, PairId};
use imexlava::scenarios::{build, parse_config, BUILTIN_NAMES};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_imexlava"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 output")
}

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn kv<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(" = ")))
}

#[test]
fn tableau_check_canonical_pairs() {
    for name in ["C_EQ_CTILDE", "MAX_NU"] {
        let o = run(&["tableau", "check", name]);
        assert_eq!(o.status.code(), Some(0));
        let s = stdout(&o);
        assert_eq!(kv(&s, "passed"), Some("true"));
        assert_eq!(kv(&s, "pair"), Some(name));
    }
}

#[test]
fn tableau_file_round_trip_and_defect() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.txt");
    fs::write(&good, format_pair(&canonical_pair(PairId::MaxNu))).unwrap();
    assert_eq!(run(&["tableau", "check", good.to_str().unwrap()]).status.code(), Some(0));

    let mut p = canonical_pair(PairId::MaxNu);
    p.implicit.a[2][0] = 0.01;
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, format_pair(&p)).unwrap();
    let o = run(&["stability", "certify", "--pair", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let s = stdout(&o);
    assert_eq!(kv(&s, "certified"), Some("false"));
    assert!(s.lines().any(|l| l.starts_with("failed = l_stability_residual_")), "{s}");

    let garbage = dir.path().join("garbage.txt");
    fs::write(&garbage, "1 2\n").unwrap();
    assert_eq!(run(&["tableau", "check", garbage.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn certify_reports_courant_bound() {
    let o = run(&["stability", "certify", "--pair", "MAX_NU"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    let bound: f64 = kv(&s, "courant_bound").unwrap().parse().unwrap();
    assert!((bound - 1.2202).abs() < 1e-4);
    assert_eq!(kv(&s, "space_time_l_stable"), Some("true"));
    assert_eq!(kv(&s, "max_abs_g_lim"), Some("0.0000000000000000e0"));
}

#[test]
fn stability_sweep_csv() {
    let o = run(&["stability", "sweep", "--pair", "MAX_NU", "--nu", "1.22"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    let mut lines = s.lines();
    assert_eq!(lines.next(), Some("phi,theta,abs_G,re_G,im_G"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 91 * 720);
    assert!(rows.iter().all(|r| r.len() == 5 && r[2] <= 1.0 + 1e-12));
}

#[test]
fn run1d_reaction() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let o = run(&["run1d", "--case", "reaction", "--rate", "3", "--out", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let summary = stdout(&o);
    assert!(summary.contains("steps = 100"), "{summary}");
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,x,q_numeric,q_exact,err\n"));
    let last = text.lines().last().unwrap();
    let v: Vec<f64> = last.split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(v[0], 1.0);
    assert!(((v[2] - (-3.0f64).exp()) / (-3.0f64).exp()).abs() < 0.02);
    // 17 significant digits
    assert_eq!(last.split(',').next().unwrap(), "1.0000000000000000e0");
}

#[test]
fn run1d_rejects_courant_without_advection() {
    let o = run(&["run1d", "--case", "reaction", "--courant", "1.0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_usage_errors() {
    assert_eq!(run(&["run", "/does/not/exist.cfg"]).status.code(), Some(2));
    let cfg = scenario_dir().join("lake_at_rest.cfg");
    let o = run(&["run", cfg.to_str().unwrap(), "--key", "mesh.bogus=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn run_lake_at_rest_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario_dir().join("lake_at_rest.cfg");
    let o = run(&[
        "run",
        cfg.to_str().unwrap(),
        "--key",
        "mesh.nx=40",
        "--key",
        "mesh.ny=40",
        "--key",
        "time.t_final=0.2",
        "--key",
        "output.snapshot_every=5",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert_eq!(kv(&s, "status"), Some("completed"));
    for k in ["linf_h", "linf_hu", "linf_hv", "linf_hT"] {
        let v: f64 = kv(&s, k).unwrap().parse().unwrap();
        assert!(v <= 1e-11, "{k} = {v}");
    }
    let log = fs::read_to_string(dir.path().join("run_log.csv")).unwrap();
    assert!(log.starts_with("step,t,dt,mass,energy,max_speed\n"));
    assert!(dir.path().join("field_000005.txt").exists());
}

#[test]
fn run_is_deterministic() {
    let cfg = scenario_dir().join("vortex.cfg");
    let outputs: Vec<(String, String)> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let o = run(&[
                "run",
                cfg.to_str().unwrap(),
                "--key",
                "mesh.nx=32",
                "--key",
                "mesh.ny=16",
                "--key",
                "time.t_final=0.02",
                "--out-dir",
                dir.path().to_str().unwrap(),
            ]);
            assert_eq!(o.status.code(), Some(0));
            let log = fs::read_to_string(dir.path().join("run_log.csv")).unwrap();
            let name = fs::read_dir(dir.path())
                .unwrap()
                .map(|e| e.unwrap().file_name().into_string().unwrap())
                .find(|n| n.starts_with("field_"))
                .unwrap();
            (log, fs::read_to_string(dir.path().join(name)).unwrap())
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn stiffness_collapse_keeps_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario_dir().join("vent_chaotic.cfg");
    let o = run(&[
        "run",
        cfg.to_str().unwrap(),
        "--pair",
        "C_EQ_CTILDE",
        "--key",
        "mesh.nx=20",
        "--key",
        "mesh.ny=20",
        "--key",
        "mesh.lx=20",
        "--key",
        "mesh.ly=20",
        "--key",
        "mesh.x0=90",
        "--key",
        "mesh.y0=90",
        "--key",
        "time.t_final=0.5",
        "--key",
        "time.dt_floor=1e-6",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("fell below floor"));
    assert_eq!(kv(&stdout(&o), "status"), Some("failed"));
    let log = fs::read_to_string(dir.path().join("run_log.csv")).unwrap();
    assert!(log.lines().count() > 2);
}

#[test]
fn converge_advreact_second_order() {
    let o = run(&["converge", "advreact", "--meshes", "100,200,300,400,500"]);
    assert_eq!(o.status.code(), Some(0));
    let table = String::from_utf8_lossy(&o.stderr).to_string();
    let line = table.lines().find(|l| l.starts_with("order linf")).unwrap();
    let order: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!((1.9..=2.2).contains(&order), "{table}");
    assert_eq!(stdout(&o).lines().count(), 6);
}

#[test]
fn converge_single_mesh_has_no_order() {
    let o = run(&["converge", "advreact", "--meshes", "100"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("order linf undefined l2 undefined"));
    let o = run(&["converge", "vent-constant", "--meshes", "10"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bundled_scenarios_match_builtins() {
    for name in BUILTIN_NAMES {
        let path = scenario_dir().join(format!("{}.cfg", name.replace('-', "_")));
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(parse_config(&text).unwrap(), build(name).unwrap(), "{name}");
        let o = run(&["scenario", name]);
        assert_eq!(stdout(&o), text);
    }
}
