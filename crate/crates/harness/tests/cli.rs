use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn egi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_egi")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const HIMMELBLAU: &str = "experiment_name = h\npotential = himmelblau\nensemble_size = 3\ninit_lower = -5\n\
                          init_upper = 5\nalgorithm = egi_cbo\nkappa = 1\nn_iters = 200\ntrace_every = 20\n";

#[test]
fn gradinf_prints_gradient_and_hessian() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "pts.txt", "0 0\n1 1\n-1 1\n2 4\n");
    let out = egi(&["gradinf", &file, "--reference", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["gradient"][0].as_f64().unwrap() - 2.0).abs() < 1e-10);
    assert!((v["hessian"][0][0].as_f64().unwrap() - 2.0).abs() < 1e-10);

    let out = egi(&["gradinf", &file, "--at", "-0.5", "--value", "0.25"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["gradient"][0].as_f64().unwrap() + 1.0).abs() < 1e-10);
}

#[test]
fn optimize_writes_outputs_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "h.cfg", HIMMELBLAU);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = egi(&["optimize", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["trace.csv", "meta.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(fs::read_to_string(a.join("trace.csv")).unwrap().lines().count(), 1 + 1 + 200 / 20);
}

#[test]
fn overrides_take_effect() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "h.cfg", HIMMELBLAU);
    let out = dir.path().join("o");
    let o = egi(&["optimize", &cfg, "--out", out.to_str().unwrap(), "--seed", "9", "--trace-every", "50"]);
    assert!(o.status.success());
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["base_seed"], 9);
    assert_eq!(meta["seed"], 10);
    assert_eq!(fs::read_to_string(out.join("trace.csv")).unwrap().lines().count(), 1 + 1 + 200 / 50);
}

#[test]
fn mc_writes_one_directory_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "h.cfg", &format!("{HIMMELBLAU}n_mc_runs = 3\n"));
    let out = dir.path().join("mc");
    let o = egi(&["mc", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for k in 0..3 {
        assert!(out.join(format!("run_{k:03}/meta.json")).exists());
    }
    assert!(out.join("runs.csv").exists());
    assert!(out.join("summary.json").exists());
    assert!(out.join("final_mean_histogram.csv").exists());
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.cfg", &format!("{HIMMELBLAU}colour = blue\n"));
    let o = egi(&["optimize", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));

    let dup = write(dir.path(), "dup.cfg", &format!("{HIMMELBLAU}kappa = 2\n"));
    let o = egi(&["optimize", &dup]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 10"));

    let cfg = write(dir.path(), "h.cfg", HIMMELBLAU);
    assert_eq!(egi(&["sample", &cfg]).status.code(), Some(1));
    assert_eq!(egi(&["optimize"]).status.code(), Some(1));
    assert_eq!(egi(&["optimize", "/nonexistent/x.cfg"]).status.code(), Some(2));
    assert_eq!(egi(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_abort_exits_with_two_and_keeps_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "div.cfg",
        "experiment_name = d\npotential = banana_posterior\nensemble_size = 6\ninit_lower = -1\ninit_upper = 1\n\
         algorithm = egi_ls\nstep = 0.1\nn_iters = 2000\nburn_in = 0\ntrace_every = 100\n",
    );
    let out = dir.path().join("d");
    let o = egi(&["sample", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stdout));
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert!(meta["abort"]["iteration"].as_u64().unwrap() > 0);
}
