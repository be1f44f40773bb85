//! End-to-end tests of the `glb` binary: exit codes, check lines, and
//! artifact layout.

use std::fs;
use std::process::Command;

fn glb() -> Command {
    Command::new(env!("CARGO_BIN_EXE_glb"))
}

fn write_cfg(dir: &std::path::Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.cfg");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn exit_zero_when_all_checks_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "study = minimize\nn = 2\nsites = 16\ndegree = 0\ninit = random\n\
         epsilon = 0.2\ntolerance = 1e-6\nseed = 5\n",
    );
    let out_dir = tmp.path().join("out");
    let out = glb()
        .args(["minimize", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "stdout: {stdout}");
    assert!(stdout.contains("check converged: pass"), "{stdout}");
    assert!(out_dir.join("manifest.json").exists());
    assert!(out_dir.join("state.glb1").exists());
}

#[test]
fn exit_one_when_a_check_fails() {
    // a tiny 2D clearing run cannot produce three cleared centers: the
    // curvature background keeps every off-vortex ball above the threshold
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "study = probe-clearing\nn = 2\nsites = 32\ndegree = 1\n\
         epsilon = 0.15\ntolerance = 1e-4\nseed = 2\ncenters = 4\n",
    );
    let out = glb()
        .args(["probe-clearing", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(1), "stdout: {stdout}");
    assert!(stdout.contains("FAIL"), "{stdout}");
}

#[test]
fn exit_two_on_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "study = minimize\nbogus = 1\n");
    let out = glb()
        .args(["minimize", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bogus"), "{stderr}");
}

#[test]
fn exit_two_on_study_mismatch_and_unknown_study() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "study = minimize\nn = 2\nsites = 8\n");
    let out = glb().args(["sweep", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = glb()
        .args(["frobnicate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "study = minimize\nn = 2\nsites = 16\ndegree = 0\ninit = random\n\
         epsilon = 0.2\ntolerance = 1e-6\nseed = 5\n",
    );
    let o1 = tmp.path().join("o1");
    let o2 = tmp.path().join("o2");
    let o3 = tmp.path().join("o3");
    for (dir, seed) in [(&o1, "5"), (&o2, "6"), (&o3, "6")] {
        let st = glb()
            .args(["minimize", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir)
            .args(["--seed", seed])
            .status()
            .unwrap();
        assert!(st.success());
    }
    let s1 = fs::read(o1.join("state.glb1")).unwrap();
    let s2 = fs::read(o2.join("state.glb1")).unwrap();
    let s3 = fs::read(o3.join("state.glb1")).unwrap();
    assert_ne!(s1, s2, "different seeds must change the random init");
    assert_eq!(s2, s3, "same seed must reproduce the snapshot bit-exactly");
}
