use std::fs;
use std::process::Command;

fn pinning() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pinning"))
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("a.toml");
    fs::write(&cfg, "kind = \"alpha-estimate\"\nseeds = [1]\n[alpha]\nsamples = 1000\n").unwrap();
    let out = dir.path().join("out");
    let ok = pinning().args(["alpha-estimate", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap().status;
    assert_eq!(ok.code(), Some(0));
    assert!(out.join("summary.csv").exists());

    let verify = pinning().arg("verify").arg("--out").arg(&out).output().unwrap().status;
    assert_eq!(verify.code(), Some(0));

    let mismatch = pinning().args(["percolation", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(mismatch.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("kind"));

    fs::write(&cfg, "seeds = []\n").unwrap();
    let empty = pinning().args(["percolation", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap().status;
    assert_eq!(empty.code(), Some(2));

    let no_out = pinning().args(["percolation", "--seeds", "1"]).output().unwrap().status;
    assert_eq!(no_out.code(), Some(2));

    fs::write(out.join("summary.csv"), "x").unwrap();
    let tampered = pinning().arg("verify").arg("--out").arg(&out).output().unwrap().status;
    assert_eq!(tampered.code(), Some(3));
}

#[test]
fn run_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    // dense negatives close every box, so no surface exists and the build fails
    fs::write(&cfg, "seeds = [0]\n[continuum]\ncolumns = 3\nrows = 2\nlambda_minus = 50.0\nscales = { l = 2.0, b = 0.1, n = 1, rho = 1e-4 }\n").unwrap();
    let out = dir.path().join("out");
    let st = pinning().args(["continuum-build", "--jobs", "1", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap().status;
    assert_eq!(st.code(), Some(3));
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(csv.contains("false"));
}
