use std::path::Path;
use std::process::{Command, Output};

fn ecppdm(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecppdm"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn stage_by_stage_matches_pipeline() {
    let staged = tempfile::tempdir().unwrap();
    for cmd in ["keygen", "send", "receive", "etl", "perturb", "mine"] {
        let o = ecppdm(staged.path(), &[cmd]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let whole = tempfile::tempdir().unwrap();
    let o = ecppdm(whole.path(), &["pipeline"]);
    assert!(o.status.success());
    let report = |d: &Path| std::fs::read_to_string(d.join("report/report.csv")).unwrap();
    assert_eq!(report(staged.path()), report(whole.path()));
    assert!(report(whole.path()).starts_with("records,original_rules,perturbed_rules,recovery_percent"));

    let printed = ecppdm(whole.path(), &["report"]);
    assert!(printed.status.success());
    assert!(stdout(&printed).contains("800"));
}

#[test]
fn seed_override_changes_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(ecppdm(a.path(), &["pipeline"]).status.success());
    assert!(ecppdm(b.path(), &["--seed", "9", "pipeline"]).status.success());
    let keys = |d: &Path| std::fs::read(d.join("keys/warehouse.pub")).unwrap();
    assert_ne!(keys(a.path()), keys(b.path()));
}

#[test]
fn single_source_send() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ecppdm(dir.path(), &["keygen"]).status.success());
    let o = ecppdm(dir.path(), &["send", "--source", "S2"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "sent S2");
    assert!(dir.path().join("dropbox/S2.ecp").exists());
    assert!(!dir.path().join("dropbox/S1.ecp").exists());
}

#[test]
fn empty_receive_warns() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ecppdm(dir.path(), &["keygen"]).status.success());
    let o = ecppdm(dir.path(), &["receive"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no batches arrived"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // missing keys
    assert_eq!(ecppdm(dir.path(), &["send"]).status.code(), Some(4));
    // nothing staged
    assert_eq!(ecppdm(dir.path(), &["etl"]).status.code(), Some(4));
    let missing = dir.path().join("nope.toml");
    let o = ecppdm(dir.path(), &["--config", missing.to_str().unwrap(), "keygen"]);
    assert_eq!(o.status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[mining]\nminsup = 1.5\n").unwrap();
    let o = ecppdm(dir.path(), &["--config", bad.to_str().unwrap(), "keygen"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("minsup"));

    // stream mode with nobody listening
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let stream = dir.path().join("stream.toml");
    std::fs::write(&stream, format!("[warehouse]\ntransport = \"stream\"\nendpoint = \"127.0.0.1:{port}\"\n")).unwrap();
    let cfg = stream.to_str().unwrap();
    assert!(ecppdm(dir.path(), &["--config", cfg, "keygen"]).status.success());
    assert_eq!(ecppdm(dir.path(), &["--config", cfg, "send"]).status.code(), Some(3));
}
