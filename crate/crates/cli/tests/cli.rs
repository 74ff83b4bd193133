use std::process::Command;

fn feec() -> Command {
    Command::new(env!("CARGO_BIN_EXE_feec"))
}

#[test]
fn list_prints_every_id() {
    let out = feec().arg("--list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 11);
    assert!(text.lines().any(|l| l == "elasticity-aw"));
}

#[test]
fn unknown_id_is_an_error() {
    let out = feec().arg("fig42").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runs_and_writes_verdict() {
    let dir = std::env::temp_dir().join(format!("feec-cli-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    let out = feec().args(["fig1-1d-primal", "--out"]).arg(&dir).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let verdict = std::fs::read_to_string(dir.join("verdict.json")).unwrap();
    assert!(verdict.contains("\"pass\": true"));
    std::fs::remove_dir_all(&dir).unwrap();
}
