use std::path::Path;
use std::process::{Command, Output};

fn passgate(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_passgate"))
        .args(args)
        .env_clear()
        .env("PASSGATE_DATA_DIR", dir.join("server"))
        .env("PASSGATE_DEVICE_DIR", dir.join("devices"))
        .env("PASSGATE_DEVICE_SECRET", "local-test")
        .env("PASSGATE_ADMIN_SECRET", "ops")
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn scenario_suite_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = passgate(dir.path(), &["scenario", "all", "--json"]);
    let results = stdout_json(&out);
    assert_eq!(results.as_array().unwrap().len(), 6);
    assert!(results.as_array().unwrap().iter().all(|r| r["pass"] == true));

    let out = passgate(dir.path(), &["scenario", "teleport"]);
    assert_eq!(out.status.code(), Some(2));

    let out = passgate(dir.path(), &["--server", "http://127.0.0.1:9", "scenario", "replay"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unreachable"));
}

#[test]
fn enroll_then_login_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let user = stdout_json(&passgate(d, &["enroll-user", "--email", "kim@mail.example"]));
    let user = user["user_id"].as_str().unwrap();
    let phone = stdout_json(&passgate(d, &["enroll-device", "--user", user, "--kind", "smartphone"]));
    stdout_json(&passgate(d, &["enroll-device", "--user", user, "--kind", "security-key"]));
    let out = passgate(d, &["--seed", "5", "enroll-face", "--user", user]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let session = stdout_json(&passgate(d, &["login", "--user", user]));
    assert_eq!(session["state"], "complete");
    assert!(session["token"]["token"].is_string());
    let creds = stdout_json(&passgate(d, &["admin", "list", "--user", user]));
    assert_eq!(creds.as_array().unwrap().len(), 2);
    assert!(creds.as_array().unwrap().iter().all(|c| c["counter_seen"] == 1));

    let wiped = stdout_json(&passgate(d, &["admin", "wipe", "--device", phone["device_id"].as_str().unwrap()]));
    assert_eq!(wiped["wiped"], 1);
    let out = passgate(d, &["login", "--user", user]);
    assert!(!out.status.success());
}

#[test]
fn bench_delimited_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = passgate(
        dir.path(),
        &["bench", "--trials", "5", "--target-password-ms", "40", "--output", "delimited", "--seed", "3"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("table,row,label,create_ms,verify_ms,total_ms,security"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.iter().filter(|l| l.starts_with("comparison,")).count(), 4, "{text}");

    let out = passgate(dir.path(), &["bench", "--trials", "2"]);
    assert_eq!(out.status.code(), Some(2));
}
