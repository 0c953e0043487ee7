use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn fab(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fab"))
        .current_dir(cwd)
        .env_remove("FAB_DIRECTORY")
        .env_remove("FAB_KEYS")
        .env_remove("FAB_DEPTH")
        .env_remove("FAB_BACKEND")
        .env_remove("FAB_CONFIG")
        .args(args)
        .output()
        .expect("spawn fab")
}

fn ok(cwd: &Path, args: &[&str]) -> Value {
    let out = fab(cwd, args);
    assert!(
        out.status.success(),
        "fab {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    serde_json::from_str(text.lines().last().unwrap_or("null")).unwrap()
}

fn failure(cwd: &Path, args: &[&str]) -> (i32, Value) {
    let out = fab(cwd, args);
    assert!(!out.status.success(), "fab {args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    (out.status.code().unwrap(), serde_json::from_str(err.trim()).unwrap())
}

fn init(cwd: &Path) {
    std::fs::write(cwd.join("fab.toml"), "directory = \"file:dir\"\ndepth = 8\nbackend = \"reference\"\n").unwrap();
    ok(cwd, &["--config", "fab.toml", "setup", "--seed", "1"]);
    ok(cwd, &["--config", "fab.toml", "ip", "init", "--seed", "2"]);
    ok(cwd, &["--config", "fab.toml", "directory", "put-keys"]);
}

#[test]
fn block_then_reject_then_unblock() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    init(d);
    let c = ["--config", "fab.toml"];
    let run = |args: &[&str]| ok(d, &[&c[..], args].concat());

    run(&["realm", "create", "--id", "forum"]);
    run(&["realm", "create", "--id", "wiki"]);
    run(&["user", "register", "--out", "alice.json"]);
    let r = run(&["realm", "trust", "--id", "forum", "--other", "wiki"]);
    assert_eq!(r["epoch"], 1);

    let r = run(&["user", "auth", "--cred", "alice.json", "--target", "forum", "--out", "b.json"]);
    assert_eq!(r["block_proofs"], 1);
    let r = run(&["verify", "--bundle", "b.json", "--realm", "forum"]);
    assert_eq!(r["result"], "accept");

    // Blocking in the trusted realm invalidates the old bundle and prevents a new one.
    run(&["realm", "block", "--id", "wiki", "--user", "alice.json"]);
    let (code, err) = failure(d, &[&c[..], &["verify", "--bundle", "b.json", "--realm", "forum"]].concat());
    assert_eq!((code, &err["reason"], &err["realm"]), (2, &"EpochMismatch".into(), &"wiki".into()));
    let (code, err) =
        failure(d, &[&c[..], &["user", "auth", "--cred", "alice.json", "--target", "forum", "--out", "b.json"]].concat());
    assert_eq!((code, &err["error"]), (2, &"Blocked".into()));

    // Pseudonym lookup through the directory matches the one the verifier saw.
    let ps = run(&["user", "pseudonym", "--cred", "alice.json", "--realm", "wiki"]);
    run(&["realm", "unblock", "--id", "wiki", "--pseudonym", ps["pseudonym"].as_str().unwrap()]);
    run(&["user", "auth", "--cred", "alice.json", "--target", "forum", "--out", "b.json"]);
    run(&["verify", "--bundle", "b.json", "--realm", "forum"]);
}

#[test]
fn deferred_changes_publish_as_one_epoch() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    init(d);
    let c = ["--config", "fab.toml"];
    let run = |args: &[&str]| ok(d, &[&c[..], args].concat());

    run(&["realm", "create", "--id", "r1"]);
    run(&["realm", "create", "--id", "r2"]);
    run(&["user", "register", "--out", "u.json"]);
    run(&["realm", "trust", "--id", "r1", "--other", "r2", "--defer"]);
    let q = run(&["realm", "block", "--id", "r1", "--user", "u.json", "--defer"]);
    assert_eq!(q["queued"], 2);
    let shown = run(&["realm", "show", "--id", "r1"]);
    assert_eq!(shown["epoch"], 0);
    let r = run(&["realm", "publish", "--id", "r1"]);
    assert_eq!(r["epoch"], 1);
    assert_eq!(r["applied"], serde_json::json!([true, true]));
    let listing = run(&["directory", "list"]);
    assert_eq!(listing["realms"][0]["epoch"], 1);

    let (code, err) = failure(d, &[&c[..], &["realm", "publish", "--id", "r1"]].concat());
    assert_eq!(code, 1);
    assert!(err["message"].as_str().unwrap().contains("nothing to publish"));
}

#[test]
fn errors_are_json_on_stderr() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let (code, err) = failure(d, &["realm", "show", "--id", "x"]);
    assert_eq!(code, 1);
    assert!(err["message"].as_str().unwrap().contains("fab setup"));

    init(d);
    let (code, err) = failure(d, &["--config", "fab.toml", "verify", "--bundle", "none.json", "--realm", "x"]);
    assert_eq!(code, 1);
    assert_eq!(err["error"], "Error");

    let c = ["--config", "fab.toml"];
    ok(d, &[&c[..], &["realm", "create", "--id", "a"]].concat());
    let (code, err) = failure(d, &[&c[..], &["realm", "trust", "--id", "a", "--other", "ghost"]].concat());
    assert_eq!(code, 1);
    assert!(err["message"].as_str().unwrap().contains("ghost"));
}

#[test]
fn group_script_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/federation.jsonl");
    let out = fab(tmp.path(), &["group", "run", script.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let last: Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["failed"], 0);
    assert!(text.lines().rev().skip(1).all(|l| serde_json::from_str::<Value>(l).unwrap()["passed"] == true));

    let bad = tmp.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        "{\"op\":\"setup\"}\n{\"op\":\"register-user\",\"user\":\"a\"}\n{\"op\":\"create-group\",\"group\":\"g\",\"founder\":\"a\"}\n{\"op\":\"assert\",\"group\":\"g\",\"check\":\"member_count\",\"expect\":5}\n",
    )
    .unwrap();
    let out = fab(tmp.path(), &["group", "run", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn directory_over_tcp() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    init(d);
    let mut server = Command::new(env!("CARGO_BIN_EXE_fab"))
        .current_dir(d)
        .args(["--config", "fab.toml", "directory", "serve", "--listen", "127.0.0.1:0", "--store", "tcpstore"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = serde_json::from_str::<Value>(&line).unwrap()["listening"].as_str().unwrap().to_string();

    let c = ["--config", "fab.toml", "--directory", addr.as_str()];
    let run = |args: &[&str]| ok(d, &[&c[..], args].concat());
    run(&["realm", "create", "--id", "t"]);
    run(&["user", "register", "--out", "u.json"]);
    run(&["user", "auth", "--cred", "u.json", "--target", "t", "--out", "b.json"]);
    // Verifier keys come from the directory when none are local.
    std::fs::create_dir(d.join("nokeys-but-params")).unwrap();
    std::fs::copy(d.join("keys/params.json"), d.join("nokeys-but-params/params.json")).unwrap();
    let r = ok(d, &["--config", "fab.toml", "--directory", &addr, "--keys", "nokeys-but-params", "verify", "--bundle", "b.json", "--realm", "t"]);
    assert_eq!(r["result"], "accept");
    server.kill().unwrap();
    server.wait().unwrap();
}
