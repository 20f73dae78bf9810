use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::Duration;

use lifeserver::datastore::{SenseStore, PUBLIC_SENSE_FILE};
use serde_json::{json, Value};

fn lifeserver() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lifeserver"));
    c.env("RUST_LOG", "warn");
    c
}

fn vdp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vdp"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn configs(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let public = write(
        dir,
        "public.conf",
        "role = public\ndata_dir = public\nlisten_address = 127.0.0.1:0\npairing_code = 777777\n",
    );
    let private = write(dir, "private.conf", "role = private\ndata_dir = private\n");
    (public, private)
}

#[test]
fn vdp_cli_parse_resolve_compute() {
    let dir = tempfile::tempdir().unwrap();
    let leaf = write(
        dir.path(),
        "leaf.json",
        r#"{"version":1,"split":[{"id":"p","shares":1,"crypto":{"bitcoin":"P"}},{"id":"q","shares":1,"crypto":{"bitcoin":"Q"}}]}"#,
    );
    let leaf_url = url::Url::from_file_path(&leaf).unwrap();
    let root = write(
        dir.path(),
        "root.json",
        &format!(
            r#"{{"version":1,"description":"demo","split":[{{"id":"c","shares":97,"url":"{leaf_url}"}},{{"id":"s","shares":3,"crypto":{{"bitcoin":"S"}}}}]}}"#
        ),
    );

    let o = run(vdp().arg("parse").arg(&root));
    assert!(o.status.success());
    let parsed: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(parsed["description"], "demo");

    let o = run(vdp().arg("resolve").arg(&root));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!stdout(&o).contains("\"url\""));

    let o = run(vdp().args(["compute", "--value", "10000"]).arg(&root));
    assert!(o.status.success());
    assert_eq!(stdout(&o), "bitcoin:P\t4850\t/c/p\nbitcoin:Q\t4850\t/c/q\nbitcoin:S\t300\t/s\n");

    let o = run(vdp().args(["compute", "--value", "100", "--max-depth", "1"]).arg(&root));
    assert_eq!(o.status.code(), Some(3));
    assert!(!o.stderr.is_empty());

    let bad = write(dir.path(), "bad.json", r#"{"version":1,"crypto":{"bitcoin":"A"},"colour":"red"}"#);
    let o = run(vdp().arg("parse").arg(&bad));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));

    assert_eq!(run(vdp().arg("parse").arg(dir.path().join("missing.json"))).status.code(), Some(2));
    assert_eq!(run(vdp().arg("frobnicate")).status.code(), Some(1));
    assert_eq!(run(vdp().args(["compute"]).arg(&root)).status.code(), Some(1));
    assert_eq!(run(vdp().arg("--help")).status.code(), Some(0));

    // The same tool is reachable through the node binary.
    let o = run(lifeserver().args(["vdp", "compute", "--value", "200"]).arg(&root));
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn lifeserver_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (public, private) = configs(dir.path());

    assert_eq!(run(&mut lifeserver()).status.code(), Some(1));
    assert_eq!(run(lifeserver().arg("--help")).status.code(), Some(0));
    assert_eq!(run(lifeserver().arg("run")).status.code(), Some(1));

    let broken = write(dir.path(), "broken.conf", "role = public\ndata_dir = x\n");
    let o = run(lifeserver().args(["run", "--config"]).arg(&broken));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken.conf"));
    assert_eq!(run(lifeserver().args(["pairing-code", "--config"]).arg(dir.path().join("none.conf"))).status.code(), Some(2));

    let o = run(lifeserver().args(["pairing-code", "--config"]).arg(&public));
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "777777");
    assert_eq!(run(lifeserver().args(["pairing-code", "--config"]).arg(&private)).status.code(), Some(3));

    // Nothing is running, so nobody answers the key request.
    let o = run(lifeserver().args(["provision", "--timeout", "0.3", "--config"]).arg(&public));
    assert_eq!(o.status.code(), Some(3));
    assert!(!dir.path().join("public").join("provision.request").exists());

    let o = run(lifeserver().args(["provision", "--config"]).arg(&private));
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("key_id "));

    let o = run(lifeserver().args(["lock", "--config"]).arg(&public).arg("--config").arg(&private));
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(dir.path().join("public/channel.mode")).unwrap().trim(), "diode");
    let o = run(lifeserver().args(["provision", "--config"]).arg(&public));
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("diode"));
    assert!(run(lifeserver().args(["lock", "--unlock", "--config"]).arg(&public)).status.success());
    assert_eq!(std::fs::read_to_string(dir.path().join("public/channel.mode")).unwrap().trim(), "duplex");
}

struct Running {
    child: Child,
    base: String,
}

impl Drop for Running {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start(public: &Path, private: &Path) -> Running {
    let mut child = lifeserver()
        .arg("run")
        .arg("--config")
        .arg(public)
        .arg("--config")
        .arg(private)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let base = loop {
        let line = lines.next().expect("server exited early").unwrap();
        if let Some(url) = line.strip_prefix("public node listening on ") {
            break url.to_string();
        }
    };
    std::thread::spawn(move || for _ in lines {});
    Running { child, base }
}

fn post(agent: &ureq::Agent, url: &str, token: Option<&str>, body: Value) -> (u16, Value) {
    let mut req = agent.post(url);
    if let Some(t) = token {
        req = req.header("authorization", &format!("Bearer {t}"));
    }
    let mut resp = req.send(serde_json::to_vec(&body).unwrap()).unwrap();
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap_or_default();
    (status, serde_json::from_str(&text).unwrap_or(Value::Null))
}

#[test]
fn acknowledged_records_survive_kill_9() {
    let dir = tempfile::tempdir().unwrap();
    let (public, private) = configs(dir.path());
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();

    let mut acknowledged = Vec::new();
    {
        let server = start(&public, &private);
        let (status, cred) = post(&agent, &format!("{}/pair", server.base), None, json!({"code": "777777"}));
        assert_eq!(status, 200);
        let token = cred["token"].as_str().unwrap().to_string();
        for i in 0..200 {
            let (status, body) = post(
                &agent,
                &format!("{}/sense/v1/records", server.base),
                Some(&token),
                json!({
                    "source_id": "watch",
                    "source_vdp": {"version": 1, "crypto": {"bitcoin": "w"}},
                    "timestamp": 1000 + i,
                    "record_type": "steps",
                    "privacy": "public",
                    "fields": {"n": i},
                }),
            );
            assert_eq!(status, 200);
            acknowledged.push(body["record_id"].as_str().unwrap().to_string());
        }
        // `server` is dropped here: SIGKILL, no chance to flush anything.
    }

    let store = SenseStore::open_public(&dir.path().join("public").join(PUBLIC_SENSE_FILE)).unwrap();
    assert_eq!(store.len(), acknowledged.len());
    let stored: std::collections::HashSet<String> = store.scan().iter().map(|r| r.record_id.to_string()).collect();
    assert!(acknowledged.iter().all(|id| stored.contains(id)));
    drop(store);

    // The node restarts cleanly on the same data directory (the lock died
    // with the process) and the paired client is still known.
    let server = start(&public, &private);
    let (status, _) = post(&agent, &format!("{}/pair", server.base), None, json!({"code": "777777"}));
    assert_eq!(status, 409, "the consumed pairing code stays consumed");
    std::thread::sleep(Duration::from_millis(100));
}
