use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::Arc;

use serde_json::Value;
use sha2::{Digest, Sha256};

use diwsim::protocol::{decode_obs, ServerContext, Session, OBS_VALUES};
use diwsim::server::serve_tcp;

const SCRIPT: &[&str] = &[
    r#"{"cmd":"step","action":[0.0,0.0]}"#,
    r#"{"cmd":"reset","slice":"procedural:2","seed":5,"config":{"settle_time_end":0.1}}"#,
    r#"{"cmd":"step","action":[0.0,0.0]}"#,
    r#"{"cmd":"step","action":[0.5,-0.25]}"#,
    r#"not json"#,
    r#"{"cmd":"step","action":[2.0,0.0]}"#,
    r#"{"cmd":"step","action":[-1.0,1.0]}"#,
    r#"{"cmd":"close"}"#,
];

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/serve_transcript.jsonl")
}

/// Replaces observation payloads by their SHA-256 so the transcript stays
/// readable. Works on the raw line to keep the key order visible.
fn digest_obs(line: &str) -> String {
    let Some(start) = line.find(r#""obs":""#).map(|k| k + 7) else {
        return line.to_string();
    };
    let end = start + line[start..].find('"').unwrap();
    let hash = Sha256::digest(line[start..end].as_bytes());
    let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
    format!("{}sha256:{hex}{}", &line[..start], &line[end..])
}

/// Positions of `keys` in the raw line must increase.
fn assert_key_order(line: &str, keys: &[&str]) {
    let pos: Vec<usize> = keys.iter().map(|k| line.find(&format!("\"{k}\":")).unwrap_or_else(|| panic!("{k} missing in {line}"))).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]), "{keys:?} out of order in {line}");
}

fn transcript(lines: &[String]) -> String {
    SCRIPT
        .iter()
        .zip(lines)
        .map(|(req, resp)| format!("-> {req}\n<- {}\n", digest_obs(resp)))
        .collect()
}

#[test]
fn stdio_transcript_matches_golden() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_diwsim"))
        .args(["serve", "--transport", "stdio"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let stdin = child.stdin.as_mut().unwrap();
        for line in SCRIPT {
            writeln!(stdin, "{line}").unwrap();
        }
    }
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let lines: Vec<String> = String::from_utf8(out.stdout).unwrap().lines().map(String::from).collect();
    assert_eq!(lines.len(), SCRIPT.len());
    let got = transcript(&lines);
    let path = golden_path();
    if std::env::var_os("DIWSIM_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &got).unwrap();
    }
    let want = std::fs::read_to_string(&path).expect("golden transcript missing; rerun with DIWSIM_BLESS=1");
    assert_eq!(got, want);
}

#[test]
fn transcript_contract() {
    let ctx = ServerContext::default();
    let mut s = Session::new(&ctx);
    let raw: Vec<String> = SCRIPT.iter().map(|l| s.handle_line(l)).collect();
    let replies: Vec<Value> = raw.iter().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(replies[0]["error"].as_str().unwrap().split(':').next(), Some("NoEpisode"));
    let reset = &replies[1];
    assert_eq!(reset.as_object().unwrap().len(), 2);
    assert_key_order(&raw[1], &["obs", "info"]);
    assert_eq!(decode_obs(reset["obs"].as_str().unwrap()).unwrap().len(), OBS_VALUES);
    assert_eq!(reset["info"]["progress"], 0.0);
    assert_eq!(replies[2].as_object().unwrap().len(), 4);
    assert_eq!(replies[2]["info"].as_object().unwrap().len(), 2);
    assert_key_order(&digest_obs(&raw[2]), &["obs", "reward", "done", "info", "bed_reward", "progress"]);
    assert!(replies[4]["error"].as_str().unwrap().starts_with("BadRequest: "));
    // the session survives the malformed line
    assert!(replies[5]["obs"].is_string());
    assert_eq!(replies[5]["info"]["clamped"], true);
    assert!(replies[6]["info"].get("clamped").is_none());
    assert_eq!(replies[7], serde_json::json!({"ok": true}));
    assert!(s.is_closed());
}

#[test]
fn clamped_action_equals_the_unit_box_action() {
    let ctx = ServerContext::default();
    let reset = r#"{"cmd":"reset","slice":"procedural:4","seed":1}"#;
    let mut a = Session::new(&ctx);
    let mut b = Session::new(&ctx);
    a.handle_line(reset);
    b.handle_line(reset);
    let ra: Value = serde_json::from_str(&a.handle_line(r#"{"cmd":"step","action":[2.0,0.0]}"#)).unwrap();
    let rb: Value = serde_json::from_str(&b.handle_line(r#"{"cmd":"step","action":[1.0,0.0]}"#)).unwrap();
    assert_eq!(ra["info"]["clamped"], true);
    assert_eq!(ra["obs"], rb["obs"]);
    assert_eq!(ra["reward"], rb["reward"]);
}

#[test]
fn request_errors() {
    let ctx = ServerContext::default();
    let mut s = Session::new(&ctx);
    let code = |s: &mut Session, line: &str| -> String {
        let v: Value = serde_json::from_str(&s.handle_line(line)).unwrap();
        v["error"].as_str().map(|e| e.split(':').next().unwrap().to_string()).unwrap_or_default()
    };
    assert_eq!(code(&mut s, r#"{"cmd":"jump"}"#), "BadRequest");
    assert_eq!(code(&mut s, r#"{"cmd":"step","action":[1.0]}"#), "BadRequest");
    assert_eq!(code(&mut s, r#"{"cmd":"reset","slice":"procedural:1","extra":1}"#), "BadRequest");
    assert_eq!(code(&mut s, r#"{"cmd":"reset","slice":"no/such/slice.json"}"#), "UnknownSlice");
    assert_eq!(code(&mut s, r#"{"cmd":"reset","slice":"procedural:x"}"#), "UnknownSlice");
    assert_eq!(code(&mut s, r#"{"cmd":"reset","slice":"procedural:1","config":{"pressure":-1}}"#), "InvalidConfig");
    assert_eq!(code(&mut s, r#"{"cmd":"reset","slice":"procedural:1","config":{"warp":1}}"#), "InvalidConfig");
    assert_eq!(
        code(&mut s, r#"{"cmd":"reset","slice":"procedural:1","config":{"observation":{"pixels":64,"mask_px":8}}}"#),
        "InvalidConfig"
    );
    let dir = tempfile::tempdir().unwrap();
    let tiny = dir.path().join("tiny.json");
    std::fs::write(&tiny, r#"{"outer":[[10,10],[10.2,10],[10.2,10.2],[10,10.2]]}"#).unwrap();
    let reset = format!(r#"{{"cmd":"reset","slice":{:?}}}"#, tiny.to_str().unwrap());
    assert_eq!(code(&mut s, &reset), "UnprintableSlice");
    assert_eq!(code(&mut s, r#"{"cmd":"step","action":[0.0,0.0]}"#), "NoEpisode");
}

#[test]
fn finished_episode_refuses_steps() {
    let ctx = ServerContext::default();
    let mut s = Session::new(&ctx);
    let r: Value = serde_json::from_str(&s.handle_line(r#"{"cmd":"reset","slice":"procedural:6","config":{"settle_time_end":0.0}}"#)).unwrap();
    let n = r["info"]["total_steps"].as_u64().unwrap();
    let mut last = Value::Null;
    for _ in 0..n {
        last = serde_json::from_str(&s.handle_line(r#"{"cmd":"step","action":[1.0,0.0]}"#)).unwrap();
    }
    assert_eq!(last["done"], true);
    assert_eq!(last["info"]["progress"], 1.0);
    let v: Value = serde_json::from_str(&s.handle_line(r#"{"cmd":"step","action":[1.0,0.0]}"#)).unwrap();
    assert!(v["error"].as_str().unwrap().starts_with("EpisodeFinished"));
}

#[test]
fn episode_config_merges_partially() {
    let ctx = ServerContext::default();
    let mut s = Session::new(&ctx);
    s.handle_line(r#"{"cmd":"reset","slice":"procedural:1","config":{"mode":"infill","sim":{"solver_iters":2},"flow":{"mode":"sine","amplitude":0.3,"period":1.0}}}"#);
    let e = s.env().unwrap().config();
    assert_eq!(e.sim.solver_iters, 2);
    assert_eq!(e.sim.dt, 1.0 / 240.0);
    assert_eq!(e.mode, diwsim_core::env::PrintMode::Infill);
}

fn session_lines(k: u64) -> Vec<String> {
    vec![
        format!(r#"{{"cmd":"reset","slice":"procedural:{k}","seed":{k}}}"#),
        r#"{"cmd":"step","action":[0.3,0.1]}"#.into(),
        r#"{"cmd":"step","action":[-0.4,-0.2]}"#.into(),
        r#"{"cmd":"close"}"#.into(),
    ]
}

fn tcp_session(addr: std::net::SocketAddr, lines: &[String]) -> Vec<String> {
    let stream = TcpStream::connect(addr).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut writer = stream;
    lines
        .iter()
        .map(|l| {
            writeln!(writer, "{l}").unwrap();
            let mut reply = String::new();
            reader.read_line(&mut reply).unwrap();
            reply.trim_end().to_string()
        })
        .collect()
}

fn spawn_server() -> std::net::SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || serve_tcp(Arc::new(ServerContext::default()), listener));
    addr
}

#[test]
fn sequential_sessions_do_not_leak_state() {
    let addr = spawn_server();
    let ctx = ServerContext::default();
    let mut first = None;
    for k in 0..9u64 {
        // the ninth session repeats the first
        let lines = session_lines(k % 8);
        let got = tcp_session(addr, &lines);
        let mut fresh = Session::new(&ctx);
        let want: Vec<String> = lines.iter().map(|l| fresh.handle_line(l)).collect();
        assert_eq!(got, want, "session {k}");
        if k == 0 {
            first = Some(got);
        } else if k == 8 {
            assert_eq!(Some(got), first);
        }
    }
}

#[test]
fn concurrent_connections_are_independent() {
    let addr = spawn_server();
    let handles: Vec<_> = (0..3u64)
        .map(|k| std::thread::spawn(move || (k, tcp_session(addr, &session_lines(10 + k)))))
        .collect();
    let ctx = ServerContext::default();
    for h in handles {
        let (k, got) = h.join().unwrap();
        let mut fresh = Session::new(&ctx);
        let want: Vec<String> = session_lines(10 + k).iter().map(|l| fresh.handle_line(l)).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn resets_within_a_session_start_fresh() {
    let ctx = ServerContext::default();
    let mut s = Session::new(&ctx);
    let lines = session_lines(3);
    let a: Vec<String> = lines[..3].iter().map(|l| s.handle_line(l)).collect();
    let b: Vec<String> = lines[..3].iter().map(|l| s.handle_line(l)).collect();
    assert_eq!(a, b);
}
