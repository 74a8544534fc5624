use std::fs;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use qkd_core::report::{read_metrics_csv, read_sweep_csv, read_tally_csv, ANALYSIS_HEADER, SWEEP_HEADER};

fn qkdsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkdsim")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const FAST: &str = "[scenario]\npreset = fast\nseed = 3\n[source]\nmu = 6\nnu1 = 1.2\nnu2 = 0.06\n";

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "fast.ini", FAST);
    let a = qkdsim(&["simulate", "--config", &cfg, "--frames", "4"]);
    let b = qkdsim(&["simulate", "--config", &cfg, "--frames", "4"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let samples = read_metrics_csv(&a.stdout[..]).unwrap();
    assert!(samples.len() >= 3);
    assert!(samples.last().unwrap().raw_bits > 0);
    assert!(stderr(&a).contains("scenario_digest = "));

    let c = qkdsim(&["simulate", "--config", &cfg, "--frames", "4", "--seed", "4"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn simulate_writes_files_and_analyze_reads_the_tally() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.ini", "[scenario]\npreset = link\n[sim]\ndetection = pulse\n");
    let metrics = dir.path().join("m.csv");
    let tally = dir.path().join("t.csv");
    let o = qkdsim(&[
        "simulate",
        "--config",
        &cfg,
        "--duration",
        "3",
        "--out",
        metrics.to_str().unwrap(),
        "--tally-out",
        tally.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let t = read_tally_csv(fs::File::open(&tally).unwrap()).unwrap();
    assert!(t.sent.iter().all(|&s| s > 0));
    assert_eq!(read_metrics_csv(fs::File::open(&metrics).unwrap()).unwrap().last().unwrap().time_ms, 3000.0);

    let a = qkdsim(&["analyze", "--tally", tally.to_str().unwrap(), "--config", &cfg]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    let text = String::from_utf8(a.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), ANALYSIS_HEADER.join(","));
    let values: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(values.len(), ANALYSIS_HEADER.len());
    assert!(values[7] > 0.0, "y1_l {}", values[7]);
}

#[test]
fn analyze_zero_count_class_is_insufficient_data() {
    let dir = tempfile::tempdir().unwrap();
    let tally = write(dir.path(), "t.csv", "class,sent,detected,errors\nmu,1000,20,1\nnu1,1000,5,0\nnu2,0,0,0\n");
    let o = qkdsim(&["analyze", "--tally", &tally]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("insufficient data"), "{}", stderr(&o));
}

#[test]
fn sweep_csv_schema_and_parallel_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "fast.ini", FAST);
    let one = qkdsim(&["sweep", "--config", &cfg, "--mu-list", "0.5,4,8", "--frames", "3"]);
    assert_eq!(code(&one), 0, "{}", stderr(&one));
    let text = String::from_utf8(one.stdout.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), SWEEP_HEADER.join(","));
    let points = read_sweep_csv(&one.stdout[..]).unwrap();
    assert_eq!(points.iter().map(|p| p.mu).collect::<Vec<_>>(), [0.5, 4.0, 8.0]);
    assert!(points[0].raw_kbps < points[1].raw_kbps && points[1].raw_kbps < points[2].raw_kbps);
    let par = qkdsim(&["sweep", "--config", &cfg, "--mu-list", "0.5,4,8", "--frames", "3", "--jobs", "3"]);
    assert_eq!(par.stdout, one.stdout);
}

#[test]
fn configuration_errors_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let nu = write(dir.path(), "nu.ini", "[source]\nmu = 0.5\nnu1 = 0.6\n");
    let o = qkdsim(&["simulate", "--config", &nu, "--frames", "1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("source.nu1"), "{}", stderr(&o));

    let malformed = write(dir.path(), "m.ini", "[source]\nmu = 0.5\nnot a pair\n");
    let o = qkdsim(&["simulate", "--config", &malformed]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let unknown = write(dir.path(), "u.ini", "[source]\nmu = 0.5\nmoo = 1\n");
    let o = qkdsim(&["simulate", "--config", &unknown]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("source.moo"), "{}", stderr(&o));

    let o = qkdsim(&["simulate", "--duration=-1"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_code_one() {
    assert_eq!(code(&qkdsim(&[])), 1);
    assert_eq!(code(&qkdsim(&["simulate", "--bogus"])), 1);
    assert_eq!(code(&qkdsim(&["simulate", "--frames", "2", "--duration", "1"])), 1);
    assert_eq!(code(&qkdsim(&["sweep", "--mu-list", "x"])), 1);
    assert_eq!(code(&qkdsim(&["simulate", "--config", "/nonexistent/file.ini"])), 1);
    assert_eq!(code(&qkdsim(&["--help"])), 0);
}

#[test]
fn decode_failure_budget_exits_with_code_four() {
    let dir = tempfile::tempdir().unwrap();
    let noisy = write(dir.path(), "n.ini", "[scenario]\npreset = fast\n[source]\nmu = 6\nnu1 = 1.2\nnu2 = 0.06\n[channel]\ne_det = 0.08\n");
    let o = qkdsim(&["simulate", "--config", &noisy, "--frames", "4", "--max-failed-blocks", "0"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("decode failure budget"), "{}", stderr(&o));
    let o = qkdsim(&["simulate", "--config", &noisy, "--frames", "4"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn netrun_without_peer_is_a_protocol_error() {
    let port = free_port();
    let o = qkdsim(&["netrun", "--role", "bob", "--connect", &format!("127.0.0.1:{port}"), "--connect-timeout", "0.2"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn netrun_pair(dir: &Path, cfg: &str, port: u16) -> (Output, Output) {
    let addr = format!("127.0.0.1:{port}");
    let alice_key = dir.join("alice.key");
    let bob_key = dir.join("bob.key");
    let alice = Command::new(env!("CARGO_BIN_EXE_qkdsim"))
        .args(["netrun", "--role", "alice", "--listen", &addr, "--config", cfg, "--frames", "4"])
        .args(["--key-out", alice_key.to_str().unwrap()])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let bob = qkdsim(&["netrun", "--role", "bob", "--connect", &addr, "--config", cfg, "--key-out", bob_key.to_str().unwrap()]);
    let alice = alice.wait_with_output().unwrap();
    (alice, bob)
}

#[test]
fn netrun_over_loopback_agrees_and_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "link.ini", "[scenario]\npreset = link\nseed = 9\n");
    let (a, b) = netrun_pair(dir.path(), &cfg, free_port());
    assert_eq!(code(&a), 0);
    assert_eq!(code(&b), 0, "{}", stderr(&b));
    let ka = fs::read_to_string(dir.path().join("alice.key")).unwrap();
    let kb = fs::read_to_string(dir.path().join("bob.key")).unwrap();
    assert_eq!(ka, kb);
    assert!(ka.starts_with("bits ") && ka.contains("\ndigest ") && ka.contains("\nkey "));
    let bits: usize = ka.lines().next().unwrap()[5..].parse().unwrap();
    assert!(bits > 0);

    let (_, b2) = netrun_pair(dir.path(), &cfg, free_port());
    assert_eq!(code(&b2), 0);
    assert_eq!(fs::read_to_string(dir.path().join("bob.key")).unwrap(), kb);
}
