//! End-to-end tests that drive the compiled binary the way an operator
//! would: `keygen` plus config files, TCP loopback runs, vector emission,
//! and a three-process handshake with quantum keys served over HTTP.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Output, Stdio};
use std::time::{Duration, Instant};

use muckle_core::crypto;
use muckle_core::keyschedule::{
    vectors as vector_format, KeySchedule, LabelBinding, RatsMode, Transcript,
};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_muckle"))
}

/// Kills the child when dropped so a failed assertion cannot strand a
/// background responder or KMS process.
struct ChildGuard(Child);

impl ChildGuard {
    /// Wait for a process that is expected to exit on its own.
    fn wait(&mut self) -> ExitStatus {
        self.0.wait().expect("waiting on child process")
    }
}

impl Drop for ChildGuard {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn spawn_logged(mut cmd: Command, log: &Path) -> ChildGuard {
    let out = fs::File::create(log).expect("creating log file");
    let err = out.try_clone().expect("cloning log handle");
    let child = cmd
        .stdout(Stdio::from(out))
        .stderr(Stdio::from(err))
        .spawn()
        .expect("spawning child process");
    ChildGuard(child)
}

/// Poll a child's log file until a line with the given prefix shows up.
fn wait_for_line(log: &Path, prefix: &str) -> String {
    let deadline = Instant::now() + Duration::from_secs(10);
    while Instant::now() < deadline {
        if let Ok(text) = fs::read_to_string(log) {
            if let Some(line) = text.lines().find(|l| l.starts_with(prefix)) {
                return line.to_string();
            }
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    panic!("no line starting with {prefix:?} in {}", log.display());
}

fn keygen(dir: &Path, subject: &str, seed: u64) {
    let out = bin()
        .args(["keygen", "--suite", "toy", "--subject", subject, "--issuer", "test-ca"])
        .arg("--seed")
        .arg(seed.to_string())
        .arg("--out-cert")
        .arg(dir.join(format!("{subject}.cert")))
        .arg("--out-key")
        .arg(dir.join(format!("{subject}.key")))
        .output()
        .expect("running keygen");
    assert!(
        out.status.success(),
        "keygen failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(
    dir: &Path,
    self_id: &str,
    peer_id: &str,
    trust: &[&str],
) -> PathBuf {
    let trust_list = trust
        .iter()
        .map(|t| format!("\"{t}.cert\""))
        .collect::<Vec<_>>()
        .join(", ");
    let text = format!(
        "suite = \"toy\"\n\
         self_id = \"{self_id}\"\n\
         peer_id = \"{peer_id}\"\n\
         certificate = \"{self_id}.cert\"\n\
         secret_key = \"{self_id}.key\"\n\
         trust_store = [{trust_list}]\n\
         qkd_seed = 9\n"
    );
    let path = dir.join(format!("{self_id}.toml"));
    fs::write(&path, text).expect("writing config");
    path
}

fn responder_cmd(config: &Path, max_conns: usize) -> Command {
    let mut cmd = bin();
    cmd.arg("responder")
        .arg("--config")
        .arg(config)
        .args(["--listen", "127.0.0.1:0", "--max-conns"])
        .arg(max_conns.to_string());
    cmd
}

fn run_initiator(config: &Path, addr: &str, extra: &[&str]) -> Output {
    bin()
        .arg("initiator")
        .arg("--config")
        .arg(config)
        .args(["--connect", addr])
        .args(extra)
        .output()
        .expect("running initiator")
}

fn listen_addr(line: &str) -> &str {
    line.split_whitespace().nth(2).expect("address in listen line")
}

fn fingerprint(line: &str) -> &str {
    line.rsplit(' ').next().expect("fingerprint at end of accept line")
}

#[test]
fn loopback_bench_reports_consistent_sizes_and_matching_fingerprints() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    keygen(d, "alice", 1);
    keygen(d, "bob", 2);
    let alice = write_config(d, "alice", "bob", &["bob"]);
    let bob = write_config(d, "bob", "alice", &["alice"]);

    let log = d.join("responder.log");
    let mut responder = spawn_logged(responder_cmd(&bob, 3), &log);
    let listen = wait_for_line(&log, "listening on ");

    let out = run_initiator(
        &alice,
        listen_addr(&listen),
        &["--stages", "5", "--bench", "3"],
    );
    assert!(
        out.status.success(),
        "initiator failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();

    let accepts: Vec<&str> = stdout
        .lines()
        .filter(|l| l.contains("accepted, key fingerprint"))
        .collect();
    assert_eq!(accepts.len(), 15, "one accept line per stage per run:\n{stdout}");

    let report: serde_json::Value =
        serde_json::from_str(stdout.lines().last().unwrap()).expect("last line is a JSON report");
    assert_eq!(report["suite"], "toy");
    assert_eq!(report["runs"], 3);
    assert_eq!(report["stages"], 5);
    let bytes = &report["bytes"];
    let per_message: u64 = ["m1", "m2", "m3", "m4", "m5", "m6", "m7", "m8"]
        .iter()
        .map(|k| bytes[k].as_u64().unwrap())
        .sum();
    assert_eq!(bytes["total"].as_u64().unwrap(), per_message);
    let wall = &report["wall_ms"];
    let mean = wall["mean"].as_f64().unwrap();
    let min = wall["min"].as_f64().unwrap();
    let max = wall["max"].as_f64().unwrap();
    assert!(min <= mean && mean <= max, "wall-clock stats out of order: {wall}");

    // The responder exits on its own once --max-conns connections are done.
    assert!(responder.wait().success(), "responder exited nonzero");
    let responder_log = fs::read_to_string(&log).unwrap();
    let initiator_fps: Vec<&str> = accepts.iter().map(|l| fingerprint(l)).collect();
    let responder_fps: Vec<&str> = responder_log
        .lines()
        .filter(|l| l.contains("accepted, key fingerprint"))
        .map(fingerprint)
        .collect();
    assert_eq!(
        initiator_fps, responder_fps,
        "both sides must log the same stage-key fingerprints in the same order"
    );
}

#[test]
fn endpoints_configured_for_different_peers_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    keygen(d, "alice", 1);
    keygen(d, "carol", 3);
    // Alice expects "bob"; the responder is carol. Their quantum-key links
    // cover different pairs, so the record protection never lines up and
    // the initiator must reject with a named reason instead of crashing.
    let alice = write_config(d, "alice", "bob", &["carol"]);
    let carol = write_config(d, "carol", "alice", &["alice"]);

    let log = d.join("responder.log");
    let _responder = spawn_logged(responder_cmd(&carol, 1), &log);
    let listen = wait_for_line(&log, "listening on ");

    let out = run_initiator(&alice, listen_addr(&listen), &[]);
    assert!(!out.status.success(), "handshake with the wrong peer must fail");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("handshake rejected at stage 1 (aead-failure)"),
        "stderr should name the reject reason:\n{stderr}"
    );
}

#[test]
fn config_with_a_borrowed_certificate_is_refused_at_startup() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    keygen(d, "alice", 1);
    keygen(d, "bob", 2);
    // A config claiming to be carol but presenting bob's certificate must
    // not get as far as opening a listener.
    fs::copy(d.join("bob.cert"), d.join("carol.cert")).unwrap();
    fs::copy(d.join("bob.key"), d.join("carol.key")).unwrap();
    let carol = write_config(d, "carol", "alice", &["alice"]);

    let out = responder_cmd(&carol, 1).output().expect("running responder");
    assert!(!out.status.success(), "mismatched certificate must be refused");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("does not match self_id"),
        "stderr should explain the subject mismatch:\n{stderr}"
    );
}

#[test]
fn initiator_rejects_an_untrusted_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    keygen(d, "alice", 1);
    keygen(d, "bob", 2);
    // Alice's trust store does not contain bob's certificate.
    let alice = write_config(d, "alice", "bob", &["alice"]);
    let bob = write_config(d, "bob", "alice", &["alice"]);

    let log = d.join("responder.log");
    let _responder = spawn_logged(responder_cmd(&bob, 1), &log);
    let listen = wait_for_line(&log, "listening on ");

    let out = run_initiator(&alice, listen_addr(&listen), &[]);
    assert!(!out.status.success(), "handshake with an untrusted peer must fail");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("cert-failure"),
        "stderr should name the reject reason:\n{stderr}"
    );
}

#[test]
fn vectors_require_confirmation_and_are_seed_deterministic() {
    let refused = bin().args(["vectors", "--seed", "7"]).output().unwrap();
    assert!(!refused.status.success(), "vectors must refuse without --dump-secrets");
    assert!(
        String::from_utf8_lossy(&refused.stderr).contains("--dump-secrets"),
        "refusal should tell the operator which flag to pass"
    );

    let first = bin().args(["vectors", "--seed", "7", "--dump-secrets"]).output().unwrap();
    let second = bin().args(["vectors", "--seed", "7", "--dump-secrets"]).output().unwrap();
    assert!(first.status.success());
    assert_eq!(
        first.stdout, second.stdout,
        "the same seed must reproduce the same vector file"
    );

    let other = bin().args(["vectors", "--seed", "8", "--dump-secrets"]).output().unwrap();
    assert!(other.status.success());
    assert_ne!(first.stdout, other.stdout, "different seeds must give different vectors");
}

#[test]
fn emitted_vectors_match_a_library_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vectors.txt");
    let out = bin()
        .args(["vectors", "--seed", "11", "--dump-secrets", "--vectors"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "vectors failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let text = fs::read_to_string(&path).unwrap();
    let pairs = vector_format::parse_lines(&text).expect("vector file parses");
    let map: HashMap<&str, &[u8]> =
        pairs.iter().map(|(n, v)| (n.as_str(), v.as_slice())).collect();

    // Rebuild the schedule from the recorded wire messages and input
    // secrets alone; every derived value must come out identical.
    let suite = crypto::suite("toy").unwrap();
    let mut transcript = Transcript::new(suite.hash.clone());
    for (i, name) in ["m1", "m2", "m3", "m4", "m5", "m6", "m7", "m8"].iter().enumerate() {
        transcript.record(i + 1, map[name]).unwrap();
    }
    let mut schedule = KeySchedule::new(
        suite.prf.clone(),
        LabelBinding::default(),
        RatsMode::default(),
        map["sec_state_in"].to_vec(),
    );
    schedule.set_ss_c(map["ss_c"]).unwrap();
    schedule.set_ss_pq(map["ss_pq"]).unwrap();
    schedule.set_k_q(map["k_q"]).unwrap();
    schedule.set_ss_i(map["ss_i"]).unwrap();
    schedule.set_ss_r(map["ss_r"]).unwrap();
    schedule.derive_handshake_secrets(&transcript).unwrap();
    schedule.derive_authenticated_secrets(&transcript).unwrap();
    schedule.derive_master_and_finished(&transcript).unwrap();
    schedule.derive_application_traffic(&transcript).unwrap();
    schedule.derive_final_state(&transcript).unwrap();

    let derived = schedule.derived_values();
    assert_eq!(derived.len(), 19);
    for (name, value) in derived {
        assert_eq!(
            map[name],
            value.as_slice(),
            "recomputed {name} differs from the emitted vector"
        );
    }
}

#[test]
fn http_kms_backs_a_handshake_across_three_processes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    keygen(d, "alice", 1);
    keygen(d, "bob", 2);
    let alice = write_config(d, "alice", "bob", &["bob"]);
    let bob = write_config(d, "bob", "alice", &["alice"]);

    let kms_log = d.join("kms.log");
    let mut kms_cmd = bin();
    kms_cmd.args([
        "kms",
        "--listen",
        "127.0.0.1:0",
        "--seed",
        "9",
        "--policy",
        "strict",
        "--open-link",
        "alice,bob",
    ]);
    let _kms = spawn_logged(kms_cmd, &kms_log);
    let kms_line = wait_for_line(&kms_log, "serving quantum keys on ");
    let kms_url = kms_line.trim_start_matches("serving quantum keys on ").to_string();

    let log = d.join("responder.log");
    let mut resp_cmd = responder_cmd(&bob, 1);
    resp_cmd.args(["--qkd-endpoint", &kms_url]);
    let mut responder = spawn_logged(resp_cmd, &log);
    let listen = wait_for_line(&log, "listening on ");

    let out = run_initiator(
        &alice,
        listen_addr(&listen),
        &["--qkd-endpoint", &kms_url, "--stages", "2"],
    );
    assert!(
        out.status.success(),
        "HTTP-backed handshake failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(
        stdout.lines().filter(|l| l.contains("accepted, key fingerprint")).count(),
        2,
        "expected two accepted stages:\n{stdout}"
    );
    assert!(responder.wait().success(), "responder exited nonzero");
}
