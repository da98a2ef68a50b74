//! TCP endpoints: message framing, the serving responder, and the
//! initiator's handshake runner with its byte/timing report.
//!
//! One TCP connection carries one session; the protocol's own framing (a
//! type byte plus a 24-bit body length) delimits messages on the stream, so
//! nothing sits between the handshake bytes and the socket. The responder
//! serves each connection from its own thread; the initiator runs
//! sequentially and measures wall-clock time per handshake. Neither side
//! prints key material — accept lines carry a one-way fingerprint of the
//! stage key so two logs can be compared.

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use rand::rngs::OsRng;
use serde::Serialize;

use muckle_core::protocol::{Session, SessionConfig};
use muckle_core::qkd::QkdClient;
use muckle_core::wire::MSG_HEADER_LEN;

use crate::config::Endpoint;

/// Read one framed message, or `None` on a clean close at a boundary.
pub fn read_wire_message(stream: &mut TcpStream) -> io::Result<Option<Vec<u8>>> {
    let mut header = [0u8; MSG_HEADER_LEN];
    let mut filled = 0;
    while filled < header.len() {
        let n = stream.read(&mut header[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(None);
            }
            return Err(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                "connection closed mid-message",
            ));
        }
        filled += n;
    }
    let body_len = u32::from_be_bytes([0, header[1], header[2], header[3]]) as usize;
    let mut msg = vec![0u8; MSG_HEADER_LEN + body_len];
    msg[..MSG_HEADER_LEN].copy_from_slice(&header);
    stream.read_exact(&mut msg[MSG_HEADER_LEN..])?;
    Ok(Some(msg))
}

pub fn write_wire_message(stream: &mut TcpStream, msg: &[u8]) -> io::Result<()> {
    stream.write_all(msg)?;
    stream.flush()
}

/// One-way stage-key fingerprint for log lines; reveals nothing useful
/// about the key itself.
fn fingerprint(endpoint_suite_hash: &dyn muckle_core::crypto::HashScheme, key: &[u8]) -> String {
    let mut input = b"stage key fingerprint".to_vec();
    input.extend_from_slice(key);
    hex::encode(&endpoint_suite_hash.hash(&input)[..8])
}

fn reject_error(session: &Session, err: muckle_core::ProtocolError) -> anyhow::Error {
    let code = session
        .reject_reason()
        .map(|r| r.code())
        .unwrap_or("protocol-error");
    anyhow::Error::new(err).context(format!(
        "handshake rejected at stage {} ({code})",
        session.current_stage()
    ))
}

/// Accept and serve connections until `max_conns` (if given) have been
/// handled. Prints a `listening on <addr>` line first so a parent process
/// can discover a port chosen by the OS.
pub fn serve_responder(endpoint: Endpoint, listen: &str, max_conns: Option<usize>) -> Result<()> {
    let listener =
        TcpListener::bind(listen).with_context(|| format!("binding listener on {listen}"))?;
    println!(
        "listening on {} as {:?} (suite {}, qkd {})",
        listener.local_addr()?,
        endpoint.self_id(),
        endpoint.suite.id,
        endpoint.qkd_endpoint
    );
    let config = endpoint.session_config;
    let qkd = endpoint.qkd;
    let mut workers = Vec::new();
    let mut served = 0usize;
    while max_conns.is_none_or(|max| served < max) {
        let (stream, peer) = listener.accept().context("accepting a connection")?;
        served += 1;
        let config = config.clone();
        let qkd = Arc::clone(&qkd);
        workers.push(std::thread::spawn(move || {
            match handle_connection(stream, config, qkd) {
                Ok(stages) => println!("[{peer}] closed after {stages} accepted stage(s)"),
                Err(err) => println!("[{peer}] failed: {err:#}"),
            }
        }));
    }
    for worker in workers {
        let _ = worker.join();
    }
    Ok(())
}

fn handle_connection(
    mut stream: TcpStream,
    config: SessionConfig,
    qkd: Arc<dyn QkdClient>,
) -> Result<u32> {
    let peer = stream.peer_addr()?;
    let hash = Arc::clone(&config.suite.hash);
    let mut session = Session::new_responder(config, qkd);
    let mut accepted = 0u32;
    loop {
        let Some(msg) = read_wire_message(&mut stream)? else {
            break;
        };
        let outs = match session.process(&msg, &mut OsRng) {
            Ok(outs) => outs,
            Err(err) => {
                let failure = reject_error(&session, err);
                println!("[{peer}] {failure:#}");
                return Err(failure);
            }
        };
        for out in outs {
            write_wire_message(&mut stream, &out)?;
        }
        if session.accepted_stages() > accepted {
            accepted = session.accepted_stages();
            let output = session
                .stage_output(accepted)
                .expect("accepted stage has an output");
            println!(
                "[{peer}] stage {accepted} accepted, key fingerprint {}",
                fingerprint(hash.as_ref(), &output.key)
            );
        }
    }
    Ok(accepted)
}

#[derive(Debug, Serialize)]
pub struct BytesReport {
    pub m1: usize,
    pub m2: usize,
    pub m3: usize,
    pub m4: usize,
    pub m5: usize,
    pub m6: usize,
    pub m7: usize,
    pub m8: usize,
    pub total: usize,
}

#[derive(Debug, Serialize)]
pub struct WallMs {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub suite: String,
    pub runs: usize,
    pub stages: u32,
    pub bytes: BytesReport,
    pub wall_ms: WallMs,
}

/// Run `runs` sequential handshakes of `stages` stages each and aggregate
/// the byte and timing measurements. Byte counts must be identical across
/// stages and runs; a divergence is reported as an error.
pub fn run_initiator(
    endpoint: &Endpoint,
    connect: &str,
    stages: u32,
    runs: usize,
) -> Result<BenchReport> {
    ensure!(stages >= 1, "--stages must be at least 1");
    ensure!(runs >= 1, "--bench must be at least 1");
    let mut durations: Vec<Duration> = Vec::with_capacity(runs);
    let mut sizes: Option<Vec<usize>> = None;
    for _ in 0..runs {
        let started = Instant::now();
        let run_sizes = run_handshake(endpoint, connect, stages)?;
        durations.push(started.elapsed());
        match &sizes {
            None => sizes = Some(run_sizes),
            Some(prev) => ensure!(
                *prev == run_sizes,
                "wire sizes changed between runs: {prev:?} then {run_sizes:?}"
            ),
        }
    }
    let sizes = sizes.expect("at least one run");
    let ms: Vec<f64> = durations.iter().map(|d| d.as_secs_f64() * 1e3).collect();
    Ok(BenchReport {
        suite: endpoint.suite.id.clone(),
        runs,
        stages,
        bytes: BytesReport {
            m1: sizes[0],
            m2: sizes[1],
            m3: sizes[2],
            m4: sizes[3],
            m5: sizes[4],
            m6: sizes[5],
            m7: sizes[6],
            m8: sizes[7],
            total: sizes.iter().sum(),
        },
        wall_ms: WallMs {
            mean: ms.iter().sum::<f64>() / ms.len() as f64,
            min: ms.iter().copied().fold(f64::INFINITY, f64::min),
            max: ms.iter().copied().fold(0.0, f64::max),
        },
    })
}

/// One connection, one session, `stages` completed stages. Returns the
/// per-message wire sizes of a single stage.
fn run_handshake(endpoint: &Endpoint, connect: &str, stages: u32) -> Result<Vec<usize>> {
    let mut stream =
        TcpStream::connect(connect).with_context(|| format!("connecting to {connect}"))?;
    let hash = Arc::clone(&endpoint.suite.hash);
    let mut session = Session::new_initiator(
        endpoint.session_config.clone(),
        Arc::clone(&endpoint.qkd),
    );
    let mut stage_sizes: Option<Vec<usize>> = None;
    for stage in 1..=stages {
        let mut sizes = Vec::with_capacity(8);
        let outs = match session.start(&mut OsRng) {
            Ok(outs) => outs,
            Err(err) => return Err(reject_error(&session, err)),
        };
        for out in outs {
            sizes.push(out.len());
            write_wire_message(&mut stream, &out)?;
        }
        while session.accepted_stages() < stage {
            let msg = read_wire_message(&mut stream)?
                .context("peer closed the connection mid-handshake")?;
            sizes.push(msg.len());
            let outs = match session.process(&msg, &mut OsRng) {
                Ok(outs) => outs,
                Err(err) => return Err(reject_error(&session, err)),
            };
            for out in outs {
                sizes.push(out.len());
                write_wire_message(&mut stream, &out)?;
            }
        }
        ensure!(sizes.len() == 8, "a stage exchanges exactly eight messages");
        let output = session
            .stage_output(stage)
            .expect("accepted stage has an output");
        println!(
            "stage {stage} accepted, key fingerprint {}",
            fingerprint(hash.as_ref(), &output.key)
        );
        match &stage_sizes {
            None => stage_sizes = Some(sizes),
            Some(prev) => ensure!(
                *prev == sizes,
                "wire sizes changed between stages: {prev:?} then {sizes:?}"
            ),
        }
    }
    Ok(stage_sizes.expect("at least one stage"))
}

/// Human-readable table followed by the one-line JSON report.
pub fn print_report(report: &BenchReport) -> Result<()> {
    println!("suite     {}", report.suite);
    println!("runs      {}", report.runs);
    println!("stages    {}", report.stages);
    let b = &report.bytes;
    println!(
        "bytes     m1 {}  m2 {}  m3 {}  m4 {}  m5 {}  m6 {}  m7 {}  m8 {}  (total {} per stage)",
        b.m1, b.m2, b.m3, b.m4, b.m5, b.m6, b.m7, b.m8, b.total
    );
    println!(
        "wall ms   mean {:.3}  min {:.3}  max {:.3}",
        report.wall_ms.mean, report.wall_ms.min, report.wall_ms.max
    );
    println!("cycles    unavailable (hardware-specific; wall-clock only)");
    println!("{}", serde_json::to_string(report)?);
    Ok(())
}
