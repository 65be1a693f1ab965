//! The trusted physics process.
//!
//! Qubits cannot cross a classical byte stream, so a trusted process stands
//! in for the quantum channel. Alice and Bob both connect to it. It turns
//! Alice's pulse labels into Bob's detector readings and relays the
//! classical frames (`CHALLENGE`, `REVEAL`, `VERDICT`, `ABORT`) between the
//! parties unchanged. Alice's labels never reach Bob and Bob's detector
//! readings never reach Alice.

use std::net::TcpListener;

use serde::Serialize;

use super::frame::{check_round, decode_labels, unexpected, Frame, FrameStream, Payload, Role};
use crate::error::{Error, Result};
use crate::protocol_engine::{ScenarioConfig, Simulator};
use crate::randomness::physics_rng;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SessionSummary {
    pub rounds: u64,
    pub detections: u64,
    pub accepted: u64,
    pub aborted_no_detection: u64,
    pub aborted_mismatch: u64,
    pub cheat_target: Option<u8>,
    /// Whether both parties closed the session with STATS.
    pub complete: bool,
    pub error: Option<String>,
    pub alice: Option<serde_json::Value>,
    pub bob: Option<serde_json::Value>,
}

fn handshake(stream: &mut FrameStream, frame: &Frame, role: Role, hash: &str) -> Result<Option<u8>> {
    let (peer_role, peer_hash, target) = match &frame.payload {
        Payload::Hello { role, scenario_hash, cheat_target } => (*role, scenario_hash.clone(), *cheat_target),
        _ => return Err(unexpected(frame, "HELLO")),
    };
    if peer_role != role {
        let reason = format!("expected {role:?} on this endpoint, got {peer_role:?}");
        stream.send(&Frame::new(0, Payload::Abort { reason: reason.clone() }))?;
        return Err(Error::protocol(reason));
    }
    if peer_hash != hash {
        let reason = format!("scenario hash mismatch: {peer_hash} != {hash}");
        stream.send(&Frame::new(0, Payload::Abort { reason: reason.clone() }))?;
        return Err(Error::protocol(reason));
    }
    if role == Role::Alice && target.is_some() {
        return Err(Error::protocol("cheat_target is only meaningful for Bob"));
    }
    if matches!(target, Some(t) if t > 1) {
        return Err(Error::protocol("cheat_target must be 0 or 1"));
    }
    stream.send(&Frame::new(
        0,
        Payload::Hello { role: Role::Physics, scenario_hash: hash.to_string(), cheat_target: None },
    ))?;
    Ok(target)
}

/// Runs one session between an already connected Alice and Bob.
///
/// Handshake failures are returned as errors. Anything that goes wrong
/// afterwards tears the session down and is reported in the summary, which
/// still counts the rounds completed so far.
pub fn serve_physics(
    scenario: &ScenarioConfig,
    physics_seed: u64,
    mut alice: FrameStream,
    mut bob: FrameStream,
) -> Result<SessionSummary> {
    let hello_a = alice.expect()?;
    let hello_b = bob.expect()?;
    serve_greeted(scenario, physics_seed, (alice, hello_a), (bob, hello_b))
}

/// Accepts the two parties on one listener, telling them apart by the role
/// in their HELLO, then serves the session.
pub fn serve_physics_on(
    listener: &TcpListener,
    scenario: &ScenarioConfig,
    physics_seed: u64,
) -> Result<SessionSummary> {
    let mut greeted = Vec::with_capacity(2);
    while greeted.len() < 2 {
        let (conn, _) = listener.accept()?;
        let mut stream = FrameStream::tcp(conn)?;
        let hello = stream.expect()?;
        greeted.push((stream, hello));
    }
    let role_of = |f: &Frame| match f.payload {
        Payload::Hello { role, .. } => Some(role),
        _ => None,
    };
    let second = greeted.pop().expect("two parties");
    let first = greeted.pop().expect("two parties");
    match (role_of(&first.1), role_of(&second.1)) {
        (Some(Role::Bob), Some(Role::Alice)) => serve_greeted(scenario, physics_seed, second, first),
        _ => serve_greeted(scenario, physics_seed, first, second),
    }
}

fn serve_greeted(
    scenario: &ScenarioConfig,
    physics_seed: u64,
    (mut alice, hello_a): (FrameStream, Frame),
    (mut bob, hello_b): (FrameStream, Frame),
) -> Result<SessionSummary> {
    let sim = Simulator::new(scenario)?;
    let hash = scenario.scenario_hash();
    handshake(&mut alice, &hello_a, Role::Alice, &hash)?;
    let cheat_target = handshake(&mut bob, &hello_b, Role::Bob, &hash)?;

    let mut summary = SessionSummary { cheat_target, ..Default::default() };
    if let Err(e) = relay(&sim, physics_seed, cheat_target.is_some(), &mut alice, &mut bob, &mut summary) {
        let reason = e.to_string();
        for s in [&mut alice, &mut bob] {
            let _ = s.send(&Frame::new(summary.rounds, Payload::Abort { reason: reason.clone() }));
        }
        summary.error = Some(reason);
    }
    Ok(summary)
}

fn relay(
    sim: &Simulator,
    seed: u64,
    cheat: bool,
    alice: &mut FrameStream,
    bob: &mut FrameStream,
    summary: &mut SessionSummary,
) -> Result<()> {
    let k = sim.pulses();
    let mut round = 0u64;
    loop {
        let frame = alice.expect()?;
        check_round(&frame, round)?;
        let labels = match &frame.payload {
            Payload::PulseBlock { labels } => decode_labels(labels, k)?,
            Payload::Stats { summary: s } => {
                summary.alice = Some(s.clone());
                bob.send(&Frame::new(round, Payload::Stats { summary: serde_json::json!({ "rounds": round }) }))?;
                let reply = bob.expect()?;
                match reply.payload {
                    Payload::Stats { summary: s } => summary.bob = Some(s),
                    _ => return Err(unexpected(&reply, "STATS")),
                }
                summary.complete = true;
                return Ok(());
            }
            Payload::Abort { .. } => {
                bob.send(&frame)?;
                return Err(Error::protocol("Alice aborted the session"));
            }
            _ => return Err(unexpected(&frame, "PULSE_BLOCK or STATS")),
        };

        let mut rng = physics_rng(seed, round);
        let label_at = |j: u64| Ok(labels[(j - 1) as usize]);
        let detection = if cheat {
            match sim.cheat_measure(&mut rng, label_at)? {
                Some(d) => Payload::Detection { j: Some(d.j), channel: None, outcome: Some(d.guess) },
                None => Payload::Detection { j: None, channel: None, outcome: None },
            }
        } else {
            match sim.detect(&mut rng, label_at)? {
                Some((j, _, ev)) => Payload::Detection { j: Some(j), channel: ev.channel(), outcome: None },
                None => Payload::Detection { j: None, channel: None, outcome: None },
            }
        };
        let detected = matches!(detection, Payload::Detection { j: Some(_), .. });
        bob.send(&Frame::new(round, detection))?;

        let reply = bob.expect()?;
        check_round(&reply, round)?;
        match &reply.payload {
            Payload::Verdict { accept: false, .. } if !detected => {
                alice.send(&reply)?;
                summary.aborted_no_detection += 1;
            }
            Payload::Challenge { .. } if detected => {
                summary.detections += 1;
                alice.send(&reply)?;
                let reveal = alice.expect()?;
                check_round(&reveal, round)?;
                match &reveal.payload {
                    Payload::Reveal { .. } => bob.send(&reveal)?,
                    Payload::Abort { .. } => {
                        bob.send(&reveal)?;
                        return Err(Error::protocol("Alice aborted the session"));
                    }
                    _ => return Err(unexpected(&reveal, "REVEAL")),
                }
                let verdict = bob.expect()?;
                check_round(&verdict, round)?;
                match &verdict.payload {
                    Payload::Verdict { accept: true, .. } => summary.accepted += 1,
                    Payload::Verdict { accept: false, .. } => summary.aborted_mismatch += 1,
                    _ => return Err(unexpected(&verdict, "VERDICT")),
                }
                alice.send(&verdict)?;
            }
            Payload::Abort { .. } => {
                alice.send(&reply)?;
                return Err(Error::protocol("Bob aborted the session"));
            }
            _ => return Err(unexpected(&reply, if detected { "CHALLENGE" } else { "VERDICT" })),
        }
        round += 1;
        summary.rounds = round;
    }
}
