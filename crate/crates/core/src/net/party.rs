//! Alice's and Bob's halves of the protocol.

use serde::Serialize;

use super::frame::{check_round, encode_labels, unexpected, AbortReason, Frame, FrameStream, Payload, Role};
use crate::error::{Error, Result};
use crate::protocol_engine::{judge, FlipKind, ScenarioConfig};
use crate::qubit_states::StateLabel;
use crate::randomness::BitSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlipRecord {
    pub round: u64,
    pub kind: FlipKind,
    pub j: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionEnd {
    Complete,
    EntropyExhausted,
    PeerAbort,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartySummary {
    pub role: Role,
    pub rounds: u64,
    pub n_success: u64,
    pub n_zero: u64,
    pub n_one: u64,
    pub n_abort_nodetect: u64,
    pub n_abort_mismatch: u64,
    pub bits_consumed: u64,
    pub end: SessionEnd,
    /// Set for a cheating Bob.
    pub cheat_target: Option<u8>,
    #[serde(skip)]
    pub transcript: Vec<FlipRecord>,
}

impl PartySummary {
    fn new(role: Role) -> Self {
        PartySummary {
            role,
            rounds: 0,
            n_success: 0,
            n_zero: 0,
            n_one: 0,
            n_abort_nodetect: 0,
            n_abort_mismatch: 0,
            bits_consumed: 0,
            end: SessionEnd::Complete,
            cheat_target: None,
            transcript: Vec::new(),
        }
    }

    fn log(&mut self, round: u64, kind: FlipKind, j: Option<u64>) {
        match kind {
            FlipKind::Coin(0) => self.n_zero += 1,
            FlipKind::Coin(_) => self.n_one += 1,
            FlipKind::AbortNoDetection => self.n_abort_nodetect += 1,
            FlipKind::AbortMismatch => self.n_abort_mismatch += 1,
        }
        self.n_success = self.n_zero + self.n_one;
        self.rounds = round + 1;
        self.transcript.push(FlipRecord { round, kind, j });
    }

    /// Fraction of accepted flips that came out as the given bit.
    pub fn bias_toward(&self, bit: u8) -> f64 {
        let hits = if bit == 0 { self.n_zero } else { self.n_one };
        hits as f64 / self.n_success as f64
    }

    pub fn transcript_lines(&self) -> String {
        self.transcript
            .iter()
            .map(|r| {
                let kind = match r.kind {
                    FlipKind::Coin(c) => format!("coin {c}"),
                    FlipKind::AbortNoDetection => "abort no_detection".into(),
                    FlipKind::AbortMismatch => "abort mismatch".into(),
                };
                match r.j {
                    Some(j) => format!("{} {} j={}\n", r.round, kind, j),
                    None => format!("{} {}\n", r.round, kind),
                }
            })
            .collect()
    }
}

fn hello(stream: &mut FrameStream, role: Role, scenario: &ScenarioConfig, cheat_target: Option<u8>) -> Result<()> {
    stream.send(&Frame::new(0, Payload::Hello { role, scenario_hash: scenario.scenario_hash(), cheat_target }))?;
    let ack = stream.expect()?;
    match ack.payload {
        Payload::Hello { role: Role::Physics, .. } => Ok(()),
        Payload::Abort { reason } => Err(Error::protocol(format!("connection rejected: {reason}"))),
        _ => Err(unexpected(&ack, "HELLO")),
    }
}

fn summary_value(s: &PartySummary) -> serde_json::Value {
    serde_json::to_value(s).expect("summary serializes")
}

/// Alice prepares `n_flips` pulse blocks, answers challenges and checks
/// Bob's verdicts. Running out of random bits ends the session cleanly.
pub fn run_alice(
    stream: &mut FrameStream,
    scenario: &ScenarioConfig,
    bits: &mut BitSource,
    n_flips: u64,
) -> Result<PartySummary> {
    let k = scenario.pulses_per_flip;
    let mut summary = PartySummary::new(Role::Alice);
    hello(stream, Role::Alice, scenario, None)?;

    for round in 0..n_flips {
        let labels = match bits.draw_state_choices(k) {
            Ok(l) => l,
            Err(Error::EntropyExhausted { .. }) => {
                summary.end = SessionEnd::EntropyExhausted;
                break;
            }
            Err(e) => return Err(e),
        };
        stream.send(&Frame::new(round, Payload::PulseBlock { labels: encode_labels(&labels) }))?;

        let frame = stream.expect()?;
        check_round(&frame, round)?;
        match frame.payload {
            Payload::Verdict { accept: false, reason: Some(AbortReason::NoDetection), .. } => {
                summary.log(round, FlipKind::AbortNoDetection, None);
            }
            Payload::Challenge { j, b } => {
                if j < 1 || j > k {
                    let reason = format!("challenge index {j} outside [1, {k}]");
                    stream.send(&Frame::new(round, Payload::Abort { reason: reason.clone() }))?;
                    return Err(Error::protocol(reason));
                }
                if b > 1 {
                    let reason = format!("challenge bit {b} is not a bit");
                    stream.send(&Frame::new(round, Payload::Abort { reason: reason.clone() }))?;
                    return Err(Error::protocol(reason));
                }
                let sent = labels[(j - 1) as usize];
                stream.send(&Frame::new(round, Payload::Reveal { basis: sent.basis, bit: sent.bit }))?;
                let verdict = stream.expect()?;
                check_round(&verdict, round)?;
                match verdict.payload {
                    Payload::Verdict { accept: true, outcome, .. } => {
                        let coin = sent.bit ^ b;
                        if outcome != Some(coin) {
                            return Err(Error::protocol(format!(
                                "round {round}: Bob reports outcome {outcome:?}, Alice computes {coin}"
                            )));
                        }
                        summary.log(round, FlipKind::Coin(coin), Some(j));
                    }
                    Payload::Verdict { accept: false, reason: Some(AbortReason::Mismatch), .. } => {
                        summary.log(round, FlipKind::AbortMismatch, Some(j));
                    }
                    Payload::Abort { .. } => {
                        summary.end = SessionEnd::PeerAbort;
                        summary.bits_consumed = bits.bits_consumed();
                        return Ok(summary);
                    }
                    _ => return Err(unexpected(&verdict, "VERDICT")),
                }
            }
            Payload::Abort { .. } => {
                summary.end = SessionEnd::PeerAbort;
                summary.bits_consumed = bits.bits_consumed();
                return Ok(summary);
            }
            _ => return Err(unexpected(&frame, "CHALLENGE or VERDICT")),
        }
    }
    summary.bits_consumed = bits.bits_consumed();
    stream.send(&Frame::new(summary.rounds, Payload::Stats { summary: summary_value(&summary) }))?;
    Ok(summary)
}

/// Bob answers detections until Alice closes the session. With
/// `cheat_target` set he never aborts and picks `b` to steer the coin.
pub fn run_bob(
    stream: &mut FrameStream,
    scenario: &ScenarioConfig,
    bits: &mut BitSource,
    cheat_target: Option<u8>,
) -> Result<PartySummary> {
    let k = scenario.pulses_per_flip;
    let mut summary = PartySummary::new(Role::Bob);
    summary.cheat_target = cheat_target;
    hello(stream, Role::Bob, scenario, cheat_target)?;

    let mut round = 0u64;
    loop {
        let frame = match stream.recv()? {
            Some(f) => f,
            None => return Err(Error::protocol("physics disconnected")),
        };
        check_round(&frame, round)?;
        let (j, channel, outcome) = match frame.payload {
            Payload::Detection { j, channel, outcome } => (j, channel, outcome),
            Payload::Stats { .. } => {
                summary.bits_consumed = bits.bits_consumed();
                stream.send(&Frame::new(round, Payload::Stats { summary: summary_value(&summary) }))?;
                return Ok(summary);
            }
            Payload::Abort { .. } => {
                summary.end = SessionEnd::PeerAbort;
                summary.bits_consumed = bits.bits_consumed();
                return Ok(summary);
            }
            _ => return Err(unexpected(&frame, "DETECTION or STATS")),
        };

        let honest_b = if cheat_target.is_none() {
            match bits.draw_bit() {
                Ok(b) => Some(b),
                Err(Error::EntropyExhausted { consumed }) => {
                    let reason = format!("Bob's entropy exhausted after {consumed} bits");
                    stream.send(&Frame::new(round, Payload::Abort { reason }))?;
                    summary.end = SessionEnd::EntropyExhausted;
                    summary.bits_consumed = consumed;
                    return Ok(summary);
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };

        let Some(j) = j else {
            stream.send(&Frame::new(
                round,
                Payload::Verdict { accept: false, outcome: None, reason: Some(AbortReason::NoDetection) },
            ))?;
            summary.log(round, FlipKind::AbortNoDetection, None);
            round += 1;
            continue;
        };
        if j < 1 || j > k {
            return Err(Error::protocol(format!("detection index {j} outside [1, {k}]")));
        }
        let b = match (cheat_target, honest_b, outcome, channel) {
            (Some(target), _, Some(guess), _) => guess ^ target,
            (None, Some(b), _, Some(_)) => b,
            _ => return Err(Error::protocol("DETECTION payload does not match Bob's mode")),
        };
        stream.send(&Frame::new(round, Payload::Challenge { j, b }))?;

        let reveal = stream.expect()?;
        check_round(&reveal, round)?;
        let sent = match reveal.payload {
            Payload::Reveal { basis, bit } => {
                StateLabel::new(basis, bit).map_err(|e| Error::protocol(e.to_string()))?
            }
            Payload::Abort { .. } => {
                summary.end = SessionEnd::PeerAbort;
                summary.bits_consumed = bits.bits_consumed();
                return Ok(summary);
            }
            _ => return Err(unexpected(&reveal, "REVEAL")),
        };
        let kind = match channel {
            Some(ch) if cheat_target.is_none() => judge(sent, ch, b),
            _ => FlipKind::Coin(sent.bit ^ b),
        };
        let verdict = match kind {
            FlipKind::Coin(c) => Payload::Verdict { accept: true, outcome: Some(c), reason: None },
            _ => Payload::Verdict { accept: false, outcome: None, reason: Some(AbortReason::Mismatch) },
        };
        stream.send(&Frame::new(round, verdict))?;
        summary.log(round, kind, Some(j));
        round += 1;
    }
}
