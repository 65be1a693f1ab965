//! Line-delimited JSON frames.
//!
//! Every frame is one UTF-8 line:
//!
//! ```text
//! {"v":1,"round_id":3,"type":"CHALLENGE","j":17,"b":1}
//! ```

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::os::unix::net::UnixStream;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubit_states::StateLabel;

pub const PROTOCOL_VERSION: u32 = 1;

pub const FRAME_TYPES: [&str; 8] =
    ["HELLO", "PULSE_BLOCK", "DETECTION", "CHALLENGE", "REVEAL", "VERDICT", "ABORT", "STATS"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Alice,
    Bob,
    Physics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    NoDetection,
    Mismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum Payload {
    Hello {
        role: Role,
        scenario_hash: String,
        /// Set by a cheating Bob: the bit he tries to force.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cheat_target: Option<u8>,
    },
    /// Alice's K labels for one flip, one digit `2 * basis + bit` per pulse.
    PulseBlock {
        labels: String,
    },
    /// What Bob's detectors saw. Honest Bob gets `channel`; a cheating Bob
    /// measuring in the computational basis gets `outcome`.
    Detection {
        j: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        channel: Option<StateLabel>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        outcome: Option<u8>,
    },
    Challenge {
        j: u64,
        b: u8,
    },
    Reveal {
        basis: u8,
        bit: u8,
    },
    Verdict {
        accept: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        outcome: Option<u8>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<AbortReason>,
    },
    Abort {
        reason: String,
    },
    Stats {
        summary: serde_json::Value,
    },
}

impl Payload {
    pub fn type_name(&self) -> &'static str {
        match self {
            Payload::Hello { .. } => "HELLO",
            Payload::PulseBlock { .. } => "PULSE_BLOCK",
            Payload::Detection { .. } => "DETECTION",
            Payload::Challenge { .. } => "CHALLENGE",
            Payload::Reveal { .. } => "REVEAL",
            Payload::Verdict { .. } => "VERDICT",
            Payload::Abort { .. } => "ABORT",
            Payload::Stats { .. } => "STATS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub v: u32,
    pub round_id: u64,
    #[serde(flatten)]
    pub payload: Payload,
}

impl Frame {
    pub fn new(round_id: u64, payload: Payload) -> Self {
        Frame { v: PROTOCOL_VERSION, round_id, payload }
    }
}

/// One line, newline included.
pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let mut line = serde_json::to_vec(frame).expect("frames always serialize");
    line.push(b'\n');
    line
}

pub fn decode_frame(line: &[u8]) -> Result<Frame> {
    let body = line.strip_suffix(b"\n").ok_or_else(|| Error::protocol("truncated frame: missing line terminator"))?;
    let body = body.strip_suffix(b"\r").unwrap_or(body);
    let value: serde_json::Value =
        serde_json::from_slice(body).map_err(|e| Error::protocol(format!("malformed frame: {e}")))?;
    let obj = value.as_object().ok_or_else(|| Error::protocol("frame is not an object"))?;
    match obj.get("v").and_then(|v| v.as_u64()) {
        Some(v) if v == PROTOCOL_VERSION as u64 => {}
        Some(v) => return Err(Error::protocol(format!("unsupported protocol version {v}"))),
        None => return Err(Error::protocol("frame has no version field")),
    }
    let tag = obj.get("type").and_then(|t| t.as_str()).ok_or_else(|| Error::protocol("frame has no type tag"))?;
    if !FRAME_TYPES.contains(&tag) {
        return Err(Error::protocol(format!("unknown frame type `{tag}`")));
    }
    serde_json::from_value(value.clone()).map_err(|e| Error::protocol(format!("bad {tag} frame: {e}")))
}

/// A reliable ordered byte stream carrying frames in both directions.
pub struct FrameStream {
    reader: BufReader<Box<dyn Read + Send>>,
    writer: Box<dyn Write + Send>,
    log: Option<Vec<Frame>>,
}

impl FrameStream {
    pub fn new(reader: Box<dyn Read + Send>, writer: Box<dyn Write + Send>) -> Self {
        FrameStream { reader: BufReader::new(reader), writer, log: None }
    }

    pub fn tcp(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Ok(Self::new(Box::new(reader), Box::new(stream)))
    }

    pub fn unix(stream: UnixStream) -> Result<Self> {
        let reader = stream.try_clone()?;
        Ok(Self::new(Box::new(reader), Box::new(stream)))
    }

    /// Connected in-memory pair.
    pub fn pair() -> Result<(Self, Self)> {
        let (a, b) = UnixStream::pair()?;
        Ok((Self::unix(a)?, Self::unix(b)?))
    }

    /// Keep a copy of every frame received from now on.
    pub fn record(&mut self) {
        self.log.get_or_insert_with(Vec::new);
    }

    pub fn received(&self) -> &[Frame] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn send(&mut self, frame: &Frame) -> Result<()> {
        self.writer.write_all(&encode_frame(frame))?;
        self.writer.flush()?;
        Ok(())
    }

    /// Next frame, or `None` on a clean end of stream.
    pub fn recv(&mut self) -> Result<Option<Frame>> {
        let mut line = Vec::new();
        let n = self.reader.read_until(b'\n', &mut line)?;
        if n == 0 {
            return Ok(None);
        }
        let frame = decode_frame(&line)?;
        if let Some(log) = &mut self.log {
            log.push(frame.clone());
        }
        Ok(Some(frame))
    }

    /// Next frame; end of stream is a protocol error.
    pub fn expect(&mut self) -> Result<Frame> {
        self.recv()?.ok_or_else(|| Error::protocol("peer disconnected"))
    }
}

/// Rejects frames from another round.
pub fn check_round(frame: &Frame, round: u64) -> Result<()> {
    if frame.round_id != round {
        return Err(Error::protocol(format!(
            "{} for round {} received during round {round}",
            frame.payload.type_name(),
            frame.round_id
        )));
    }
    Ok(())
}

pub fn unexpected(frame: &Frame, wanted: &str) -> Error {
    Error::protocol(format!("unexpected {} in round {} (expected {wanted})", frame.payload.type_name(), frame.round_id))
}

pub fn encode_labels(labels: &[StateLabel]) -> String {
    labels.iter().map(|l| char::from(b'0' + l.index() as u8)).collect()
}

pub fn decode_labels(s: &str, expected_len: u64) -> Result<Vec<StateLabel>> {
    if s.len() as u64 != expected_len {
        return Err(Error::protocol(format!("PULSE_BLOCK has {} labels, expected {expected_len}", s.len())));
    }
    s.bytes()
        .map(|c| match c {
            b'0'..=b'3' => Ok(StateLabel::ALL[(c - b'0') as usize]),
            _ => Err(Error::protocol(format!("invalid label digit {:?}", c as char))),
        })
        .collect()
}
