//! Alice, Bob and a trusted physics process talking over byte streams.
//!
//! Per flip the frames run `PULSE_BLOCK -> DETECTION -> CHALLENGE -> REVEAL
//! -> VERDICT`; a flip without detection ends at `VERDICT` right after
//! `DETECTION`. Every receiver checks type and `round_id`, so an
//! out-of-order or duplicated frame is a protocol error and the flip is not
//! counted.

pub mod frame;
pub mod party;
pub mod physics;

use std::thread;

pub use frame::{decode_frame, encode_frame, Frame, FrameStream, Payload, Role};
pub use party::{run_alice, run_bob, FlipRecord, PartySummary, SessionEnd};
pub use physics::{serve_physics, serve_physics_on, SessionSummary};

use crate::error::{Error, Result};
use crate::protocol_engine::ScenarioConfig;
use crate::randomness::BitSource;

/// Everything a three-party session produced.
pub struct LocalSession {
    pub physics: SessionSummary,
    pub alice: Result<PartySummary>,
    pub bob: Result<PartySummary>,
    /// Frames each party received, in order.
    pub alice_received: Vec<Frame>,
    pub bob_received: Vec<Frame>,
}

/// Runs Alice, Bob and the physics on three threads joined by in-memory
/// streams.
pub fn run_local_session(
    scenario: &ScenarioConfig,
    mut alice_bits: BitSource,
    mut bob_bits: BitSource,
    physics_seed: u64,
    n_flips: u64,
    cheat_target: Option<u8>,
) -> Result<LocalSession> {
    let (mut alice_end, physics_alice) = FrameStream::pair()?;
    let (mut bob_end, physics_bob) = FrameStream::pair()?;
    alice_end.record();
    bob_end.record();

    let sc = scenario.clone();
    let alice = thread::spawn(move || {
        let r = run_alice(&mut alice_end, &sc, &mut alice_bits, n_flips);
        (r, alice_end.received().to_vec())
    });
    let sc = scenario.clone();
    let bob = thread::spawn(move || {
        let r = run_bob(&mut bob_end, &sc, &mut bob_bits, cheat_target);
        (r, bob_end.received().to_vec())
    });
    let physics = serve_physics(scenario, physics_seed, physics_alice, physics_bob);
    let (alice, alice_received) = alice.join().map_err(|_| Error::protocol("alice thread panicked"))?;
    let (bob, bob_received) = bob.join().map_err(|_| Error::protocol("bob thread panicked"))?;
    Ok(LocalSession { physics: physics?, alice, bob, alice_received, bob_received })
}
