mod common;

use std::thread;

use qscf::link_model::LinkBudget;
use qscf::net::frame::decode_labels;
use qscf::net::{run_alice, run_bob, run_local_session, Frame, FrameStream, Payload, Role, SessionEnd};
use qscf::photon_source::SourceSpec;
use qscf::protocol_engine::{RngConfig, ScenarioConfig, Simulator};
use qscf::randomness::{stream, BitSource};
use qscf::security_analysis::bob_cheat_prob;
use qscf::Error;

use common::{binomial_sigma, kind_counts, kind_index, scenario, two_sample_p};

fn seeded_parties(seed: u64) -> (BitSource, BitSource) {
    (BitSource::seeded(seed, stream::ALICE), BitSource::seeded(seed, stream::BOB))
}

fn assert_transcript_equivalent(sc: &ScenarioConfig, seed: u64, n: u64) {
    let (a, b) = seeded_parties(seed);
    let run = run_local_session(sc, a, b, seed, n, None).unwrap();
    let alice = run.alice.unwrap();
    let bob = run.bob.unwrap();
    let engine = Simulator::new(sc).unwrap().honest_outcomes(&RngConfig::seeded(seed), n, 1).unwrap();
    assert_eq!(alice.transcript.len() as u64, n);
    for (rec, out) in alice.transcript.iter().zip(&engine) {
        assert_eq!((rec.kind, rec.j), (out.kind, out.j), "round {}", rec.round);
    }
    assert_eq!(alice.transcript, bob.transcript);
    assert_eq!(alice.bits_consumed, 2 * sc.pulses_per_flip * n);
    assert_eq!(bob.bits_consumed, n);
    assert!(run.physics.complete);
    assert_eq!(run.physics.rounds, n);
}

#[test]
fn networked_run_reproduces_engine_transcript() {
    let table1 = common::load_config("table1.cfg").scenario;
    assert_transcript_equivalent(&table1, 7, 120);

    let noiseless = scenario(SourceSpec::sps(0.2, 0.03).unwrap(), common::noiseless_link(), 64, 0.9, 0);
    assert_transcript_equivalent(&noiseless, 8, 500);

    let lossy = LinkBudget::new(20.0, 0.5, 0.85, 1e-4, 0.05).unwrap();
    let lossy = scenario(SourceSpec::wcp(0.05).unwrap(), lossy, 300, 0.85, 0);
    assert_transcript_equivalent(&lossy, 9, 800);
}

#[test]
fn both_sides_agree_and_match_engine_distribution() {
    let link = LinkBudget::new(3.0, 0.5, 0.85, 4e-7, 0.031).unwrap();
    let sc = scenario(SourceSpec::sps(0.0013, 0.03).unwrap(), link, 1_000, 0.9, 0);
    let (a, b) = seeded_parties(41);
    let run = run_local_session(&sc, a, b, 41, 1_000, None).unwrap();
    let (alice, bob) = (run.alice.unwrap(), run.bob.unwrap());
    assert_eq!(alice.transcript, bob.transcript);
    assert_eq!((alice.n_zero, alice.n_one), (bob.n_zero, bob.n_one));

    let mut net_counts = [0u64; 4];
    for r in &alice.transcript {
        net_counts[kind_index(r.kind)] += 1;
    }
    let engine = Simulator::new(&sc).unwrap().honest_outcomes(&RngConfig::seeded(42), 20_000, 4).unwrap();
    assert!(two_sample_p(&net_counts, &kind_counts(&engine)) > 0.01);
}

#[test]
fn information_stays_confined() {
    let sc = scenario(
        SourceSpec::sps(0.05, 0.03).unwrap(),
        LinkBudget::new(0.0, 0.5, 0.85, 1e-3, 0.05).unwrap(),
        200,
        0.9,
        0,
    );
    let (a, b) = seeded_parties(3);
    let run = run_local_session(&sc, a, b, 3, 300, None).unwrap();
    for f in &run.bob_received {
        match &f.payload {
            Payload::Hello { .. } | Payload::Reveal { .. } | Payload::Stats { .. } => {}
            Payload::Detection { outcome, .. } => assert!(outcome.is_none()),
            other => panic!("Bob received {}", other.type_name()),
        }
    }
    for f in &run.alice_received {
        match &f.payload {
            Payload::Hello { .. } | Payload::Challenge { .. } | Payload::Verdict { .. } => {}
            other => panic!("Alice received {}", other.type_name()),
        }
    }
    // Bob hears about pulse j only through DETECTION and only after its round began
    let mut last_detection = None;
    for f in &run.bob_received {
        match f.payload {
            Payload::Detection { .. } => last_detection = Some(f.round_id),
            Payload::Reveal { .. } => assert_eq!(last_detection, Some(f.round_id)),
            _ => {}
        }
    }
}

#[test]
fn networked_cheating_bob_matches_engine_and_bound() {
    let sc = scenario(SourceSpec::wcp(2e-3).unwrap(), common::noiseless_link(), 500, 0.8, 0);
    let (a, b) = seeded_parties(77);
    let run = run_local_session(&sc, a, b, 77, 3_000, Some(1)).unwrap();
    let bob = run.bob.unwrap();
    assert_eq!(bob.cheat_target, Some(1));
    assert_eq!(bob.bits_consumed, 0);
    let p = bob_cheat_prob(0.8, &sc.statistics().unwrap(), 500).unwrap();
    let bias = bob.bias_toward(1);
    assert!((bias - p).abs() <= 4.0 * binomial_sigma(p, bob.n_success), "bias {bias} vs {p}");

    let c = Simulator::new(&sc).unwrap().cheat_session(&RngConfig::seeded(77), 1, 3_000, 1).unwrap();
    assert_eq!((c.n_detected, c.n_success), (bob.n_success, bob.n_one));
}

#[test]
fn scenario_hash_mismatch_is_rejected() {
    let sc = common::load_config("table1.cfg").scenario;
    let mut other = sc.clone();
    other.pulses_per_flip += 1;
    let (mut alice_end, phys_a) = FrameStream::pair().unwrap();
    let (mut bob_end, phys_b) = FrameStream::pair().unwrap();
    let sc2 = sc.clone();
    let physics = thread::spawn(move || qscf::net::serve_physics(&sc2, 1, phys_a, phys_b));
    let other2 = other.clone();
    let alice = thread::spawn(move || run_alice(&mut alice_end, &other2, &mut BitSource::seeded(1, 1), 5));
    let bob = thread::spawn(move || run_bob(&mut bob_end, &sc, &mut BitSource::seeded(1, 2), None));
    let err = alice.join().unwrap().unwrap_err();
    assert!(matches!(err, Error::Protocol(_)) && err.to_string().contains("rejected"), "{err}");
    assert!(matches!(physics.join().unwrap(), Err(Error::Protocol(m)) if m.contains("hash")));
    assert!(bob.join().unwrap().is_err());
}

/// Runs Alice against a scripted physics end and returns her result.
fn scripted_alice(
    sc: &ScenarioConfig,
    script: impl FnOnce(&mut FrameStream) + Send + 'static,
) -> (qscf::Result<qscf::net::PartySummary>, Vec<Frame>) {
    let (mut alice_end, mut peer) = FrameStream::pair().unwrap();
    peer.record();
    let sc = sc.clone();
    let alice = thread::spawn(move || run_alice(&mut alice_end, &sc, &mut BitSource::seeded(5, 1), 3));
    let hello = peer.expect().unwrap();
    let hash = match hello.payload {
        Payload::Hello { role: Role::Alice, scenario_hash, .. } => scenario_hash,
        _ => panic!("expected HELLO"),
    };
    peer.send(&Frame::new(0, Payload::Hello { role: Role::Physics, scenario_hash: hash, cheat_target: None })).unwrap();
    script(&mut peer);
    let result = alice.join().unwrap();
    while let Ok(Some(_)) = peer.recv() {}
    (result, peer.received().to_vec())
}

fn small_scenario() -> ScenarioConfig {
    scenario(SourceSpec::sps(0.2, 0.03).unwrap(), common::noiseless_link(), 16, 0.9, 0)
}

#[test]
fn challenge_outside_sequence_is_a_protocol_error() {
    for j in [0u64, 17, u64::MAX] {
        let (result, seen) = scripted_alice(&small_scenario(), move |peer| {
            peer.expect().unwrap();
            peer.send(&Frame::new(0, Payload::Challenge { j, b: 0 })).unwrap();
        });
        let err = result.unwrap_err();
        assert!(matches!(err, Error::Protocol(ref m) if m.contains("outside")), "{err}");
        assert!(seen.iter().any(|f| matches!(f.payload, Payload::Abort { .. })));
    }
}

#[test]
fn out_of_order_frames_are_rejected() {
    // REVEAL where a CHALLENGE belongs
    let (result, _) = scripted_alice(&small_scenario(), |peer| {
        peer.expect().unwrap();
        peer.send(&Frame::new(0, Payload::Reveal { basis: 0, bit: 0 })).unwrap();
    });
    assert!(matches!(result, Err(Error::Protocol(_))));

    // wrong round id
    let (result, _) = scripted_alice(&small_scenario(), |peer| {
        peer.expect().unwrap();
        peer.send(&Frame::new(4, Payload::Challenge { j: 1, b: 0 })).unwrap();
    });
    assert!(matches!(result, Err(Error::Protocol(_))));

    // a full round, then its VERDICT again
    let (result, _) = scripted_alice(&small_scenario(), |peer| {
        let block = peer.expect().unwrap();
        let labels = match block.payload {
            Payload::PulseBlock { labels } => decode_labels(&labels, 16).unwrap(),
            _ => panic!("expected PULSE_BLOCK"),
        };
        peer.send(&Frame::new(0, Payload::Challenge { j: 3, b: 1 })).unwrap();
        peer.expect().unwrap();
        let verdict = Frame::new(0, Payload::Verdict { accept: true, outcome: Some(labels[2].bit ^ 1), reason: None });
        peer.send(&verdict).unwrap();
        peer.expect().unwrap();
        peer.send(&verdict).unwrap();
    });
    assert!(matches!(result, Err(Error::Protocol(_))));
}

#[test]
fn wrong_verdict_outcome_is_caught() {
    let (result, _) = scripted_alice(&small_scenario(), |peer| {
        let block = peer.expect().unwrap();
        let labels = match block.payload {
            Payload::PulseBlock { labels } => decode_labels(&labels, 16).unwrap(),
            _ => panic!("expected PULSE_BLOCK"),
        };
        peer.send(&Frame::new(0, Payload::Challenge { j: 1, b: 0 })).unwrap();
        peer.expect().unwrap();
        peer.send(&Frame::new(0, Payload::Verdict { accept: true, outcome: Some(labels[0].bit ^ 1), reason: None }))
            .unwrap();
    });
    assert!(matches!(result, Err(Error::Protocol(_))));
}

#[test]
fn entropy_exhaustion_ends_cleanly() {
    let sc = small_scenario();
    // 16 pulses take 32 bits: 20 bytes cover five flips
    let alice_bits = BitSource::from_bytes(vec![0x5a; 20]);
    let run = run_local_session(&sc, alice_bits, BitSource::seeded(1, 2), 1, 50, None).unwrap();
    let alice = run.alice.unwrap();
    let bob = run.bob.unwrap();
    assert_eq!(alice.end, SessionEnd::EntropyExhausted);
    assert_eq!(alice.rounds, 5);
    assert_eq!(alice.bits_consumed, 160);
    assert_eq!(bob.transcript, alice.transcript);
    assert!(run.physics.complete);
}

#[test]
fn bob_entropy_exhaustion_aborts_session() {
    let sc = small_scenario();
    let run = run_local_session(&sc, BitSource::seeded(1, 1), BitSource::from_bytes(vec![0xff]), 1, 50, None).unwrap();
    let bob = run.bob.unwrap();
    assert_eq!(bob.end, SessionEnd::EntropyExhausted);
    assert_eq!(bob.rounds, 8);
    assert_eq!(run.alice.unwrap().end, SessionEnd::PeerAbort);
    assert!(!run.physics.complete);
}
