mod common;

use qscf::link_model::LinkBudget;
use qscf::photon_source::{PhotonStatistics, SourceSpec};
use qscf::protocol_engine::{RngBundle, RngConfig, SimulatedIoTable, Simulator};
use qscf::qubit_states::{expected_io_table, StateLabel, StateParameter};
use qscf::security_analysis::{bob_cheat_prob, honest_abort_prob};

use common::{binomial_sigma, j_histogram, kind_counts, scenario, two_sample_p};

#[test]
fn honest_abort_matches_analytic_on_grid() {
    let mut seed = 100;
    for mu in [1e-4, 1.3e-3] {
        for k in [1_000u64, 50_000] {
            for e in [0.0, 0.028, 0.064] {
                seed += 1;
                let link = LinkBudget::new(0.0, 0.5, 0.85, 4e-7, e).unwrap();
                let sc = scenario(SourceSpec::sps(mu, 0.03).unwrap(), link, k, 0.9, seed);
                let sim = Simulator::new(&sc).unwrap();
                let n = 20_000;
                let s = sim.session(&sc.rng, n, 4).unwrap();
                let h = honest_abort_prob(e, sim.channel().click_prob(), k);
                let sigma = binomial_sigma(h, n).max(1.0 / n as f64);
                assert!(
                    (s.honest_abort_freq() - h).abs() <= 4.0 * sigma,
                    "mu={mu} K={k} e={e}: mc {} vs {h} (sigma {sigma})",
                    s.honest_abort_freq()
                );
            }
        }
    }
}

#[test]
fn coins_are_balanced() {
    let sc = common::load_config("table1.cfg").scenario;
    let s = Simulator::new(&sc).unwrap().session(&sc.rng, 50_000, 4).unwrap();
    let sigma = binomial_sigma(0.5, s.n_success);
    assert!((s.p0_hat - 0.5).abs() <= 4.0 * sigma, "p0 = {}", s.p0_hat);
    assert!((s.p0_hat + s.p1_hat - 1.0).abs() < 1e-12);
}

fn per_slot_outcomes(sim: &Simulator, seed: u64, n: u64) -> Vec<qscf::FlipOutcome> {
    let mut rngs = RngBundle::open(&RngConfig::seeded(seed)).unwrap();
    (0..n).map(|_| sim.honest_flip_per_slot(&mut rngs).unwrap()).collect()
}

#[test]
fn geometric_path_matches_per_slot_loop() {
    let cases = [
        (PhotonStatistics::poisson(0.05).unwrap(), LinkBudget::new(0.0, 0.5, 0.85, 1e-3, 0.05).unwrap(), 100u64),
        (PhotonStatistics::poisson(0.3).unwrap(), LinkBudget::new(10.0, 0.5, 0.85, 1e-2, 0.1).unwrap(), 40),
    ];
    for (i, (stats, link, k)) in cases.into_iter().enumerate() {
        let sim = Simulator::from_parts(stats, link, k, StateParameter::new(0.8).unwrap(), 80e6).unwrap();
        let n = 40_000;
        let fast = sim.honest_outcomes(&RngConfig::seeded(10 + i as u64), n, 4).unwrap();
        let slow = per_slot_outcomes(&sim, 20 + i as u64, n);
        let p_j = two_sample_p(&j_histogram(&fast, k, 10), &j_histogram(&slow, k, 10));
        let p_kind = two_sample_p(&kind_counts(&fast), &kind_counts(&slow));
        assert!(p_j > 0.01 && p_kind > 0.01, "case {i}: p_j={p_j} p_kind={p_kind}");
    }
}

#[test]
fn dark_only_table_is_uniform() {
    let link = LinkBudget::new(1000.0, 0.5, 0.85, 0.5, 0.028).unwrap();
    let sc = scenario(SourceSpec::wcp(0.1).unwrap(), link, 10, 0.9, 5);
    let outcomes = Simulator::new(&sc).unwrap().honest_outcomes(&sc.rng, 40_000, 4).unwrap();
    let t = SimulatedIoTable::from_outcomes(&outcomes);
    assert!(t.insufficient.iter().all(|x| !x));
    for sent in StateLabel::ALL {
        let n = t.row_totals[sent.index()];
        for &x in t.table.row(sent) {
            assert!((x - 0.25).abs() <= 4.0 * binomial_sigma(0.25, n), "{sent}: {x}");
        }
    }
}

#[test]
fn simulated_table_matches_expected_at_high_qber() {
    let a = 0.75;
    let link = LinkBudget::new(0.0, 0.5, 0.85, 0.0, 0.2).unwrap();
    let sc = scenario(SourceSpec::sps(0.3, 0.03).unwrap(), link, 50, a, 6);
    let outcomes = Simulator::new(&sc).unwrap().honest_outcomes(&sc.rng, 40_000, 4).unwrap();
    let sim = SimulatedIoTable::from_outcomes(&outcomes);
    let expected = expected_io_table(StateParameter::new(a).unwrap(), 0.2).unwrap();
    for sent in StateLabel::ALL {
        let n = sim.row_totals[sent.index()];
        for det in StateLabel::ALL {
            let p = expected.entry(sent, det);
            let x = sim.table.entry(sent, det);
            assert!((x - p).abs() <= 4.0 * binomial_sigma(p, n).max(1.0 / n as f64), "{sent}->{det}: {x} vs {p}");
        }
    }
}

#[test]
fn few_detections_are_flagged() {
    let sc = common::load_config("table1.cfg").scenario;
    let outcomes = Simulator::new(&sc).unwrap().honest_outcomes(&sc.rng, 200, 1).unwrap();
    let t = SimulatedIoTable::from_outcomes(&outcomes);
    assert!(t.insufficient.iter().all(|&x| x));
}

#[test]
fn cheating_bob_matches_bound_on_grid() {
    let mut seed = 300;
    for (source, k) in [
        (SourceSpec::wcp(1e-3).unwrap(), 1_000u64),
        (SourceSpec::wcp(1e-4).unwrap(), 100_000),
        (SourceSpec::sps(0.01, 0.3).unwrap(), 10_000),
    ] {
        for a in [0.6, 0.9] {
            seed += 1;
            let sc = scenario(source, common::noiseless_link(), k, a, seed);
            let sim = Simulator::new(&sc).unwrap();
            let c = sim.cheat_session(&sc.rng, 1, 20_000, 4).unwrap();
            let p = bob_cheat_prob(a, sim.channel().stats(), k).unwrap();
            let sigma = binomial_sigma(p, c.n_detected);
            assert!((c.success_prob - p).abs() <= 4.0 * sigma, "{source:?} K={k} a={a}: {} vs {p}", c.success_prob);
        }
    }
}

#[test]
fn cheating_target_zero_is_symmetric() {
    let sc = scenario(SourceSpec::wcp(1e-3).unwrap(), common::noiseless_link(), 2_000, 0.85, 9);
    let sim = Simulator::new(&sc).unwrap();
    let p = bob_cheat_prob(0.85, sim.channel().stats(), 2_000).unwrap();
    let c = sim.cheat_session(&sc.rng, 0, 20_000, 2).unwrap();
    assert!((c.success_prob - p).abs() <= 4.0 * binomial_sigma(p, c.n_detected));
}
