#![allow(dead_code)]

use std::path::PathBuf;

use qscf::config::RunConfig;
use qscf::link_model::LinkBudget;
use qscf::photon_source::SourceSpec;
use qscf::protocol_engine::{FlipKind, FlipOutcome, RngConfig, ScenarioConfig};
use qscf::qubit_states::StateParameter;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn load_config(name: &str) -> RunConfig {
    RunConfig::load(config_path(name)).expect("bundled config loads")
}

pub fn scenario(source: SourceSpec, link: LinkBudget, pulses: u64, a: f64, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        source,
        link,
        pulses_per_flip: pulses,
        a: StateParameter::new(a).unwrap(),
        clock_hz: 80e6,
        rng: RngConfig::seeded(seed),
    }
}

pub fn noiseless_link() -> LinkBudget {
    LinkBudget::new(0.0, 0.5, 0.85, 0.0, 0.0).unwrap()
}

/// Position in (coin 0, coin 1, mismatch, no detection).
pub fn kind_index(kind: FlipKind) -> usize {
    match kind {
        FlipKind::Coin(0) => 0,
        FlipKind::Coin(_) => 1,
        FlipKind::AbortMismatch => 2,
        FlipKind::AbortNoDetection => 3,
    }
}

pub fn kind_counts(outcomes: &[FlipOutcome]) -> [u64; 4] {
    let mut c = [0u64; 4];
    for o in outcomes {
        c[kind_index(o.kind)] += 1;
    }
    c
}

/// Two-sample chi-square homogeneity test. Categories empty in both
/// samples are dropped. Returns the p-value.
pub fn two_sample_p(a: &[u64], b: &[u64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let mut stat = 0.0;
    let mut cats = 0;
    for (&x, &y) in a.iter().zip(b) {
        let tot = (x + y) as f64;
        if tot == 0.0 {
            continue;
        }
        cats += 1;
        let ea = tot * na / (na + nb);
        let eb = tot * nb / (na + nb);
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    if cats < 2 {
        return 1.0;
    }
    1.0 - ChiSquared::new((cats - 1) as f64).unwrap().cdf(stat)
}

/// Histogram of first-detection index in `bins` equal bins over [1, K],
/// plus a final bin for flips without detection.
pub fn j_histogram(outcomes: &[FlipOutcome], pulses: u64, bins: u64) -> Vec<u64> {
    let mut h = vec![0u64; bins as usize + 1];
    for o in outcomes {
        match o.j {
            Some(j) => h[((j - 1) * bins / pulses) as usize] += 1,
            None => h[bins as usize] += 1,
        }
    }
    h
}

pub fn binomial_sigma(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
