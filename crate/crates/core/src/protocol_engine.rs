//! Monte Carlo execution of the coin-flipping protocol.
//!
//! One flip:
//!
//! 1. Alice prepares K pulses with random (basis, bit) labels.
//! 2. Bob's passive analyzer reports the first detection `j`, or the flip aborts.
//! 3. Bob sends `j` and a random bit `b`.
//! 4. Alice reveals the label of pulse `j`.
//! 5. Bob aborts if his detector shares Alice's basis but shows the other bit.
//! 6. Otherwise the coin is `c_j xor b`.
//!
//! Only the first clicking slot matters, so the default path draws `j` from
//! the geometric law and simulates that slot alone. [`Simulator::honest_flip_per_slot`]
//! walks every slot and is kept as a reference for tests.
//!
//! Randomness layout per flip `f` (seeded sources): Alice consumes bits
//! `[2Kf, 2K(f+1))`, Bob consumes bit `f`, the physics uses its own stream
//! `physics_rng(seed, f)`. Flips are therefore independent and sessions can
//! be split across threads without changing any outcome.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::link_model::{first_success, Channel, DetectionEvent, LinkBudget};
use crate::photon_source::{PhotonStatistics, SourceSpec};
use crate::qubit_states::{state_amplitudes, IoTable, StateLabel, StateParameter};
use crate::randomness::{open_bit_source, physics_rng, stream, BitSource, BitSourceSpec, PhysicsRng};

/// Minimum detections per sent state before a simulated table row is trusted.
pub const MIN_ROW_DETECTIONS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngConfig {
    pub alice: BitSourceSpec,
    pub bob: BitSourceSpec,
    pub physics_seed: u64,
}

impl RngConfig {
    pub fn seeded(seed: u64) -> Self {
        RngConfig {
            alice: BitSourceSpec::Seeded { seed, stream: stream::ALICE },
            bob: BitSourceSpec::Seeded { seed, stream: stream::BOB },
            physics_seed: seed,
        }
    }

    fn is_addressable(&self) -> bool {
        matches!(self.alice, BitSourceSpec::Seeded { .. }) && matches!(self.bob, BitSourceSpec::Seeded { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub source: SourceSpec,
    pub link: LinkBudget,
    /// Pulses per flip, K.
    pub pulses_per_flip: u64,
    pub a: StateParameter,
    /// System clock rate R0 in pulses per second.
    pub clock_hz: f64,
    pub rng: RngConfig,
}

impl ScenarioConfig {
    /// Back-to-back operating point of the single-photon experiment.
    pub fn table1() -> Self {
        ScenarioConfig {
            source: SourceSpec::sps(0.0013, 0.03).expect("valid source"),
            link: LinkBudget::new(0.0, 0.5, 0.85, 4e-7, 0.028).expect("valid link"),
            pulses_per_flip: 50_000,
            a: StateParameter::new(0.9).expect("valid a"),
            clock_hz: 80e6,
            rng: RngConfig::seeded(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.link.validate()?;
        if self.pulses_per_flip == 0 {
            return Err(Error::domain("pulses per flip must be >= 1"));
        }
        if !(self.clock_hz.is_finite() && self.clock_hz > 0.0) {
            return Err(Error::domain(format!("clock_hz must be > 0, got {}", self.clock_hz)));
        }
        StateParameter::new(self.a.value())?;
        Ok(())
    }

    pub fn statistics(&self) -> Result<PhotonStatistics> {
        self.source.statistics()
    }

    /// Digest of everything both parties must agree on; seeds excluded.
    pub fn scenario_hash(&self) -> String {
        let canonical = serde_json::json!({
            "source": self.source,
            "link": self.link,
            "pulses_per_flip": self.pulses_per_flip,
            "a": self.a,
            "clock_hz": self.clock_hz,
        });
        let digest = Sha256::digest(canonical.to_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipKind {
    Coin(u8),
    AbortNoDetection,
    AbortMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    /// Alice's label of pulse j.
    pub sent: StateLabel,
    /// Detector that fired for pulse j.
    pub channel: StateLabel,
    pub dark: bool,
    pub b: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipOutcome {
    pub kind: FlipKind,
    pub j: Option<u64>,
    pub transcript: Option<Transcript>,
}

/// Bob's verdict on a revealed label.
pub fn judge(sent: StateLabel, channel: StateLabel, b: u8) -> FlipKind {
    if channel.same_basis(sent) && channel.bit != sent.bit {
        FlipKind::AbortMismatch
    } else {
        FlipKind::Coin(sent.bit ^ b)
    }
}

/// Party and physics randomness for a run of flips.
#[derive(Debug, Clone)]
pub struct RngBundle {
    pub alice: BitSource,
    pub bob: BitSource,
    pub physics_seed: u64,
    /// Index of the next flip; selects the physics stream.
    pub flip: u64,
}

impl RngBundle {
    pub fn open(cfg: &RngConfig) -> Result<Self> {
        Ok(RngBundle {
            alice: open_bit_source(&cfg.alice)?,
            bob: open_bit_source(&cfg.bob)?,
            physics_seed: cfg.physics_seed,
            flip: 0,
        })
    }

    /// Bundle positioned at the start of flip `flip`. Party sources must be
    /// seeded so the position can be reached by skipping.
    fn at_flip(cfg: &RngConfig, pulses: u64, flip: u64) -> Result<Self> {
        let mut b = Self::open(cfg)?;
        b.alice.skip_bits(2 * pulses * flip)?;
        b.bob.skip_bits(flip)?;
        b.flip = flip;
        Ok(b)
    }

    fn physics(&mut self) -> PhysicsRng {
        let rng = physics_rng(self.physics_seed, self.flip);
        self.flip += 1;
        rng
    }
}

/// What a cheating Bob learns from one flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheatDetection {
    pub j: u64,
    /// Bob's estimate of Alice's bit for pulse j.
    pub guess: u8,
    pub multiphoton: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheatStats {
    pub desired_bit: u8,
    pub n_flips: u64,
    pub n_detected: u64,
    pub n_multiphoton: u64,
    pub n_success: u64,
    pub success_prob: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SessionStats {
    pub n_flips: u64,
    pub n_success: u64,
    pub n_abort_nodetect: u64,
    pub n_abort_mismatch: u64,
    pub n_zero: u64,
    pub n_one: u64,
    pub p0_hat: f64,
    pub p1_hat: f64,
    pub duration_model_s: f64,
    pub rate_hz: f64,
    pub alice_bits: u64,
    pub bob_bits: u64,
}

impl SessionStats {
    pub fn from_outcomes(outcomes: &[FlipOutcome], pulses: u64, clock_hz: f64) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::EmptyStats("session has no flips".into()));
        }
        let mut s = SessionStats {
            n_flips: outcomes.len() as u64,
            n_success: 0,
            n_abort_nodetect: 0,
            n_abort_mismatch: 0,
            n_zero: 0,
            n_one: 0,
            p0_hat: f64::NAN,
            p1_hat: f64::NAN,
            duration_model_s: 0.0,
            rate_hz: 0.0,
            alice_bits: 2 * pulses * outcomes.len() as u64,
            bob_bits: outcomes.len() as u64,
        };
        for o in outcomes {
            match o.kind {
                FlipKind::Coin(0) => s.n_zero += 1,
                FlipKind::Coin(_) => s.n_one += 1,
                FlipKind::AbortNoDetection => s.n_abort_nodetect += 1,
                FlipKind::AbortMismatch => s.n_abort_mismatch += 1,
            }
        }
        s.n_success = s.n_zero + s.n_one;
        if s.n_success > 0 {
            s.p0_hat = s.n_zero as f64 / s.n_success as f64;
            s.p1_hat = s.n_one as f64 / s.n_success as f64;
        }
        s.duration_model_s = s.n_flips as f64 * pulses as f64 / clock_hz;
        s.rate_hz = s.n_success as f64 / s.duration_model_s;
        Ok(s)
    }

    /// Fraction of flips that aborted for either reason.
    pub fn honest_abort_freq(&self) -> f64 {
        (self.n_abort_nodetect + self.n_abort_mismatch) as f64 / self.n_flips as f64
    }

    pub fn mismatch_freq(&self) -> f64 {
        self.n_abort_mismatch as f64 / self.n_flips as f64
    }

    /// Binomial standard error of a frequency `p` over all flips.
    pub fn sigma(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.n_flips as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedIoTable {
    pub table: IoTable,
    pub counts: [[u64; 4]; 4],
    pub row_totals: [u64; 4],
    /// Rows with fewer than [`MIN_ROW_DETECTIONS`] detections.
    pub insufficient: [bool; 4],
}

impl SimulatedIoTable {
    pub fn from_outcomes(outcomes: &[FlipOutcome]) -> Self {
        let mut counts = [[0u64; 4]; 4];
        for t in outcomes.iter().filter_map(|o| o.transcript) {
            counts[t.sent.index()][t.channel.index()] += 1;
        }
        let mut table = [[0.0; 4]; 4];
        let mut row_totals = [0u64; 4];
        let mut insufficient = [false; 4];
        for r in 0..4 {
            row_totals[r] = counts[r].iter().sum();
            insufficient[r] = row_totals[r] < MIN_ROW_DETECTIONS;
            if row_totals[r] > 0 {
                for c in 0..4 {
                    table[r][c] = counts[r][c] as f64 / row_totals[r] as f64;
                }
            }
        }
        SimulatedIoTable { table: IoTable(table), counts, row_totals, insufficient }
    }
}

/// A scenario compiled for repeated flips.
#[derive(Debug, Clone)]
pub struct Simulator {
    channel: Channel,
    pulses: u64,
    clock_hz: f64,
}

impl Simulator {
    pub fn new(scenario: &ScenarioConfig) -> Result<Self> {
        scenario.validate()?;
        Self::from_parts(scenario.statistics()?, scenario.link, scenario.pulses_per_flip, scenario.a, scenario.clock_hz)
    }

    /// Arbitrary photon statistics, e.g. a pure two-photon source.
    pub fn from_parts(
        stats: PhotonStatistics,
        link: LinkBudget,
        pulses: u64,
        a: StateParameter,
        clock_hz: f64,
    ) -> Result<Self> {
        if pulses == 0 {
            return Err(Error::domain("pulses per flip must be >= 1"));
        }
        Ok(Simulator { channel: Channel::new(stats, link, a)?, pulses, clock_hz })
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    pub fn pulses(&self) -> u64 {
        self.pulses
    }

    /// Physics of one flip: first clicking slot and which detector fired.
    /// `label_at(j)` supplies Alice's 1-based pulse label on demand.
    pub fn detect(
        &self,
        rng: &mut PhysicsRng,
        mut label_at: impl FnMut(u64) -> Result<StateLabel>,
    ) -> Result<Option<(u64, StateLabel, DetectionEvent)>> {
        match self.channel.first_click(self.pulses, rng) {
            None => Ok(None),
            Some(j) => {
                let sent = label_at(j)?;
                Ok(Some((j, sent, self.channel.sample_given_click(sent, rng))))
            }
        }
    }

    /// Cheating Bob's view of one flip. He is granted a lossless, dark-free
    /// channel. A multiphoton pulse anywhere in the sequence reveals the bit
    /// outright; otherwise he measures a single photon in the computational
    /// basis, which is the optimal single-copy discrimination.
    pub fn cheat_measure(
        &self,
        rng: &mut PhysicsRng,
        mut label_at: impl FnMut(u64) -> Result<StateLabel>,
    ) -> Result<Option<CheatDetection>> {
        let stats = self.channel.stats();
        let p_multi = stats.prob_multiphoton();
        if let Some(j) = first_success(p_multi, self.pulses, rng) {
            let sent = label_at(j)?;
            return Ok(Some(CheatDetection { j, guess: sent.bit, multiphoton: true }));
        }
        let p_single = if p_multi < 1.0 { stats.pn(1) / (1.0 - p_multi) } else { 0.0 };
        match first_success(p_single, self.pulses, rng) {
            None => Ok(None),
            Some(j) => {
                let sent = label_at(j)?;
                let amp = state_amplitudes(self.channel.state_parameter(), sent);
                let u: f64 = rand::Rng::random(rng);
                let guess = if u < amp[0] * amp[0] { 0 } else { 1 };
                Ok(Some(CheatDetection { j, guess, multiphoton: false }))
            }
        }
    }

    /// One honest flip on the fast path.
    pub fn honest_flip(&self, rngs: &mut RngBundle) -> Result<FlipOutcome> {
        let k = self.pulses;
        rngs.alice.ensure_available(2 * k)?;
        rngs.bob.ensure_available(1)?;
        let b = rngs.bob.draw_bit()?;
        let mut phys = rngs.physics();
        let alice = &mut rngs.alice;
        let mut taken = 0;
        let detection = self.detect(&mut phys, |j| {
            alice.skip_bits(2 * (j - 1))?;
            taken = j;
            alice.draw_state_choice()
        })?;
        alice.skip_bits(2 * (k - taken))?;
        Ok(outcome_from(detection, b))
    }

    /// One honest flip with every slot simulated in turn. Same contract as
    /// [`Simulator::honest_flip`]; a different consumption of the physics
    /// stream, so outcomes agree only in distribution.
    pub fn honest_flip_per_slot(&self, rngs: &mut RngBundle) -> Result<FlipOutcome> {
        let k = self.pulses;
        rngs.alice.ensure_available(2 * k)?;
        rngs.bob.ensure_available(1)?;
        let b = rngs.bob.draw_bit()?;
        let mut phys = rngs.physics();
        let mut first = None;
        for i in 1..=k {
            let sent = rngs.alice.draw_state_choice()?;
            if first.is_none() {
                let ev = self.channel.sample_slot(sent, &mut phys);
                if ev != DetectionEvent::None {
                    first = Some((i, sent, ev));
                }
            }
        }
        Ok(outcome_from(first, b))
    }

    /// One flip against a cheating Bob aiming for `desired_bit`.
    /// Returns `None` when no photon reached him.
    pub fn cheat_flip(&self, rngs: &mut RngBundle, desired_bit: u8) -> Result<Option<(CheatDetection, u8)>> {
        let k = self.pulses;
        rngs.alice.ensure_available(2 * k)?;
        let mut phys = rngs.physics();
        let alice = &mut rngs.alice;
        let mut taken = 0;
        let mut sent = None;
        let seen = self.cheat_measure(&mut phys, |j| {
            alice.skip_bits(2 * (j - 1))?;
            taken = j;
            let l = alice.draw_state_choice()?;
            sent = Some(l);
            Ok(l)
        })?;
        alice.skip_bits(2 * (k - taken))?;
        Ok(seen.zip(sent).map(|(d, l)| {
            let b = d.guess ^ desired_bit;
            (d, l.bit ^ b)
        }))
    }

    /// Outcomes of `n_flips` honest flips, optionally spread over `jobs`
    /// threads. Results do not depend on `jobs`.
    pub fn honest_outcomes(&self, rng: &RngConfig, n_flips: u64, jobs: usize) -> Result<Vec<FlipOutcome>> {
        self.run_chunked(rng, n_flips, jobs, |sim, rngs| sim.honest_flip(rngs))
    }

    pub fn session(&self, rng: &RngConfig, n_flips: u64, jobs: usize) -> Result<SessionStats> {
        if n_flips == 0 {
            return Err(Error::EmptyStats("n_flips must be >= 1".into()));
        }
        let outcomes = self.honest_outcomes(rng, n_flips, jobs)?;
        SessionStats::from_outcomes(&outcomes, self.pulses, self.clock_hz)
    }

    pub fn cheat_session(&self, rng: &RngConfig, desired_bit: u8, n_flips: u64, jobs: usize) -> Result<CheatStats> {
        if desired_bit > 1 {
            return Err(Error::domain(format!("desired bit must be 0 or 1, got {desired_bit}")));
        }
        if n_flips == 0 {
            return Err(Error::EmptyStats("n_flips must be >= 1".into()));
        }
        let flips = self.run_chunked(rng, n_flips, jobs, |sim, rngs| sim.cheat_flip(rngs, desired_bit))?;
        let mut s = CheatStats {
            desired_bit,
            n_flips,
            n_detected: 0,
            n_multiphoton: 0,
            n_success: 0,
            success_prob: f64::NAN,
            sigma: f64::NAN,
        };
        for (d, outcome) in flips.into_iter().flatten() {
            s.n_detected += 1;
            s.n_multiphoton += d.multiphoton as u64;
            s.n_success += (outcome == desired_bit) as u64;
        }
        if s.n_detected > 0 {
            let p = s.n_success as f64 / s.n_detected as f64;
            s.success_prob = p;
            s.sigma = (p * (1.0 - p) / s.n_detected as f64).sqrt();
        }
        Ok(s)
    }

    fn run_chunked<T: Send>(
        &self,
        rng: &RngConfig,
        n_flips: u64,
        jobs: usize,
        flip: impl Fn(&Self, &mut RngBundle) -> Result<T> + Sync,
    ) -> Result<Vec<T>> {
        let jobs = jobs.max(1) as u64;
        if jobs == 1 || !rng.is_addressable() || n_flips < jobs {
            let mut rngs = RngBundle::open(rng)?;
            return (0..n_flips).map(|_| flip(self, &mut rngs)).collect();
        }
        let chunk = n_flips.div_ceil(jobs);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs as usize)
            .build()
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        let parts: Vec<Result<Vec<T>>> = pool.install(|| {
            (0..jobs)
                .into_par_iter()
                .map(|w| {
                    let start = w * chunk;
                    let end = ((w + 1) * chunk).min(n_flips);
                    let mut rngs = RngBundle::at_flip(rng, self.pulses, start)?;
                    (start..end).map(|_| flip(self, &mut rngs)).collect()
                })
                .collect()
        });
        let mut out = Vec::with_capacity(n_flips as usize);
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }
}

fn outcome_from(detection: Option<(u64, StateLabel, DetectionEvent)>, b: u8) -> FlipOutcome {
    match detection {
        None => FlipOutcome { kind: FlipKind::AbortNoDetection, j: None, transcript: None },
        Some((j, sent, ev)) => {
            let (channel, dark) = match ev {
                DetectionEvent::Click { channel, dark } => (channel, dark),
                DetectionEvent::None => unreachable!("detection without a click"),
            };
            FlipOutcome {
                kind: judge(sent, channel, b),
                j: Some(j),
                transcript: Some(Transcript { sent, channel, dark, b }),
            }
        }
    }
}

/// Runs one honest flip with freshly opened sources.
pub fn run_honest_flip(scenario: &ScenarioConfig, rngs: &mut RngBundle) -> Result<FlipOutcome> {
    Simulator::new(scenario)?.honest_flip(rngs)
}

pub fn run_session(scenario: &ScenarioConfig, n_flips: u64) -> Result<SessionStats> {
    Simulator::new(scenario)?.session(&scenario.rng, n_flips, 1)
}

pub fn run_bob_cheat_session(scenario: &ScenarioConfig, desired_bit: u8, n_flips: u64) -> Result<CheatStats> {
    Simulator::new(scenario)?.cheat_session(&scenario.rng, desired_bit, n_flips, 1)
}

pub fn simulated_io_table(scenario: &ScenarioConfig, n_flips: u64) -> Result<SimulatedIoTable> {
    let outcomes = Simulator::new(scenario)?.honest_outcomes(&scenario.rng, n_flips, 1)?;
    Ok(SimulatedIoTable::from_outcomes(&outcomes))
}
