//! Lossy link from Alice's source to Bob's four detectors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::photon_source::PhotonStatistics;
use crate::qubit_states::{expected_io_table, IoTable, StateLabel, StateParameter};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    /// Extra channel attenuation.
    pub loss_db: f64,
    /// Transmission of Bob's analyzer module.
    pub eta_bob: f64,
    pub eta_det: f64,
    /// Dark-count probability per pulse slot, summed over all four detectors.
    pub p_dark: f64,
    /// Same-basis error ratio.
    pub qber: f64,
}

impl LinkBudget {
    pub fn new(loss_db: f64, eta_bob: f64, eta_det: f64, p_dark: f64, qber: f64) -> Result<Self> {
        let link = LinkBudget { loss_db, eta_bob, eta_det, p_dark, qber };
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.loss_db.is_finite() || self.loss_db < 0.0 {
            return Err(Error::domain(format!("loss_db must be finite and >= 0, got {}", self.loss_db)));
        }
        for (name, v) in [("eta_bob", self.eta_bob), ("eta_det", self.eta_det)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::domain(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.p_dark) {
            return Err(Error::domain(format!("p_dark must lie in [0, 1], got {}", self.p_dark)));
        }
        if !(0.0..0.5).contains(&self.qber) {
            return Err(Error::domain(format!("qber must lie in [0, 0.5), got {}", self.qber)));
        }
        Ok(())
    }

    /// Overall single-photon detection efficiency, channel included.
    pub fn efficiency(&self) -> f64 {
        10f64.powf(-self.loss_db / 10.0) * self.eta_bob * self.eta_det
    }
}

/// `10^(-loss_db / 10)`.
pub fn transmittance(loss_db: f64) -> Result<f64> {
    if !loss_db.is_finite() || loss_db < 0.0 {
        return Err(Error::domain(format!("loss must be finite and >= 0 dB, got {loss_db}")));
    }
    Ok(10f64.powf(-loss_db / 10.0))
}

/// Probability that at least one photon of a pulse is detected, darks excluded.
pub fn signal_click_prob(stats: &PhotonStatistics, link: &LinkBudget) -> f64 {
    1.0 - stats.vacuum_after_loss(link.efficiency())
}

/// `1 - (1 - p_dark) sum_n p[n] (1 - eta)^n`.
pub fn per_pulse_click_prob(stats: &PhotonStatistics, link: &LinkBudget) -> f64 {
    1.0 - (1.0 - link.p_dark) * stats.vacuum_after_loss(link.efficiency())
}

/// `(1 - p_click)^K`.
pub fn no_detection_prob(p_click: f64, pulses: u64) -> f64 {
    if p_click >= 1.0 {
        return 0.0;
    }
    (pulses as f64 * (-p_click).ln_1p()).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionEvent {
    None,
    Click { channel: StateLabel, dark: bool },
}

impl DetectionEvent {
    pub fn channel(&self) -> Option<StateLabel> {
        match self {
            DetectionEvent::None => None,
            DetectionEvent::Click { channel, .. } => Some(*channel),
        }
    }
}

/// Precomputed per-pulse detection model for one (source, link, a) triple.
#[derive(Debug, Clone)]
pub struct Channel {
    stats: PhotonStatistics,
    link: LinkBudget,
    table: IoTable,
    p_click: f64,
    a: StateParameter,
}

impl Channel {
    pub fn new(stats: PhotonStatistics, link: LinkBudget, a: StateParameter) -> Result<Self> {
        link.validate()?;
        let table = expected_io_table(a, link.qber)?;
        let p_click = per_pulse_click_prob(&stats, &link);
        Ok(Channel { stats, link, table, p_click, a })
    }

    pub fn click_prob(&self) -> f64 {
        self.p_click
    }

    pub fn stats(&self) -> &PhotonStatistics {
        &self.stats
    }

    pub fn link(&self) -> &LinkBudget {
        &self.link
    }

    pub fn state_parameter(&self) -> StateParameter {
        self.a
    }

    pub fn io_table(&self) -> &IoTable {
        &self.table
    }

    /// One slot simulated photon by photon.
    pub fn sample_slot<R: Rng + ?Sized>(&self, sent: StateLabel, rng: &mut R) -> DetectionEvent {
        if rng.random::<f64>() < self.link.p_dark {
            return DetectionEvent::Click { channel: uniform_channel(rng), dark: true };
        }
        let n = self.stats.sample_photon_number(rng);
        if n == 0 {
            return DetectionEvent::None;
        }
        let miss = (1.0 - self.link.efficiency()).powi(n as i32);
        if rng.random::<f64>() < miss {
            return DetectionEvent::None;
        }
        DetectionEvent::Click { channel: self.table_channel(sent, rng), dark: false }
    }

    /// Which detector fired, given that this slot clicked.
    pub fn sample_given_click<R: Rng + ?Sized>(&self, sent: StateLabel, rng: &mut R) -> DetectionEvent {
        if rng.random::<f64>() * self.p_click < self.link.p_dark {
            DetectionEvent::Click { channel: uniform_channel(rng), dark: true }
        } else {
            DetectionEvent::Click { channel: self.table_channel(sent, rng), dark: false }
        }
    }

    /// 1-based index of the first clicking slot out of `pulses`, drawn from
    /// the geometric law in a single uniform.
    pub fn first_click<R: Rng + ?Sized>(&self, pulses: u64, rng: &mut R) -> Option<u64> {
        first_success(self.p_click, pulses, rng)
    }

    fn table_channel<R: Rng + ?Sized>(&self, sent: StateLabel, rng: &mut R) -> StateLabel {
        let u: f64 = rng.random();
        let row = self.table.row(sent);
        let mut cdf = 0.0;
        for (i, p) in row.iter().enumerate() {
            cdf += p;
            if u < cdf {
                return StateLabel::ALL[i];
            }
        }
        StateLabel::ALL[row.iter().rposition(|p| *p > 0.0).unwrap_or(0)]
    }
}

fn uniform_channel<R: Rng + ?Sized>(rng: &mut R) -> StateLabel {
    StateLabel::ALL[rng.random_range(0..4)]
}

/// First success among `trials` Bernoulli(p) trials, 1-based.
pub(crate) fn first_success<R: Rng + ?Sized>(p: f64, trials: u64, rng: &mut R) -> Option<u64> {
    let u: f64 = rng.random();
    if p <= 0.0 {
        return None;
    }
    if p >= 1.0 {
        return Some(1);
    }
    // 1 - u lies in (0, 1], so the log is finite
    let j = ((1.0 - u).ln() / (-p).ln_1p()).floor();
    if j < trials as f64 {
        Some(j as u64 + 1)
    } else {
        None
    }
}

/// Single-slot sampler: with probability `p_dark` a uniformly chosen
/// detector fires, otherwise a surviving photon picks a channel from the
/// expected input/output row of `sent`.
pub fn sample_detection<R: Rng + ?Sized>(
    sent: StateLabel,
    a: StateParameter,
    stats: &PhotonStatistics,
    link: &LinkBudget,
    rng: &mut R,
) -> Result<DetectionEvent> {
    Ok(Channel::new(*stats, *link, a)?.sample_slot(sent, rng))
}
