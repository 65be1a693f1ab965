//! Photon-number statistics of the two source families.
//!
//! Both kinds are treated as classical mixtures over photon number: weak
//! coherent pulses are assumed phase-randomised and the single-photon source
//! is assumed to carry no photon-number coherence.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    /// Attenuated laser, Poissonian photon number.
    Wcp,
    /// Sub-Poissonian single-photon emitter characterised by `mu` and `g2`.
    Sps,
}

impl std::fmt::Display for SourceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SourceKind::Wcp => f.write_str("wcp"),
            SourceKind::Sps => f.write_str("sps"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub kind: SourceKind,
    /// Mean photon number per pulse.
    pub mu: f64,
    /// Zero-delay autocorrelation. Ignored for WCP.
    pub g2: f64,
}

impl SourceSpec {
    pub fn wcp(mu: f64) -> Result<Self> {
        let spec = SourceSpec { kind: SourceKind::Wcp, mu, g2: 1.0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sps(mu: f64, g2: f64) -> Result<Self> {
        let spec = SourceSpec { kind: SourceKind::Sps, mu, g2 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() || self.mu <= 0.0 {
            return Err(Error::domain(format!("mean photon number must be finite and > 0, got {}", self.mu)));
        }
        if self.kind == SourceKind::Sps {
            if self.mu >= 1.0 {
                return Err(Error::domain(format!("SPS mean photon number must be < 1, got {}", self.mu)));
            }
            if !(0.0..1.0).contains(&self.g2) {
                return Err(Error::domain(format!("g2 must lie in [0, 1), got {}", self.g2)));
            }
        }
        Ok(())
    }

    pub fn statistics(&self) -> Result<PhotonStatistics> {
        match self.kind {
            SourceKind::Wcp => PhotonStatistics::poisson(self.mu),
            SourceKind::Sps => sps_statistics(self.mu, self.g2),
        }
    }
}

/// Photon-number distribution of one pulse.
///
/// Entries for n = 0, 1, 2 are stored explicitly. Poissonian statistics also
/// keep their mean so the n >= 3 tail and the vacuum generating function can
/// be evaluated in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonStatistics {
    p: [f64; 3],
    poisson_mu: Option<f64>,
}

/// `e^-mu mu^n / n!`.
pub fn poisson_pn(mu: f64, n: u32) -> Result<f64> {
    if !mu.is_finite() || mu <= 0.0 {
        return Err(Error::domain(format!("mean photon number must be finite and > 0, got {mu}")));
    }
    // log-space keeps large n from overflowing the factorial
    let log_fact: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
    Ok((n as f64 * mu.ln() - mu - log_fact).exp())
}

/// SPS statistics from the antibunching bound, taken with equality:
/// `p1 = mu`, `p2 = mu^2 g2 / 2`, `p0 = 1 - p1 - p2`, nothing above two photons.
pub fn sps_statistics(mu: f64, g2: f64) -> Result<PhotonStatistics> {
    SourceSpec { kind: SourceKind::Sps, mu, g2 }.validate()?;
    let p2 = 0.5 * mu * mu * g2;
    let p1 = mu;
    let p0 = 1.0 - p1 - p2;
    if p0 < 0.0 {
        return Err(Error::domain(format!("mu = {mu}, g2 = {g2} leaves negative vacuum probability")));
    }
    Ok(PhotonStatistics { p: [p0, p1, p2], poisson_mu: None })
}

impl PhotonStatistics {
    pub fn poisson(mu: f64) -> Result<Self> {
        let p = [poisson_pn(mu, 0)?, poisson_pn(mu, 1)?, poisson_pn(mu, 2)?];
        Ok(PhotonStatistics { p, poisson_mu: Some(mu) })
    }

    /// Arbitrary distribution truncated at two photons.
    pub fn truncated(p0: f64, p1: f64, p2: f64) -> Result<Self> {
        let p = [p0, p1, p2];
        if p.iter().any(|x| !(0.0..=1.0).contains(x)) || ((p0 + p1 + p2) - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("not a probability vector: {p:?}")));
        }
        Ok(PhotonStatistics { p, poisson_mu: None })
    }

    /// Probability of exactly `n` photons.
    pub fn pn(&self, n: u32) -> f64 {
        match (self.poisson_mu, n) {
            (_, 0..=2) => self.p[n as usize],
            (Some(mu), _) => poisson_pn(mu, n).unwrap_or(0.0),
            (None, _) => 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        match self.poisson_mu {
            Some(mu) => mu,
            None => self.p[1] + 2.0 * self.p[2],
        }
    }

    pub fn is_poissonian(&self) -> bool {
        self.poisson_mu.is_some()
    }

    /// P(n >= 2).
    pub fn prob_multiphoton(&self) -> f64 {
        match self.poisson_mu {
            // 1 - e^-mu (1 + mu), arranged to avoid cancellation at small mu
            Some(mu) => (-(-mu).exp_m1() - mu * (-mu).exp()).max(0.0),
            None => self.p[2],
        }
    }

    /// `sum_n p[n] (1 - eta)^n`: probability that nothing survives a loss
    /// with transmission `eta`.
    pub fn vacuum_after_loss(&self, eta: f64) -> f64 {
        match self.poisson_mu {
            Some(mu) => (-mu * eta).exp(),
            None => {
                let t = 1.0 - eta;
                self.p[0] + self.p[1] * t + self.p[2] * t * t
            }
        }
    }

    /// Draws a photon number by inverting the CDF.
    pub fn sample_photon_number<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let mut cdf = 0.0;
        for n in 0..3u32 {
            cdf += self.p[n as usize];
            if u < cdf {
                return n;
            }
        }
        match self.poisson_mu {
            Some(mu) => {
                let mut n = 3u32;
                let mut pn = self.p[2] * mu / 3.0;
                loop {
                    cdf += pn;
                    if u < cdf || pn < f64::MIN_POSITIVE {
                        return n;
                    }
                    n += 1;
                    pn *= mu / n as f64;
                }
            }
            // rounding residue of a truncated distribution
            None => (0..3).rev().find(|&n| self.p[n as usize] > 0.0).unwrap_or(0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn poisson_values() {
        assert!((poisson_pn(0.0013, 0).unwrap() - 0.998_700_844_633_952_3).abs() < 1e-15);
        assert!((poisson_pn(0.0013, 1).unwrap() - 1.298_311_098_024_138e-3).abs() < 1e-17);
        assert!((poisson_pn(1e-12, 0).unwrap() - 1.0).abs() < 1e-11);
    }

    #[test]
    fn poisson_rejects_bad_mean() {
        assert!(poisson_pn(0.0, 1).is_err());
        assert!(poisson_pn(-1.0, 1).is_err());
        assert!(poisson_pn(f64::NAN, 1).is_err());
        assert!(poisson_pn(f64::INFINITY, 1).is_err());
    }

    #[test]
    fn sps_values() {
        let s = sps_statistics(0.0013, 0.03).unwrap();
        assert!((s.pn(2) - 2.535e-8).abs() < 1e-21);
        assert_eq!(s.pn(1), 0.0013);
        assert!((s.pn(0) - 0.998_699_974_65).abs() < 1e-15);
        assert_eq!(s.pn(3), 0.0);
        assert!((s.pn(0) + s.pn(1) + s.pn(2) - 1.0).abs() < 1e-12);
        assert_eq!(sps_statistics(0.0013, 0.0).unwrap().pn(2), 0.0);
    }

    #[test]
    fn sps_domain() {
        assert!(sps_statistics(0.0, 0.03).is_err());
        assert!(sps_statistics(1.0, 0.03).is_err());
        assert!(sps_statistics(0.5, 1.0).is_err());
        assert!(sps_statistics(0.5, -0.1).is_err());
    }

    #[test]
    fn multiphoton() {
        let sps = SourceSpec::sps(0.0013, 0.03).unwrap().statistics().unwrap();
        assert!((sps.prob_multiphoton() - 2.535e-8).abs() < 1e-21);
        let wcp = SourceSpec::wcp(0.0013).unwrap().statistics().unwrap();
        assert!((wcp.prob_multiphoton() - 8.442_680_235_554_358e-7).abs() < 1e-18);
        assert!(SourceSpec::wcp(1e-9).unwrap().statistics().unwrap().prob_multiphoton() < 1e-17);
    }

    #[test]
    fn wcp_tail_mass() {
        let s = PhotonStatistics::poisson(0.7).unwrap();
        let total: f64 = (0..60).map(|n| s.pn(n)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let tail: f64 = (2..60).map(|n| s.pn(n)).sum();
        assert!((tail - s.prob_multiphoton()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_sampler() {
        let vac = PhotonStatistics::truncated(1.0, 0.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..10_000).all(|_| vac.sample_photon_number(&mut rng) == 0));
    }

    #[test]
    fn sampler_is_deterministic() {
        let s = PhotonStatistics::poisson(0.5).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..1000).map(|_| s.sample_photon_number(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }

    #[test]
    fn sampler_matches_single_photon_rate() {
        let s = sps_statistics(0.0013, 0.03).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000_000u64;
        let ones = (0..n).filter(|_| s.sample_photon_number(&mut rng) == 1).count() as f64;
        let p = 1.3e-3;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((ones / n as f64 - p).abs() < 4.0 * sigma);
    }
}
