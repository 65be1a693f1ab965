//! Flat TOML scenario files.
//!
//! ```toml
//! source = "sps"
//! mu = 0.0013
//! g2 = 0.03
//! loss_db = 0.0
//! eta_bob = 0.5
//! eta_det = 0.85
//! p_dark = 4e-7
//! qber = 0.028
//! pulses_per_flip = 50000
//! state_a = 0.9
//! clock_hz = 80e6
//! seed = 1
//! ```
//!
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::link_model::LinkBudget;
use crate::photon_source::{SourceKind, SourceSpec};
use crate::protocol_engine::{RngConfig, ScenarioConfig};
use crate::qubit_states::StateParameter;
use crate::randomness::{stream, BitSourceSpec};
use crate::security_analysis::SweepSpec;

pub const DEFAULT_K_GRID: [u64; 13] = [
    1_000, 2_000, 5_000, 10_000, 20_000, 50_000, 100_000, 200_000, 500_000, 1_000_000, 2_000_000, 5_000_000, 10_000_000,
];

pub const DEFAULT_MU_GRID: [f64; 11] = [1e-4, 2e-4, 5e-4, 1e-3, 1.3e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    source: SourceKind,
    mu: f64,
    #[serde(default)]
    g2: Option<f64>,
    #[serde(default)]
    loss_db: f64,
    eta_bob: f64,
    eta_det: f64,
    p_dark: f64,
    qber: f64,
    pulses_per_flip: u64,
    state_a: f64,
    clock_hz: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    alice_random_file: Option<PathBuf>,
    #[serde(default)]
    bob_random_file: Option<PathBuf>,
    #[serde(default)]
    n_flips: Option<u64>,
    #[serde(default)]
    fixed_a: Option<f64>,
    #[serde(default)]
    k_grid: Option<Vec<u64>>,
    #[serde(default)]
    mu_grid: Option<Vec<f64>>,
}

/// A validated scenario plus command options.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub seed: u64,
    pub n_flips: Option<u64>,
    pub fixed_a: Option<f64>,
    pub k_grid: Vec<u64>,
    pub mu_grid: Vec<f64>,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Relative random-file paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let f: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let cfg = |e: Error| Error::Config(e.to_string());
        let source = match f.source {
            SourceKind::Wcp => SourceSpec::wcp(f.mu),
            SourceKind::Sps => {
                let g2 = f.g2.ok_or_else(|| Error::Config("sps source needs g2".into()))?;
                SourceSpec::sps(f.mu, g2)
            }
        }
        .map_err(cfg)?;
        source.statistics().map_err(cfg)?;
        let link = LinkBudget::new(f.loss_db, f.eta_bob, f.eta_det, f.p_dark, f.qber).map_err(cfg)?;
        let a = StateParameter::new(f.state_a).map_err(cfg)?;
        if let Some(fa) = f.fixed_a {
            StateParameter::new(fa).map_err(cfg)?;
        }
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let mut rng = RngConfig::seeded(f.seed);
        if let Some(p) = f.alice_random_file {
            rng.alice = BitSourceSpec::File(resolve(p));
        }
        if let Some(p) = f.bob_random_file {
            rng.bob = BitSourceSpec::File(resolve(p));
        }
        let scenario =
            ScenarioConfig { source, link, pulses_per_flip: f.pulses_per_flip, a, clock_hz: f.clock_hz, rng };
        scenario.validate().map_err(cfg)?;
        if f.n_flips == Some(0) {
            return Err(Error::Config("n_flips must be >= 1".into()));
        }
        Ok(RunConfig {
            scenario,
            seed: f.seed,
            n_flips: f.n_flips,
            fixed_a: f.fixed_a,
            k_grid: f.k_grid.unwrap_or_else(|| DEFAULT_K_GRID.to_vec()),
            mu_grid: f.mu_grid.unwrap_or_else(|| DEFAULT_MU_GRID.to_vec()),
        })
    }

    /// Reseeds every stream that is not file-backed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        let rng = &mut self.scenario.rng;
        if let BitSourceSpec::Seeded { .. } = rng.alice {
            rng.alice = BitSourceSpec::Seeded { seed, stream: stream::ALICE };
        }
        if let BitSourceSpec::Seeded { .. } = rng.bob {
            rng.bob = BitSourceSpec::Seeded { seed, stream: stream::BOB };
        }
        rng.physics_seed = seed;
        self
    }

    pub fn sweep_spec(&self, kind: SourceKind) -> SweepSpec {
        SweepSpec {
            kind,
            g2: if self.scenario.source.kind == SourceKind::Sps { self.scenario.source.g2 } else { 0.0 },
            link: self.scenario.link,
            clock_hz: self.scenario.clock_hz,
            k_grid: self.k_grid.clone(),
            mu_grid: self.mu_grid.clone(),
            fixed_a: self.fixed_a,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE1: &str = include_str!("../../../configs/table1.cfg");

    #[test]
    fn bundled_config_is_table1() {
        let cfg = RunConfig::parse(TABLE1, Path::new(".")).unwrap();
        assert_eq!(cfg.scenario, ScenarioConfig::table1());
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{TABLE1}\nwavelength_nm = 921\n");
        let err = RunConfig::parse(&text, Path::new(".")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("wavelength_nm"), "{err}");
    }

    #[test]
    fn out_of_range_a_rejected() {
        let text = TABLE1.replace("state_a = 0.9", "state_a = 1.2");
        assert!(matches!(RunConfig::parse(&text, Path::new(".")), Err(Error::Config(_))));
    }

    #[test]
    fn sps_needs_g2() {
        let text: String = TABLE1.lines().filter(|l| !l.starts_with("g2")).map(|l| format!("{l}\n")).collect();
        assert!(RunConfig::parse(&text, Path::new(".")).is_err());
    }

    #[test]
    fn random_files_resolve_relative() {
        let text = format!("{TABLE1}\nalice_random_file = \"qrng.bin\"\n");
        let cfg = RunConfig::parse(&text, Path::new("/data")).unwrap();
        assert_eq!(cfg.scenario.rng.alice, BitSourceSpec::File(PathBuf::from("/data/qrng.bin")));
        let reseeded = cfg.with_seed(9);
        assert_eq!(reseeded.scenario.rng.alice, BitSourceSpec::File(PathBuf::from("/data/qrng.bin")));
        assert_eq!(reseeded.scenario.rng.bob, BitSourceSpec::Seeded { seed: 9, stream: stream::BOB });
    }
}
