//! Strong quantum coin flipping with single-photon and weak-coherent sources.
//!
//! The crate is organised bottom-up:
//!
//! * [`photon_source`]: photon-number statistics for WCP and SPS emitters.
//! * [`qubit_states`]: the four protocol states, overlaps and input/output tables.
//! * [`link_model`]: channel loss, detector efficiency, dark counts and click sampling.
//! * [`randomness`]: file-backed or seeded bit supplies for the two parties.
//! * [`protocol_engine`]: Monte Carlo execution of the six-step protocol.
//! * [`security_analysis`]: analytic cheating bounds, fairness solver and sweeps.
//! * [`net`]: Alice, Bob and a trusted physics process over a line-framed transport.
//! * [`config`]: flat scenario files used by the `qscf` binary.

pub mod cli;
pub mod config;
pub mod error;
pub mod link_model;
pub mod net;
pub mod photon_source;
pub mod protocol_engine;
pub mod qubit_states;
pub mod randomness;
pub mod security_analysis;

pub use error::{Error, Result};
pub use link_model::LinkBudget;
pub use photon_source::{PhotonStatistics, SourceKind, SourceSpec};
pub use protocol_engine::{FlipKind, FlipOutcome, ScenarioConfig, SessionStats};
pub use qubit_states::{IoTable, StateLabel, StateParameter};
pub use randomness::{BitSource, BitSourceSpec};
pub use security_analysis::{GainMap, SecurityReport};
