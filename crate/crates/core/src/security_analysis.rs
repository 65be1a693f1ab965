//! Analytic cheating bounds, the classical comparison and the fairness
//! optimisation over the state parameter `a`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::link_model::{no_detection_prob, per_pulse_click_prob, LinkBudget};
use crate::photon_source::{PhotonStatistics, SourceKind, SourceSpec};
use crate::protocol_engine::ScenarioConfig;
use crate::qubit_states::StateParameter;

/// Lowest cheating probability any strong coin-flipping protocol can reach.
pub const KITAEV_MIN_CHEAT: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Distance kept from the open ends of (0.5, 1) during root search.
const BRACKET_MARGIN: f64 = 1e-9;
const ROOT_TOL: f64 = 1e-12;

fn check_a(a: f64) -> Result<f64> {
    StateParameter::new(a).map(StateParameter::value)
}

/// `3/4 + sqrt(a (1 - a)) / 2`.
pub fn alice_cheat_prob(a: f64) -> Result<f64> {
    let a = check_a(a)?;
    Ok(0.75 + 0.5 * (a * (1.0 - a)).sqrt())
}

/// Probability that at least one of `pulses` pulses carries two or more photons.
pub fn multiphoton_exposure(stats: &PhotonStatistics, pulses: u64) -> f64 {
    1.0 - no_detection_prob(stats.prob_multiphoton(), pulses)
}

/// `P_multi + (1 - P_multi) a`.
pub fn bob_cheat_prob(a: f64, stats: &PhotonStatistics, pulses: u64) -> Result<f64> {
    let a = check_a(a)?;
    let p_multi = multiphoton_exposure(stats, pulses);
    Ok(p_multi + (1.0 - p_multi) * a)
}

/// `Z + (1 - Z) e / 2` with `Z` the chance that none of the K pulses click.
pub fn honest_abort_prob(qber: f64, p_click: f64, pulses: u64) -> f64 {
    let z = no_detection_prob(p_click, pulses);
    z + (1.0 - z) * qber / 2.0
}

/// Cheating probability of the classical protocol with the same honest
/// abort rate: `max(0, 1 - 6 H)`.
pub fn classical_cheat_bound(h: f64) -> f64 {
    (1.0 - 6.0 * h).max(0.0)
}

/// Unbiased coin flips per second, `(R0 / K)(1 - H)`.
pub fn coin_flip_rate(clock_hz: f64, pulses: u64, h: f64) -> f64 {
    clock_hz / pulses as f64 * (1.0 - h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecurityReport {
    pub a: f64,
    pub p_alice: f64,
    pub p_bob: f64,
    pub p_honest_abort: f64,
    pub p_classical: f64,
    /// `p_classical - max(p_alice, p_bob)` in percentage points.
    pub gain_pp: f64,
    /// Gain relative to the classical bound, in percent.
    pub gain_relative_pct: f64,
    pub p_click: f64,
    pub p_multi: f64,
    pub rate_hz: f64,
}

impl SecurityReport {
    pub fn max_cheat(&self) -> f64 {
        self.p_alice.max(self.p_bob)
    }
}

fn report(stats: &PhotonStatistics, link: &LinkBudget, pulses: u64, a: f64, clock_hz: f64) -> Result<SecurityReport> {
    let p_alice = alice_cheat_prob(a)?;
    let p_bob = bob_cheat_prob(a, stats, pulses)?;
    let p_click = per_pulse_click_prob(stats, link);
    let h = honest_abort_prob(link.qber, p_click, pulses);
    let p_classical = classical_cheat_bound(h);
    let gain = p_classical - p_alice.max(p_bob);
    Ok(SecurityReport {
        a,
        p_alice,
        p_bob,
        p_honest_abort: h,
        p_classical,
        gain_pp: 100.0 * gain,
        gain_relative_pct: if p_classical > 0.0 { 100.0 * gain / p_classical } else { f64::NAN },
        p_click,
        p_multi: multiphoton_exposure(stats, pulses),
        rate_hz: coin_flip_rate(clock_hz, pulses, h),
    })
}

/// All bounds for a scenario at its configured `a`.
pub fn quantum_gain(scenario: &ScenarioConfig) -> Result<SecurityReport> {
    scenario.validate()?;
    report(&scenario.statistics()?, &scenario.link, scenario.pulses_per_flip, scenario.a.value(), scenario.clock_hz)
}

/// The `a` at which Alice's and Bob's cheating probabilities coincide.
///
/// Alice's bound falls and Bob's rises with `a` on (0.5, 1), so the
/// difference has at most one sign change there. The crossing is found by
/// Illinois-modified regula falsi to within 1e-12 in `a`.
pub fn solve_fair_a(stats: &PhotonStatistics, pulses: u64) -> Result<StateParameter> {
    let p_multi = multiphoton_exposure(stats, pulses);
    let f = |a: f64| 0.75 + 0.5 * (a * (1.0 - a)).sqrt() - (p_multi + (1.0 - p_multi) * a);
    let (mut lo, mut hi) = (0.5 + BRACKET_MARGIN, 1.0 - BRACKET_MARGIN);
    let (mut f_lo, mut f_hi) = (f(lo), f(hi));
    // f_lo <= 0 means Bob's bound already reaches Alice's at the lower edge
    if f_lo <= 0.0 || f_hi >= 0.0 {
        return Err(Error::Infeasible(format!(
            "Bob's bound exceeds Alice's for every a (multiphoton exposure {p_multi:.6})"
        )));
    }
    let mut side = 0i8;
    let mut x = lo;
    for _ in 0..200 {
        x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        let fx = f(x);
        if fx == 0.0 || hi - lo < ROOT_TOL {
            break;
        }
        if fx.signum() == f_hi.signum() {
            hi = x;
            f_hi = fx;
            if side == -1 {
                f_lo /= 2.0;
            }
            side = -1;
        } else {
            lo = x;
            f_lo = fx;
            if side == 1 {
                f_hi /= 2.0;
            }
            side = 1;
        }
        if (hi - lo).abs() < ROOT_TOL {
            x = 0.5 * (lo + hi);
            break;
        }
    }
    StateParameter::new(x)
}

/// Minimises `max(P_A, P_B)` over a uniform grid of `a`. Used where no fair
/// point exists.
pub fn minmax_a(stats: &PhotonStatistics, pulses: u64, points: usize) -> Result<(f64, f64)> {
    let mut best = (f64::NAN, f64::INFINITY);
    for i in 1..points {
        let a = 0.5 + 0.5 * i as f64 / points as f64;
        let m = alice_cheat_prob(a)?.max(bob_cheat_prob(a, stats, pulses)?);
        if m < best.1 {
            best = (a, m);
        }
    }
    Ok(best)
}

/// Inputs of a (K, mu) gain map.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub kind: SourceKind,
    /// Only used for SPS.
    pub g2: f64,
    pub link: LinkBudget,
    pub clock_hz: f64,
    pub k_grid: Vec<u64>,
    pub mu_grid: Vec<f64>,
    /// Hold `a` fixed instead of re-optimising per cell.
    pub fixed_a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainCell {
    pub k: u64,
    pub mu: f64,
    pub a_star: f64,
    pub p_alice: f64,
    pub p_bob: f64,
    pub h: f64,
    pub p_classical: f64,
    /// Probability difference, not percent.
    pub gain: f64,
    /// Why the cell is not at a fair point, if it is not.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainMap {
    pub kind: SourceKind,
    pub k_grid: Vec<u64>,
    pub mu_grid: Vec<f64>,
    /// Row-major: all mu values for the first K, then the next K.
    pub cells: Vec<GainCell>,
}

impl GainMap {
    pub fn cell(&self, k: u64, mu: f64) -> Option<&GainCell> {
        self.cells.iter().find(|c| c.k == k && c.mu == mu)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("K,mu,a_star,p_alice,p_bob,H,p_classical,gain,reason\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                c.k,
                sig4(c.mu),
                sig4(c.a_star),
                sig4(c.p_alice),
                sig4(c.p_bob),
                sig4(c.h),
                sig4(c.p_classical),
                sig4(c.gain),
                c.note.as_deref().unwrap_or("")
            ));
        }
        out
    }
}

/// Four significant digits, `NaN` spelled out.
pub fn sig4(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let s = format!("{x:.3e}");
    let v: f64 = s.parse().unwrap_or(x);
    let mag = v.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (3 - mag).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        s
    }
}

fn is_strictly_increasing<T: PartialOrd>(xs: &[T]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

fn sweep_cell(spec: &SweepSpec, k: u64, mu: f64) -> GainCell {
    let failed = |note: String| GainCell {
        k,
        mu,
        a_star: f64::NAN,
        p_alice: f64::NAN,
        p_bob: f64::NAN,
        h: f64::NAN,
        p_classical: f64::NAN,
        gain: f64::NAN,
        note: Some(note),
    };
    let source = match spec.kind {
        SourceKind::Wcp => SourceSpec::wcp(mu),
        SourceKind::Sps => SourceSpec::sps(mu, spec.g2),
    };
    let stats = match source.and_then(|s| s.statistics()) {
        Ok(s) => s,
        Err(e) => return failed(e.to_string()),
    };
    let (a, note) = match spec.fixed_a {
        Some(a) => (a, None),
        None => match solve_fair_a(&stats, k) {
            Ok(a) => (a.value(), None),
            Err(Error::Infeasible(_)) => match minmax_a(&stats, k, 20_000) {
                Ok((a, _)) => (a, Some("infeasible fairness; min-max a".to_string())),
                Err(e) => return failed(e.to_string()),
            },
            Err(e) => return failed(e.to_string()),
        },
    };
    match report(&stats, &spec.link, k, a, spec.clock_hz) {
        Ok(r) => GainCell {
            k,
            mu,
            a_star: a,
            p_alice: r.p_alice,
            p_bob: r.p_bob,
            h: r.p_honest_abort,
            p_classical: r.p_classical,
            gain: r.p_classical - r.max_cheat(),
            note,
        },
        Err(e) => failed(e.to_string()),
    }
}

/// Gain over a (K, mu) grid. Cells that cannot be evaluated carry NaN and a
/// reason; the sweep itself only fails on malformed grids.
pub fn sweep_gain(spec: &SweepSpec, jobs: usize) -> Result<GainMap> {
    if spec.k_grid.is_empty() || spec.mu_grid.is_empty() {
        return Err(Error::domain("sweep grids must be non-empty"));
    }
    if !is_strictly_increasing(&spec.k_grid) || !is_strictly_increasing(&spec.mu_grid) {
        return Err(Error::domain("sweep grid axes must be strictly increasing"));
    }
    if spec.k_grid[0] == 0 {
        return Err(Error::domain("K grid values must be >= 1"));
    }
    spec.link.validate()?;
    let coords: Vec<(u64, f64)> =
        spec.k_grid.iter().flat_map(|&k| spec.mu_grid.iter().map(move |&mu| (k, mu))).collect();
    let cells = if jobs <= 1 {
        coords.iter().map(|&(k, mu)| sweep_cell(spec, k, mu)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        pool.install(|| coords.par_iter().map(|&(k, mu)| sweep_cell(spec, k, mu)).collect())
    };
    Ok(GainMap { kind: spec.kind, k_grid: spec.k_grid.clone(), mu_grid: spec.mu_grid.clone(), cells })
}
