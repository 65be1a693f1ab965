//! The four protocol states and what Bob's passive four-outcome analyzer
//! sees when they arrive.
//!
//! States are real two-vectors:
//!
//! ```text
//! |phi(alpha, 0)> =  sqrt(a)   |0> + (-1)^alpha sqrt(1-a) |1>
//! |phi(alpha, 1)> =  sqrt(1-a) |0> - (-1)^alpha sqrt(a)   |1>
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Preparation basis and encoded bit of one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateLabel {
    pub basis: u8,
    pub bit: u8,
}

impl StateLabel {
    /// All labels in table order: (0,0), (0,1), (1,0), (1,1).
    pub const ALL: [StateLabel; 4] = [
        StateLabel { basis: 0, bit: 0 },
        StateLabel { basis: 0, bit: 1 },
        StateLabel { basis: 1, bit: 0 },
        StateLabel { basis: 1, bit: 1 },
    ];

    pub fn new(basis: u8, bit: u8) -> Result<Self> {
        if basis > 1 || bit > 1 {
            return Err(Error::domain(format!("state label ({basis}, {bit}) out of range")));
        }
        Ok(StateLabel { basis, bit })
    }

    /// Table index `2 * basis + bit`.
    pub fn index(self) -> usize {
        (2 * self.basis + self.bit) as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn same_basis(self, other: StateLabel) -> bool {
        self.basis == other.basis
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.basis, self.bit)
    }
}

/// Amplitude weight `a` of the protocol states, restricted to (0.5, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct StateParameter(f64);

impl StateParameter {
    pub fn new(a: f64) -> Result<Self> {
        if a.is_finite() && a > 0.5 && a < 1.0 {
            Ok(StateParameter(a))
        } else {
            Err(Error::domain(format!("state parameter a must lie in (0.5, 1), got {a}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl<'de> Deserialize<'de> for StateParameter {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let a = f64::deserialize(d)?;
        StateParameter::new(a).map_err(serde::de::Error::custom)
    }
}

/// Amplitudes on |0> and |1>.
pub fn state_amplitudes(a: StateParameter, label: StateLabel) -> [f64; 2] {
    let a = a.value();
    let sign = if label.basis == 0 { 1.0 } else { -1.0 };
    match label.bit {
        0 => [a.sqrt(), sign * (1.0 - a).sqrt()],
        _ => [(1.0 - a).sqrt(), -sign * a.sqrt()],
    }
}

/// `|<phi_meas|phi_sent>|^2`, in closed form.
pub fn overlap_prob(a: StateParameter, sent: StateLabel, meas: StateLabel) -> f64 {
    let a = a.value();
    match (sent.same_basis(meas), sent.bit == meas.bit) {
        (true, true) => 1.0,
        (true, false) => 0.0,
        (false, true) => (2.0 * a - 1.0).powi(2),
        (false, false) => 4.0 * a * (1.0 - a),
    }
}

/// Conditional detection probabilities: rows are sent labels, columns the
/// detected channel, both in [`StateLabel::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IoTable(pub [[f64; 4]; 4]);

impl IoTable {
    pub fn row(&self, sent: StateLabel) -> &[f64; 4] {
        &self.0[sent.index()]
    }

    pub fn entry(&self, sent: StateLabel, detected: StateLabel) -> f64 {
        self.0[sent.index()][detected.index()]
    }

    /// Same-basis error ratio averaged over the four sent states.
    pub fn qber(&self) -> f64 {
        StateLabel::ALL
            .iter()
            .map(|&s| {
                let right = self.entry(s, s);
                let wrong = self.entry(s, StateLabel { basis: s.basis, bit: 1 - s.bit });
                if right + wrong > 0.0 {
                    wrong / (right + wrong)
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            / 4.0
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sent,det_00,det_01,det_10,det_11\n");
        for s in StateLabel::ALL {
            let cells: Vec<String> = self.row(s).iter().map(|p| format!("{p:.4}")).collect();
            out.push_str(&format!("{}{},{}\n", s.basis, s.bit, cells.join(",")));
        }
        out
    }
}

/// Expected table for a passive 50/50 basis split. Same-basis columns carry
/// the QBER `e`; cross-basis columns keep the ideal halved overlaps.
pub fn expected_io_table(a: StateParameter, qber: f64) -> Result<IoTable> {
    if !(0.0..0.5).contains(&qber) {
        return Err(Error::domain(format!("qber must lie in [0, 0.5), got {qber}")));
    }
    let mut t = [[0.0; 4]; 4];
    for sent in StateLabel::ALL {
        for det in StateLabel::ALL {
            t[sent.index()][det.index()] = if sent.same_basis(det) {
                if sent.bit == det.bit {
                    0.5 * (1.0 - qber)
                } else {
                    0.5 * qber
                }
            } else {
                0.5 * overlap_prob(a, sent, det)
            };
        }
    }
    Ok(IoTable(t))
}

/// Optimal single-copy probability of learning the bit `c`.
///
/// The two bit mixtures `rho_c = (|phi(0,c)><phi(0,c)| + |phi(1,c)><phi(1,c)|) / 2`
/// are `diag(a, 1-a)` and `diag(1-a, a)`, so a computational-basis
/// measurement is optimal and succeeds with probability `a`.
pub fn helstrom_guess_prob(a: StateParameter) -> f64 {
    a.value()
}
