//! Quantum-mechanical predictions for the Eberhard/CH and CHSH observables.
//!
//! Two state families are supported, both parameterized by a real ratio `r`:
//!
//! ```text
//! PsiE:  (1+r²)^(-1/2) ( |x_A y_B> + r |y_A x_B> )
//! PhiE:  (1+r²)^(-1/2) ( |x_A x_B> + r |y_A y_B> )
//! ```
//!
//! Analyzer angles are measured from the `x` axis. A "+" outcome means the
//! photon passes the analyzer and reaches the (single) detector of its station.

mod bell_basis;
mod counts;
mod nelder_mead;
mod optimize;
mod threshold;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bell_basis::{bell_basis_identity_check, swap_projection, BellIdentityCheck};
pub use counts::{j_from_counts, CountsQuad, JEstimate, PairCounts};
pub use optimize::{
    optimize_chsh, optimize_j, optimize_j_for, Objective, OptimizerConfig, Optimum, RChoice,
};
pub use threshold::{eta_threshold, eta_threshold_with, per_pair_background, VIOLATION_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateVariant {
    PsiE,
    PhiE,
}

impl std::str::FromStr for StateVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "psi" | "psie" | "psi_e" => Ok(StateVariant::PsiE),
            "phi" | "phie" | "phi_e" => Ok(StateVariant::PhiE),
            other => Err(Error::invalid(
                "state",
                format!("unknown state family `{other}`"),
            )),
        }
    }
}

impl std::fmt::Display for StateVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StateVariant::PsiE => "psi",
            StateVariant::PhiE => "phi",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Station {
    A,
    B,
}

impl std::fmt::Display for Station {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Station::A => "A",
            Station::B => "B",
        })
    }
}

/// A partially entangled two-photon state. `r` carries its sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntangledState {
    variant: StateVariant,
    r: f64,
}

impl EntangledState {
    pub fn new(variant: StateVariant, r: f64) -> Result<Self> {
        if !r.is_finite() || r.abs() > 1.0 {
            return Err(Error::invalid("r", format!("need |r| <= 1, got {r}")));
        }
        Ok(Self { variant, r })
    }

    pub fn psi(r: f64) -> Result<Self> {
        Self::new(StateVariant::PsiE, r)
    }

    pub fn phi(r: f64) -> Result<Self> {
        Self::new(StateVariant::PhiE, r)
    }

    pub fn variant(&self) -> StateVariant {
        self.variant
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    fn norm(&self) -> f64 {
        1.0 / (1.0 + self.r * self.r)
    }
}

/// Concurrence `2|r|/(1+r²)`.
pub fn concurrence(state: &EntangledState) -> f64 {
    2.0 * state.r.abs() * state.norm()
}

/// Probability that both photons pass their analyzers at angles `alpha` (A) and `beta` (B).
pub fn coincidence_probability(state: &EntangledState, alpha: f64, beta: f64) -> f64 {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let amp = match state.variant {
        StateVariant::PsiE => ca * sb + state.r * sa * cb,
        StateVariant::PhiE => ca * cb + state.r * sa * sb,
    };
    state.norm() * amp * amp
}

/// Probability that the photon at `station` passes an analyzer set to `angle`.
pub fn singles_probability(state: &EntangledState, station: Station, angle: f64) -> f64 {
    let (s, c) = angle.sin_cos();
    let r2 = state.r * state.r;
    let v = match (state.variant, station) {
        (StateVariant::PsiE, Station::B) => r2 * c * c + s * s,
        _ => c * c + r2 * s * s,
    };
    state.norm() * v
}

/// One of the four joint setting pairs, in the order used for all per-pair arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SettingPair {
    AB = 0,
    ABPrime = 1,
    APrimeB = 2,
    APrimeBPrime = 3,
}

impl SettingPair {
    pub const ALL: [SettingPair; 4] = [
        SettingPair::AB,
        SettingPair::ABPrime,
        SettingPair::APrimeB,
        SettingPair::APrimeBPrime,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> SettingPair {
        Self::ALL[i]
    }

    /// Pair from per-station setting bits (0 = unprimed, 1 = primed).
    pub fn from_bits(a_primed: bool, b_primed: bool) -> SettingPair {
        Self::ALL[(a_primed as usize) * 2 + b_primed as usize]
    }

    pub fn a_primed(self) -> bool {
        matches!(self, SettingPair::APrimeB | SettingPair::APrimeBPrime)
    }

    pub fn b_primed(self) -> bool {
        matches!(self, SettingPair::ABPrime | SettingPair::APrimeBPrime)
    }

    /// Sign of this pair's coincidence term in the CH/CHSH combination.
    pub fn sign(self) -> f64 {
        if self == SettingPair::APrimeBPrime {
            -1.0
        } else {
            1.0
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SettingPair::AB => "(a,b)",
            SettingPair::ABPrime => "(a,b')",
            SettingPair::APrimeB => "(a',b)",
            SettingPair::APrimeBPrime => "(a',b')",
        }
    }
}

fn reduce_angle(x: f64) -> f64 {
    let y = x.rem_euclid(PI);
    // rem_euclid can return PI itself for tiny negative inputs
    if y >= PI {
        0.0
    } else {
        y
    }
}

/// The four analyzer angles, reduced to `[0, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingsQuad {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl SettingsQuad {
    pub fn new(a: f64, a_prime: f64, b: f64, b_prime: f64) -> Result<Self> {
        for (name, v) in [
            ("a", a),
            ("a_prime", a_prime),
            ("b", b),
            ("b_prime", b_prime),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "angle must be finite"));
            }
        }
        Ok(Self::reduced(a, a_prime, b, b_prime))
    }

    pub(crate) fn reduced(a: f64, a_prime: f64, b: f64, b_prime: f64) -> Self {
        Self {
            a: reduce_angle(a),
            a_prime: reduce_angle(a_prime),
            b: reduce_angle(b),
            b_prime: reduce_angle(b_prime),
        }
    }

    pub fn from_degrees(a: f64, a_prime: f64, b: f64, b_prime: f64) -> Result<Self> {
        Self::new(
            a.to_radians(),
            a_prime.to_radians(),
            b.to_radians(),
            b_prime.to_radians(),
        )
    }

    pub fn alice(&self, primed: bool) -> f64 {
        if primed {
            self.a_prime
        } else {
            self.a
        }
    }

    pub fn bob(&self, primed: bool) -> f64 {
        if primed {
            self.b_prime
        } else {
            self.b
        }
    }

    /// Angles `(alpha, beta)` of a joint setting pair.
    pub fn angles(&self, pair: SettingPair) -> (f64, f64) {
        (self.alice(pair.a_primed()), self.bob(pair.b_primed()))
    }

    /// Every analyzer rotated by π/2, which swaps its pass and block channels.
    pub fn complement(&self) -> Self {
        let h = PI / 2.0;
        Self::reduced(self.a + h, self.a_prime + h, self.b + h, self.b_prime + h)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.a, self.a_prime, self.b, self.b_prime]
    }
}

/// Detector efficiencies and per-trial background-count probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel {
    pub eta_a: f64,
    pub eta_b: f64,
    pub beta_a: f64,
    pub beta_b: f64,
}

impl Default for DetectionModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl DetectionModel {
    pub fn new(eta_a: f64, eta_b: f64, beta_a: f64, beta_b: f64) -> Result<Self> {
        for (name, v) in [("eta_a", eta_a), ("eta_b", eta_b)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(
                    name,
                    format!("efficiency must lie in [0,1], got {v}"),
                ));
            }
        }
        for (name, v) in [("beta_a", beta_a), ("beta_b", beta_b)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::invalid(
                    name,
                    format!("background must lie in [0,1), got {v}"),
                ));
            }
        }
        Ok(Self {
            eta_a,
            eta_b,
            beta_a,
            beta_b,
        })
    }

    pub fn ideal() -> Self {
        Self {
            eta_a: 1.0,
            eta_b: 1.0,
            beta_a: 0.0,
            beta_b: 0.0,
        }
    }

    pub fn symmetric(eta: f64) -> Result<Self> {
        Self::new(eta, eta, 0.0, 0.0)
    }

    pub fn with_background(self, beta_a: f64, beta_b: f64) -> Result<Self> {
        Self::new(self.eta_a, self.eta_b, beta_a, beta_b)
    }

    /// Observed single-click probability for a station whose photon passes with probability `p`.
    pub fn observed_single(&self, station: Station, p: f64) -> f64 {
        let (eta, beta) = match station {
            Station::A => (self.eta_a, self.beta_a),
            Station::B => (self.eta_b, self.beta_b),
        };
        let signal = eta * p;
        signal + beta * (1.0 - signal)
    }

    /// Observed coincidence probability: true coincidences plus accidental cross terms.
    pub fn observed_coincidence(&self, p_ab: f64, p_a: f64, p_b: f64) -> f64 {
        self.eta_a * self.eta_b * p_ab
            + self.eta_a * p_a * self.beta_b
            + self.eta_b * p_b * self.beta_a
            + self.beta_a * self.beta_b
    }
}

/// Folded (observed) probabilities at the four setting pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedProbabilities {
    /// Indexed by [`SettingPair::index`].
    pub coincidence: [f64; 4],
    /// `[P(a), P(a')]` at station A.
    pub singles_a: [f64; 2],
    /// `[P(b), P(b')]` at station B.
    pub singles_b: [f64; 2],
}

impl ObservedProbabilities {
    pub fn compute(state: &EntangledState, settings: &SettingsQuad, det: &DetectionModel) -> Self {
        let raw_a = [
            singles_probability(state, Station::A, settings.a),
            singles_probability(state, Station::A, settings.a_prime),
        ];
        let raw_b = [
            singles_probability(state, Station::B, settings.b),
            singles_probability(state, Station::B, settings.b_prime),
        ];
        let mut coincidence = [0.0; 4];
        for pair in SettingPair::ALL {
            let (alpha, beta) = settings.angles(pair);
            let pa = raw_a[pair.a_primed() as usize];
            let pb = raw_b[pair.b_primed() as usize];
            coincidence[pair.index()] =
                det.observed_coincidence(coincidence_probability(state, alpha, beta), pa, pb);
        }
        Self {
            coincidence,
            singles_a: raw_a.map(|p| det.observed_single(Station::A, p)),
            singles_b: raw_b.map(|p| det.observed_single(Station::B, p)),
        }
    }

    /// The CH combination `C(a,b)+C(a,b')+C(a',b)-C(a',b') - P(a) - P(b)`.
    pub fn j(&self) -> f64 {
        ch_combination(&self.coincidence) - self.singles_a[0] - self.singles_b[0]
    }

    /// Sign correlator `E = P++ + P-- - P+- - P-+`, with "-" meaning no click.
    pub fn correlator(&self, pair: SettingPair) -> f64 {
        let pa = self.singles_a[pair.a_primed() as usize];
        let pb = self.singles_b[pair.b_primed() as usize];
        1.0 - 2.0 * pa - 2.0 * pb + 4.0 * self.coincidence[pair.index()]
    }

    pub fn chsh(&self) -> f64 {
        SettingPair::ALL
            .iter()
            .map(|&p| p.sign() * self.correlator(p))
            .sum()
    }
}

pub(crate) fn ch_combination(c: &[f64; 4]) -> f64 {
    c[0] + c[1] + c[2] - c[3]
}

/// The CH/Eberhard quantity `J` with efficiency and background folding.
pub fn j_probability(state: &EntangledState, settings: &SettingsQuad, det: &DetectionModel) -> f64 {
    ObservedProbabilities::compute(state, settings, det).j()
}

/// CHSH `S = E(a,b) + E(a,b') + E(a',b) - E(a',b')`.
pub fn chsh_s(state: &EntangledState, settings: &SettingsQuad, det: &DetectionModel) -> f64 {
    ObservedProbabilities::compute(state, settings, det).chsh()
}

/// First-order approximation `J ≈ η r²`.
pub fn approx_j(r: f64, eta: f64) -> f64 {
    eta * r * r
}

/// Ideal-probability pieces of `J`: the coincidence combination and the singles sum.
///
/// With per-arm efficiencies `J = η_a η_b · coincidence - η_a · P(a) - η_b · P(b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JParts {
    pub coincidence: f64,
    pub singles_a: f64,
    pub singles_b: f64,
}

impl JParts {
    pub fn compute(state: &EntangledState, settings: &SettingsQuad) -> Self {
        let obs = ObservedProbabilities::compute(state, settings, &DetectionModel::ideal());
        Self {
            coincidence: ch_combination(&obs.coincidence),
            singles_a: obs.singles_a[0],
            singles_b: obs.singles_b[0],
        }
    }

    pub fn j(&self, eta_a: f64, eta_b: f64) -> f64 {
        eta_a * eta_b * self.coincidence - eta_a * self.singles_a - eta_b * self.singles_b
    }
}
