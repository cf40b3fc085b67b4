//! Hidden-variable model with measurement dependence ("HV+DZ").
//!
//! Each emitted pair carries a label μ ∈ {1,2,3,4} naming the joint setting it
//! aims for: (a,b), (a,b'), (a',b), (a',b'), in [`SettingPair`] order. For a
//! fixed μ the pair behaves as a deterministic local model whose coincidence
//! table is shifted by displacements `d[j][μ]`; every such table saturates the
//! inequality. A violation appears only through the correlation `q` between μ
//! and the settings actually chosen.

mod feasibility;
mod sampling;

pub use feasibility::{lhv_feasibility, AtomMeasure, Feasibility};
pub use sampling::{sample_trials, TrialOutcome, TrialSampler};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum_model::SettingPair;

const TABLE_TOL: f64 = 1e-12;

/// Singles probabilities at the four analyzer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    pub p_a: f64,
    pub p_a_prime: f64,
    pub p_b: f64,
    pub p_b_prime: f64,
}

impl Marginals {
    /// `p_a`, `p_b` with the primed settings at ¼.
    pub fn new(p_a: f64, p_b: f64) -> Result<Self> {
        Self::with_primed(p_a, 0.25, p_b, 0.25)
    }

    pub fn with_primed(p_a: f64, p_a_prime: f64, p_b: f64, p_b_prime: f64) -> Result<Self> {
        for (name, v) in [
            ("p_a", p_a),
            ("p_a_prime", p_a_prime),
            ("p_b", p_b),
            ("p_b_prime", p_b_prime),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(
                    name,
                    format!("must be a probability, got {v}"),
                ));
            }
        }
        Ok(Self {
            p_a,
            p_a_prime,
            p_b,
            p_b_prime,
        })
    }

    pub fn alice(&self, primed: bool) -> f64 {
        if primed {
            self.p_a_prime
        } else {
            self.p_a
        }
    }

    pub fn bob(&self, primed: bool) -> f64 {
        if primed {
            self.p_b_prime
        } else {
            self.p_b
        }
    }

    pub fn for_pair(&self, pair: SettingPair) -> (f64, f64) {
        (self.alice(pair.a_primed()), self.bob(pair.b_primed()))
    }
}

/// Displacements `d[j-1][μ-1]`, j ∈ {1,2,3}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Displacements {
    pub d: [[f64; 4]; 3],
}

impl Displacements {
    /// The same `d_j` for every μ.
    pub fn uniform(d1: f64, d2: f64, d3: f64) -> Self {
        Self {
            d: [[d1; 4], [d2; 4], [d3; 4]],
        }
    }

    /// Each μ reaches its target coincidence while the anti-target
    /// combination is as large as the template allows: `−J' = 2P⁺(a) + P⁺(b)`.
    pub fn maximal(p_a: f64, p_b: f64) -> Self {
        Self::maximal_with(p_a, p_b, p_a)
    }

    /// As [`maximal`](Self::maximal) with a chosen `d24 ∈ [0, P⁺(a)]`.
    pub fn maximal_with(p_a: f64, p_b: f64, d24: f64) -> Self {
        Self {
            d: [
                [0.0, 0.0, 0.0, p_a],
                [0.0, p_b, 0.0, d24],
                [0.0, 0.0, p_a, p_a - d24],
            ],
        }
    }

    pub fn get(&self, j: usize, mu: usize) -> f64 {
        self.d[j - 1][mu - 1]
    }

    /// Checks that each μ row hits its own target coincidence.
    pub fn check_targets(&self, p_a: f64) -> Result<()> {
        let close = |x: f64, y: f64| (x - y).abs() <= TABLE_TOL * (1.0 + y.abs());
        let checks = [
            (close(self.get(1, 1), 0.0), "d11 = 0"),
            (close(self.get(3, 2), 0.0), "d32 = 0"),
            (close(self.get(1, 3), self.get(2, 3)), "d13 = d23"),
            (
                close(self.get(2, 4) + self.get(3, 4), p_a),
                "d24 + d34 = p_a",
            ),
        ];
        for (ok, what) in checks {
            if !ok {
                return Err(Error::InfeasibleDisplacements(format!(
                    "target constraint violated: {what}"
                )));
            }
        }
        Ok(())
    }
}

/// Coincidence probabilities `P^μ(i,j)`: `rows[μ-1][pair.index()]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuTable {
    pub rows: [[f64; 4]; 4],
}

impl MuTable {
    pub fn get(&self, mu: usize, pair: SettingPair) -> f64 {
        self.rows[mu - 1][pair.index()]
    }

    /// Every μ row equal to the product of the marginals.
    pub fn independent(m: &Marginals) -> Self {
        let row = SettingPair::ALL.map(|p| {
            let (x, y) = m.for_pair(p);
            x * y
        });
        Self { rows: [row; 4] }
    }

    /// Rejects any row whose joint pass/fail cells go negative.
    pub fn validate(&self, m: &Marginals) -> Result<()> {
        for (mu, row) in self.rows.iter().enumerate() {
            for pair in SettingPair::ALL {
                let p = row[pair.index()];
                let (x, y) = m.for_pair(pair);
                let cells = joint_cells(p, x, y);
                if !p.is_finite() || cells.iter().any(|&c| c < -TABLE_TOL) {
                    return Err(Error::InfeasibleDisplacements(format!(
                        "P^{}{} = {p} outside [max(0, {x}+{y}-1), min({x}, {y})]",
                        mu + 1,
                        pair.label()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Joint cells `(++, +0, 0+, 00)` of one setting pair.
pub(crate) fn joint_cells(p: f64, x: f64, y: f64) -> [f64; 4] {
    [p, x - p, y - p, 1.0 - x - y + p]
}

/// Applies the displacement template without checking the result.
pub fn mu_tables_unchecked(d: &Displacements, m: &Marginals) -> MuTable {
    let (pa, pb) = (m.p_a, m.p_b);
    let mut rows = [[0.0; 4]; 4];
    for (mu, row) in rows.iter_mut().enumerate() {
        let (d1, d2, d3) = (d.d[0][mu], d.d[1][mu], d.d[2][mu]);
        row[SettingPair::AB.index()] = pa - d1;
        row[SettingPair::ABPrime.index()] = pa - d3;
        row[SettingPair::APrimeB.index()] = pb + d1 - d2;
        row[SettingPair::APrimeBPrime.index()] = pa - d2 - d3;
    }
    MuTable { rows }
}

pub fn mu_tables(d: &Displacements, m: &Marginals) -> Result<MuTable> {
    let t = mu_tables_unchecked(d, m);
    t.validate(m)?;
    Ok(t)
}

/// Weight of hidden variable `mu` given the realized setting pair.
pub fn mu_weight(q: f64, mu: usize, pair: SettingPair) -> f64 {
    let target = SettingPair::from_index(mu - 1);
    let hits = (target.a_primed() == pair.a_primed()) as i32
        + (target.b_primed() == pair.b_primed()) as i32;
    q.powi(hits) * (1.0 - q).powi(2 - hits)
}

pub fn observed_coincidences(q: f64, tables: &MuTable) -> [f64; 4] {
    SettingPair::ALL.map(|pair| {
        (1..=4)
            .map(|mu| mu_weight(q, mu, pair) * tables.get(mu, pair))
            .sum()
    })
}

/// The inequality evaluated on the observed mixture.
pub fn j_from_tables(q: f64, tables: &MuTable, m: &Marginals) -> f64 {
    let c = observed_coincidences(q, tables);
    SettingPair::ALL
        .iter()
        .map(|p| p.sign() * c[p.index()])
        .sum::<f64>()
        - m.p_a
        - m.p_b
}

/// The inequality built from each setting's anti-target row.
pub fn j_prime_from_tables(tables: &MuTable, m: &Marginals) -> f64 {
    SettingPair::ALL
        .iter()
        .map(|&p| p.sign() * tables.get(4 - p.index(), p))
        .sum::<f64>()
        - m.p_a
        - m.p_b
}

fn check_q(q: f64) -> Result<()> {
    if !(0.5..=1.0).contains(&q) {
        return Err(Error::invalid(
            "q",
            format!("must lie in [1/2, 1], got {q}"),
        ));
    }
    Ok(())
}

pub fn j_dz(q: f64, p_a: f64, j_prime: f64) -> Result<f64> {
    check_q(q)?;
    if j_prime > 0.0 {
        return Err(Error::invalid(
            "j_prime",
            format!("must be <= 0, got {j_prime}"),
        ));
    }
    Ok(q * q * p_a - q * (1.0 - q) * p_a + (1.0 - q) * (2.0 * q - 1.0) * (-j_prime))
}

pub fn j_dz_lower_bound(q: f64, p_a: f64) -> Result<f64> {
    check_q(q)?;
    let e = q - 0.5;
    Ok(p_a * (e + 2.0 * e * e))
}

pub fn s_dz(epsilon: f64) -> f64 {
    2.0 * (1.0 + epsilon + 2.0 * epsilon * epsilon)
}

pub fn q_from_s(s_target: f64) -> Result<f64> {
    if !(2.0..=4.0).contains(&s_target) {
        return Err(Error::invalid(
            "s",
            format!("must lie in [2, 4], got {s_target}"),
        ));
    }
    Ok(0.5 + (-1.0 + (1.0 + 8.0 * (s_target / 2.0 - 1.0)).sqrt()) / 4.0)
}

/// Smallest `q ∈ [½, 1]` for which the maximal model reaches `j_target`.
///
/// Without `p_b` the anti-target term is taken as `3P⁺(a)`; with it,
/// `2P⁺(a) + P⁺(b)`.
pub fn q_required(j_target: f64, p_a: f64, p_b: Option<f64>) -> Result<f64> {
    if !(j_target >= 0.0) {
        return Err(Error::invalid(
            "j_target",
            format!("must be >= 0, got {j_target}"),
        ));
    }
    if !(p_a > 0.0 && p_a <= 1.0) {
        return Err(Error::invalid(
            "p_a",
            format!("must lie in (0, 1], got {p_a}"),
        ));
    }
    match p_b {
        None => {
            if j_target > p_a {
                return Err(Error::NoRoot(format!(
                    "J = {j_target} exceeds P+(a) = {p_a}; no q in [1/2, 1]"
                )));
            }
            Ok(1.0 - 0.5 * (1.0 - j_target / p_a).sqrt())
        }
        Some(p_b) => {
            if !(0.0..=1.0).contains(&p_b) {
                return Err(Error::invalid(
                    "p_b",
                    format!("must be a probability, got {p_b}"),
                ));
            }
            // -2(pa+pb) q² + (5pa+3pb) q - (2pa+pb+J) = 0
            let a = -2.0 * (p_a + p_b);
            let b = 5.0 * p_a + 3.0 * p_b;
            let c = -(2.0 * p_a + p_b + j_target);
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return Err(Error::NoRoot(format!(
                    "J = {j_target} above the model maximum for p_a = {p_a}, p_b = {p_b}"
                )));
            }
            let s = disc.sqrt();
            let mut roots = [(-b + s) / (2.0 * a), (-b - s) / (2.0 * a)];
            roots.sort_by(f64::total_cmp);
            roots
                .into_iter()
                .find(|r| (0.5 - 1e-12..=1.0 + 1e-12).contains(r))
                .map(|r| r.clamp(0.5, 1.0))
                .ok_or_else(|| {
                    Error::NoRoot(format!(
                        "J = {j_target} not reachable for q in [1/2, 1] (p_a = {p_a}, p_b = {p_b})"
                    ))
                })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HvdzConfig {
    pub marginals: Marginals,
    pub displacements: Displacements,
    pub q: f64,
}

impl HvdzConfig {
    pub fn new(marginals: Marginals, displacements: Displacements, q: f64) -> Result<Self> {
        check_q(q)?;
        displacements.check_targets(marginals.p_a)?;
        Ok(Self {
            marginals,
            displacements,
            q,
        })
    }

    /// Maximal displacements at the given singles.
    pub fn maximal(p_a: f64, p_b: f64, q: f64) -> Result<Self> {
        Self::new(
            Marginals::new(p_a, p_b)?,
            Displacements::maximal(p_a, p_b),
            q,
        )
    }

    pub fn epsilon(&self) -> f64 {
        self.q - 0.5
    }

    pub fn tables(&self) -> Result<MuTable> {
        mu_tables(&self.displacements, &self.marginals)
    }
}
