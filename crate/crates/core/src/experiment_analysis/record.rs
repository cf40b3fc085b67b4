use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv::{self, Section};
use crate::quantum_model::{EntangledState, StateVariant};

/// The record file shipped with the crate.
pub const DEFAULT_RECORDS: &str = include_str!("../../../../data/experiments.kv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Inequality {
    Ei,
    Chsh,
}

impl std::str::FromStr for Inequality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "EI" | "CH" => Ok(Inequality::Ei),
            "CHSH" => Ok(Inequality::Chsh),
            other => Err(Error::invalid(
                "inequality",
                format!("expected EI or CHSH, got `{other}`"),
            )),
        }
    }
}

impl std::fmt::Display for Inequality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Inequality::Ei => "EI",
            Inequality::Chsh => "CHSH",
        })
    }
}

/// Counts used to estimate `P⁺(a)` from one station's singles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SinglesCounts {
    pub n_cc_11: u64,
    pub n_nc_12: u64,
    pub trials_1: u64,
    pub trials_2: u64,
}

/// One published experiment. Numeric fields are `None` when absent; the
/// parsed section is kept so unknown keys survive a round trip.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub name: String,
    pub label: Option<String>,
    pub inequality: Inequality,
    pub state: Option<EntangledState>,
    pub j_m: Option<f64>,
    pub j_m_err: Option<f64>,
    pub j_qm: Option<f64>,
    pub j_corr: Option<f64>,
    pub j_corr_erratum: Option<f64>,
    pub eta_meas: Option<(f64, f64)>,
    pub eta_eq: Option<f64>,
    pub eta_thr: Option<f64>,
    pub eta_thr_note: Option<String>,
    pub j_corr_ratio: Option<f64>,
    pub q_qm: Option<f64>,
    pub q_m: Option<f64>,
    pub q_m_ideal: Option<f64>,
    pub q_set: Option<f64>,
    pub p_value: Option<String>,
    pub p_a_measured: Option<f64>,
    pub p_a_ideal: Option<f64>,
    pub singles_counts: Option<SinglesCounts>,
    pub background_window: Option<(f64, f64)>,
    pub pair_prob: Option<f64>,
    pub rate_min: Option<f64>,
    pub rate_max: Option<f64>,
    pub s_m: Option<f64>,
    pub s_m_err: Option<f64>,
    pub s_qm: Option<f64>,
    pub s_corr: Option<f64>,
    pub section: Section,
}

fn pair(s: &Section, key: &str) -> Result<Option<(f64, f64)>> {
    match s.numbers(key)?.as_deref() {
        None => Ok(None),
        Some([x]) => Ok(Some((*x, *x))),
        Some([x, y]) => Ok(Some((*x, *y))),
        Some(v) => Err(Error::Parse {
            line: 0,
            reason: format!(
                "[{}] `{key}`: expected one or two values, got {}",
                s.name,
                v.len()
            ),
        }),
    }
}

fn count(s: &Section, key: &str) -> Result<Option<u64>> {
    s.get(key)
        .map(|v| {
            v.trim().parse::<u64>().map_err(|_| Error::Parse {
                line: 0,
                reason: format!("[{}] `{key}`: not a count: `{v}`", s.name),
            })
        })
        .transpose()
}

impl ExperimentRecord {
    pub fn from_section(s: &Section) -> Result<Self> {
        let inequality = s
            .get("inequality")
            .ok_or_else(|| Error::MissingField {
                record: s.name.clone(),
                field: "inequality".into(),
            })?
            .parse()?;
        let state = match s.get("state") {
            None => None,
            Some(v) => {
                let variant: StateVariant = v.parse()?;
                Some(EntangledState::new(variant, s.require_number("r")?)?)
            }
        };
        let singles_counts = match (
            count(s, "n_cc_11")?,
            count(s, "n_nc_12")?,
            count(s, "trials_1")?,
            count(s, "trials_2")?,
        ) {
            (Some(n_cc_11), Some(n_nc_12), Some(trials_1), Some(trials_2)) => Some(SinglesCounts {
                n_cc_11,
                n_nc_12,
                trials_1,
                trials_2,
            }),
            _ => None,
        };
        let rec = Self {
            name: s.name.clone(),
            label: s.get("label").map(str::to_string),
            inequality,
            state,
            j_m: s.number("j_m")?,
            j_m_err: s.number("j_m_err")?,
            j_qm: s.number("j_qm")?,
            j_corr: s.number("j_corr")?,
            j_corr_erratum: s.number("j_corr_erratum")?,
            eta_meas: pair(s, "eta_meas")?,
            eta_eq: s.number("eta_eq")?,
            eta_thr: s.number("eta_thr")?,
            eta_thr_note: s.get("eta_thr_note").map(str::to_string),
            j_corr_ratio: s.number("j_corr_ratio")?,
            q_qm: s.number("q_qm")?,
            q_m: s.number("q_m")?,
            q_m_ideal: s.number("q_m_ideal")?,
            q_set: s.number("q_set")?,
            p_value: s.get("p_value").map(str::to_string),
            p_a_measured: s.number("p_a_measured")?,
            p_a_ideal: s.number("p_a_ideal")?,
            singles_counts,
            background_window: pair(s, "background_window")?,
            pair_prob: s.number("pair_prob")?,
            rate_min: s.number("rate_min")?,
            rate_max: s.number("rate_max")?,
            s_m: s.number("s_m")?,
            s_m_err: s.number("s_m_err")?,
            s_qm: s.number("s_qm")?,
            s_corr: s.number("s_corr")?,
            section: s.clone(),
        };
        rec.validate()?;
        Ok(rec)
    }

    fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| {
            Err(Error::invalid(field, format!("[{}] {reason}", self.name)))
        };
        if let Some(j) = self.j_m {
            if !j.is_finite() {
                return bad("j_m", format!("must be finite, got {j}"));
            }
        }
        if let Some((a, b)) = self.eta_meas {
            if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
                return bad("eta_meas", format!("must lie in [0,1], got ({a}, {b})"));
            }
        }
        if let Some(q) = self.q_set {
            if !(0.5..=1.0).contains(&q) {
                return bad("q_set", format!("must lie in [1/2, 1], got {q}"));
            }
        }
        if let Some(s) = self.s_m {
            if !(0.0..=4.0).contains(&s) {
                return bad("s_m", format!("must lie in [0, 4], got {s}"));
            }
        }
        Ok(())
    }

    /// Declared absolute tolerance for re-deriving `field`, if any.
    pub fn tolerance(&self, field: &str) -> Option<f64> {
        self.section
            .get(&format!("{field}_tol"))
            .and_then(kv::parse_number)
    }

    /// The printed `J_corr`, or its annotated correction.
    pub fn j_corr_reference(&self) -> Option<f64> {
        self.j_corr_erratum.or(self.j_corr)
    }
}

pub fn parse_records(text: &str) -> Result<Vec<ExperimentRecord>> {
    kv::parse(text)?
        .sections
        .iter()
        .map(ExperimentRecord::from_section)
        .collect()
}

pub fn default_records() -> Result<Vec<ExperimentRecord>> {
    parse_records(DEFAULT_RECORDS)
}
