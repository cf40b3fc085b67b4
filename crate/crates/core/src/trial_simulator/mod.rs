//! Pulsed-source Bell experiment: time-tagged event streams, their
//! coincidence analysis, and space-like timing checks.
//!
//! Times are integer picoseconds. Pulse `p` nominally reaches station X at
//! `travel_X + p · period`, where `travel_X` is the fiber delay from the source.

mod analysis;
mod generate;
mod io;

pub use analysis::{coincidence_analysis, CoincidenceAnalysis, Diagnostics, WindowPolicy};
pub use generate::{run, Streams};
pub use io::{read_streams, write_streams, StreamRow};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hvdz_model::{Displacements, HvdzConfig, Marginals, MuTable};
use crate::kv::Section;
use crate::quantum_model::{
    optimize_j_for, DetectionModel, EntangledState, OptimizerConfig, SettingsQuad, StateVariant,
    Station,
};

/// Speed of light in meters per nanosecond.
pub const C_M_PER_NS: f64 = 0.299_792_458;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeTagEvent {
    pub station: Station,
    pub pulse_index: u64,
    pub time_ps: u64,
    /// 0 for the unprimed analyzer, 1 for the primed one.
    pub setting: u8,
    /// `false` marks a setting-change row rather than a detection.
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Physics {
    Qm {
        state: EntangledState,
        settings: SettingsQuad,
    },
    Hvdz {
        config: HvdzConfig,
        tables: MuTable,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupConfig {
    pub pulse_period_ns: f64,
    pub pair_prob: f64,
    pub distance_source_a_m: f64,
    pub distance_source_b_m: f64,
    pub distance_ab_m: f64,
    /// Refractive index of the source-to-station fiber.
    pub fiber_index: f64,
    /// Interval during which a setting is held.
    pub eom_hold_ns: f64,
    /// Time from the setting decision until the analyzer is ready.
    pub decision_latency_ns: f64,
    /// Arrival of a hold's first pulse, measured from the setting decision.
    pub hold_start_ns: f64,
    /// Time a detection needs to complete after the photon arrives.
    pub measurement_ns: f64,
    /// Gaussian detector jitter (standard deviation) per station.
    pub jitter_ns: (f64, f64),
    /// Efficiencies; backgrounds are probabilities per natural-time window.
    pub detection: DetectionModel,
    pub window_half_ps: (u64, u64),
    pub dead_time_ns: Option<f64>,
    /// Each station picks its unprimed setting with probability `½ + bias`.
    pub setting_bias: f64,
    /// Pulses within a hold (0-based) used for the timing verdict.
    pub selected_pulses: Vec<usize>,
    pub physics: Physics,
}

fn ns_to_ps(ns: f64) -> u64 {
    (ns * 1000.0).round().max(0.0) as u64
}

impl SetupConfig {
    pub fn period_ps(&self) -> u64 {
        ns_to_ps(self.pulse_period_ns)
    }

    pub fn pulses_per_hold(&self) -> u64 {
        (self.eom_hold_ns / self.pulse_period_ns + 1e-9).floor() as u64
    }

    /// Fiber delay from the source to `station`.
    pub fn travel_ps(&self, station: Station) -> u64 {
        let d = match station {
            Station::A => self.distance_source_a_m,
            Station::B => self.distance_source_b_m,
        };
        ns_to_ps(d * self.fiber_index / C_M_PER_NS)
    }

    pub fn window_ps(&self, station: Station) -> u64 {
        match station {
            Station::A => self.window_half_ps.0,
            Station::B => self.window_half_ps.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("pulse_period_ns", self.pulse_period_ns),
            ("distance_source_a_m", self.distance_source_a_m),
            ("distance_source_b_m", self.distance_source_b_m),
            ("distance_ab_m", self.distance_ab_m),
            ("eom_hold_ns", self.eom_hold_ns),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.period_ps() == 0 {
            return Err(Error::invalid("pulse_period_ns", "must be at least 1 ps"));
        }
        if self.pulses_per_hold() == 0 {
            return Err(Error::invalid(
                "eom_hold_ns",
                "shorter than one pulse period",
            ));
        }
        if !(0.0..=1.0).contains(&self.pair_prob) {
            return Err(Error::invalid(
                "pair_prob",
                format!("must be a probability, got {}", self.pair_prob),
            ));
        }
        if !(self.fiber_index >= 1.0) {
            return Err(Error::invalid(
                "fiber_index",
                format!("must be >= 1, got {}", self.fiber_index),
            ));
        }
        for (name, v) in [
            ("decision_latency_ns", self.decision_latency_ns),
            ("measurement_ns", self.measurement_ns),
            ("jitter_ns", self.jitter_ns.0),
            ("jitter_ns", self.jitter_ns.1),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(
                    name,
                    format!("must be non-negative, got {v}"),
                ));
            }
        }
        if !self.hold_start_ns.is_finite() {
            return Err(Error::invalid("hold_start_ns", "must be finite"));
        }
        for w in [self.window_half_ps.0, self.window_half_ps.1] {
            if w == 0 || 2 * w > self.period_ps() {
                return Err(Error::invalid(
                    "window_half_ps",
                    format!("must lie in (0, period/2], got {w}"),
                ));
            }
        }
        if let Some(d) = self.dead_time_ns {
            if !(d >= 0.0) {
                return Err(Error::invalid(
                    "dead_time_ns",
                    format!("must be non-negative, got {d}"),
                ));
            }
        }
        if !(-0.5..=0.5).contains(&self.setting_bias) {
            return Err(Error::invalid("setting_bias", "must lie in [-1/2, 1/2]"));
        }
        if let Physics::Hvdz { config, tables } = &self.physics {
            tables.validate(&config.marginals)?;
        }
        Ok(())
    }

    pub fn from_section(s: &Section) -> Result<Self> {
        let num = |k: &str, default: f64| -> Result<f64> { Ok(s.number(k)?.unwrap_or(default)) };
        let pair_of = |k: &str, default: f64| -> Result<(f64, f64)> {
            Ok(match s.numbers(k)?.as_deref() {
                None => (default, default),
                Some([x]) => (*x, *x),
                Some([x, y]) => (*x, *y),
                Some(_) => {
                    return Err(Error::invalid(
                        "setup",
                        format!("`{k}` takes one or two values"),
                    ))
                }
            })
        };
        let period = s.require_number("pulse_period_ns")?;
        let latency = num("decision_latency_ns", 0.0)?;
        let hold = num("eom_hold_ns", period)?;
        let eta = pair_of("eta", 1.0)?;
        let beta = pair_of("background", 0.0)?;
        let (wa, wb) = match s.numbers("window_half_ps")?.as_deref() {
            Some([x]) => (*x, *x),
            Some([x, y]) => (*x, *y),
            _ => {
                return Err(Error::MissingField {
                    record: s.name.clone(),
                    field: "window_half_ps".into(),
                })
            }
        };
        let detection = DetectionModel::new(eta.0, eta.1, beta.0, beta.1)?;
        let pph = ((hold / period) + 1e-9).floor() as usize;
        let selected_pulses = match s.numbers("selected_pulses")? {
            Some(v) => v.into_iter().map(|x| x as usize).collect(),
            None => vec![pph / 2],
        };
        let physics = parse_physics(s, &detection)?;
        let cfg = Self {
            pulse_period_ns: period,
            pair_prob: s.require_number("pair_prob")?,
            distance_source_a_m: s.require_number("distance_source_a_m")?,
            distance_source_b_m: s.require_number("distance_source_b_m")?,
            distance_ab_m: s.require_number("distance_ab_m")?,
            fiber_index: num("fiber_index", 1.0)?,
            eom_hold_ns: hold,
            decision_latency_ns: latency,
            hold_start_ns: num("hold_start_ns", latency)?,
            measurement_ns: num("measurement_ns", 0.0)?,
            jitter_ns: pair_of("jitter_ns", 0.0)?,
            detection,
            window_half_ps: (wa.round() as u64, wb.round() as u64),
            dead_time_ns: s.number("dead_time_ns")?,
            setting_bias: num("setting_bias", 0.0)?,
            selected_pulses,
            physics,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_physics(s: &Section, det: &DetectionModel) -> Result<Physics> {
    match s.get("physics").unwrap_or("qm") {
        "qm" => {
            let variant: StateVariant = s.get("state").unwrap_or("psi").parse()?;
            let state = EntangledState::new(variant, s.require_number("r")?)?;
            let settings = match s.numbers("angles")? {
                Some(v) if v.len() == 4 => {
                    if s.get("angle_unit") == Some("deg") {
                        SettingsQuad::from_degrees(v[0], v[1], v[2], v[3])?
                    } else {
                        SettingsQuad::new(v[0], v[1], v[2], v[3])?
                    }
                }
                Some(_) => return Err(Error::invalid("angles", "expected a, a', b, b'")),
                None => {
                    let det = DetectionModel::new(det.eta_a, det.eta_b, 0.0, 0.0)?;
                    optimize_j_for(&state, &det, &OptimizerConfig::default()).settings
                }
            };
            Ok(Physics::Qm { state, settings })
        }
        "hvdz" => {
            let p_a = s.require_number("p_a")?;
            let p_b = s.number("p_b")?.unwrap_or(p_a);
            let marginals = Marginals::with_primed(
                p_a,
                s.number("p_a_prime")?.unwrap_or(0.25),
                p_b,
                s.number("p_b_prime")?.unwrap_or(0.25),
            )?;
            let d24 = s.number("d24")?.unwrap_or(p_a);
            let config = HvdzConfig::new(
                marginals,
                Displacements::maximal_with(p_a, p_b, d24),
                s.require_number("q")?,
            )?;
            let tables = config.tables()?;
            Ok(Physics::Hvdz { config, tables })
        }
        other => Err(Error::invalid(
            "physics",
            format!("expected qm or hvdz, got `{other}`"),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseTiming {
    /// Index within the hold.
    pub index: usize,
    /// Arrival time after the setting decision.
    pub arrival_ns: f64,
    /// The analyzer was set before the photon arrived.
    pub setting_ready: bool,
    /// The decision could not have influenced the pair's emission.
    pub free_choice: bool,
    /// The measurement ended before news of the remote decision could arrive.
    pub local: bool,
}

impl PulseTiming {
    pub fn pass(&self) -> bool {
        self.setting_ready && self.free_choice && self.local
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacelikeReport {
    pub pass: bool,
    /// Shortest source-to-station light time minus the decision latency.
    pub latency_margin_ns: f64,
    pub pulses_per_hold: u64,
    pub pulses: Vec<PulseTiming>,
    pub selected_pass: bool,
}

pub fn spacelike_check(cfg: &SetupConfig) -> SpacelikeReport {
    let light_a = cfg.distance_source_a_m / C_M_PER_NS;
    let light_b = cfg.distance_source_b_m / C_M_PER_NS;
    let light_ab = cfg.distance_ab_m / C_M_PER_NS;
    let latency_margin_ns = light_a.min(light_b) - cfg.decision_latency_ns;
    let pph = cfg.pulses_per_hold();
    let pulses: Vec<PulseTiming> = (0..pph as usize)
        .map(|j| {
            let t = cfg.hold_start_ns + j as f64 * cfg.pulse_period_ns;
            // Emission precedes arrival by the fiber delay; the decision must
            // stay outside the emission's past light cone.
            let free = |light: f64| t - cfg.fiber_index * light < light;
            PulseTiming {
                index: j,
                arrival_ns: t,
                setting_ready: t >= cfg.decision_latency_ns,
                free_choice: free(light_a) && free(light_b),
                local: t + cfg.measurement_ns < light_ab,
            }
        })
        .collect();
    let selected_pass = !cfg.selected_pulses.is_empty()
        && cfg
            .selected_pulses
            .iter()
            .all(|&j| pulses.get(j).is_some_and(PulseTiming::pass));
    SpacelikeReport {
        pass: latency_margin_ns > 0.0 && selected_pass,
        latency_margin_ns,
        pulses_per_hold: pph,
        pulses,
        selected_pass,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::kv;

    pub(crate) fn base_setup() -> SetupConfig {
        let text = "[setup]\n\
            pulse_period_ns = 10\n\
            pair_prob = 1\n\
            distance_source_a_m = 30\n\
            distance_source_b_m = 30\n\
            distance_ab_m = 60\n\
            eom_hold_ns = 10000\n\
            window_half_ps = 1000\n\
            physics = qm\n\
            state = psi\n\
            r = 0.29\n";
        SetupConfig::from_section(&kv::parse(text).unwrap().sections[0]).unwrap()
    }

    fn light_ns_setup(latency: f64, light_ns: f64) -> SetupConfig {
        let mut cfg = base_setup();
        cfg.distance_source_a_m = light_ns * C_M_PER_NS;
        cfg.distance_source_b_m = light_ns * C_M_PER_NS;
        cfg.distance_ab_m = 2.0 * light_ns * C_M_PER_NS;
        cfg.decision_latency_ns = latency;
        cfg.hold_start_ns = latency;
        cfg.eom_hold_ns = cfg.pulse_period_ns;
        cfg.selected_pulses = vec![0];
        cfg
    }

    #[test]
    fn latency_margin() {
        let r = spacelike_check(&light_ns_setup(26.0, 87.0));
        assert!(r.pass);
        assert!((r.latency_margin_ns - 61.0).abs() < 1e-9);
        let r = spacelike_check(&light_ns_setup(87.0, 87.0));
        assert!(!r.pass);
        assert!(r.latency_margin_ns.abs() < 1e-9);
    }

    #[test]
    fn only_centered_pulses_pass() {
        let mut cfg = base_setup();
        cfg.pulse_period_ns = 1000.0 / 79.3;
        cfg.eom_hold_ns = 200.0;
        cfg.decision_latency_ns = 60.0;
        cfg.hold_start_ns = 0.0;
        cfg.distance_ab_m = 50.0;
        cfg.measurement_ns = 50.0 / C_M_PER_NS - 120.0;
        cfg.selected_pulses = vec![7];
        let r = spacelike_check(&cfg);
        assert_eq!(r.pulses_per_hold, 15);
        let passing: Vec<usize> = r
            .pulses
            .iter()
            .filter(|p| p.pass())
            .map(|p| p.index)
            .collect();
        assert_eq!(passing, [5, 6, 7, 8, 9]);
        assert!(r.pass);
        cfg.selected_pulses = vec![7, 12];
        assert!(!spacelike_check(&cfg).pass);
    }

    #[test]
    fn late_pulses_lose_free_choice() {
        let mut cfg = light_ns_setup(5.0, 20.0);
        cfg.fiber_index = 1.5;
        cfg.distance_ab_m = 1e4;
        cfg.eom_hold_ns = 100.0;
        let r = spacelike_check(&cfg);
        // Arrival must precede (1 + n) · 20 ns = 50 ns.
        let free: Vec<bool> = r.pulses.iter().map(|p| p.free_choice).collect();
        assert_eq!(
            free,
            [true, true, true, true, true, false, false, false, false, false]
        );
    }

    #[test]
    fn config_parsing_and_validation() {
        let cfg = base_setup();
        assert_eq!(cfg.period_ps(), 10_000);
        assert_eq!(cfg.pulses_per_hold(), 1000);
        assert_eq!(cfg.selected_pulses, vec![500]);
        assert_eq!(cfg.travel_ps(Station::A), 100_069);
        assert!(matches!(cfg.physics, Physics::Qm { .. }));

        let mut bad = cfg.clone();
        bad.window_half_ps = (6000, 10);
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.eom_hold_ns = 1.0;
        assert!(bad.validate().is_err());

        let text = "[setup]\npulse_period_ns = 10\npair_prob = 0.1\n\
            distance_source_a_m = 1\ndistance_source_b_m = 1\ndistance_ab_m = 2\n\
            window_half_ps = 100, 200\nphysics = hvdz\nq = 0.7\np_a = 0.08\n";
        let h = SetupConfig::from_section(&kv::parse(text).unwrap().sections[0]).unwrap();
        assert!(matches!(h.physics, Physics::Hvdz { .. }));
        assert_eq!(h.window_half_ps, (100, 200));
        let missing = "[setup]\npulse_period_ns = 10\n";
        assert!(SetupConfig::from_section(&kv::parse(missing).unwrap().sections[0]).is_err());
    }
}
