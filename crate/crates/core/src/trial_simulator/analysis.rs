use serde::{Deserialize, Serialize};

use super::{SetupConfig, Streams, TimeTagEvent};
use crate::error::{Error, Result};
use crate::quantum_model::{CountsQuad, SettingPair, Station};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowPolicy {
    /// Detections count only inside the window around their pulse's nominal arrival.
    NaturalTime,
    /// Any two detections closer than the summed half-widths form a coincidence.
    Floating,
}

impl std::str::FromStr for WindowPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "natural" | "natural-time" => Ok(WindowPolicy::NaturalTime),
            "floating" => Ok(WindowPolicy::Floating),
            other => Err(Error::invalid(
                "policy",
                format!("expected natural or floating, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_pulses: u64,
    pub detections_a: u64,
    pub detections_b: u64,
    /// Detections outside their pulse's natural-time window.
    pub out_of_window_a: u64,
    pub out_of_window_b: u64,
    /// Offset between the A and B windows used for the accidental estimate, in pulses.
    pub accidental_offset: u64,
    pub accidental_coincidences: u64,
    pub accidental_windows: u64,
    /// Product of the per-pulse in-window single rates.
    pub singles_product: f64,
}

impl Diagnostics {
    pub fn accidental_rate(&self) -> f64 {
        if self.accidental_windows == 0 {
            0.0
        } else {
            self.accidental_coincidences as f64 / self.accidental_windows as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceAnalysis {
    pub counts: CountsQuad,
    pub diagnostics: Diagnostics,
}

/// Hold boundaries and settings recovered from the marker rows.
struct Holds {
    starts: Vec<u64>,
    pairs: Vec<SettingPair>,
    n_pulses: u64,
}

impl Holds {
    fn from_streams(a: &[TimeTagEvent], b: &[TimeTagEvent]) -> Result<Self> {
        let markers = |s: &[TimeTagEvent]| -> Vec<(u64, u8)> {
            let mut m: Vec<(u64, u8)> = s
                .iter()
                .filter(|e| !e.detected)
                .map(|e| (e.pulse_index, e.setting))
                .collect();
            m.sort_unstable();
            m
        };
        let (ma, mb) = (markers(a), markers(b));
        if ma.len() != mb.len() || ma.iter().zip(&mb).any(|(x, y)| x.0 != y.0) {
            return Err(Error::MalformedStream(
                "setting markers of the two stations do not line up".into(),
            ));
        }
        let last_detected = a
            .iter()
            .chain(b)
            .filter(|e| e.detected)
            .map(|e| e.pulse_index + 1)
            .max()
            .unwrap_or(0);
        let (n_pulses, holds) = match ma.split_last() {
            Some((end, rest)) if end.0 >= last_detected && !rest.is_empty() => (end.0, rest),
            _ => (last_detected.max(ma.last().map_or(0, |m| m.0 + 1)), &ma[..]),
        };
        if n_pulses > 0 && holds.first().map(|m| m.0) != Some(0) {
            return Err(Error::MalformedStream(
                "no setting marker at pulse 0".into(),
            ));
        }
        let starts = holds.iter().map(|m| m.0).collect();
        let pairs = holds
            .iter()
            .zip(&mb)
            .map(|(x, y)| SettingPair::from_bits(x.1 != 0, y.1 != 0))
            .collect();
        Ok(Self {
            starts,
            pairs,
            n_pulses,
        })
    }

    fn pair_at(&self, pulse: u64) -> SettingPair {
        let k = self.starts.partition_point(|&s| s <= pulse) - 1;
        self.pairs[k]
    }

    fn trials(&self) -> CountsQuad {
        let mut c = CountsQuad::default();
        for (k, &start) in self.starts.iter().enumerate() {
            let end = self.starts.get(k + 1).copied().unwrap_or(self.n_pulses);
            c.get_mut(self.pairs[k]).n_trials += end.saturating_sub(start);
        }
        c
    }
}

fn check_stream(s: &[TimeTagEvent], station: Station) -> Result<()> {
    if let Some(e) = s.iter().find(|e| e.station != station) {
        return Err(Error::MalformedStream(format!(
            "station {} row in the {station} stream (pulse {})",
            e.station, e.pulse_index
        )));
    }
    if let Some(w) = s.windows(2).find(|w| w[1].time_ps < w[0].time_ps) {
        return Err(Error::MalformedStream(format!(
            "station {station}: time goes backwards at pulse {} ({} ps after {} ps)",
            w[1].pulse_index, w[1].time_ps, w[0].time_ps
        )));
    }
    if let Some(e) = s.iter().find(|e| e.setting > 1) {
        return Err(Error::MalformedStream(format!(
            "setting {} is not 0 or 1",
            e.setting
        )));
    }
    Ok(())
}

/// Pulses with at least one in-window detection, and the out-of-window count.
fn natural_clicks(s: &[TimeTagEvent], cfg: &SetupConfig, station: Station) -> (Vec<u64>, u64) {
    let travel = cfg.travel_ps(station) as i64;
    let period = cfg.period_ps() as i64;
    let w = cfg.window_ps(station) as i64;
    let mut out = 0;
    let mut clicks: Vec<u64> = s
        .iter()
        .filter(|e| e.detected)
        .filter(|e| {
            let dev = e.time_ps as i64 - (travel + e.pulse_index as i64 * period);
            let inside = dev.abs() <= w;
            out += !inside as u64;
            inside
        })
        .map(|e| e.pulse_index)
        .collect();
    clicks.sort_unstable();
    clicks.dedup();
    (clicks, out)
}

fn nearest_pulse(t: u64, travel: u64, period: u64, n: u64) -> u64 {
    let rel = t.saturating_sub(travel) + period / 2;
    (rel / period).min(n.saturating_sub(1))
}

fn count_sorted_overlap(a: &[u64], b: &[u64], offset: u64) -> u64 {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        let x = a[i] + offset;
        match x.cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Turns the two event streams into per-setting counts.
pub fn coincidence_analysis(
    streams: &Streams,
    cfg: &SetupConfig,
    policy: WindowPolicy,
) -> Result<CoincidenceAnalysis> {
    check_stream(&streams.a, Station::A)?;
    check_stream(&streams.b, Station::B)?;
    let holds = Holds::from_streams(&streams.a, &streams.b)?;
    let n = holds.n_pulses;
    let mut counts = holds.trials();

    let (na, out_a) = natural_clicks(&streams.a, cfg, Station::A);
    let (nb, out_b) = natural_clicks(&streams.b, cfg, Station::B);

    match policy {
        WindowPolicy::NaturalTime => {
            for &p in &na {
                counts.get_mut(holds.pair_at(p)).n_sa += 1;
            }
            for &p in &nb {
                counts.get_mut(holds.pair_at(p)).n_sb += 1;
            }
            let (mut i, mut j) = (0, 0);
            while i < na.len() && j < nb.len() {
                match na[i].cmp(&nb[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        counts.get_mut(holds.pair_at(na[i])).n_cc += 1;
                        i += 1;
                        j += 1;
                    }
                }
            }
        }
        WindowPolicy::Floating => {
            let period = cfg.period_ps();
            let ta = cfg.travel_ps(Station::A);
            let tb = cfg.travel_ps(Station::B);
            let tau = (cfg.window_half_ps.0 + cfg.window_half_ps.1) as i64;
            let times = |s: &[TimeTagEvent], travel: u64| -> Vec<(i64, u64)> {
                s.iter()
                    .filter(|e| e.detected)
                    .map(|e| {
                        (
                            e.time_ps as i64 - travel as i64,
                            nearest_pulse(e.time_ps, travel, period, n),
                        )
                    })
                    .collect()
            };
            let ea = times(&streams.a, ta);
            let eb = times(&streams.b, tb);
            let singles = |ev: &[(i64, u64)]| {
                let mut p: Vec<u64> = ev.iter().map(|e| e.1).collect();
                p.sort_unstable();
                p.dedup();
                p
            };
            let (sa, sb) = (singles(&ea), singles(&eb));
            for &p in &sa {
                counts.get_mut(holds.pair_at(p)).n_sa += 1;
            }
            for &p in &sb {
                counts.get_mut(holds.pair_at(p)).n_sb += 1;
            }
            let mut used_a = std::collections::HashSet::new();
            let mut used_b = std::collections::HashSet::new();
            let mut j0 = 0;
            for &(t, pa) in &ea {
                while j0 < eb.len() && eb[j0].0 < t - tau {
                    j0 += 1;
                }
                let best = eb[j0..]
                    .iter()
                    .take_while(|e| e.0 <= t + tau)
                    .filter(|e| !used_b.contains(&e.1))
                    .min_by_key(|e| (e.0 - t).abs());
                if let Some(&(_, pb)) = best {
                    let pair = holds.pair_at(pa);
                    if pair == holds.pair_at(pb) && used_a.insert(pa) {
                        used_b.insert(pb);
                        counts.get_mut(pair).n_cc += 1;
                    }
                }
            }
        }
    }

    let offset = 1;
    let windows = n.saturating_sub(offset);
    let accidental = count_sorted_overlap(&na, &nb, offset);
    let rate = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    let diagnostics = Diagnostics {
        n_pulses: n,
        detections_a: streams.a.iter().filter(|e| e.detected).count() as u64,
        detections_b: streams.b.iter().filter(|e| e.detected).count() as u64,
        out_of_window_a: out_a,
        out_of_window_b: out_b,
        accidental_offset: offset,
        accidental_coincidences: accidental,
        accidental_windows: windows,
        singles_product: rate(na.len()) * rate(nb.len()),
    };
    CountsQuad::new(counts.pairs)?;
    Ok(CoincidenceAnalysis {
        counts,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum_model::{j_from_counts, j_probability, DetectionModel};
    use crate::trial_simulator::tests::base_setup;
    use crate::trial_simulator::{run, Physics};

    #[test]
    fn zero_jitter_recovers_truth() {
        let cfg = base_setup();
        let s = run(&cfg, 200_000, 1).unwrap();
        let r = coincidence_analysis(&s, &cfg, WindowPolicy::NaturalTime).unwrap();
        assert_eq!(r.counts, s.truth);
        assert_eq!(
            r.diagnostics.out_of_window_a + r.diagnostics.out_of_window_b,
            0
        );
        let f = coincidence_analysis(&s, &cfg, WindowPolicy::Floating).unwrap();
        assert_eq!(f.counts, s.truth);
    }

    #[test]
    fn qm_pipeline_matches_closed_form() {
        let cfg = base_setup();
        let s = run(&cfg, 2_000_000, 2).unwrap();
        let r = coincidence_analysis(&s, &cfg, WindowPolicy::NaturalTime).unwrap();
        let est = j_from_counts(&r.counts).unwrap();
        let Physics::Qm { state, settings } = &cfg.physics else {
            unreachable!()
        };
        let exact = j_probability(state, settings, &DetectionModel::ideal());
        assert!(
            (est.j - exact).abs() < 5.0 * est.std_error,
            "{est:?} vs {exact}"
        );
    }

    #[test]
    fn large_jitter_pushes_events_out_of_window() {
        let mut cfg = base_setup();
        cfg.jitter_ns = (3.0, 3.0);
        let s = run(&cfg, 100_000, 3).unwrap();
        let nat = coincidence_analysis(&s, &cfg, WindowPolicy::NaturalTime).unwrap();
        let flo = coincidence_analysis(&s, &cfg, WindowPolicy::Floating).unwrap();
        let d = nat.diagnostics;
        let frac = d.out_of_window_a as f64 / d.detections_a as f64;
        assert!(frac > 0.5, "{frac}");
        assert_ne!(nat.counts, flo.counts);
        let tot = |c: &CountsQuad| c.pairs.iter().map(|p| p.n_sa).sum::<u64>();
        assert!(tot(&flo.counts) > tot(&nat.counts));
    }

    #[test]
    fn malformed_streams_rejected() {
        let cfg = base_setup();
        let mut s = run(&cfg, 1000, 4).unwrap();
        let i = s.a.iter().position(|e| e.detected).unwrap();
        s.a[i].time_ps = u64::MAX;
        assert!(matches!(
            coincidence_analysis(&s, &cfg, WindowPolicy::NaturalTime),
            Err(Error::MalformedStream(_))
        ));
        let mut s = run(&cfg, 1000, 4).unwrap();
        s.b[0].station = Station::A;
        assert!(coincidence_analysis(&s, &cfg, WindowPolicy::NaturalTime).is_err());
        let mut s = run(&cfg, 1000, 4).unwrap();
        s.b.retain(|e| e.detected || e.pulse_index != 0);
        assert!(coincidence_analysis(&s, &cfg, WindowPolicy::NaturalTime).is_err());
    }

    #[test]
    fn policy_parsing() {
        assert_eq!(
            "natural".parse::<WindowPolicy>().unwrap(),
            WindowPolicy::NaturalTime
        );
        assert_eq!(
            "floating".parse::<WindowPolicy>().unwrap(),
            WindowPolicy::Floating
        );
        assert!("other".parse::<WindowPolicy>().is_err());
    }
}
