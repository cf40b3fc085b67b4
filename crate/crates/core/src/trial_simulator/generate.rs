use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Physics, SetupConfig, TimeTagEvent};
use crate::error::Result;
use crate::hvdz_model::{joint_cells, TrialSampler};
use crate::quantum_model::{
    coincidence_probability, singles_probability, CountsQuad, SettingPair, Station,
};

/// Pulses generated per shard; fixed so output does not depend on thread count.
const SHARD_PULSES: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Streams {
    pub a: Vec<TimeTagEvent>,
    pub b: Vec<TimeTagEvent>,
    pub n_pulses: u64,
    /// Pair clicks per pulse before jitter, background and dead time.
    pub truth: CountsQuad,
}

impl Streams {
    pub fn station(&self, station: Station) -> &[TimeTagEvent] {
        match station {
            Station::A => &self.a,
            Station::B => &self.b,
        }
    }
}

enum PairSampler {
    Qm([[f64; 4]; 4]),
    Hvdz(TrialSampler),
}

impl PairSampler {
    fn new(cfg: &SetupConfig) -> Result<Self> {
        Ok(match &cfg.physics {
            Physics::Qm { state, settings } => PairSampler::Qm(SettingPair::ALL.map(|p| {
                let (a, b) = settings.angles(p);
                let mut cells = joint_cells(
                    coincidence_probability(state, a, b),
                    singles_probability(state, Station::A, a),
                    singles_probability(state, Station::B, b),
                );
                let mut acc = 0.0;
                for c in cells.iter_mut() {
                    acc += c.max(0.0);
                    *c = acc;
                }
                cells[3] = f64::INFINITY;
                cells
            })),
            Physics::Hvdz { config, tables } => {
                PairSampler::Hvdz(TrialSampler::new(config, tables, 0.0)?)
            }
        })
    }

    fn draw(&self, pair: SettingPair, rng: &mut ChaCha8Rng) -> (bool, bool) {
        match self {
            PairSampler::Qm(cum) => {
                let u: f64 = rng.random();
                let cell = cum[pair.index()].iter().position(|&c| u < c).unwrap_or(3);
                (cell < 2, cell == 0 || cell == 2)
            }
            PairSampler::Hvdz(s) => {
                let t = s.draw_at(pair, rng);
                (t.click_a, t.click_b)
            }
        }
    }
}

struct Timing {
    period: u64,
    travel: [u64; 2],
    jitter: [Option<Normal<f64>>; 2],
}

impl Timing {
    fn nominal(&self, st: usize, pulse: u64) -> u64 {
        self.travel[st] + pulse * self.period
    }

    fn jittered(&self, st: usize, pulse: u64, rng: &mut ChaCha8Rng) -> u64 {
        let t = self.nominal(st, pulse) as i64;
        let dt = self.jitter[st].map_or(0, |n| n.sample(rng).round() as i64);
        (t + dt).max(0) as u64
    }
}

fn station_of(st: usize) -> Station {
    if st == 0 {
        Station::A
    } else {
        Station::B
    }
}

struct ShardOut {
    events: [Vec<TimeTagEvent>; 2],
    truth: CountsQuad,
}

/// Simulates `n_pulses` pump pulses. Deterministic for a given seed.
///
/// Each stream starts every hold with a marker row (`detected = false`)
/// carrying the new setting, and ends with a marker at `pulse_index = n_pulses`.
pub fn run(cfg: &SetupConfig, n_pulses: u64, seed: u64) -> Result<Streams> {
    cfg.validate()?;
    if n_pulses == 0 {
        return Ok(Streams {
            a: Vec::new(),
            b: Vec::new(),
            n_pulses: 0,
            truth: CountsQuad::default(),
        });
    }
    let sampler = PairSampler::new(cfg)?;
    let pph = cfg.pulses_per_hold();
    let n_holds = n_pulses.div_ceil(pph);
    let unprimed = 0.5 + cfg.setting_bias;
    let settings: Vec<SettingPair> = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        (0..n_holds)
            .map(|_| {
                let a = rng.random::<f64>() >= unprimed;
                let b = rng.random::<f64>() >= unprimed;
                SettingPair::from_bits(a, b)
            })
            .collect()
    };
    let jitter = |ns: f64| (ns > 0.0).then(|| Normal::new(0.0, ns * 1000.0).expect("finite sigma"));
    let timing = Timing {
        period: cfg.period_ps(),
        travel: [cfg.travel_ps(Station::A), cfg.travel_ps(Station::B)],
        jitter: [jitter(cfg.jitter_ns.0), jitter(cfg.jitter_ns.1)],
    };
    let eta = [cfg.detection.eta_a, cfg.detection.eta_b];
    // Background probability per pulse period, spread uniformly over the period.
    let bg: [f64; 2] = [
        (cfg.detection.beta_a * timing.period as f64 / (2 * cfg.window_half_ps.0) as f64).min(1.0),
        (cfg.detection.beta_b * timing.period as f64 / (2 * cfg.window_half_ps.1) as f64).min(1.0),
    ];
    let geo = |p: f64| (p > 0.0).then(|| Geometric::new(p).expect("probability in (0,1]"));
    let pair_geo = geo(cfg.pair_prob);
    let bg_geo = [geo(bg[0]), geo(bg[1])];

    let n_shards = n_pulses.div_ceil(SHARD_PULSES);
    let shards: Vec<ShardOut> = (0..n_shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s + 1);
            let (start, end) = (s * SHARD_PULSES, ((s + 1) * SHARD_PULSES).min(n_pulses));
            let mut out = ShardOut {
                events: [Vec::new(), Vec::new()],
                truth: CountsQuad::default(),
            };
            if let Some(g) = &pair_geo {
                let mut p = start + g.sample(&mut rng);
                while p < end {
                    let pair = settings[(p / pph) as usize];
                    let (ca, cb) = sampler.draw(pair, &mut rng);
                    let clicks = [
                        ca && rng.random::<f64>() < eta[0],
                        cb && rng.random::<f64>() < eta[1],
                    ];
                    let c = out.truth.get_mut(pair);
                    c.n_sa += clicks[0] as u64;
                    c.n_sb += clicks[1] as u64;
                    c.n_cc += (clicks[0] && clicks[1]) as u64;
                    for st in 0..2 {
                        if clicks[st] {
                            let setting = if st == 0 {
                                pair.a_primed()
                            } else {
                                pair.b_primed()
                            };
                            out.events[st].push(TimeTagEvent {
                                station: station_of(st),
                                pulse_index: p,
                                time_ps: timing.jittered(st, p, &mut rng),
                                setting: setting as u8,
                                detected: true,
                            });
                        }
                    }
                    p = p.saturating_add(1 + g.sample(&mut rng));
                }
            }
            for st in 0..2 {
                if let Some(g) = &bg_geo[st] {
                    let mut p = start + g.sample(&mut rng);
                    while p < end {
                        let pair = settings[(p / pph) as usize];
                        let setting = if st == 0 {
                            pair.a_primed()
                        } else {
                            pair.b_primed()
                        };
                        let half = (timing.period / 2) as i64;
                        let offset = rng.random_range(-half..timing.period as i64 - half);
                        out.events[st].push(TimeTagEvent {
                            station: station_of(st),
                            pulse_index: p,
                            time_ps: (timing.nominal(st, p) as i64 + offset).max(0) as u64,
                            setting: setting as u8,
                            detected: true,
                        });
                        p = p.saturating_add(1 + g.sample(&mut rng));
                    }
                }
            }
            out
        })
        .collect();

    let mut truth = CountsQuad::default();
    let mut streams: [Vec<TimeTagEvent>; 2] = [Vec::new(), Vec::new()];
    for (k, pair) in settings.iter().enumerate() {
        let first = k as u64 * pph;
        let pulses = pph.min(n_pulses - first);
        truth.get_mut(*pair).n_trials += pulses;
        for (st, stream) in streams.iter_mut().enumerate() {
            let primed = if st == 0 {
                pair.a_primed()
            } else {
                pair.b_primed()
            };
            stream.push(TimeTagEvent {
                station: station_of(st),
                pulse_index: first,
                time_ps: timing.nominal(st, first),
                setting: primed as u8,
                detected: false,
            });
        }
    }
    for shard in shards {
        truth.merge(&shard.truth);
        for (st, ev) in shard.events.into_iter().enumerate() {
            streams[st].extend(ev);
        }
    }
    let dead_ps = cfg.dead_time_ns.map(|d| (d * 1000.0).round() as u64);
    for (st, stream) in streams.iter_mut().enumerate() {
        stream.push(TimeTagEvent {
            station: station_of(st),
            pulse_index: n_pulses,
            time_ps: timing.nominal(st, n_pulses),
            setting: 0,
            detected: false,
        });
        stream.sort_by_key(|e| (e.time_ps, e.detected, e.pulse_index));
        if let Some(dead) = dead_ps.filter(|&d| d > 0) {
            let mut last: Option<u64> = None;
            stream.retain(|e| {
                if !e.detected {
                    return true;
                }
                match last {
                    Some(t) if e.time_ps < t + dead => false,
                    _ => {
                        last = Some(e.time_ps);
                        true
                    }
                }
            });
        }
    }
    let [a, b] = streams;
    Ok(Streams {
        a,
        b,
        n_pulses,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial_simulator::tests::base_setup;

    #[test]
    fn deterministic_per_seed() {
        let cfg = base_setup();
        let x = run(&cfg, 50_000, 3).unwrap();
        let y = run(&cfg, 50_000, 3).unwrap();
        let z = run(&cfg, 50_000, 4).unwrap();
        assert_eq!(x, y);
        assert_ne!(x.a, z.a);
    }

    #[test]
    fn no_pairs_no_background_no_detections() {
        let mut cfg = base_setup();
        cfg.pair_prob = 0.0;
        let s = run(&cfg, 10_000, 1).unwrap();
        assert!(s.a.iter().chain(&s.b).all(|e| !e.detected));
        // One marker per hold plus the closing marker.
        assert_eq!(s.a.len(), 11);
        assert_eq!(s.a.last().unwrap().pulse_index, 10_000);
        let empty = run(&cfg, 0, 1).unwrap();
        assert!(empty.a.is_empty() && empty.b.is_empty());
    }

    #[test]
    fn streams_sorted_and_jittered() {
        let mut cfg = base_setup();
        cfg.jitter_ns = (0.05, 0.2);
        let s = run(&cfg, 20_000, 7).unwrap();
        for st in [&s.a, &s.b] {
            assert!(st.windows(2).all(|w| w[0].time_ps <= w[1].time_ps));
        }
        let off = s
            .b
            .iter()
            .filter(|e| e.detected)
            .filter(|e| e.time_ps != cfg.travel_ps(Station::B) + e.pulse_index * cfg.period_ps())
            .count();
        assert!(off > 0);
    }

    #[test]
    fn background_lands_per_window() {
        let mut cfg = base_setup();
        cfg.pair_prob = 0.0;
        cfg.detection = cfg.detection.with_background(0.01, 0.0).unwrap();
        let n = 400_000;
        let s = run(&cfg, n, 11).unwrap();
        let w = cfg.window_half_ps.0 as i64;
        let inside = s
            .a
            .iter()
            .filter(|e| e.detected)
            .filter(|e| {
                let nominal = (cfg.travel_ps(Station::A) + e.pulse_index * cfg.period_ps()) as i64;
                (e.time_ps as i64 - nominal).abs() <= w
            })
            .count() as f64;
        let expect = 0.01 * n as f64;
        assert!(
            (inside - expect).abs() < 5.0 * expect.sqrt(),
            "{inside} vs {expect}"
        );
        assert!(s.b.iter().all(|e| !e.detected));
    }

    #[test]
    fn dead_time_blanks_followers() {
        let mut cfg = base_setup();
        cfg.dead_time_ns = Some(25.0);
        let s = run(&cfg, 20_000, 5).unwrap();
        for st in [&s.a, &s.b] {
            let times: Vec<u64> = st
                .iter()
                .filter(|e| e.detected)
                .map(|e| e.time_ps)
                .collect();
            assert!(times.windows(2).all(|w| w[1] - w[0] >= 25_000));
        }
    }
}
