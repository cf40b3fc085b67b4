use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{joint_cells, mu_weight, HvdzConfig, MuTable};
use crate::error::{Error, Result};
use crate::quantum_model::{CountsQuad, SettingPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub pair: SettingPair,
    /// Hidden variable, 1..=4.
    pub mu: usize,
    pub click_a: bool,
    pub click_b: bool,
}

/// Draws single trials. For each setting pair the sixteen `(μ, click_a,
/// click_b)` outcomes are folded into one cumulative table, so a trial costs
/// three uniforms.
#[derive(Debug, Clone)]
pub struct TrialSampler {
    unprimed_prob: f64,
    cumulative: [[f64; 16]; 4],
}

impl TrialSampler {
    /// `setting_bias` shifts each station's unprimed-setting probability to `½ + δ`.
    pub fn new(cfg: &HvdzConfig, tables: &MuTable, setting_bias: f64) -> Result<Self> {
        if !(-0.5..=0.5).contains(&setting_bias) {
            return Err(Error::invalid(
                "setting_bias",
                format!("must lie in [-1/2, 1/2], got {setting_bias}"),
            ));
        }
        tables.validate(&cfg.marginals)?;
        let mut cumulative = [[0.0; 16]; 4];
        for pair in SettingPair::ALL {
            let (x, y) = cfg.marginals.for_pair(pair);
            let mut acc = 0.0;
            for mu in 1..=4 {
                let w = mu_weight(cfg.q, mu, pair);
                let cells = joint_cells(tables.get(mu, pair), x, y);
                for (k, c) in cells.iter().enumerate() {
                    acc += w * c.max(0.0);
                    cumulative[pair.index()][(mu - 1) * 4 + k] = acc;
                }
            }
            if (acc - 1.0).abs() > 1e-9 {
                return Err(Error::InfeasibleDisplacements(format!(
                    "outcome probabilities for {} sum to {acc}",
                    pair.label()
                )));
            }
            cumulative[pair.index()][15] = f64::INFINITY;
        }
        Ok(Self {
            unprimed_prob: 0.5 + setting_bias,
            cumulative,
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> TrialOutcome {
        let a_primed = rng.random::<f64>() >= self.unprimed_prob;
        let b_primed = rng.random::<f64>() >= self.unprimed_prob;
        self.draw_at(SettingPair::from_bits(a_primed, b_primed), rng)
    }

    /// A trial at an externally chosen setting pair.
    pub fn draw_at<R: Rng + ?Sized>(&self, pair: SettingPair, rng: &mut R) -> TrialOutcome {
        let u: f64 = rng.random();
        let k = self.cumulative[pair.index()]
            .iter()
            .position(|&c| u < c)
            .unwrap_or(15);
        let cell = k % 4;
        TrialOutcome {
            pair,
            mu: k / 4 + 1,
            click_a: cell < 2,
            click_b: cell == 0 || cell == 2,
        }
    }
}

fn record(counts: &mut CountsQuad, t: &TrialOutcome) {
    let c = counts.get_mut(t.pair);
    c.n_trials += 1;
    c.n_sa += t.click_a as u64;
    c.n_sb += t.click_b as u64;
    c.n_cc += (t.click_a && t.click_b) as u64;
}

/// Simulates `n_trials` trials split over `shards` independent ChaCha8 streams.
/// The result depends only on `(seed, n_trials, shards)`.
pub fn sample_trials(
    cfg: &HvdzConfig,
    tables: &MuTable,
    n_trials: u64,
    setting_bias: f64,
    seed: u64,
    shards: usize,
) -> Result<CountsQuad> {
    if n_trials == 0 {
        return Err(Error::invalid("n_trials", "must be at least 1"));
    }
    if shards == 0 {
        return Err(Error::invalid("shards", "must be at least 1"));
    }
    let sampler = TrialSampler::new(cfg, tables, setting_bias)?;
    let base = n_trials / shards as u64;
    let extra = n_trials % shards as u64;
    let parts: Vec<CountsQuad> = (0..shards as u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s);
            let n = base + u64::from(s < extra);
            let mut counts = CountsQuad::default();
            for _ in 0..n {
                record(&mut counts, &sampler.draw(&mut rng));
            }
            counts
        })
        .collect();
    let mut total = CountsQuad::default();
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hvdz_model::{j_dz, Displacements, Marginals};
    use crate::quantum_model::j_from_counts;

    const PA: f64 = 0.0825;

    fn maximal(q: f64) -> (HvdzConfig, MuTable) {
        let cfg = HvdzConfig::maximal(PA, PA, q).unwrap();
        let t = cfg.tables().unwrap();
        (cfg, t)
    }

    #[test]
    fn deterministic_per_seed_and_shards() {
        let (cfg, t) = maximal(0.7);
        let a = sample_trials(&cfg, &t, 100_000, 0.0, 9, 4).unwrap();
        let b = sample_trials(&cfg, &t, 100_000, 0.0, 9, 4).unwrap();
        let c = sample_trials(&cfg, &t, 100_000, 0.0, 10, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.total_trials(), 100_000);
        let odd = sample_trials(&cfg, &t, 1001, 0.0, 9, 7).unwrap();
        assert_eq!(odd.total_trials(), 1001);
    }

    #[test]
    fn half_correlation_gives_no_violation() {
        let (cfg, t) = maximal(0.5);
        let c = sample_trials(&cfg, &t, 1_000_000, 0.0, 1, 8).unwrap();
        let est = j_from_counts(&c).unwrap();
        assert!(est.j.abs() < 5.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn matches_closed_form() {
        let q = 0.78;
        let (cfg, t) = maximal(q);
        let c = sample_trials(&cfg, &t, 10_000_000, 0.0, 2, 16).unwrap();
        let est = j_from_counts(&c).unwrap();
        let exact = j_dz(q, PA, -3.0 * PA).unwrap();
        assert!(
            (est.j - exact).abs() < 5.0 * est.std_error,
            "{est:?} vs {exact}"
        );
    }

    #[test]
    fn perfect_correlation_kills_anti_target() {
        let (cfg, t) = maximal(1.0);
        let c = sample_trials(&cfg, &t, 200_000, 0.0, 3, 4).unwrap();
        assert_eq!(c.get(SettingPair::APrimeBPrime).n_cc, 0);
        assert!(c.get(SettingPair::AB).n_cc > 0);
    }

    #[test]
    fn bias_shifts_setting_frequencies() {
        let (cfg, t) = maximal(0.6);
        let c = sample_trials(&cfg, &t, 400_000, 0.1, 4, 4).unwrap();
        let frac = c.get(SettingPair::AB).n_trials as f64 / 400_000.0;
        assert!((frac - 0.36).abs() < 5e-3, "{frac}");
        assert!(sample_trials(&cfg, &t, 10, 0.6, 0, 1).is_err());
    }

    #[test]
    fn mu_follows_settings() {
        let (cfg, t) = maximal(0.9);
        let s = TrialSampler::new(&cfg, &t, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let hits = (0..n)
            .map(|_| s.draw(&mut rng))
            .filter(|o| o.mu == o.pair.index() + 1)
            .count();
        assert!((hits as f64 / n as f64 - 0.81).abs() < 5e-3);
    }

    #[test]
    fn infeasible_tables_rejected_before_sampling() {
        let m = Marginals::new(0.08, 0.1).unwrap();
        let cfg = HvdzConfig::new(m, Displacements::maximal(0.08, 0.1), 0.7).unwrap();
        let raw = crate::hvdz_model::mu_tables_unchecked(&cfg.displacements, &m);
        assert!(sample_trials(&cfg, &raw, 10, 0.0, 0, 1)
            .unwrap_err()
            .is_infeasible());
        assert!(sample_trials(&cfg, &raw, 0, 0.0, 0, 1).is_err());
    }

    #[test]
    fn no_signaling_in_singles() {
        let (cfg, t) = maximal(0.78);
        let mut outliers = 0;
        for seed in 0..100 {
            let c = sample_trials(&cfg, &t, 40_000, 0.0, seed, 2).unwrap();
            let rate = |p: SettingPair| {
                let x = c.get(p);
                (x.n_sa as f64 / x.n_trials as f64, x.n_trials as f64)
            };
            let (r0, n0) = rate(SettingPair::AB);
            let (r1, n1) = rate(SettingPair::ABPrime);
            let se = (r0 * (1.0 - r0) / n0 + r1 * (1.0 - r1) / n1).sqrt();
            if (r0 - r1).abs() > 5.0 * se {
                outliers += 1;
            }
        }
        assert_eq!(outliers, 0);
    }
}
