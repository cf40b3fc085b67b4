use serde::{Deserialize, Serialize};

use super::SettingPair;
use crate::error::{Error, Result};

/// Raw counts recorded at one joint setting pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    /// Coincidences `N++`.
    pub n_cc: u64,
    /// All A detections (`N+0 + N++`).
    pub n_sa: u64,
    /// All B detections (`N0+ + N++`).
    pub n_sb: u64,
    pub n_trials: u64,
}

impl PairCounts {
    pub fn validate(&self) -> Result<()> {
        if self.n_cc > self.n_sa.min(self.n_sb) || self.n_sa.max(self.n_sb) > self.n_trials {
            return Err(Error::invalid(
                "counts",
                format!(
                    "need n_cc <= min(n_sa, n_sb) and singles <= n_trials, got {:?}",
                    self
                ),
            ));
        }
        Ok(())
    }

    /// Detections at A without a B partner (`N+0`).
    pub fn a_only(&self) -> u64 {
        self.n_sa - self.n_cc
    }

    /// Detections at B without an A partner (`N0+`).
    pub fn b_only(&self) -> u64 {
        self.n_sb - self.n_cc
    }

    pub fn merge(&mut self, other: &PairCounts) {
        self.n_cc += other.n_cc;
        self.n_sa += other.n_sa;
        self.n_sb += other.n_sb;
        self.n_trials += other.n_trials;
    }
}

/// Counts at all four setting pairs, indexed by [`SettingPair::index`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountsQuad {
    pub pairs: [PairCounts; 4],
}

impl CountsQuad {
    pub fn new(pairs: [PairCounts; 4]) -> Result<Self> {
        for p in &pairs {
            p.validate()?;
        }
        Ok(Self { pairs })
    }

    pub fn get(&self, pair: SettingPair) -> &PairCounts {
        &self.pairs[pair.index()]
    }

    pub fn get_mut(&mut self, pair: SettingPair) -> &mut PairCounts {
        &mut self.pairs[pair.index()]
    }

    pub fn merge(&mut self, other: &CountsQuad) {
        for (a, b) in self.pairs.iter_mut().zip(other.pairs.iter()) {
            a.merge(b);
        }
    }

    pub fn total_trials(&self) -> u64 {
        self.pairs.iter().map(|p| p.n_trials).sum()
    }
}

/// `J` estimated from counts, with the unnormalized left-hand sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JEstimate {
    /// Each term divided by its own pair's trial count.
    pub j: f64,
    /// Binomial standard error of `j`.
    pub std_error: f64,
    /// `N++(a,b) - N+0(a,b') - N0+(a',b) - N++(a',b')`.
    pub raw_eberhard: i64,
    /// `N++(a,b) + N++(a,b') + N++(a',b) - N++(a',b') - S(a) - S(b)`,
    /// with `S(a)` the A singles at `(a,b')` and `S(b)` the B singles at `(a',b)`.
    pub raw_clauser_horne: i64,
}

pub fn j_from_counts(counts: &CountsQuad) -> Result<JEstimate> {
    for pair in SettingPair::ALL {
        let c = counts.get(pair);
        if c.n_trials == 0 {
            return Err(Error::ZeroTrials { pair: pair.label() });
        }
        c.validate()?;
    }
    let ab = counts.get(SettingPair::AB);
    let abp = counts.get(SettingPair::ABPrime);
    let apb = counts.get(SettingPair::APrimeB);
    let apbp = counts.get(SettingPair::APrimeBPrime);

    // Per-trial random variables whose means are the four J terms:
    //   (a,b):   +cc
    //   (a,b'):  +cc - sa  = -(A click without B)
    //   (a',b):  +cc - sb  = -(B click without A)
    //   (a',b'): -cc
    let mean_var = |hits: u64, n: u64| {
        let n = n as f64;
        let p = hits as f64 / n;
        (p, p * (1.0 - p) / n)
    };
    let (m0, v0) = mean_var(ab.n_cc, ab.n_trials);
    let (m1, v1) = mean_var(abp.a_only(), abp.n_trials);
    let (m2, v2) = mean_var(apb.b_only(), apb.n_trials);
    let (m3, v3) = mean_var(apbp.n_cc, apbp.n_trials);
    let j = m0 - m1 - m2 - m3;

    let i = |x: u64| x as i64;
    let raw_eberhard = i(ab.n_cc) - i(abp.a_only()) - i(apb.b_only()) - i(apbp.n_cc);
    let raw_clauser_horne =
        i(ab.n_cc) + i(abp.n_cc) + i(apb.n_cc) - i(apbp.n_cc) - i(abp.n_sa) - i(apb.n_sb);

    Ok(JEstimate {
        j,
        std_error: (v0 + v1 + v2 + v3).sqrt(),
        raw_eberhard,
        raw_clauser_horne,
    })
}
