//! Angle (and optionally `r`) optimization of the CH and CHSH objectives.
//!
//! A uniform grid over `[0, π)` for each of the four angles is searched
//! exhaustively, then the best grid point is polished with Nelder–Mead.
//! The grid search exploits the structure
//! `T(a,b) + T(a,b') + T(a',b) - T(a',b') + U(a) + V(b)`: maximizing over `a'`
//! depends only on `(b, b')`, so the full 4-D grid costs `O(n³)` per `r`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    coincidence_probability, nelder_mead, singles_probability, DetectionModel, EntangledState,
    ObservedProbabilities, SettingsQuad, StateVariant, Station,
};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RChoice {
    Fixed(f64),
    /// Search `r` over `[0, 1]`.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    /// The CH/Eberhard `J`.
    Ch,
    /// CHSH `S`.
    Chsh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub angle_points: usize,
    pub r_points: usize,
    /// Extra Nelder–Mead runs from seeded random starting points.
    pub random_starts: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            angle_points: 64,
            r_points: 32,
            random_starts: 4,
            seed: 0,
            tolerance: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub state: EntangledState,
    pub settings: SettingsQuad,
    pub value: f64,
    /// Best value found on the coarse grid alone.
    pub grid_value: f64,
}

impl Objective {
    pub fn evaluate(
        self,
        state: &EntangledState,
        settings: &SettingsQuad,
        det: &DetectionModel,
    ) -> f64 {
        let obs = ObservedProbabilities::compute(state, settings, det);
        match self {
            Objective::Ch => obs.j(),
            Objective::Chsh => obs.chsh(),
        }
    }
}

struct GridTables {
    n: usize,
    pair: Vec<f64>,
    alice: Vec<f64>,
    bob: Vec<f64>,
}

fn grid_tables(
    objective: Objective,
    state: &EntangledState,
    det: &DetectionModel,
    n: usize,
) -> GridTables {
    let angles: Vec<f64> = (0..n).map(|k| k as f64 * PI / n as f64).collect();
    let pa: Vec<f64> = angles
        .iter()
        .map(|&x| singles_probability(state, Station::A, x))
        .collect();
    let pb: Vec<f64> = angles
        .iter()
        .map(|&x| singles_probability(state, Station::B, x))
        .collect();
    let oa: Vec<f64> = pa
        .iter()
        .map(|&p| det.observed_single(Station::A, p))
        .collect();
    let ob: Vec<f64> = pb
        .iter()
        .map(|&p| det.observed_single(Station::B, p))
        .collect();
    let mut pair = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let c = det.observed_coincidence(
                coincidence_probability(state, angles[i], angles[j]),
                pa[i],
                pb[j],
            );
            pair[i * n + j] = match objective {
                Objective::Ch => c,
                Objective::Chsh => 1.0 - 2.0 * oa[i] - 2.0 * ob[j] + 4.0 * c,
            };
        }
    }
    let (alice, bob) = match objective {
        Objective::Ch => (
            oa.iter().map(|v| -v).collect(),
            ob.iter().map(|v| -v).collect(),
        ),
        Objective::Chsh => (vec![0.0; n], vec![0.0; n]),
    };
    GridTables {
        n,
        pair,
        alice,
        bob,
    }
}

/// Exhaustive grid maximum; exact ties go to the lexicographically smallest
/// `(a, a', b, b')` index tuple.
fn grid_best(t: &GridTables) -> (f64, [usize; 4]) {
    let n = t.n;
    let mut inner = vec![(f64::NEG_INFINITY, 0usize); n * n];
    for b in 0..n {
        for bp in 0..n {
            let mut best = (f64::NEG_INFINITY, 0);
            for ap in 0..n {
                let v = t.pair[ap * n + b] - t.pair[ap * n + bp];
                if v > best.0 {
                    best = (v, ap);
                }
            }
            inner[b * n + bp] = best;
        }
    }
    let mut best = (f64::NEG_INFINITY, [usize::MAX; 4]);
    for a in 0..n {
        for b in 0..n {
            let head = t.pair[a * n + b] + t.alice[a] + t.bob[b];
            for bp in 0..n {
                let (m, ap) = inner[b * n + bp];
                let v = head + t.pair[a * n + bp] + m;
                let idx = [a, ap, b, bp];
                if v > best.0 || (v == best.0 && idx < best.1) {
                    best = (v, idx);
                }
            }
        }
    }
    best
}

fn fold_unit(x: f64) -> f64 {
    let y = x.rem_euclid(2.0);
    if y > 1.0 {
        2.0 - y
    } else {
        y
    }
}

struct Search<'a> {
    objective: Objective,
    variant: StateVariant,
    r: RChoice,
    det: &'a DetectionModel,
    cfg: &'a OptimizerConfig,
}

impl Search<'_> {
    fn decode(&self, x: &[f64]) -> (EntangledState, SettingsQuad) {
        let r = match self.r {
            RChoice::Fixed(r) => r,
            RChoice::Free => fold_unit(x[4]),
        };
        let state = EntangledState {
            variant: self.variant,
            r,
        };
        (state, SettingsQuad::reduced(x[0], x[1], x[2], x[3]))
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (state, settings) = self.decode(x);
        self.objective.evaluate(&state, &settings, self.det)
    }

    fn polish(&self, x0: Vec<f64>) -> (f64, Vec<f64>) {
        let h = PI / self.cfg.angle_points as f64;
        let mut step = vec![h; 4];
        if x0.len() == 5 {
            step.push(1.0 / (self.cfg.r_points.max(2) - 1) as f64);
        }
        let res = nelder_mead::minimize(
            |x| -self.value(x),
            &x0,
            &step,
            self.cfg.tolerance * 1e-4,
            6000,
        );
        (-res.f, res.x)
    }

    /// Grid search at one `r`, returning the grid value and its polished optimum.
    fn best_on_grid(&self, r: f64) -> (f64, f64, Vec<f64>) {
        let state = EntangledState {
            variant: self.variant,
            r,
        };
        let tables = grid_tables(self.objective, &state, self.det, self.cfg.angle_points);
        let (gv, idx) = grid_best(&tables);
        let h = PI / self.cfg.angle_points as f64;
        let mut x0: Vec<f64> = idx.iter().map(|&k| k as f64 * h).collect();
        if matches!(self.r, RChoice::Free) {
            x0.push(r);
        }
        let (v, x) = self.polish(x0);
        (gv, v, x)
    }

    fn run(&self) -> Optimum {
        let r_grid: Vec<f64> = match self.r {
            RChoice::Fixed(r) => vec![r],
            RChoice::Free => {
                let m = self.cfg.r_points.max(2);
                (0..m).map(|k| k as f64 / (m - 1) as f64).collect()
            }
        };
        let grid_runs: Vec<(f64, f64, Vec<f64>)> =
            r_grid.par_iter().map(|&r| self.best_on_grid(r)).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let random_x0: Vec<Vec<f64>> = (0..self.cfg.random_starts)
            .map(|_| {
                let mut x: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * PI).collect();
                if matches!(self.r, RChoice::Free) {
                    x.push(rng.random::<f64>());
                }
                x
            })
            .collect();
        let random_runs: Vec<(f64, Vec<f64>)> = random_x0
            .into_par_iter()
            .map(|x0| self.polish(x0))
            .collect();

        let grid_value = grid_runs
            .iter()
            .map(|g| g.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut best: Option<(f64, Vec<f64>)> = None;
        let candidates = grid_runs
            .into_iter()
            .map(|(_, v, x)| (v, x))
            .chain(random_runs);
        for (v, x) in candidates {
            if best.as_ref().is_none_or(|b| v > b.0) {
                best = Some((v, x));
            }
        }
        let (value, x) = best.expect("at least one candidate");
        let (state, mut settings) = self.decode(&x);
        let mut value = value;

        if self.objective == Objective::Ch {
            let comp = settings.complement();
            let cv = self.objective.evaluate(&state, &comp, self.det);
            let singles = |s: &SettingsQuad| {
                singles_probability(&state, Station::A, s.a)
                    + singles_probability(&state, Station::B, s.b)
            };
            if cv > value + 1e-12
                || ((cv - value).abs() <= 1e-12 && singles(&comp) < singles(&settings))
            {
                settings = comp;
                value = cv;
            }
        }

        Optimum {
            state,
            settings,
            value,
            grid_value,
        }
    }
}

/// Maximize `J` over the analyzer angles (and over `r` when free).
///
/// At `η = 1` complementing every analyzer leaves `J` unchanged; of two such
/// equivalent optima the one with the smaller singles is returned.
pub fn optimize_j(
    variant: StateVariant,
    r: RChoice,
    det: &DetectionModel,
    cfg: &OptimizerConfig,
) -> Result<Optimum> {
    optimize(Objective::Ch, variant, r, det, cfg)
}

/// Maximize CHSH `S` over the analyzer angles (and over `r` when free).
pub fn optimize_chsh(
    variant: StateVariant,
    r: RChoice,
    det: &DetectionModel,
    cfg: &OptimizerConfig,
) -> Result<Optimum> {
    optimize(Objective::Chsh, variant, r, det, cfg)
}

/// [`optimize_j`] at a fixed state.
pub fn optimize_j_for(
    state: &EntangledState,
    det: &DetectionModel,
    cfg: &OptimizerConfig,
) -> Optimum {
    Search {
        objective: Objective::Ch,
        variant: state.variant(),
        r: RChoice::Fixed(state.r()),
        det,
        cfg,
    }
    .run()
}

fn optimize(
    objective: Objective,
    variant: StateVariant,
    r: RChoice,
    det: &DetectionModel,
    cfg: &OptimizerConfig,
) -> Result<Optimum> {
    if let RChoice::Fixed(r) = r {
        EntangledState::new(variant, r)?;
    }
    if cfg.angle_points < 2 {
        return Err(crate::Error::invalid(
            "angle_points",
            "need at least 2 grid points",
        ));
    }
    Ok(Search {
        objective,
        variant,
        r,
        det,
        cfg,
    }
    .run())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum_model::j_probability;

    /// Direct 4-D loop over the same grid, no decomposition.
    fn brute_grid(
        objective: Objective,
        state: &EntangledState,
        det: &DetectionModel,
        n: usize,
    ) -> (f64, [usize; 4]) {
        let h = PI / n as f64;
        let mut best = (f64::NEG_INFINITY, [0; 4]);
        for a in 0..n {
            for ap in 0..n {
                for b in 0..n {
                    for bp in 0..n {
                        let q = SettingsQuad::reduced(
                            a as f64 * h,
                            ap as f64 * h,
                            b as f64 * h,
                            bp as f64 * h,
                        );
                        let v = objective.evaluate(state, &q, det);
                        if v > best.0 + 1e-13 {
                            best = (v, [a, ap, b, bp]);
                        }
                    }
                }
            }
        }
        best
    }

    #[test]
    fn decomposed_grid_matches_brute_force() {
        let det = DetectionModel::new(0.9, 0.8, 1e-3, 0.0).unwrap();
        for (objective, state) in [
            (Objective::Ch, EntangledState::psi(0.3).unwrap()),
            (Objective::Ch, EntangledState::phi(-0.6).unwrap()),
            (Objective::Chsh, EntangledState::phi(1.0).unwrap()),
        ] {
            let n = 12;
            let (bv, _) = brute_grid(objective, &state, &det, n);
            let (gv, idx) = grid_best(&grid_tables(objective, &state, &det, n));
            assert!((bv - gv).abs() < 1e-12, "{objective:?}: {bv} vs {gv}");
            let h = PI / n as f64;
            let q = SettingsQuad::reduced(
                idx[0] as f64 * h,
                idx[1] as f64 * h,
                idx[2] as f64 * h,
                idx[3] as f64 * h,
            );
            assert!((objective.evaluate(&state, &q, &det) - gv).abs() < 1e-12);
        }
    }

    #[test]
    fn optimum_dominates_every_grid_point() {
        let cfg = OptimizerConfig {
            angle_points: 16,
            ..Default::default()
        };
        let state = EntangledState::psi(0.29).unwrap();
        let det = DetectionModel::ideal();
        let opt = optimize_j_for(&state, &det, &cfg);
        let (gv, _) = brute_grid(Objective::Ch, &state, &det, 16);
        assert!(opt.value >= gv - 1e-15);
        assert!((j_probability(&state, &opt.settings, &det) - opt.value).abs() < 1e-15);
    }

    #[test]
    fn maximally_entangled_ch_optimum() {
        let opt = optimize_j(
            StateVariant::PsiE,
            RChoice::Fixed(1.0),
            &DetectionModel::ideal(),
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert!(
            (opt.value - (2f64.sqrt() - 1.0) / 2.0).abs() < 1e-8,
            "{}",
            opt.value
        );
    }

    #[test]
    fn ideal_optimum_at_r_029() {
        // Independent multi-start Nelder-Mead in double precision: 0.0670607144512
        let opt = optimize_j(
            StateVariant::PsiE,
            RChoice::Fixed(0.29),
            &DetectionModel::ideal(),
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert!(
            (opt.value - 0.067_060_714_451).abs() < 1e-8,
            "{}",
            opt.value
        );
        assert!(opt.value >= opt.grid_value);
    }

    #[test]
    fn eberhard_branch_below_unit_efficiency() {
        let det = DetectionModel::symmetric(0.8).unwrap();
        let opt = optimize_j(
            StateVariant::PsiE,
            RChoice::Fixed(0.29),
            &det,
            &OptimizerConfig::default(),
        )
        .unwrap();
        let pa = singles_probability(&opt.state, Station::A, opt.settings.a);
        let pb = singles_probability(&opt.state, Station::B, opt.settings.b);
        assert!(pa < 0.2 && pb < 0.2, "singles {pa} {pb}");
        assert!(opt.value > 0.0);
    }

    #[test]
    fn below_two_thirds_no_violation() {
        let det = DetectionModel::symmetric(0.66).unwrap();
        let cfg = OptimizerConfig::default();
        for variant in [StateVariant::PsiE, StateVariant::PhiE] {
            let opt = optimize_j(variant, RChoice::Free, &det, &cfg).unwrap();
            assert!(opt.value <= 1e-12, "{variant}: {}", opt.value);
        }
        let opt = optimize_j(StateVariant::PsiE, RChoice::Fixed(0.2), &det, &cfg).unwrap();
        assert!(opt.value <= 1e-12);
    }

    #[test]
    fn seed_does_not_change_the_optimum() {
        let det = DetectionModel::symmetric(0.9).unwrap();
        let a = optimize_j(
            StateVariant::PhiE,
            RChoice::Fixed(0.26),
            &det,
            &OptimizerConfig::default().with_seed(1),
        )
        .unwrap();
        let b = optimize_j(
            StateVariant::PhiE,
            RChoice::Fixed(0.26),
            &det,
            &OptimizerConfig::default().with_seed(99),
        )
        .unwrap();
        assert!((a.value - b.value).abs() < 1e-6);
    }

    #[test]
    fn chsh_reaches_tsirelson_at_maximal_entanglement() {
        for variant in [StateVariant::PsiE, StateVariant::PhiE] {
            let opt = optimize_chsh(
                variant,
                RChoice::Fixed(1.0),
                &DetectionModel::ideal(),
                &OptimizerConfig::default(),
            )
            .unwrap();
            assert!(
                (opt.value - 2.0 * 2f64.sqrt()).abs() < 1e-6,
                "{}",
                opt.value
            );
        }
    }

    #[test]
    fn product_state_chsh_grid_never_exceeds_two() {
        let state = EntangledState::psi(0.0).unwrap();
        let t = grid_tables(Objective::Chsh, &state, &DetectionModel::ideal(), 24);
        let (v, _) = grid_best(&t);
        assert!(v <= 2.0 + 1e-12);
        let opt = optimize_chsh(
            StateVariant::PsiE,
            RChoice::Fixed(0.0),
            &DetectionModel::ideal(),
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert!(opt.value <= 2.0 + 1e-12);
    }

    #[test]
    fn rejects_bad_fixed_ratio() {
        assert!(optimize_j(
            StateVariant::PsiE,
            RChoice::Fixed(1.5),
            &DetectionModel::ideal(),
            &OptimizerConfig::default()
        )
        .is_err());
    }
}
