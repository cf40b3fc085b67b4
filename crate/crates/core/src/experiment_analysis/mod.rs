//! Loophole audit of published Bell-test records.

mod record;
mod table;

pub use record::{
    default_records, parse_records, ExperimentRecord, Inequality, SinglesCounts, DEFAULT_RECORDS,
};
pub use table::{render_table_kv, render_table_text, reproduce_table, TableCheck, Tolerance};

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hvdz_model::{q_from_s, q_required};
use crate::kv::{Document, Section};
use crate::quantum_model::{
    eta_threshold, optimize_j_for, per_pair_background, DetectionModel, EntangledState, JParts,
    OptimizerConfig, SettingsQuad,
};
use crate::report::{sig6, TextTable};

/// Relative difference below which a comparison is reported as marginal.
pub const MARGINAL_BAND: f64 = 0.02;
/// CHSH efficiency threshold used for verdicts, `2(√2 − 1)`.
pub const CHSH_ETA_THRESHOLD: f64 = 0.828;
/// Other CHSH thresholds in common use.
pub const CHSH_ETA_ALTERNATES: [(&str, f64); 2] = [
    ("1/sqrt(2)", std::f64::consts::FRAC_1_SQRT_2),
    ("0.68", 0.68),
];
/// Baseline EI threshold without background.
pub const EI_ETA_THRESHOLD: f64 = 2.0 / 3.0;

pub fn estimate_p_plus_a(n_cc_11: u64, n_nc_12: u64, trials_1: u64, trials_2: u64) -> Result<f64> {
    if trials_1 == 0 || trials_2 == 0 {
        return Err(Error::ZeroTrials {
            pair: "singles estimate",
        });
    }
    let mean = (trials_1 as f64 + trials_2 as f64) / 2.0;
    Ok((n_cc_11 + n_nc_12) as f64 / mean)
}

/// Positive root of `η² C − η (P_a + P_b) = J_m` in `(0, 1]`.
pub fn eta_equivalent_from_parts(parts: &JParts, j_m: f64) -> Result<f64> {
    let c = parts.coincidence;
    let s = parts.singles_a + parts.singles_b;
    if !(c > 0.0) {
        return Err(Error::NoRoot(format!(
            "coincidence combination {c} is not positive"
        )));
    }
    let disc = s * s + 4.0 * c * j_m;
    if disc < 0.0 {
        return Err(Error::NoRoot(format!(
            "J_m = {j_m} below the reachable minimum"
        )));
    }
    let hi = (s + disc.sqrt()) / (2.0 * c);
    let lo = (s - disc.sqrt()) / (2.0 * c);
    if lo > 0.0 && lo <= 1.0 {
        return Err(Error::NoRoot(format!("two roots in (0, 1]: {lo} and {hi}")));
    }
    if !(hi > 0.0 && hi <= 1.0 + 1e-12) {
        return Err(Error::NoRoot(format!("root {hi} outside (0, 1]")));
    }
    Ok(hi.min(1.0))
}

pub fn eta_equivalent(state: &EntangledState, settings: &SettingsQuad, j_m: f64) -> Result<f64> {
    eta_equivalent_from_parts(&JParts::compute(state, settings), j_m)
}

pub fn j_corrected(state: &EntangledState, settings: &SettingsQuad, eta_meas: (f64, f64)) -> f64 {
    JParts::compute(state, settings).j(eta_meas.0, eta_meas.1)
}

/// Settings maximizing `J` at the measured efficiencies.
pub fn reference_settings(
    state: &EntangledState,
    eta_meas: (f64, f64),
    cfg: &OptimizerConfig,
) -> Result<SettingsQuad> {
    let det = DetectionModel::new(eta_meas.0, eta_meas.1, 0.0, 0.0)?;
    Ok(optimize_j_for(state, &det, cfg).settings)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub optimizer: OptimizerConfig,
    /// Run the threshold search even when no background is given.
    pub compute_baseline_threshold: bool,
}

/// Quantities re-derived from a record.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub settings: Option<SettingsQuad>,
    /// Ideal `J` at the reference settings.
    pub j_qm: Option<f64>,
    pub j_corr: Option<f64>,
    pub eta_eq: Option<f64>,
    pub eta_thr: Option<f64>,
    pub p_a_estimate: Option<f64>,
    /// `P⁺(a)` used for `q_m`.
    pub p_a: Option<f64>,
    pub q_m: Option<f64>,
    pub q_m_ideal: Option<f64>,
    pub q_qm: Option<f64>,
}

/// Background-free threshold, searched once per process.
fn baseline_threshold() -> Result<f64> {
    static BASELINE: OnceLock<Result<f64>> = OnceLock::new();
    BASELINE.get_or_init(|| eta_threshold(0.0, 0.0)).clone()
}

pub fn derive(rec: &ExperimentRecord, cfg: &AnalysisConfig) -> Result<Derived> {
    let mut d = Derived::default();
    match rec.inequality {
        Inequality::Ei => {
            if let (Some(state), Some(eta)) = (rec.state, rec.eta_meas) {
                let settings = reference_settings(&state, eta, &cfg.optimizer)?;
                let parts = JParts::compute(&state, &settings);
                d.settings = Some(settings);
                d.j_qm = Some(parts.j(1.0, 1.0));
                d.j_corr = Some(parts.j(eta.0, eta.1));
                if let Some(j_m) = rec.j_m {
                    d.eta_eq = eta_equivalent_from_parts(&parts, j_m).ok();
                }
            }
            d.eta_thr = match (rec.background_window, rec.pair_prob) {
                (Some((ba, bb)), Some(pp)) => Some(eta_threshold(
                    per_pair_background(ba, pp)?,
                    per_pair_background(bb, pp)?,
                )?),
                _ if cfg.compute_baseline_threshold => Some(baseline_threshold()?),
                _ => Some(EI_ETA_THRESHOLD),
            };
            if let Some(c) = rec.singles_counts {
                d.p_a_estimate = Some(estimate_p_plus_a(
                    c.n_cc_11, c.n_nc_12, c.trials_1, c.trials_2,
                )?);
            }
            d.p_a = rec.p_a_measured.or(d.p_a_estimate);
            if let Some(j_m) = rec.j_m {
                d.q_m = d.p_a.map(|p| q_required(j_m, p, None)).transpose()?;
                d.q_m_ideal = rec
                    .p_a_ideal
                    .map(|p| q_required(j_m, p, None))
                    .transpose()?;
            }
            if let (Some(j), Some(p)) = (rec.j_qm, rec.p_a_ideal) {
                d.q_qm = Some(q_required(j, p, None)?);
            }
        }
        Inequality::Chsh => {
            d.eta_thr = Some(2.0 * (2f64.sqrt() - 1.0));
            d.q_m = rec.s_m.map(q_from_s).transpose()?;
            d.q_qm = rec.s_qm.map(q_from_s).transpose()?;
        }
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Closed,
    Open,
    Marginal,
    NotEvaluable,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Closed => "closed",
            Verdict::Open => "open",
            Verdict::Marginal => "marginal",
            Verdict::NotEvaluable => "not evaluable",
        })
    }
}

/// `closed` when `value` exceeds `bound` by more than the marginal band.
fn exceeds(value: f64, bound: f64) -> Verdict {
    let scale = value.abs().max(bound.abs());
    if scale > 0.0 && (value - bound).abs() < MARGINAL_BAND * scale {
        Verdict::Marginal
    } else if value > bound {
        Verdict::Closed
    } else {
        Verdict::Open
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub verdict: Verdict,
    /// The quantity that must win, and what it is compared against.
    pub value: Option<f64>,
    pub bound: Option<f64>,
    pub description: String,
}

impl Comparison {
    fn not_evaluable(description: impl Into<String>) -> Self {
        Self {
            verdict: Verdict::NotEvaluable,
            value: None,
            bound: None,
            description: description.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopholeReport {
    pub name: String,
    pub inequality: Inequality,
    /// `η_eq` (or `min η_meas` for CHSH) against `η_thr`.
    pub detection: Comparison,
    /// `q_m` against `q_set`.
    pub locality: Comparison,
    pub j_corr_ratio: Option<f64>,
    pub derived: Derived,
    pub notes: Vec<String>,
}

impl LoopholeReport {
    pub fn evaluable(&self) -> bool {
        self.detection.verdict != Verdict::NotEvaluable
            && self.locality.verdict != Verdict::NotEvaluable
    }
}

pub fn audit(rec: &ExperimentRecord) -> Result<LoopholeReport> {
    audit_with(rec, &AnalysisConfig::default())
}

pub fn audit_with(rec: &ExperimentRecord, cfg: &AnalysisConfig) -> Result<LoopholeReport> {
    let d = derive(rec, cfg)?;
    let mut notes = Vec::new();

    let (eta, eta_label) = match rec.inequality {
        Inequality::Ei => (rec.eta_eq.or(d.eta_eq), "eta_eq"),
        Inequality::Chsh => (rec.eta_meas.map(|(a, b)| a.min(b)), "min eta_meas"),
    };
    let thr = match rec.inequality {
        Inequality::Ei => rec.eta_thr.or(d.eta_thr),
        Inequality::Chsh => rec.eta_thr.or(Some(CHSH_ETA_THRESHOLD)),
    };
    let detection = match (eta, thr) {
        (Some(e), Some(t)) => Comparison {
            verdict: exceeds(e, t),
            value: Some(e),
            bound: Some(t),
            description: format!("{eta_label} > eta_thr"),
        },
        _ => Comparison::not_evaluable(format!("{eta_label} or eta_thr missing")),
    };

    let locality = match (d.q_m, rec.q_set) {
        (Some(qm), Some(qs)) => Comparison {
            verdict: exceeds(qm - 0.5, qs - 0.5),
            value: Some(qm),
            bound: Some(qs),
            description: "q_m > q_set".into(),
        },
        (None, _) => Comparison::not_evaluable("q_m not derivable"),
        (_, None) => Comparison::not_evaluable("q_set missing"),
    };

    let j_corr_ratio = match rec.inequality {
        Inequality::Ei => d.j_corr.zip(rec.j_m).map(|(c, m)| c / m),
        Inequality::Chsh => rec.s_corr.zip(rec.s_m).map(|(c, m)| c / m),
    };

    if let Some(e) = d.eta_eq {
        notes.push(format!(
            "eta_eq computed at angles optimized for eta_meas: {}",
            sig6(e)
        ));
    }
    if let Some(j) = d.j_corr {
        notes.push(format!(
            "j_corr computed at angles optimized for eta_meas: {}",
            sig6(j)
        ));
    }
    if let (Some(t), Inequality::Ei) = (d.eta_thr, rec.inequality) {
        if rec.background_window.is_some() {
            notes.push(format!("eta_thr with background: {}", sig6(t)));
        }
    }
    if let Some(n) = &rec.eta_thr_note {
        notes.push(format!("eta_thr annotated {n}"));
    }
    if let Some(q) = d.q_m_ideal {
        notes.push(format!("q_m with ideal P+(a): 1/2 + {}", sig6(q - 0.5)));
    }
    if rec.inequality == Inequality::Chsh {
        let alts: Vec<String> = CHSH_ETA_ALTERNATES
            .iter()
            .map(|(k, v)| format!("{k} = {}", sig6(*v)))
            .collect();
        notes.push(format!("alternate CHSH thresholds: {}", alts.join(", ")));
    }

    Ok(LoopholeReport {
        name: rec.name.clone(),
        inequality: rec.inequality,
        detection,
        locality,
        j_corr_ratio,
        derived: d,
        notes,
    })
}

/// Audits every record in parallel; reports come back sorted by name.
pub fn audit_all(
    records: &[ExperimentRecord],
    cfg: &AnalysisConfig,
) -> Result<Vec<LoopholeReport>> {
    let mut out = records
        .par_iter()
        .map(|r| audit_with(r, cfg))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}

fn opt(x: Option<f64>) -> String {
    x.map(sig6).unwrap_or_else(|| "-".into())
}

pub fn render_reports_text(reports: &[LoopholeReport]) -> String {
    let mut t = TextTable::new([
        "record",
        "ineq",
        "detection",
        "eta",
        "eta_thr",
        "locality",
        "q_m",
        "q_set",
        "j_corr/j_m",
    ]);
    for r in reports {
        t.push([
            r.name.clone(),
            r.inequality.to_string(),
            r.detection.verdict.to_string(),
            opt(r.detection.value),
            opt(r.detection.bound),
            r.locality.verdict.to_string(),
            opt(r.locality.value),
            opt(r.locality.bound),
            opt(r.j_corr_ratio),
        ]);
    }
    let mut out = t.render();
    for r in reports.iter().filter(|r| !r.notes.is_empty()) {
        out.push_str(&format!("\n{}:\n", r.name));
        for n in &r.notes {
            out.push_str(&format!("  {n}\n"));
        }
    }
    out
}

pub fn render_reports_kv(reports: &[LoopholeReport]) -> Document {
    let put = |s: &mut Section, k: &str, v: Option<f64>| {
        if let Some(v) = v {
            s.set(k, format!("{v:e}"));
        }
    };
    Document {
        sections: reports
            .iter()
            .map(|r| {
                let mut s = Section::new(r.name.clone());
                s.set("inequality", r.inequality);
                s.set("detection", r.detection.verdict);
                put(&mut s, "detection_value", r.detection.value);
                put(&mut s, "detection_bound", r.detection.bound);
                s.set("locality", r.locality.verdict);
                put(&mut s, "locality_value", r.locality.value);
                put(&mut s, "locality_bound", r.locality.bound);
                put(&mut s, "j_corr_ratio", r.j_corr_ratio);
                put(&mut s, "eta_eq_computed", r.derived.eta_eq);
                put(&mut s, "j_corr_computed", r.derived.j_corr);
                put(&mut s, "j_qm_computed", r.derived.j_qm);
                put(&mut s, "eta_thr_computed", r.derived.eta_thr);
                put(&mut s, "q_m_computed", r.derived.q_m);
                put(&mut s, "q_m_ideal_computed", r.derived.q_m_ideal);
                put(&mut s, "q_qm_computed", r.derived.q_qm);
                put(&mut s, "p_a_estimate", r.derived.p_a_estimate);
                for (i, n) in r.notes.iter().enumerate() {
                    s.set(format!("note_{i}"), n);
                }
                s
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum_model::{optimize_j_for, StateVariant};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn records() -> Vec<ExperimentRecord> {
        default_records().unwrap()
    }

    fn find<'a>(recs: &'a [ExperimentRecord], name: &str) -> &'a ExperimentRecord {
        recs.iter().find(|r| r.name == name).unwrap()
    }

    #[test]
    fn p_plus_a_estimates() {
        let p = estimate_p_plus_a(141439, 67941, 875683790, 875518074).unwrap();
        assert_abs_diff_eq!(p, 2.391e-4, epsilon = 1e-7);
        assert_eq!(estimate_p_plus_a(0, 0, 50, 50).unwrap(), 0.0);
        assert_eq!(estimate_p_plus_a(10, 0, 10, 10).unwrap(), 1.0);
        assert!(estimate_p_plus_a(1, 1, 0, 10).is_err());
    }

    #[test]
    fn eta_eq_round_trips() {
        let state = EntangledState::psi(0.3).unwrap();
        let opt = optimize_j_for(
            &state,
            &DetectionModel::ideal(),
            &OptimizerConfig::default(),
        );
        let parts = JParts::compute(&state, &opt.settings);
        let eta = eta_equivalent_from_parts(&parts, parts.j(1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(eta, 1.0, epsilon = 1e-12);
        let eta0 = eta_equivalent_from_parts(&parts, 0.0).unwrap();
        let s = parts.singles_a + parts.singles_b;
        assert_abs_diff_eq!(eta0, s / parts.coincidence, epsilon = 1e-14);
        for j in [1e-5, 1e-3, 0.02] {
            let e = eta_equivalent_from_parts(&parts, j).unwrap();
            assert_abs_diff_eq!(parts.j(e, e), j, epsilon = 1e-14);
        }
        assert!(eta_equivalent_from_parts(&parts, 1.0)
            .unwrap_err()
            .is_infeasible());
    }

    #[test]
    fn j_corrected_limits() {
        let state = EntangledState::phi(0.26).unwrap();
        let settings = SettingsQuad::new(0.1, 0.9, -0.2, 1.3).unwrap();
        let ideal =
            crate::quantum_model::j_probability(&state, &settings, &DetectionModel::ideal());
        assert_abs_diff_eq!(
            j_corrected(&state, &settings, (1.0, 1.0)),
            ideal,
            epsilon = 1e-15
        );
        assert_eq!(j_corrected(&state, &settings, (0.0, 0.0)), 0.0);
    }

    #[test]
    fn giustina_2013_table_cells() {
        let recs = records();
        let d = derive(find(&recs, "giustina2013"), &AnalysisConfig::default()).unwrap();
        assert_abs_diff_eq!(d.eta_eq.unwrap(), 0.745, epsilon = 0.05 * 0.745);
        assert_abs_diff_eq!(d.j_corr.unwrap(), 8.53e-3, epsilon = 0.3 * 8.53e-3);
        assert_abs_diff_eq!(d.q_m.unwrap() - 0.5, 2.1e-2, epsilon = 1e-3);
    }

    #[test]
    fn verdicts_follow_published_discussion() {
        let reports = audit_all(&records(), &AnalysisConfig::default()).unwrap();
        let v: Vec<_> = reports
            .iter()
            .map(|r| (r.name.as_str(), r.detection.verdict, r.locality.verdict))
            .collect();
        use Verdict::*;
        assert_eq!(
            v,
            [
                ("christensen2013", Closed, Open),
                ("giustina2013", Closed, Open),
                ("giustina2015", Closed, Closed),
                ("hensen2015", Closed, Closed),
                ("shalm2015", Marginal, Closed),
            ]
        );
    }

    #[test]
    fn missing_fields_are_not_evaluable() {
        let r = parse_records("[x]\ninequality = EI\nj_m = 1e-4\n").unwrap();
        let rep = audit(&r[0]).unwrap();
        assert_eq!(rep.detection.verdict, Verdict::NotEvaluable);
        assert_eq!(rep.locality.verdict, Verdict::NotEvaluable);
        assert!(!rep.evaluable());
    }

    #[test]
    fn audit_is_deterministic_and_renders() {
        let recs = records();
        let a = audit_all(&recs, &AnalysisConfig::default()).unwrap();
        let b = audit_all(&recs, &AnalysisConfig::default()).unwrap();
        assert_eq!(
            render_reports_kv(&a).render(),
            render_reports_kv(&b).render()
        );
        let text = render_reports_text(&a);
        assert!(text.contains("marginal"));
        let doc = crate::kv::parse(&render_reports_kv(&a).render()).unwrap();
        assert_eq!(
            doc.section("giustina2015").unwrap().get("locality"),
            Some("closed")
        );
    }

    #[test]
    fn exceeds_bands() {
        assert_eq!(exceeds(0.719, 0.667), Verdict::Closed);
        assert_eq!(exceeds(0.715, 0.725), Verdict::Marginal);
        assert_eq!(exceeds(0.6, 0.667), Verdict::Open);
        assert_eq!(exceeds(0.0, 0.0), Verdict::Open);
    }

    #[test]
    fn swapping_efficiencies_symmetric_for_equal_singles() {
        // For a symmetric setting choice the two singles coincide.
        let state = EntangledState::new(StateVariant::PhiE, 0.4).unwrap();
        let s = SettingsQuad::new(0.3, 1.1, 0.3, 1.1).unwrap();
        let parts = JParts::compute(&state, &s);
        assert_abs_diff_eq!(parts.singles_a, parts.singles_b, epsilon = 1e-15);
        assert_abs_diff_eq!(
            j_corrected(&state, &s, (0.7, 0.8)),
            j_corrected(&state, &s, (0.8, 0.7)),
            epsilon = 1e-15
        );
    }

    proptest! {
        #[test]
        fn swap_changes_only_singles_terms(r in 0.05f64..1.0, ea in 0.5f64..1.0, eb in 0.5f64..1.0,
                                           a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let state = EntangledState::psi(r).unwrap();
            let s = SettingsQuad::new(a, a + 0.7, b, b + 0.9).unwrap();
            let p = JParts::compute(&state, &s);
            let diff = j_corrected(&state, &s, (ea, eb)) - j_corrected(&state, &s, (eb, ea));
            let expect = -(ea - eb) * (p.singles_a - p.singles_b);
            prop_assert!((diff - expect).abs() < 1e-14);
        }

        #[test]
        fn lower_measured_singles_need_more_correlation(
            j in 1e-6f64..1e-3, p_ideal in 0.05f64..0.1, frac in 0.02f64..0.99,
        ) {
            let p_meas = (p_ideal * frac).max(j * 1.01);
            prop_assume!(p_meas < p_ideal);
            prop_assert!(q_required(j, p_meas, None).unwrap() > q_required(j, p_ideal, None).unwrap());
        }
    }
}
