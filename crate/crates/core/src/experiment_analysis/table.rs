use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive, AnalysisConfig, ExperimentRecord, Inequality};
use crate::error::Result;
use crate::kv::{Document, Section};
use crate::report::{sig6, TextTable};

const DEFAULT_Q_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Tolerance {
    Abs(f64),
    Rel(f64),
    /// The computed value must land in `[lo, hi]`.
    Band(f64, f64),
}

impl Tolerance {
    pub fn accepts(self, reported: f64, computed: f64) -> bool {
        match self {
            Tolerance::Abs(t) => (computed - reported).abs() <= t,
            Tolerance::Rel(t) => (computed - reported).abs() <= t * reported.abs(),
            Tolerance::Band(lo, hi) => (lo..=hi).contains(&computed),
        }
    }
}

impl std::fmt::Display for Tolerance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tolerance::Abs(t) => write!(f, "±{}", sig6(*t)),
            Tolerance::Rel(t) => write!(f, "±{}%", sig6(t * 100.0)),
            Tolerance::Band(lo, hi) => write!(f, "[{}, {}]", sig6(*lo), sig6(*hi)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCheck {
    pub record: String,
    pub cell: String,
    pub reported: f64,
    pub computed: f64,
    pub tolerance: Tolerance,
    pub pass: bool,
}

fn push(
    out: &mut Vec<TableCheck>,
    rec: &ExperimentRecord,
    cell: &str,
    reported: Option<f64>,
    computed: Option<f64>,
    tolerance: Tolerance,
) {
    if let (Some(reported), Some(computed)) = (reported, computed) {
        out.push(TableCheck {
            record: rec.name.clone(),
            cell: cell.to_string(),
            reported,
            computed,
            tolerance,
            pass: tolerance.accepts(reported, computed),
        });
    }
}

fn checks_for(rec: &ExperimentRecord, cfg: &AnalysisConfig) -> Result<Vec<TableCheck>> {
    let d = derive(rec, cfg)?;
    let mut out = Vec::new();
    let q_tol = |field: &str| Tolerance::Abs(rec.tolerance(field).unwrap_or(DEFAULT_Q_TOL));
    match rec.inequality {
        Inequality::Ei => {
            push(
                &mut out,
                rec,
                "j_qm",
                rec.j_qm,
                d.j_qm,
                Tolerance::Rel(0.05),
            );
            push(
                &mut out,
                rec,
                "j_corr",
                rec.j_corr_reference(),
                d.j_corr,
                Tolerance::Rel(0.30),
            );
            push(
                &mut out,
                rec,
                "eta_eq",
                rec.eta_eq,
                d.eta_eq,
                Tolerance::Rel(0.05),
            );
            let thr_tol = if rec.background_window.is_some() {
                0.02
            } else {
                0.005
            };
            push(
                &mut out,
                rec,
                "eta_thr",
                rec.eta_thr,
                d.eta_thr,
                Tolerance::Abs(thr_tol),
            );
            let ratio = d.j_corr.zip(rec.j_m).map(|(c, m)| c / m);
            push(
                &mut out,
                rec,
                "j_corr_ratio",
                rec.j_corr_ratio,
                ratio,
                Tolerance::Rel(0.30),
            );
            push(
                &mut out,
                rec,
                "q_qm",
                rec.q_qm,
                d.q_qm,
                Tolerance::Band(0.770, 0.790),
            );
            push(&mut out, rec, "q_m", rec.q_m, d.q_m, q_tol("q_m"));
            push(
                &mut out,
                rec,
                "q_m_ideal",
                rec.q_m_ideal,
                d.q_m_ideal,
                q_tol("q_m_ideal"),
            );
            if d.p_a_estimate.is_some() {
                push(
                    &mut out,
                    rec,
                    "p_a_measured",
                    rec.p_a_measured,
                    d.p_a_estimate,
                    Tolerance::Abs(1e-6),
                );
            }
        }
        Inequality::Chsh => {
            push(
                &mut out,
                rec,
                "eta_thr",
                rec.eta_thr,
                d.eta_thr,
                Tolerance::Abs(1e-3),
            );
            let ratio = rec.s_corr.zip(rec.s_m).map(|(c, m)| c / m);
            push(
                &mut out,
                rec,
                "j_corr_ratio",
                rec.j_corr_ratio,
                ratio,
                Tolerance::Abs(5e-3),
            );
            push(&mut out, rec, "q_qm", rec.q_qm, d.q_qm, q_tol("q_qm"));
            push(&mut out, rec, "q_m", rec.q_m, d.q_m, q_tol("q_m"));
        }
    }
    Ok(out)
}

/// Re-derives every computable cell of each record, in record order.
pub fn reproduce_table(
    records: &[ExperimentRecord],
    cfg: &AnalysisConfig,
) -> Result<Vec<TableCheck>> {
    let cfg = AnalysisConfig {
        compute_baseline_threshold: true,
        ..*cfg
    };
    let per: Vec<Vec<TableCheck>> = records
        .par_iter()
        .map(|r| checks_for(r, &cfg))
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

pub fn render_table_text(checks: &[TableCheck]) -> String {
    let mut t = TextTable::new([
        "record",
        "cell",
        "reported",
        "computed",
        "delta",
        "tolerance",
        "",
    ]);
    for c in checks {
        t.push([
            c.record.clone(),
            c.cell.clone(),
            sig6(c.reported),
            sig6(c.computed),
            sig6(c.computed - c.reported),
            c.tolerance.to_string(),
            if c.pass { "PASS" } else { "FAIL" }.to_string(),
        ]);
    }
    t.render()
}

pub fn render_table_kv(checks: &[TableCheck]) -> Document {
    let mut doc = Document::default();
    for c in checks {
        if doc
            .sections
            .last()
            .map(|s| s.name != c.record)
            .unwrap_or(true)
        {
            doc.sections.push(Section::new(c.record.clone()));
        }
        let s = doc.sections.last_mut().expect("pushed above");
        s.set(format!("{}_reported", c.cell), format!("{:e}", c.reported));
        s.set(format!("{}_computed", c.cell), format!("{:e}", c.computed));
        s.set(format!("{}_tolerance", c.cell), c.tolerance);
        s.set(format!("{}_pass", c.cell), c.pass);
    }
    doc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment_analysis::default_records;

    #[test]
    fn tolerance_kinds() {
        assert!(Tolerance::Abs(0.1).accepts(1.0, 1.09));
        assert!(!Tolerance::Abs(0.1).accepts(1.0, 1.11));
        assert!(Tolerance::Rel(0.3).accepts(10.0, 12.9));
        assert!(!Tolerance::Rel(0.3).accepts(10.0, 13.1));
        assert!(Tolerance::Band(0.77, 0.79).accepts(0.5, 0.78));
        assert!(!Tolerance::Band(0.77, 0.79).accepts(0.78, 0.8));
    }

    #[test]
    fn hensen_cells_pass() {
        let recs = default_records().unwrap();
        let checks = checks_for(&recs[4], &AnalysisConfig::default()).unwrap();
        assert_eq!(checks.len(), 4);
        assert!(checks.iter().all(|c| c.pass), "{checks:?}");
    }
}
