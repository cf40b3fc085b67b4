use super::{optimize_j, DetectionModel, OptimizerConfig, RChoice, StateVariant};
use crate::error::{Error, Result};

/// `J` above this counts as a violation when locating thresholds.
pub const VIOLATION_EPS: f64 = 1e-12;

const BISECTION_WIDTH: f64 = 1e-4;

/// Convert per-window background probabilities into per-pair ones.
///
/// `J` is normalized per emitted pair, while backgrounds are usually quoted
/// per detection window. With `pair_prob` pairs per window, one pair's trial
/// carries `beta_window / pair_prob` background counts.
pub fn per_pair_background(beta_window: f64, pair_prob: f64) -> Result<f64> {
    if !(pair_prob > 0.0 && pair_prob <= 1.0) {
        return Err(Error::invalid(
            "pair_prob",
            format!("must lie in (0,1], got {pair_prob}"),
        ));
    }
    let beta = beta_window / pair_prob;
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid(
            "beta",
            format!("per-pair background {beta} outside [0,1)"),
        ));
    }
    Ok(beta)
}

/// Smallest symmetric efficiency at which some `r` and settings give `J > 0`.
pub fn eta_threshold(beta_a: f64, beta_b: f64) -> Result<f64> {
    eta_threshold_with(
        beta_a,
        beta_b,
        StateVariant::PsiE,
        &OptimizerConfig::default(),
    )
}

pub fn eta_threshold_with(
    beta_a: f64,
    beta_b: f64,
    variant: StateVariant,
    cfg: &OptimizerConfig,
) -> Result<f64> {
    let violates = |eta: f64| -> Result<bool> {
        let det = DetectionModel::new(eta, eta, beta_a, beta_b)?;
        Ok(optimize_j(variant, RChoice::Free, &det, cfg)?.value > VIOLATION_EPS)
    };
    if !violates(1.0)? {
        return Err(Error::NoRoot(format!(
            "no efficiency up to 1 violates with backgrounds ({beta_a}, {beta_b})"
        )));
    }
    // sup J > 0 is monotone in η: settings that violate at η keep violating above it.
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > BISECTION_WIDTH {
        let mid = 0.5 * (lo + hi);
        if violates(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_pair_conversion() {
        assert!((per_pair_background(8.9e-7, 5e-4).unwrap() - 1.78e-3).abs() < 1e-15);
        assert!(per_pair_background(1e-3, 0.0).is_err());
        assert!(per_pair_background(0.5, 0.1).is_err());
    }

    #[test]
    fn threshold_is_non_decreasing_in_background() {
        let cfg = OptimizerConfig {
            angle_points: 32,
            r_points: 16,
            ..Default::default()
        };
        let t0 = eta_threshold_with(0.0, 0.0, StateVariant::PsiE, &cfg).unwrap();
        let t1 = eta_threshold_with(1e-4, 1e-4, StateVariant::PsiE, &cfg).unwrap();
        let t2 = eta_threshold_with(1e-3, 1e-4, StateVariant::PsiE, &cfg).unwrap();
        let t3 = eta_threshold_with(1e-3, 1e-3, StateVariant::PsiE, &cfg).unwrap();
        assert!((t0 - 2.0 / 3.0).abs() < 0.005, "{t0}");
        assert!(
            t0 <= t1 + BISECTION_WIDTH && t1 <= t2 + BISECTION_WIDTH && t2 <= t3 + BISECTION_WIDTH
        );
        assert!(t3 > t0 + 0.01, "{t0} {t3}");
    }
}
