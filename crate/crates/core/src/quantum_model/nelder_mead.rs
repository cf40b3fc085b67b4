//! Derivative-free simplex minimizer.

pub(crate) struct NmResult {
    pub x: Vec<f64>,
    pub f: f64,
}

/// Minimize `f` from `x0` with initial simplex edge `step` per coordinate.
///
/// Stops when the spread of simplex values falls below `ftol` or after
/// `max_evals` evaluations. One restart from the best vertex guards against
/// a collapsed simplex.
pub(crate) fn minimize<F>(
    mut f: F,
    x0: &[f64],
    step: &[f64],
    ftol: f64,
    max_evals: usize,
) -> NmResult
where
    F: FnMut(&[f64]) -> f64,
{
    let mut best = run(&mut f, x0, step, ftol, max_evals);
    let restart = run(&mut f, &best.x, step, ftol, max_evals);
    if restart.f < best.f {
        best = restart;
    }
    best
}

fn run<F>(f: &mut F, x0: &[f64], step: &[f64], ftol: f64, max_evals: usize) -> NmResult
where
    F: FnMut(&[f64]) -> f64,
{
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;

    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step[i];
        let v = f(&x);
        simplex.push((x, v));
    }
    let mut evals = n + 1;

    let point = |c: &[f64], d: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(d).map(|(ci, di)| ci + t * (di - ci)).collect()
    };

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        if spread.abs() <= ftol || evals >= max_evals {
            break;
        }

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let worst = simplex[n].0.clone();
        let fw = simplex[n].1;

        let xr = point(&centroid, &worst, -ALPHA);
        let fr = f(&xr);
        evals += 1;

        if fr < simplex[0].1 {
            let xe = point(&centroid, &worst, -GAMMA);
            let fe = f(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < fw {
                let xc = point(&centroid, &xr, RHO);
                let v = f(&xc);
                (xc, v)
            } else {
                let xc = point(&centroid, &worst, RHO);
                let v = f(&xc);
                (xc, v)
            };
            evals += 1;
            if fc < fw.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for (x, v) in simplex.iter_mut().skip(1) {
                    *x = point(&x_best, x, SIGMA);
                    *v = f(x);
                }
                evals += n;
            }
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    NmResult { x, f }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_rosenbrock_minimum() {
        let res = minimize(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &[0.1, 0.1],
            1e-16,
            20_000,
        );
        assert!((res.x[0] - 1.0).abs() < 1e-4, "{:?}", res.x);
        assert!(res.f < 1e-8);
    }

    #[test]
    fn quadratic_in_four_dimensions() {
        let res = minimize(
            |x| {
                x.iter()
                    .enumerate()
                    .map(|(i, v)| (v - i as f64).powi(2))
                    .sum()
            },
            &[3.0, 3.0, 3.0, 3.0],
            &[0.5; 4],
            1e-18,
            20_000,
        );
        for (i, v) in res.x.iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-6);
        }
    }
}
