use serde::{Deserialize, Serialize};

use super::{Marginals, MuTable};
use crate::quantum_model::SettingPair;

const PIVOT_TOL: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-10;

/// Weights on the sixteen pass/fail atoms of `(a, a', b, b')`.
/// Atom `k` passes `a` if bit 0 is set, `a'` bit 1, `b` bit 2, `b'` bit 3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomMeasure {
    pub weights: [f64; 16],
    /// Largest constraint residual after solving.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    /// One entry per μ; `None` when no non-negative measure exists.
    pub per_mu: [Option<AtomMeasure>; 4],
}

impl Feasibility {
    pub fn all_feasible(&self) -> bool {
        self.per_mu.iter().all(Option::is_some)
    }
}

fn constraint_rows(row: &[f64; 4], m: &Marginals) -> (Vec<[f64; 16]>, Vec<f64>) {
    let bit = |k: usize, b: usize| (k >> b) & 1 == 1;
    let mut a = Vec::with_capacity(9);
    let mut rhs = Vec::with_capacity(9);
    a.push([1.0; 16]);
    rhs.push(1.0);
    for (b, p) in [m.p_a, m.p_a_prime, m.p_b, m.p_b_prime]
        .into_iter()
        .enumerate()
    {
        a.push(std::array::from_fn(|k| bit(k, b) as u8 as f64));
        rhs.push(p);
    }
    for pair in SettingPair::ALL {
        let ba = pair.a_primed() as usize;
        let bb = 2 + pair.b_primed() as usize;
        a.push(std::array::from_fn(|k| {
            (bit(k, ba) && bit(k, bb)) as u8 as f64
        }));
        rhs.push(row[pair.index()]);
    }
    (a, rhs)
}

/// Phase-one simplex with Bland's rule: a non-negative `x` with `A x = b`.
fn phase_one<const N: usize>(a: &[[f64; N]], b: &[f64]) -> Option<[f64; N]> {
    let m = a.len();
    let cols = N + m;
    // Tableau rows: [A | I | b], sign-normalized so b >= 0.
    let mut t: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
            let mut r = vec![0.0; cols + 1];
            for j in 0..N {
                r[j] = s * a[i][j];
            }
            r[N + i] = 1.0;
            r[cols] = s * b[i];
            r
        })
        .collect();
    let mut basis: Vec<usize> = (N..cols).collect();
    // Reduced costs of minimizing the artificial sum.
    let mut cost = vec![0.0; cols + 1];
    for r in &t {
        for j in 0..N {
            cost[j] -= r[j];
        }
        cost[cols] -= r[cols];
    }
    while let Some(enter) = (0..cols).find(|&j| cost[j] < -PIVOT_TOL) {
        let mut leave: Option<usize> = None;
        for i in 0..m {
            if t[i][enter] > PIVOT_TOL {
                let ratio = t[i][cols] / t[i][enter];
                leave = match leave {
                    None => Some(i),
                    Some(l) => {
                        let best = t[l][cols] / t[l][enter];
                        if ratio < best - PIVOT_TOL
                            || ((ratio - best).abs() <= PIVOT_TOL && basis[i] < basis[l])
                        {
                            Some(i)
                        } else {
                            Some(l)
                        }
                    }
                };
            }
        }
        let l = leave?;
        let p = t[l][enter];
        for v in t[l].iter_mut() {
            *v /= p;
        }
        let pivot_row = t[l].clone();
        for (i, r) in t.iter_mut().enumerate() {
            if i != l && r[enter] != 0.0 {
                let f = r[enter];
                for (v, pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        let f = cost[enter];
        for (v, pv) in cost.iter_mut().zip(&pivot_row) {
            *v -= f * pv;
        }
        basis[l] = enter;
    }
    if -cost[cols] > FEAS_TOL {
        return None;
    }
    let mut x = [0.0; N];
    for (i, &j) in basis.iter().enumerate() {
        if j < N {
            x[j] = t[i][cols].max(0.0);
        }
    }
    Some(x)
}

fn solve_row(row: &[f64; 4], m: &Marginals) -> Option<AtomMeasure> {
    let (a, b) = constraint_rows(row, m);
    let x = phase_one(&a, &b)?;
    let residual = a
        .iter()
        .zip(&b)
        .map(|(r, bi)| (r.iter().zip(&x).map(|(u, v)| u * v).sum::<f64>() - bi).abs())
        .fold(0.0, f64::max);
    (residual <= 1e-9).then_some(AtomMeasure {
        weights: x,
        residual,
    })
}

/// Whether each μ row can be realized by deterministic pass/fail regions with
/// the given singles.
pub fn lhv_feasibility(tables: &MuTable, marginals: &Marginals) -> Feasibility {
    Feasibility {
        per_mu: std::array::from_fn(|mu| solve_row(&tables.rows[mu], marginals)),
    }
}
