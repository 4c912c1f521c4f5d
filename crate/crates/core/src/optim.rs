//! Derivative-free minimization and Newton refinement on score equations.

use crate::error::{Error, Result};
use crate::linalg::lu_solve;
use crate::qcore::finite_difference_jacobian;

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Nelder–Mead simplex search with standard coefficients (1, 2, ½, ½).
///
/// Non-finite objective values are treated as `+∞`. Stops when the spread of
/// simplex values falls below `ftol · (1 + |f_best|)`.
pub fn nelder_mead<F>(f: F, x0: &[f64], step: &[f64], ftol: f64, max_iter: usize) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let d = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() { v } else { f64::INFINITY }
    };
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    simplex.push(x0.to_vec());
    for j in 0..d {
        let mut v = x0.to_vec();
        v[j] += step[j];
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        if (vals[d] - vals[0]).abs() <= ftol * (1.0 + vals[0].abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|p| p[j]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[d]).map(|(&c, &w)| c + t * (w - c)).collect()
        };
        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = eval(&xe);
            if fe < fr {
                simplex[d] = xe;
                vals[d] = fe;
            } else {
                simplex[d] = xr;
                vals[d] = fr;
            }
        } else if fr < vals[d - 1] {
            simplex[d] = xr;
            vals[d] = fr;
        } else {
            let (xc, fc) = if fr < vals[d] {
                let x = along(-0.5);
                let v = eval(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = eval(&x);
                (x, v)
            };
            if fc < vals[d].min(fr) {
                simplex[d] = xc;
                vals[d] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=d {
                    for j in 0..d {
                        simplex[i][j] = best[j] + 0.5 * (simplex[i][j] - best[j]);
                    }
                    vals[i] = eval(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=d).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    Minimum { x: simplex[best].clone(), value: vals[best], iterations }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Root {
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Damped Newton iterations on `g(x) = 0`, Jacobian by central differences.
pub fn newton_root<G>(g: G, x0: &[f64], tol: f64, max_iter: usize) -> Result<Root>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut x = x0.to_vec();
    let mut r = g(&x)?;
    let mut rn = norm(&r);
    for it in 0..max_iter {
        if rn < tol {
            return Ok(Root { x, residual_norm: rn, iterations: it });
        }
        let jac = finite_difference_jacobian(&g, &x, 1e-6)?;
        let step = lu_solve(&jac, &r)?;
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..50 {
            let cand: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a - t * s).collect();
            if let Ok(rc) = g(&cand) {
                let rcn = norm(&rc);
                if rcn.is_finite() && rcn < rn {
                    x = cand;
                    r = rc;
                    rn = rcn;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if rn < tol {
        Ok(Root { x, residual_norm: rn, iterations: max_iter })
    } else {
        Err(Error::OptimFailure(format!("score norm {rn:e} above tolerance {tol:e}")))
    }
}
