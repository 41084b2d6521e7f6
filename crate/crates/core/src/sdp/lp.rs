//! Dense linear programming, `min cᵀx  s.t.  Ax = b,  x ≥ 0`.
//!
//! Mehrotra predictor-corrector from an infeasible start. Intended for
//! problems known to be feasible and bounded (phase-1 formulations); it
//! reports `NumericalFailure` rather than certifying infeasibility.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct LpProblem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub s: DVector<f64>,
    pub objective: f64,
    pub status: LpStatus,
    pub iterations: usize,
}

const MAX_ITER: usize = 200;
const LP_TOL: f64 = 1e-10;
const STEP: f64 = 0.99;

fn step_to_boundary(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

/// Pseudo-inverse solve for the normal equations, tolerant of dependent rows.
fn solve_normal(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        let x = ch.solve(rhs);
        if x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
    }
    let e = m.clone().try_symmetric_eigen(1e-15, 10_000)?;
    let cutoff = 1e-14 * e.eigenvalues.amax() * m.nrows() as f64;
    let inv = e
        .eigenvalues
        .map(|l| if l > cutoff { 1.0 / l } else { 0.0 });
    let t = e.eigenvectors.transpose() * rhs;
    Some(&e.eigenvectors * t.component_mul(&inv))
}

pub fn solve_lp(p: &LpProblem) -> LpSolution {
    let (rows, cols) = p.a.shape();
    let mut x = DVector::from_element(cols, 1.0);
    let mut s = DVector::from_element(cols, 1.0);
    let mut y = DVector::zeros(rows);
    let bnorm = 1.0 + p.b.amax();
    let cnorm = 1.0 + p.c.amax();
    let mut status = LpStatus::NumericalFailure;
    let mut iterations = 0;

    loop {
        let rp = &p.b - &p.a * &x;
        let rd = &p.c - p.a.transpose() * &y - &s;
        let pobj = p.c.dot(&x);
        let dobj = p.b.dot(&y);
        if rp.amax() <= LP_TOL * bnorm
            && rd.amax() <= LP_TOL * cnorm
            && (pobj - dobj).abs() <= LP_TOL * (1.0 + pobj.abs())
        {
            status = LpStatus::Optimal;
            break;
        }
        if iterations >= MAX_ITER {
            break;
        }
        let mu = x.dot(&s) / cols as f64;
        let d = x.component_div(&s);
        let ad = DMatrix::from_fn(rows, cols, |i, j| p.a[(i, j)] * d[j]);
        let m = &ad * p.a.transpose();

        let dir = |rc: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
            let rhs = &rp - &p.a * (rc.component_div(&s) - d.component_mul(&rd));
            let dy = solve_normal(&m, &rhs)?;
            let ds = &rd - p.a.transpose() * &dy;
            let dx = rc.component_div(&s) - d.component_mul(&ds);
            Some((dx, dy, ds))
        };

        let rc_aff = -x.component_mul(&s);
        let Some((dx_a, _, ds_a)) = dir(&rc_aff) else {
            break;
        };
        let ap = step_to_boundary(&x, &dx_a).min(1.0);
        let ad_ = step_to_boundary(&s, &ds_a).min(1.0);
        let mu_aff = (&x + &dx_a * ap).dot(&(&s + &ds_a * ad_)) / cols as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

        let rc = rc_aff.add_scalar(sigma * mu) - dx_a.component_mul(&ds_a);
        let Some((dx, dy, ds)) = dir(&rc) else {
            break;
        };
        let ap = (STEP * step_to_boundary(&x, &dx)).min(1.0);
        let ad_ = (STEP * step_to_boundary(&s, &ds)).min(1.0);
        if !(ap > 1e-14 && ad_ > 1e-14) {
            break;
        }
        x += &dx * ap;
        y += &dy * ad_;
        s += &ds * ad_;
        iterations += 1;
    }

    LpSolution {
        objective: p.c.dot(&x),
        x,
        y,
        s,
        status,
        iterations,
    }
}
