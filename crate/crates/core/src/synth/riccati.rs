//! Discrete Riccati fixed-point iterations for the primary LQR controller and
//! the steady-state Kalman predictor gain.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::sysmodel::DiscreteLoop;

const MAX_ITERATIONS: usize = 10_000;
const TOLERANCE: f64 = 1e-10;

fn converged(prev: &DMatrix<f64>, next: &DMatrix<f64>) -> bool {
    (next - prev).amax() <= TOLERANCE * next.amax().max(1.0)
}

fn solve_spd(m: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::symmetrize(m)
        .cholesky()
        .map(|c| c.solve(rhs))
        .ok_or_else(|| Error::Numeric("Riccati gain system is not positive definite".into()))
}

/// Discrete LQR gain `K` (control `u = -K x`).
pub fn synth_poc(lp: &DiscreteLoop, q_cost: &DMatrix<f64>, r_cost: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (a, b) = (&lp.a, &lp.b);
    let n = lp.n_states();
    if q_cost.shape() != (n, n) || r_cost.shape() != (lp.n_inputs(), lp.n_inputs()) {
        return Err(Error::Dimension("LQR weights do not match the loop".into()));
    }
    let mut p = q_cost.clone();
    for _ in 0..MAX_ITERATIONS {
        let btp = b.transpose() * &p;
        let gain = solve_spd(&(r_cost + &btp * b), &(&btp * a))?;
        let next = linalg::symmetrize(&(q_cost + a.transpose() * &p * a - a.transpose() * &p * b * &gain));
        if !linalg::all_finite(&next) {
            return Err(Error::Numeric("Riccati iterate diverged".into()));
        }
        let done = converged(&p, &next);
        p = next;
        if done {
            let btp = b.transpose() * &p;
            let k = solve_spd(&(r_cost + &btp * b), &(&btp * a))?;
            let rho = linalg::spectral_radius(&lp.closed_loop(&k));
            if rho >= 1.0 {
                return Err(Error::Numeric(format!("LQR closed loop not Schur stable (radius {rho})")));
            }
            return Ok(k);
        }
    }
    Err(Error::NonConvergence { iterations: MAX_ITERATIONS })
}

/// Steady-state predictor gain `L` for `xhat+ = A xhat + B u + L (y - C xhat)`.
pub fn synth_kalman(
    lp: &DiscreteLoop,
    c_out: &DMatrix<f64>,
    q_w: &DMatrix<f64>,
    r_v: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let a = &lp.a;
    let n = lp.n_states();
    let m = c_out.nrows();
    if c_out.ncols() != n || q_w.shape() != (n, n) || r_v.shape() != (m, m) {
        return Err(Error::Dimension("observer data do not match the loop".into()));
    }
    let gain_of = |p: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let s = c_out * p * c_out.transpose() + r_v;
        // L = A P C^T S^{-1}  <=>  S L^T = C P A^T.
        Ok(solve_spd(&s, &(c_out * p * a.transpose()))?.transpose())
    };
    let mut p = q_w.clone();
    for _ in 0..MAX_ITERATIONS {
        let l = gain_of(&p)?;
        let next = linalg::symmetrize(&(a * &p * a.transpose() + q_w - &l * c_out * &p * a.transpose()));
        if !linalg::all_finite(&next) {
            return Err(Error::Numeric("Riccati iterate diverged".into()));
        }
        let done = converged(&p, &next);
        p = next;
        if done {
            let l = gain_of(&p)?;
            let rho = linalg::spectral_radius(&(a - &l * c_out));
            if rho >= 1.0 {
                return Err(Error::Numeric(format!("observer error dynamics not Schur stable (radius {rho})")));
            }
            return Ok(l);
        }
    }
    Err(Error::NonConvergence { iterations: MAX_ITERATIONS })
}
