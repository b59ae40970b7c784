//! Backup safe controller synthesis, level-set calibration, certificate
//! re-verification, and the multi-rate period sweep.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::lmi::{build_level_normalization, build_recovery_lmi, build_safety_constraints, SynthVars};
use super::sdp::{self, AffineExpr, SdpProblem, SolveStatus, SolverOptions, SolverReport};
use crate::decay::{alpha_ref, DecayTarget};
use crate::error::{Error, Result};
use crate::linalg;
use crate::sysmodel::{discretize, DiscreteLoop, Ellipsoid, LinearPlant, Polytope};

pub const DECAY_TOL: f64 = 1e-7;
pub const LEVEL_TOL: f64 = 1e-9;
pub const DEFAULT_WCET: f64 = 0.005;

/// A synthesized gain with its certified quadratic Lyapunov function.
#[derive(Debug, Clone, PartialEq)]
pub struct BackupController {
    pub gain: DMatrix<f64>,
    pub qlf: DMatrix<f64>,
    pub level: f64,
    pub alpha: f64,
    pub h: f64,
    pub wcet: f64,
    /// Expansion point of the Lyapunov function (the safe-region center).
    pub center: DVector<f64>,
}

impl BackupController {
    /// `V(x) = (x - d)^T P (x - d)`.
    pub fn lyapunov(&self, x: &DVector<f64>) -> f64 {
        linalg::quad_form(&self.qlf, &(x - &self.center))
    }

    /// Safety barrier `V(x) - c`; non-positive exactly on the invariant ellipsoid.
    pub fn sbf(&self, x: &DVector<f64>) -> f64 {
        self.lyapunov(x) - self.level
    }

    pub fn utilization(&self) -> f64 {
        self.wcet / self.h
    }

    pub fn invariant_region(&self) -> Result<Ellipsoid> {
        Ellipsoid::new(self.qlf.clone(), self.level, self.center.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaSearch {
    Fixed,
    Maximize,
}

#[derive(Debug, Clone, Copy)]
pub struct BscOptions {
    pub eps: f64,
    pub alpha_search: AlphaSearch,
    pub wcet: f64,
    pub alpha_resolution: f64,
    pub solver: SolverOptions,
}

impl Default for BscOptions {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            alpha_search: AlphaSearch::Fixed,
            wcet: DEFAULT_WCET,
            alpha_resolution: 1e-3,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BscSolution {
    pub controller: BackupController,
    pub report: SolverReport,
    pub certificate: CertificateReport,
}

/// Per-axis scaling `x = T x_s` that maps the region to roughly unit extent.
fn region_scaling(sor: &Polytope) -> DVector<f64> {
    match sor.as_box() {
        Some((lo, hi)) => DVector::from_fn(sor.dim(), |i, _| {
            (hi[i] - sor.center[i]).abs().max((sor.center[i] - lo[i]).abs())
        }),
        None => DVector::from_element(sor.dim(), 1.0),
    }
}

/// Region in scaled coordinates, centered at the origin with unit-norm facets.
fn scaled_region(sor: &Polytope, t: &DVector<f64>) -> Result<Polytope> {
    let offsets = sor.center_offsets();
    let mut a = sor.a_mat.clone();
    let mut b = DVector::zeros(sor.n_facets());
    for j in 0..sor.n_facets() {
        for i in 0..sor.dim() {
            a[(j, i)] *= t[i];
        }
        let norm = a.row(j).norm();
        a.row_mut(j).scale_mut(1.0 / norm);
        b[j] = offsets[j] / norm;
    }
    Polytope::new(a, b, DVector::zeros(sor.dim()))
}

/// One fixed-decay solve in scaled coordinates; returns `(P_s, K_s, report)`.
fn solve_scaled(
    lp: &DiscreteLoop,
    region: &Polytope,
    alpha: f64,
    opts: &BscOptions,
) -> Result<(DMatrix<f64>, DMatrix<f64>, SolverReport)> {
    let n = lp.n_states();
    let mut problem = SdpProblem::new();
    let vars = SynthVars::declare(&mut problem, n, lp.n_inputs());
    problem.extend(build_recovery_lmi(lp, alpha, opts.eps, &vars)?)?;
    problem.extend(build_safety_constraints(region, &vars)?)?;
    problem.extend(build_level_normalization(region, &vars))?;
    problem.maximize_logdet(AffineExpr::var(&vars.u_bar))?;
    let sol = sdp::solve(&problem, &opts.solver)?;
    match sol.report.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::Infeasible {
                h: lp.h,
                alpha,
                detail: "recovery and safety constraints admit no strictly feasible point".into(),
            })
        }
        SolveStatus::NumericalFailure => {
            return Err(Error::Solver {
                residual: sol.report.residuals,
                detail: format!("numerical failure at h = {} s, alpha = {alpha}", lp.h),
            })
        }
    }
    let p_bar = linalg::symmetrize(&sol.value(&vars.p_bar));
    let z = sol.value(&vars.z);
    let chol = p_bar
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("solver returned a singular inverse Lyapunov matrix".into()))?;
    let p = linalg::symmetrize(&chol.inverse());
    let k = &z * &p;
    Ok((p, k, sol.report))
}

/// Synthesizes a backup controller for one sampling period.
///
/// The program maximizes `logdet(u_bar)` under the recovery LMI, the
/// ellipsoid coupling and facet cones, and the unit-level normalization.
/// The returned level is recalibrated in closed form and the certificate is
/// re-checked outside the solver before returning.
pub fn solve_bsc(lp: &DiscreteLoop, sor: &Polytope, target: &DecayTarget, opts: &BscOptions) -> Result<BscSolution> {
    if (lp.h - target.h).abs() > 1e-12 * target.h.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "loop period {} s does not match target period {} s",
            lp.h, target.h
        )));
    }
    if sor.dim() != lp.n_states() {
        return Err(Error::Dimension("region and loop dimensions differ".into()));
    }
    if !(opts.wcet > 0.0 && opts.wcet < lp.h) {
        return Err(Error::Schedulability { wcet: opts.wcet, h: lp.h });
    }
    let t = region_scaling(sor);
    let t_inv = t.map(|v| 1.0 / v);
    let scaled_loop = DiscreteLoop {
        a: DMatrix::from_diagonal(&t_inv) * &lp.a * DMatrix::from_diagonal(&t),
        b: DMatrix::from_diagonal(&t_inv) * &lp.b,
        h: lp.h,
        poc_gain: None,
        kalman_gain: None,
    };
    let region = scaled_region(sor, &t)?;

    let (mut alpha, (mut p_s, mut k_s, mut report)) =
        (target.alpha_ref, solve_scaled(&scaled_loop, &region, target.alpha_ref, opts)?);
    if opts.alpha_search == AlphaSearch::Maximize {
        let (mut lo, mut hi) = (target.alpha_ref, 1.0);
        while hi - lo > opts.alpha_resolution {
            let mid = 0.5 * (lo + hi);
            match solve_scaled(&scaled_loop, &region, mid, opts) {
                Ok(found) => {
                    lo = mid;
                    alpha = mid;
                    (p_s, k_s, report) = found;
                }
                Err(Error::Infeasible { .. }) | Err(Error::Solver { .. }) => hi = mid,
                Err(e) => return Err(e),
            }
        }
    }

    let t_inv_m = DMatrix::from_diagonal(&t_inv);
    let gain = &k_s * &t_inv_m;
    let qlf = linalg::symmetrize(&(&t_inv_m * &p_s * &t_inv_m));
    let level = calibrate_level_set(&qlf, sor)?;
    let controller = BackupController { gain, qlf, level, alpha, h: lp.h, wcet: opts.wcet, center: sor.center.clone() };
    let certificate = verify_certificate(&controller, lp, sor);
    if !certificate.passed() {
        return Err(Error::Solver {
            residual: certificate.decay_residual,
            detail: format!("independent certificate check failed at h = {} s: {certificate:?}", lp.h),
        });
    }
    Ok(BscSolution { controller, report, certificate })
}

/// Largest `c` such that `{(x-d)^T P (x-d) <= c}` lies inside the region:
/// `min_j (b_j - a_j^T d)^2 / (a_j^T P^{-1} a_j)`.
pub fn calibrate_level_set(p_mat: &DMatrix<f64>, sor: &Polytope) -> Result<f64> {
    if p_mat.shape() != (sor.dim(), sor.dim()) {
        return Err(Error::Dimension("Lyapunov matrix and region dimensions differ".into()));
    }
    let chol = linalg::symmetrize(p_mat)
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("Lyapunov matrix is not positive definite".into()))?;
    let offsets = sor.center_offsets();
    let level = (0..sor.n_facets())
        .map(|j| {
            let a = sor.a_mat.row(j).transpose();
            let support = a.dot(&chol.solve(&a));
            offsets[j] * offsets[j] / support
        })
        .fold(f64::INFINITY, f64::min);
    Ok(level)
}

/// Outcome of the solver-independent certificate re-check.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    /// `lambda_max((A-BK)^T P (A-BK) - (1-alpha) P)`.
    pub decay_residual: f64,
    pub decay_tolerance: f64,
    pub decay_ok: bool,
    pub calibrated_level: f64,
    pub containment_ok: bool,
    pub spectral_radius: f64,
    pub stable_ok: bool,
    pub schedulable_ok: bool,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.decay_ok && self.containment_ok && self.stable_ok && self.schedulable_ok
    }
}

pub fn verify_certificate(bsc: &BackupController, lp: &DiscreteLoop, sor: &Polytope) -> CertificateReport {
    let acl = lp.closed_loop(&bsc.gain);
    let m = acl.transpose() * &bsc.qlf * &acl - &bsc.qlf * (1.0 - bsc.alpha);
    let decay_residual = linalg::max_sym_eigenvalue(&m);
    let decay_tolerance = DECAY_TOL * linalg::sym_norm2(&bsc.qlf);
    let calibrated_level = calibrate_level_set(&bsc.qlf, sor).unwrap_or(f64::NAN);
    let spectral_radius = linalg::spectral_radius(&acl);
    CertificateReport {
        decay_residual,
        decay_tolerance,
        decay_ok: decay_residual <= decay_tolerance && bsc.alpha > 0.0 && bsc.alpha < 1.0,
        calibrated_level,
        containment_ok: calibrated_level >= bsc.level - LEVEL_TOL && bsc.level > 0.0,
        spectral_radius,
        stable_ok: spectral_radius < 1.0,
        schedulable_ok: bsc.wcet > 0.0 && bsc.wcet < bsc.h,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PeriodStatus {
    Feasible { alpha: f64, solve_time: f64 },
    DeadlineInfeasible,
    Infeasible { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodDiagnostic {
    pub h: f64,
    pub alpha_ref: Option<f64>,
    pub status: PeriodStatus,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Feasible controllers, ascending by period.
    pub controllers: Vec<BackupController>,
    pub diagnostics: Vec<PeriodDiagnostic>,
    /// Set when no period is feasible.
    pub advice: Option<String>,
}

/// Candidate periods `m * h0 <= h_max`.
pub fn candidate_periods(h0: f64, h_max: f64) -> Vec<f64> {
    let count = (h_max / h0 + 1e-9).floor() as usize;
    (1..=count).map(|m| m as f64 * h0).collect()
}

/// Attempts synthesis at every multiple of `h0` up to `h_max`.
pub fn sweep_periods(
    plant: &LinearPlant,
    sor: &Polytope,
    por: &Polytope,
    delta_t: f64,
    h0: f64,
    h_max: f64,
    opts: &BscOptions,
) -> Result<SweepResult> {
    if !(h0 > 0.0) || h_max < h0 {
        return Err(Error::InvalidArgument(format!("invalid period range [{h0}, {h_max}]")));
    }
    let attempts: Vec<(PeriodDiagnostic, Option<BackupController>)> = candidate_periods(h0, h_max)
        .into_par_iter()
        .map(|h| attempt_period(plant, sor, por, delta_t, h, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut controllers = Vec::new();
    let mut diagnostics = Vec::new();
    for (diag, ctrl) in attempts {
        diagnostics.push(diag);
        controllers.extend(ctrl);
    }
    controllers.sort_by(|a, b| a.h.total_cmp(&b.h));
    let advice = controllers.is_empty().then(|| {
        format!(
            "no period in [{h0}, {h_max}] s meets the {delta_t} s deadline; extend the deadline to lower the required decay"
        )
    });
    Ok(SweepResult { controllers, diagnostics, advice })
}

fn attempt_period(
    plant: &LinearPlant,
    sor: &Polytope,
    por: &Polytope,
    delta_t: f64,
    h: f64,
    opts: &BscOptions,
) -> Result<(PeriodDiagnostic, Option<BackupController>)> {
    let target = match alpha_ref(sor, por, delta_t, h) {
        Ok(t) => t,
        Err(Error::DeadlineInfeasible { .. }) => {
            return Ok((PeriodDiagnostic { h, alpha_ref: None, status: PeriodStatus::DeadlineInfeasible }, None))
        }
        Err(e) => return Err(e),
    };
    let lp = discretize(plant, h)?;
    let mut local = *opts;
    if local.wcet >= h {
        return Ok((
            PeriodDiagnostic {
                h,
                alpha_ref: Some(target.alpha_ref),
                status: PeriodStatus::Infeasible { reason: format!("wcet {} s does not fit period", local.wcet) },
            },
            None,
        ));
    }
    local.wcet = opts.wcet;
    match solve_bsc(&lp, sor, &target, &local) {
        Ok(sol) => Ok((
            PeriodDiagnostic {
                h,
                alpha_ref: Some(target.alpha_ref),
                status: PeriodStatus::Feasible { alpha: sol.controller.alpha, solve_time: sol.report.solve_time },
            },
            Some(sol.controller),
        )),
        Err(e @ (Error::Infeasible { .. } | Error::Solver { .. } | Error::Numeric(_))) => Ok((
            PeriodDiagnostic {
                h,
                alpha_ref: Some(target.alpha_ref),
                status: PeriodStatus::Infeasible { reason: e.to_string() },
            },
            None,
        )),
        Err(e) => Err(e),
    }
}
