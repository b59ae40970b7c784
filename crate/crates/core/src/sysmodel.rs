//! Plant models, their sampled-data discretizations, and the polytope and
//! ellipsoid geometry used by synthesis and the runtime monitor.
//!
//! States are expressed as deviations from the linearization point unless a
//! polytope carries a nonzero center.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Absolute tolerance for membership tests.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// Continuous-time linearized plant `dx/dt = phi x + gamma u + w`, `y = c x + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant {
    pub phi: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub c_out: DMatrix<f64>,
    pub q_w: DMatrix<f64>,
    pub r_v: DMatrix<f64>,
    pub x_ref: DVector<f64>,
    pub u_ref: DVector<f64>,
}

impl LinearPlant {
    pub fn new(
        phi: DMatrix<f64>,
        gamma: DMatrix<f64>,
        c_out: DMatrix<f64>,
        q_w: DMatrix<f64>,
        r_v: DMatrix<f64>,
        x_ref: DVector<f64>,
        u_ref: DVector<f64>,
    ) -> Result<Self> {
        let n = phi.nrows();
        if !phi.is_square() {
            return Err(Error::Dimension(format!(
                "phi must be square, got {}x{}",
                phi.nrows(),
                phi.ncols()
            )));
        }
        let p = gamma.ncols();
        let m = c_out.nrows();
        if gamma.nrows() != n {
            return Err(Error::Dimension(format!("gamma has {} rows, expected {n}", gamma.nrows())));
        }
        if c_out.ncols() != n {
            return Err(Error::Dimension(format!("c has {} columns, expected {n}", c_out.ncols())));
        }
        if q_w.shape() != (n, n) {
            return Err(Error::Dimension(format!("q_w must be {n}x{n}")));
        }
        if r_v.shape() != (m, m) {
            return Err(Error::Dimension(format!("r_v must be {m}x{m}")));
        }
        if x_ref.len() != n || u_ref.len() != p {
            return Err(Error::Dimension("equilibrium vectors do not match plant".into()));
        }
        for (name, cov) in [("q_w", &q_w), ("r_v", &r_v)] {
            if (cov - cov.transpose()).amax() > 1e-9 {
                return Err(Error::InvalidArgument(format!("{name} is not symmetric")));
            }
            if cov.nrows() > 0 && linalg::min_sym_eigenvalue(cov) < -1e-12 {
                return Err(Error::InvalidArgument(format!("{name} is not positive semidefinite")));
            }
        }
        Ok(Self { phi, gamma, c_out, q_w, r_v, x_ref, u_ref })
    }

    /// Full-state-output plant with zero equilibrium and isotropic noise.
    pub fn simple(phi: DMatrix<f64>, gamma: DMatrix<f64>, noise: f64) -> Result<Self> {
        let n = phi.nrows();
        let p = gamma.ncols();
        Self::new(
            phi,
            gamma,
            DMatrix::identity(n, n),
            DMatrix::identity(n, n) * noise,
            DMatrix::identity(n, n) * noise,
            DVector::zeros(n),
            DVector::zeros(p),
        )
    }

    pub fn n_states(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.gamma.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c_out.nrows()
    }
}

/// Plant sampled with period `h` under zero-order hold.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLoop {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub h: f64,
    pub poc_gain: Option<DMatrix<f64>>,
    pub kalman_gain: Option<DMatrix<f64>>,
}

impl DiscreteLoop {
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    /// Closed-loop matrix `a - b k`.
    pub fn closed_loop(&self, gain: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a - &self.b * gain
    }

    /// Attach a primary-controller gain; the closed loop must be Schur stable.
    pub fn with_poc_gain(mut self, gain: DMatrix<f64>) -> Result<Self> {
        if gain.shape() != (self.n_inputs(), self.n_states()) {
            return Err(Error::Dimension("primary gain shape".into()));
        }
        let rho = linalg::spectral_radius(&self.closed_loop(&gain));
        if rho >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "primary gain is not stabilizing (spectral radius {rho})"
            )));
        }
        self.poc_gain = Some(gain);
        Ok(self)
    }

    pub fn with_kalman_gain(mut self, gain: DMatrix<f64>) -> Result<Self> {
        if gain.nrows() != self.n_states() {
            return Err(Error::Dimension("observer gain shape".into()));
        }
        self.kalman_gain = Some(gain);
        Ok(self)
    }
}

/// Zero-order-hold discretization through the exponential of the augmented
/// block `[[phi, gamma], [0, 0]] * h`.
pub fn discretize(plant: &LinearPlant, h: f64) -> Result<DiscreteLoop> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("sampling period must be positive, got {h}")));
    }
    let n = plant.n_states();
    let p = plant.n_inputs();
    let mut aug = DMatrix::<f64>::zeros(n + p, n + p);
    aug.view_mut((0, 0), (n, n)).copy_from(&(&plant.phi * h));
    aug.view_mut((0, n), (n, p)).copy_from(&(&plant.gamma * h));
    let e = aug.exp();
    if !linalg::all_finite(&e) {
        return Err(Error::Numeric(format!("matrix exponential overflowed at h = {h}")));
    }
    Ok(DiscreteLoop {
        a: e.view((0, 0), (n, n)).into_owned(),
        b: e.view((0, n), (n, p)).into_owned(),
        h,
        poc_gain: None,
        kalman_gain: None,
    })
}

/// H-representation `a_mat x <= b_vec` with a distinguished interior point.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    pub a_mat: DMatrix<f64>,
    pub b_vec: DVector<f64>,
    pub center: DVector<f64>,
}

impl Polytope {
    pub fn new(a_mat: DMatrix<f64>, b_vec: DVector<f64>, center: DVector<f64>) -> Result<Self> {
        if a_mat.nrows() != b_vec.len() || a_mat.ncols() != center.len() {
            return Err(Error::Dimension("polytope rows, offsets and center disagree".into()));
        }
        if a_mat.nrows() == 0 {
            return Err(Error::Geometry("polytope without facets is unbounded".into()));
        }
        for j in 0..a_mat.nrows() {
            if a_mat.row(j).norm() == 0.0 {
                return Err(Error::Geometry(format!("facet {j} has a zero normal")));
            }
        }
        let poly = Self { a_mat, b_vec, center };
        let slack = poly.min_slack(&poly.center);
        if !(slack > 0.0) {
            return Err(Error::Geometry(format!(
                "center is not strictly interior (min slack {slack:e})"
            )));
        }
        Ok(poly)
    }

    /// Axis-aligned box `lo <= x <= hi`, centered at `center`.
    pub fn from_box(lo: &[f64], hi: &[f64], center: Option<&[f64]>) -> Result<Self> {
        let n = lo.len();
        if hi.len() != n {
            return Err(Error::Dimension("box bounds differ in length".into()));
        }
        if lo.iter().zip(hi).any(|(l, h)| !(l < h)) {
            return Err(Error::Geometry("box has an empty side (lo >= hi)".into()));
        }
        let c = match center {
            Some(c) => DVector::from_column_slice(c),
            None => DVector::from_fn(n, |i, _| 0.5 * (lo[i] + hi[i])),
        };
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for i in 0..n {
            a[(2 * i, i)] = 1.0;
            b[2 * i] = hi[i];
            a[(2 * i + 1, i)] = -1.0;
            b[2 * i + 1] = -lo[i];
        }
        Self::new(a, b, c)
    }

    /// Symmetric box `[-w_i, w_i]` around the origin.
    pub fn symmetric_box(half_widths: &[f64]) -> Result<Self> {
        let lo: Vec<f64> = half_widths.iter().map(|w| -w).collect();
        Self::from_box(&lo, half_widths, Some(&vec![0.0; half_widths.len()]))
    }

    pub fn dim(&self) -> usize {
        self.a_mat.ncols()
    }

    pub fn n_facets(&self) -> usize {
        self.a_mat.nrows()
    }

    /// `b_j - a_j^T x` per facet.
    pub fn slacks(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.b_vec - &self.a_mat * x
    }

    pub fn min_slack(&self, x: &DVector<f64>) -> f64 {
        self.slacks(x).min()
    }

    /// Slack of each facet measured from the center (`b_j - a_j^T d`).
    pub fn center_offsets(&self) -> DVector<f64> {
        self.slacks(&self.center)
    }

    /// Box bounds if every facet is axis-aligned and each axis is closed on both sides.
    pub fn as_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.dim();
        let mut lo = vec![f64::NEG_INFINITY; n];
        let mut hi = vec![f64::INFINITY; n];
        for j in 0..self.n_facets() {
            let row = self.a_mat.row(j);
            let nz: Vec<usize> = (0..n).filter(|&i| row[i] != 0.0).collect();
            if nz.len() != 1 {
                return None;
            }
            let i = nz[0];
            let bound = self.b_vec[j] / row[i];
            if row[i] > 0.0 {
                hi[i] = hi[i].min(bound);
            } else {
                lo[i] = lo[i].max(bound);
            }
        }
        if lo.iter().chain(hi.iter()).any(|v| !v.is_finite()) {
            return None;
        }
        Some((lo, hi))
    }

    /// Corners of a box polytope.
    pub fn vertices(&self) -> Result<Vec<DVector<f64>>> {
        let (lo, hi) = self.box_bounds()?;
        let n = lo.len();
        Ok((0..(1usize << n))
            .map(|mask| {
                DVector::from_fn(n, |i, _| if mask >> i & 1 == 1 { hi[i] } else { lo[i] })
            })
            .collect())
    }

    fn box_bounds(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        if let Some(bounds) = self.as_box() {
            return Ok(bounds);
        }
        let n = self.dim();
        let axis_aligned = (0..self.n_facets())
            .all(|j| (0..n).filter(|&i| self.a_mat[(j, i)] != 0.0).count() == 1);
        if axis_aligned {
            Err(Error::Geometry("polytope is unbounded along at least one axis".into()))
        } else {
            Err(Error::Geometry(
                "vertex enumeration is only supported for axis-aligned boxes".into(),
            ))
        }
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.min_slack(x) >= -MEMBERSHIP_TOL
    }

    pub fn strictly_contains(&self, x: &DVector<f64>) -> bool {
        self.min_slack(x) > 0.0
    }

    /// Whether every vertex of `inner` satisfies this polytope's inequalities strictly.
    pub fn strictly_contains_polytope(&self, inner: &Polytope) -> Result<bool> {
        Ok(inner.vertices()?.iter().all(|v| self.strictly_contains(v)))
    }
}

pub fn contains(poly: &Polytope, x: &DVector<f64>) -> bool {
    poly.contains(x)
}

/// `(min_norm, max_norm)`: minimum facet distance from the center and maximum
/// vertex distance from the center.
pub fn boundary_norm_extrema(poly: &Polytope) -> Result<(f64, f64)> {
    let vertices = poly.vertices()?;
    let max_norm = vertices
        .iter()
        .map(|v| (v - &poly.center).norm())
        .fold(0.0_f64, f64::max);
    let offsets = poly.center_offsets();
    let min_norm = (0..poly.n_facets())
        .map(|j| offsets[j].abs() / poly.a_mat.row(j).norm())
        .fold(f64::INFINITY, f64::min);
    Ok((min_norm, max_norm))
}

/// `{x : (x - center)^T p (x - center) <= level}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub p_mat: DMatrix<f64>,
    pub level: f64,
    pub center: DVector<f64>,
}

impl Ellipsoid {
    pub fn new(p_mat: DMatrix<f64>, level: f64, center: DVector<f64>) -> Result<Self> {
        if p_mat.nrows() != center.len() {
            return Err(Error::Dimension("ellipsoid shape and center disagree".into()));
        }
        if !linalg::is_spd(&p_mat, 1e-9) {
            return Err(Error::InvalidArgument("ellipsoid shape is not symmetric positive definite".into()));
        }
        if !(level > 0.0) {
            return Err(Error::InvalidArgument(format!("ellipsoid level must be positive, got {level}")));
        }
        Ok(Self { p_mat, level, center })
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        linalg::quad_form(&self.p_mat, &(x - &self.center))
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.value(x) <= self.level + MEMBERSHIP_TOL
    }
}

pub fn ellipsoid_contains(e: &Ellipsoid, x: &DVector<f64>) -> bool {
    e.contains(x)
}
