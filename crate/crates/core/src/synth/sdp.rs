//! Small dense conic backend: PSD constraints, second-order cones, and a
//! concave objective `c^T x + sum logdet(G_l(x))` to maximize.
//!
//! Solved with a primal log-barrier path-following method. A phase-I problem
//! (minimize a uniform shift `s` of every cone) finds a strictly feasible
//! start or certifies infeasibility through the barrier duality-gap bound.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Symmetric,
    Full,
}

/// Matrix-valued decision variable occupying a contiguous range of scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct MatVar {
    pub name: String,
    pub kind: VarKind,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl MatVar {
    pub fn n_scalars(&self) -> usize {
        match self.kind {
            VarKind::Symmetric => self.rows * (self.rows + 1) / 2,
            VarKind::Full => self.rows * self.cols,
        }
    }

    /// `(scalar index, basis matrix)` pairs spanning the variable.
    fn basis(&self) -> Vec<(usize, DMatrix<f64>)> {
        let mut out = Vec::with_capacity(self.n_scalars());
        let mut k = self.offset;
        match self.kind {
            VarKind::Symmetric => {
                for i in 0..self.rows {
                    for j in i..self.rows {
                        let mut e = DMatrix::zeros(self.rows, self.rows);
                        e[(i, j)] = 1.0;
                        e[(j, i)] = 1.0;
                        out.push((k, e));
                        k += 1;
                    }
                }
            }
            VarKind::Full => {
                for i in 0..self.rows {
                    for j in 0..self.cols {
                        let mut e = DMatrix::zeros(self.rows, self.cols);
                        e[(i, j)] = 1.0;
                        out.push((k, e));
                        k += 1;
                    }
                }
            }
        }
        out
    }

    /// Reads the variable's matrix out of a flat solution vector.
    pub fn value(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.basis()
            .into_iter()
            .fold(DMatrix::zeros(self.rows, self.cols), |acc, (k, e)| acc + e * x[k])
    }

    /// Writes a matrix value into a flat vector (upper triangle for symmetric variables).
    pub fn write(&self, value: &DMatrix<f64>, x: &mut DVector<f64>) {
        let mut k = self.offset;
        match self.kind {
            VarKind::Symmetric => {
                for i in 0..self.rows {
                    for j in i..self.rows {
                        x[k] = value[(i, j)];
                        k += 1;
                    }
                }
            }
            VarKind::Full => {
                for i in 0..self.rows {
                    for j in 0..self.cols {
                        x[k] = value[(i, j)];
                        k += 1;
                    }
                }
            }
        }
    }
}

/// Matrix expression `constant + sum_k x_k * terms[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    pub rows: usize,
    pub cols: usize,
    pub constant: DMatrix<f64>,
    pub terms: BTreeMap<usize, DMatrix<f64>>,
}

impl AffineExpr {
    pub fn constant(m: DMatrix<f64>) -> Self {
        Self { rows: m.nrows(), cols: m.ncols(), constant: m, terms: BTreeMap::new() }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(DMatrix::zeros(rows, cols))
    }

    pub fn var(v: &MatVar) -> Self {
        Self {
            rows: v.rows,
            cols: v.cols,
            constant: DMatrix::zeros(v.rows, v.cols),
            terms: v.basis().into_iter().collect(),
        }
    }

    fn map(&self, rows: usize, cols: usize, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        Self {
            rows,
            cols,
            constant: f(&self.constant),
            terms: self.terms.iter().map(|(&k, m)| (k, f(m))).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(self.rows, self.cols, |m| m * s)
    }

    /// `m * self`.
    pub fn lmul(&self, m: &DMatrix<f64>) -> Self {
        assert_eq!(m.ncols(), self.rows, "lmul dimension mismatch");
        self.map(m.nrows(), self.cols, |t| m * t)
    }

    /// `self * m`.
    pub fn rmul(&self, m: &DMatrix<f64>) -> Self {
        assert_eq!(self.cols, m.nrows(), "rmul dimension mismatch");
        self.map(self.rows, m.ncols(), |t| t * m)
    }

    pub fn transpose(&self) -> Self {
        self.map(self.cols, self.rows, |m| m.transpose())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "add dimension mismatch");
        let mut out = self.clone();
        out.constant += &other.constant;
        for (&k, m) in &other.terms {
            out.terms
                .entry(k)
                .and_modify(|t| *t += m)
                .or_insert_with(|| m.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn add_constant(&self, m: &DMatrix<f64>) -> Self {
        let mut out = self.clone();
        out.constant += m;
        out
    }

    /// `[[a, b], [c, d]]`.
    pub fn block2(a: &Self, b: &Self, c: &Self, d: &Self) -> Self {
        assert_eq!(a.rows, b.rows);
        assert_eq!(c.rows, d.rows);
        assert_eq!(a.cols, c.cols);
        assert_eq!(b.cols, d.cols);
        let rows = a.rows + c.rows;
        let cols = a.cols + b.cols;
        let place = |ma: Option<&DMatrix<f64>>,
                     mb: Option<&DMatrix<f64>>,
                     mc: Option<&DMatrix<f64>>,
                     md: Option<&DMatrix<f64>>| {
            let mut out = DMatrix::zeros(rows, cols);
            if let Some(m) = ma {
                out.view_mut((0, 0), (a.rows, a.cols)).copy_from(m);
            }
            if let Some(m) = mb {
                out.view_mut((0, a.cols), (b.rows, b.cols)).copy_from(m);
            }
            if let Some(m) = mc {
                out.view_mut((a.rows, 0), (c.rows, c.cols)).copy_from(m);
            }
            if let Some(m) = md {
                out.view_mut((a.rows, a.cols), (d.rows, d.cols)).copy_from(m);
            }
            out
        };
        let mut keys: Vec<usize> = Vec::new();
        for e in [a, b, c, d] {
            keys.extend(e.terms.keys().copied());
        }
        keys.sort_unstable();
        keys.dedup();
        let terms = keys
            .into_iter()
            .map(|k| {
                (k, place(a.terms.get(&k), b.terms.get(&k), c.terms.get(&k), d.terms.get(&k)))
            })
            .collect();
        Self {
            rows,
            cols,
            constant: place(Some(&a.constant), Some(&b.constant), Some(&c.constant), Some(&d.constant)),
            terms,
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.terms
            .iter()
            .fold(self.constant.clone(), |acc, (&k, m)| acc + m * x[k])
    }

    /// Evaluates with explicit variable values; unassigned variables are zero.
    pub fn eval_with(&self, n_scalars: usize, assignments: &[(&MatVar, &DMatrix<f64>)]) -> DMatrix<f64> {
        let mut x = DVector::zeros(n_scalars);
        for (v, value) in assignments {
            v.write(value, &mut x);
        }
        self.eval(&x)
    }

    fn is_symmetric(&self) -> bool {
        let sym = |m: &DMatrix<f64>| (m - m.transpose()).amax() <= 1e-12 * (1.0 + m.amax());
        self.rows == self.cols && sym(&self.constant) && self.terms.values().all(sym)
    }
}

/// `||v(x)|| <= s(x)` with `v` a column and `s` a scalar expression.
#[derive(Debug, Clone, PartialEq)]
pub struct SocConstraint {
    pub v: AffineExpr,
    pub s: AffineExpr,
}

impl SocConstraint {
    pub fn new(v: AffineExpr, s: AffineExpr) -> Result<Self> {
        if v.cols != 1 || (s.rows, s.cols) != (1, 1) {
            return Err(Error::Dimension("second-order cone needs a column and a scalar".into()));
        }
        Ok(Self { v, s })
    }

    /// `s - ||v||` at a point; nonnegative when satisfied.
    pub fn margin(&self, x: &DVector<f64>) -> f64 {
        self.s.eval(x)[(0, 0)] - self.v.eval(x).norm()
    }
}

/// Constraints contributed by one modelling step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Fragment {
    pub psd: Vec<(String, AffineExpr)>,
    pub soc: Vec<(String, SocConstraint)>,
}

impl Fragment {
    /// Largest violation of any constraint at `x` (PSD: negative min eigenvalue).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let psd = self
            .psd
            .iter()
            .map(|(_, e)| -linalg::min_sym_eigenvalue(&e.eval(x)));
        let soc = self.soc.iter().map(|(_, c)| -c.margin(x));
        psd.chain(soc).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Decision variables, constraints and objective of one conic program.
#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    vars: Vec<MatVar>,
    n_scalars: usize,
    psd: Vec<(String, AffineExpr)>,
    soc: Vec<(String, SocConstraint)>,
    linear: Vec<AffineExpr>,
    logdet: Vec<AffineExpr>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    fn push_var(&mut self, name: &str, kind: VarKind, rows: usize, cols: usize) -> MatVar {
        let v = MatVar { name: name.to_string(), kind, rows, cols, offset: self.n_scalars };
        self.n_scalars += v.n_scalars();
        self.vars.push(v.clone());
        v
    }

    pub fn add_symmetric(&mut self, name: &str, n: usize) -> MatVar {
        self.push_var(name, VarKind::Symmetric, n, n)
    }

    pub fn add_matrix(&mut self, name: &str, rows: usize, cols: usize) -> MatVar {
        self.push_var(name, VarKind::Full, rows, cols)
    }

    pub fn vars(&self) -> &[MatVar] {
        &self.vars
    }

    pub fn n_scalars(&self) -> usize {
        self.n_scalars
    }

    fn check_refs(&self, e: &AffineExpr) -> Result<()> {
        match e.terms.keys().next_back() {
            Some(&k) if k >= self.n_scalars => {
                Err(Error::Dimension(format!("expression references undeclared scalar {k}")))
            }
            _ => Ok(()),
        }
    }

    pub fn add_psd(&mut self, name: &str, e: AffineExpr) -> Result<()> {
        if !e.is_symmetric() {
            return Err(Error::Dimension(format!("constraint {name} is not a symmetric matrix expression")));
        }
        self.check_refs(&e)?;
        self.psd.push((name.to_string(), e));
        Ok(())
    }

    pub fn add_soc(&mut self, name: &str, c: SocConstraint) -> Result<()> {
        self.check_refs(&c.v)?;
        self.check_refs(&c.s)?;
        self.soc.push((name.to_string(), c));
        Ok(())
    }

    pub fn extend(&mut self, fragment: Fragment) -> Result<()> {
        for (name, e) in fragment.psd {
            self.add_psd(&name, e)?;
        }
        for (name, c) in fragment.soc {
            self.add_soc(&name, c)?;
        }
        Ok(())
    }

    /// Adds `logdet(e)` to the maximized objective.
    pub fn maximize_logdet(&mut self, e: AffineExpr) -> Result<()> {
        if !e.is_symmetric() {
            return Err(Error::Dimension("log-det objective needs a symmetric expression".into()));
        }
        self.check_refs(&e)?;
        self.logdet.push(e);
        Ok(())
    }

    /// Adds a scalar affine term to the maximized objective.
    pub fn maximize_linear(&mut self, e: AffineExpr) -> Result<()> {
        if (e.rows, e.cols) != (1, 1) {
            return Err(Error::Dimension("linear objective must be scalar".into()));
        }
        self.check_refs(&e)?;
        self.linear.push(e);
        Ok(())
    }

    pub fn psd_constraints(&self) -> &[(String, AffineExpr)] {
        &self.psd
    }

    pub fn soc_constraints(&self) -> &[(String, SocConstraint)] {
        &self.soc
    }

    pub fn objective_value(&self, x: &DVector<f64>) -> f64 {
        let lin: f64 = self.linear.iter().map(|e| e.eval(x)[(0, 0)]).sum();
        let ld: f64 = self
            .logdet
            .iter()
            .map(|e| logdet(&e.eval(x)).unwrap_or(f64::NEG_INFINITY))
            .sum();
        lin + ld
    }

    /// Largest violation over all constraints (PSD min-eigenvalue, cone margin).
    pub fn max_residual(&self, x: &DVector<f64>) -> f64 {
        let psd = self
            .psd
            .iter()
            .map(|(_, e)| (-linalg::min_sym_eigenvalue(&e.eval(x))).max(0.0));
        let soc = self.soc.iter().map(|(_, c)| (-c.margin(x)).max(0.0));
        psd.chain(soc).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub status: SolveStatus,
    pub objective_value: f64,
    pub solve_time: f64,
    pub residuals: f64,
    pub newton_steps: usize,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: DVector<f64>,
    pub report: SolverReport,
}

impl Solution {
    pub fn value(&self, v: &MatVar) -> DMatrix<f64> {
        v.value(&self.x)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Stop when the barrier gap bound `nu / t` falls below this.
    pub gap_tol: f64,
    /// Newton-decrement threshold for centering.
    pub newton_tol: f64,
    /// Barrier parameter growth factor.
    pub mu: f64,
    pub max_newton: usize,
    /// Largest gap bound accepted when centering breaks down before `gap_tol`.
    pub acceptable_gap: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-9, newton_tol: 1e-10, mu: 12.0, max_newton: 400, acceptable_gap: 1e-5 }
    }
}

fn logdet(m: &DMatrix<f64>) -> Option<f64> {
    let chol = linalg::symmetrize(m).cholesky()?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        let d = l[(i, i)];
        if !(d > 0.0) {
            return None;
        }
        acc += d.ln();
    }
    Some(2.0 * acc)
}

#[derive(Debug, Clone)]
struct Lmi {
    f0: DMatrix<f64>,
    terms: Vec<(usize, DMatrix<f64>)>,
}

impl Lmi {
    fn from_expr(e: &AffineExpr) -> Self {
        Self {
            f0: linalg::symmetrize(&e.constant),
            terms: e.terms.iter().map(|(&k, m)| (k, linalg::symmetrize(m))).collect(),
        }
    }

    fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.terms.iter().fold(self.f0.clone(), |acc, (k, m)| acc + m * x[*k])
    }

    fn dim(&self) -> usize {
        self.f0.nrows()
    }

    /// Adds `-w logdet F(x)` derivatives into `g` and `h`.
    fn accumulate(&self, x: &DVector<f64>, w: f64, g: &mut DVector<f64>, h: &mut DMatrix<f64>) -> bool {
        let f = self.eval(x);
        let Some(chol) = f.cholesky() else { return false };
        let inv = chol.inverse();
        let prods: Vec<DMatrix<f64>> = self.terms.iter().map(|(_, m)| &inv * m).collect();
        for (a, (ka, _)) in self.terms.iter().enumerate() {
            g[*ka] -= w * prods[a].trace();
            for (b, (kb, _)) in self.terms.iter().enumerate().skip(a) {
                let v = w * prods[a].component_mul(&prods[b].transpose()).sum();
                h[(*ka, *kb)] += v;
                if a != b {
                    h[(*kb, *ka)] += v;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone)]
struct Cone {
    v0: DVector<f64>,
    v_terms: Vec<(usize, DVector<f64>)>,
    s0: f64,
    s_terms: Vec<(usize, f64)>,
}

impl Cone {
    fn from_constraint(c: &SocConstraint) -> Self {
        Self {
            v0: c.v.constant.column(0).into_owned(),
            v_terms: c.v.terms.iter().map(|(&k, m)| (k, m.column(0).into_owned())).collect(),
            s0: c.s.constant[(0, 0)],
            s_terms: c.s.terms.iter().map(|(&k, m)| (k, m[(0, 0)])).collect(),
        }
    }

    fn eval(&self, x: &DVector<f64>) -> (DVector<f64>, f64) {
        let v = self.v_terms.iter().fold(self.v0.clone(), |acc, (k, m)| acc + m * x[*k]);
        let s = self.s_terms.iter().fold(self.s0, |acc, (k, c)| acc + c * x[*k]);
        (v, s)
    }

    fn barrier(&self, x: &DVector<f64>) -> Option<f64> {
        let (v, s) = self.eval(x);
        let q = s * s - v.norm_squared();
        (s > 0.0 && q > 0.0).then(|| -q.ln())
    }

    /// Adds derivatives of `-log(s^2 - |v|^2)`.
    fn accumulate(&self, x: &DVector<f64>, n: usize, g: &mut DVector<f64>, h: &mut DMatrix<f64>) -> bool {
        let (v, s) = self.eval(x);
        let q = s * s - v.norm_squared();
        if !(s > 0.0 && q > 0.0) {
            return false;
        }
        let mut ds = DVector::zeros(n);
        for (k, c) in &self.s_terms {
            ds[*k] += c;
        }
        let mut jv = DMatrix::zeros(v.len(), n);
        for (k, m) in &self.v_terms {
            let mut col = jv.column_mut(*k);
            col += m;
        }
        let dq = &ds * (2.0 * s) - jv.transpose() * &v * 2.0;
        let d2q = &ds * ds.transpose() * 2.0 - jv.transpose() * &jv * 2.0;
        *g -= &dq / q;
        *h += (&dq * dq.transpose()) / (q * q) - d2q / q;
        true
    }
}

/// Internal barrier problem: minimize `-t (lin^T x + sum logdet G) + barrier(x)`.
#[derive(Debug, Clone)]
struct Barrier {
    n: usize,
    lmis: Vec<Lmi>,
    cones: Vec<Cone>,
    obj_logdet: Vec<Lmi>,
    obj_lin: DVector<f64>,
}

impl Barrier {
    fn nu(&self) -> f64 {
        let lmi: usize = self.lmis.iter().map(Lmi::dim).sum();
        let ld: usize = self.obj_logdet.iter().map(Lmi::dim).sum();
        (lmi + ld + 2 * self.cones.len()) as f64
    }

    fn objective(&self, x: &DVector<f64>) -> Option<f64> {
        let mut f = self.obj_lin.dot(x);
        for g in &self.obj_logdet {
            f += logdet(&g.eval(x))?;
        }
        Some(f)
    }

    fn phi(&self, x: &DVector<f64>, t: f64) -> Option<f64> {
        let mut val = -t * self.objective(x)?;
        for l in &self.lmis {
            val -= logdet(&l.eval(x))?;
        }
        for c in &self.cones {
            val += c.barrier(x)?;
        }
        Some(val)
    }

    fn derivatives(&self, x: &DVector<f64>, t: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let mut g = -&self.obj_lin * t;
        let mut h = DMatrix::zeros(self.n, self.n);
        for l in &self.obj_logdet {
            if !l.accumulate(x, t, &mut g, &mut h) {
                return None;
            }
        }
        for l in &self.lmis {
            if !l.accumulate(x, 1.0, &mut g, &mut h) {
                return None;
            }
        }
        for c in &self.cones {
            if !c.accumulate(x, self.n, &mut g, &mut h) {
                return None;
            }
        }
        Some((g, h))
    }

    /// Newton centering at fixed `t`; `early_stop` is polled after every step.
    fn center(
        &self,
        mut x: DVector<f64>,
        t: f64,
        opts: &SolverOptions,
        steps: &mut usize,
        early_stop: &dyn Fn(&DVector<f64>) -> bool,
    ) -> Result<(DVector<f64>, bool)> {
        for _ in 0..opts.max_newton {
            let (g, h) = self
                .derivatives(&x, t)
                .ok_or_else(|| Error::Numeric("iterate left the barrier domain".into()))?;
            let dx = newton_direction(&h, &g)?;
            let decrement = -g.dot(&dx);
            if decrement / 2.0 <= opts.newton_tol {
                return Ok((x, false));
            }
            let phi0 = self
                .phi(&x, t)
                .ok_or_else(|| Error::Numeric("barrier undefined at iterate".into()))?;
            let mut step = 1.0;
            loop {
                let cand = &x + &dx * step;
                if let Some(p) = self.phi(&cand, t) {
                    if p <= phi0 - 0.25 * step * decrement {
                        x = cand;
                        break;
                    }
                }
                step *= 0.5;
                if step < 1e-14 {
                    // No further progress is representable at this t.
                    return Ok((x, false));
                }
            }
            *steps += 1;
            if step < 1e-3 && decrement < STALL_DECREMENT {
                // Rounding in phi dominates the predicted decrease.
                return Ok((x, false));
            }
            if early_stop(&x) {
                return Ok((x, true));
            }
        }
        Err(Error::Numeric("Newton centering did not converge".into()))
    }
}

/// Below this Newton decrement a stalled line search counts as centered.
const STALL_DECREMENT: f64 = 1e-5;

fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = h.diagonal().amax().max(1.0);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut hr = linalg::symmetrize(h);
        for i in 0..hr.nrows() {
            hr[(i, i)] += reg;
        }
        if let Some(chol) = hr.cholesky() {
            let dx = chol.solve(&(-g));
            if dx.iter().all(|v| v.is_finite()) {
                return Ok(dx);
            }
        }
        reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
    }
    Err(Error::Numeric("Newton system is not positive definite".into()))
}

/// Solves a compiled barrier problem from a strictly feasible start.
/// Returns the final point, whether `early_stop` fired, and the gap bound of
/// the last centered point. A centering failure after the first centering
/// ends the path at the previous point.
fn path_follow(
    b: &Barrier,
    x0: DVector<f64>,
    opts: &SolverOptions,
    steps: &mut usize,
    early_stop: &dyn Fn(&DVector<f64>) -> bool,
    give_up: &dyn Fn(&DVector<f64>, f64) -> bool,
) -> Result<(DVector<f64>, bool, f64)> {
    let nu = b.nu();
    let mut t = 1.0;
    let mut x = x0;
    let mut last_gap = f64::INFINITY;
    loop {
        let (xc, stopped) = match b.center(x.clone(), t, opts, steps, early_stop) {
            Ok(v) => v,
            Err(_) if last_gap.is_finite() => return Ok((x, false, last_gap)),
            Err(e) => return Err(e),
        };
        x = xc;
        last_gap = nu / t;
        if stopped {
            return Ok((x, true, last_gap));
        }
        if give_up(&x, last_gap) || last_gap < opts.gap_tol {
            return Ok((x, false, last_gap));
        }
        t *= opts.mu;
    }
}

/// Solves `problem` to the requested accuracy.
pub fn solve(problem: &SdpProblem, opts: &SolverOptions) -> Result<Solution> {
    let start = Instant::now();
    let n = problem.n_scalars;
    let mut steps = 0usize;

    let lmis: Vec<Lmi> = problem.psd.iter().map(|(_, e)| Lmi::from_expr(e)).collect();
    let cones: Vec<Cone> = problem.soc.iter().map(|(_, c)| Cone::from_constraint(c)).collect();
    let obj_logdet: Vec<Lmi> = problem.logdet.iter().map(Lmi::from_expr).collect();
    let mut obj_lin = DVector::zeros(n);
    for e in &problem.linear {
        for (&k, m) in &e.terms {
            obj_lin[k] += m[(0, 0)];
        }
    }

    // Phase I: variables (x, s); every cone shifted by s, minimize s subject to s >= -1.
    let shift = n;
    let shifted = |l: &Lmi| {
        let mut l = l.clone();
        l.terms.push((shift, DMatrix::identity(l.dim(), l.dim())));
        l
    };
    let mut p1_lmis: Vec<Lmi> = lmis.iter().chain(obj_logdet.iter()).map(shifted).collect();
    p1_lmis.push(Lmi {
        f0: DMatrix::from_element(1, 1, 1.0),
        terms: vec![(shift, DMatrix::from_element(1, 1, 1.0))],
    });
    let p1_cones: Vec<Cone> = cones
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.s_terms.push((shift, 1.0));
            c
        })
        .collect();
    let mut lin1 = DVector::zeros(n + 1);
    lin1[shift] = -1.0;
    let phase1 = Barrier { n: n + 1, lmis: p1_lmis, cones: p1_cones, obj_logdet: vec![], obj_lin: lin1 };

    let x_zero = DVector::<f64>::zeros(n);
    let mut worst: f64 = 0.0;
    for l in lmis.iter().chain(obj_logdet.iter()) {
        worst = worst.max(-linalg::min_sym_eigenvalue(&l.eval(&x_zero)));
    }
    for c in &cones {
        let (v, s) = c.eval(&x_zero);
        worst = worst.max(v.norm() - s);
    }
    let mut z0 = DVector::zeros(n + 1);
    z0[shift] = worst.max(0.0) + 1.0;

    let feasible_found = |z: &DVector<f64>| z[shift] < -1e-9;
    let certified_infeasible = |z: &DVector<f64>, gap: f64| z[shift] - gap > 0.0;
    let (z, found, gap1) = match path_follow(&phase1, z0, opts, &mut steps, &feasible_found, &certified_infeasible) {
        Ok(v) => v,
        Err(_) => {
            return Ok(Solution {
                report: SolverReport {
                    status: SolveStatus::NumericalFailure,
                    objective_value: f64::NAN,
                    solve_time: start.elapsed().as_secs_f64(),
                    residuals: f64::INFINITY,
                    newton_steps: steps,
                },
                x: x_zero,
            });
        }
    };
    let x_start = z.rows(0, n).into_owned();
    if !found && z[shift] >= 0.0 {
        let status = if certified_infeasible(&z, gap1) || gap1 < opts.gap_tol {
            SolveStatus::Infeasible
        } else {
            SolveStatus::NumericalFailure
        };
        return Ok(Solution {
            report: SolverReport {
                status,
                objective_value: f64::NAN,
                solve_time: start.elapsed().as_secs_f64(),
                residuals: problem.max_residual(&x_start),
                newton_steps: steps,
            },
            x: x_start,
        });
    }

    // Phase II.
    let phase2 = Barrier { n, lmis, cones, obj_logdet, obj_lin };
    let never = |_: &DVector<f64>| false;
    let no_give_up = |_: &DVector<f64>, _: f64| false;
    let outcome = path_follow(&phase2, x_start.clone(), opts, &mut steps, &never, &no_give_up);
    let (x, status) = match outcome {
        Ok((x, _, gap)) if gap <= opts.acceptable_gap.max(opts.gap_tol) => (x, SolveStatus::Optimal),
        Ok((x, _, _)) => (x, SolveStatus::NumericalFailure),
        Err(_) => (x_start, SolveStatus::NumericalFailure),
    };
    let residuals = problem.max_residual(&x);
    let status = if status == SolveStatus::Optimal && residuals > 1e-6 {
        SolveStatus::NumericalFailure
    } else {
        status
    };
    Ok(Solution {
        report: SolverReport {
            status,
            objective_value: problem.objective_value(&x),
            solve_time: start.elapsed().as_secs_f64(),
            residuals,
            newton_steps: steps,
        },
        x,
    })
}
