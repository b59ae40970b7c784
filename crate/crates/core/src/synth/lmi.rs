//! Constraint fragments of the backup-controller synthesis program.
//!
//! Decision variables: `p_bar` (inverse Lyapunov matrix, symmetric n x n),
//! `z = K p_bar` (p x n), and `u_bar` (symmetric ellipsoid generator, n x n).

use nalgebra::DMatrix;

use super::sdp::{AffineExpr, Fragment, MatVar, SdpProblem, SocConstraint};
use crate::error::{Error, Result};
use crate::sysmodel::{DiscreteLoop, Polytope};

#[derive(Debug, Clone)]
pub struct SynthVars {
    pub p_bar: MatVar,
    pub z: MatVar,
    pub u_bar: MatVar,
}

impl SynthVars {
    pub fn declare(problem: &mut SdpProblem, n: usize, p: usize) -> Self {
        Self {
            p_bar: problem.add_symmetric("p_bar", n),
            z: problem.add_matrix("z", p, n),
            u_bar: problem.add_symmetric("u_bar", n),
        }
    }
}

/// `[[P, A P - B Z], [(A P - B Z)^T, (1 - alpha) P]] - eps I >= 0`.
pub fn build_recovery_lmi(lp: &DiscreteLoop, alpha: f64, eps: f64, vars: &SynthVars) -> Result<Fragment> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("decay must lie in (0, 1), got {alpha}")));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let n = lp.n_states();
    if vars.p_bar.rows != n || vars.z.rows != lp.n_inputs() || vars.z.cols != n {
        return Err(Error::Dimension("recovery variables do not match the loop".into()));
    }
    let p = AffineExpr::var(&vars.p_bar);
    let z = AffineExpr::var(&vars.z);
    let off = p.lmul(&lp.a).sub(&z.lmul(&lp.b));
    let block = AffineExpr::block2(&p, &off, &off.transpose(), &p.scale(1.0 - alpha))
        .add_constant(&(DMatrix::identity(2 * n, 2 * n) * -eps));
    Ok(Fragment { psd: vec![("recovery".into(), block)], soc: vec![] })
}

/// Coupling `[[P, U], [U, I]] >= 0` plus one cone `||U a_j|| <= b_j - a_j^T d` per facet.
pub fn build_safety_constraints(sor: &Polytope, vars: &SynthVars) -> Result<Fragment> {
    let n = sor.dim();
    if vars.u_bar.rows != n || vars.p_bar.rows != n {
        return Err(Error::Dimension("safety variables do not match the region".into()));
    }
    let p = AffineExpr::var(&vars.p_bar);
    let u = AffineExpr::var(&vars.u_bar);
    let coupling = AffineExpr::block2(&p, &u, &u, &AffineExpr::constant(DMatrix::identity(n, n)));
    let offsets = sor.center_offsets();
    let soc = (0..sor.n_facets())
        .map(|j| {
            let a = sor.a_mat.rows(j, 1).transpose();
            let c = SocConstraint::new(
                u.rmul(&a),
                AffineExpr::constant(DMatrix::from_element(1, 1, offsets[j])),
            )?;
            Ok((format!("facet{j}"), c))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Fragment { psd: vec![("coupling".into(), coupling)], soc })
}

/// Keeps the unit level set of `p_bar^{-1}` inside the region:
/// `a_j^T P a_j <= (b_j - a_j^T d)^2` per facet.
pub fn build_level_normalization(sor: &Polytope, vars: &SynthVars) -> Fragment {
    let p = AffineExpr::var(&vars.p_bar);
    let offsets = sor.center_offsets();
    let psd = (0..sor.n_facets())
        .map(|j| {
            let a = sor.a_mat.rows(j, 1).transpose();
            let support = p.lmul(&a.transpose()).rmul(&a);
            let row = AffineExpr::constant(DMatrix::from_element(1, 1, offsets[j] * offsets[j])).sub(&support);
            (format!("level{j}"), row)
        })
        .collect();
    Fragment { psd, soc: vec![] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn scalar_loop(a: f64, b: f64) -> DiscreteLoop {
        DiscreteLoop {
            a: DMatrix::from_element(1, 1, a),
            b: DMatrix::from_element(1, 1, b),
            h: 0.1,
            poc_gain: None,
            kalman_gain: None,
        }
    }

    fn m1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn recovery_block_at_known_point() {
        let mut prob = SdpProblem::new();
        let vars = SynthVars::declare(&mut prob, 1, 1);
        let eps = 1e-6;
        let frag = build_recovery_lmi(&scalar_loop(0.9, 1.0), 0.19, eps, &vars).unwrap();
        let blk = frag.psd[0]
            .1
            .eval_with(prob.n_scalars(), &[(&vars.p_bar, &m1(1.0)), (&vars.z, &m1(0.4))]);
        let shifted = &blk + DMatrix::identity(2, 2) * eps;
        assert_relative_eq!(shifted, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 0.81]), epsilon = 1e-15);
        // Eigenvalues of [[1, .5], [.5, .81]]: (1.81 +- sqrt(1.0361)) / 2.
        let eig = linalg::sym_eigenvalues(&shifted);
        assert_relative_eq!(eig[0], (1.81 - 1.0361f64.sqrt()) / 2.0, epsilon = 1e-12);
        assert_relative_eq!(eig[1], (1.81 + 1.0361f64.sqrt()) / 2.0, epsilon = 1e-12);
        assert!(eig[0] > eps);
    }

    #[test]
    fn recovery_block_is_singular_on_the_decay_boundary() {
        let mut prob = SdpProblem::new();
        let vars = SynthVars::declare(&mut prob, 1, 1);
        let alpha = 1.0 - 0.5f64 * 0.5;
        let frag = build_recovery_lmi(&scalar_loop(0.9, 1.0), alpha, 1e-9, &vars).unwrap();
        let blk = frag.psd[0]
            .1
            .eval_with(prob.n_scalars(), &[(&vars.p_bar, &m1(1.0)), (&vars.z, &m1(0.4))]);
        let shifted = &blk + DMatrix::identity(2, 2) * 1e-9;
        assert!(linalg::min_sym_eigenvalue(&shifted).abs() < 1e-12);
    }

    #[test]
    fn uncontrollable_unstable_scalar_never_satisfies_recovery() {
        let mut prob = SdpProblem::new();
        let vars = SynthVars::declare(&mut prob, 1, 1);
        let frag = build_recovery_lmi(&scalar_loop(1.2, 0.0), 0.1, 1e-6, &vars).unwrap();
        for p in [1e-3, 0.1, 1.0, 10.0, 1e3] {
            for z in [-10.0, 0.0, 10.0] {
                let blk = frag.psd[0]
                    .1
                    .eval_with(prob.n_scalars(), &[(&vars.p_bar, &m1(p)), (&vars.z, &m1(z))]);
                assert!(linalg::min_sym_eigenvalue(&blk) < 0.0);
            }
        }
    }

    #[test]
    fn recovery_rejects_bad_decay() {
        let mut prob = SdpProblem::new();
        let vars = SynthVars::declare(&mut prob, 1, 1);
        assert!(build_recovery_lmi(&scalar_loop(0.9, 1.0), 1.0, 1e-6, &vars).is_err());
        assert!(build_recovery_lmi(&scalar_loop(0.9, 1.0), 0.0, 1e-6, &vars).is_err());
    }

    fn safety_violation(u_scale: f64) -> (f64, Vec<f64>) {
        let sor = Polytope::symmetric_box(&[1.0, 1.0]).unwrap();
        let mut prob = SdpProblem::new();
        let vars = SynthVars::declare(&mut prob, 2, 1);
        let frag = build_safety_constraints(&sor, &vars).unwrap();
        assert_eq!(frag.soc.len(), 4);
        let u = DMatrix::identity(2, 2) * u_scale;
        let p = &u * &u;
        let mut x = DVector::zeros(prob.n_scalars());
        vars.u_bar.write(&u, &mut x);
        vars.p_bar.write(&p, &mut x);
        let margins = frag.soc.iter().map(|(_, c)| c.margin(&x)).collect();
        (frag.max_violation(&x), margins)
    }

    #[test]
    fn safety_cones_on_unit_box() {
        let (viol, margins) = safety_violation(0.5);
        assert!(viol <= 1e-12);
        assert!(margins.iter().all(|m| (m - 0.5).abs() < 1e-15));

        let (_, margins) = safety_violation(1.0);
        assert!(margins.iter().all(|m| m.abs() < 1e-15));

        let (viol, margins) = safety_violation(1.2);
        assert!(viol > 0.0);
        assert!(margins.iter().all(|m| *m < 0.0));
    }

    #[test]
    fn normalization_rows_match_support_function() {
        let sor = Polytope::symmetric_box(&[2.0, 1.0]).unwrap();
        let mut prob = SdpProblem::new();
        let vars = SynthVars::declare(&mut prob, 2, 1);
        let frag = build_level_normalization(&sor, &vars);
        let p = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let mut x = DVector::zeros(prob.n_scalars());
        vars.p_bar.write(&p, &mut x);
        for (_, row) in &frag.psd {
            assert!(row.eval(&x)[(0, 0)].abs() < 1e-15);
        }
    }
}
