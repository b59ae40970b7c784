//! Recovery deadlines expressed as per-step quadratic Lyapunov decay targets.

use crate::error::{Error, Result};
use crate::sysmodel::{boundary_norm_extrema, Polytope};

/// Slack used when flooring `delta_t / h`, so that e.g. 2.5 / 0.02 counts 125 steps.
const FLOOR_SLACK: f64 = 1e-9;

/// Recovery requirement in continuous time, with optional exponential-stability data.
///
/// `m_const` is carried for completeness only; the decay target does not use it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoverySpec {
    pub delta_t: f64,
    pub gamma: Option<f64>,
    pub m_const: Option<f64>,
    pub delta_small: Option<f64>,
}

impl RecoverySpec {
    pub fn new(delta_t: f64) -> Result<Self> {
        if !(delta_t > 0.0) {
            return Err(Error::InvalidArgument(format!("recovery deadline must be positive, got {delta_t}")));
        }
        Ok(Self { delta_t, gamma: None, m_const: None, delta_small: None })
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::Domain(format!("decay rate must be positive, got {gamma}")));
        }
        self.gamma = Some(gamma);
        Ok(self)
    }
}

/// Minimum per-step decay for one sampling period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayTarget {
    pub h: f64,
    pub delta_k: u64,
    pub alpha_ref: f64,
}

/// `alpha = 1 - exp(-2 gamma)`.
pub fn gamma_to_alpha(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("decay rate must be positive and finite, got {gamma}")));
    }
    Ok(-(-2.0 * gamma).exp_m1())
}

/// Inverse of [`gamma_to_alpha`].
pub fn alpha_to_gamma(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("decay must lie in (0, 1), got {alpha}")));
    }
    Ok(-(-alpha).ln_1p() / 2.0)
}

/// Number of whole sampling steps that fit in the deadline.
pub fn deadline_steps(delta_t: f64, h: f64) -> u64 {
    (delta_t / h + FLOOR_SLACK).floor().max(0.0) as u64
}

/// Minimum decay so that the farthest safe-region state contracts to the
/// nearest preferred-region boundary within the deadline.
pub fn alpha_ref(sor: &Polytope, por: &Polytope, delta_t: f64, h: f64) -> Result<DecayTarget> {
    if !(h > 0.0) || !(delta_t > 0.0) {
        return Err(Error::InvalidArgument("deadline and period must be positive".into()));
    }
    let delta_k = deadline_steps(delta_t, h);
    if delta_k < 1 {
        return Err(Error::DeadlineInfeasible { delta_t, h });
    }
    if !sor.strictly_contains_polytope(por)? {
        return Err(Error::Geometry("preferred region is not strictly inside the safe region".into()));
    }
    let (min_por, _) = boundary_norm_extrema(por)?;
    let (_, max_sor) = boundary_norm_extrema(sor)?;
    let ratio = min_por / max_sor;
    let alpha = -(2.0 / delta_k as f64 * ratio.ln()).exp_m1();
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Numeric(format!("decay target {alpha} outside (0, 1)")));
    }
    Ok(DecayTarget { h, delta_k, alpha_ref: alpha })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn gamma_alpha_examples() {
        assert!(gamma_to_alpha(1e-12).unwrap() > 0.0);
        assert!(gamma_to_alpha(1e-12).unwrap() < 1e-11);
        assert_relative_eq!(gamma_to_alpha(0.5).unwrap(), 1.0 - (-1.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(gamma_to_alpha(0.5).unwrap(), 0.63212, epsilon = 1e-5);
        assert_relative_eq!(gamma_to_alpha(10f64.ln() / 2.0).unwrap(), 0.9, epsilon = 1e-15);
        assert!(matches!(gamma_to_alpha(0.0), Err(Error::Domain(_))));
        assert!(matches!(gamma_to_alpha(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn alpha_ref_examples() {
        let sor = Polytope::symmetric_box(&[2.0, 2.0]).unwrap();
        let por = Polytope::symmetric_box(&[1.0, 1.0]).unwrap();
        let ratio: f64 = 1.0 / (2.0 * 2f64.sqrt());

        let t = alpha_ref(&sor, &por, 1.0, 0.1).unwrap();
        assert_eq!(t.delta_k, 10);
        assert_relative_eq!(t.alpha_ref, 1.0 - ratio.powf(0.2), epsilon = 1e-14);
        assert_relative_eq!(t.alpha_ref, 0.187748, epsilon = 1e-6);

        let t = alpha_ref(&sor, &por, 1.0, 0.5).unwrap();
        assert_eq!(t.delta_k, 2);
        assert_relative_eq!(t.alpha_ref, 0.64645, epsilon = 1e-5);
    }

    #[test]
    fn touching_regions_need_almost_no_decay() {
        let sor = Polytope::symmetric_box(&[1.0]).unwrap();
        let por = Polytope::symmetric_box(&[1.0 - 1e-9]).unwrap();
        let t = alpha_ref(&sor, &por, 1.0, 0.1).unwrap();
        assert!(t.alpha_ref > 0.0 && t.alpha_ref < 1e-8);
    }

    #[test]
    fn alpha_ref_errors() {
        let sor = Polytope::symmetric_box(&[2.0, 2.0]).unwrap();
        let por = Polytope::symmetric_box(&[1.0, 1.0]).unwrap();
        assert!(matches!(
            alpha_ref(&sor, &por, 0.05, 0.1),
            Err(Error::DeadlineInfeasible { .. })
        ));
        let touching = Polytope::symmetric_box(&[2.0, 1.0]).unwrap();
        assert!(matches!(alpha_ref(&sor, &touching, 1.0, 0.1), Err(Error::Geometry(_))));
    }

    #[test]
    fn deadline_steps_floor_is_robust_to_rounding() {
        assert_eq!(deadline_steps(2.5, 0.02), 125);
        assert_eq!(deadline_steps(1.0, 0.06), 16);
        assert_eq!(deadline_steps(0.3, 0.1), 3);
    }

    #[test]
    fn alpha_ref_is_a_staircase_in_period() {
        let sor = Polytope::symmetric_box(&[0.5, 0.5, 0.35, 0.35]).unwrap();
        let por = Polytope::symmetric_box(&[0.14, 0.3, 0.14, 0.3]).unwrap();
        let mut last = 0.0;
        for m in 1..=15 {
            let t = alpha_ref(&sor, &por, 2.5, 0.02 * m as f64).unwrap();
            assert!(t.alpha_ref >= last);
            last = t.alpha_ref;
        }
    }

    proptest! {
        #[test]
        fn alpha_ref_in_unit_interval(w in 0.2f64..5.0, frac in 0.01f64..0.99, dt in 0.05f64..10.0, h in 0.01f64..0.05) {
            let sor = Polytope::symmetric_box(&[w, 2.0 * w]).unwrap();
            let por = Polytope::symmetric_box(&[w * frac, 2.0 * w * frac]).unwrap();
            let t = alpha_ref(&sor, &por, dt.max(h), h).unwrap();
            prop_assert!(t.alpha_ref > 0.0 && t.alpha_ref < 1.0);
        }

        #[test]
        fn gamma_alpha_round_trip(gamma in 1e-6f64..3.0) {
            let back = alpha_to_gamma(gamma_to_alpha(gamma).unwrap()).unwrap();
            prop_assert!((back - gamma).abs() <= 1e-10 * gamma.max(1.0));
        }

        #[test]
        fn pure_contraction_reaches_preferred_boundary(w in 0.2f64..5.0, frac in 0.05f64..0.95, steps in 1u64..200, corner in 0usize..4) {
            let h = 0.01;
            let dt = steps as f64 * h;
            let sor = Polytope::symmetric_box(&[w, 0.5 * w]).unwrap();
            let por = Polytope::symmetric_box(&[w * frac, 0.5 * w * frac]).unwrap();
            let t = alpha_ref(&sor, &por, dt, h).unwrap();
            let (min_por, _) = boundary_norm_extrema(&por).unwrap();
            let vertices = sor.vertices().unwrap();
            let mut x = vertices[corner].clone();
            let gain = (1.0 - t.alpha_ref).sqrt();
            for _ in 0..t.delta_k {
                x *= gain;
            }
            prop_assert!(x.norm() <= min_por + 1e-9);
        }
    }
}
