//! Runtime controller activation: the global log barrier, the decay-greedy
//! selection policy, and the budget-aware activation loop with dwell counter.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::synth::BackupController;
use crate::sysmodel::Polytope;

/// Activations a controller keeps after being switched in.
pub const DWELL: i64 = 2;

/// Relative tolerance when comparing selection scores.
const SCORE_TIE: f64 = 1e-12;

/// Log barrier over the facets of the safe region.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalBarrier {
    pub sor: Polytope,
}

impl GlobalBarrier {
    pub fn new(sor: Polytope) -> Self {
        Self { sor }
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        glbf(self, x)
    }
}

/// `sum_j -ln(b_j - a_j^T x)`; lower is safer.
pub fn glbf(b: &GlobalBarrier, x: &DVector<f64>) -> Result<f64> {
    let slacks = b.sor.slacks(x);
    let min = slacks.min();
    if !(min > 0.0) {
        return Err(Error::BarrierDomain { slack: min });
    }
    Ok(slacks.iter().map(|s| -s.ln()).sum())
}

/// Piecewise-constant utilization bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilizationBudget {
    schedule: Vec<(f64, f64)>,
}

impl UtilizationBudget {
    pub fn new(schedule: Vec<(f64, f64)>) -> Result<Self> {
        match schedule.first() {
            Some(&(0.0, _)) => {}
            _ => return Err(Error::InvalidArgument("budget schedule must start at t = 0".into())),
        }
        if schedule.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidArgument("budget start times must strictly increase".into()));
        }
        if let Some(&(t, u)) = schedule.iter().find(|(_, u)| !(*u > 0.0 && *u <= 1.0)) {
            return Err(Error::InvalidArgument(format!("budget {u} at t = {t} is outside (0, 1]")));
        }
        Ok(Self { schedule })
    }

    pub fn constant(u_max: f64) -> Result<Self> {
        Self::new(vec![(0.0, u_max)])
    }

    /// Budget admitting exactly the periods `h >= min_period` for a task of
    /// execution time `wcet`.
    pub fn from_min_periods(entries: &[(f64, f64)], wcet: f64) -> Result<Self> {
        let schedule = entries
            .iter()
            .map(|&(t, h_min)| utilization(wcet, h_min).map(|u| (t, u)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(schedule)
    }

    pub fn u_max(&self, t: f64) -> f64 {
        self.schedule
            .iter()
            .take_while(|(start, _)| *start <= t)
            .last()
            .map_or(self.schedule[0].1, |&(_, u)| u)
    }

    pub fn schedule(&self) -> &[(f64, f64)] {
        &self.schedule
    }
}

/// Utilization of a single periodic control task.
pub fn utilization(wcet: f64, h: f64) -> Result<f64> {
    if !(wcet > 0.0) || !(h > 0.0) {
        return Err(Error::InvalidArgument("execution time and period must be positive".into()));
    }
    if wcet >= h {
        return Err(Error::Schedulability { wcet, h });
    }
    Ok(wcet / h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ControllerId {
    Poc,
    Bsc(usize),
}

impl fmt::Display for ControllerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControllerId::Poc => write!(f, "poc"),
            ControllerId::Bsc(i) => write!(f, "bsc{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerTuple {
    pub bsc: BackupController,
}

impl ControllerTuple {
    pub fn new(bsc: BackupController) -> Self {
        Self { bsc }
    }

    pub fn sbf(&self, x: &DVector<f64>) -> f64 {
        self.bsc.sbf(x)
    }

    pub fn util(&self) -> f64 {
        self.bsc.utilization()
    }

    pub fn h(&self) -> f64 {
        self.bsc.h
    }
}

/// The primary controller as seen by the runtime.
#[derive(Debug, Clone, PartialEq)]
pub struct PocSpec {
    pub gain: DMatrix<f64>,
    pub h: f64,
    pub wcet: f64,
}

impl PocSpec {
    pub fn new(gain: DMatrix<f64>, h: f64, wcet: f64) -> Result<Self> {
        utilization(wcet, h)?;
        Ok(Self { gain, h, wcet })
    }
}

/// Among tuples whose barrier is non-positive at `x`, the one maximizing
/// `alpha_i V_i(x)`. Ties go to the longer period, then the lower index.
pub fn policy_pi(tuples: &[ControllerTuple], x: &DVector<f64>) -> Option<usize> {
    argmax_score(tuples, x, |_| true)
}

fn argmax_score(tuples: &[ControllerTuple], x: &DVector<f64>, admit: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, tup) in tuples.iter().enumerate() {
        if tup.sbf(x) > 0.0 || !admit(i) {
            continue;
        }
        let score = tup.bsc.alpha * tup.bsc.lyapunov(x);
        best = match best {
            None => Some((i, score)),
            Some((j, s)) => {
                let tol = SCORE_TIE * s.abs().max(score.abs());
                if score > s + tol || ((score - s).abs() <= tol && tup.h() > tuples[j].h()) {
                    Some((i, score))
                } else {
                    Some((j, s))
                }
            }
        };
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwitchReason {
    Initial,
    PorEntry,
    DecayArgmax,
    BudgetPeriodUp,
    Notify,
}

impl fmt::Display for SwitchReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SwitchReason::Initial => "initial",
            SwitchReason::PorEntry => "por-entry",
            SwitchReason::DecayArgmax => "decay-argmax",
            SwitchReason::BudgetPeriodUp => "budget-period-up",
            SwitchReason::Notify => "notify",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchEvent {
    pub t: f64,
    pub from: Option<ControllerId>,
    pub to: ControllerId,
    pub reason: SwitchReason,
    pub util: f64,
    pub delta_lb: f64,
}

/// Outcome of one activation step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decision {
    pub t: f64,
    pub controller: ControllerId,
    pub switched: Option<SwitchReason>,
    /// Utilization of the controller chosen by this step.
    pub util: f64,
    pub u_max: f64,
    pub delta_lb: f64,
    pub glbf: f64,
    pub notify: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScapState {
    pub lb_window: VecDeque<f64>,
    pub delta_lb: f64,
    pub dwell: i64,
    pub active: ControllerId,
    pub decay_best: f64,
    pub notify_flag: bool,
}

/// Window length covering the deadline at the slowest backup period.
pub fn window_len(delta_t: f64, h_max: f64) -> usize {
    ((delta_t / h_max) - 1e-9).ceil().max(1.0) as usize
}

/// Mean of consecutive differences over the window.
fn window_slope(w: &VecDeque<f64>) -> f64 {
    if w.len() < 2 {
        return 0.0;
    }
    let sum: f64 = w.iter().zip(w.iter().skip(1)).map(|(a, b)| b - a).sum();
    sum / (w.len() - 1) as f64
}

/// Runtime activation loop for one control loop.
#[derive(Debug, Clone)]
pub struct Scap {
    tuples: Vec<ControllerTuple>,
    poc: PocSpec,
    por: Polytope,
    barrier: GlobalBarrier,
    budget: UtilizationBudget,
    window: usize,
    state: Option<ScapState>,
    events: Vec<SwitchEvent>,
}

impl Scap {
    /// Backup controllers are sorted by period on construction.
    pub fn new(
        mut tuples: Vec<ControllerTuple>,
        poc: PocSpec,
        sor: Polytope,
        por: Polytope,
        budget: UtilizationBudget,
        delta_t: f64,
    ) -> Result<Self> {
        if tuples.is_empty() {
            return Err(Error::Precondition("at least one backup controller is required".into()));
        }
        if !(delta_t > 0.0) {
            return Err(Error::InvalidArgument("recovery deadline must be positive".into()));
        }
        if por.dim() != sor.dim() || tuples.iter().any(|t| t.bsc.qlf.nrows() != sor.dim()) {
            return Err(Error::Dimension("controllers and regions disagree on state dimension".into()));
        }
        for t in &tuples {
            utilization(t.bsc.wcet, t.bsc.h)?;
        }
        tuples.sort_by(|a, b| a.h().total_cmp(&b.h()));
        let h_max = tuples.iter().map(ControllerTuple::h).fold(0.0, f64::max);
        Ok(Self {
            tuples,
            poc,
            por,
            barrier: GlobalBarrier::new(sor),
            budget,
            window: window_len(delta_t, h_max),
            state: None,
            events: Vec::new(),
        })
    }

    pub fn tuples(&self) -> &[ControllerTuple] {
        &self.tuples
    }

    pub fn poc(&self) -> &PocSpec {
        &self.poc
    }

    pub fn por(&self) -> &Polytope {
        &self.por
    }

    pub fn sor(&self) -> &Polytope {
        &self.barrier.sor
    }

    pub fn barrier(&self) -> &GlobalBarrier {
        &self.barrier
    }

    pub fn budget(&self) -> &UtilizationBudget {
        &self.budget
    }

    pub fn window_len(&self) -> usize {
        self.window
    }

    pub fn state(&self) -> Option<&ScapState> {
        self.state.as_ref()
    }

    pub fn events(&self) -> &[SwitchEvent] {
        &self.events
    }

    pub fn period_of(&self, id: ControllerId) -> f64 {
        match id {
            ControllerId::Poc => self.poc.h,
            ControllerId::Bsc(i) => self.tuples[i].h(),
        }
    }

    pub fn util_of(&self, id: ControllerId) -> f64 {
        match id {
            ControllerId::Poc => self.poc.wcet / self.poc.h,
            ControllerId::Bsc(i) => self.tuples[i].util(),
        }
    }

    pub fn gain_of(&self, id: ControllerId) -> &DMatrix<f64> {
        match id {
            ControllerId::Poc => &self.poc.gain,
            ControllerId::Bsc(i) => &self.tuples[i].bsc.gain,
        }
    }

    /// Seeds the barrier window and makes the first selection.
    pub fn initialize(&mut self, x0: &DVector<f64>, t0: f64) -> Result<Decision> {
        let g = glbf(&self.barrier, x0)?;
        let (active, score) = if self.por.contains(x0) {
            (ControllerId::Poc, 0.0)
        } else {
            let i = policy_pi(&self.tuples, x0).ok_or(Error::Unrecoverable { t: t0 })?;
            (ControllerId::Bsc(i), self.score(i, x0))
        };
        self.events.clear();
        self.state = Some(ScapState {
            lb_window: std::iter::repeat_n(g, self.window).collect(),
            delta_lb: 0.0,
            dwell: DWELL,
            active,
            decay_best: score,
            notify_flag: false,
        });
        let util = self.util_of(active);
        self.events.push(SwitchEvent { t: t0, from: None, to: active, reason: SwitchReason::Initial, util, delta_lb: 0.0 });
        let u_max = self.budget.u_max(t0);
        let notify = util > u_max;
        if let Some(s) = self.state.as_mut() {
            s.notify_flag = notify;
        }
        Ok(Decision {
            t: t0,
            controller: active,
            switched: Some(SwitchReason::Initial),
            util,
            u_max,
            delta_lb: 0.0,
            glbf: g,
            notify,
        })
    }

    fn score(&self, i: usize, x: &DVector<f64>) -> f64 {
        self.tuples[i].bsc.alpha * self.tuples[i].bsc.lyapunov(x)
    }

    /// One activation step at a sampling instant of the active controller.
    pub fn step(&mut self, x: &DVector<f64>, t: f64) -> Result<Decision> {
        let g = glbf(&self.barrier, x)?;
        let mut st = self
            .state
            .take()
            .ok_or_else(|| Error::Precondition("activation loop used before initialization".into()))?;
        st.lb_window.pop_front();
        st.lb_window.push_back(g);
        st.delta_lb = window_slope(&st.lb_window);
        let util = self.util_of(st.active);
        st.dwell -= 1;
        let u_max = self.budget.u_max(t);
        let mut notify = false;
        let mut choice: Option<(ControllerId, SwitchReason)> = None;

        if self.por.contains(x) && st.dwell <= 0 {
            choice = Some((ControllerId::Poc, SwitchReason::PorEntry));
        } else if st.dwell <= 0 {
            st.decay_best = 0.0;
            if policy_pi(&self.tuples, x).is_none() {
                if self.por.contains(x) {
                    choice = Some((ControllerId::Poc, SwitchReason::PorEntry));
                } else {
                    self.state = Some(st);
                    return Err(Error::Unrecoverable { t });
                }
            } else if util <= u_max {
                let i = self.pick(x, u_max, |_| true);
                choice = Some((ControllerId::Bsc(i), SwitchReason::DecayArgmax));
            } else if st.delta_lb < 0.0 {
                let h_active = self.period_of(st.active);
                let up = |i: usize| self.tuples[i].h() > h_active;
                if self.any_safe(x, up) {
                    choice = Some((ControllerId::Bsc(self.pick(x, u_max, up)), SwitchReason::BudgetPeriodUp));
                } else {
                    choice = self.hold_or_fallback(st.active, x, &mut notify);
                }
            } else {
                notify = true;
                let i = self.pick(x, u_max, |_| true);
                choice = Some((ControllerId::Bsc(i), SwitchReason::Notify));
            }
            if let Some((ControllerId::Bsc(i), _)) = choice {
                st.decay_best = self.score(i, x);
            }
        }

        let mut switched = None;
        if let Some((next, reason)) = choice {
            if next != st.active {
                self.events.push(SwitchEvent { t, from: Some(st.active), to: next, reason, util, delta_lb: st.delta_lb });
                st.active = next;
                st.dwell = DWELL;
                switched = Some(reason);
            }
        }
        let new_util = self.util_of(st.active);
        notify |= new_util > u_max;
        st.notify_flag = notify;
        let decision = Decision {
            t,
            controller: st.active,
            switched,
            util: new_util,
            u_max,
            delta_lb: st.delta_lb,
            glbf: g,
            notify,
        };
        self.state = Some(st);
        Ok(decision)
    }

    fn any_safe(&self, x: &DVector<f64>, admit: impl Fn(usize) -> bool) -> bool {
        argmax_score(&self.tuples, x, admit).is_some()
    }

    /// Decay argmax among admitted safe tuples, preferring those whose own
    /// utilization fits the budget. The caller guarantees a safe candidate.
    fn pick(&self, x: &DVector<f64>, u_max: f64, admit: impl Fn(usize) -> bool) -> usize {
        argmax_score(&self.tuples, x, |i| admit(i) && self.tuples[i].util() <= u_max)
            .or_else(|| argmax_score(&self.tuples, x, &admit))
            .expect("a safe candidate exists")
    }

    /// Over budget with no longer-period candidate: keep a still-safe backup
    /// controller, otherwise fall back to the decay argmax.
    fn hold_or_fallback(
        &self,
        active: ControllerId,
        x: &DVector<f64>,
        notify: &mut bool,
    ) -> Option<(ControllerId, SwitchReason)> {
        match active {
            ControllerId::Bsc(i) if self.tuples[i].sbf(x) <= 0.0 => None,
            _ => {
                *notify = true;
                let i = policy_pi(&self.tuples, x).expect("a safe candidate exists");
                Some((ControllerId::Bsc(i), SwitchReason::Notify))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_box() -> Polytope {
        Polytope::symmetric_box(&[1.0, 1.0]).unwrap()
    }

    fn bsc(p: f64, level: f64, alpha: f64, h: f64) -> BackupController {
        BackupController {
            gain: DMatrix::zeros(1, 2),
            qlf: DMatrix::identity(2, 2) * p,
            level,
            alpha,
            h,
            wcet: 0.005,
            center: DVector::zeros(2),
        }
    }

    fn x(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn glbf_examples() {
        let b = GlobalBarrier::new(unit_box());
        assert_eq!(glbf(&b, &x(0.0, 0.0)).unwrap(), 0.0);
        let v = glbf(&b, &x(0.9, 0.0)).unwrap();
        assert_relative_eq!(v, -(0.1f64.ln()) - 1.9f64.ln(), epsilon = 1e-14);
        assert_relative_eq!(v, 1.66073, epsilon = 1e-5);
        assert!(matches!(glbf(&b, &x(1.0, 0.0)), Err(Error::BarrierDomain { .. })));
        assert!(glbf(&b, &x(1.0 - 1e-12, 0.0)).unwrap() > 26.0);
    }

    #[test]
    fn utilization_examples() {
        assert_relative_eq!(utilization(0.01, 0.1).unwrap(), 0.1, epsilon = 1e-15);
        assert_relative_eq!(utilization(0.005, 0.02).unwrap(), 0.25, epsilon = 1e-15);
        assert!(matches!(utilization(0.1, 0.1), Err(Error::Schedulability { .. })));
    }

    #[test]
    fn budget_schedule_lookup() {
        let b = UtilizationBudget::from_min_periods(&[(0.0, 0.06), (1.33, 0.3), (1.88, 0.06)], 0.005).unwrap();
        assert_relative_eq!(b.u_max(0.5), 0.005 / 0.06);
        assert_relative_eq!(b.u_max(1.5), 0.005 / 0.3);
        assert_relative_eq!(b.u_max(2.0), 0.005 / 0.06);
        assert!(UtilizationBudget::new(vec![(0.1, 0.5)]).is_err());
        assert!(UtilizationBudget::new(vec![(0.0, 0.5), (0.0, 0.2)]).is_err());
    }

    #[test]
    fn policy_examples() {
        // V(x) = p |x|^2 at |x|^2 = 1.
        let x0 = x(1.0, 0.0);
        let one = vec![ControllerTuple::new(bsc(1.0, 2.0, 0.3, 0.02))];
        assert_eq!(policy_pi(&one, &x0), Some(0));

        let two = vec![
            ControllerTuple::new(bsc(2.0, 3.0, 0.3, 0.02)),
            ControllerTuple::new(bsc(0.9, 1.0, 0.6, 0.04)),
        ];
        assert_eq!(policy_pi(&two, &x0), Some(0));

        let none = vec![ControllerTuple::new(bsc(2.0, 1.0, 0.3, 0.02))];
        assert_eq!(policy_pi(&none, &x0), None);
    }

    #[test]
    fn ties_prefer_longer_period() {
        let x0 = x(0.5, 0.0);
        let tied = vec![
            ControllerTuple::new(bsc(1.0, 1.0, 0.2, 0.02)),
            ControllerTuple::new(bsc(1.0, 1.0, 0.2, 0.06)),
            ControllerTuple::new(bsc(1.0, 1.0, 0.2, 0.06)),
        ];
        assert_eq!(policy_pi(&tied, &x0), Some(1));
    }

    #[test]
    fn selection_is_scale_invariant() {
        let x0 = x(0.4, -0.3);
        let base = [(1.0, 1.0, 0.3, 0.02), (3.0, 2.0, 0.2, 0.04), (0.5, 0.4, 0.5, 0.08)];
        let pick = |k: f64| {
            let t: Vec<_> = base.iter().map(|&(p, c, a, h)| ControllerTuple::new(bsc(p * k, c * k, a, h))).collect();
            policy_pi(&t, &x0)
        };
        assert_eq!(pick(1.0), pick(7.5));
        assert_eq!(pick(1.0), pick(1e-3));
    }

    fn runtime(tuples: Vec<ControllerTuple>, budget: UtilizationBudget) -> Scap {
        let poc = PocSpec::new(DMatrix::zeros(1, 2), 0.04, 0.005).unwrap();
        let por = Polytope::symmetric_box(&[0.2, 0.2]).unwrap();
        Scap::new(tuples, poc, unit_box(), por, budget, 1.0).unwrap()
    }

    #[test]
    fn poc_activates_inside_preferred_region_after_dwell() {
        let mut s = runtime(vec![ControllerTuple::new(bsc(1.0, 0.9, 0.3, 0.02))], UtilizationBudget::constant(1.0).unwrap());
        let d = s.initialize(&x(0.5, 0.0), 0.0).unwrap();
        assert_eq!(d.controller, ControllerId::Bsc(0));
        let d = s.step(&x(0.1, 0.0), 0.02).unwrap();
        assert_eq!(d.controller, ControllerId::Bsc(0), "dwell holds");
        let d = s.step(&x(0.1, 0.0), 0.04).unwrap();
        assert_eq!(d.controller, ControllerId::Poc);
        assert_eq!(d.switched, Some(SwitchReason::PorEntry));
    }

    #[test]
    fn within_budget_takes_decay_argmax() {
        let tuples = vec![
            ControllerTuple::new(bsc(1.0, 0.9, 0.1, 0.02)),
            ControllerTuple::new(bsc(1.0, 0.9, 0.4, 0.04)),
        ];
        let mut s = runtime(tuples, UtilizationBudget::constant(1.0).unwrap());
        s.initialize(&x(0.5, 0.5), 0.0).unwrap();
        assert_eq!(s.state().unwrap().active, ControllerId::Bsc(1));
        s.step(&x(0.5, 0.4), 0.04).unwrap();
        let d = s.step(&x(0.5, 0.3), 0.08).unwrap();
        assert_eq!(d.controller, ControllerId::Bsc(1));
        assert_eq!(s.state().unwrap().dwell, 0);
    }

    fn budget_scenario(lb_slope_down: bool) -> (Scap, Decision) {
        // Periods 40, 60, 80, 120 ms; the 40 ms controller has the best decay.
        let tuples = vec![
            ControllerTuple::new(bsc(1.0, 0.9, 0.5, 0.04)),
            ControllerTuple::new(bsc(1.0, 0.9, 0.1, 0.06)),
            ControllerTuple::new(bsc(1.0, 0.9, 0.2, 0.08)),
            ControllerTuple::new(bsc(1.0, 0.9, 0.3, 0.12)),
        ];
        let budget = UtilizationBudget::from_min_periods(&[(0.0, 0.06), (0.1, 0.3)], 0.005).unwrap();
        let mut s = runtime(tuples, budget);
        let start = x(0.6, 0.6);
        s.initialize(&start, 0.0).unwrap();
        // Force the 60 ms controller to be active with an expired dwell.
        if let Some(st) = s.state.as_mut() {
            st.active = ControllerId::Bsc(1);
            st.dwell = 1;
        }
        let next = if lb_slope_down { x(0.5, 0.5) } else { x(0.65, 0.6) };
        let d = s.step(&next, 0.12).unwrap();
        (s, d)
    }

    #[test]
    fn over_budget_with_falling_barrier_moves_to_longer_period() {
        let (s, d) = budget_scenario(true);
        assert!(d.delta_lb < 0.0);
        assert_eq!(d.switched, Some(SwitchReason::BudgetPeriodUp));
        let h = s.period_of(d.controller);
        assert!(h > 0.06, "selected {h}");
        assert_eq!(d.controller, ControllerId::Bsc(3));
    }

    #[test]
    fn over_budget_with_rising_barrier_notifies() {
        let (_, d) = budget_scenario(false);
        assert!(d.delta_lb >= 0.0);
        assert!(d.notify);
        assert_eq!(d.controller, ControllerId::Bsc(0));
    }

    #[test]
    fn outside_every_invariant_region_is_unrecoverable() {
        let mut s = runtime(vec![ControllerTuple::new(bsc(1.0, 0.5, 0.3, 0.02))], UtilizationBudget::constant(1.0).unwrap());
        assert!(matches!(s.initialize(&x(0.9, 0.0), 0.0), Err(Error::Unrecoverable { .. })));
    }

    #[test]
    fn window_slope_telescopes() {
        let w: VecDeque<f64> = [3.0, 2.5, 2.7, 1.0, 0.2].into_iter().collect();
        assert_relative_eq!(window_slope(&w), (0.2 - 3.0) / 4.0, epsilon = 1e-15);
        assert_eq!(window_len(2.5, 0.3), 9);
        assert_eq!(window_len(0.6, 0.3), 2);
    }
}
