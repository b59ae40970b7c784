//! Multi-rate closed-loop simulation with the activation loop in the loop.
//!
//! The plant is integrated in deviation coordinates with classical RK4 at a
//! fine step; inputs are held between the active controller's sampling
//! instants, which all lie on a common grid of the shortest period.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scap::{ControllerId, Decision, Scap, SwitchEvent};
use crate::synth::synth_kalman;
use crate::sysmodel::{discretize, LinearPlant, Polytope};

/// Relative tolerance for "all periods are multiples of the base period".
const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub t_end: f64,
    pub fine_step: f64,
    pub noise_on: bool,
    pub seed: u64,
    /// Independent random stream within `seed`.
    pub stream: u64,
    pub observer_on: bool,
    pub x0: DVector<f64>,
    /// Initial estimate; the true initial state when absent.
    pub xhat0: Option<DVector<f64>>,
    pub deadline: f64,
    /// Impulsive state disturbances `(t, dx)`, applied at the first grid
    /// instant at or after `t`.
    pub kicks: Vec<(f64, DVector<f64>)>,
}

impl SimConfig {
    pub fn new(x0: DVector<f64>, deadline: f64) -> Self {
        Self {
            t_end: deadline,
            fine_step: 1e-3,
            noise_on: false,
            seed: 0,
            stream: 0,
            observer_on: false,
            x0,
            xhat0: None,
            deadline,
            kicks: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Outcome {
    Recovered { at: f64 },
    DeadlineMissed,
    SafetyViolated { at: f64 },
    /// The estimate left every invariant region outside the preferred region.
    Unrecoverable { at: f64 },
}

/// State at one sampling instant of the active controller.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub t: f64,
    pub x: DVector<f64>,
    pub xhat: DVector<f64>,
    pub u: DVector<f64>,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub estimates: Option<Vec<DVector<f64>>>,
    pub inputs: Vec<DVector<f64>>,
    pub active_controller: Vec<ControllerId>,
    pub periods: Vec<f64>,
    pub utilizations: Vec<f64>,
    pub glbf_values: Vec<f64>,
    pub samples: Vec<SampleRecord>,
    pub switch_events: Vec<SwitchEvent>,
    pub outcome: Outcome,
    /// First safe-region exit, if any, regardless of the outcome.
    pub violated_at: Option<f64>,
    /// Grid instants at which kicks were applied.
    pub kicked_at: Vec<f64>,
    /// Set when the supervisor stopped the run after the outcome was decided.
    pub halted_at: Option<f64>,
}

impl SimTrace {
    pub fn recovered_at(&self) -> Option<f64> {
        match self.outcome {
            Outcome::Recovered { at } => Some(at),
            _ => None,
        }
    }

    /// Grid-rate trace as CSV, periods in milliseconds.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |x| x.len());
        let p = self.inputs.first().map_or(0, |u| u.len());
        let mut out = String::from("t");
        for i in 0..n {
            let _ = write!(out, ",x_{}", i + 1);
        }
        if self.estimates.is_some() {
            for i in 0..n {
                let _ = write!(out, ",xhat_{}", i + 1);
            }
        }
        for i in 0..p {
            let _ = write!(out, ",u_{}", i + 1);
        }
        out.push_str(",controller_id,period_ms,glbf,util\n");
        for k in 0..self.times.len() {
            let _ = write!(out, "{}", self.times[k]);
            for v in self.states[k].iter() {
                let _ = write!(out, ",{v}");
            }
            if let Some(est) = &self.estimates {
                for v in est[k].iter() {
                    let _ = write!(out, ",{v}");
                }
            }
            for v in self.inputs[k].iter() {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(
                out,
                ",{},{},{},{}",
                self.active_controller[k],
                self.periods[k] * 1e3,
                self.glbf_values[k],
                self.utilizations[k]
            );
        }
        out
    }

    pub fn summary(&self) -> SimSummary {
        SimSummary {
            outcome: self.outcome,
            recovered_at: self.recovered_at(),
            violated_at: self.violated_at,
            halted_at: self.halted_at,
            samples: self.samples.len(),
            notify_raised: self.samples.iter().any(|s| s.decision.notify),
            switch_events: self.switch_events.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub outcome: Outcome,
    pub recovered_at: Option<f64>,
    pub violated_at: Option<f64>,
    pub halted_at: Option<f64>,
    pub samples: usize,
    pub notify_raised: bool,
    pub switch_events: Vec<SwitchEvent>,
}

fn rk4(phi: &DMatrix<f64>, drive: &DVector<f64>, x: &DVector<f64>, dt: f64) -> DVector<f64> {
    let f = |x: &DVector<f64>| phi * x + drive;
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (dt / 2.0)));
    let k3 = f(&(x + &k2 * (dt / 2.0)));
    let k4 = f(&(x + &k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

fn gaussian(rng: &mut ChaCha8Rng, factor: &DMatrix<f64>) -> DVector<f64> {
    let xi = DVector::from_fn(factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    factor * xi
}

/// Lower factor of a PSD covariance; zero when the covariance vanishes.
fn noise_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    if cov.amax() == 0.0 {
        return DMatrix::zeros(cov.nrows(), cov.ncols());
    }
    let eig = crate::linalg::symmetrize(cov).symmetric_eigen();
    let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
}

/// Base grid period and the grid multiple of every controller period.
fn sampling_grid(scap: &Scap) -> Result<(f64, HashMap<ControllerId, u64>)> {
    let mut ids = vec![ControllerId::Poc];
    ids.extend((0..scap.tuples().len()).map(ControllerId::Bsc));
    let base = ids.iter().map(|&id| scap.period_of(id)).fold(f64::INFINITY, f64::min);
    let mut ticks = HashMap::new();
    for id in ids {
        let ratio = scap.period_of(id) / base;
        let m = ratio.round();
        if (ratio - m).abs() > GRID_TOL * ratio {
            return Err(Error::InvalidArgument(format!(
                "period {} s of {id} is not a multiple of the base period {base} s",
                scap.period_of(id)
            )));
        }
        ticks.insert(id, m as u64);
    }
    Ok((base, ticks))
}

/// Discrete (A, B, L) for one sampling period.
type Predictor = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>);

/// Runs one closed-loop scenario.
pub fn simulate(plant: &LinearPlant, scap: &Scap, config: &SimConfig) -> Result<SimTrace> {
    let mut scap = scap.clone();
    let n = plant.n_states();
    if config.x0.len() != n {
        return Err(Error::Dimension("initial state does not match the plant".into()));
    }
    let (base, ticks) = sampling_grid(&scap)?;
    if !(config.fine_step > 0.0) || config.fine_step > base / 20.0 + 1e-15 {
        return Err(Error::InvalidArgument(format!(
            "fine step {} s must be positive and at most {} s",
            config.fine_step,
            base / 20.0
        )));
    }
    if config.kicks.iter().any(|(_, dx)| dx.len() != n) {
        return Err(Error::Dimension("kick does not match the plant".into()));
    }
    if config.kicks.iter().any(|(t, _)| !(*t > 0.0)) {
        return Err(Error::InvalidArgument("kicks must come after the initial instant".into()));
    }
    if config.t_end < config.deadline {
        return Err(Error::InvalidArgument("simulation must cover the recovery deadline".into()));
    }
    let substeps = (base / config.fine_step).round().max(1.0) as usize;
    let dt = base / substeps as f64;
    let horizon = (config.t_end / base + 1e-9).floor() as u64;

    let sor = scap.sor().clone();
    let por: Polytope = scap.por().clone();
    if !sor.strictly_contains(&config.x0) {
        return Err(Error::Precondition("initial state is not strictly inside the safe region".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(config.stream);
    let w_factor = noise_factor(&(&plant.q_w * dt));
    let v_factor = noise_factor(&plant.r_v);

    // Per-period discrete model for the predictor.
    let mut predictors: HashMap<u64, Predictor> = HashMap::new();
    if config.observer_on {
        for &m in ticks.values() {
            if predictors.contains_key(&m) {
                continue;
            }
            let lp = discretize(plant, m as f64 * base)?;
            let l = synth_kalman(&lp, &plant.c_out, &(&plant.q_w * lp.h), &plant.r_v)?;
            predictors.insert(m, (lp.a, lp.b, l));
        }
    }

    let mut x = config.x0.clone();
    let mut xhat = config.xhat0.clone().unwrap_or_else(|| config.x0.clone());
    // Estimate used at the latest sampling instant, held for the trace.
    let mut held = xhat.clone();
    let used = |x: &DVector<f64>, xhat: &DVector<f64>| if config.observer_on { xhat.clone() } else { x.clone() };

    let first = match scap.initialize(&used(&x, &xhat), 0.0) {
        Ok(d) => d,
        Err(Error::Unrecoverable { .. }) => {
            return Err(Error::Precondition(
                "initial state lies outside the preferred region and every invariant region".into(),
            ))
        }
        Err(Error::BarrierDomain { .. }) => {
            return Err(Error::Precondition("initial estimate is outside the safe region".into()))
        }
        Err(e) => return Err(e),
    };

    let mut trace = SimTrace {
        times: Vec::new(),
        states: Vec::new(),
        estimates: config.observer_on.then(Vec::new),
        inputs: Vec::new(),
        active_controller: Vec::new(),
        periods: Vec::new(),
        utilizations: Vec::new(),
        glbf_values: Vec::new(),
        samples: Vec::new(),
        switch_events: Vec::new(),
        outcome: Outcome::DeadlineMissed,
        violated_at: None,
        kicked_at: Vec::new(),
        halted_at: None,
    };
    let mut kicks = config.kicks.clone();
    kicks.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut kicks = kicks.into_iter().peekable();
    let mut outcome: Option<Outcome> = None;
    let mut pending = Some(first);
    let mut next_sample = 0u64;
    let mut u = DVector::zeros(plant.n_inputs());
    let mut active = ControllerId::Poc;

    'grid: for tick in 0..=horizon {
        let t = tick as f64 * base;
        while let Some((_, dx)) = kicks.next_if(|(tk, _)| *tk <= t + 1e-9 * base) {
            x += dx;
            trace.kicked_at.push(t);
            if !sor.strictly_contains(&x) {
                trace.violated_at = Some(t);
                outcome = Some(Outcome::SafetyViolated { at: t });
                break 'grid;
            }
        }
        if tick == next_sample {
            let decision = match pending.take() {
                Some(d) => d,
                None => match scap.step(&used(&x, &xhat), t) {
                    Ok(d) => d,
                    Err(Error::Unrecoverable { .. }) | Err(Error::BarrierDomain { .. }) => {
                        trace.halted_at = Some(t);
                        outcome.get_or_insert(Outcome::Unrecoverable { at: t });
                        break 'grid;
                    }
                    Err(e) => return Err(e),
                },
            };
            active = decision.controller;
            let y = &plant.c_out * &x + if config.noise_on { gaussian(&mut rng, &v_factor) } else { DVector::zeros(plant.n_outputs()) };
            let feedback = used(&x, &xhat);
            u = &plant.u_ref - scap.gain_of(active) * (feedback - &plant.x_ref);
            let m = ticks[&active];
            held = xhat.clone();
            trace.samples.push(SampleRecord { t, x: x.clone(), xhat: xhat.clone(), u: u.clone(), decision });
            if outcome.is_none() && por.contains(&x) && t <= config.deadline + 1e-12 {
                outcome = Some(Outcome::Recovered { at: t });
            }
            if let Some((a, b, l)) = predictors.get(&m) {
                xhat = a * &xhat + b * &u + l * (y - &plant.c_out * &xhat);
            }
            next_sample = tick + m;
        }
        if outcome.is_none() && t > config.deadline + 1e-12 {
            outcome = Some(Outcome::DeadlineMissed);
        }

        trace.times.push(t);
        trace.states.push(x.clone());
        if let Some(est) = trace.estimates.as_mut() {
            est.push(held.clone());
        }
        trace.inputs.push(u.clone());
        trace.active_controller.push(active);
        trace.periods.push(scap.period_of(active));
        trace.utilizations.push(scap.util_of(active));
        trace.glbf_values.push(scap.barrier().value(&x).unwrap_or(f64::INFINITY));
        if tick == horizon {
            break;
        }

        let drive = &plant.gamma * &u;
        for s in 0..substeps {
            x = rk4(&plant.phi, &drive, &x, dt);
            if config.noise_on {
                x += gaussian(&mut rng, &w_factor);
            }
            if !sor.strictly_contains(&x) {
                let at = t + (s + 1) as f64 * dt;
                trace.violated_at = Some(at);
                outcome = Some(Outcome::SafetyViolated { at });
                break 'grid;
            }
        }
    }
    trace.switch_events = scap.events().to_vec();
    trace.outcome = outcome.unwrap_or(Outcome::DeadlineMissed);
    Ok(trace)
}

/// Where batch initial states are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum X0Sampler {
    /// Safe region minus preferred region, inside at least one invariant region.
    Recoverable,
    /// Preferred region only.
    Preferred,
}

pub const MAX_REJECTIONS: usize = 1_000_000;

/// Rejection sampling over the bounding box of the safe region.
pub fn sample_x0(scap: &Scap, sampler: X0Sampler, rng: &mut ChaCha8Rng) -> Result<DVector<f64>> {
    let (lo, hi) = scap
        .sor()
        .as_box()
        .ok_or_else(|| Error::Geometry("initial-state sampling needs a box-shaped safe region".into()))?;
    for _ in 0..MAX_REJECTIONS {
        let x = DVector::from_fn(lo.len(), |i, _| rng.random_range(lo[i]..hi[i]));
        if !scap.sor().strictly_contains(&x) {
            continue;
        }
        let ok = match sampler {
            X0Sampler::Preferred => scap.por().contains(&x),
            X0Sampler::Recoverable => {
                !scap.por().contains(&x) && scap.tuples().iter().any(|t| t.sbf(&x) <= 0.0)
            }
        };
        if ok {
            return Ok(x);
        }
    }
    Err(Error::Geometry(format!("sampler found no admissible state in {MAX_REJECTIONS} draws")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub x0: Vec<f64>,
    pub outcome: Outcome,
    pub halted_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub n_runs: usize,
    pub recovery_rate: f64,
    pub max_recovery_time: f64,
    pub violations_count: usize,
    /// Runs the supervisor stopped after they recovered.
    pub halted_count: usize,
    pub runs: Vec<RunResult>,
}

/// Independent runs from sampled initial states. Run `i` draws its initial
/// state from stream `2 i` and its noise from stream `2 i + 1` of `base.seed`.
pub fn batch_recovery(
    plant: &LinearPlant,
    scap: &Scap,
    n_runs: usize,
    sampler: X0Sampler,
    base: &SimConfig,
) -> Result<BatchSummary> {
    let runs = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(base.seed);
            rng.set_stream(2 * i as u64);
            let x0 = sample_x0(scap, sampler, &mut rng)?;
            let cfg = SimConfig { x0: x0.clone(), xhat0: None, stream: 2 * i as u64 + 1, ..base.clone() };
            let trace = simulate(plant, scap, &cfg)?;
            Ok(RunResult { x0: x0.iter().copied().collect(), outcome: trace.outcome, halted_at: trace.halted_at })
        })
        .collect::<Result<Vec<_>>>()?;
    let recovered: Vec<f64> = runs
        .iter()
        .filter_map(|r| match r.outcome {
            Outcome::Recovered { at } => Some(at),
            _ => None,
        })
        .collect();
    Ok(BatchSummary {
        n_runs,
        recovery_rate: if n_runs == 0 { 0.0 } else { recovered.len() as f64 / n_runs as f64 },
        max_recovery_time: recovered.iter().copied().fold(0.0, f64::max),
        violations_count: runs.iter().filter(|r| matches!(r.outcome, Outcome::SafetyViolated { .. })).count(),
        halted_count: runs.iter().filter(|r| matches!(r.outcome, Outcome::Recovered { .. }) && r.halted_at.is_some()).count(),
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayAudit {
    pub passed: bool,
    pub checked: usize,
    pub skipped: usize,
    /// Smallest `((1 - alpha) V(x_k) + tol V(x_k) - V(x_{k+1})) / V(x_k)`.
    pub worst_margin: f64,
    /// Sampling instant and controller of the first failing step.
    pub failure: Option<(f64, ControllerId)>,
}

pub const DECAY_AUDIT_TOL: f64 = 1e-7;

/// Checks the certified per-step decay over consecutive sampling instants
/// governed by a backup controller. Pairs straddling a kick are skipped.
pub fn check_decay_trace(trace: &SimTrace, scap: &Scap) -> DecayAudit {
    let mut audit = DecayAudit { passed: true, checked: 0, skipped: 0, worst_margin: f64::INFINITY, failure: None };
    for pair in trace.samples.windows(2) {
        let (k, k1) = (&pair[0], &pair[1]);
        let kicked = trace.kicked_at.iter().any(|&tk| tk > k.t && tk <= k1.t);
        let ControllerId::Bsc(i) = k.decision.controller else {
            audit.skipped += 1;
            continue;
        };
        if kicked {
            audit.skipped += 1;
            continue;
        };
        let bsc = &scap.tuples()[i].bsc;
        let v0 = bsc.lyapunov(&k.x);
        let v1 = bsc.lyapunov(&k1.x);
        audit.checked += 1;
        if v0 <= 0.0 {
            if v1 > 0.0 && audit.failure.is_none() {
                audit.passed = false;
                audit.failure = Some((k.t, k.decision.controller));
            }
            continue;
        }
        let margin = ((1.0 - bsc.alpha) * v0 + DECAY_AUDIT_TOL * v0 - v1) / v0;
        audit.worst_margin = audit.worst_margin.min(margin);
        if margin < 0.0 && audit.failure.is_none() {
            audit.passed = false;
            audit.failure = Some((k.t, k.decision.controller));
        }
    }
    audit
}
