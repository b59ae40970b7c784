//! Benchmark definitions and the scenario document shared by the built-in
//! data file (TOML) and user configs (JSON).

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::from_rows;
use crate::simkit::SimConfig;
use crate::scap::{ControllerTuple, PocSpec, Scap, UtilizationBudget};
use crate::synth::{synth_poc, sweep_periods, BackupController, BscOptions, SweepResult};
use crate::sysmodel::{discretize, LinearPlant, Polytope};

const BUILTIN: &str = include_str!("../data/benchmarks.toml");

/// Process and measurement noise used when a scenario gives none.
pub const DEFAULT_NOISE: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    pub plant: PlantDoc,
    pub sor: RegionDoc,
    pub por: RegionDoc,
    pub periods: PeriodsDoc,
    pub deadline_s: f64,
    #[serde(default)]
    pub deadlines: Vec<f64>,
    #[serde(default)]
    pub budget: Vec<BudgetDoc>,
    #[serde(default)]
    pub wcets: WcetDoc,
    #[serde(default)]
    pub poc: Option<PocDoc>,
    #[serde(default)]
    pub scenario: Option<RunDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantDoc {
    pub phi: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    #[serde(default)]
    pub c: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub q_w: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub r_v: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub x_ref: Option<Vec<f64>>,
    #[serde(default)]
    pub u_ref: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegionDoc {
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Halfspaces {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodsDoc {
    pub h0: f64,
    pub h_max: f64,
}

/// One budget segment, given either as a utilization bound or as the
/// shortest admissible period.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetDoc {
    pub t: f64,
    #[serde(default)]
    pub u: Option<f64>,
    #[serde(default)]
    pub min_period: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WcetDoc {
    pub default: f64,
    #[serde(default)]
    pub poc: Option<f64>,
    /// Per-period overrides.
    #[serde(default)]
    pub periods: Vec<PeriodWcet>,
}

impl Default for WcetDoc {
    fn default() -> Self {
        Self { default: crate::synth::bsc::DEFAULT_WCET, poc: None, periods: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodWcet {
    pub h: f64,
    pub wcet: f64,
}

/// Primary controller: discrete LQR at `period` with diagonal weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PocDoc {
    pub period: f64,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
}

/// Default simulation run: initial state, horizon and gusts.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDoc {
    pub x0: Vec<f64>,
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub kicks: Vec<KickDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KickDoc {
    pub t: f64,
    pub dx: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub x0: DVector<f64>,
    pub t_end: Option<f64>,
    pub kicks: Vec<(f64, DVector<f64>)>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    from_rows(rows).ok_or_else(|| Error::Config(format!("{what} is not a rectangular non-empty matrix")))
}

/// Regions are centered at the operating point, which every certificate
/// and the runtime feedback refer to.
fn region(doc: &RegionDoc, what: &str, x_ref: &DVector<f64>) -> Result<Polytope> {
    let poly = match doc {
        RegionDoc::Box { lo, hi } => Polytope::from_box(lo, hi, Some(x_ref.as_slice())),
        RegionDoc::Halfspaces { a, b } => Polytope::new(matrix(a, what)?, DVector::from_column_slice(b), x_ref.clone()),
    };
    poly.map_err(|e| Error::Config(format!("{what}: {e}")))
}

/// Fully resolved scenario.
#[derive(Debug, Clone)]
pub struct BenchmarkDef {
    pub name: String,
    pub description: String,
    pub plant: LinearPlant,
    pub sor: Polytope,
    pub por: Polytope,
    pub h0: f64,
    pub h_max: f64,
    pub deadline: f64,
    pub deadlines: Vec<f64>,
    pub budget: UtilizationBudget,
    pub wcet: f64,
    pub wcet_overrides: Vec<(f64, f64)>,
    pub poc_period: f64,
    pub poc_wcet: f64,
    pub poc_q: DMatrix<f64>,
    pub poc_r: DMatrix<f64>,
    pub scenario: Option<ScenarioRun>,
}

impl BenchmarkDef {
    pub fn from_doc(name: &str, doc: &ScenarioDoc) -> Result<Self> {
        let phi = matrix(&doc.plant.phi, "plant.phi")?;
        let gamma = matrix(&doc.plant.gamma, "plant.gamma")?;
        let n = phi.nrows();
        let p = gamma.ncols();
        let c_out = match &doc.plant.c {
            Some(c) => matrix(c, "plant.c")?,
            None => DMatrix::identity(n, n),
        };
        let m = c_out.nrows();
        let q_w = match &doc.plant.q_w {
            Some(q) => matrix(q, "plant.q_w")?,
            None => DMatrix::identity(n, n) * DEFAULT_NOISE,
        };
        let r_v = match &doc.plant.r_v {
            Some(r) => matrix(r, "plant.r_v")?,
            None => DMatrix::identity(m, m) * DEFAULT_NOISE,
        };
        let x_ref = doc.plant.x_ref.clone().map_or_else(|| DVector::zeros(n), DVector::from_vec);
        let u_ref = doc.plant.u_ref.clone().map_or_else(|| DVector::zeros(p), DVector::from_vec);
        if x_ref.len() != n || u_ref.len() != p {
            return Err(Error::Config("operating point does not match the plant".into()));
        }
        let drift = (&phi * &x_ref + &gamma * &u_ref).amax();
        if drift > 1e-9 * (1.0 + x_ref.amax()) {
            return Err(Error::Config(format!("(x_ref, u_ref) is not an equilibrium (drift {drift:e})")));
        }
        let plant = LinearPlant::new(phi, gamma, c_out, q_w, r_v, x_ref.clone(), u_ref)
            .map_err(|e| Error::Config(format!("plant: {e}")))?;
        let sor = region(&doc.sor, "sor", &x_ref)?;
        let por = region(&doc.por, "por", &x_ref)?;
        if sor.dim() != n || por.dim() != n {
            return Err(Error::Config("region dimensions do not match the plant".into()));
        }
        if !sor.strictly_contains_polytope(&por)? {
            return Err(Error::Config("preferred region is not strictly inside the safe region".into()));
        }

        let PeriodsDoc { h0, h_max } = doc.periods;
        if !(h0 > 0.0) || h_max < h0 {
            return Err(Error::Config(format!("invalid period range [{h0}, {h_max}]")));
        }
        let steps = (h_max / h0).round();
        if (h_max - steps * h0).abs() > 1e-12 {
            return Err(Error::Config(format!("h0 = {h0} does not divide h_max = {h_max}")));
        }
        if !(doc.deadline_s > 0.0) {
            return Err(Error::Config("deadline_s must be positive".into()));
        }
        let mut deadlines = doc.deadlines.clone();
        if !deadlines.iter().any(|d| (d - doc.deadline_s).abs() < 1e-12) {
            deadlines.push(doc.deadline_s);
        }
        deadlines.sort_by(f64::total_cmp);

        let wcet = doc.wcets.default;
        let budget = if doc.budget.is_empty() {
            UtilizationBudget::constant(1.0)?
        } else {
            let schedule = doc
                .budget
                .iter()
                .map(|b| match (b.u, b.min_period) {
                    (Some(u), None) => Ok((b.t, u)),
                    (None, Some(h)) => crate::scap::utilization(wcet, h).map(|u| (b.t, u)),
                    _ => Err(Error::Config("each budget entry needs exactly one of u or min_period".into())),
                })
                .collect::<Result<Vec<_>>>()?;
            UtilizationBudget::new(schedule).map_err(|e| Error::Config(format!("budget: {e}")))?
        };
        let wcet_overrides: Vec<(f64, f64)> = doc.wcets.periods.iter().map(|w| (w.h, w.wcet)).collect();
        for &(h, w) in std::iter::once(&(h0, wcet)).chain(&wcet_overrides) {
            if !(w > 0.0 && w < h) {
                return Err(Error::Config(format!("wcet {w} s is not below period {h} s")));
            }
        }

        let (poc_period, poc_q, poc_r) = match &doc.poc {
            Some(pd) => {
                if pd.q.len() != n || pd.r.len() != p {
                    return Err(Error::Config("poc weights do not match the plant".into()));
                }
                (
                    pd.period,
                    DMatrix::from_diagonal(&DVector::from_vec(pd.q.clone())),
                    DMatrix::from_diagonal(&DVector::from_vec(pd.r.clone())),
                )
            }
            None => (h0, DMatrix::identity(n, n), DMatrix::identity(p, p)),
        };
        let poc_wcet = doc.wcets.poc.unwrap_or(wcet);
        if !(poc_wcet < poc_period) {
            return Err(Error::Config("poc wcet must be below its period".into()));
        }

        let scenario = match &doc.scenario {
            Some(run) => {
                if run.x0.len() != n || run.kicks.iter().any(|k| k.dx.len() != n) {
                    return Err(Error::Config("scenario vectors do not match the plant".into()));
                }
                Some(ScenarioRun {
                    x0: DVector::from_vec(run.x0.clone()),
                    t_end: run.t_end,
                    kicks: run.kicks.iter().map(|k| (k.t, DVector::from_vec(k.dx.clone()))).collect(),
                })
            }
            None => None,
        };

        Ok(Self {
            name: doc.name.clone().unwrap_or_else(|| name.to_string()),
            description: doc.description.clone().unwrap_or_default(),
            plant,
            sor,
            por,
            h0,
            h_max,
            deadline: doc.deadline_s,
            deadlines,
            budget,
            wcet,
            wcet_overrides,
            poc_period,
            poc_wcet,
            poc_q,
            poc_r,
            scenario,
        })
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let doc: ScenarioDoc =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_doc("custom", &doc)
    }

    /// Execution time of the backup task running at period `h`.
    pub fn wcet_for(&self, h: f64) -> f64 {
        self.wcet_overrides
            .iter()
            .find(|(p, _)| (p - h).abs() <= 1e-9 * h)
            .map_or(self.wcet, |&(_, w)| w)
    }

    pub fn poc(&self) -> Result<PocSpec> {
        let lp = discretize(&self.plant, self.poc_period)?;
        let gain = synth_poc(&lp, &self.poc_q, &self.poc_r)?;
        PocSpec::new(gain, self.poc_period, self.poc_wcet)
    }

    /// Period sweep at `deadline`, with per-period execution times applied.
    pub fn sweep(&self, deadline: f64, opts: &BscOptions) -> Result<SweepResult> {
        let mut result = sweep_periods(&self.plant, &self.sor, &self.por, deadline, self.h0, self.h_max, opts)?;
        for c in &mut result.controllers {
            c.wcet = self.wcet_for(c.h);
        }
        Ok(result)
    }

    /// Simulation settings of the shipped scenario, if any, at `deadline`.
    pub fn scenario_config(&self, deadline: f64) -> Option<SimConfig> {
        self.scenario.as_ref().map(|run| {
            let mut cfg = SimConfig::new(run.x0.clone(), deadline);
            cfg.t_end = run.t_end.unwrap_or(deadline).max(deadline);
            cfg.kicks = run.kicks.clone();
            cfg
        })
    }

    pub fn scap(&self, controllers: &[BackupController], deadline: f64) -> Result<Scap> {
        Scap::new(
            controllers.iter().cloned().map(ControllerTuple::new).collect(),
            self.poc()?,
            self.sor.clone(),
            self.por.clone(),
            self.budget.clone(),
            deadline,
        )
    }
}

fn builtin_docs() -> Result<BTreeMap<String, ScenarioDoc>> {
    toml::from_str(BUILTIN).map_err(|e| Error::Config(format!("built-in benchmark data: {e}")))
}

pub fn builtin_names() -> Vec<String> {
    builtin_docs().map(|d| d.into_keys().collect()).unwrap_or_default()
}

pub fn builtin_benchmark(name: &str) -> Result<BenchmarkDef> {
    let docs = builtin_docs()?;
    match docs.get(name) {
        Some(doc) => BenchmarkDef::from_doc(name, doc),
        None if name == "custom" => Err(Error::Config("the custom benchmark is defined through --config".into())),
        None => Err(Error::Config(format!(
            "unknown benchmark '{name}' (available: {})",
            docs.keys().cloned().collect::<Vec<_>>().join(", ")
        ))),
    }
}
