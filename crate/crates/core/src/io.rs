//! Controller-set files and feasibility tables.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{from_rows, to_rows};
use crate::synth::{BackupController, PeriodDiagnostic, PeriodStatus};

/// One backup controller, matrices row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerDoc {
    pub h: f64,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub c: f64,
    pub alpha: f64,
    pub wcet: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSetDoc {
    pub benchmark: String,
    pub deadline_s: f64,
    pub center: Vec<f64>,
    pub controllers: Vec<ControllerDoc>,
}

impl ControllerSetDoc {
    pub fn new(benchmark: &str, deadline: f64, controllers: &[BackupController]) -> Result<Self> {
        let center = controllers
            .first()
            .map(|c| c.center.clone())
            .ok_or_else(|| Error::InvalidArgument("a controller set needs at least one controller".into()))?;
        if controllers.iter().any(|c| c.center != center) {
            return Err(Error::InvalidArgument("controllers do not share one expansion point".into()));
        }
        Ok(Self {
            benchmark: benchmark.to_string(),
            deadline_s: deadline,
            center: center.iter().copied().collect(),
            controllers: controllers
                .iter()
                .map(|c| ControllerDoc {
                    h: c.h,
                    k: to_rows(&c.gain),
                    p: to_rows(&c.qlf),
                    c: c.level,
                    alpha: c.alpha,
                    wcet: c.wcet,
                })
                .collect(),
        })
    }

    pub fn to_controllers(&self) -> Result<Vec<BackupController>> {
        let n = self.center.len();
        let center = DVector::from_vec(self.center.clone());
        self.controllers
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let bad = |what: &str| Error::Config(format!("controller {i}: {what}"));
                let gain = from_rows(&d.k).ok_or_else(|| bad("K is not rectangular"))?;
                let qlf = from_rows(&d.p).ok_or_else(|| bad("P is not rectangular"))?;
                if qlf.shape() != (n, n) || gain.ncols() != n || gain.nrows() == 0 {
                    return Err(bad("matrix shapes do not match the center"));
                }
                Ok(BackupController {
                    gain,
                    qlf,
                    level: d.c,
                    alpha: d.alpha,
                    h: d.h,
                    wcet: d.wcet,
                    center: center.clone(),
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("controller file: {e}")))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// One cell of the period x deadline feasibility table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityRow {
    pub h: f64,
    pub deadline_s: f64,
    pub feasible: bool,
    pub alpha_ref: Option<f64>,
    pub alpha: Option<f64>,
    pub note: String,
}

impl FeasibilityRow {
    pub fn from_diagnostic(deadline: f64, d: &PeriodDiagnostic) -> Self {
        let (feasible, alpha, note) = match &d.status {
            PeriodStatus::Feasible { alpha, .. } => (true, Some(*alpha), String::new()),
            PeriodStatus::DeadlineInfeasible => (false, None, "deadline shorter than one period".to_string()),
            PeriodStatus::Infeasible { reason } => (false, None, reason.clone()),
        };
        Self { h: d.h, deadline_s: deadline, feasible, alpha_ref: d.alpha_ref, alpha, note }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn feasibility_csv(rows: &[FeasibilityRow]) -> String {
    let mut out = String::from("period_ms,deadline_s,feasible,alpha_ref,alpha,note\n");
    for r in rows {
        let note = r.note.replace('"', "'");
        let _ = writeln!(
            out,
            "{},{},{},{},{},\"{note}\"",
            r.h * 1e3,
            r.deadline_s,
            r.feasible,
            opt(r.alpha_ref),
            opt(r.alpha)
        );
    }
    out
}
