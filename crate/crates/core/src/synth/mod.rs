//! Convex synthesis of backup safe controllers.

pub mod bsc;
pub mod lmi;
pub mod riccati;
pub mod sdp;

pub use bsc::{
    calibrate_level_set, candidate_periods, solve_bsc, sweep_periods, verify_certificate, AlphaSearch,
    BackupController, BscOptions, BscSolution, CertificateReport, PeriodDiagnostic, PeriodStatus, SweepResult,
};
pub use riccati::{synth_kalman, synth_poc};
pub use sdp::{SolveStatus, SolverOptions, SolverReport};
