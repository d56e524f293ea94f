//! Workbench for verified sparse attention: synthetic workloads, method
//! sweeps, empirical guarantee checks and the supporting statistical studies.

pub mod ablation;
pub mod error;
pub mod methods;
pub mod report;
pub mod sweep;
pub mod tightness;
pub mod verify;
pub mod walk;
pub mod workload;

pub use ablation::{budget_ablation, AblationConfig, AblationRecord};
pub use error::{HarnessError, Result};
pub use methods::{run_method, LshConfig, Method, MethodRun};
pub use report::{emit_csv, read_records, TrialRecord};
pub use sweep::{run_sweep, SweepConfig};
pub use tightness::{tightness_study, Population, TightnessConfig, TightnessSummary};
pub use verify::{pearson, verify_guarantee, EpsSummary, VerificationReport, VerifyConfig};
pub use walk::{analytic_mse, random_walk_mse};
pub use workload::{gen_workload, Dist, WorkloadSpec};
