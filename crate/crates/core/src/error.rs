use crate::model::{JobId, MachineId, ValidationReport};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("job {job} is not eligible on machine {machine}")]
    NotEligible { job: JobId, machine: MachineId },

    #[error("slack parameter must be positive, got {0}")]
    BadSlack(String),

    #[error("invalid instance:\n{0}")]
    InvalidInstance(ValidationReport),

    #[error("instance too large for the exact oracle: {jobs} jobs on {machines} machines (cap {cap_jobs} jobs, {cap_machines} machines)")]
    TooLarge {
        jobs: usize,
        machines: usize,
        cap_jobs: usize,
        cap_machines: usize,
    },

    #[error("bad generator spec: {0}")]
    BadSpec(String),

    #[error("bad policy spec {0:?}: expected `two-threshold` or `single-threshold:<gamma>`")]
    BadPolicy(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
