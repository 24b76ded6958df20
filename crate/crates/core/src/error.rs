use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inconsistent or unsupported run description.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// `I - zA` has a vanishing diagonal entry.
    #[error("singular stage matrix (1 - z*a[{stage}][{stage}] = 0)")]
    SingularStage { stage: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    /// The CFL time step fell below the configured floor.
    #[error("time step {dt:e} s fell below floor {floor:e} s at t = {time} s (limiting dof {dof} at ({x}, {y}))")]
    StiffnessCollapse {
        dt: f64,
        floor: f64,
        time: f64,
        dof: usize,
        x: f64,
        y: f64,
    },

    /// The step budget ran out before the stop time.
    #[error("step limit {steps} reached at t = {time} s")]
    StepLimit { steps: usize, time: f64 },

    #[error("non-finite value in {quantity} at dof {dof} (step {step}, t = {time} s)")]
    NonFinite {
        quantity: &'static str,
        dof: usize,
        step: usize,
        time: f64,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures produced by the numerics rather than by the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StiffnessCollapse { .. }
                | Error::StepLimit { .. }
                | Error::NonFinite { .. }
                | Error::SingularStage { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
