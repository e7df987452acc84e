use thiserror::Error;

use crate::plant::ValveRegime;

pub type Result<T> = std::result::Result<T, BrakeError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BrakeError {
    #[error("radicand {value} is not positive in case {regime:?}; state is outside the operating envelope")]
    SingularRadicand { regime: ValveRegime, value: f64 },

    #[error("requested pole {re}{im:+}i is not strictly stable")]
    UnstablePoleRequest { re: f64, im: f64 },

    #[error("pole set is not closed under complex conjugation")]
    ConjugacyViolation,

    #[error("{what} = {value} lies outside the operating envelope")]
    EnvelopeViolation { what: &'static str, value: f64 },

    #[error("integration stage failed at t = {t}: {source}")]
    StageEvaluationFailure {
        t: f64,
        #[source]
        source: Box<BrakeError>,
    },

    #[error("simulation diverged at t = {t} ({detail})")]
    SimulationDiverged { t: f64, detail: String },

    #[error("controller failed at t = {t}: singular state estimate persisted for {steps} steps")]
    ControllerFailure { t: f64, steps: usize },

    #[error("segment {segment} has {samples} samples; at least 10 are required")]
    SegmentTooShort { segment: usize, samples: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}
