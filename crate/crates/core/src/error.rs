use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Why an event search stopped without finding its event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum EventFailure {
    /// The orbit left the region where the built-in system is meaningful.
    Escaped,
    /// `max_time` was exhausted.
    TimeBudget,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown system `{0}` (expected champagne, pendulum, hydrogen or focus-focus)")]
    UnknownSystem(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("point violates the phase-space constraints (residual {residual:e})")]
    ConstraintViolation { residual: f64 },
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("conserved-quantity drift {drift:e} exceeds the abort limit {limit:e} at t = {t}")]
    DriftExceeded { drift: f64, limit: f64, t: f64 },
    #[error("event not found ({reason:?}) before t = {t}")]
    EventNotFound { reason: EventFailure, t: f64 },
    #[error("value (h, j) = ({h}, {j}) is not reachable by the fiber-point solver: {region}")]
    NotSolvable { h: f64, j: f64, region: String },
    #[error("value (h, j) = ({h}, {j}) is critical")]
    CriticalValue { h: f64, j: f64 },
    #[error("path comes within {distance:e} of the polar locus at parameter {param} (safety distance {d0:e})")]
    NearPole { param: f64, distance: f64, d0: f64 },
    #[error("fiber over (h, j) = ({h}, {j}) meets the polar locus; the integral is undefined there")]
    FiberMeetsPolarLocus { h: f64, j: f64 },
    #[error("first return is not defined for the non-compact fibers of {0}")]
    NotCompact(String),
    #[error("loop meets the polar image tangentially at s = {s}")]
    TangentialCrossing { s: f64 },
    #[error("residue loop at s = {s} has winding certificate {winding}")]
    Certificate { s: f64, winding: i64 },
    #[error("rotation form `{0}` is not transversal to F: F restricted to its polar set has rank {1}")]
    NotTransversal(String, usize),
    #[error("jump at s = {s} of size {d} is not within 0.05*2pi of a nonzero multiple of 2pi")]
    JumpNotResolvable { s: f64, d: f64 },
    #[error("residue {value} at s = {s} is not within 0.02*2pi of a multiple of 2pi")]
    ResidueNotInteger { s: f64, value: f64 },
    #[error("monodromy estimate {value} is not within 0.02 of an integer")]
    NotInteger { value: f64 },
    #[error("methods disagree: variation gives k = {variation}, residues give k = {residues}")]
    MethodDisagreement { variation: i64, residues: i64 },
    #[error("fiber over (h, j) = ({h}, {j}) does not enter the ball")]
    NotEnteringBall { h: f64, j: f64 },
    #[error("monodromy numbers along the m ladder are not constant: {0:?}")]
    LadderUnstable(Vec<i64>),
    #[error("invalid loop: {0}")]
    InvalidLoop(String),
    #[error("quadrature did not reach the requested accuracy (estimate {estimate:e})")]
    Quadrature { estimate: f64 },
}

impl Error {
    /// Short machine-readable tag used by the CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnknownSystem(_) => "unknown-system",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::ConstraintViolation { .. } => "constraint-violation",
            Error::StepUnderflow { .. } => "step-underflow",
            Error::DriftExceeded { .. } => "drift-exceeded",
            Error::EventNotFound { .. } => "event-not-found",
            Error::NotSolvable { .. } => "not-solvable",
            Error::CriticalValue { .. } => "critical-value",
            Error::NearPole { .. } => "near-pole",
            Error::FiberMeetsPolarLocus { .. } => "fiber-meets-polar-locus",
            Error::NotCompact(_) => "not-compact",
            Error::TangentialCrossing { .. } => "tangential-crossing",
            Error::Certificate { .. } => "certificate",
            Error::NotTransversal(..) => "not-transversal",
            Error::JumpNotResolvable { .. } => "jump-not-resolvable",
            Error::ResidueNotInteger { .. } => "residue-not-integer",
            Error::NotInteger { .. } => "not-integer",
            Error::MethodDisagreement { .. } => "method-disagreement",
            Error::NotEnteringBall { .. } => "not-entering-ball",
            Error::LadderUnstable(_) => "ladder-unstable",
            Error::InvalidLoop(_) => "invalid-loop",
            Error::Quadrature { .. } => "quadrature",
        }
    }

    /// Usage-type errors are the caller's fault; everything else is numerical.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::UnknownSystem(_) | Error::InvalidParameter(_) | Error::InvalidLoop(_)
        )
    }
}
