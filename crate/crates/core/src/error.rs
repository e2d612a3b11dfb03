use thiserror::Error;

/// Errors raised by the dynamics, projection and billiard routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("mass factor must be non-zero")]
    ZeroMass,
    #[error("wall radius must be positive, got {0}")]
    NegativeRadius(f64),
    #[error("centrifugal strength must be non-negative, got {0}")]
    NegativeBeta(f64),
    #[error("inconsistent wall: {0}")]
    InconsistentWall(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("position too close to the center (r = {0:e})")]
    SingularPosition(f64),
    #[error("elements are only defined for the unperturbed Kepler field (beta = {0})")]
    PerturbedModel(f64),
    #[error("Kepler equation did not converge (M = {mean_anomaly}, e = {eccentricity})")]
    NonConvergence { mean_anomaly: f64, eccentricity: f64 },
    #[error("orbit reaches the center within the requested interval")]
    CollisionInsideInterval,
    #[error("state is not on a collision orbit (|L| = {0:e})")]
    NotACollisionOrbit(f64),
    #[error("point lies too close to a pole of the spherical field")]
    PoleSingularity,
    #[error("point is not in the open southern hemisphere (q_z = {0})")]
    NotInSouthHemisphere(f64),
    #[error("point is on the wrong side of the projecting plane (<h, q> = {0})")]
    WrongHalfPlane(f64),
    #[error("state is not on the wall (distance {0:e})")]
    NotOnWall(f64),
    #[error("point at the origin has no conformal image")]
    OriginSingularity,
    #[error("line through the origin: image is the pair of coordinate axes")]
    DegenerateLineThroughOrigin,
    #[error("no wall hit or escape certificate before t_max = {0}")]
    Undetermined(f64),
    #[error("integrator failed at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
