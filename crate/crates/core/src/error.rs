use thiserror::Error;

/// Errors raised by the estimation, dynamics and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CioError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("rotor allocation infeasible: squared speed {value:.3e} on rotor {rotor}")]
    InfeasibleAllocation { rotor: usize, value: f64 },
    #[error("assembled mass matrix is singular (condition estimate {condition:.3e})")]
    SingularInertia { condition: f64 },
    #[error("non-finite value in {what}")]
    NonFiniteState { what: &'static str },
    #[error("contact wrench admits no real solution (discriminant {discriminant:.3e})")]
    NoRealSolution { discriminant: f64 },
    #[error("contact direction unobservable (a^2 + b^2 = {norm:.3e})")]
    DegenerateWrench { norm: f64 },
    #[error("contact force magnitude {magnitude:.3e} N is below the usable threshold")]
    ZeroForce { magnitude: f64 },
    #[error("innovation covariance ill-conditioned (condition estimate {condition:.3e})")]
    IllConditionedInnovation { condition: f64 },
    #[error("reference and contact force are parallel; cone axis undefined")]
    ParallelDegenerate,
    #[error("desired acceleration {magnitude:.3} m/s^2 too small to define a thrust direction")]
    DegenerateAcceleration { magnitude: f64 },
    #[error("body tunneled through an obstacle (penetration {depth:.3} m)")]
    TunnelingDetected { depth: f64 },
    #[error("simulation failed at t = {t:.3} s: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<CioError>,
    },
}

impl CioError {
    pub fn at(self, t: f64) -> Self {
        match self {
            e @ CioError::AtTime { .. } => e,
            e => CioError::AtTime {
                t,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CioError>;
