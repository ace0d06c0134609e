use thiserror::Error;

pub type Result<T> = std::result::Result<T, CrmError>;

#[derive(Debug, Error)]
pub enum CrmError {
    #[error("domain error: {0}")]
    Domain(String),

    /// Wrist point outside the reachable annulus of the two proximal links.
    #[error("target unreachable: wrist point lies {excess:.6e} m outside the workspace")]
    Unreachable { excess: f64 },

    #[error("jacobian near singular (sigma_min = {sigma_min:.3e}, condition number = {condition:.3e})")]
    SingularJacobian { sigma_min: f64, condition: f64 },

    #[error("grasp matrix is rank deficient (rank {rank}, expected {expected})")]
    DegenerateGrasp { rank: usize, expected: usize },

    #[error("closed-chain constraint system is singular")]
    SingularConstraintSystem,

    #[error("integration diverged at t = {t:.6} s")]
    Diverged { t: f64 },

    #[error("storage depleted: supply voltage must be positive, got {0} V")]
    StorageDepleted(f64),

    #[error("invalid gains: {0}")]
    InvalidGains(String),

    #[error("effectiveness undefined: non-regenerative consumption is zero")]
    UndefinedEffectiveness,

    #[error("grid oracle accepts at most 2 free variables, got {0}")]
    TooManyFreeVariables(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid gain schedule: {0}")]
    Schedule(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
