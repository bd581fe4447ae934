use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdpError {
    /// A documented precondition of an operation was not met.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("degenerate rectangle: floor({rho} * {s}) = 0")]
    DegenerateRectangle { rho: String, s: u32 },

    #[error("invalid probability {value} for {name}: must lie in [0, 1]")]
    InvalidProbability { name: &'static str, value: f64 },

    #[error("no finite preimage: {0} = 1 maps to an infinite time")]
    NoFinitePreimage(&'static str),

    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = SdpError> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> SdpError {
    SdpError::ContractViolation(msg.into())
}

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(SdpError::InvalidProbability { name, value })
    }
}
