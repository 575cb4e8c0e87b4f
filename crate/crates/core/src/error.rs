use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("invalid budget distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid number {0:?}")]
    InvalidNumber(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: u64, residual: f64 },

    #[error("{side} bid {bid} exceeds available budget {available} in round {round}")]
    IllegalBid {
        side: crate::sim::Side,
        round: usize,
        bid: f64,
        available: f64,
    },

    #[error("{side} chose vertex {vertex} which is not a successor of {from} in round {round}")]
    IllegalSuccessor {
        side: crate::sim::Side,
        round: usize,
        from: String,
        vertex: usize,
    },

    #[error("wallet {wallet} policy bid {bid} above its balance {balance}")]
    WalletOverdraft { wallet: usize, bid: f64, balance: f64 },

    #[error("state space too large: {0}")]
    StateSpace(String),

    #[error("fixed policy has no action at {0}")]
    Granularity(String),
}

impl Error {
    /// True for failures that stem from bad input rather than the numerics.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::NonConvergence { .. })
    }
}
