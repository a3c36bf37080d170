use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaasError {
    #[error("network build error: {0}")]
    Build(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("value out of domain: {0}")]
    Domain(String),
    #[error("operator {operator}: vacant fleet time {vacant} is not positive")]
    SingularService { operator: String, vacant: f64 },
    #[error("flows diverged on link {link}")]
    Divergence { link: String },
    #[error("state error: {0}")]
    State(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("pricing infeasible: {0}")]
    Infeasible(String),
    #[error("negative cycle reachable from node {0}")]
    NegativeCycle(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, MaasError>;
