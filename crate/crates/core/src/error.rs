use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("graph must have at least one node")]
    EmptyGraph,
    #[error("node {node} out of range for a graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("self-loop at node {0}; self links are implicit")]
    SelfLoop(usize),
    #[error("graph is not strongly connected")]
    NotStronglyConnected,
    #[error("edge list line {line}: {msg}")]
    GraphParse { line: usize, msg: String },
    #[error("trajectory too short: need {needed} samples, have {have}")]
    TrajectoryTooShort { needed: usize, have: usize },
    #[error("Hankel dimension {k} needs {needed} sequence entries, have {have}")]
    InsufficientData { k: usize, needed: usize, have: usize },
    #[error("degenerate initial condition at node {node}: {reason}")]
    Degenerate { node: usize, reason: String },
    #[error("final value denominator vanishes at node {node}")]
    DivideByZero { node: usize },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("stacked matrix requires steady-phase weights")]
    InitialPhaseWeights,
    #[error("zero denominator in substituted weight (node {node})")]
    ZeroDenominator { node: usize },
    #[error("discovery failed after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: usize, last: Box<Error> },
    #[error("step {t} requires the discovery cache from step 0")]
    MissingCache { t: usize },
    #[error("step 0 called on a session that already ran discovery")]
    CacheAlreadyPresent,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
