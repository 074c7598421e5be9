use thiserror::Error;

use crate::synthesis::Case;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("point outside decomposition domain: component {index} = {value} not in [{lo}, {hi}]")]
    OutsideDomain {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("box has {0} dimensions, vertex enumeration is limited to 20")]
    TooManyVertices(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("LP backend failure: {0}")]
    Lp(String),

    #[error("C2*G2 has rank {rank} < {cols} columns: attack cancellation is impossible")]
    RankDeficient { rank: usize, cols: usize },

    #[error("outer-approximation slope A_g is singular (condition number {0:e})")]
    SingularSlope(f64),

    #[error("synthesis infeasible for case {case}: the comparison pair (A~, C~) is likely not detectable")]
    Infeasible { case: Case },

    #[error("SDP backend failure: {0}")]
    Solver(String),

    #[error("state framer left the state space at step {k} (component {index}: [{lo}, {hi}])")]
    DomainEscape {
        k: usize,
        index: usize,
        lo: f64,
        hi: f64,
    },

    #[error("framer diverged to a non-finite value at step {0}")]
    Diverged(usize),

    #[error("input framers need at least one completed step")]
    NoInputYet,

    #[error("true state left the state space at step {k} (component {index} = {value})")]
    ScenarioEscape { k: usize, index: usize, value: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
