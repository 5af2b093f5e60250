use thiserror::Error;

use crate::domain::{Node, SpaceId};

/// Errors produced by the learning machinery.
///
/// Most of these are recoverable inside the episode loop: a failed episode is
/// logged with the competence floor and the loop moves on.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty concatenation")]
    EmptyConcatenation,
    #[error("primitive has dimension {got}, expected {expected}")]
    PrimitiveDimension { expected: usize, got: usize },
    #[error("primitive parameter {index} = {value} outside [-1, 1]")]
    PrimitiveOutOfBounds { index: usize, value: f64 },
    #[error("compound action must contain at least one primitive")]
    EmptyAction,
    #[error("invalid outcome space: {0}")]
    InvalidSpace(String),
    #[error("unknown outcome space {0}")]
    UnknownSpace(SpaceId),
    #[error("outcome in {space} has dimension {got}, expected {expected}")]
    OutcomeDimension {
        space: SpaceId,
        expected: usize,
        got: usize,
    },
    #[error("outcome spaces do not match: {0} vs {1}")]
    SpaceMismatch(SpaceId, SpaceId),
    #[error("invalid procedure: {0}")]
    InvalidProcedure(String),
    #[error("unknown hierarchy node {0}")]
    UnknownNode(Node),
    #[error("malformed episode record: {0}")]
    MalformedRecord(String),
    #[error("no data")]
    NoData,
    #[error("resolution depth exceeded")]
    DepthExceeded,
    #[error("cyclic decomposition through {0}")]
    CyclicDecomposition(SpaceId),
    #[error("controllable is not an input of the task model for {0}")]
    IncompatibleControllable(SpaceId),
    #[error("strategy {0} is not active for this variant")]
    InactiveStrategy(String),
    #[error("procedure unavailable")]
    ProcedureUnavailable,
    #[error("teacher has an empty repertoire")]
    EmptyRepertoire,
    #[error("teacher {0} does not provide {1} demonstrations")]
    WrongTeacherKind(String, &'static str),
    #[error("no active affordance outputs into {0}")]
    NoAffordance(SpaceId),
    #[error("plan failed after {steps} steps")]
    PlanFailed { steps: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
