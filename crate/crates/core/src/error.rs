use thiserror::Error;

use crate::model::{AttributeName, RelationName};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the reasoning engine.
///
/// Negative verdicts (a failed precondition, an instance that is not an
/// outcome, an empty approximation) are values, not errors.
#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("relation `{relation}` has differing attribute sets in the two operands")]
    AttributeMismatch { relation: RelationName },

    #[error("tuple for `{relation}` is not defined on exactly the schema attributes")]
    DomainMismatch { relation: RelationName },

    #[error("relation `{relation}` must have at least one attribute")]
    EmptyAttributeSet { relation: RelationName },

    #[error("attribute `{attribute}` listed twice for `{relation}`")]
    DuplicateAttribute { relation: RelationName, attribute: AttributeName },

    #[error("relation `{0}` is not in the schema")]
    UnknownRelation(RelationName),

    #[error("tuple of arity {found} for `{relation}`, expected {expected}")]
    ArityMismatch { relation: RelationName, expected: usize, found: usize },

    #[error("not compatible with the schema: {0}")]
    Incompatible(String),

    #[error("valuation is undefined on null ?{0}")]
    PartialValuation(String),

    #[error("budget exceeded: {what} (limit {limit})")]
    BudgetExceeded { what: &'static str, limit: usize },

    #[error("procedure `{procedure}` has a non-structural precondition")]
    UnsupportedPrecondition { procedure: String },

    #[error("procedure `{procedure}` is outside the supported class: {reason}")]
    UnsupportedClass { procedure: String, reason: String },

    #[error("procedure is not a safe-scope procedure")]
    NotSafeScope,

    #[error("conditional instance is not positive")]
    NotPositive,

    #[error("procedure is not an alter-schema procedure")]
    NotAlterSchema,

    #[error("sequence is not a safe sequence")]
    NotSafeSequence,

    #[error("malformed parameters for template `{template}`: {reason}")]
    MalformedParams { template: &'static str, reason: String },

    #[error("query is not boolean")]
    NotBoolean,
}
