//! Reasoning engine for data-transforming procedures described by scope,
//! pre- and postconditions and safety queries.
//!
//! The crate covers schemas and instances ([`model`]), the constraint
//! language ([`constraint`]), procedures and their outcome semantics
//! ([`procedure`]), schema-level applicability ([`applicability`]),
//! conditional tables ([`ctable`]), chase-based outcome approximation and
//! planning ([`chase`]), a brute-force outcome enumerator ([`oracle`]) and
//! the workspace DSL ([`dsl`]).

pub mod applicability;
pub mod chase;
pub mod constraint;
pub mod ctable;
pub mod dsl;
pub mod error;
pub mod model;
pub mod oracle;
pub mod procedure;

pub use applicability::{
    min_schema, sequence_applicability, AlgorithmFailure, MinSchema, RequirementPair, SchemaRequirement,
    SequenceApplicability,
};
pub use chase::{
    apply_alter_schema, approximate_outcomes, certain_boolean_cq, chase_safe_scope, exact_scoped_representation,
    outcomes_nonempty, plan_search, ready_for, ApproximationResult, PlanLimits,
};
pub use constraint::{
    evaluate_query, is_compatible, satisfies, BoolCondition, Compatible, ConjunctiveQuery, ConstantAtom, Constraint,
    Egd, NamedAtom, Query, Shape, StructureConstraint, Term, Tgd,
};
pub use ctable::{
    apply_valuation, enumerate_minimal, rep_contains, scoped_rep_contains, CTuple, Cell, ConditionalInstance,
    ElementCondition, LabeledNull, Limits, ScopedConditionalInstance, Valuation,
};
pub use dsl::{DslError, Workspace};
pub use error::{Error, Result};
pub use oracle::{compare_with_chase, enumerate_outcomes, Budget, ChaseComparison, OracleOptions};
pub use procedure::{
    check_outcome, classify, instantiate_template, is_applicable, is_possible_outcome, is_safe_sequence, residual_query,
    Class, Failure, InsertSource, OutcomeChecker, Procedure, ResidualMode, Template,
};
pub use model::{
    instance_extends, instance_union, named_view, schema_extends, unnamed_view, AttributeName, AttributeSet, Instance,
    NamedTuple, RelationName, Schema, Tuple, Value, VariableName,
};
