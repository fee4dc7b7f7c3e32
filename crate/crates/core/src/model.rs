//! Value domain, schemas and instances.
//!
//! Attribute names are totally ordered by their token (byte-wise
//! lexicographic). Instances store every tuple in the *unnamed* perspective:
//! values are listed in attribute order, so a relation over
//! `{facility, patInsur, timestp}` keeps rows as `(facility, patInsur, timestp)`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prefix of reserved constants produced by canonical enumeration and the
/// oracle. The DSL lexer never produces tokens starting with `@`.
pub const FRESH_PREFIX: &str = "@fresh";

/// A domain value.
///
/// `Null` is the SQL-style unknown marker that may appear inside ordinary
/// instances; it never equals a constant. Labeled nulls of conditional tables
/// live in [`crate::ctable`].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "text", rename_all = "snake_case")]
pub enum Value {
    Constant(String),
    Null(String),
}

impl Value {
    pub fn constant(text: impl Into<String>) -> Self {
        Value::Constant(text.into())
    }

    /// The anonymous null marker written `null` in the DSL.
    pub fn null() -> Self {
        Value::Null(String::new())
    }

    /// Reserved fresh constant number `index`.
    pub fn fresh(index: usize) -> Self {
        Value::Constant(format!("{FRESH_PREFIX}{index}"))
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null(_))
    }

    pub fn is_fresh(&self) -> bool {
        matches!(self, Value::Constant(c) if c.starts_with(FRESH_PREFIX))
    }

    pub fn text(&self) -> &str {
        match self {
            Value::Constant(t) | Value::Null(t) => t,
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::constant(s)
    }
}

impl From<i64> for Value {
    fn from(n: i64) -> Self {
        Value::constant(n.to_string())
    }
}

/// True when `text` can be printed without quotes and read back as the same
/// constant.
pub(crate) fn is_bare_token(text: &str) -> bool {
    if text.is_empty() || text == "null" || text == "true" {
        return false;
    }
    if text.starts_with(FRESH_PREFIX) {
        return text[FRESH_PREFIX.len()..].chars().all(|c| c.is_ascii_digit());
    }
    if let Some(canon) = canonical_number(text) {
        return canon == text;
    }
    let mut chars = text.chars();
    let first = chars.next().unwrap();
    (first.is_ascii_alphabetic() || first == '_') && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Canonical text of a numeric literal: integers lose leading zeros and a
/// `+` sign; decimals are kept verbatim.
pub(crate) fn canonical_number(text: &str) -> Option<String> {
    let body = text.strip_prefix('-').unwrap_or(text);
    if body.is_empty() || !body.chars().all(|c| c.is_ascii_digit() || c == '.') {
        return None;
    }
    if body.chars().filter(|&c| c == '.').count() > 1 || body.starts_with('.') || body.ends_with('.') {
        return None;
    }
    if body.contains('.') {
        return Some(text.to_string());
    }
    let digits = body.trim_start_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };
    if text.starts_with('-') && digits != "0" {
        Some(format!("-{digits}"))
    } else {
        Some(digits.to_string())
    }
}

pub(crate) fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Constant(t) if is_bare_token(t) => f.write_str(t),
            Value::Constant(t) => f.write_str(&quote(t)),
            Value::Null(t) if t.is_empty() => f.write_str("null"),
            Value::Null(t) => write!(f, "null({})", quote(t)),
        }
    }
}

macro_rules! name_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(std::sync::Arc<str>);

        impl $name {
            pub fn new(token: impl Into<String>) -> Self {
                let token = token.into();
                debug_assert!(!token.is_empty());
                $name(token.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name::new(s)
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name::new(s)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

name_type!(
    /// Attribute name; the derived `Ord` is the global attribute order.
    AttributeName
);
name_type!(RelationName);
name_type!(VariableName);

pub type AttributeSet = BTreeSet<AttributeName>;

/// Unnamed tuple: values in attribute order of its relation.
pub type Tuple = Vec<Value>;

/// Named tuple: attribute to value.
pub type NamedTuple = BTreeMap<AttributeName, Value>;

/// Partial mapping from relation names to attribute sets.
///
/// Schemas read from user input never map a relation to an empty set. The
/// engine may create a zero-arity relation internally when a procedure
/// requires a relation (`R[*]`) without naming any attribute for it.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    relations: BTreeMap<RelationName, AttributeSet>,
}

impl Schema {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a schema from `(relation, attributes)` pairs, rejecting empty or
    /// duplicated attribute lists.
    pub fn from_relations<R, A, I, J>(relations: I) -> Result<Self>
    where
        R: Into<RelationName>,
        A: Into<AttributeName>,
        I: IntoIterator<Item = (R, J)>,
        J: IntoIterator<Item = A>,
    {
        let mut schema = Schema::new();
        for (rel, attrs) in relations {
            let rel = rel.into();
            let mut set = AttributeSet::new();
            for a in attrs {
                let a = a.into();
                if !set.insert(a.clone()) {
                    return Err(Error::DuplicateAttribute { relation: rel, attribute: a });
                }
            }
            if set.is_empty() {
                return Err(Error::EmptyAttributeSet { relation: rel });
            }
            schema.relations.insert(rel, set);
        }
        Ok(schema)
    }

    /// Inserts or replaces a relation without validation.
    pub fn set(&mut self, rel: RelationName, attrs: AttributeSet) {
        self.relations.insert(rel, attrs);
    }

    pub fn remove_relation(&mut self, rel: &RelationName) -> Option<AttributeSet> {
        self.relations.remove(rel)
    }

    /// Adds attributes to a relation, creating it if needed.
    pub fn extend_relation(&mut self, rel: RelationName, attrs: impl IntoIterator<Item = AttributeName>) {
        self.relations.entry(rel).or_default().extend(attrs);
    }

    pub fn get(&self, rel: &RelationName) -> Option<&AttributeSet> {
        self.relations.get(rel)
    }

    pub fn contains(&self, rel: &RelationName) -> bool {
        self.relations.contains_key(rel)
    }

    pub fn relations(&self) -> impl Iterator<Item = (&RelationName, &AttributeSet)> {
        self.relations.iter()
    }

    pub fn relation_names(&self) -> impl Iterator<Item = &RelationName> {
        self.relations.keys()
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    /// Number of relations plus number of attributes.
    pub fn size(&self) -> usize {
        self.relations.values().map(|a| 1 + a.len()).sum()
    }

    /// `self` assigns at least the attributes `base` assigns to each of its
    /// relations.
    pub fn extends(&self, base: &Schema) -> bool {
        base.relations.iter().all(|(rel, attrs)| match self.relations.get(rel) {
            Some(mine) => attrs.is_subset(mine),
            None => false,
        })
    }

    pub fn union(&self, other: &Schema) -> Result<Schema> {
        let mut out = self.clone();
        for (rel, attrs) in &other.relations {
            match out.relations.get(rel) {
                Some(mine) if mine != attrs => {
                    return Err(Error::AttributeMismatch { relation: rel.clone() })
                }
                Some(_) => {}
                None => {
                    out.relations.insert(rel.clone(), attrs.clone());
                }
            }
        }
        Ok(out)
    }

    /// Position of each attribute of `rel` in unnamed tuples.
    pub fn positions(&self, rel: &RelationName) -> Option<BTreeMap<&AttributeName, usize>> {
        self.relations
            .get(rel)
            .map(|attrs| attrs.iter().enumerate().map(|(i, a)| (a, i)).collect())
    }

    pub fn position(&self, rel: &RelationName, attr: &AttributeName) -> Option<usize> {
        self.relations.get(rel).and_then(|attrs| attrs.iter().position(|a| a == attr))
    }
}

pub fn schema_extends(candidate: &Schema, base: &Schema) -> bool {
    candidate.extends(base)
}

/// A database instance over a schema.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Instance {
    schema: Schema,
    data: BTreeMap<RelationName, BTreeSet<Tuple>>,
}

impl Instance {
    /// Empty instance: every relation of `schema` is present with no tuples.
    pub fn new(schema: Schema) -> Self {
        let data = schema.relation_names().map(|r| (r.clone(), BTreeSet::new())).collect();
        Instance { schema, data }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// Inserts an unnamed tuple given in attribute order.
    pub fn insert(&mut self, rel: &RelationName, tuple: Tuple) -> Result<bool> {
        let attrs = self.schema.get(rel).ok_or_else(|| Error::UnknownRelation(rel.clone()))?;
        if attrs.len() != tuple.len() {
            return Err(Error::ArityMismatch { relation: rel.clone(), expected: attrs.len(), found: tuple.len() });
        }
        Ok(self.data.entry(rel.clone()).or_default().insert(tuple))
    }

    pub fn insert_named(&mut self, rel: &RelationName, tuple: &NamedTuple) -> Result<bool> {
        let attrs = self.schema.get(rel).ok_or_else(|| Error::UnknownRelation(rel.clone()))?;
        if attrs.len() != tuple.len() || !attrs.iter().all(|a| tuple.contains_key(a)) {
            return Err(Error::DomainMismatch { relation: rel.clone() });
        }
        let row = tuple.values().cloned().collect();
        self.insert(rel, row)
    }

    pub fn remove(&mut self, rel: &RelationName, tuple: &Tuple) -> bool {
        self.data.get_mut(rel).is_some_and(|rows| rows.remove(tuple))
    }

    /// Tuples of `rel`; empty for relations outside the schema.
    pub fn tuples(&self, rel: &RelationName) -> &BTreeSet<Tuple> {
        static EMPTY: BTreeSet<Tuple> = BTreeSet::new();
        self.data.get(rel).unwrap_or(&EMPTY)
    }

    pub fn relations(&self) -> impl Iterator<Item = (&RelationName, &BTreeSet<Tuple>)> {
        self.data.iter()
    }

    pub fn tuple_count(&self) -> usize {
        self.data.values().map(BTreeSet::len).sum()
    }

    /// Named view of a stored tuple.
    pub fn named(&self, rel: &RelationName, tuple: &Tuple) -> NamedTuple {
        self.schema
            .get(rel)
            .map(|attrs| attrs.iter().cloned().zip(tuple.iter().cloned()).collect())
            .unwrap_or_default()
    }

    /// All values occurring in the instance.
    pub fn active_domain(&self) -> BTreeSet<Value> {
        self.data.values().flatten().flatten().cloned().collect()
    }

    /// `self` extends `base`: its schema extends `base`'s and every tuple of
    /// `base` has a tuple in `self` agreeing with it on `base`'s attributes.
    pub fn extends(&self, base: &Instance) -> bool {
        if !self.schema.extends(&base.schema) {
            return false;
        }
        base.data.iter().all(|(rel, rows)| {
            if rows.is_empty() {
                return true;
            }
            let projected = self.project(rel, base.schema.get(rel).unwrap());
            rows.iter().all(|t| projected.contains(t))
        })
    }

    /// Projection of `rel` onto `attrs` (which must be a subset of the
    /// relation's attributes), as unnamed tuples in attribute order.
    pub fn project(&self, rel: &RelationName, attrs: &AttributeSet) -> HashSet<Tuple> {
        let Some(mine) = self.schema.get(rel) else {
            return HashSet::new();
        };
        let idx: Vec<usize> = mine
            .iter()
            .enumerate()
            .filter(|(_, a)| attrs.contains(*a))
            .map(|(i, _)| i)
            .collect();
        self.tuples(rel).iter().map(|t| idx.iter().map(|&i| t[i].clone()).collect()).collect()
    }

    pub fn union(&self, other: &Instance) -> Result<Instance> {
        let schema = self.schema.union(&other.schema)?;
        let mut out = Instance::new(schema);
        for inst in [self, other] {
            for (rel, rows) in &inst.data {
                out.data.entry(rel.clone()).or_default().extend(rows.iter().cloned());
            }
        }
        Ok(out)
    }

    /// Applies `f` to every value.
    pub fn map_values(&self, mut f: impl FnMut(&Value) -> Value) -> Instance {
        let data = self
            .data
            .iter()
            .map(|(rel, rows)| (rel.clone(), rows.iter().map(|t| t.iter().map(&mut f).collect()).collect()))
            .collect();
        Instance { schema: self.schema.clone(), data }
    }

    /// Checks the conformance invariant: every stored relation is in the
    /// schema and every tuple has the schema arity.
    pub fn check(&self) -> Result<()> {
        for (rel, rows) in &self.data {
            let attrs = self.schema.get(rel).ok_or_else(|| Error::UnknownRelation(rel.clone()))?;
            if let Some(bad) = rows.iter().find(|t| t.len() != attrs.len()) {
                return Err(Error::ArityMismatch {
                    relation: rel.clone(),
                    expected: attrs.len(),
                    found: bad.len(),
                });
            }
        }
        Ok(())
    }
}

pub fn instance_extends(candidate: &Instance, base: &Instance) -> bool {
    candidate.extends(base)
}

pub fn instance_union(a: &Instance, b: &Instance) -> Result<Instance> {
    a.union(b)
}

/// Lists the values of `tuple` in attribute order of `schema(rel)`.
pub fn unnamed_view(tuple: &NamedTuple, rel: &RelationName, schema: &Schema) -> Result<Tuple> {
    let attrs = schema.get(rel).ok_or_else(|| Error::UnknownRelation(rel.clone()))?;
    if attrs.len() != tuple.len() || !attrs.iter().all(|a| tuple.contains_key(a)) {
        return Err(Error::DomainMismatch { relation: rel.clone() });
    }
    Ok(attrs.iter().map(|a| tuple[a].clone()).collect())
}

/// Inverse of [`unnamed_view`].
pub fn named_view(tuple: &[Value], rel: &RelationName, schema: &Schema) -> Result<NamedTuple> {
    let attrs = schema.get(rel).ok_or_else(|| Error::UnknownRelation(rel.clone()))?;
    if attrs.len() != tuple.len() {
        return Err(Error::ArityMismatch { relation: rel.clone(), expected: attrs.len(), found: tuple.len() });
    }
    Ok(attrs.iter().cloned().zip(tuple.iter().cloned()).collect())
}

pub(crate) fn write_row<T: fmt::Display>(f: &mut fmt::Formatter<'_>, row: &[T]) -> fmt::Result {
    f.write_str("(")?;
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{v}")?;
    }
    f.write_str(")")
}

/// Canonical rendering: one block per relation, header in attribute order,
/// then one row per line in tuple order.
impl fmt::Display for Instance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (rel, attrs) in self.schema.relations() {
            write!(f, "{rel}(")?;
            for (i, a) in attrs.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{a}")?;
            }
            writeln!(f, ")")?;
            for row in self.tuples(rel) {
                f.write_str("  ")?;
                write_row(f, row)?;
                writeln!(f)?;
            }
        }
        Ok(())
    }
}
