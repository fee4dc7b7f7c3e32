//! Queries, dependencies and structure constraints, with compatibility,
//! evaluation and satisfaction over instances.
//!
//! Queries use the named perspective: an atom `R(A:x, B:y)` only mentions the
//! attributes it needs, so the same query can run against any schema where
//! `R` has at least `A` and `B`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttributeName, Instance, RelationName, Schema, Tuple, Value, VariableName};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Var(VariableName),
    Const(Value),
}

impl Term {
    pub fn var(name: &str) -> Self {
        Term::Var(VariableName::from(name))
    }

    pub fn as_var(&self) -> Option<&VariableName> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

/// `R(A1:t1, ..., Ak:tk)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NamedAtom {
    pub relation: RelationName,
    pub bindings: Vec<(AttributeName, Term)>,
}

impl NamedAtom {
    pub fn new(relation: impl Into<RelationName>, bindings: Vec<(AttributeName, Term)>) -> Self {
        NamedAtom { relation: relation.into(), bindings }
    }

    /// Convenience constructor where every binding is a variable.
    pub fn vars(relation: &str, pairs: &[(&str, &str)]) -> Self {
        NamedAtom::new(relation, pairs.iter().map(|(a, v)| (AttributeName::from(*a), Term::var(v))).collect())
    }

    pub fn attributes(&self) -> BTreeSet<AttributeName> {
        self.bindings.iter().map(|(a, _)| a.clone()).collect()
    }

    pub fn variables(&self) -> impl Iterator<Item = &VariableName> {
        self.bindings.iter().filter_map(|(_, t)| t.as_var())
    }

    pub fn is_compatible(&self, schema: &Schema) -> bool {
        match schema.get(&self.relation) {
            Some(attrs) => self.bindings.iter().all(|(a, _)| attrs.contains(a)),
            None => false,
        }
    }

    fn has_distinct_attributes(&self) -> bool {
        self.attributes().len() == self.bindings.len()
    }
}

impl fmt::Display for NamedAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.relation)?;
        for (i, (a, t)) in self.bindings.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}:{t}")?;
        }
        f.write_str(")")
    }
}

/// `C(val:x)`: holds for non-null values only.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConstantAtom {
    pub variable: VariableName,
}

impl fmt::Display for ConstantAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C(val:{})", self.variable)
    }
}

/// `exists z . phi(z, y)` with free variables `y` in a fixed order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConjunctiveQuery {
    pub existential: BTreeSet<VariableName>,
    pub atoms: Vec<NamedAtom>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constant_atoms: Vec<ConstantAtom>,
    pub free: Vec<VariableName>,
}

impl ConjunctiveQuery {
    /// Builds a query whose free variables are all variables outside
    /// `existential`, in order of first occurrence.
    pub fn new(
        atoms: Vec<NamedAtom>,
        constant_atoms: Vec<ConstantAtom>,
        existential: impl IntoIterator<Item = VariableName>,
    ) -> Self {
        let existential: BTreeSet<_> = existential.into_iter().collect();
        let mut q = ConjunctiveQuery { existential, atoms, constant_atoms, free: Vec::new() };
        q.free = q.variables_in_order().into_iter().filter(|v| !q.existential.contains(v)).collect();
        q
    }

    /// Builds a query with an explicit free-variable list; every other
    /// variable is existential.
    pub fn with_free(atoms: Vec<NamedAtom>, constant_atoms: Vec<ConstantAtom>, free: Vec<VariableName>) -> Self {
        let mut q = ConjunctiveQuery { existential: BTreeSet::new(), atoms, constant_atoms, free };
        q.existential = q.variables_in_order().into_iter().filter(|v| !q.free.contains(v)).collect();
        q
    }

    pub fn boolean(atoms: Vec<NamedAtom>) -> Self {
        let mut q = ConjunctiveQuery::new(atoms, Vec::new(), []);
        q.existential.extend(q.free.drain(..));
        q
    }

    /// Distinct variables in order of first occurrence (atoms first, then
    /// constant atoms).
    pub fn variables_in_order(&self) -> Vec<VariableName> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        let all = self.atoms.iter().flat_map(NamedAtom::variables).chain(self.constant_atoms.iter().map(|c| &c.variable));
        for v in all {
            if seen.insert(v.clone()) {
                out.push(v.clone());
            }
        }
        out
    }

    pub fn variables(&self) -> BTreeSet<VariableName> {
        self.variables_in_order().into_iter().collect()
    }

    pub fn is_boolean(&self) -> bool {
        self.free.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty() && self.constant_atoms.is_empty()
    }

    pub fn is_compatible(&self, schema: &Schema) -> bool {
        self.atoms.iter().all(|a| a.is_compatible(schema))
    }

    pub fn relations(&self) -> BTreeSet<RelationName> {
        self.atoms.iter().map(|a| a.relation.clone()).collect()
    }

    pub fn constants(&self) -> BTreeSet<Value> {
        self.atoms
            .iter()
            .flat_map(|a| a.bindings.iter())
            .filter_map(|(_, t)| match t {
                Term::Const(c) => Some(c.clone()),
                Term::Var(_) => None,
            })
            .collect()
    }

    /// Checks the structural invariants: distinct attributes per atom, free
    /// and existential variables disjoint, and every listed variable bound.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if let Some(a) = self.atoms.iter().find(|a| !a.has_distinct_attributes()) {
            return Err(format!("atom {a} repeats an attribute"));
        }
        if let Some(v) = self.free.iter().find(|v| self.existential.contains(*v)) {
            return Err(format!("variable {v} is both free and existential"));
        }
        let in_atoms: BTreeSet<_> = self.atoms.iter().flat_map(NamedAtom::variables).collect();
        if let Some(v) = self.free.iter().chain(self.existential.iter()).find(|v| !in_atoms.contains(v)) {
            return Err(format!("variable {v} does not occur in any atom"));
        }
        if let Some(c) = self.constant_atoms.iter().find(|c| !in_atoms.contains(&c.variable)) {
            return Err(format!("variable {} of C(val:..) does not occur in any atom", c.variable));
        }
        Ok(())
    }

    /// Renames variables to `v0, v1, ...` in order of first occurrence and
    /// sorts atoms, giving a form that is equal for queries that differ only
    /// in variable names and conjunct order. Free variables are compared as
    /// a set.
    pub fn canonical(&self) -> ConjunctiveQuery {
        let mut atoms = self.atoms.clone();
        // Order atoms by relation and attribute list first so renaming is
        // independent of the written conjunct order.
        atoms.sort_by(|a, b| {
            (&a.relation, a.bindings.iter().map(|(x, _)| x).collect::<Vec<_>>())
                .cmp(&(&b.relation, b.bindings.iter().map(|(x, _)| x).collect::<Vec<_>>()))
        });
        for a in &mut atoms {
            a.bindings.sort_by(|x, y| x.0.cmp(&y.0));
        }
        let skeleton = ConjunctiveQuery { atoms, ..self.clone() };
        let rename: BTreeMap<VariableName, VariableName> = skeleton
            .variables_in_order()
            .into_iter()
            .enumerate()
            .map(|(i, v)| (v, VariableName::new(format!("v{i}"))))
            .collect();
        let r = |v: &VariableName| rename.get(v).cloned().unwrap_or_else(|| v.clone());
        let atoms = skeleton
            .atoms
            .iter()
            .map(|a| NamedAtom {
                relation: a.relation.clone(),
                bindings: a
                    .bindings
                    .iter()
                    .map(|(x, t)| {
                        (x.clone(), match t {
                            Term::Var(v) => Term::Var(r(v)),
                            c => c.clone(),
                        })
                    })
                    .collect(),
            })
            .collect();
        let mut constant_atoms: Vec<_> =
            self.constant_atoms.iter().map(|c| ConstantAtom { variable: r(&c.variable) }).collect();
        constant_atoms.sort();
        let mut free: Vec<_> = self.free.iter().map(r).collect();
        free.sort();
        ConjunctiveQuery { existential: self.existential.iter().map(r).collect(), atoms, constant_atoms, free }
    }

    /// Writes the conjunction without quantifier prefix.
    pub(crate) fn fmt_conjunction(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("true");
        }
        let mut first = true;
        for a in &self.atoms {
            if !first {
                f.write_str(" & ")?;
            }
            first = false;
            write!(f, "{a}")?;
        }
        for c in &self.constant_atoms {
            if !first {
                f.write_str(" & ")?;
            }
            first = false;
            write!(f, "{c}")?;
        }
        Ok(())
    }

    fn default_free_order(&self) -> Vec<VariableName> {
        self.variables_in_order().into_iter().filter(|v| !self.existential.contains(v)).collect()
    }
}

/// DSL form: `[(free vars) <-] [exists z1, z2 .] atoms`. The free-variable
/// prefix is printed only when it differs from first-occurrence order.
impl fmt::Display for ConjunctiveQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.free != self.default_free_order() {
            f.write_str("(")?;
            for (i, v) in self.free.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{v}")?;
            }
            f.write_str(") <- ")?;
        }
        if !self.existential.is_empty() {
            f.write_str("exists ")?;
            for (i, v) in self.existential.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{v}")?;
            }
            f.write_str(" . ")?;
        }
        self.fmt_conjunction(f)
    }
}

/// Row filter of a filtered total query.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoolCondition {
    True,
    AttrEq(AttributeName, AttributeName),
    EqConst(AttributeName, Value),
    NeConst(AttributeName, Value),
    Not(Box<BoolCondition>),
    And(Vec<BoolCondition>),
    Or(Vec<BoolCondition>),
}

impl BoolCondition {
    pub fn attributes(&self) -> BTreeSet<AttributeName> {
        let mut out = BTreeSet::new();
        self.collect_attributes(&mut out);
        out
    }

    fn collect_attributes(&self, out: &mut BTreeSet<AttributeName>) {
        match self {
            BoolCondition::True => {}
            BoolCondition::AttrEq(a, b) => {
                out.insert(a.clone());
                out.insert(b.clone());
            }
            BoolCondition::EqConst(a, _) | BoolCondition::NeConst(a, _) => {
                out.insert(a.clone());
            }
            BoolCondition::Not(c) => c.collect_attributes(out),
            BoolCondition::And(cs) | BoolCondition::Or(cs) => cs.iter().for_each(|c| c.collect_attributes(out)),
        }
    }

    /// Evaluates on a row given by an attribute lookup. Comparisons follow
    /// SQL only in that a null never equals anything; `!=` is plain
    /// two-valued inequality.
    pub fn holds(&self, get: &dyn Fn(&AttributeName) -> Option<Value>) -> bool {
        let eq = |a: Option<Value>, b: Option<Value>| match (a, b) {
            (Some(x), Some(y)) => !x.is_null() && x == y,
            _ => false,
        };
        match self {
            BoolCondition::True => true,
            BoolCondition::AttrEq(a, b) => eq(get(a), get(b)),
            BoolCondition::EqConst(a, v) => eq(get(a), Some(v.clone())),
            BoolCondition::NeConst(a, v) => get(a).is_some_and(|x| &x != v),
            BoolCondition::Not(c) => !c.holds(get),
            BoolCondition::And(cs) => cs.iter().all(|c| c.holds(get)),
            BoolCondition::Or(cs) => cs.iter().any(|c| c.holds(get)),
        }
    }

    pub fn negate(self) -> BoolCondition {
        BoolCondition::Not(Box::new(self))
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, nested: bool) -> fmt::Result {
        match self {
            BoolCondition::True => f.write_str("true"),
            BoolCondition::AttrEq(a, b) => write!(f, "{a} = {b}"),
            BoolCondition::EqConst(a, v) => write!(f, "{a} = {v}"),
            BoolCondition::NeConst(a, v) => write!(f, "{a} != {v}"),
            BoolCondition::Not(c) => {
                f.write_str("not (")?;
                c.fmt_prec(f, false)?;
                f.write_str(")")
            }
            BoolCondition::And(cs) | BoolCondition::Or(cs) => {
                let op = if matches!(self, BoolCondition::And(_)) { " and " } else { " or " };
                if cs.is_empty() {
                    // Empty conjunction/disjunction print as their units.
                    return f.write_str(if matches!(self, BoolCondition::And(_)) { "true" } else { "not (true)" });
                }
                if nested {
                    f.write_str("(")?;
                }
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(op)?;
                    }
                    c.fmt_prec(f, true)?;
                }
                if nested {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for BoolCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, false)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Query {
    Cq(ConjunctiveQuery),
    /// Every tuple of the relation, whatever its arity.
    Total(RelationName),
    /// Tuples of the relation that satisfy the condition.
    FilteredTotal { relation: RelationName, condition: BoolCondition },
}

impl Query {
    pub fn is_compatible(&self, schema: &Schema) -> bool {
        match self {
            Query::Cq(q) => q.is_compatible(schema),
            Query::Total(r) => schema.contains(r),
            Query::FilteredTotal { relation, condition } => match schema.get(relation) {
                Some(attrs) => condition.attributes().is_subset(attrs),
                None => false,
            },
        }
    }

    pub fn relations(&self) -> BTreeSet<RelationName> {
        match self {
            Query::Cq(q) => q.relations(),
            Query::Total(r) | Query::FilteredTotal { relation: r, .. } => [r.clone()].into(),
        }
    }

    /// Total and filtered total queries fix the arity of their relation.
    pub fn pinned_relation(&self) -> Option<&RelationName> {
        match self {
            Query::Cq(_) => None,
            Query::Total(r) | Query::FilteredTotal { relation: r, .. } => Some(r),
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Query::Cq(q) => write!(f, "cq {q}"),
            Query::Total(r) => write!(f, "total {r}"),
            Query::FilteredTotal { relation, condition } => write!(f, "filtered {relation} where {condition}"),
        }
    }
}

/// `body -> exists z . head`. The head's free variables are the frontier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Tgd {
    pub body: ConjunctiveQuery,
    pub head: ConjunctiveQuery,
}

impl Tgd {
    /// Builds a tgd; head variables that do not occur in the body become
    /// existential.
    pub fn new(
        body_atoms: Vec<NamedAtom>,
        body_constants: Vec<ConstantAtom>,
        head_atoms: Vec<NamedAtom>,
        head_constants: Vec<ConstantAtom>,
    ) -> Self {
        let body = ConjunctiveQuery::new(body_atoms, body_constants, []);
        let body_vars = body.variables();
        let head_probe = ConjunctiveQuery::new(head_atoms, head_constants, []);
        let existential: Vec<_> = head_probe.variables_in_order().into_iter().filter(|v| !body_vars.contains(v)).collect();
        let head = ConjunctiveQuery::new(head_probe.atoms, head_probe.constant_atoms, existential);
        Tgd { body, head }
    }

    pub fn simple(body: Vec<NamedAtom>, head: Vec<NamedAtom>) -> Self {
        Tgd::new(body, Vec::new(), head, Vec::new())
    }

    pub fn is_full(&self) -> bool {
        self.head.existential.is_empty()
    }

    pub fn is_compatible(&self, schema: &Schema) -> bool {
        self.body.is_compatible(schema) && self.head.is_compatible(schema)
    }

    pub fn body_relations(&self) -> BTreeSet<RelationName> {
        self.body.relations()
    }

    pub fn head_relations(&self) -> BTreeSet<RelationName> {
        self.head.relations()
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        self.body.validate()?;
        if let Some(a) = self.head.atoms.iter().find(|a| !a.has_distinct_attributes()) {
            return Err(format!("atom {a} repeats an attribute"));
        }
        let body_vars = self.body.variables();
        if let Some(v) = self.head.free.iter().find(|v| !body_vars.contains(*v)) {
            return Err(format!("frontier variable {v} does not occur in the body"));
        }
        if let Some(c) = self.head.constant_atoms.iter().find(|c| !body_vars.contains(&c.variable)
            && !self.head.atoms.iter().any(|a| a.variables().any(|v| v == &c.variable)))
        {
            return Err(format!("variable {} of C(val:..) is unbound", c.variable));
        }
        Ok(())
    }
}

impl fmt::Display for Tgd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.body.fmt_conjunction(f)?;
        f.write_str(" -> ")?;
        if !self.head.existential.is_empty() {
            f.write_str("exists ")?;
            for (i, v) in self.head.existential.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{v}")?;
            }
            f.write_str(" . ")?;
        }
        self.head.fmt_conjunction(f)
    }
}

/// `body -> x = x'`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Egd {
    pub body: ConjunctiveQuery,
    pub left: VariableName,
    pub right: VariableName,
}

impl Egd {
    pub fn new(body_atoms: Vec<NamedAtom>, left: &str, right: &str) -> Self {
        Egd {
            body: ConjunctiveQuery::new(body_atoms, Vec::new(), []),
            left: left.into(),
            right: right.into(),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        self.body.validate()?;
        let vars = self.body.variables();
        for v in [&self.left, &self.right] {
            if !vars.contains(v) {
                return Err(format!("equated variable {v} does not occur in the body"));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Egd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.body.fmt_conjunction(f)?;
        write!(f, " -> {} = {}", self.left, self.right)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Attrs(Vec<AttributeName>),
    Wildcard,
}

/// `R[a1, ..., an]` or `R[*]`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StructureConstraint {
    pub relation: RelationName,
    pub shape: Shape,
}

impl StructureConstraint {
    pub fn wildcard(relation: impl Into<RelationName>) -> Self {
        StructureConstraint { relation: relation.into(), shape: Shape::Wildcard }
    }

    pub fn attrs<A: Into<AttributeName>>(relation: impl Into<RelationName>, attrs: impl IntoIterator<Item = A>) -> Self {
        StructureConstraint { relation: relation.into(), shape: Shape::Attrs(attrs.into_iter().map(Into::into).collect()) }
    }

    pub fn is_wildcard(&self) -> bool {
        matches!(self.shape, Shape::Wildcard)
    }

    pub fn attributes(&self) -> &[AttributeName] {
        match &self.shape {
            Shape::Attrs(a) => a,
            Shape::Wildcard => &[],
        }
    }

    pub fn satisfied_by(&self, schema: &Schema) -> bool {
        match schema.get(&self.relation) {
            Some(attrs) => self.attributes().iter().all(|a| attrs.contains(a)),
            None => false,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let set: BTreeSet<_> = self.attributes().iter().collect();
        if set.len() != self.attributes().len() {
            return Err(format!("structure constraint {self} repeats an attribute"));
        }
        Ok(())
    }
}

impl fmt::Display for StructureConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[", self.relation)?;
        match &self.shape {
            Shape::Wildcard => f.write_str("*")?,
            Shape::Attrs(attrs) => {
                for (i, a) in attrs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
            }
        }
        f.write_str("]")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    Tgd(Tgd),
    Egd(Egd),
    Structure(StructureConstraint),
}

impl Constraint {
    pub fn is_structural(&self) -> bool {
        matches!(self, Constraint::Structure(_))
    }

    /// Atoms of the dependency; empty for structure constraints.
    pub fn atoms(&self) -> Vec<&NamedAtom> {
        match self {
            Constraint::Tgd(t) => t.body.atoms.iter().chain(t.head.atoms.iter()).collect(),
            Constraint::Egd(e) => e.body.atoms.iter().collect(),
            Constraint::Structure(_) => Vec::new(),
        }
    }

    pub fn relations(&self) -> BTreeSet<RelationName> {
        match self {
            Constraint::Structure(s) => [s.relation.clone()].into(),
            _ => self.atoms().into_iter().map(|a| a.relation.clone()).collect(),
        }
    }

    pub fn constants(&self) -> BTreeSet<Value> {
        match self {
            Constraint::Tgd(t) => t.body.constants().into_iter().chain(t.head.constants()).collect(),
            Constraint::Egd(e) => e.body.constants(),
            Constraint::Structure(_) => BTreeSet::new(),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        match self {
            Constraint::Tgd(t) => t.validate(),
            Constraint::Egd(e) => e.validate(),
            Constraint::Structure(s) => s.validate(),
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Tgd(t) => write!(f, "{t}"),
            Constraint::Egd(e) => write!(f, "{e}"),
            Constraint::Structure(s) => write!(f, "{s}"),
        }
    }
}

/// Anything `is_compatible` can be asked about.
pub enum Compatible<'a> {
    Query(&'a Query),
    Tgd(&'a Tgd),
    Egd(&'a Egd),
}

pub fn is_compatible(object: Compatible<'_>, schema: &Schema) -> bool {
    match object {
        Compatible::Query(q) => q.is_compatible(schema),
        Compatible::Tgd(t) => t.is_compatible(schema),
        Compatible::Egd(e) => e.body.is_compatible(schema),
    }
}

/// Variable assignment built during homomorphism search.
pub type Assignment = BTreeMap<VariableName, Value>;

struct CompiledAtom<'a> {
    relation: &'a RelationName,
    /// (position in the stored tuple, term)
    slots: Vec<(usize, &'a Term)>,
}

fn compile<'a>(atoms: &'a [NamedAtom], instance: &Instance) -> Result<Vec<CompiledAtom<'a>>> {
    atoms
        .iter()
        .map(|atom| {
            let positions = instance
                .schema()
                .positions(&atom.relation)
                .ok_or_else(|| Error::Incompatible(format!("relation `{}` is missing", atom.relation)))?;
            let slots = atom
                .bindings
                .iter()
                .map(|(a, t)| {
                    positions
                        .get(a)
                        .map(|&p| (p, t))
                        .ok_or_else(|| Error::Incompatible(format!("attribute `{a}` missing from `{}`", atom.relation)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CompiledAtom { relation: &atom.relation, slots })
        })
        .collect()
}

/// Enumerates every extension of `seed` mapping all atoms into `instance`
/// and satisfying the constant atoms. `visit` may stop the search early.
///
/// Atoms are tried smallest relation first, ties broken by the number of
/// already-bound positions.
pub fn for_each_homomorphism(
    atoms: &[NamedAtom],
    constant_atoms: &[ConstantAtom],
    instance: &Instance,
    seed: &Assignment,
    visit: &mut dyn FnMut(&Assignment) -> ControlFlow<()>,
) -> Result<ControlFlow<()>> {
    let compiled = compile(atoms, instance)?;
    let mut order: Vec<usize> = (0..compiled.len()).collect();
    order.sort_by_key(|&i| {
        let bound = compiled[i]
            .slots
            .iter()
            .filter(|(_, t)| match t {
                Term::Const(_) => true,
                Term::Var(v) => seed.contains_key(v),
            })
            .count();
        (instance.tuples(compiled[i].relation).len(), usize::MAX - bound)
    });
    let mut assignment = seed.clone();
    Ok(search(&compiled, &order, 0, constant_atoms, instance, &mut assignment, visit))
}

fn constants_hold(constant_atoms: &[ConstantAtom], assignment: &Assignment) -> bool {
    constant_atoms
        .iter()
        .all(|c| assignment.get(&c.variable).is_some_and(|v| !v.is_null()))
}

fn search(
    compiled: &[CompiledAtom<'_>],
    order: &[usize],
    depth: usize,
    constant_atoms: &[ConstantAtom],
    instance: &Instance,
    assignment: &mut Assignment,
    visit: &mut dyn FnMut(&Assignment) -> ControlFlow<()>,
) -> ControlFlow<()> {
    if depth == order.len() {
        if constants_hold(constant_atoms, assignment) {
            return visit(assignment);
        }
        return ControlFlow::Continue(());
    }
    let atom = &compiled[order[depth]];
    'tuples: for tuple in instance.tuples(atom.relation) {
        let mut bound_here: Vec<&VariableName> = Vec::new();
        for &(pos, term) in &atom.slots {
            let value = &tuple[pos];
            let ok = match term {
                Term::Const(c) => c == value,
                Term::Var(v) => match assignment.get(v) {
                    Some(existing) => existing == value,
                    None => {
                        assignment.insert(v.clone(), value.clone());
                        bound_here.push(v);
                        true
                    }
                },
            };
            if !ok {
                for v in bound_here {
                    assignment.remove(v);
                }
                continue 'tuples;
            }
        }
        let flow = search(compiled, order, depth + 1, constant_atoms, instance, assignment, visit);
        for v in bound_here {
            assignment.remove(v);
        }
        if flow.is_break() {
            return flow;
        }
    }
    ControlFlow::Continue(())
}

/// Answers of a conjunctive query as tuples over its free variables.
pub fn evaluate_cq(q: &ConjunctiveQuery, instance: &Instance) -> Result<BTreeSet<Tuple>> {
    let mut out = BTreeSet::new();
    let _ = for_each_homomorphism(&q.atoms, &q.constant_atoms, instance, &Assignment::new(), &mut |a| {
        out.insert(q.free.iter().map(|v| a[v].clone()).collect());
        ControlFlow::Continue(())
    })?;
    Ok(out)
}

pub fn evaluate_query(q: &Query, instance: &Instance) -> Result<BTreeSet<Tuple>> {
    if !q.is_compatible(instance.schema()) {
        return Err(Error::Incompatible(format!("query `{q}`")));
    }
    match q {
        Query::Cq(cq) => evaluate_cq(cq, instance),
        Query::Total(r) => Ok(instance.tuples(r).clone()),
        Query::FilteredTotal { relation, condition } => {
            let positions = instance.schema().positions(relation).unwrap();
            Ok(instance
                .tuples(relation)
                .iter()
                .filter(|t| condition.holds(&|a| positions.get(a).map(|&p| t[p].clone())))
                .cloned()
                .collect())
        }
    }
}

/// Whether the boolean query has at least one homomorphism.
pub fn holds_boolean(q: &ConjunctiveQuery, instance: &Instance) -> Result<bool> {
    let flow = for_each_homomorphism(&q.atoms, &q.constant_atoms, instance, &Assignment::new(), &mut |_| {
        ControlFlow::Break(())
    })?;
    Ok(flow.is_break())
}

fn tgd_holds(t: &Tgd, instance: &Instance) -> Result<bool> {
    let mut violated = false;
    let mut failure = None;
    let _ = for_each_homomorphism(&t.body.atoms, &t.body.constant_atoms, instance, &Assignment::new(), &mut |body| {
        let seed: Assignment = t
            .head
            .free
            .iter()
            .filter_map(|v| body.get(v).map(|val| (v.clone(), val.clone())))
            .collect();
        match for_each_homomorphism(&t.head.atoms, &t.head.constant_atoms, instance, &seed, &mut |_| {
            ControlFlow::Break(())
        }) {
            Ok(ControlFlow::Break(())) => ControlFlow::Continue(()),
            Ok(ControlFlow::Continue(())) => {
                violated = true;
                ControlFlow::Break(())
            }
            Err(e) => {
                failure = Some(e);
                ControlFlow::Break(())
            }
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(!violated),
    }
}

fn egd_holds(e: &Egd, instance: &Instance) -> Result<bool> {
    let flow = for_each_homomorphism(&e.body.atoms, &e.body.constant_atoms, instance, &Assignment::new(), &mut |a| {
        if a[&e.left] == a[&e.right] {
            ControlFlow::Continue(())
        } else {
            ControlFlow::Break(())
        }
    })?;
    Ok(flow.is_continue())
}

/// `(instance, schema) |= c`. Dependencies must be compatible with `schema`.
pub fn satisfies(c: &Constraint, instance: &Instance, schema: &Schema) -> Result<bool> {
    match c {
        Constraint::Structure(s) => Ok(s.satisfied_by(schema)),
        Constraint::Tgd(t) => {
            if !t.is_compatible(schema) {
                return Err(Error::Incompatible(format!("tgd `{t}`")));
            }
            tgd_holds(t, instance)
        }
        Constraint::Egd(e) => {
            if !e.body.is_compatible(schema) {
                return Err(Error::Incompatible(format!("egd `{e}`")));
            }
            egd_holds(e, instance)
        }
    }
}

/// Like [`satisfies`], but an incompatible dependency is simply not
/// satisfied.
pub fn satisfies_or_false(c: &Constraint, instance: &Instance) -> bool {
    satisfies(c, instance, instance.schema()).unwrap_or(false)
}

/// A tgd set is acyclic if the body-to-head relation graph has no cycle.
pub fn is_acyclic<'a>(tgds: impl IntoIterator<Item = &'a Tgd>) -> bool {
    let mut edges: BTreeMap<RelationName, BTreeSet<RelationName>> = BTreeMap::new();
    for t in tgds {
        for b in t.body_relations() {
            edges.entry(b).or_default().extend(t.head_relations());
        }
    }
    // Kahn's algorithm over the nodes that appear.
    let mut indegree: BTreeMap<&RelationName, usize> = BTreeMap::new();
    for (from, tos) in &edges {
        indegree.entry(from).or_default();
        for to in tos {
            *indegree.entry(to).or_default() += 1;
        }
    }
    let mut ready: Vec<&RelationName> = indegree.iter().filter(|(_, &d)| d == 0).map(|(r, _)| *r).collect();
    let mut seen = 0;
    while let Some(r) = ready.pop() {
        seen += 1;
        if let Some(tos) = edges.get(r) {
            for to in tos {
                let d = indegree.get_mut(to).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push(to);
                }
            }
        }
    }
    seen == indegree.len()
}
