//! Procedures, the residual query over the unscoped part of a schema, and
//! the possible-outcome semantics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::constraint::{
    evaluate_query, satisfies_or_false, BoolCondition, ConjunctiveQuery, ConstantAtom, Constraint, Egd, NamedAtom,
    Query, StructureConstraint, Term, Tgd,
};
use crate::error::{Error, Result};
use crate::model::{AttributeName, AttributeSet, Instance, RelationName, Schema, Tuple, Value, VariableName};

/// How the residual query is compared before and after a procedure.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    /// The residual query is a single conjunctive query; an empty
    /// out-of-scope relation empties its whole answer set.
    #[default]
    Strict,
    /// Each conjunct is compared on its own.
    PerRelation,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Procedure {
    pub name: String,
    pub scope: Vec<StructureConstraint>,
    pub pre: Vec<Constraint>,
    pub post: Vec<Constraint>,
    pub safe: Vec<Query>,
    /// Set when the procedure was built from a template.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<Template>,
}

impl Procedure {
    pub fn new(name: impl Into<String>) -> Self {
        Procedure { name: name.into(), ..Default::default() }
    }

    pub fn with_scope(mut self, scope: impl IntoIterator<Item = StructureConstraint>) -> Self {
        self.scope = scope.into_iter().collect();
        self
    }

    pub fn with_pre(mut self, pre: impl IntoIterator<Item = Constraint>) -> Self {
        self.pre = pre.into_iter().collect();
        self
    }

    pub fn with_post(mut self, post: impl IntoIterator<Item = Constraint>) -> Self {
        self.post = post.into_iter().collect();
        self
    }

    pub fn with_safe(mut self, safe: impl IntoIterator<Item = Query>) -> Self {
        self.safe = safe.into_iter().collect();
        self
    }

    pub fn post_tgds(&self) -> impl Iterator<Item = &Tgd> {
        self.post.iter().filter_map(|c| match c {
            Constraint::Tgd(t) => Some(t),
            _ => None,
        })
    }

    pub fn scope_relations(&self) -> BTreeSet<RelationName> {
        self.scope.iter().map(|s| s.relation.clone()).collect()
    }

    /// Constants mentioned anywhere in the procedure.
    pub fn constants(&self) -> BTreeSet<Value> {
        let mut out: BTreeSet<Value> = self.pre.iter().chain(&self.post).flat_map(Constraint::constants).collect();
        for q in &self.safe {
            match q {
                Query::Cq(cq) => out.extend(cq.constants()),
                Query::FilteredTotal { condition, .. } => collect_condition_constants(condition, &mut out),
                Query::Total(_) => {}
            }
        }
        out
    }

    pub fn has_only_structural_pre(&self) -> bool {
        self.pre.iter().all(Constraint::is_structural)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        for c in self.pre.iter().chain(&self.post) {
            c.validate()?;
        }
        for s in &self.scope {
            s.validate()?;
        }
        for q in &self.safe {
            if let Query::Cq(cq) = q {
                cq.validate()?;
            }
        }
        Ok(())
    }
}

fn collect_condition_constants(c: &BoolCondition, out: &mut BTreeSet<Value>) {
    match c {
        BoolCondition::EqConst(_, v) | BoolCondition::NeConst(_, v) => {
            out.insert(v.clone());
        }
        BoolCondition::Not(c) => collect_condition_constants(c, out),
        BoolCondition::And(cs) | BoolCondition::Or(cs) => cs.iter().for_each(|c| collect_condition_constants(c, out)),
        BoolCondition::True | BoolCondition::AttrEq(..) => {}
    }
}

/// One conjunct of the residual query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResidualConjunct {
    pub relation: RelationName,
    pub attributes: AttributeSet,
}

/// The query retrieving every relation and attribute not mentioned by
/// `scope`, as a list of conjuncts over pairwise distinct variables.
pub fn residual_conjuncts(schema: &Schema, scope: &[StructureConstraint]) -> Vec<ResidualConjunct> {
    let mut mentioned: BTreeMap<&RelationName, (bool, BTreeSet<&AttributeName>)> = BTreeMap::new();
    for c in scope {
        let entry = mentioned.entry(&c.relation).or_default();
        entry.0 |= c.is_wildcard();
        entry.1.extend(c.attributes());
    }
    let mut out = Vec::new();
    for (rel, attrs) in schema.relations() {
        let remaining: AttributeSet = match mentioned.get(rel) {
            None => attrs.clone(),
            Some((true, _)) => continue,
            Some((false, used)) => attrs.iter().filter(|a| !used.contains(a)).cloned().collect(),
        };
        if remaining.is_empty() {
            continue;
        }
        out.push(ResidualConjunct { relation: rel.clone(), attributes: remaining });
    }
    out
}

/// `Q_{S \ C}` as a conjunctive query with all variables free. Variables
/// are named `Relation.attribute`.
pub fn residual_query(schema: &Schema, scope: &[StructureConstraint]) -> ConjunctiveQuery {
    let atoms: Vec<NamedAtom> = residual_conjuncts(schema, scope)
        .into_iter()
        .map(|c| {
            let bindings = c
                .attributes
                .iter()
                .map(|a| (a.clone(), Term::Var(VariableName::new(format!("{}.{}", c.relation, a)))))
                .collect();
            NamedAtom { relation: c.relation, bindings }
        })
        .collect();
    ConjunctiveQuery::new(atoms, Vec::new(), [])
}

fn conjunct_compatible(c: &ResidualConjunct, schema: &Schema) -> bool {
    schema.get(&c.relation).is_some_and(|attrs| c.attributes.is_subset(attrs))
}

/// Why an instance is not a possible outcome, or a procedure not applicable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "clause")]
pub enum Failure {
    ResidualIncompatibleBefore,
    SafetyIncompatibleBefore { query: String },
    PreconditionViolated { constraint: String },
    PostconditionViolated { constraint: String },
    ResidualIncompatibleAfter,
    ResidualChanged { relation: Option<RelationName> },
    SafetyIncompatibleAfter { query: String },
    SafetyViolated { query: String },
}

impl Failure {
    /// The clause of the outcome definition this failure belongs to
    /// (1 applicability, 2 postconditions, 3 residual, 4 safety).
    pub fn clause(&self) -> u8 {
        match self {
            Failure::ResidualIncompatibleBefore
            | Failure::SafetyIncompatibleBefore { .. }
            | Failure::PreconditionViolated { .. } => 1,
            Failure::PostconditionViolated { .. } => 2,
            Failure::ResidualIncompatibleAfter | Failure::ResidualChanged { .. } => 3,
            Failure::SafetyIncompatibleAfter { .. } | Failure::SafetyViolated { .. } => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::ResidualIncompatibleBefore => f.write_str("residual query is not compatible with the input schema"),
            Failure::SafetyIncompatibleBefore { query } => {
                write!(f, "safety query `{query}` is not compatible with the input schema")
            }
            Failure::PreconditionViolated { constraint } => write!(f, "precondition `{constraint}` is violated"),
            Failure::PostconditionViolated { constraint } => write!(f, "postcondition `{constraint}` is violated"),
            Failure::ResidualIncompatibleAfter => {
                f.write_str("residual query is not compatible with the output schema")
            }
            Failure::ResidualChanged { relation: Some(r) } => write!(f, "out-of-scope data of `{r}` changed"),
            Failure::ResidualChanged { relation: None } => f.write_str("answers of the residual query changed"),
            Failure::SafetyIncompatibleAfter { query } => {
                write!(f, "safety query `{query}` is not compatible with the output schema")
            }
            Failure::SafetyViolated { query } => write!(f, "answers of safety query `{query}` were not preserved"),
        }
    }
}

/// Clause (1) with a reason on failure.
pub fn check_applicable(p: &Procedure, i: &Instance) -> std::result::Result<(), Failure> {
    let schema = i.schema();
    let residual = residual_conjuncts(schema, &p.scope);
    if !residual.iter().all(|c| conjunct_compatible(c, schema)) {
        return Err(Failure::ResidualIncompatibleBefore);
    }
    if let Some(q) = p.safe.iter().find(|q| !q.is_compatible(schema)) {
        return Err(Failure::SafetyIncompatibleBefore { query: q.to_string() });
    }
    if let Some(c) = p.pre.iter().find(|c| !satisfies_or_false(c, i)) {
        return Err(Failure::PreconditionViolated { constraint: c.to_string() });
    }
    Ok(())
}

pub fn is_applicable(p: &Procedure, i: &Instance) -> bool {
    check_applicable(p, i).is_ok()
}

/// The four-clause possible-outcome check, reporting the first failing
/// clause.
pub fn check_outcome(
    p: &Procedure,
    before: &Instance,
    after: &Instance,
    mode: ResidualMode,
) -> std::result::Result<(), Failure> {
    OutcomeChecker::new(p, before, mode)?.check(after)
}

/// [`check_outcome`] against a fixed input instance, for checking many
/// candidate outputs.
pub struct OutcomeChecker<'a> {
    p: &'a Procedure,
    mode: ResidualMode,
    residual: Vec<ResidualConjunct>,
    residual_before: Vec<HashSet<Tuple>>,
    safe_before: Vec<BTreeSet<Tuple>>,
}

impl<'a> OutcomeChecker<'a> {
    /// Fails with the clause (1) reason when `p` is not applicable.
    pub fn new(p: &'a Procedure, before: &Instance, mode: ResidualMode) -> std::result::Result<Self, Failure> {
        check_applicable(p, before)?;
        let residual = residual_conjuncts(before.schema(), &p.scope);
        let residual_before = residual.iter().map(|c| before.project(&c.relation, &c.attributes)).collect();
        let safe_before = p
            .safe
            .iter()
            .map(|q| evaluate_query(q, before).map_err(|_| Failure::SafetyIncompatibleBefore { query: q.to_string() }))
            .collect::<std::result::Result<_, _>>()?;
        Ok(OutcomeChecker { p, mode, residual, residual_before, safe_before })
    }

    pub fn check(&self, after: &Instance) -> std::result::Result<(), Failure> {
        check_postconditions(self.p, after)?;
        if !self.residual.iter().all(|c| conjunct_compatible(c, after.schema())) {
            return Err(Failure::ResidualIncompatibleAfter);
        }
        self.residual_preserved(after)?;
        for (q, b) in self.p.safe.iter().zip(&self.safe_before) {
            if !q.is_compatible(after.schema()) {
                return Err(Failure::SafetyIncompatibleAfter { query: q.to_string() });
            }
            let a = evaluate_query(q, after).expect("compatibility checked");
            if !b.is_subset(&a) {
                return Err(Failure::SafetyViolated { query: q.to_string() });
            }
        }
        Ok(())
    }

    fn residual_preserved(&self, after: &Instance) -> std::result::Result<(), Failure> {
        let mut before_empty = false;
        let mut after_empty = false;
        let mut first_diff = None;
        for (c, b) in self.residual.iter().zip(&self.residual_before) {
            let a = after.project(&c.relation, &c.attributes);
            before_empty |= b.is_empty();
            after_empty |= a.is_empty();
            if &a != b && first_diff.is_none() {
                first_diff = Some(c.relation.clone());
            }
        }
        match self.mode {
            ResidualMode::PerRelation => match first_diff {
                Some(r) => Err(Failure::ResidualChanged { relation: Some(r) }),
                None => Ok(()),
            },
            // Answers of a product of independent conjuncts agree iff both
            // are empty or every factor agrees.
            ResidualMode::Strict => {
                if before_empty && after_empty {
                    Ok(())
                } else if before_empty != after_empty {
                    Err(Failure::ResidualChanged { relation: first_diff })
                } else {
                    match first_diff {
                        Some(r) => Err(Failure::ResidualChanged { relation: Some(r) }),
                        None => Ok(()),
                    }
                }
            }
        }
    }
}

pub(crate) fn check_postconditions(p: &Procedure, after: &Instance) -> std::result::Result<(), Failure> {
    match p.post.iter().find(|c| !satisfies_or_false(c, after)) {
        Some(c) => Err(Failure::PostconditionViolated { constraint: c.to_string() }),
        None => Ok(()),
    }
}

pub fn is_possible_outcome(p: &Procedure, before: &Instance, after: &Instance) -> bool {
    check_outcome(p, before, after, ResidualMode::Strict).is_ok()
}

pub fn is_possible_outcome_with(p: &Procedure, before: &Instance, after: &Instance, mode: ResidualMode) -> bool {
    check_outcome(p, before, after, mode).is_ok()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    SafeScope,
    AlterSchema,
    Neither,
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Class::SafeScope => "safe_scope",
            Class::AlterSchema => "alter_schema",
            Class::Neither => "neither",
        })
    }
}

pub fn classify(p: &Procedure) -> Class {
    if p.scope.is_empty() && p.safe.is_empty() && p.post.iter().all(Constraint::is_structural) {
        return Class::AlterSchema;
    }
    if p.post.is_empty() || !p.post.iter().all(|c| matches!(c, Constraint::Tgd(_))) {
        return Class::Neither;
    }
    let heads: BTreeSet<RelationName> = p.post_tgds().flat_map(Tgd::head_relations).collect();
    let bodies: BTreeSet<RelationName> = p.post_tgds().flat_map(Tgd::body_relations).collect();
    if !heads.is_disjoint(&bodies) {
        return Class::Neither;
    }
    let scope_ok = p.scope.iter().all(StructureConstraint::is_wildcard) && p.scope_relations() == heads;
    let mut totals = BTreeSet::new();
    for q in &p.safe {
        match q {
            Query::Total(r) => {
                totals.insert(r.clone());
            }
            _ => return Class::Neither,
        }
    }
    if scope_ok && totals == heads {
        Class::SafeScope
    } else {
        Class::Neither
    }
}

/// Every step is safe-scope or alter-schema, and no tgd of a step reads a
/// relation in the scope of that step or of an earlier one.
pub fn is_safe_sequence(ps: &[Procedure]) -> bool {
    let mut scoped: BTreeSet<RelationName> = BTreeSet::new();
    for p in ps {
        match classify(p) {
            Class::Neither => return false,
            Class::AlterSchema => {}
            Class::SafeScope => {
                scoped.extend(p.scope_relations());
                if p.post_tgds().flat_map(Tgd::body_relations).any(|r| scoped.contains(&r)) {
                    return false;
                }
            }
        }
    }
    true
}

/// Rows of an `INSERT`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertSource {
    /// `INSERT INTO S Q`: the free variables of `Q` feed the listed
    /// attributes in order.
    Query(ConjunctiveQuery),
    /// `INSERT INTO S VALUES (...)`.
    Values(Vec<Value>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Template {
    DataExchange {
        dependencies: Vec<Constraint>,
    },
    AlterTable {
        relation: RelationName,
        attributes: Vec<AttributeName>,
    },
    AttributeCopy {
        target: RelationName,
        source: RelationName,
        keys: Vec<AttributeName>,
        attribute: AttributeName,
        /// Drop the functional-dependency precondition on the source,
        /// leaving only structure constraints.
        #[serde(default)]
        structural: bool,
    },
    NullScrub {
        relation: RelationName,
        attribute: AttributeName,
        context: Vec<AttributeName>,
    },
    SqlInsert {
        relation: RelationName,
        attributes: Vec<AttributeName>,
        source: InsertSource,
    },
    SqlDelete {
        relation: RelationName,
        condition: BoolCondition,
    },
}

impl Template {
    pub fn kind(&self) -> &'static str {
        match self {
            Template::DataExchange { .. } => "data_exchange",
            Template::AlterTable { .. } => "alter_table",
            Template::AttributeCopy { .. } => "attribute_copy",
            Template::NullScrub { .. } => "null_scrub",
            Template::SqlInsert { .. } => "sql_insert",
            Template::SqlDelete { .. } => "sql_delete",
        }
    }
}

fn malformed(template: &'static str, reason: impl Into<String>) -> Error {
    Error::MalformedParams { template, reason: reason.into() }
}

fn distinct<'a>(template: &'static str, attrs: impl IntoIterator<Item = &'a AttributeName>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for a in attrs {
        if !seen.insert(a) {
            return Err(malformed(template, format!("attribute `{a}` listed twice")));
        }
    }
    Ok(())
}

fn var_atom(relation: &RelationName, pairs: impl IntoIterator<Item = (AttributeName, String)>) -> NamedAtom {
    NamedAtom {
        relation: relation.clone(),
        bindings: pairs.into_iter().map(|(a, v)| (a, Term::Var(VariableName::new(v)))).collect(),
    }
}

/// Builds the procedure described by a template.
pub fn instantiate_template(name: impl Into<String>, template: Template) -> Result<Procedure> {
    let mut p = Procedure::new(name);
    match &template {
        Template::DataExchange { dependencies } => {
            const K: &str = "data_exchange";
            if dependencies.is_empty() {
                return Err(malformed(K, "no dependencies"));
            }
            let mut tgds = Vec::new();
            for c in dependencies {
                match c {
                    Constraint::Tgd(t) => tgds.push(t),
                    other => return Err(malformed(K, format!("`{other}` is not a tgd"))),
                }
            }
            let heads: BTreeSet<RelationName> = tgds.iter().flat_map(|t| t.head_relations()).collect();
            let mut all: BTreeSet<RelationName> = heads.clone();
            p.scope = heads.iter().cloned().map(StructureConstraint::wildcard).collect();
            let mut pre = BTreeSet::new();
            for t in &tgds {
                for a in &t.body.atoms {
                    all.insert(a.relation.clone());
                    pre.insert(StructureConstraint {
                        relation: a.relation.clone(),
                        shape: crate::constraint::Shape::Attrs(a.bindings.iter().map(|(x, _)| x.clone()).collect()),
                    });
                }
            }
            p.pre = pre.into_iter().map(Constraint::Structure).collect();
            p.post = dependencies.clone();
            p.safe = all.into_iter().map(Query::Total).collect();
        }
        Template::AlterTable { relation, attributes } => {
            const K: &str = "alter_table";
            if attributes.is_empty() {
                return Err(malformed(K, "no attributes to add"));
            }
            distinct(K, attributes)?;
            p.pre = vec![Constraint::Structure(StructureConstraint::wildcard(relation.clone()))];
            p.post = vec![Constraint::Structure(StructureConstraint::attrs(relation.clone(), attributes.clone()))];
        }
        Template::AttributeCopy { target, source, keys, attribute, structural } => {
            const K: &str = "attribute_copy";
            if keys.is_empty() {
                return Err(malformed(K, "no key attributes"));
            }
            distinct(K, keys.iter().chain([attribute]))?;
            let with_attr: Vec<AttributeName> = keys.iter().cloned().chain([attribute.clone()]).collect();
            let keyed = |rel: &RelationName, value: &str| {
                var_atom(
                    rel,
                    keys.iter()
                        .enumerate()
                        .map(|(i, k)| (k.clone(), format!("x{i}")))
                        .chain([(attribute.clone(), value.to_string())]),
                )
            };
            p.scope = vec![StructureConstraint::attrs(target.clone(), [attribute.clone()])];
            p.pre = vec![
                Constraint::Structure(StructureConstraint::attrs(target.clone(), with_attr.clone())),
                Constraint::Structure(StructureConstraint::attrs(source.clone(), with_attr)),
            ];
            if !structural {
                p.pre.push(Constraint::Egd(Egd {
                    body: ConjunctiveQuery::new(vec![keyed(source, "z"), keyed(source, "w")], Vec::new(), []),
                    left: "z".into(),
                    right: "w".into(),
                }));
            }
            p.post = vec![Constraint::Egd(Egd {
                body: ConjunctiveQuery::new(vec![keyed(source, "z"), keyed(target, "w")], Vec::new(), []),
                left: "z".into(),
                right: "w".into(),
            })];
        }
        Template::NullScrub { relation, attribute, context } => {
            const K: &str = "null_scrub";
            distinct(K, context.iter().chain([attribute]))?;
            let x = VariableName::from("x");
            p.scope = vec![StructureConstraint::attrs(relation.clone(), [attribute.clone()])];
            p.pre = vec![Constraint::Structure(StructureConstraint::attrs(relation.clone(), [attribute.clone()]))];
            p.post = vec![Constraint::Tgd(Tgd::new(
                vec![var_atom(relation, [(attribute.clone(), "x".to_string())])],
                Vec::new(),
                Vec::new(),
                vec![ConstantAtom { variable: x.clone() }],
            ))];
            let atom = var_atom(
                relation,
                [(attribute.clone(), "x".to_string())]
                    .into_iter()
                    .chain(context.iter().enumerate().map(|(i, a)| (a.clone(), format!("y{i}")))),
            );
            p.safe = vec![Query::Cq(ConjunctiveQuery::new(vec![atom], vec![ConstantAtom { variable: x }], []))];
        }
        Template::SqlInsert { relation, attributes, source } => {
            const K: &str = "sql_insert";
            if attributes.is_empty() {
                return Err(malformed(K, "no target attributes"));
            }
            distinct(K, attributes)?;
            p.scope = vec![StructureConstraint::wildcard(relation.clone())];
            p.safe = vec![Query::Total(relation.clone())];
            match source {
                InsertSource::Query(q) => {
                    if q.free.len() != attributes.len() {
                        return Err(malformed(
                            K,
                            format!("query has {} output columns, target lists {}", q.free.len(), attributes.len()),
                        ));
                    }
                    q.validate().map_err(|e| malformed(K, e))?;
                    let mut pre = BTreeSet::new();
                    for a in &q.atoms {
                        pre.insert(StructureConstraint::attrs(
                            a.relation.clone(),
                            a.bindings.iter().map(|(x, _)| x.clone()),
                        ));
                    }
                    p.pre = pre.into_iter().map(Constraint::Structure).collect();
                    let head = NamedAtom {
                        relation: relation.clone(),
                        bindings: attributes.iter().cloned().zip(q.free.iter().cloned().map(Term::Var)).collect(),
                    };
                    p.post = vec![Constraint::Tgd(Tgd::new(q.atoms.clone(), q.constant_atoms.clone(), vec![head], Vec::new()))];
                }
                InsertSource::Values(values) => {
                    if values.len() != attributes.len() {
                        return Err(malformed(
                            K,
                            format!("{} values for {} attributes", values.len(), attributes.len()),
                        ));
                    }
                    let head = NamedAtom {
                        relation: relation.clone(),
                        bindings: attributes.iter().cloned().zip(values.iter().cloned().map(Term::Const)).collect(),
                    };
                    p.post = vec![Constraint::Tgd(Tgd::new(Vec::new(), Vec::new(), vec![head], Vec::new()))];
                }
            }
        }
        Template::SqlDelete { relation, condition } => {
            let attrs = condition.attributes();
            p.scope = vec![StructureConstraint::wildcard(relation.clone())];
            p.pre = vec![Constraint::Structure(if attrs.is_empty() {
                StructureConstraint::wildcard(relation.clone())
            } else {
                StructureConstraint::attrs(relation.clone(), attrs)
            })];
            p.safe = vec![Query::FilteredTotal { relation: relation.clone(), condition: condition.clone().negate() }];
        }
    }
    p.template = Some(template);
    Ok(p)
}
