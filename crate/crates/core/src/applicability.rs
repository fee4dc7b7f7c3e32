//! Schema-level applicability: the minimal output schema of a procedure and
//! its lift to sequences.
//!
//! Only procedures whose preconditions are structure constraints are
//! handled; applicability with data-level preconditions is undecidable.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::constraint::{Constraint, Query};
use crate::error::{Error, Result};
use crate::model::{AttributeSet, RelationName, Schema};
use crate::procedure::Procedure;

/// A minimal schema with arity pins. Relations may carry an empty attribute
/// set when only their existence is known.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaRequirement {
    pub schema: Schema,
    pub labels: BTreeMap<RelationName, usize>,
}

impl SchemaRequirement {
    pub fn unlabeled(schema: Schema) -> Self {
        SchemaRequirement { schema, labels: BTreeMap::new() }
    }
}

impl fmt::Display for SchemaRequirement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (rel, attrs) in self.schema.relations() {
            write!(f, "{rel}(")?;
            for (i, a) in attrs.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{a}")?;
            }
            f.write_str(")")?;
            if let Some(k) = self.labels.get(rel) {
                write!(f, " [arity {k}]")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// An entry of the requirement set: the output must have `relation` with at
/// least `attributes`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct RequirementPair {
    pub relation: RelationName,
    pub attributes: AttributeSet,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlgorithmFailure {
    /// Step of the algorithm that failed (1 or 7).
    pub step: u8,
    pub reason: String,
}

impl fmt::Display for AlgorithmFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}: {}", self.step, self.reason)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinSchema {
    Success(SchemaRequirement),
    Failure(AlgorithmFailure),
}

impl MinSchema {
    pub fn success(self) -> Option<SchemaRequirement> {
        match self {
            MinSchema::Success(r) => Some(r),
            MinSchema::Failure(_) => None,
        }
    }
}

fn fail(step: u8, reason: String) -> MinSchema {
    MinSchema::Failure(AlgorithmFailure { step, reason })
}

/// The requirement set built from the input schema and the procedure.
pub fn requirement_pairs(p: &Procedure, s: &Schema) -> Vec<RequirementPair> {
    let scoped = p.scope_relations();
    let mut out: Vec<RequirementPair> = s
        .relations()
        .filter(|(rel, _)| !scoped.contains(*rel))
        .map(|(rel, attrs)| RequirementPair { relation: rel.clone(), attributes: attrs.clone() })
        .collect();
    out.extend(scoped_requirements(p, s));
    out
}

/// The requirement pairs other than the unscoped relations of `s`.
fn scoped_requirements(p: &Procedure, s: &Schema) -> Vec<RequirementPair> {
    let mut out = Vec::new();
    for c in p.scope.iter().filter(|c| !c.is_wildcard()) {
        if let Some(attrs) = s.get(&c.relation) {
            let rest = attrs.iter().filter(|a| !c.attributes().contains(a)).cloned().collect();
            out.push(RequirementPair { relation: c.relation.clone(), attributes: rest });
        }
    }
    for q in &p.safe {
        if let Query::Cq(cq) = q {
            for a in &cq.atoms {
                out.push(RequirementPair { relation: a.relation.clone(), attributes: a.attributes() });
            }
        }
    }
    for c in &p.post {
        match c {
            Constraint::Structure(sc) => out.push(RequirementPair {
                relation: sc.relation.clone(),
                attributes: sc.attributes().iter().cloned().collect(),
            }),
            dep => {
                for a in dep.atoms() {
                    out.push(RequirementPair { relation: a.relation.clone(), attributes: a.attributes() });
                }
            }
        }
    }
    out
}

/// Computes the minimal schema every outcome of `p` over `s` extends, or
/// the step at which no outcome schema can exist.
pub fn min_schema(p: &Procedure, s: &Schema) -> Result<MinSchema> {
    if !p.has_only_structural_pre() {
        return Err(Error::UnsupportedPrecondition { procedure: p.name.clone() });
    }
    // Step 1.
    for c in &p.pre {
        if let Constraint::Structure(sc) = c {
            if !sc.satisfied_by(s) {
                return Ok(fail(1, format!("precondition {sc} is not met")));
            }
        }
    }
    if let Some(q) = p.safe.iter().find(|q| !q.is_compatible(s)) {
        return Ok(fail(1, format!("safety query `{q}` is not compatible with the schema")));
    }
    // Unscoped relations of `s` are requirement pairs themselves.
    let mut out = s.clone();
    for rel in p.scope_relations() {
        out.remove_relation(&rel);
    }
    // Steps 2 and 3.
    let mut labels = BTreeMap::new();
    for q in &p.safe {
        if let Some(rel) = q.pinned_relation() {
            let attrs = s.get(rel).expect("compatibility checked").clone();
            labels.insert(rel.clone(), attrs.len());
            out.set(rel.clone(), attrs);
        }
    }
    // Step 4.
    for c in &p.post {
        if let Constraint::Structure(sc) = c {
            if sc.is_wildcard() && !out.contains(&sc.relation) {
                out.set(sc.relation.clone(), AttributeSet::new());
            }
        }
    }
    // Steps 5 and 6.
    for pair in scoped_requirements(p, s) {
        out.extend_relation(pair.relation, pair.attributes);
    }
    // Step 7.
    for (rel, &k) in &labels {
        let have = out.get(rel).map_or(0, AttributeSet::len);
        if have > k {
            return Ok(fail(7, format!("`{rel}` is pinned to {k} attributes by a total safety query but needs {have}")));
        }
    }
    Ok(MinSchema::Success(SchemaRequirement { schema: out, labels }))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceApplicability {
    pub applicable: bool,
    /// The input schema followed by one minimal schema per successful step.
    pub chain: Vec<SchemaRequirement>,
    pub failure_index: Option<usize>,
    pub failure: Option<AlgorithmFailure>,
}

pub fn sequence_applicability(ps: &[Procedure], s: &Schema) -> Result<SequenceApplicability> {
    let mut chain = vec![SchemaRequirement::unlabeled(s.clone())];
    for (idx, p) in ps.iter().enumerate() {
        let current = &chain.last().unwrap().schema;
        match min_schema(p, current)? {
            MinSchema::Success(req) => chain.push(req),
            MinSchema::Failure(f) => {
                return Ok(SequenceApplicability { applicable: false, chain, failure_index: Some(idx), failure: Some(f) })
            }
        }
    }
    Ok(SequenceApplicability { applicable: true, chain, failure_index: None, failure: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::StructureConstraint;
    use crate::model::fixtures::visits_schema;
    use crate::procedure::fixtures::*;
    use crate::procedure::{instantiate_template, Template};

    fn attrs(xs: &[&str]) -> AttributeSet {
        xs.iter().map(|x| (*x).into()).collect()
    }

    #[test]
    fn alter_trace() {
        let got = min_schema(&alter_age(), &visits_schema()).unwrap().success().unwrap();
        assert_eq!(got.schema.get(&"EVisits".into()), Some(&attrs(&["facility", "patInsur", "timestp"])));
        assert_eq!(got.schema.get(&"LocVisits".into()), Some(&attrs(&["age", "facility", "patInsur", "timestp"])));
        assert!(got.labels.is_empty());
    }

    #[test]
    fn total_query_pins_arity() {
        let got = min_schema(&migrate(), &visits_schema()).unwrap().success().unwrap();
        assert_eq!(got.labels.get(&RelationName::from("LocVisits")), Some(&3));
        assert_eq!(got.schema.get(&"LocVisits".into()), Some(&attrs(&["facility", "patInsur", "timestp"])));
        let mut pinned = migrate();
        pinned.post.push(Constraint::Structure(StructureConstraint::attrs("LocVisits", ["age"])));
        match min_schema(&pinned, &visits_schema()).unwrap() {
            MinSchema::Failure(f) => assert_eq!(f.step, 7),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn data_level_preconditions_are_rejected() {
        let copy = instantiate_template(
            "copy",
            Template::AttributeCopy {
                target: "LocVisits".into(),
                source: "Patients".into(),
                keys: vec!["facility".into(), "patInsur".into()],
                attribute: "age".into(),
                structural: false,
            },
        )
        .unwrap();
        assert!(matches!(min_schema(&copy, &visits_schema()), Err(Error::UnsupportedPrecondition { .. })));
    }

    #[test]
    fn wildcard_post_adds_empty_relation() {
        let p = Procedure::new("mk").with_post([Constraint::Structure(StructureConstraint::wildcard("Audit"))]);
        let got = min_schema(&p, &visits_schema()).unwrap().success().unwrap();
        assert_eq!(got.schema.get(&"Audit".into()), Some(&AttributeSet::new()));
    }

    #[test]
    fn empty_sequence() {
        let r = sequence_applicability(&[], &visits_schema()).unwrap();
        assert!(r.applicable);
        assert_eq!(r.chain.len(), 1);
        assert_eq!(r.chain[0].schema, visits_schema());
    }

    #[test]
    fn unmet_precondition_fails_at_step_one() {
        let copy = instantiate_template(
            "copy",
            Template::AttributeCopy {
                target: "LocVisits".into(),
                source: "Patients".into(),
                keys: vec!["facility".into(), "patInsur".into()],
                attribute: "age".into(),
                structural: true,
            },
        )
        .unwrap();
        let r = sequence_applicability(&[copy], &visits_schema()).unwrap();
        assert!(!r.applicable);
        assert_eq!(r.failure_index, Some(0));
        assert_eq!(r.failure.unwrap().step, 1);
    }
}
