//! Workspace files: a line-oriented text format (`.dq`) and its JSON
//! mirror (`.dq.json`).
//!
//! ```text
//! schema S { rel EVisits(facility, patInsur, timestp); rel LocVisits(facility, patInsur, timestp); }
//! instance I : S { EVisits: (1234, 33, "070916 12:00"); }
//! tgd copy : EVisits(facility:x, patInsur:y, timestp:z) -> LocVisits(facility:x, patInsur:y, timestp:z)
//! proc migrate { scope { LocVisits[*]; } pre { EVisits[facility, patInsur, timestp]; } post { copy; } safe { total LocVisits; } }
//! proc add_age = template alter_table(LocVisits; age)
//! query q : exists z . LocVisits(facility:2087, patInsur:91, timestp:z)
//! seq s = migrate, add_age
//! ```
//!
//! In atoms and conditions, bare identifiers are variables or attributes and
//! constants are numbers, quoted strings, `null` or `@fresh<k>`. Instance
//! rows also accept bare identifiers as constants. `C(val:x)` is the
//! non-null atom, so no relation may be called `C`.

mod lexer;
mod parser;
mod printer;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{Constraint, Query};
use crate::ctable::{CTuple, ConditionalInstance};
use crate::model::{Instance, Schema};
use crate::procedure::Procedure;

pub use lexer::Pos;
pub use printer::{print_workspace, render_value};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum DslError {
    #[error("{line}:{col}: syntax error: expected {expected}, found {found}")]
    Syntax { line: usize, col: usize, expected: String, found: String },

    #[error("{line}:{col}: unresolved {kind} `{name}`")]
    Resolution { line: usize, col: usize, kind: &'static str, name: String },

    #[error("{line}:{col}: `{name}` is declared twice")]
    Duplicate { line: usize, col: usize, name: String },

    #[error("{line}:{col}: tuple {index} of `{relation}` has {found} values, expected {expected}")]
    SchemaConformance { line: usize, col: usize, relation: String, index: usize, expected: usize, found: usize },

    #[error("{line}:{col}: {message}")]
    Invalid { line: usize, col: usize, message: String },

    #[error("invalid workspace JSON: {0}")]
    Json(String),
}

impl DslError {
    /// Source position, when the error came from the text format.
    pub fn position(&self) -> Option<Pos> {
        match *self {
            DslError::Syntax { line, col, .. }
            | DslError::Resolution { line, col, .. }
            | DslError::Duplicate { line, col, .. }
            | DslError::SchemaConformance { line, col, .. }
            | DslError::Invalid { line, col, .. } => Some(Pos { line, col }),
            DslError::Json(_) => None,
        }
    }
}

/// A value declared against a named schema.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Declared<T> {
    pub schema: String,
    pub value: T,
}

/// Named schemas, instances, tables, constraints, procedures, queries and
/// sequences. Names are unique across all kinds.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workspace {
    #[serde(default)]
    pub schemas: BTreeMap<String, Schema>,
    #[serde(default)]
    pub instances: BTreeMap<String, Declared<Instance>>,
    #[serde(default)]
    pub ctables: BTreeMap<String, Declared<ConditionalInstance>>,
    #[serde(default)]
    pub constraints: BTreeMap<String, Constraint>,
    #[serde(default)]
    pub procedures: BTreeMap<String, Procedure>,
    #[serde(default)]
    pub queries: BTreeMap<String, Query>,
    #[serde(default)]
    pub sequences: BTreeMap<String, Vec<String>>,
}

fn json_err(message: impl Into<String>) -> DslError {
    DslError::Json(message.into())
}

impl Workspace {
    pub fn parse(text: &str) -> Result<Workspace, DslError> {
        parser::parse(text)
    }

    pub fn to_dsl(&self) -> String {
        print_workspace(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("workspace serializes")
    }

    /// Loads the JSON mirror and checks the same invariants as the parser.
    pub fn from_json(text: &str) -> Result<Workspace, DslError> {
        let raw: Workspace = serde_json::from_str(text).map_err(|e| json_err(e.to_string()))?;
        let mut ws = Workspace { schemas: raw.schemas, ..Default::default() };
        let mut names: BTreeMap<&str, ()> = BTreeMap::new();
        let all = ws
            .schemas
            .keys()
            .chain(raw.instances.keys())
            .chain(raw.ctables.keys())
            .chain(raw.constraints.keys())
            .chain(raw.procedures.keys())
            .chain(raw.queries.keys())
            .chain(raw.sequences.keys())
            .cloned()
            .collect::<Vec<_>>();
        for n in &all {
            if names.insert(n, ()).is_some() {
                return Err(json_err(format!("`{n}` is declared twice")));
            }
        }
        for (name, d) in raw.instances {
            let schema = ws.schemas.get(&d.schema).ok_or_else(|| json_err(format!("unknown schema `{}`", d.schema)))?;
            let mut inst = Instance::new(schema.clone());
            if d.value.schema() != schema {
                return Err(json_err(format!("instance `{name}` does not match schema `{}`", d.schema)));
            }
            for (rel, rows) in d.value.relations() {
                for row in rows {
                    inst.insert(rel, row.clone()).map_err(|e| json_err(format!("instance `{name}`: {e}")))?;
                }
            }
            ws.instances.insert(name, Declared { schema: d.schema, value: inst });
        }
        for (name, d) in raw.ctables {
            let schema = ws.schemas.get(&d.schema).ok_or_else(|| json_err(format!("unknown schema `{}`", d.schema)))?;
            if d.value.schema() != schema {
                return Err(json_err(format!("table `{name}` does not match schema `{}`", d.schema)));
            }
            let mut t = ConditionalInstance::new(schema.clone());
            for (rel, rows) in d.value.relations() {
                for row in rows {
                    t.insert(rel, CTuple::clone(row)).map_err(|e| json_err(format!("table `{name}`: {e}")))?;
                }
            }
            ws.ctables.insert(name, Declared { schema: d.schema, value: t });
        }
        for (name, c) in &raw.constraints {
            c.validate().map_err(|e| json_err(format!("constraint `{name}`: {e}")))?;
        }
        for (name, p) in &raw.procedures {
            p.validate().map_err(|e| json_err(format!("procedure `{name}`: {e}")))?;
            if &p.name != name {
                return Err(json_err(format!("procedure `{name}` is named `{}`", p.name)));
            }
        }
        for (name, seq) in &raw.sequences {
            if let Some(bad) = seq.iter().find(|p| !raw.procedures.contains_key(*p)) {
                return Err(json_err(format!("sequence `{name}` names unknown procedure `{bad}`")));
            }
        }
        ws.constraints = raw.constraints;
        ws.procedures = raw.procedures;
        ws.queries = raw.queries;
        ws.sequences = raw.sequences;
        Ok(ws)
    }

    /// Parses `.dq.json` files as JSON and everything else as the text
    /// format.
    pub fn load(path: &std::path::Path) -> Result<Workspace, DslError> {
        let text = std::fs::read_to_string(path).map_err(|e| json_err(format!("{}: {e}", path.display())))?;
        if path.to_string_lossy().ends_with(".json") {
            Workspace::from_json(&text)
        } else {
            Workspace::parse(&text)
        }
    }

    pub fn sequence(&self, name: &str) -> Option<Vec<Procedure>> {
        self.sequences.get(name).map(|s| s.iter().map(|p| self.procedures[p].clone()).collect())
    }

    pub fn is_empty(&self) -> bool {
        self.schemas.is_empty()
            && self.instances.is_empty()
            && self.ctables.is_empty()
            && self.constraints.is_empty()
            && self.procedures.is_empty()
            && self.queries.is_empty()
            && self.sequences.is_empty()
    }
}
