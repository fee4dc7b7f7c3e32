use std::fmt::Write;

use super::Workspace;
use crate::constraint::{BoolCondition, ConjunctiveQuery, Constraint, NamedAtom, Query, Shape, StructureConstraint, Term};
use crate::ctable::{Cell, ElementCondition};
use crate::model::{canonical_number, quote, AttributeSet, Value};
use crate::procedure::{InsertSource, Procedure, Template};

/// Constants as written in atoms and rows: numbers and fresh constants
/// bare, everything else quoted.
pub fn render_value(v: &Value) -> String {
    match v {
        Value::Constant(t) if v.is_fresh() || canonical_number(t).as_deref() == Some(t.as_str()) => t.clone(),
        Value::Constant(t) => quote(t),
        Value::Null(t) if t.is_empty() => "null".into(),
        Value::Null(t) => format!("null({})", quote(t)),
    }
}

fn join<T>(items: &[T], sep: &str, f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(sep)
}

fn attrs(set: &AttributeSet) -> String {
    set.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ")
}

fn term(t: &Term) -> String {
    match t {
        Term::Var(v) => v.to_string(),
        Term::Const(c) => render_value(c),
    }
}

fn atom(a: &NamedAtom) -> String {
    format!("{}({})", a.relation, join(&a.bindings, ", ", |(attr, t)| format!("{attr}:{}", term(t))))
}

fn conjunction(q: &ConjunctiveQuery) -> String {
    let mut parts: Vec<String> = q.atoms.iter().map(atom).collect();
    parts.extend(q.constant_atoms.iter().map(|c| c.to_string()));
    if parts.is_empty() {
        "true".into()
    } else {
        parts.join(" & ")
    }
}

fn exists(vars: &std::collections::BTreeSet<crate::model::VariableName>) -> String {
    if vars.is_empty() {
        String::new()
    } else {
        format!("exists {} . ", vars.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "))
    }
}

pub(crate) fn cq(q: &ConjunctiveQuery) -> String {
    let default: Vec<_> = q.variables_in_order().into_iter().filter(|v| !q.existential.contains(v)).collect();
    let prefix = if q.free != default { format!("({}) <- ", join(&q.free, ", ", |v| v.to_string())) } else { String::new() };
    format!("{prefix}{}{}", exists(&q.existential), conjunction(q))
}

fn structure(s: &StructureConstraint) -> String {
    match &s.shape {
        Shape::Wildcard => format!("{}[*]", s.relation),
        Shape::Attrs(a) => format!("{}[{}]", s.relation, join(a, ", ", |x| x.to_string())),
    }
}

pub(crate) fn constraint(c: &Constraint) -> String {
    match c {
        Constraint::Structure(s) => structure(s),
        Constraint::Tgd(t) => format!("{} -> {}{}", conjunction(&t.body), exists(&t.head.existential), conjunction(&t.head)),
        Constraint::Egd(e) => format!("{} -> {} = {}", conjunction(&e.body), e.left, e.right),
    }
}

fn bcond_child(c: &BoolCondition) -> String {
    match c {
        BoolCondition::And(cs) | BoolCondition::Or(cs) if !cs.is_empty() => format!("({})", bcond(c)),
        _ => bcond(c),
    }
}

pub(crate) fn bcond(c: &BoolCondition) -> String {
    match c {
        BoolCondition::True => "true".into(),
        BoolCondition::AttrEq(a, b) => format!("{a} = {b}"),
        BoolCondition::EqConst(a, v) => format!("{a} = {}", render_value(v)),
        BoolCondition::NeConst(a, v) => format!("{a} != {}", render_value(v)),
        BoolCondition::Not(inner) => format!("not ({})", bcond(inner)),
        BoolCondition::And(cs) if cs.is_empty() => "true".into(),
        BoolCondition::Or(cs) if cs.is_empty() => "false".into(),
        BoolCondition::And(cs) => join(cs, " and ", bcond_child),
        BoolCondition::Or(cs) => join(cs, " or ", bcond_child),
    }
}

fn cell(c: &Cell) -> String {
    match c {
        Cell::Val(v) => render_value(v),
        Cell::Null(n) => n.to_string(),
    }
}

fn econd_child(c: &ElementCondition) -> String {
    match c {
        ElementCondition::And(cs) | ElementCondition::Or(cs) if !cs.is_empty() => format!("({})", econd(c)),
        _ => econd(c),
    }
}

pub(crate) fn econd(c: &ElementCondition) -> String {
    match c {
        ElementCondition::True => "true".into(),
        ElementCondition::Eq(n, x) => format!("{n} = {}", cell(x)),
        ElementCondition::Ne(n, x) => format!("{n} != {}", cell(x)),
        ElementCondition::And(cs) if cs.is_empty() => "true".into(),
        ElementCondition::Or(cs) if cs.is_empty() => "false".into(),
        ElementCondition::And(cs) => join(cs, " and ", econd_child),
        ElementCondition::Or(cs) => join(cs, " or ", econd_child),
    }
}

pub(crate) fn query(q: &Query) -> String {
    match q {
        Query::Cq(q) => format!("cq {}", cq(q)),
        Query::Total(r) => format!("total {r}"),
        Query::FilteredTotal { relation, condition } => format!("filtered {relation} where {}", bcond(condition)),
    }
}

fn template(t: &Template) -> String {
    let names = |xs: &[crate::model::AttributeName]| join(xs, ", ", |x| x.to_string());
    let body = match t {
        Template::DataExchange { dependencies } => join(dependencies, "; ", constraint),
        Template::AlterTable { relation, attributes } => format!("{relation}; {}", names(attributes)),
        Template::AttributeCopy { target, source, keys, attribute, structural } => {
            let tail = if *structural { "; structural" } else { "" };
            format!("{target}; {source}; {}; {attribute}{tail}", names(keys))
        }
        Template::NullScrub { relation, attribute, context } => format!("{relation}; {attribute}; {}", names(context)),
        Template::SqlInsert { relation, attributes, source } => {
            let src = match source {
                InsertSource::Values(vs) => format!("values ({})", join(vs, ", ", render_value)),
                InsertSource::Query(q) => format!("cq {}", cq(q)),
            };
            format!("{relation}; {}; {src}", names(attributes))
        }
        Template::SqlDelete { relation, condition } => format!("{relation}; {}", bcond(condition)),
    };
    format!("{}({body})", t.kind())
}

fn procedure(out: &mut String, name: &str, p: &Procedure) {
    if let Some(t) = &p.template {
        let _ = writeln!(out, "proc {name} = template {};", template(t));
        return;
    }
    let _ = writeln!(out, "proc {name} {{");
    let mut section = |label: &str, items: Vec<String>| {
        if !items.is_empty() {
            let _ = writeln!(out, "  {label} {{ {}; }}", items.join("; "));
        }
    };
    section("scope", p.scope.iter().map(structure).collect());
    section("pre", p.pre.iter().map(constraint).collect());
    section("post", p.post.iter().map(constraint).collect());
    section("safe", p.safe.iter().map(query).collect());
    out.push_str("}\n");
}

/// Renders a workspace in the text format; parsing the result gives back
/// an equal workspace.
pub fn print_workspace(ws: &Workspace) -> String {
    let mut out = String::new();
    for (name, s) in &ws.schemas {
        let _ = writeln!(out, "schema {name} {{");
        for (rel, a) in s.relations() {
            let _ = writeln!(out, "  rel {rel}({});", attrs(a));
        }
        out.push_str("}\n\n");
    }
    for (name, d) in &ws.instances {
        let _ = writeln!(out, "instance {name} : {} {{", d.schema);
        for (rel, rows) in d.value.relations().filter(|(_, rows)| !rows.is_empty()) {
            let rows: Vec<String> = rows.iter().map(|r| format!("({})", join(r, ", ", render_value))).collect();
            let _ = writeln!(out, "  {rel}: {};", rows.join(", "));
        }
        out.push_str("}\n\n");
    }
    for (name, d) in &ws.ctables {
        let _ = writeln!(out, "ctable {name} : {} {{", d.schema);
        for (rel, rows) in d.value.relations().filter(|(_, rows)| !rows.is_empty()) {
            let rows: Vec<String> = rows
                .iter()
                .map(|r| {
                    let cells = format!("({})", join(&r.cells, ", ", cell));
                    if r.condition.is_true() {
                        cells
                    } else {
                        format!("{cells} | {}", econd(&r.condition))
                    }
                })
                .collect();
            let _ = writeln!(out, "  {rel}: {};", rows.join(", "));
        }
        out.push_str("}\n\n");
    }
    for (name, c) in &ws.constraints {
        let kw = match c {
            Constraint::Tgd(_) => "tgd",
            Constraint::Egd(_) => "egd",
            Constraint::Structure(_) => "struct",
        };
        let _ = writeln!(out, "{kw} {name} : {};", constraint(c));
    }
    if !ws.constraints.is_empty() {
        out.push('\n');
    }
    for (name, p) in &ws.procedures {
        procedure(&mut out, name, p);
    }
    if !ws.procedures.is_empty() {
        out.push('\n');
    }
    for (name, q) in &ws.queries {
        let _ = writeln!(out, "query {name} : {};", query(q));
    }
    for (name, s) in &ws.sequences {
        let _ = writeln!(out, "seq {name} = {};", s.join(", "));
    }
    out
}
