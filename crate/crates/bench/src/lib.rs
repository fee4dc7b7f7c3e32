//! Size-parameterised fixtures for the benchmarks under `benches/`.

use dqwb_core::{
    instantiate_template, Constraint, Instance, NamedAtom, Procedure, Query, Schema, StructureConstraint, Template,
    Tgd, Value,
};

/// `n` relations of three attributes and a procedure that requires each of
/// them and adds an attribute to each.
pub fn widening(n: usize) -> (Schema, Procedure) {
    let schema = Schema::from_relations(
        (0..n).map(|k| (format!("R{k}"), vec![format!("a{k}"), format!("b{k}"), format!("c{k}")])),
    )
    .expect("distinct attributes");
    let p = Procedure::new("widen")
        .with_pre((0..n).map(|k| Constraint::Structure(StructureConstraint::wildcard(format!("R{k}")))))
        .with_post((0..n).map(|k| Constraint::Structure(StructureConstraint::attrs(format!("R{k}"), ["extra"]))));
    (schema, p)
}

fn copy_step(name: &str, from: &str, to: &str, attrs: &[&str]) -> Procedure {
    let vars: Vec<(&str, &str)> = attrs.iter().map(|a| (*a, *a)).collect();
    let t = Tgd::new(vec![NamedAtom::vars(from, &vars)], vec![], vec![NamedAtom::vars(to, &vars)], vec![]);
    Procedure::new(name)
        .with_scope([StructureConstraint::wildcard(to)])
        .with_pre([Constraint::Structure(StructureConstraint::attrs(from, attrs.iter().copied()))])
        .with_post([Constraint::Tgd(t)])
        .with_safe([Query::Total(to.into())])
}

/// An instance of `n` tuples over `S(A, B)`, `R(A, B)`, `T(A)` and a
/// copy / widen / project sequence over it.
pub fn pipeline(n: usize) -> (Instance, Vec<Procedure>) {
    let schema = Schema::from_relations([("S", vec!["A", "B"]), ("R", vec!["A", "B"]), ("T", vec!["A"])])
        .expect("distinct attributes");
    let mut i = Instance::new(schema);
    for k in 0..n {
        let rel = if k % 5 == 0 { "R" } else { "S" };
        i.insert(&rel.into(), vec![Value::constant(k.to_string()), Value::constant((k % 7).to_string())])
            .expect("arity 2");
    }
    let widen = instantiate_template("widen", Template::AlterTable { relation: "R".into(), attributes: vec!["C".into()] })
        .expect("valid template");
    (i, vec![copy_step("copy", "S", "R", &["A", "B"]), widen, copy_step("project", "R", "T", &["A"])])
}
