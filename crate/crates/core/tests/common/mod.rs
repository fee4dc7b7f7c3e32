//! Seeded generators and brute-force reference checks shared by the
//! integration tests and the acceptance suite.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

use dqwb_core::chase::{apply_alter_schema, chase_safe_scope};
use dqwb_core::{
    classify, instantiate_template, AttributeName, Budget, CTuple, Cell, Class, ConditionalInstance, Constraint,
    ElementCondition, Instance, LabeledNull, NamedAtom, Procedure, Query, RelationName, Schema, StructureConstraint,
    Template, Term, Tgd, Value,
};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn c(k: usize) -> Value {
    Value::constant((k + 1).to_string())
}

pub fn rel(name: &str) -> RelationName {
    RelationName::new(name)
}

fn pick_subset(r: &mut StdRng, pool: &[&str], max: usize) -> Vec<String> {
    loop {
        let chosen: Vec<String> = pool.iter().filter(|_| r.random_bool(0.5)).map(|s| s.to_string()).collect();
        if !chosen.is_empty() && chosen.len() <= max {
            return chosen;
        }
    }
}

/// Relations named `names`, each over one or two attributes of `A, B, C`.
pub fn random_schema(r: &mut StdRng, names: &[&str], max_arity: usize) -> Schema {
    let rels: Vec<(String, Vec<String>)> =
        names.iter().map(|n| (n.to_string(), pick_subset(r, &["A", "B", "C"], max_arity))).collect();
    Schema::from_relations(rels).unwrap()
}

pub fn random_tuple(r: &mut StdRng, arity: usize, domain: usize) -> Vec<Value> {
    (0..arity).map(|_| c(r.random_range(0..domain))).collect()
}

/// Fills every relation with between `min` and `max` tuples over `domain`
/// constants, stopping once `total` tuples exist.
pub fn fill(r: &mut StdRng, schema: &Schema, min: usize, max: usize, total: usize, domain: usize) -> Instance {
    let mut i = Instance::new(schema.clone());
    for (name, attrs) in schema.relations() {
        let want = r.random_range(min..=max);
        let mut tries = 0;
        while i.tuples(name).len() < want && tries < 20 {
            tries += 1;
            if i.tuple_count() >= total && i.tuples(name).len() >= min {
                break;
            }
            i.insert(name, random_tuple(r, attrs.len(), domain)).unwrap();
        }
    }
    i
}

fn attrs_of(s: &Schema, rel: &RelationName) -> Vec<AttributeName> {
    s.get(rel).unwrap().iter().cloned().collect()
}

fn var(name: String) -> Term {
    Term::Var(name.into())
}

/// A tgd from `body_rel` to `head_rel`: the body binds every attribute to a
/// distinct variable, the head reuses body variables or invents
/// existential ones.
pub fn random_tgd(r: &mut StdRng, s: &Schema, body_rels: &[RelationName], head_rel: &RelationName, join: bool) -> Tgd {
    let mut vars: Vec<String> = Vec::new();
    let mut body = Vec::new();
    for (k, br) in body_rels.iter().enumerate() {
        let mut bindings = Vec::new();
        for a in attrs_of(s, br) {
            let v = if k > 0 && join && !vars.is_empty() && r.random_bool(0.5) {
                vars.choose(r).unwrap().clone()
            } else {
                let v = format!("x{}", vars.len());
                vars.push(v.clone());
                v
            };
            bindings.push((a, var(v)));
        }
        body.push(NamedAtom::new(br.clone(), bindings));
    }
    let head_attrs: Vec<AttributeName> = {
        let all = attrs_of(s, head_rel);
        let mut keep: Vec<AttributeName> = all.iter().filter(|_| r.random_bool(0.75)).cloned().collect();
        if keep.is_empty() {
            keep.push(all.choose(r).unwrap().clone());
        }
        keep
    };
    let mut n_exist = 0;
    let head_bindings = head_attrs
        .into_iter()
        .map(|a| {
            let t = if r.random_bool(0.8) {
                var(vars.choose(r).unwrap().clone())
            } else {
                n_exist += 1;
                var(format!("z{n_exist}"))
            };
            (a, t)
        })
        .collect();
    Tgd::simple(body, vec![NamedAtom::new(head_rel.clone(), head_bindings)])
}

/// A data-exchange setting: nonempty source relations, empty target
/// relations each of which is the head of some dependency.
#[derive(Clone, Debug)]
pub struct DataExchange {
    pub instance: Instance,
    pub sources: Vec<RelationName>,
    pub targets: Vec<RelationName>,
    pub tgds: Vec<Tgd>,
    pub procedure: Procedure,
    pub budget: Budget,
}

pub fn data_exchange(seed: u64) -> DataExchange {
    let r = &mut rng(seed);
    let ns = r.random_range(1..=2usize);
    let nt = if ns == 2 { 1 } else { r.random_range(1..=2usize) };
    let sources: Vec<RelationName> = (0..ns).map(|k| rel(&format!("S{k}"))).collect();
    let targets: Vec<RelationName> = (0..nt).map(|k| rel(&format!("T{k}"))).collect();
    let names: Vec<String> = sources.iter().chain(&targets).map(|x| x.to_string()).collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let schema = random_schema(r, &name_refs, 2);
    let domain = r.random_range(2..=5usize);
    let mut instance = Instance::new(schema.clone());
    for s in &sources {
        let arity = schema.get(s).unwrap().len();
        let n = r.random_range(1..=(4 / ns));
        for _ in 0..n {
            instance.insert(s, random_tuple(r, arity, domain)).unwrap();
        }
    }
    let count = nt.max(r.random_range(1..=2usize));
    let tgds: Vec<Tgd> = (0..count)
        .map(|k| {
            let mut body = vec![sources.choose(r).unwrap().clone()];
            if r.random_bool(0.3) {
                body.push(sources.choose(r).unwrap().clone());
            }
            random_tgd(r, &schema, &body, &targets[k % nt], true)
        })
        .collect();
    let deps = tgds.iter().cloned().map(Constraint::Tgd).collect();
    let procedure = instantiate_template("exchange", Template::DataExchange { dependencies: deps }).unwrap();
    let budget = Budget {
        extra_constants: r.random_range(0..=1),
        max_new_tuples: r.random_range(1..=2),
        max_new_attributes: 0,
        allow_schema_growth: r.random_bool(0.5),
    };
    DataExchange { instance, sources, targets, tgds, procedure, budget }
}

fn position(s: &Schema, rel: &RelationName, a: &AttributeName) -> usize {
    s.get(rel).unwrap().iter().position(|x| x == a).unwrap()
}

/// Brute-force tgd satisfaction: every assignment of the body variables
/// over the active domain that makes the body true extends to the head.
pub fn brute_tgd_holds(t: &Tgd, i: &Instance) -> bool {
    let adom: Vec<Value> = i.active_domain().into_iter().collect();
    let s = i.schema();
    let atom_true = |a: &NamedAtom, env: &BTreeMap<String, Value>| {
        i.tuples(&a.relation).iter().any(|row| {
            a.bindings.iter().all(|(attr, term)| {
                let want = match term {
                    Term::Var(v) => env[v.as_str()].clone(),
                    Term::Const(k) => k.clone(),
                };
                row[position(s, &a.relation, attr)] == want
            })
        })
    };
    let body_vars: Vec<String> = t.body.variables_in_order().iter().map(|v| v.to_string()).collect();
    let head_vars: Vec<String> = t.head.existential.iter().map(|v| v.to_string()).collect();
    fn assignments(vars: &[String], adom: &[Value], env: &mut BTreeMap<String, Value>, f: &mut dyn FnMut(&BTreeMap<String, Value>) -> bool) -> bool {
        match vars.split_first() {
            None => f(env),
            Some((v, rest)) => {
                for x in adom {
                    env.insert(v.clone(), x.clone());
                    if !assignments(rest, adom, env, f) {
                        return false;
                    }
                }
                env.remove(v);
                true
            }
        }
    }
    let mut env = BTreeMap::new();
    assignments(&body_vars, &adom, &mut env, &mut |env| {
        if !t.body.atoms.iter().all(|a| atom_true(a, env)) {
            return true;
        }
        let mut found = false;
        let mut env2 = env.clone();
        assignments(&head_vars, &adom, &mut env2, &mut |e| {
            if t.head.atoms.iter().all(|a| atom_true(a, e)) {
                found = true;
                return false;
            }
            true
        });
        found
    })
}

/// The budgeted solutions of a data-exchange setting, built directly:
/// the source part stays as it is and at most `max_new_tuples` target
/// tuples over the value pool are added, keeping those that satisfy every
/// dependency.
pub fn budgeted_solutions(de: &DataExchange) -> BTreeSet<Instance> {
    let mut pool: BTreeSet<Value> = de.instance.active_domain();
    for t in &de.tgds {
        pool.extend(t.body.constants());
        pool.extend(t.head.constants());
    }
    pool.extend((0..de.budget.extra_constants).map(Value::fresh));
    let pool: Vec<Value> = pool.into_iter().collect();
    let s = de.instance.schema();
    let mut universe: Vec<(RelationName, Vec<Value>)> = Vec::new();
    for t in &de.targets {
        let arity = s.get(t).unwrap().len();
        let mut rows = vec![Vec::new()];
        for _ in 0..arity {
            rows = rows.into_iter().flat_map(|row: Vec<Value>| pool.iter().map(move |v| [row.clone(), vec![v.clone()]].concat())).collect();
        }
        universe.extend(rows.into_iter().map(|row| (t.clone(), row)));
    }
    let mut out = BTreeSet::new();
    let mut chosen: Vec<usize> = Vec::new();
    fn go(
        start: usize,
        left: usize,
        chosen: &mut Vec<usize>,
        universe: &[(RelationName, Vec<Value>)],
        de: &DataExchange,
        out: &mut BTreeSet<Instance>,
    ) {
        let mut j = de.instance.clone();
        for &k in chosen.iter() {
            j.insert(&universe[k].0, universe[k].1.clone()).unwrap();
        }
        if de.tgds.iter().all(|t| brute_tgd_holds(t, &j)) {
            out.insert(j);
        }
        if left == 0 {
            return;
        }
        for k in start..universe.len() {
            chosen.push(k);
            go(k + 1, left - 1, chosen, universe, de, out);
            chosen.pop();
        }
    }
    go(0, de.budget.max_new_tuples, &mut chosen, &universe, de, &mut out);
    out
}

/// A safe-scope procedure with one tgd from `body` into `head`.
pub fn safe_scope(name: &str, t: Tgd, body_attrs: Vec<(RelationName, Vec<AttributeName>)>) -> Procedure {
    let head = t.head_relations().into_iter().next().unwrap();
    Procedure::new(name)
        .with_scope([StructureConstraint::wildcard(head.clone())])
        .with_pre(body_attrs.into_iter().map(|(r, a)| Constraint::Structure(StructureConstraint::attrs(r, a))))
        .with_post([Constraint::Tgd(t)])
        .with_safe([Query::Total(head)])
}

const NEW_ATTRS: [&str; 2] = ["D", "E"];

/// Chase input: an instance and a sequence of safe-scope and alter-schema
/// procedures, built against the schema each step is expected to see.
#[derive(Clone, Debug)]
pub struct ChaseCase {
    pub instance: Instance,
    pub procedures: Vec<Procedure>,
    pub budget: Budget,
}

fn random_step(r: &mut StdRng, k: usize, s: &mut Schema) -> Procedure {
    let rels: Vec<RelationName> = s.relation_names().cloned().collect();
    let added: Vec<AttributeName> = NEW_ATTRS.iter().map(|a| AttributeName::new(*a)).collect();
    if r.random_bool(0.35) {
        let target = rels.choose(r).unwrap().clone();
        let fresh: Vec<&AttributeName> = added.iter().filter(|a| !s.get(&target).unwrap().contains(*a)).collect();
        if let Some(a) = fresh.choose(r) {
            let p = instantiate_template(
                format!("alter{k}"),
                Template::AlterTable { relation: target.clone(), attributes: vec![(*a).clone()] },
            )
            .unwrap();
            let mut attrs = s.get(&target).unwrap().clone();
            attrs.insert((*a).clone());
            s.set(target, attrs);
            return p;
        }
    }
    let head = rels.choose(r).unwrap().clone();
    let others: Vec<RelationName> = rels.iter().filter(|x| **x != head).cloned().collect();
    let body = others.choose(r).unwrap().clone();
    let t = random_tgd(r, s, std::slice::from_ref(&body), &head, false);
    let body_attrs = attrs_of(s, &body);
    safe_scope(&format!("copy{k}"), t, vec![(body, body_attrs)])
}

/// Tuples added by each chase step, or `None` when the sequence is not
/// applicable.
pub fn chase_growth(i: &Instance, ps: &[Procedure]) -> Option<Vec<usize>> {
    let mut t = ConditionalInstance::from_instance(i);
    let mut out = Vec::new();
    for p in ps {
        let before = t.tuple_count();
        t = match classify(p) {
            Class::SafeScope => chase_safe_scope(&t, p).ok()?,
            Class::AlterSchema => apply_alter_schema(&t, p).ok()?.table()?.clone(),
            Class::Neither => return None,
        };
        out.push(t.tuple_count().saturating_sub(before));
    }
    Some(out)
}

/// Relations of `i` that become wider during `ps`, with their final row
/// counts.
fn altered_rows(i: &Instance, ps: &[Procedure]) -> usize {
    ps.iter()
        .filter(|p| classify(p) == Class::AlterSchema)
        .filter_map(|p| p.post.first())
        .filter_map(|c| match c {
            Constraint::Structure(s) => Some(i.tuples(&s.relation).len() + 2),
            _ => None,
        })
        .sum()
}

/// Chase cases over two relations with at most six tuples. Cases where
/// the chase adds more tuples in one step than the budget allows are
/// redrawn, as are inapplicable sequences and sequences whose budgeted
/// outcome space is too large to enumerate.
pub fn chase_case(seed: u64) -> ChaseCase {
    let r = &mut rng(seed);
    let budget = Budget { extra_constants: 1, max_new_tuples: 2, max_new_attributes: 0, allow_schema_growth: true };
    loop {
        let schema = random_schema(r, &["R", "S"], 2);
        let instance = fill(r, &schema, 1, 3, 6, 3);
        let len = r.random_range(1..=3usize);
        let mut s = schema.clone();
        let procedures: Vec<Procedure> = (0..len).map(|k| random_step(r, k, &mut s)).collect();
        let Some(growth) = chase_growth(&instance, &procedures) else { continue };
        if growth.iter().any(|&g| g > budget.max_new_tuples) || altered_rows(&instance, &procedures) > 5 {
            continue;
        }
        return ChaseCase { instance, procedures, budget };
    }
}

/// A random conditional instance over `R(A, B), S(A)` with nulls
/// `?n0 .. ?n2` and optional row conditions.
pub fn ctable(seed: u64, positive: bool) -> ConditionalInstance {
    let r = &mut rng(seed);
    let schema = Schema::from_relations([("R", vec!["A", "B"]), ("S", vec!["A"])]).unwrap();
    let mut t = ConditionalInstance::new(schema.clone());
    let cell = |r: &mut StdRng| {
        if r.random_bool(0.4) {
            Cell::null(&format!("n{}", r.random_range(0..3)))
        } else {
            Cell::Val(c(r.random_range(0..3)))
        }
    };
    for (name, attrs) in schema.relations() {
        for _ in 0..r.random_range(0..=2) {
            let cells: Vec<Cell> = (0..attrs.len()).map(|_| cell(r)).collect();
            let condition = if r.random_bool(0.4) { condition(r, positive, 2) } else { ElementCondition::True };
            t.insert(name, CTuple { cells, condition }).unwrap();
        }
    }
    t
}

pub fn condition(r: &mut StdRng, positive: bool, depth: usize) -> ElementCondition {
    let n = LabeledNull::new(format!("n{}", r.random_range(0..3)));
    let other = if r.random_bool(0.5) { Cell::null(&format!("n{}", r.random_range(0..3))) } else { Cell::Val(c(r.random_range(0..3))) };
    if depth == 0 || r.random_bool(0.5) {
        return if positive || r.random_bool(0.5) { ElementCondition::Eq(n, other) } else { ElementCondition::Ne(n, other) };
    }
    let parts = (0..r.random_range(1..=2)).map(|_| condition(r, positive, depth - 1)).collect();
    if r.random_bool(0.5) {
        ElementCondition::And(parts)
    } else {
        ElementCondition::Or(parts)
    }
}

/// Random valuation of the nulls of `t` into `1..=3` and `@fresh0`.
pub fn valuation(r: &mut StdRng, t: &ConditionalInstance) -> BTreeMap<LabeledNull, Value> {
    t.nulls().into_iter().map(|n| (n, if r.random_bool(0.2) { Value::fresh(0) } else { c(r.random_range(0..3)) })).collect()
}

/// Adds up to `n` random tuples over `1..=4` to `i`.
pub fn extend_randomly(r: &mut StdRng, i: &Instance, n: usize) -> Instance {
    let mut j = i.clone();
    let rels: Vec<(RelationName, usize)> = i.schema().relations().map(|(x, a)| (x.clone(), a.len())).collect();
    for _ in 0..n {
        let (name, arity) = rels.choose(r).unwrap();
        j.insert(name, random_tuple(r, *arity, 4)).unwrap();
    }
    j
}

const TEXT_VALUES: [&str; 9] = ["1", "-2.5", "\"x y\"", "\"q\\\"t\"", "null", "null(\"n\")", "@fresh0", "bare", "\"007\""];

fn join(items: Vec<String>, sep: &str) -> String {
    items.join(sep)
}

/// Workspace text exercising every kind of declaration.
pub fn workspace_text(seed: u64) -> String {
    let r = &mut rng(seed);
    let attrs = ["a", "b", "c"];
    let rels = ["R0", "R1", "R2"];
    let mut schema: Vec<(&str, Vec<&str>)> = Vec::new();
    for rl in rels.iter().take(r.random_range(1..=3)) {
        let mut a: Vec<&str> = attrs.iter().copied().filter(|_| r.random_bool(0.6)).collect();
        if a.is_empty() {
            a.push("a");
        }
        schema.push((rl, a));
    }
    let mut out = String::new();
    out.push_str("# generated\nschema S0 {\n");
    for (rl, a) in &schema {
        out.push_str(&format!("  rel {rl}({});\n", a.join(", ")));
    }
    out.push_str("}\n");
    if r.random_bool(0.5) {
        out.push_str("schema S1 extends S0 { rel Extra(z); }\n");
    }
    let row_value = |r: &mut StdRng| TEXT_VALUES.choose(r).unwrap().to_string();
    let value = |r: &mut StdRng| TEXT_VALUES.iter().filter(|v| **v != "bare").collect::<Vec<_>>().choose(r).unwrap().to_string();
    out.push_str("instance I0 : S0 {\n");
    for (rl, a) in &schema {
        let rows: Vec<String> =
            (0..r.random_range(0..=3)).map(|_| format!("({})", join(a.iter().map(|_| row_value(r)).collect(), ", "))).collect();
        if !rows.is_empty() {
            out.push_str(&format!("  {rl}: {};\n", rows.join(", ")));
        }
    }
    out.push_str("}\n");
    let econd = |r: &mut StdRng| {
        let lit = |r: &mut StdRng| {
            let op = if r.random_bool(0.5) { "=" } else { "!=" };
            let rhs = if r.random_bool(0.5) { format!("?n{}", r.random_range(0..2)) } else { value(r) };
            format!("?n{} {op} {rhs}", r.random_range(0..2))
        };
        match r.random_range(0..3) {
            0 => lit(r),
            1 => format!("{} and ({} or {})", lit(r), lit(r), lit(r)),
            _ => format!("({} or {}) and {}", lit(r), lit(r), lit(r)),
        }
    };
    out.push_str("ctable T0 : S0 {\n");
    for (rl, a) in &schema {
        let rows: Vec<String> = (0..r.random_range(0..=2))
            .map(|_| {
                let cells = join(a.iter().map(|_| if r.random_bool(0.5) { format!("?n{}", r.random_range(0..2)) } else { row_value(r) }).collect(), ", ");
                if r.random_bool(0.5) {
                    format!("({cells}) | {}", econd(r))
                } else {
                    format!("({cells})")
                }
            })
            .collect();
        if !rows.is_empty() {
            out.push_str(&format!("  {rl}: {};\n", rows.join(", ")));
        }
    }
    out.push_str("}\n");
    let atom = |r: &mut StdRng, (rl, a): &(&str, Vec<&str>), vars: &[&str]| {
        let mut b: Vec<String> = vec![format!("{}:{}", a[0], vars[0])];
        for x in a.iter().skip(1) {
            if r.random_bool(0.7) {
                let t = if r.random_bool(0.8) { vars.choose(r).unwrap().to_string() } else { value(r) };
                b.push(format!("{x}:{t}"));
            }
        }
        format!("{rl}({})", b.join(", "))
    };
    let (r0, r1) = (&schema[0], schema.choose(r).unwrap());
    let body = atom(r, r0, &["x", "y"]);
    let head = atom(r, r1, &["x", "y", "w"]);
    let plain = format!("{body} -> {head}");
    let tgd = if body.contains(":x") && r.random_bool(0.4) { format!("{body} & C(val:x) -> {head}") } else { plain.clone() };
    out.push_str(&format!("tgd t0 : {tgd}\n"));
    out.push_str(&format!("egd e0 : {}({}:x) & {}({}:y) -> x = y\n", r0.0, r0.1[0], r0.0, r0.1[0]));
    out.push_str(&format!("struct s0 : {}[{}]\n", r1.0, r1.1.join(", ")));
    let lit_bcond = |r: &mut StdRng, a: &[&str]| {
        let x = a.choose(r).unwrap();
        match r.random_range(0..3) {
            0 => format!("{x} = {}", value(r)),
            1 => format!("{x} != {}", value(r)),
            _ => format!("{x} = {}", a.choose(r).unwrap()),
        }
    };
    let bcond = format!("not ({}) or {}", lit_bcond(r, &r0.1), lit_bcond(r, &r0.1));
    let safe = match r.random_range(0..3) {
        0 => format!("total {}", r1.0),
        1 => format!("cq {}", atom(r, r0, &["x"])),
        _ => format!("filtered {} where {bcond}", r0.0),
    };
    out.push_str(&format!(
        "proc p0 {{\n  scope {{ {}[*]; }}\n  pre {{ s0; {}[{}]; }}\n  post {{ t0; e0; }}\n  safe {{ {safe}; }}\n}}\n",
        r1.0,
        r0.0,
        r0.1.join(", ")
    ));
    out.push_str(&format!("proc p1 = template alter_table({}; new1, new2)\n", r0.0));
    out.push_str(&format!("proc p2 = template sql_delete({}; {bcond})\n", r0.0));
    let vals = join(r0.1.iter().map(|_| value(r)).collect(), ", ");
    out.push_str(&format!("proc p3 = template sql_insert({}; {}; values ({vals}))\n", r0.0, r0.1.join(", ")));
    if r0.1.len() > 1 {
        out.push_str(&format!("proc p4 = template null_scrub({}; {}; {})\n", r0.0, r0.1[0], r0.1[1..].join(", ")));
        out.push_str(&format!("proc p5 = template attribute_copy({}; {}; {}; {}; structural)\n", r0.0, r1.0, r0.1[0], r0.1[1]));
    }
    out.push_str(&format!("proc p6 = template data_exchange({plain}; {plain})\n"));
    let q = match r.random_range(0..3) {
        0 => format!("exists y . {}({}:y) & {}", r0.0, r0.1[0], atom(r, r1, &["x", "y"])),
        1 => format!("(y, x) <- {} & {}", atom(r, r0, &["x"]), atom(r, r1, &["y"])),
        _ => format!("cq {}", atom(r, r1, &["x"])),
    };
    out.push_str(&format!("query q0 : {q}\nquery q1 : total {}\n", r1.0));
    let seq: Vec<&str> = ["p1", "p2", "p3"].iter().copied().filter(|_| r.random_bool(0.5)).collect();
    out.push_str(&format!("seq run0 = {}\n", seq.join(", ")));
    out
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Valuation images of a table are in its representation, and so is every
/// extension of a member.
pub fn prop_rep_extension_closure(seed: u64) -> Result<(), String> {
    use dqwb_core::{apply_valuation, rep_contains};
    let r = &mut rng(seed ^ 0x5eed);
    let t = ctable(seed, r.random_bool(0.5));
    let v = valuation(r, &t);
    let i = apply_valuation(&t, &v).map_err(|e| e.to_string())?;
    ensure(rep_contains(&t, &i), || format!("image not in rep:\n{t}\n{i}"))?;
    let j = extend_randomly(r, &i, 2);
    ensure(rep_contains(&t, &j), || format!("extension left rep:\n{t}\n{j}"))?;
    let k = extend_randomly(r, &Instance::new(t.schema().clone()), 3);
    if rep_contains(&t, &k) {
        let k2 = extend_randomly(r, &k, 1);
        ensure(rep_contains(&t, &k2), || format!("extension left rep:\n{t}\n{k2}"))?;
    }
    Ok(())
}

fn value_pool(i: &Instance, p: &Procedure, b: &Budget) -> Vec<Value> {
    let mut pool = i.active_domain();
    pool.extend(p.constants());
    pool.extend((0..b.extra_constants).map(Value::fresh));
    pool.into_iter().collect()
}

/// Single procedures over small instances for checking the oracle against
/// the outcome checker.
pub fn checker_case(seed: u64) -> (Instance, Procedure, Budget) {
    use dqwb_core::BoolCondition;
    let r = &mut rng(seed);
    let schema = random_schema(r, &["R", "S"], 2);
    let i = fill(r, &schema, 1, 2, 4, 2);
    let mut s = schema.clone();
    let p = match r.random_range(0..4) {
        0 => {
            let rr = rel("R");
            let a = attrs_of(&schema, &rr)[0].clone();
            instantiate_template("delete", Template::SqlDelete { relation: rr, condition: BoolCondition::EqConst(a, c(0)) })
                .unwrap()
        }
        1 => {
            let a = attrs_of(&schema, &rel("S"));
            instantiate_template(
                "insert",
                Template::SqlInsert {
                    relation: rel("S"),
                    attributes: a.clone(),
                    source: dqwb_core::InsertSource::Values(a.iter().map(|_| c(2)).collect()),
                },
            )
            .unwrap()
        }
        _ => random_step(r, 0, &mut s),
    };
    let b = Budget {
        extra_constants: r.random_range(0..=1),
        max_new_tuples: 1,
        max_new_attributes: 0,
        allow_schema_growth: true,
    };
    (i, p, b)
}

/// Every enumerated outcome passes the checker, and every instance of the
/// budgeted universe that passes the checker is enumerated.
pub fn prop_oracle_checker_agreement(seed: u64) -> Result<(), String> {
    use dqwb_core::{enumerate_outcomes, is_possible_outcome};
    let (i, p, b) = checker_case(seed);
    let outcomes = enumerate_outcomes(std::slice::from_ref(&p), &i, &b).map_err(|e| e.to_string())?;
    for o in &outcomes {
        ensure(is_possible_outcome(&p, &i, o), || format!("oracle outcome rejected by the checker:\n{o}"))?;
    }
    let r = &mut rng(seed ^ 0xc4ec);
    let pool = value_pool(&i, &p, &b);
    let mut out_schema = i.schema().clone();
    for c in &p.post {
        if let Constraint::Structure(sc) = c {
            let mut a = out_schema.get(&sc.relation).cloned().unwrap_or_default();
            a.extend(sc.attributes().iter().cloned());
            out_schema.set(sc.relation.clone(), a);
        }
    }
    for _ in 0..12 {
        let mut j = Instance::new(out_schema.clone());
        for (name, rows) in i.relations() {
            for row in rows {
                if r.random_bool(0.15) {
                    continue;
                }
                let mut named = i.named(name, row);
                for a in out_schema.get(name).unwrap() {
                    named.entry(a.clone()).or_insert_with(|| pool.choose(r).unwrap().clone());
                }
                j.insert_named(name, &named).unwrap();
            }
        }
        if r.random_bool(0.6) {
            let rels: Vec<RelationName> = out_schema.relation_names().cloned().collect();
            let name = rels.choose(r).unwrap();
            let row = (0..out_schema.get(name).unwrap().len()).map(|_| pool.choose(r).unwrap().clone()).collect();
            j.insert(name, row).unwrap();
        }
        if is_possible_outcome(&p, &i, &j) {
            ensure(outcomes.contains(&j), || format!("checker accepts an outcome the oracle misses:\n{j}"))?;
        }
    }
    Ok(())
}

/// Rebuilding the input in another insertion order and chasing twice gives
/// the same table.
pub fn prop_chase_determinism(seed: u64) -> Result<(), String> {
    use dqwb_core::approximate_outcomes;
    let case = chase_case(seed);
    let mut reversed = Instance::new(case.instance.schema().clone());
    for (name, rows) in case.instance.relations() {
        for row in rows.iter().rev() {
            reversed.insert(name, row.clone()).unwrap();
        }
    }
    let a = approximate_outcomes(&case.instance, &case.procedures).map_err(|e| e.to_string())?;
    let b = approximate_outcomes(&case.instance, &case.procedures).map_err(|e| e.to_string())?;
    let c = approximate_outcomes(&reversed, &case.procedures).map_err(|e| e.to_string())?;
    ensure(a == b && b == c, || "chase output depends on the run".into())?;
    let render = |x: &dqwb_core::ApproximationResult| x.table().map(|t| t.to_string());
    ensure(render(&a) == render(&c), || "rendering differs".into())
}

/// Printing and reparsing a workspace gives it back, in both formats.
pub fn prop_dsl_round_trip(seed: u64) -> Result<(), String> {
    use dqwb_core::Workspace;
    let text = workspace_text(seed);
    let ws = Workspace::parse(&text).map_err(|e| format!("{e}\n{text}"))?;
    let printed = ws.to_dsl();
    let again = Workspace::parse(&printed).map_err(|e| format!("reparse: {e}\n{printed}"))?;
    ensure(again == ws, || format!("text round trip changed the workspace\n{printed}"))?;
    ensure(again.to_dsl() == printed, || "printing is not stable".into())?;
    let json = Workspace::from_json(&ws.to_json()).map_err(|e| e.to_string())?;
    ensure(json == ws, || "JSON round trip changed the workspace".into())
}
