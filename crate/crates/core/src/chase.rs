//! Outcome approximation for sequences of safe-scope and alter-schema
//! procedures, with certain answers, readiness and bounded planning built
//! on top.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::applicability::{min_schema, MinSchema};
use crate::constraint::{ConjunctiveQuery, Constraint, NamedAtom, Term, Tgd};
use crate::ctable::{
    enumerate_minimal_with, CTuple, Cell, ConditionalInstance, ElementCondition, LabeledNull, Limits,
    ScopedConditionalInstance,
};
use crate::error::{Error, Result};
use crate::model::{AttributeSet, Instance, RelationName, Schema, Value, VariableName};
use crate::procedure::{classify, is_safe_sequence, Class, Procedure};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproximationResult {
    Empty,
    Table(ConditionalInstance),
    ScopedTable(ScopedConditionalInstance),
}

impl ApproximationResult {
    pub fn is_empty(&self) -> bool {
        matches!(self, ApproximationResult::Empty)
    }

    pub fn table(&self) -> Option<&ConditionalInstance> {
        match self {
            ApproximationResult::Empty => None,
            ApproximationResult::Table(t) => Some(t),
            ApproximationResult::ScopedTable(s) => Some(&s.table),
        }
    }
}

/// Issues fresh labeled nulls `?s{step}_{k}` that avoid existing names.
struct NullSupply {
    step: usize,
    next: usize,
    taken: HashSet<LabeledNull>,
}

impl NullSupply {
    fn new(step: usize, t: &ConditionalInstance) -> Self {
        NullSupply { step, next: 0, taken: t.nulls().into_iter().collect() }
    }

    fn fresh(&mut self) -> LabeledNull {
        loop {
            let n = LabeledNull::new(format!("s{}_{}", self.step, self.next));
            self.next += 1;
            if !self.taken.contains(&n) {
                return n;
            }
        }
    }
}

/// Extends `t` to `target`: missing relations are added empty and every
/// tuple gains a fresh null in each new attribute.
fn extend_to(t: &ConditionalInstance, target: &Schema, nulls: &mut NullSupply) -> ConditionalInstance {
    let mut schema = t.schema().clone();
    for (rel, attrs) in target.relations() {
        let mut all = schema.get(rel).cloned().unwrap_or_default();
        all.extend(attrs.iter().cloned());
        schema.set(rel.clone(), all);
    }
    if &schema == t.schema() {
        return t.clone();
    }
    let mut out = ConditionalInstance::new(schema.clone());
    for (rel, rows) in t.relations() {
        let old: &AttributeSet = t.schema().get(rel).unwrap();
        let new = schema.get(rel).unwrap();
        for row in rows {
            let mut source = old.iter().zip(row.cells.iter());
            let mut pending = source.next();
            let mut cells = Vec::with_capacity(new.len());
            for a in new {
                match pending {
                    Some((b, c)) if b == a => {
                        cells.push(c.clone());
                        pending = source.next();
                    }
                    _ => cells.push(Cell::Null(nulls.fresh())),
                }
            }
            out.insert(rel, CTuple { cells, condition: row.condition.clone() }).expect("arity matches");
        }
    }
    out
}

fn check_chase_class(p: &Procedure) -> Result<()> {
    if !p.has_only_structural_pre() {
        return Err(Error::UnsupportedPrecondition { procedure: p.name.clone() });
    }
    for c in &p.post {
        match c {
            Constraint::Egd(_) => {
                return Err(Error::UnsupportedClass {
                    procedure: p.name.clone(),
                    reason: "egd postconditions are not chased".into(),
                })
            }
            Constraint::Tgd(t) if !t.body.constant_atoms.is_empty() || !t.head.constant_atoms.is_empty() => {
                return Err(Error::UnsupportedClass {
                    procedure: p.name.clone(),
                    reason: "C(val:..) atoms are not chased".into(),
                })
            }
            _ => {}
        }
    }
    Ok(())
}

/// Per-relation rows with an index from (position, cell) to row numbers.
#[derive(Default)]
struct Store {
    rows: Vec<CTuple>,
    by_cell: Vec<HashMap<Cell, Vec<usize>>>,
    nulls_at: Vec<Vec<usize>>,
}

impl Store {
    fn new(arity: usize, rows: impl IntoIterator<Item = CTuple>) -> Self {
        let mut s = Store { rows: Vec::new(), by_cell: vec![HashMap::new(); arity], nulls_at: vec![Vec::new(); arity] };
        for r in rows {
            s.push(r);
        }
        s
    }

    fn push(&mut self, row: CTuple) {
        let idx = self.rows.len();
        for (p, c) in row.cells.iter().enumerate() {
            match c {
                Cell::Null(_) => self.nulls_at[p].push(idx),
                v => self.by_cell[p].entry(v.clone()).or_default().push(idx),
            }
        }
        self.rows.push(row);
    }

    /// Rows that may unify with `cell` at position `p`.
    fn candidates(&self, p: usize, cell: &Cell) -> Vec<usize> {
        match cell {
            Cell::Null(_) => (0..self.rows.len()).collect(),
            v => {
                let mut out: Vec<usize> = self.by_cell[p].get(v).cloned().unwrap_or_default();
                out.extend(self.nulls_at[p].iter().copied());
                out.sort_unstable();
                out
            }
        }
    }
}

struct CompiledAtom {
    relation: RelationName,
    slots: Vec<(usize, Term)>,
}

fn compile(atoms: &[NamedAtom], schema: &Schema) -> Result<Vec<CompiledAtom>> {
    atoms
        .iter()
        .map(|a| {
            let slots = a
                .bindings
                .iter()
                .map(|(attr, t)| {
                    schema
                        .position(&a.relation, attr)
                        .map(|p| (p, t.clone()))
                        .ok_or_else(|| Error::Incompatible(format!("atom {a}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CompiledAtom { relation: a.relation.clone(), slots })
        })
        .collect()
}

type Binding = BTreeMap<VariableName, Cell>;

/// A match of a conjunction into a table: variable images plus the
/// equalities needed for it, conjoined with the matched rows' conditions.
struct Match {
    binding: Binding,
    condition: ElementCondition,
}

fn unify(a: &Cell, b: &Cell, cond: &mut ElementCondition) -> bool {
    if a == b {
        return true;
    }
    match (a, b) {
        (Cell::Val(_), Cell::Val(_)) => false,
        (Cell::Null(n), other) | (other, Cell::Null(n)) => {
            *cond = std::mem::replace(cond, ElementCondition::True).and(ElementCondition::Eq(n.clone(), other.clone()));
            true
        }
    }
}

fn for_each_match(
    atoms: &[CompiledAtom],
    stores: &HashMap<RelationName, Store>,
    seed: &Binding,
    visit: &mut dyn FnMut(&Match) -> bool,
) {
    fn go(
        atoms: &[CompiledAtom],
        k: usize,
        stores: &HashMap<RelationName, Store>,
        m: &mut Match,
        visit: &mut dyn FnMut(&Match) -> bool,
    ) -> bool {
        if k == atoms.len() {
            return visit(m);
        }
        let atom = &atoms[k];
        let Some(store) = stores.get(&atom.relation) else { return true };
        // Use the first slot bound to a constant cell to narrow candidates.
        let probe = atom.slots.iter().find_map(|(p, t)| {
            let cell = match t {
                Term::Const(c) => Some(Cell::Val(c.clone())),
                Term::Var(v) => m.binding.get(v).cloned(),
            };
            cell.filter(|c| matches!(c, Cell::Val(_))).map(|c| (*p, c))
        });
        let rows: Vec<usize> = match &probe {
            Some((p, c)) => store.candidates(*p, c),
            None => (0..store.rows.len()).collect(),
        };
        for idx in rows {
            let row = &store.rows[idx];
            let saved_binding = m.binding.clone();
            let saved_cond = m.condition.clone();
            let mut ok = true;
            let mut cond = m.condition.clone().and(row.condition.clone());
            for (p, t) in &atom.slots {
                let cell = &row.cells[*p];
                let want = match t {
                    Term::Const(c) => Some(Cell::Val(c.clone())),
                    Term::Var(v) => m.binding.get(v).cloned(),
                };
                match want {
                    Some(w) => {
                        if !unify(&w, cell, &mut cond) {
                            ok = false;
                            break;
                        }
                    }
                    None => {
                        if let Term::Var(v) = t {
                            m.binding.insert(v.clone(), cell.clone());
                        }
                    }
                }
            }
            if ok && cond.is_satisfiable() {
                m.condition = cond;
                if !go(atoms, k + 1, stores, m, visit) {
                    return false;
                }
            }
            m.binding = saved_binding;
            m.condition = saved_cond;
        }
        true
    }
    let mut m = Match { binding: seed.clone(), condition: ElementCondition::True };
    go(atoms, 0, stores, &mut m, visit);
}

fn chase_tgds(t: &ConditionalInstance, tgds: &[&Tgd], nulls: &mut NullSupply) -> Result<ConditionalInstance> {
    let schema = t.schema().clone();
    let mut stores: HashMap<RelationName, Store> = t
        .relations()
        .map(|(rel, rows)| (rel.clone(), Store::new(schema.get(rel).unwrap().len(), rows.iter().cloned())))
        .collect();
    for tgd in tgds {
        let body = compile(&tgd.body.atoms, &schema)?;
        let head = compile(&tgd.head.atoms, &schema)?;
        // Heads never feed bodies, so body matches can be collected first.
        let mut triggers: Vec<(Binding, ElementCondition)> = Vec::new();
        for_each_match(&body, &stores, &Binding::new(), &mut |m| {
            triggers.push((m.binding.clone(), m.condition.clone()));
            true
        });
        for (binding, condition) in triggers {
            let frontier: Binding =
                tgd.head.free.iter().filter_map(|v| binding.get(v).map(|c| (v.clone(), c.clone()))).collect();
            let mut satisfied = false;
            for_each_match(&head, &stores, &frontier, &mut |m| {
                if condition.entails(&m.condition) {
                    satisfied = true;
                    return false;
                }
                true
            });
            if satisfied {
                continue;
            }
            let mut existential: BTreeMap<&VariableName, LabeledNull> = BTreeMap::new();
            for (atom, compiled) in tgd.head.atoms.iter().zip(&head) {
                let arity = schema.get(&atom.relation).unwrap().len();
                let mut cells: Vec<Option<Cell>> = vec![None; arity];
                for (p, term) in &compiled.slots {
                    cells[*p] = Some(match term {
                        Term::Const(c) => Cell::Val(c.clone()),
                        Term::Var(v) => match frontier.get(v) {
                            Some(c) => c.clone(),
                            None => Cell::Null(existential.entry(v).or_insert_with(|| nulls.fresh()).clone()),
                        },
                    });
                }
                let cells = cells.into_iter().map(|c| c.unwrap_or_else(|| Cell::Null(nulls.fresh()))).collect();
                let row = CTuple { cells, condition: condition.clone() };
                let store = stores.get_mut(&atom.relation).unwrap();
                if !store.rows.contains(&row) {
                    store.push(row);
                }
            }
        }
    }
    let mut out = ConditionalInstance::new(schema);
    for (rel, store) in stores {
        for row in store.rows {
            out.insert(&rel, row)?;
        }
    }
    Ok(out)
}

/// One step of the fold. `None` when no outcome exists.
fn step(t: &ConditionalInstance, p: &Procedure, index: usize) -> Result<Option<ConditionalInstance>> {
    let class = classify(p);
    if class == Class::Neither {
        return Err(Error::UnsupportedClass {
            procedure: p.name.clone(),
            reason: "neither safe-scope nor alter-schema".into(),
        });
    }
    check_chase_class(p)?;
    let MinSchema::Success(req) = min_schema(p, t.schema())? else {
        return Ok(None);
    };
    let mut nulls = NullSupply::new(index, t);
    let extended = extend_to(t, &req.schema, &mut nulls);
    match class {
        Class::AlterSchema => Ok(Some(extended)),
        _ => {
            let tgds: Vec<&Tgd> = p.post_tgds().collect();
            Ok(Some(chase_tgds(&extended, &tgds, &mut nulls)?))
        }
    }
}

/// Chases `t` with the postcondition tgds of a safe-scope procedure, after
/// extending it to the procedure's minimal output schema.
pub fn chase_safe_scope(t: &ConditionalInstance, p: &Procedure) -> Result<ConditionalInstance> {
    if classify(p) != Class::SafeScope {
        return Err(Error::NotSafeScope);
    }
    if !t.is_positive() {
        return Err(Error::NotPositive);
    }
    step(t, p, 0)?.ok_or_else(|| Error::Incompatible(format!("procedure `{}` has no outcome schema", p.name)))
}

/// Adds the attributes and relations required by an alter-schema
/// procedure, filling new attributes with fresh nulls.
pub fn apply_alter_schema(t: &ConditionalInstance, p: &Procedure) -> Result<ApproximationResult> {
    if classify(p) != Class::AlterSchema {
        return Err(Error::NotAlterSchema);
    }
    Ok(match step(t, p, 0)? {
        Some(t) => ApproximationResult::Table(t),
        None => ApproximationResult::Empty,
    })
}

fn fold(i: &Instance, ps: &[Procedure]) -> Result<Option<ConditionalInstance>> {
    let mut t = ConditionalInstance::from_instance(i);
    for (k, p) in ps.iter().enumerate() {
        match step(&t, p, k)? {
            Some(next) => t = next,
            None => return Ok(None),
        }
    }
    Ok(Some(t))
}

/// A positive table whose representation contains every outcome of the
/// sequence and whose minimal instances are minimal outcomes.
pub fn approximate_outcomes(i: &Instance, ps: &[Procedure]) -> Result<ApproximationResult> {
    Ok(match fold(i, ps)? {
        Some(t) => ApproximationResult::Table(t),
        None => ApproximationResult::Empty,
    })
}

pub fn outcomes_nonempty(i: &Instance, ps: &[Procedure]) -> Result<bool> {
    Ok(!approximate_outcomes(i, ps)?.is_empty())
}

/// For a safe sequence: the folded table together with the relations that
/// may gain tuples (scopes of safe-scope steps and relations created by
/// alter steps).
pub fn exact_scoped_representation(i: &Instance, ps: &[Procedure]) -> Result<ApproximationResult> {
    if !is_safe_sequence(ps) {
        return Err(Error::NotSafeSequence);
    }
    let Some(table) = fold(i, ps)? else {
        return Ok(ApproximationResult::Empty);
    };
    let mut rel: BTreeSet<RelationName> = BTreeSet::new();
    for p in ps {
        if classify(p) == Class::SafeScope {
            rel.extend(p.scope_relations());
        }
    }
    rel.extend(table.schema().relation_names().filter(|r| !i.schema().contains(r)).cloned());
    // Alter steps keep a relation's projection onto its original attributes
    // and nothing more.
    let pinned = table
        .schema()
        .relation_names()
        .filter(|r| !rel.contains(*r))
        .filter_map(|r| i.schema().get(r).map(|a| (r.clone(), a.clone())))
        .collect();
    Ok(ApproximationResult::ScopedTable(ScopedConditionalInstance { table, rel, pinned }))
}

/// Whether the boolean query holds in every instance represented by `t`.
pub fn certain_boolean_cq(t: &ConditionalInstance, q: &ConjunctiveQuery) -> Result<bool> {
    certain_boolean_cq_with(t, q, Limits::default())
}

pub fn certain_boolean_cq_with(t: &ConditionalInstance, q: &ConjunctiveQuery, limits: Limits) -> Result<bool> {
    if !q.is_boolean() {
        return Err(Error::NotBoolean);
    }
    if !q.is_compatible(t.schema()) {
        return Err(Error::Incompatible(format!("query `{q}`")));
    }
    let mut constants = q.constants();
    if !q.constant_atoms.is_empty() {
        constants.insert(Value::null());
    }
    if t.is_naive() && q.constant_atoms.is_empty() {
        // Mapping nulls to distinct fresh values is the most general
        // valuation, and boolean conjunctive queries are preserved under
        // homomorphisms.
        let taken: BTreeSet<Value> = t.constants().into_iter().chain(constants.iter().cloned()).collect();
        let mut k = 0;
        let mut v = BTreeMap::new();
        for n in t.nulls() {
            while taken.contains(&Value::fresh(k)) {
                k += 1;
            }
            v.insert(n, Value::fresh(k));
            k += 1;
        }
        let image = crate::ctable::apply_valuation(t, &v)?;
        return crate::constraint::holds_boolean(q, &image);
    }
    for j in enumerate_minimal_with(t, &constants, limits)? {
        if !crate::constraint::holds_boolean(q, &j)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The instance can be readied for `q` by the sequence: some outcome
/// exists and `q` is compatible with and true in every outcome.
pub fn ready_for(i: &Instance, ps: &[Procedure], q: &ConjunctiveQuery) -> Result<bool> {
    let result = if is_safe_sequence(ps) { exact_scoped_representation(i, ps)? } else { approximate_outcomes(i, ps)? };
    match result.table() {
        None => Ok(false),
        Some(t) => ready_on_table(t, q),
    }
}

fn ready_on_table(t: &ConditionalInstance, q: &ConjunctiveQuery) -> Result<bool> {
    if !q.is_boolean() {
        return Err(Error::NotBoolean);
    }
    if !q.is_compatible(t.schema()) {
        return Ok(false);
    }
    certain_boolean_cq(t, q)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlanLimits {
    pub max_states: usize,
}

impl Default for PlanLimits {
    fn default() -> Self {
        PlanLimits { max_states: 10_000 }
    }
}

/// Breadth-first search for a shortest sequence over `pool` (with reuse)
/// that readies `i` for `q`. States reached twice are expanded once.
pub fn plan_search(
    i: &Instance,
    pool: &[Procedure],
    q: &ConjunctiveQuery,
    max_len: usize,
    limits: PlanLimits,
) -> Result<Option<Vec<Procedure>>> {
    for p in pool {
        if classify(p) == Class::Neither {
            return Err(Error::UnsupportedClass {
                procedure: p.name.clone(),
                reason: "neither safe-scope nor alter-schema".into(),
            });
        }
    }
    if ready_for(i, &[], q)? {
        return Ok(Some(Vec::new()));
    }
    let start = ConditionalInstance::from_instance(i);
    let mut seen: HashSet<ConditionalInstance> = HashSet::new();
    seen.insert(start.normalized());
    let mut frontier: VecDeque<(ConditionalInstance, Vec<usize>)> = VecDeque::from([(start, Vec::new())]);
    while let Some((table, plan)) = frontier.pop_front() {
        if plan.len() >= max_len {
            continue;
        }
        for (k, p) in pool.iter().enumerate() {
            let Some(next) = step(&table, p, plan.len())? else { continue };
            let mut next_plan = plan.clone();
            next_plan.push(k);
            if ready_on_table(&next, q)? {
                let seq: Vec<Procedure> = next_plan.iter().map(|&k| pool[k].clone()).collect();
                if ready_for(i, &seq, q)? {
                    return Ok(Some(seq));
                }
            }
            if seen.insert(next.normalized()) {
                if seen.len() > limits.max_states {
                    return Err(Error::BudgetExceeded { what: "plan search states", limit: limits.max_states });
                }
                frontier.push_back((next, next_plan));
            }
        }
    }
    Ok(None)
}
