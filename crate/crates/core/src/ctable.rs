//! Conditional instances: tuples over constants and labeled nulls, each
//! guarded by an element-condition.
//!
//! `rep(T)` is open-world: it holds every instance that extends some
//! valuation image of `T`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{write_row, AttributeSet, Instance, RelationName, Schema, Tuple, Value};

/// A labeled null, written `?name`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabeledNull(String);

impl LabeledNull {
    pub fn new(id: impl Into<String>) -> Self {
        LabeledNull(id.into())
    }

    pub fn id(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LabeledNull {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "?{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Val(Value),
    Null(LabeledNull),
}

impl Cell {
    pub fn null(id: &str) -> Self {
        Cell::Null(LabeledNull::new(id))
    }

    pub fn as_null(&self) -> Option<&LabeledNull> {
        match self {
            Cell::Null(n) => Some(n),
            Cell::Val(_) => None,
        }
    }
}

impl From<Value> for Cell {
    fn from(v: Value) -> Self {
        Cell::Val(v)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Val(v) => write!(f, "{v}"),
            Cell::Null(n) => write!(f, "{n}"),
        }
    }
}

pub type Valuation = BTreeMap<LabeledNull, Value>;

/// Positive combination of `?n = t` and `?n != t` literals.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementCondition {
    True,
    Eq(LabeledNull, Cell),
    Ne(LabeledNull, Cell),
    And(Vec<ElementCondition>),
    Or(Vec<ElementCondition>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Literal {
    left: LabeledNull,
    right: Cell,
    equal: bool,
}

const DNF_LIMIT: usize = 4096;

impl ElementCondition {
    pub fn is_true(&self) -> bool {
        matches!(self, ElementCondition::True)
    }

    /// Conjunction, flattening nested conjunctions and dropping `True`.
    pub fn and(self, other: ElementCondition) -> ElementCondition {
        let mut parts = Vec::new();
        for c in [self, other] {
            match c {
                ElementCondition::True => {}
                ElementCondition::And(cs) => parts.extend(cs),
                c => parts.push(c),
            }
        }
        let mut seen = BTreeSet::new();
        parts.retain(|c| seen.insert(c.clone()));
        match parts.len() {
            0 => ElementCondition::True,
            1 => parts.pop().unwrap(),
            _ => ElementCondition::And(parts),
        }
    }

    pub fn nulls(&self) -> BTreeSet<LabeledNull> {
        let mut out = BTreeSet::new();
        self.collect_nulls(&mut out);
        out
    }

    fn collect_nulls(&self, out: &mut BTreeSet<LabeledNull>) {
        match self {
            ElementCondition::True => {}
            ElementCondition::Eq(n, c) | ElementCondition::Ne(n, c) => {
                out.insert(n.clone());
                if let Cell::Null(m) = c {
                    out.insert(m.clone());
                }
            }
            ElementCondition::And(cs) | ElementCondition::Or(cs) => cs.iter().for_each(|c| c.collect_nulls(out)),
        }
    }

    pub fn constants(&self) -> BTreeSet<Value> {
        let mut out = BTreeSet::new();
        self.collect_constants(&mut out);
        out
    }

    fn collect_constants(&self, out: &mut BTreeSet<Value>) {
        match self {
            ElementCondition::True => {}
            ElementCondition::Eq(_, c) | ElementCondition::Ne(_, c) => {
                if let Cell::Val(v) = c {
                    out.insert(v.clone());
                }
            }
            ElementCondition::And(cs) | ElementCondition::Or(cs) => cs.iter().for_each(|c| c.collect_constants(out)),
        }
    }

    pub fn is_positive(&self) -> bool {
        match self {
            ElementCondition::True | ElementCondition::Eq(..) => true,
            ElementCondition::Ne(..) => false,
            ElementCondition::And(cs) | ElementCondition::Or(cs) => cs.iter().all(ElementCondition::is_positive),
        }
    }

    /// Three-valued evaluation under a partial assignment: `None` when the
    /// outcome depends on unassigned nulls.
    pub fn eval_partial(&self, v: &Valuation) -> Option<bool> {
        let resolve = |c: &Cell| match c {
            Cell::Val(x) => Some(x.clone()),
            Cell::Null(n) => v.get(n).cloned(),
        };
        match self {
            ElementCondition::True => Some(true),
            ElementCondition::Eq(n, c) | ElementCondition::Ne(n, c) => {
                let equal = matches!(self, ElementCondition::Eq(..));
                let (a, b) = (v.get(n)?.clone(), resolve(c)?);
                Some((a == b) == equal)
            }
            ElementCondition::And(cs) => {
                let mut unknown = false;
                for c in cs {
                    match c.eval_partial(v) {
                        Some(false) => return Some(false),
                        None => unknown = true,
                        Some(true) => {}
                    }
                }
                if unknown {
                    None
                } else {
                    Some(true)
                }
            }
            ElementCondition::Or(cs) => {
                let mut unknown = false;
                for c in cs {
                    match c.eval_partial(v) {
                        Some(true) => return Some(true),
                        None => unknown = true,
                        Some(false) => {}
                    }
                }
                if unknown {
                    None
                } else {
                    Some(false)
                }
            }
        }
    }

    pub fn eval(&self, v: &Valuation) -> Result<bool> {
        match self.eval_partial(v) {
            Some(b) => Ok(b),
            None => {
                let missing = self.nulls().into_iter().find(|n| !v.contains_key(n)).unwrap();
                Err(Error::PartialValuation(missing.id().to_string()))
            }
        }
    }

    fn dnf(&self) -> Option<Vec<Vec<Literal>>> {
        Some(match self {
            ElementCondition::True => vec![vec![]],
            ElementCondition::Eq(n, c) => vec![vec![Literal { left: n.clone(), right: c.clone(), equal: true }]],
            ElementCondition::Ne(n, c) => vec![vec![Literal { left: n.clone(), right: c.clone(), equal: false }]],
            ElementCondition::Or(cs) => {
                let mut out = Vec::new();
                for c in cs {
                    out.extend(c.dnf()?);
                    if out.len() > DNF_LIMIT {
                        return None;
                    }
                }
                out
            }
            ElementCondition::And(cs) => {
                let mut acc: Vec<Vec<Literal>> = vec![vec![]];
                for c in cs {
                    let d = c.dnf()?;
                    if acc.len() * d.len() > DNF_LIMIT {
                        return None;
                    }
                    acc = acc
                        .iter()
                        .flat_map(|a| d.iter().map(move |b| a.iter().chain(b).cloned().collect::<Vec<_>>()))
                        .collect();
                }
                acc
            }
        })
    }

    /// Some valuation makes the condition true. Exact: each disjunct of the
    /// disjunctive normal form is checked with union-find over equalities.
    pub fn is_satisfiable(&self) -> bool {
        match self.dnf() {
            Some(terms) => terms.iter().any(|t| Closure::of(t).is_some()),
            None => true,
        }
    }

    /// Every valuation satisfying `self` satisfies the positive condition
    /// `other`. A positive condition holds in all models of a consistent
    /// conjunction iff it holds in its most general model, where classes of
    /// the equality closure get pairwise distinct values.
    pub fn entails(&self, other: &ElementCondition) -> bool {
        if other.is_true() {
            return true;
        }
        let Some(terms) = self.dnf() else { return false };
        let nulls = other.nulls();
        terms.iter().all(|t| match Closure::of(t) {
            None => true,
            Some(mut uf) => {
                let v: Valuation = nulls
                    .iter()
                    .map(|n| {
                        let value = match uf.find(&Cell::Null(n.clone())) {
                            Cell::Val(x) => x,
                            Cell::Null(root) => placeholder_for(&root),
                        };
                        (n.clone(), value)
                    })
                    .collect();
                other.eval_partial(&v) == Some(true)
            }
        })
    }

    /// Every valuation satisfying `self` also makes each pair equal.
    pub fn entails_equalities(&self, pairs: &[(Cell, Cell)]) -> bool {
        let Some(terms) = self.dnf() else { return false };
        terms.iter().all(|t| match Closure::of(t) {
            None => true,
            Some(mut uf) => pairs.iter().all(|(a, b)| a == b || uf.find(a) == uf.find(b)),
        })
    }

    /// Renames nulls.
    pub fn map_nulls(&self, f: &impl Fn(&LabeledNull) -> Cell) -> ElementCondition {
        let lit = |n: &LabeledNull, c: &Cell, equal: bool| {
            let right = match c {
                Cell::Null(m) => f(m),
                v => v.clone(),
            };
            let (left, right) = match (f(n), right) {
                (Cell::Null(l), r) => (l, r),
                (l, Cell::Null(r)) => (r, l),
                (Cell::Val(a), Cell::Val(b)) => {
                    return if (a == b) == equal { ElementCondition::True } else { ElementCondition::Or(vec![]) }
                }
            };
            if equal {
                ElementCondition::Eq(left, right)
            } else {
                ElementCondition::Ne(left, right)
            }
        };
        match self {
            ElementCondition::True => ElementCondition::True,
            ElementCondition::Eq(n, c) => lit(n, c, true),
            ElementCondition::Ne(n, c) => lit(n, c, false),
            ElementCondition::And(cs) => ElementCondition::And(cs.iter().map(|c| c.map_nulls(f)).collect()),
            ElementCondition::Or(cs) => ElementCondition::Or(cs.iter().map(|c| c.map_nulls(f)).collect()),
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, nested: bool) -> fmt::Result {
        match self {
            ElementCondition::True => f.write_str("true"),
            ElementCondition::Eq(n, c) => write!(f, "{n} = {c}"),
            ElementCondition::Ne(n, c) => write!(f, "{n} != {c}"),
            ElementCondition::And(cs) | ElementCondition::Or(cs) => {
                let and = matches!(self, ElementCondition::And(_));
                if cs.is_empty() {
                    return f.write_str(if and { "true" } else { "false" });
                }
                if nested {
                    f.write_str("(")?;
                }
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(if and { " and " } else { " or " })?;
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

impl fmt::Display for ElementCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, false)
    }
}

/// Union-find closure of a conjunction of literals; `None` if unsatisfiable.
struct Closure {
    parent: HashMap<Cell, Cell>,
}

impl Closure {
    fn of(literals: &[Literal]) -> Option<Closure> {
        let mut uf = Closure { parent: HashMap::new() };
        for l in literals.iter().filter(|l| l.equal) {
            let a = uf.find(&Cell::Null(l.left.clone()));
            let b = uf.find(&l.right);
            if a == b {
                continue;
            }
            match (&a, &b) {
                (Cell::Val(_), Cell::Val(_)) => return None,
                // Keep constants as class representatives.
                (Cell::Val(_), _) => {
                    uf.parent.insert(b, a);
                }
                _ => {
                    uf.parent.insert(a, b);
                }
            }
        }
        for l in literals.iter().filter(|l| !l.equal) {
            if uf.find(&Cell::Null(l.left.clone())) == uf.find(&l.right) {
                return None;
            }
        }
        Some(uf)
    }

    fn find(&mut self, c: &Cell) -> Cell {
        let mut cur = c.clone();
        while let Some(p) = self.parent.get(&cur) {
            cur = p.clone();
        }
        cur
    }
}

/// A stored conditional tuple.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CTuple {
    pub cells: Vec<Cell>,
    pub condition: ElementCondition,
}

impl CTuple {
    pub fn plain(cells: Vec<Cell>) -> Self {
        CTuple { cells, condition: ElementCondition::True }
    }

    pub fn nulls(&self) -> impl Iterator<Item = &LabeledNull> {
        self.cells.iter().filter_map(Cell::as_null)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConditionalInstance {
    schema: Schema,
    data: BTreeMap<RelationName, BTreeSet<CTuple>>,
}

impl ConditionalInstance {
    pub fn new(schema: Schema) -> Self {
        let data = schema.relation_names().map(|r| (r.clone(), BTreeSet::new())).collect();
        ConditionalInstance { schema, data }
    }

    /// The null-free table whose only valuation image is `i`.
    pub fn from_instance(i: &Instance) -> Self {
        let mut t = ConditionalInstance::new(i.schema().clone());
        for (rel, rows) in i.relations() {
            let set = t.data.entry(rel.clone()).or_default();
            set.extend(rows.iter().map(|r| CTuple::plain(r.iter().cloned().map(Cell::Val).collect())));
        }
        t
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn insert(&mut self, rel: &RelationName, tuple: CTuple) -> Result<bool> {
        let attrs = self.schema.get(rel).ok_or_else(|| Error::UnknownRelation(rel.clone()))?;
        if attrs.len() != tuple.cells.len() {
            return Err(Error::ArityMismatch { relation: rel.clone(), expected: attrs.len(), found: tuple.cells.len() });
        }
        Ok(self.data.entry(rel.clone()).or_default().insert(tuple))
    }

    pub fn tuples(&self, rel: &RelationName) -> &BTreeSet<CTuple> {
        static EMPTY: BTreeSet<CTuple> = BTreeSet::new();
        self.data.get(rel).unwrap_or(&EMPTY)
    }

    pub fn relations(&self) -> impl Iterator<Item = (&RelationName, &BTreeSet<CTuple>)> {
        self.data.iter()
    }

    pub fn tuple_count(&self) -> usize {
        self.data.values().map(BTreeSet::len).sum()
    }

    pub fn nulls(&self) -> BTreeSet<LabeledNull> {
        let mut out = BTreeSet::new();
        for t in self.data.values().flatten() {
            out.extend(t.nulls().cloned());
            out.extend(t.condition.nulls());
        }
        out
    }

    /// Constants in tuples and conditions.
    pub fn constants(&self) -> BTreeSet<Value> {
        let mut out = BTreeSet::new();
        for t in self.data.values().flatten() {
            out.extend(t.cells.iter().filter_map(|c| match c {
                Cell::Val(v) => Some(v.clone()),
                Cell::Null(_) => None,
            }));
            out.extend(t.condition.constants());
        }
        out
    }

    pub fn is_positive(&self) -> bool {
        self.data.values().flatten().all(|t| t.condition.is_positive())
    }

    pub fn is_naive(&self) -> bool {
        self.data.values().flatten().all(|t| t.condition.is_true())
    }

    /// Checks that every row has the arity of its relation.
    pub fn check(&self) -> Result<()> {
        for (rel, rows) in &self.data {
            let attrs = self.schema.get(rel).ok_or_else(|| Error::UnknownRelation(rel.clone()))?;
            if let Some(bad) = rows.iter().find(|t| t.cells.len() != attrs.len()) {
                return Err(Error::ArityMismatch { relation: rel.clone(), expected: attrs.len(), found: bad.cells.len() });
            }
        }
        Ok(())
    }

    /// Renames nulls to `?c0, ?c1, ...` in order of first occurrence, giving
    /// a deterministic key for tables that differ only in null names
    /// assigned in the same order.
    pub fn normalized(&self) -> ConditionalInstance {
        let mut order: BTreeMap<LabeledNull, usize> = BTreeMap::new();
        for t in self.data.values().flatten() {
            for n in t.nulls().chain(t.condition.nulls().iter()) {
                let k = order.len();
                order.entry(n.clone()).or_insert(k);
            }
        }
        let rename = |n: &LabeledNull| Cell::Null(LabeledNull::new(format!("c{}", order[n])));
        let data = self
            .data
            .iter()
            .map(|(rel, rows)| {
                let rows = rows
                    .iter()
                    .map(|t| CTuple {
                        cells: t.cells.iter().map(|c| match c {
                            Cell::Null(n) => rename(n),
                            v => v.clone(),
                        }).collect(),
                        condition: t.condition.map_nulls(&rename),
                    })
                    .collect();
                (rel.clone(), rows)
            })
            .collect();
        ConditionalInstance { schema: self.schema.clone(), data }
    }
}

impl fmt::Display for ConditionalInstance {
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
            for t in self.tuples(rel) {
                f.write_str("  ")?;
                write_row(f, &t.cells)?;
                if !t.condition.is_true() {
                    write!(f, " | {}", t.condition)?;
                }
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

/// A conditional instance that admits extra tuples only in `rel`.
///
/// A relation outside `rel` listed in `pinned` must match the valuation
/// image only on the listed attributes; unlisted ones are pinned on all of
/// their attributes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopedConditionalInstance {
    pub table: ConditionalInstance,
    pub rel: BTreeSet<RelationName>,
    #[serde(default)]
    pub pinned: BTreeMap<RelationName, AttributeSet>,
}

fn image(cells: &[Cell], v: &Valuation) -> Result<Tuple> {
    cells
        .iter()
        .map(|c| match c {
            Cell::Val(x) => Ok(x.clone()),
            Cell::Null(n) => v.get(n).cloned().ok_or_else(|| Error::PartialValuation(n.id().to_string())),
        })
        .collect()
}

/// `v(T)`: tuples whose condition holds under `v`, with nulls replaced.
pub fn apply_valuation(t: &ConditionalInstance, v: &Valuation) -> Result<Instance> {
    if let Some(n) = t.nulls().into_iter().find(|n| !v.contains_key(n)) {
        return Err(Error::PartialValuation(n.id().to_string()));
    }
    let mut out = Instance::new(t.schema.clone());
    for (rel, rows) in &t.data {
        for row in rows {
            if row.condition.eval(v)? {
                out.insert(rel, image(&row.cells, v)?)?;
            }
        }
    }
    Ok(out)
}

/// Values used for nulls that no stored tuple pins down. They never occur
/// in parsed input.
fn placeholder(k: usize) -> Value {
    Value::constant(format!("\u{0}free{k}"))
}

fn placeholder_for(root: &LabeledNull) -> Value {
    Value::constant(format!("\u{0}class{}", root.id()))
}

struct RepSearch<'a> {
    rows: Vec<(usize, &'a CTuple)>,
    /// Projection of each table relation in the candidate instance.
    targets: Vec<Vec<Tuple>>,
    /// Relations whose projection must equal the valuation image, with the
    /// positions compared.
    exact: Vec<Option<Vec<usize>>>,
    base_values: Vec<Value>,
    all_nulls: Vec<LabeledNull>,
    matched: Vec<Option<usize>>,
}

impl RepSearch<'_> {
    fn unify(cells: &[Cell], row: &[Value], v: &mut Valuation, bound: &mut Vec<LabeledNull>) -> bool {
        for (c, x) in cells.iter().zip(row) {
            match c {
                Cell::Val(y) => {
                    if x != y {
                        return false;
                    }
                }
                Cell::Null(n) => match v.get(n) {
                    Some(y) => {
                        if x != y {
                            return false;
                        }
                    }
                    None => {
                        v.insert(n.clone(), x.clone());
                        bound.push(n.clone());
                    }
                },
            }
        }
        true
    }

    fn run(&mut self, k: usize, v: &mut Valuation) -> Option<Valuation> {
        if k == self.rows.len() {
            return self.complete(v);
        }
        let (rel, ct) = self.rows[k];
        for idx in 0..self.targets[rel].len() {
            let mut bound = Vec::new();
            let target = &self.targets[rel][idx];
            if Self::unify(&ct.cells, target, v, &mut bound) && ct.condition.eval_partial(v) != Some(false) {
                self.matched[k] = Some(idx);
                if let Some(found) = self.run(k + 1, v) {
                    return Some(found);
                }
            }
            for n in bound {
                v.remove(&n);
            }
        }
        self.matched[k] = None;
        if ct.condition.eval_partial(v) != Some(true) && !ct.condition.is_true() {
            if let Some(found) = self.run(k + 1, v) {
                return Some(found);
            }
        }
        None
    }

    fn complete(&self, v: &Valuation) -> Option<Valuation> {
        let free: Vec<LabeledNull> = self.all_nulls.iter().filter(|n| !v.contains_key(*n)).cloned().collect();
        let mut full = v.clone();
        self.assign_free(&free, 0, 0, &mut full)
    }

    fn assign_free(&self, free: &[LabeledNull], k: usize, extras: usize, v: &mut Valuation) -> Option<Valuation> {
        if k == free.len() {
            return self.accept(v).then(|| v.clone());
        }
        let options = self.base_values.iter().cloned().chain((0..=extras).map(placeholder));
        for (i, value) in options.enumerate() {
            v.insert(free[k].clone(), value);
            let used = if i >= self.base_values.len() && i - self.base_values.len() == extras { extras + 1 } else { extras };
            if let Some(found) = self.assign_free(free, k + 1, used, v) {
                return Some(found);
            }
        }
        v.remove(&free[k]);
        None
    }

    fn accept(&self, v: &Valuation) -> bool {
        for (k, (_, ct)) in self.rows.iter().enumerate() {
            let holds = ct.condition.eval_partial(v) == Some(true);
            if holds != self.matched[k].is_some() {
                return false;
            }
        }
        for (rel, exact) in self.exact.iter().enumerate() {
            let Some(positions) = exact else {
                continue;
            };
            let key = |idx: usize| -> Vec<&Value> { positions.iter().map(|&p| &self.targets[rel][idx][p]).collect() };
            let covered: BTreeSet<Vec<&Value>> = self
                .rows
                .iter()
                .zip(&self.matched)
                .filter(|((r, _), _)| *r == rel)
                .filter_map(|(_, m)| m.map(key))
                .collect();
            let all: BTreeSet<Vec<&Value>> = (0..self.targets[rel].len()).map(key).collect();
            if covered != all {
                return false;
            }
        }
        true
    }
}

fn find_witness(t: &ConditionalInstance, i: &Instance, scope: Option<&ScopedConditionalInstance>) -> Option<Valuation> {
    if !i.schema().extends(t.schema()) {
        return None;
    }
    let rels: Vec<&RelationName> = t.schema.relation_names().collect();
    let targets: Vec<Vec<Tuple>> = rels
        .iter()
        .map(|r| {
            let mut rows: Vec<Tuple> = i.project(r, t.schema.get(r).unwrap()).into_iter().collect();
            rows.sort();
            rows
        })
        .collect();
    let exact: Vec<Option<Vec<usize>>> = rels
        .iter()
        .map(|r| {
            let s = scope.filter(|s| !s.rel.contains(*r))?;
            let attrs = t.schema.get(r).unwrap();
            Some(match s.pinned.get(*r) {
                Some(keep) => attrs.iter().enumerate().filter(|(_, a)| keep.contains(*a)).map(|(k, _)| k).collect(),
                None => (0..attrs.len()).collect(),
            })
        })
        .collect();
    let mut rows: Vec<(usize, &CTuple)> =
        rels.iter().enumerate().flat_map(|(k, r)| t.tuples(r).iter().map(move |ct| (k, ct))).collect();
    // Unconditional tuples first, then tuples with the fewest candidates.
    rows.sort_by_key(|(k, ct)| (!ct.condition.is_true(), targets[*k].len()));
    let mut base_values: BTreeSet<Value> = i.active_domain();
    base_values.extend(t.constants());
    let mut search = RepSearch {
        matched: vec![None; rows.len()],
        rows,
        targets,
        exact,
        base_values: base_values.into_iter().collect(),
        all_nulls: t.nulls().into_iter().collect(),
    };
    search.run(0, &mut Valuation::new())
}

/// Some valuation `v` has `i` extending `v(t)`.
pub fn rep_contains(t: &ConditionalInstance, i: &Instance) -> bool {
    find_witness(t, i, None).is_some()
}

/// A witness valuation for [`rep_contains`].
pub fn rep_witness(t: &ConditionalInstance, i: &Instance) -> Option<Valuation> {
    find_witness(t, i, None)
}

/// Scoped membership: relations outside `rel` must project exactly onto
/// the valuation image over their pinned attributes.
pub fn scoped_rep_contains(t: &ScopedConditionalInstance, i: &Instance) -> bool {
    find_witness(&t.table, i, Some(t)).is_some()
}

/// Same-schema membership: `i` is over the schema of `t` and contains some
/// valuation image.
pub fn hat_rep_contains(t: &ConditionalInstance, i: &Instance) -> bool {
    i.schema() == t.schema() && rep_contains(t, i)
}

/// Bounds for canonical enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    pub max_valuations: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_valuations: 200_000 }
    }
}

/// Canonical valuations: each null is sent to a constant of `constants`,
/// to a reserved fresh constant already in use, or to the next unused one.
pub fn canonical_valuations(nulls: &[LabeledNull], constants: &[Value], limits: Limits) -> Result<Vec<Valuation>> {
    let mut out = Vec::new();
    let mut current = Valuation::new();
    fn go(
        nulls: &[LabeledNull],
        constants: &[Value],
        k: usize,
        used: usize,
        current: &mut Valuation,
        out: &mut Vec<Valuation>,
        limits: Limits,
    ) -> Result<()> {
        if k == nulls.len() {
            if out.len() >= limits.max_valuations {
                return Err(Error::BudgetExceeded { what: "canonical valuations", limit: limits.max_valuations });
            }
            out.push(current.clone());
            return Ok(());
        }
        for c in constants {
            current.insert(nulls[k].clone(), c.clone());
            go(nulls, constants, k + 1, used, current, out, limits)?;
        }
        for f in 0..=used {
            current.insert(nulls[k].clone(), Value::fresh(f));
            go(nulls, constants, k + 1, used.max(f + 1), current, out, limits)?;
        }
        current.remove(&nulls[k]);
        Ok(())
    }
    go(nulls, constants, 0, 0, &mut current, &mut out, limits)?;
    Ok(out)
}

/// Extension-minimal members of `rep(t)` up to renaming of reserved fresh
/// constants, in canonical form.
pub fn enumerate_minimal(t: &ConditionalInstance, limits: Limits) -> Result<BTreeSet<Instance>> {
    enumerate_minimal_with(t, &BTreeSet::new(), limits)
}

/// As [`enumerate_minimal`], also identifying nulls with `extra`
/// constants (for instance the constants of a query).
pub fn enumerate_minimal_with(
    t: &ConditionalInstance,
    extra: &BTreeSet<Value>,
    limits: Limits,
) -> Result<BTreeSet<Instance>> {
    let nulls: Vec<LabeledNull> = t.nulls().into_iter().collect();
    let mut constants = t.constants();
    constants.extend(extra.iter().cloned());
    let constants: Vec<Value> = constants.into_iter().collect();
    let mut images = BTreeSet::new();
    for v in canonical_valuations(&nulls, &constants, limits)? {
        images.insert(canonical_fresh(&apply_valuation(t, &v)?)?);
    }
    let mut out = BTreeSet::new();
    for j in images {
        if is_minimal_member(t, &j) {
            out.insert(j);
        }
    }
    Ok(out)
}

/// `j` is in `rep(t)` and no instance obtained by dropping one tuple is.
/// Since `rep(t)` is closed under extension this is extension-minimality.
pub fn is_minimal_member(t: &ConditionalInstance, j: &Instance) -> bool {
    if !rep_contains(t, j) {
        return false;
    }
    for (rel, rows) in j.relations() {
        for row in rows {
            let mut smaller = j.clone();
            smaller.remove(rel, row);
            if rep_contains(t, &smaller) {
                return false;
            }
        }
    }
    true
}

const MAX_RELABELINGS: usize = 40_320;

/// Canonical representative of `i` up to renaming of reserved fresh
/// constants: the smallest instance over all relabelings to
/// `@fresh0, @fresh1, ...` that respect an invariant signature order.
pub fn canonical_fresh(i: &Instance) -> Result<Instance> {
    let fresh: BTreeSet<Value> = i.active_domain().into_iter().filter(Value::is_fresh).collect();
    if fresh.is_empty() {
        return Ok(i.clone());
    }
    let mask = |row: &Tuple, me: &Value| -> Vec<String> {
        row.iter()
            .map(|x| {
                if x == me {
                    "#".to_string()
                } else if x.is_fresh() {
                    "*".to_string()
                } else {
                    x.to_string()
                }
            })
            .collect()
    };
    let mut classes: BTreeMap<Vec<(RelationName, Vec<String>)>, Vec<Value>> = BTreeMap::new();
    for f in &fresh {
        let mut sig: Vec<(RelationName, Vec<String>)> = Vec::new();
        for (rel, rows) in i.relations() {
            for row in rows.iter().filter(|r| r.contains(f)) {
                sig.push((rel.clone(), mask(row, f)));
            }
        }
        sig.sort();
        classes.entry(sig).or_default().push(f.clone());
    }
    let groups: Vec<Vec<Value>> = classes.into_values().collect();
    let total: usize = groups.iter().map(|g| (1..=g.len()).product::<usize>()).try_fold(1usize, |a, b| a.checked_mul(b)).unwrap_or(usize::MAX);
    if total > MAX_RELABELINGS {
        return Err(Error::BudgetExceeded { what: "fresh-constant relabelings", limit: MAX_RELABELINGS });
    }
    let mut best: Option<Instance> = None;
    let mut perms: Vec<Vec<Value>> = groups.clone();
    loop {
        let order: Vec<&Value> = perms.iter().flatten().collect();
        let rename: HashMap<&Value, Value> = order.iter().enumerate().map(|(k, v)| (*v, Value::fresh(k))).collect();
        let candidate = i.map_values(|x| rename.get(x).cloned().unwrap_or_else(|| x.clone()));
        if best.as_ref().is_none_or(|b| &candidate < b) {
            best = Some(candidate);
        }
        if !next_group_permutation(&mut perms) {
            break;
        }
    }
    Ok(best.unwrap())
}

/// Advances a product of per-group permutations; false once all are done.
fn next_group_permutation(groups: &mut [Vec<Value>]) -> bool {
    for g in groups.iter_mut() {
        if next_permutation(g) {
            return true;
        }
        // `next_permutation` wrapped this group back to sorted order.
    }
    false
}

fn next_permutation(xs: &mut [Value]) -> bool {
    if xs.len() < 2 {
        return false;
    }
    let mut i = xs.len() - 1;
    while i > 0 && xs[i - 1] >= xs[i] {
        i -= 1;
    }
    if i == 0 {
        xs.reverse();
        return false;
    }
    let mut j = xs.len() - 1;
    while xs[j] <= xs[i - 1] {
        j -= 1;
    }
    xs.swap(i - 1, j);
    xs[i..].reverse();
    true
}
