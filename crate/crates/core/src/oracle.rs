//! Brute-force enumeration of outcome sets over bounded universes.
//!
//! Candidate instances range over the input schema grown by the
//! procedure's requirements (and optionally reserved attributes), with
//! values drawn from the active domain, the procedure's constants and a
//! pool of fresh constants. Every returned instance passes
//! [`check_outcome`](crate::procedure::check_outcome); generation only skips candidates that are certain to
//! fail it.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::applicability::requirement_pairs;
use crate::chase::{approximate_outcomes, ApproximationResult};
use crate::constraint::Query;
use crate::ctable::{canonical_fresh, enumerate_minimal, rep_contains, ConditionalInstance, Limits};
use crate::error::{Error, Result};
use crate::model::{AttributeName, AttributeSet, Instance, RelationName, Schema, Tuple, Value};
use crate::procedure::{residual_conjuncts, OutcomeChecker, Procedure, ResidualMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub extra_constants: usize,
    pub max_new_tuples: usize,
    pub max_new_attributes: usize,
    pub allow_schema_growth: bool,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { extra_constants: 1, max_new_tuples: 1, max_new_attributes: 0, allow_schema_growth: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleOptions {
    pub mode: ResidualMode,
    /// Upper bound on candidates examined per step.
    pub max_candidates: u128,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { mode: ResidualMode::Strict, max_candidates: 5_000_000 }
    }
}

const RESERVED_PREFIX: &str = "_extra";

pub fn reserved_attribute(k: usize) -> AttributeName {
    AttributeName::new(format!("{RESERVED_PREFIX}{k}"))
}

/// The outcomes of `ps` applied in order to `i` within the budget.
pub fn enumerate_outcomes(ps: &[Procedure], i: &Instance, b: &Budget) -> Result<BTreeSet<Instance>> {
    enumerate_outcomes_with(ps, i, b, OracleOptions::default())
}

pub fn enumerate_outcomes_with(
    ps: &[Procedure],
    i: &Instance,
    b: &Budget,
    opts: OracleOptions,
) -> Result<BTreeSet<Instance>> {
    let mut current = BTreeSet::from([i.clone()]);
    for p in ps {
        let mut next = BTreeSet::new();
        for j in &current {
            next.extend(enumerate_step(p, j, b, opts)?);
        }
        current = next;
    }
    Ok(current)
}

fn candidate_schemas(p: &Procedure, s: &Schema, b: &Budget) -> Vec<Schema> {
    if !b.allow_schema_growth {
        return vec![s.clone()];
    }
    let mut base = s.clone();
    for pair in requirement_pairs(p, s) {
        let mut attrs = base.get(&pair.relation).cloned().unwrap_or_default();
        attrs.extend(pair.attributes);
        base.set(pair.relation, attrs);
    }
    let rels: Vec<RelationName> = base.relation_names().cloned().collect();
    let mut out = Vec::new();
    let mut counts = vec![0usize; rels.len()];
    fn go(
        k: usize,
        left: usize,
        counts: &mut Vec<usize>,
        rels: &[RelationName],
        base: &Schema,
        out: &mut Vec<Schema>,
    ) {
        if k == rels.len() {
            let mut s = base.clone();
            for (rel, &c) in rels.iter().zip(counts.iter()) {
                let mut attrs = s.get(rel).unwrap().clone();
                attrs.extend((0..c).map(reserved_attribute));
                s.set(rel.clone(), attrs);
            }
            out.push(s);
            return;
        }
        for c in 0..=left {
            counts[k] = c;
            go(k + 1, left - c, counts, rels, base, out);
        }
        counts[k] = 0;
    }
    go(0, b.max_new_attributes, &mut counts, &rels, &base, &mut out);
    out
}

fn value_pool(p: &Procedure, i: &Instance, b: &Budget) -> Vec<Value> {
    let mut v: BTreeSet<Value> = i.active_domain();
    v.extend(p.constants());
    v.extend((0..b.extra_constants).map(Value::fresh));
    v.into_iter().collect()
}

fn all_tuples(pool: &[Value], arity: usize, keep: &dyn Fn(&Tuple) -> bool) -> Vec<Tuple> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(arity);
    fn go(pool: &[Value], arity: usize, cur: &mut Tuple, keep: &dyn Fn(&Tuple) -> bool, out: &mut Vec<Tuple>) {
        if cur.len() == arity {
            if keep(cur) {
                out.push(cur.clone());
            }
            return;
        }
        for v in pool {
            cur.push(v.clone());
            go(pool, arity, cur, keep, out);
            cur.pop();
        }
    }
    go(pool, arity, &mut cur, keep, &mut out);
    out
}

/// Positions in `target` of the attributes in `attrs`.
fn indices(target: &AttributeSet, attrs: &AttributeSet) -> Vec<usize> {
    target.iter().enumerate().filter(|(_, a)| attrs.contains(*a)).map(|(k, _)| k).collect()
}

fn binomial_sum(n: u128, k: usize) -> u128 {
    let mut total = 0u128;
    let mut term = 1u128;
    for j in 0..=k as u128 {
        if j > n {
            break;
        }
        total = total.saturating_add(term);
        term = term.saturating_mul(n - j) / (j + 1);
    }
    total
}

struct RelationPlan {
    relation: RelationName,
    /// Per base tuple: its possible images, with `None` meaning dropped.
    base: Vec<Vec<Option<Tuple>>>,
}

fn enumerate_step(p: &Procedure, i: &Instance, b: &Budget, opts: OracleOptions) -> Result<BTreeSet<Instance>> {
    let mut out = BTreeSet::new();
    let Ok(checker) = OutcomeChecker::new(p, i, opts.mode) else {
        return Ok(out);
    };
    let s = i.schema();
    let pool = value_pool(p, i, b);
    let residual = residual_conjuncts(s, &p.scope);
    let prune_residual = match opts.mode {
        ResidualMode::PerRelation => true,
        ResidualMode::Strict => residual.iter().all(|c| !i.project(&c.relation, &c.attributes).is_empty()),
    };
    let mut fixed: BTreeMap<&RelationName, (&AttributeSet, HashSet<Tuple>)> = BTreeMap::new();
    if prune_residual {
        for c in &residual {
            fixed.insert(&c.relation, (&c.attributes, i.project(&c.relation, &c.attributes)));
        }
    }
    let total_safe: BTreeSet<&RelationName> = p
        .safe
        .iter()
        .filter_map(|q| match q {
            Query::Total(r) => Some(r),
            _ => None,
        })
        .collect();

    for target in candidate_schemas(p, s, b) {
        let mut plans = Vec::new();
        let mut universe: Vec<(RelationName, Tuple)> = Vec::new();
        let mut count: u128 = 1;
        for (rel, attrs) in target.relations() {
            let old = s.get(rel);
            let restriction = fixed.get(rel).map(|(x, proj)| (indices(attrs, x), proj));
            let keep = |t: &Tuple| match &restriction {
                Some((idx, proj)) => proj.contains(&idx.iter().map(|&k| t[k].clone()).collect::<Tuple>()),
                None => true,
            };
            universe.extend(all_tuples(&pool, attrs.len(), &keep).into_iter().map(|t| (rel.clone(), t)));
            let Some(old) = old else { continue };
            let must_keep = (total_safe.contains(rel) && old == attrs)
                || restriction.as_ref().is_some_and(|_| fixed[rel].0 == old);
            let new_attrs: AttributeSet = attrs.difference(old).cloned().collect();
            let extensions = all_tuples(&pool, new_attrs.len(), &|_| true);
            let mut base = Vec::new();
            for t in i.tuples(rel) {
                let named: BTreeMap<&AttributeName, &Value> = old.iter().zip(t).collect();
                let mut options: Vec<Option<Tuple>> = if must_keep { Vec::new() } else { vec![None] };
                for ext in &extensions {
                    let extra: BTreeMap<&AttributeName, &Value> = new_attrs.iter().zip(ext).collect();
                    let row = attrs.iter().map(|a| named.get(a).or_else(|| extra.get(a)).copied().unwrap().clone()).collect();
                    options.push(Some(row));
                }
                count = count.saturating_mul(options.len() as u128);
                base.push(options);
            }
            plans.push(RelationPlan { relation: rel.clone(), base });
        }
        count = count.saturating_mul(binomial_sum(universe.len() as u128, b.max_new_tuples));
        if count > opts.max_candidates {
            return Err(Error::BudgetExceeded {
                what: "oracle candidates",
                limit: opts.max_candidates.min(usize::MAX as u128) as usize,
            });
        }
        let mut base_inst = Instance::new(target.clone());
        let mut emit = |base: &Instance| -> Result<()> {
            for_each_subset(&universe, b.max_new_tuples, &mut |extra| {
                let mut j = base.clone();
                for (rel, t) in extra {
                    if !j.insert(rel, t.clone())? {
                        // The same candidate comes from a smaller subset.
                        return Ok(());
                    }
                }
                if checker.check(&j).is_ok() {
                    out.insert(j);
                }
                Ok(())
            })
        };
        choose_base(&plans, 0, 0, &mut base_inst, &mut emit)?;
    }
    Ok(out)
}

fn choose_base(
    plans: &[RelationPlan],
    r: usize,
    k: usize,
    inst: &mut Instance,
    emit: &mut dyn FnMut(&Instance) -> Result<()>,
) -> Result<()> {
    if r == plans.len() {
        return emit(inst);
    }
    let plan = &plans[r];
    if k == plan.base.len() {
        return choose_base(plans, r + 1, 0, inst, emit);
    }
    for option in &plan.base[k] {
        match option {
            None => choose_base(plans, r, k + 1, inst, emit)?,
            Some(t) => {
                let added = inst.insert(&plan.relation, t.clone())?;
                choose_base(plans, r, k + 1, inst, emit)?;
                if added {
                    inst.remove(&plan.relation, t);
                }
            }
        }
    }
    Ok(())
}

fn for_each_subset<T>(items: &[T], max: usize, visit: &mut dyn FnMut(&[&T]) -> Result<()>) -> Result<()> {
    fn go<'a, T>(
        items: &'a [T],
        start: usize,
        max: usize,
        cur: &mut Vec<&'a T>,
        visit: &mut dyn FnMut(&[&T]) -> Result<()>,
    ) -> Result<()> {
        visit(cur)?;
        if cur.len() == max {
            return Ok(());
        }
        for k in start..items.len() {
            cur.push(&items[k]);
            go(items, k + 1, max, cur, visit)?;
            cur.pop();
        }
        Ok(())
    }
    go(items, 0, max, &mut Vec::new(), visit)
}

/// Members of `set` that extend no other member.
pub fn minimal_elements(set: &BTreeSet<Instance>) -> BTreeSet<Instance> {
    // A proper extension has at least as many tuples and attributes and is
    // larger in one of the two, so anything it extends comes earlier.
    let size = |j: &Instance| (j.tuple_count(), j.schema().relations().map(|(_, a)| a.len()).sum::<usize>());
    let mut sorted: Vec<&Instance> = set.iter().collect();
    sorted.sort_by_key(|j| size(j));
    let mut minimal: Vec<&Instance> = Vec::new();
    for j in sorted {
        if !minimal.iter().any(|k| j.extends(k)) {
            minimal.push(j);
        }
    }
    minimal.into_iter().cloned().collect()
}

fn fresh_count(i: &Instance) -> usize {
    i.active_domain().iter().filter(|v| v.is_fresh()).count()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChaseComparison {
    pub oracle_outcomes: usize,
    /// Oracle outcomes outside the representation of the chase table.
    pub missing: Vec<Instance>,
    /// Minimal oracle outcomes that are not minimal instances of the table,
    /// up to renaming of fresh constants.
    pub oracle_only_minimal: Vec<Instance>,
    /// Minimal instances of the table (within the fresh-constant budget)
    /// that are not minimal oracle outcomes.
    pub chase_only_minimal: Vec<Instance>,
}

impl ChaseComparison {
    pub fn is_clean(&self) -> bool {
        self.missing.is_empty() && self.oracle_only_minimal.is_empty() && self.chase_only_minimal.is_empty()
    }
}

pub fn compare_with_chase(i: &Instance, ps: &[Procedure], b: &Budget) -> Result<ChaseComparison> {
    compare_with_chase_with(i, ps, b, OracleOptions::default())
}

pub fn compare_with_chase_with(i: &Instance, ps: &[Procedure], b: &Budget, opts: OracleOptions) -> Result<ChaseComparison> {
    let table = approximate_outcomes(i, ps)?;
    let oracle = enumerate_outcomes_with(ps, i, b, opts)?;
    let table = match table {
        ApproximationResult::Empty => None,
        other => other.table().cloned(),
    };
    compare_table(&oracle, table.as_ref(), b)
}

/// Compares an oracle outcome set with a table standing for the same set.
pub fn compare_table(oracle: &BTreeSet<Instance>, table: Option<&ConditionalInstance>, b: &Budget) -> Result<ChaseComparison> {
    let missing = oracle.iter().filter(|j| table.is_none_or(|t| !rep_contains(t, j))).cloned().collect();
    let oracle_min: BTreeSet<Instance> =
        minimal_elements(oracle).iter().map(canonical_fresh).collect::<Result<_>>()?;
    let chase_min: BTreeSet<Instance> = match table {
        None => BTreeSet::new(),
        Some(t) => enumerate_minimal(t, Limits::default())?
            .iter()
            .filter(|j| fresh_count(j) <= b.extra_constants)
            .map(canonical_fresh)
            .collect::<Result<_>>()?,
    };
    Ok(ChaseComparison {
        oracle_outcomes: oracle.len(),
        missing,
        oracle_only_minimal: oracle_min.difference(&chase_min).cloned().collect(),
        chase_only_minimal: chase_min.difference(&oracle_min).cloned().collect(),
    })
}
