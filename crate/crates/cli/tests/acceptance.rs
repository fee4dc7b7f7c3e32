//! Acceptance suite: one line per criterion, nonzero exit on any failure.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::*;
use dqwb_core::ctable::hat_rep_contains;
use dqwb_core::*;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn workspace_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../workspaces/visits.dq")
}

fn workspace() -> Workspace {
    Workspace::load(&workspace_path()).expect("shipped workspace loads")
}

fn inst(ws: &Workspace, name: &str) -> Instance {
    ws.instances[name].value.clone()
}

fn dqwb(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_dqwb"))
        .arg("--workspace")
        .arg(workspace_path())
        .args(args)
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).trim().to_string())
}

/// Smallest of `runs` timings of `f`.
fn min_time(runs: usize, mut f: impl FnMut()) -> Duration {
    (0..runs)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed()
        })
        .min()
        .unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let cases = [
        ("J1", 0, "possible outcome: yes"),
        ("J2", 0, "possible outcome: yes"),
        ("J3", 0, "possible outcome: yes"),
        ("J1_missing", 1, "possible outcome: no (clause 4"),
        ("I", 1, "possible outcome: no (clause 2"),
    ];
    for (after, code, text) in cases {
        let (got, out) = dqwb(&["check-outcome", "--proc", "P", "--before", "I", "--after", after]);
        check(got == code && out.starts_with(text), || format!("{after}: exit {got}, `{out}`"))?;
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("5 verdicts in {elapsed:.2?}"))
}

fn criterion_2() -> Outcome {
    let s = Schema::from_relations([("R", vec!["A1", "A2"]), ("T", vec!["B1", "B2", "B3"]), ("S", vec!["A1", "B1"])])
        .map_err(|e| e.to_string())?;
    let scope = [StructureConstraint::wildcard("R"), StructureConstraint::attrs("S", ["B1"])];
    let got = residual_query(&s, &scope);
    let want = ConjunctiveQuery::new(
        vec![NamedAtom::vars("T", &[("B1", "p"), ("B2", "q"), ("B3", "r")]), NamedAtom::vars("S", &[("A1", "s")])],
        vec![],
        [],
    );
    check(got.canonical() == want.canonical(), || format!("got {got}"))?;
    Ok(format!("{got}"))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut solutions = 0;
    let settings = 30;
    for seed in 0..settings {
        let de = data_exchange(seed);
        let got = enumerate_outcomes(std::slice::from_ref(&de.procedure), &de.instance, &de.budget)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let want = budgeted_solutions(&de);
        check(got == want, || format!("seed {seed}: {} oracle outcomes, {} solutions", got.len(), want.len()))?;
        solutions += want.len();
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("{settings} settings, {solutions} solutions, {elapsed:.2?}"))
}

/// `n` relations of three attributes and a procedure that requires each of
/// them and adds one attribute to each.
fn alter_ladder(n: usize) -> (Schema, Procedure) {
    let rels: Vec<(String, Vec<String>)> =
        (0..n).map(|k| (format!("R{k}"), vec![format!("a{k}"), format!("b{k}"), format!("c{k}")])).collect();
    let schema = Schema::from_relations(
        rels.iter().map(|(r, a)| (r.as_str(), a.iter().map(String::as_str).collect::<Vec<_>>())),
    )
    .unwrap();
    let p = Procedure::new("widen")
        .with_pre(rels.iter().map(|(r, _)| Constraint::Structure(StructureConstraint::wildcard(r.as_str()))))
        .with_post(rels.iter().map(|(r, _)| Constraint::Structure(StructureConstraint::attrs(r.as_str(), ["extra"]))));
    (schema, p)
}

fn criterion_4() -> Outcome {
    let ws = workspace();
    let s = &ws.schemas["S"];
    let req = min_schema(&ws.procedures["alter_age"], s)
        .map_err(|e| e.to_string())?
        .success()
        .ok_or("alter_age has no minimal schema")?;
    check(req.schema.get(&"EVisits".into()) == s.get(&"EVisits".into()), || "EVisits changed".into())?;
    let loc: Vec<String> = req.schema.get(&"LocVisits".into()).unwrap().iter().map(|a| a.to_string()).collect();
    check(loc == ["age", "facility", "patInsur", "timestp"], || format!("LocVisits: {loc:?}"))?;

    let mut pinned = ws.procedures["migrate"].clone();
    pinned.post.push(Constraint::Structure(StructureConstraint::attrs("LocVisits", ["age"])));
    match min_schema(&pinned, s).map_err(|e| e.to_string())? {
        MinSchema::Failure(f) => check(f.step == 7, || format!("failed at step {}", f.step))?,
        MinSchema::Success(_) => return Err("pinned arity did not fail".into()),
    }

    let mut times = Vec::new();
    for n in [40, 400] {
        let (schema, p) = alter_ladder(n);
        let reps = 4000 / n;
        let mut ok = true;
        let t = min_time(7, || {
            for _ in 0..reps {
                ok &= matches!(min_schema(&p, &schema), Ok(MinSchema::Success(_)));
            }
        });
        check(ok, || format!("ladder size {n} failed"))?;
        times.push(t.as_secs_f64() / reps as f64);
    }
    let ratio = times[1] / times[0];
    check(ratio <= 12.0, || format!("10x size took {ratio:.1}x time"))?;
    Ok(format!("trace and step-7 failure reproduced; 10x size took {ratio:.1}x time"))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let cases = 60;
    let mut outcomes = 0;
    for seed in 0..cases {
        let case = chase_case(seed);
        let cmp = compare_with_chase(&case.instance, &case.procedures, &case.budget)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        check(cmp.is_clean(), || {
            format!(
                "seed {seed}: {} missing, {} oracle-only minimal, {} chase-only minimal",
                cmp.missing.len(),
                cmp.oracle_only_minimal.len(),
                cmp.chase_only_minimal.len()
            )
        })?;
        outcomes += cmp.oracle_outcomes;
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("{cases} cases, {outcomes} oracle outcomes, {elapsed:.2?}"))
}

fn criterion_6() -> Outcome {
    let ws = workspace();
    let seq = ws.sequence("filter").ok_or("no filter sequence")?;
    let i = inst(&ws, "I_rt");
    let b = Budget { extra_constants: 1, max_new_tuples: 2, max_new_attributes: 0, allow_schema_growth: false };
    let got = enumerate_outcomes(&seq, &i, &b).map_err(|e| e.to_string())?;
    let tgds: Vec<Tgd> = seq.iter().flat_map(|p| p.post_tgds().cloned()).collect();
    let pool = [Value::constant("1"), Value::fresh(0)];
    let facts: Vec<(RelationName, Value)> =
        ["R", "T"].iter().flat_map(|r| pool.iter().map(move |v| (RelationName::from(*r), v.clone()))).collect();
    let mut want = BTreeSet::new();
    for a in 0..=facts.len() {
        for c in a..=facts.len() {
            let mut j = i.clone();
            for k in [a, c].into_iter().filter(|&k| k < facts.len()) {
                j.insert(&facts[k].0, vec![facts[k].1.clone()]).unwrap();
            }
            if tgds.iter().all(|t| brute_tgd_holds(t, &j)) {
                want.insert(j);
            }
        }
    }
    check(got == want, || format!("{} outcomes, {} filtered extensions", got.len(), want.len()))?;

    let first = enumerate_outcomes(&seq[..1], &i, &b).map_err(|e| e.to_string())?;
    let mut violating = 0;
    for k in first.iter().chain([&inst(&ws, "K_bad")]) {
        let t_in_r = k.tuples(&"T".into()).is_subset(k.tuples(&"R".into()));
        let after = enumerate_outcomes(&seq[1..], k, &b).map_err(|e| e.to_string())?;
        if !t_in_r {
            check(after.is_empty(), || format!("P2 has outcomes from\n{k}"))?;
            violating += 1;
        }
    }
    check(violating > 1, || "no violating intermediate instances".into())?;
    Ok(format!("{} outcomes; {violating} violating intermediates filtered out", got.len()))
}

fn criterion_7() -> Outcome {
    let ws = workspace();
    let p = &ws.procedures["p_rs"];
    let t = &ws.ctables["T_rs"].value;
    let post = Constraint::Tgd(p.post_tgds().next().ok_or("p_rs has no tgd")?.clone());
    let holds = |j: &Instance| satisfies(&post, j, j.schema()).unwrap_or(false);
    let wide = inst(&ws, "J_rs_wide");
    check(hat_rep_contains(t, &wide) && !holds(&wide), || "witness is not a violating rep member".into())?;

    let chased = chase_safe_scope(t, p).map_err(|e| e.to_string())?;
    for m in enumerate_minimal(&chased, Limits::default()).map_err(|e| e.to_string())? {
        check(holds(&m), || format!("minimal chase member violates the postcondition\n{m}"))?;
    }
    let b = Budget { extra_constants: 1, max_new_tuples: 1, max_new_attributes: 0, allow_schema_growth: false };
    let outcomes = enumerate_outcomes(std::slice::from_ref(p), &inst(&ws, "I_rs"), &b).map_err(|e| e.to_string())?;
    check(!outcomes.is_empty(), || "no outcomes".into())?;
    for o in &outcomes {
        check(holds(o), || format!("outcome violates the postcondition\n{o}"))?;
    }
    check(!is_possible_outcome(p, &inst(&ws, "I_rs"), &wide), || "witness accepted as an outcome".into())?;
    Ok(format!("witness R={{1,2,3}}, S={{1,2}}; {} outcomes all satisfy R -> S", outcomes.len()))
}

/// `S(A, B)` holds the data; a copy into `R`, an extra column on `R` and a
/// copy of `R` into `T`.
fn nonempty_fixture(n: usize) -> (Instance, Vec<Procedure>) {
    let schema = Schema::from_relations([("S", vec!["A", "B"]), ("R", vec!["A", "B"]), ("T", vec!["A"])]).unwrap();
    let mut i = Instance::new(schema);
    for k in 0..n {
        let row = vec![Value::constant(k.to_string()), Value::constant((k % 7).to_string())];
        let rel = if k % 5 == 0 { "R" } else { "S" };
        i.insert(&rel.into(), row).unwrap();
    }
    let copy = Tgd::new(
        vec![NamedAtom::vars("S", &[("A", "x"), ("B", "y")])],
        vec![],
        vec![NamedAtom::vars("R", &[("A", "x"), ("B", "y")])],
        vec![],
    );
    let project =
        Tgd::new(vec![NamedAtom::vars("R", &[("A", "x")])], vec![], vec![NamedAtom::vars("T", &[("A", "x")])], vec![]);
    let widen = instantiate_template("widen", Template::AlterTable { relation: "R".into(), attributes: vec!["C".into()] })
        .unwrap();
    let ps = vec![
        safe_scope("copy", copy, vec![("S".into(), vec!["A".into(), "B".into()])]),
        widen,
        safe_scope("project", project, vec![("R".into(), vec!["A".into()])]),
    ];
    (i, ps)
}

fn criterion_8() -> Outcome {
    let mut times = Vec::new();
    for n in [10, 100, 1000] {
        let (i, ps) = nonempty_fixture(n);
        let mut answer = Ok(false);
        let t = min_time(3, || answer = outcomes_nonempty(&i, &ps));
        check(answer == Ok(true), || format!("{n} tuples: {answer:?}"))?;
        times.push(t);
    }
    check(times[2] < Duration::from_secs(5), || format!("1000 tuples took {:?}", times[2]))?;
    let ratio = times[2].as_secs_f64() / times[1].as_secs_f64();
    check(ratio < 100.0, || format!("100 -> 1000 tuples took {ratio:.1}x time"))?;
    Ok(format!("{:.2?} / {:.2?} / {:.2?} at 10 / 100 / 1000 tuples ({ratio:.1}x for 10x)", times[0], times[1], times[2]))
}

fn criterion_9() -> Outcome {
    let (code, out) = dqwb(&["ready", "--instance", "I", "--seq", "", "--query", "q_visit"]);
    check(code == 1 && out.starts_with("ready: no"), || format!("empty sequence: exit {code}, `{out}`"))?;
    let (code, out) = dqwb(&["ready", "--instance", "I", "--seq", "migrate", "--query", "q_visit"]);
    check(code == 0 && out.starts_with("ready: yes"), || format!("[migrate]: exit {code}, `{out}`"))?;
    let (code, out) = dqwb(&["plan", "--instance", "I", "--query", "q_visit", "--max-len", "2"]);
    check(code == 0 && out == "plan: [migrate]", || format!("plan: exit {code}, `{out}`"))?;

    let ws = workspace();
    let Some(Query::Cq(q)) = ws.queries.get("q_visit") else { return Err("q_visit missing".into()) };
    let plan = [ws.procedures["migrate"].clone()];
    let b = Budget { extra_constants: 1, max_new_tuples: 1, max_new_attributes: 0, allow_schema_growth: false };
    let outcomes = enumerate_outcomes(&plan, &inst(&ws, "I"), &b).map_err(|e| e.to_string())?;
    check(!outcomes.is_empty(), || "the plan has no outcomes".into())?;
    for o in &outcomes {
        let answers = evaluate_query(&Query::Cq(q.clone()), o).map_err(|e| e.to_string())?;
        check(answers.contains(&vec![]), || format!("query fails in an outcome\n{o}"))?;
    }
    Ok(format!("plan [migrate] certified on {} oracle outcomes", outcomes.len()))
}

fn criterion_10() -> Outcome {
    let suites: [(&str, fn(u64) -> Result<(), String>, u64); 4] = [
        ("rep extension closure", prop_rep_extension_closure, 150),
        ("oracle/checker agreement", prop_oracle_checker_agreement, 150),
        ("chase determinism", prop_chase_determinism, 100),
        ("DSL round trip", prop_dsl_round_trip, 150),
    ];
    let mut total = 0;
    for (name, prop, cases) in suites {
        for seed in 0..cases {
            prop(seed).map_err(|e| format!("{name}, seed {seed}: {e}"))?;
        }
        total += cases;
    }
    Ok(format!("{total} generated cases"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("visit migration outcome verdicts", criterion_1),
        ("residual query of the R/T/S example", criterion_2),
        ("data-exchange outcomes equal solutions", criterion_3),
        ("minimal schema trace, failure and scaling", criterion_4),
        ("chase tables agree with the oracle", criterion_5),
        ("filtering by a second procedure", criterion_6),
        ("tables admit non-outcomes", criterion_7),
        ("nonemptiness scaling", criterion_8),
        ("readiness and planning", criterion_9),
        ("property suites", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match result {
            Ok(detail) => println!("[PASS] criterion {}: {name} ({detail})", k + 1),
            Err(why) => {
                failed += 1;
                println!("[FAIL] criterion {}: {name}: {why}", k + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
