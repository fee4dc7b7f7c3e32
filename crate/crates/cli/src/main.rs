//! `dqwb`: batch analyses over a workspace file.
//!
//! Exit status is 0 for an affirmative verdict, 1 for a negative one and 2
//! for errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value as Json};

use dqwb_core::chase::PlanLimits;
use dqwb_core::oracle::{compare_with_chase_with, enumerate_outcomes_with};
use dqwb_core::{
    approximate_outcomes, check_outcome, classify, min_schema, outcomes_nonempty, plan_search, ready_for,
    sequence_applicability, ApproximationResult, Budget, Class, ConjunctiveQuery, Instance, MinSchema, OracleOptions,
    Procedure, Query, ResidualMode, Schema, Workspace,
};

#[derive(Parser, Debug)]
#[command(name = "dqwb", version, about = "Applicability, outcome and readiness analyses for data procedures")]
struct Cli {
    /// Workspace file (`.dq` text or `.dq.json`).
    #[arg(long, short = 'w', global = true, default_value = "workspace.dq")]
    workspace: PathBuf,

    #[arg(long, value_enum, global = true, default_value_t = Format::Text)]
    format: Format,

    /// Compare out-of-scope data with a single residual query (default).
    #[arg(long, global = true, conflicts_with = "per_relation_residual")]
    strict_residual: bool,

    /// Compare out-of-scope data relation by relation.
    #[arg(long, global = true)]
    per_relation_residual: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(clap::Args, Debug)]
struct BudgetArgs {
    /// Comma-separated `key=value` list over `fresh`, `tuples`, `attrs` and
    /// `growth`, e.g. `fresh=1,tuples=2,attrs=0,growth=yes`.
    #[arg(long, env = "DQWB_BUDGET")]
    budget: Option<String>,

    /// Hard cap on candidate instances examined per step.
    #[arg(long, default_value_t = 5_000_000)]
    max_candidates: u128,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and check the workspace.
    Validate,
    /// Print the workspace in the other format (text to JSON, JSON to text).
    Convert,
    /// Minimal schema on which a procedure is applicable.
    SchemaMin {
        #[arg(long)]
        proc: String,
        #[arg(long)]
        schema: String,
    },
    /// Schema-level applicability of a sequence.
    Applicable {
        #[arg(long)]
        schema: String,
        /// A sequence name or a comma-separated list of procedures.
        #[arg(long, default_value = "")]
        seq: String,
    },
    /// Whether `after` is a possible outcome of a procedure on `before`.
    CheckOutcome {
        #[arg(long)]
        proc: String,
        #[arg(long)]
        before: String,
        #[arg(long)]
        after: String,
    },
    /// Conditional table over-approximating the outcomes of a sequence.
    Outcomes {
        #[arg(long)]
        instance: String,
        #[arg(long, default_value = "")]
        seq: String,
    },
    /// Whether the approximated outcome set is nonempty.
    Nonempty {
        #[arg(long)]
        instance: String,
        #[arg(long, default_value = "")]
        seq: String,
    },
    /// Whether a boolean query holds in every outcome of a sequence.
    Ready {
        #[arg(long)]
        instance: String,
        #[arg(long, default_value = "")]
        seq: String,
        #[arg(long)]
        query: String,
    },
    /// Shortest sequence from a pool that readies an instance for a query.
    Plan {
        #[arg(long)]
        instance: String,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 3)]
        max_len: usize,
        /// Procedures to draw from; defaults to every supported procedure.
        #[arg(long)]
        pool: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        max_states: usize,
    },
    /// Enumerate outcomes within a budget.
    Oracle {
        #[arg(long)]
        instance: String,
        #[arg(long, default_value = "")]
        seq: String,
        #[command(flatten)]
        budget: BudgetArgs,
    },
    /// Compare the chase approximation with the enumerated outcomes.
    Compare {
        #[arg(long)]
        instance: String,
        #[arg(long, default_value = "")]
        seq: String,
        #[command(flatten)]
        budget: BudgetArgs,
    },
}

struct Report {
    affirmative: bool,
    text: String,
    json: Json,
}

impl Report {
    fn new(affirmative: bool, text: impl Into<String>, json: Json) -> Self {
        Report { affirmative, text: text.into(), json }
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn parse_budget(spec: Option<&str>) -> Result<Budget, String> {
    let mut b = Budget::default();
    let Some(spec) = spec else { return Ok(b) };
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part.split_once('=').ok_or_else(|| format!("budget entry `{part}` is not key=value"))?;
        let num = || value.trim().parse::<usize>().map_err(|_| format!("budget `{key}` expects a number, got `{value}`"));
        match key.trim() {
            "fresh" | "extra_constants" => b.extra_constants = num()?,
            "tuples" | "max_new_tuples" => b.max_new_tuples = num()?,
            "attrs" | "max_new_attributes" => b.max_new_attributes = num()?,
            "growth" | "allow_schema_growth" => {
                b.allow_schema_growth = match value.trim() {
                    "yes" | "true" | "1" => true,
                    "no" | "false" | "0" => false,
                    other => return Err(format!("budget `growth` expects yes or no, got `{other}`")),
                }
            }
            other => return Err(format!("unknown budget key `{other}`")),
        }
    }
    Ok(b)
}

struct Ctx {
    ws: Workspace,
    mode: ResidualMode,
}

impl Ctx {
    fn instance(&self, name: &str) -> Result<&Instance, String> {
        self.ws.instances.get(name).map(|d| &d.value).ok_or_else(|| format!("no instance named `{name}`"))
    }

    fn schema(&self, name: &str) -> Result<&Schema, String> {
        self.ws.schemas.get(name).ok_or_else(|| format!("no schema named `{name}`"))
    }

    fn procedure(&self, name: &str) -> Result<&Procedure, String> {
        self.ws.procedures.get(name).ok_or_else(|| format!("no procedure named `{name}`"))
    }

    /// A declared sequence, or a comma-separated list of procedure names.
    fn sequence(&self, spec: &str) -> Result<Vec<Procedure>, String> {
        if let Some(ps) = self.ws.sequence(spec) {
            return Ok(ps);
        }
        spec.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|n| self.procedure(n).cloned()).collect()
    }

    fn boolean_query(&self, name: &str) -> Result<&ConjunctiveQuery, String> {
        match self.ws.queries.get(name) {
            Some(Query::Cq(q)) if q.is_boolean() => Ok(q),
            Some(_) => Err(format!("query `{name}` is not a boolean conjunctive query")),
            None => Err(format!("no query named `{name}`")),
        }
    }

    fn options(&self, args: &BudgetArgs) -> OracleOptions {
        OracleOptions { mode: self.mode, max_candidates: args.max_candidates }
    }
}

fn names(ps: &[Procedure]) -> Vec<String> {
    ps.iter().map(|p| p.name.clone()).collect()
}

fn seq_label(ps: &[Procedure]) -> String {
    if ps.is_empty() {
        "(empty)".into()
    } else {
        names(ps).join(", ")
    }
}

fn render_instances(set: &[Instance]) -> String {
    let mut out = String::new();
    for (k, i) in set.iter().enumerate() {
        out.push_str(&format!("-- {}\n{i}", k + 1));
    }
    out
}

fn run(cli: &Cli, ws: Workspace) -> Result<Report, String> {
    let mode = if cli.per_relation_residual { ResidualMode::PerRelation } else { ResidualMode::Strict };
    let ctx = Ctx { ws, mode };
    let err = |e: dqwb_core::Error| e.to_string();
    Ok(match &cli.command {
        Command::Validate => {
            let ws = &ctx.ws;
            let text = format!(
                "ok: {} schemas, {} instances, {} tables, {} constraints, {} procedures, {} queries, {} sequences",
                ws.schemas.len(),
                ws.instances.len(),
                ws.ctables.len(),
                ws.constraints.len(),
                ws.procedures.len(),
                ws.queries.len(),
                ws.sequences.len()
            );
            Report::new(true, text, json!({ "valid": true }))
        }
        Command::Convert => {
            let is_json = cli.workspace.to_string_lossy().ends_with(".json");
            let out = if is_json { ctx.ws.to_dsl() } else { ctx.ws.to_json() };
            Report::new(true, out.trim_end(), json!({ "workspace": serde_json::from_str::<Json>(&ctx.ws.to_json()).unwrap() }))
        }
        Command::SchemaMin { proc, schema } => {
            let p = ctx.procedure(proc)?;
            let s = ctx.schema(schema)?;
            match min_schema(p, s).map_err(err)? {
                MinSchema::Success(r) => {
                    let text = format!("minimal schema for `{proc}` on `{schema}`:\n{r}");
                    Report::new(true, text.trim_end(), json!({ "success": true, "requirement": r }))
                }
                MinSchema::Failure(f) => Report::new(
                    false,
                    format!("`{proc}` is not applicable on `{schema}`: {f}"),
                    json!({ "success": false, "failure": f }),
                ),
            }
        }
        Command::Applicable { schema, seq } => {
            let ps = ctx.sequence(seq)?;
            let s = ctx.schema(schema)?;
            let a = sequence_applicability(&ps, s).map_err(err)?;
            let mut text = format!("applicable: {}\n", yes_no(a.applicable));
            for (k, r) in a.chain.iter().enumerate() {
                let label = if k == 0 { format!("input `{schema}`") } else { format!("after `{}`", ps[k - 1].name) };
                text.push_str(&format!("step {k} ({label}):\n"));
                for line in r.to_string().lines() {
                    text.push_str(&format!("  {line}\n"));
                }
            }
            if let (Some(k), Some(f)) = (a.failure_index, &a.failure) {
                text.push_str(&format!("fails at `{}` (position {}): {f}\n", ps[k].name, k + 1));
            }
            Report::new(a.applicable, text.trim_end(), json!(a))
        }
        Command::CheckOutcome { proc, before, after } => {
            let p = ctx.procedure(proc)?;
            let (b, a) = (ctx.instance(before)?, ctx.instance(after)?);
            match check_outcome(p, b, a, ctx.mode) {
                Ok(()) => Report::new(true, "possible outcome: yes", json!({ "possible_outcome": true })),
                Err(f) => Report::new(
                    false,
                    format!("possible outcome: no (clause {}: {f})", f.clause()),
                    json!({ "possible_outcome": false, "clause": f.clause(), "reason": f.to_string() }),
                ),
            }
        }
        Command::Outcomes { instance, seq } => {
            let ps = ctx.sequence(seq)?;
            let i = ctx.instance(instance)?;
            match approximate_outcomes(i, &ps).map_err(err)? {
                ApproximationResult::Empty => {
                    Report::new(false, "no outcomes: the sequence is not applicable", json!({ "empty": true }))
                }
                r => {
                    let t = r.table().expect("nonempty result");
                    Report::new(true, t.to_string().trim_end(), json!({ "empty": false, "result": r }))
                }
            }
        }
        Command::Nonempty { instance, seq } => {
            let ps = ctx.sequence(seq)?;
            let ok = outcomes_nonempty(ctx.instance(instance)?, &ps).map_err(err)?;
            Report::new(ok, format!("nonempty: {}", yes_no(ok)), json!({ "nonempty": ok }))
        }
        Command::Ready { instance, seq, query } => {
            let ps = ctx.sequence(seq)?;
            let q = ctx.boolean_query(query)?;
            let ok = ready_for(ctx.instance(instance)?, &ps, q).map_err(err)?;
            Report::new(
                ok,
                format!("ready: {} (sequence: {})", yes_no(ok), seq_label(&ps)),
                json!({ "ready": ok, "sequence": names(&ps) }),
            )
        }
        Command::Plan { instance, query, max_len, pool, max_states } => {
            let pool: Vec<Procedure> = match pool {
                Some(spec) => ctx.sequence(spec)?,
                None => ctx.ws.procedures.values().filter(|p| classify(p) != Class::Neither).cloned().collect(),
            };
            let q = ctx.boolean_query(query)?;
            let limits = PlanLimits { max_states: *max_states };
            match plan_search(ctx.instance(instance)?, &pool, q, *max_len, limits).map_err(err)? {
                Some(plan) => Report::new(
                    true,
                    format!("plan: [{}]", names(&plan).join(", ")),
                    json!({ "found": true, "plan": names(&plan) }),
                ),
                None => Report::new(
                    false,
                    format!("plan: none within length {max_len}"),
                    json!({ "found": false, "plan": Json::Null }),
                ),
            }
        }
        Command::Oracle { instance, seq, budget } => {
            let ps = ctx.sequence(seq)?;
            let b = parse_budget(budget.budget.as_deref())?;
            let set = enumerate_outcomes_with(&ps, ctx.instance(instance)?, &b, ctx.options(budget)).map_err(err)?;
            let list: Vec<Instance> = set.into_iter().collect();
            let text = format!("outcomes within budget: {}\n{}", list.len(), render_instances(&list));
            Report::new(!list.is_empty(), text.trim_end(), json!({ "budget": b, "count": list.len(), "outcomes": list }))
        }
        Command::Compare { instance, seq, budget } => {
            let ps = ctx.sequence(seq)?;
            let b = parse_budget(budget.budget.as_deref())?;
            let c = compare_with_chase_with(ctx.instance(instance)?, &ps, &b, ctx.options(budget)).map_err(err)?;
            let mut text = format!(
                "oracle outcomes: {}\nmissing from the approximation: {}\nminimal mismatches: {} oracle-only, {} chase-only\n",
                c.oracle_outcomes,
                c.missing.len(),
                c.oracle_only_minimal.len(),
                c.chase_only_minimal.len()
            );
            for (label, set) in
                [("missing", &c.missing), ("oracle-only minimal", &c.oracle_only_minimal), ("chase-only minimal", &c.chase_only_minimal)]
            {
                if !set.is_empty() {
                    text.push_str(&format!("{label}:\n{}", render_instances(set)));
                }
            }
            Report::new(c.is_clean(), text.trim_end(), json!({ "clean": c.is_clean(), "report": c }))
        }
    })
}

fn load(path: &Path) -> Result<Workspace, String> {
    Workspace::load(path).map_err(|e| match e.position() {
        Some(_) => format!("{}:{e}", path.display()),
        None => e.to_string(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli.workspace).and_then(|ws| run(&cli, ws));
    match result {
        Ok(report) => {
            match cli.format {
                Format::Text => println!("{}", report.text),
                Format::Json => println!("{}", serde_json::to_string_pretty(&report.json).unwrap()),
            }
            ExitCode::from(if report.affirmative { 0 } else { 1 })
        }
        Err(message) => {
            match cli.format {
                Format::Text => eprintln!("error: {message}"),
                Format::Json => println!("{}", json!({ "error": message })),
            }
            ExitCode::from(2)
        }
    }
}
