use std::collections::{BTreeMap, BTreeSet};

use super::lexer::{lex, Pos, Spanned, Tok};
use super::{Declared, DslError, Workspace};
use crate::constraint::{
    BoolCondition, ConjunctiveQuery, ConstantAtom, Constraint, Egd, NamedAtom, Query, Shape, StructureConstraint, Term,
    Tgd,
};
use crate::ctable::{CTuple, Cell, ConditionalInstance, ElementCondition, LabeledNull};
use crate::model::{AttributeName, AttributeSet, Instance, RelationName, Schema, Value, VariableName};
use crate::procedure::{instantiate_template, InsertSource, Procedure, Template};

type PResult<T> = Result<T, DslError>;

pub(crate) fn parse(text: &str) -> PResult<Workspace> {
    let toks = lex(text)?;
    let mut p = Parser { toks, k: 0, ws: Workspace::default(), names: BTreeSet::new() };
    p.workspace()?;
    Ok(p.ws)
}

struct Parser {
    toks: Vec<Spanned>,
    k: usize,
    ws: Workspace,
    names: BTreeSet<String>,
}

fn invalid(pos: Pos, message: impl Into<String>) -> DslError {
    DslError::Invalid { line: pos.line, col: pos.col, message: message.into() }
}

fn unresolved(pos: Pos, kind: &'static str, name: &str) -> DslError {
    DslError::Resolution { line: pos.line, col: pos.col, kind, name: name.into() }
}

const RESERVED: [&str; 6] = ["null", "true", "false", "and", "or", "not"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.k].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.k + n).min(self.toks.len() - 1)].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.k].pos
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.k].tok.clone();
        if self.k + 1 < self.toks.len() {
            self.k += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> PResult<T> {
        let pos = self.pos();
        Err(DslError::Syntax { line: pos.line, col: pos.col, expected: expected.into(), found: self.peek().describe() })
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok) -> PResult<()> {
        if self.eat(&t) {
            Ok(())
        } else {
            self.fail(&t.describe())
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.fail(&format!("`{kw}`"))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Pos)> {
        let pos = self.pos();
        match self.peek() {
            Tok::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                let s = s.clone();
                self.bump();
                Ok((s, pos))
            }
            _ => self.fail(what),
        }
    }

    fn declare(&mut self, name: &str, pos: Pos) -> PResult<()> {
        if !self.names.insert(name.to_string()) {
            return Err(DslError::Duplicate { line: pos.line, col: pos.col, name: name.into() });
        }
        Ok(())
    }

    fn list<T>(&mut self, close: &Tok, mut item: impl FnMut(&mut Self) -> PResult<T>) -> PResult<Vec<T>> {
        let mut out = Vec::new();
        if self.peek() == close {
            return Ok(out);
        }
        loop {
            out.push(item(self)?);
            if !self.eat(&Tok::Comma) {
                return Ok(out);
            }
        }
    }

    fn workspace(&mut self) -> PResult<()> {
        while self.peek() != &Tok::Eof {
            match self.peek() {
                Tok::Ident(kw) => match kw.as_str() {
                    "schema" => self.schema()?,
                    "instance" => self.instance()?,
                    "ctable" => self.ctable()?,
                    "tgd" | "egd" | "struct" => self.named_constraint()?,
                    "proc" => self.procedure()?,
                    "query" => self.query_item()?,
                    "seq" => self.sequence()?,
                    _ => return self.fail("a declaration (schema, instance, ctable, tgd, egd, struct, proc, query, seq)"),
                },
                _ => return self.fail("a declaration"),
            }
            self.eat(&Tok::Semi);
        }
        Ok(())
    }

    fn schema(&mut self) -> PResult<()> {
        self.expect_kw("schema")?;
        let (name, pos) = self.ident("schema name")?;
        self.declare(&name, pos)?;
        let mut schema = Schema::new();
        if self.eat_kw("extends") {
            let (base, bpos) = self.ident("schema name")?;
            schema = self.ws.schemas.get(&base).cloned().ok_or_else(|| unresolved(bpos, "schema", &base))?;
        }
        self.expect(Tok::LBrace)?;
        let mut seen = BTreeSet::new();
        while !self.eat(&Tok::RBrace) {
            self.expect_kw("rel")?;
            let (rel, rpos) = self.ident("relation name")?;
            if rel == "C" {
                return Err(invalid(rpos, "`C` is reserved for the non-null atom"));
            }
            if !seen.insert(rel.clone()) {
                return Err(invalid(rpos, format!("relation `{rel}` declared twice")));
            }
            self.expect(Tok::LParen)?;
            let attrs = self.list(&Tok::RParen, |p| p.ident("attribute name"))?;
            self.expect(Tok::RParen)?;
            self.expect(Tok::Semi)?;
            let mut set = AttributeSet::new();
            for (a, apos) in attrs {
                if !set.insert(AttributeName::new(a.clone())) {
                    return Err(invalid(apos, format!("attribute `{a}` listed twice for `{rel}`")));
                }
            }
            schema.set(RelationName::new(rel), set);
        }
        self.ws.schemas.insert(name, schema);
        Ok(())
    }

    fn schema_ref(&mut self) -> PResult<(String, Schema)> {
        let (name, pos) = self.ident("schema name")?;
        let s = self.ws.schemas.get(&name).cloned().ok_or_else(|| unresolved(pos, "schema", &name))?;
        Ok((name, s))
    }

    /// `R: row, row;` blocks shared by instances and tables.
    fn rows<T>(
        &mut self,
        schema: &Schema,
        mut row: impl FnMut(&mut Self) -> PResult<(Vec<T>, ElementCondition)>,
        mut add: impl FnMut(&RelationName, Vec<T>, ElementCondition),
    ) -> PResult<()> {
        self.expect(Tok::LBrace)?;
        let mut counts: BTreeMap<RelationName, usize> = BTreeMap::new();
        while !self.eat(&Tok::RBrace) {
            let (rel, rpos) = self.ident("relation name")?;
            let rel = RelationName::new(rel);
            let arity = schema.get(&rel).map(|a| a.len()).ok_or_else(|| unresolved(rpos, "relation", rel.as_str()))?;
            self.expect(Tok::Colon)?;
            if !self.eat(&Tok::Semi) {
                loop {
                    let pos = self.pos();
                    let (cells, cond) = row(self)?;
                    let index = counts.entry(rel.clone()).or_default();
                    *index += 1;
                    if cells.len() != arity {
                        return Err(DslError::SchemaConformance {
                            line: pos.line,
                            col: pos.col,
                            relation: rel.to_string(),
                            index: *index,
                            expected: arity,
                            found: cells.len(),
                        });
                    }
                    add(&rel, cells, cond);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.expect(Tok::Semi)?;
            }
        }
        Ok(())
    }

    fn instance(&mut self) -> PResult<()> {
        self.expect_kw("instance")?;
        let (name, pos) = self.ident("instance name")?;
        self.declare(&name, pos)?;
        self.expect(Tok::Colon)?;
        let (sname, schema) = self.schema_ref()?;
        let mut inst = Instance::new(schema.clone());
        self.rows(
            &schema,
            |p| {
                p.expect(Tok::LParen)?;
                let vals = p.list(&Tok::RParen, |p| p.row_value())?;
                p.expect(Tok::RParen)?;
                Ok((vals, ElementCondition::True))
            },
            |rel, vals, _| {
                inst.insert(rel, vals).expect("arity checked");
            },
        )?;
        self.ws.instances.insert(name, Declared { schema: sname, value: inst });
        Ok(())
    }

    fn ctable(&mut self) -> PResult<()> {
        self.expect_kw("ctable")?;
        let (name, pos) = self.ident("table name")?;
        self.declare(&name, pos)?;
        self.expect(Tok::Colon)?;
        let (sname, schema) = self.schema_ref()?;
        let mut t = ConditionalInstance::new(schema.clone());
        self.rows(
            &schema,
            |p| {
                p.expect(Tok::LParen)?;
                let cells = p.list(&Tok::RParen, |p| p.cell())?;
                p.expect(Tok::RParen)?;
                let cond = if p.eat(&Tok::Bar) { p.econd()? } else { ElementCondition::True };
                Ok((cells, cond))
            },
            |rel, cells, condition| {
                t.insert(rel, CTuple { cells, condition }).expect("arity checked");
            },
        )?;
        self.ws.ctables.insert(name, Declared { schema: sname, value: t });
        Ok(())
    }

    fn named_constraint(&mut self) -> PResult<()> {
        let Tok::Ident(kw) = self.bump() else { unreachable!() };
        let (name, pos) = self.ident("constraint name")?;
        self.declare(&name, pos)?;
        self.expect(Tok::Colon)?;
        let cpos = self.pos();
        let c = match kw.as_str() {
            "struct" => Constraint::Structure(self.structure()?),
            _ => {
                let c = self.dependency()?;
                let ok = match (&c, kw.as_str()) {
                    (Constraint::Tgd(_), "tgd") | (Constraint::Egd(_), "egd") => true,
                    _ => false,
                };
                if !ok {
                    return Err(invalid(cpos, format!("`{name}` is declared as {kw} but is not one")));
                }
                c
            }
        };
        c.validate().map_err(|e| invalid(cpos, e))?;
        self.ws.constraints.insert(name, c);
        Ok(())
    }

    fn structure(&mut self) -> PResult<StructureConstraint> {
        let (rel, _) = self.ident("relation name")?;
        self.expect(Tok::LBracket)?;
        let shape = if self.eat(&Tok::Star) {
            Shape::Wildcard
        } else {
            Shape::Attrs(self.list(&Tok::RBracket, |p| Ok(AttributeName::new(p.ident("attribute name")?.0)))?)
        };
        self.expect(Tok::RBracket)?;
        Ok(StructureConstraint { relation: RelationName::new(rel), shape })
    }

    /// A tgd or an egd.
    fn dependency(&mut self) -> PResult<Constraint> {
        let pos = self.pos();
        let (atoms, consts) = self.conjunction()?;
        self.expect(Tok::Arrow)?;
        if matches!(self.peek(), Tok::Ident(_)) && self.peek_at(1) == &Tok::Eq {
            let (l, _) = self.ident("variable")?;
            self.expect(Tok::Eq)?;
            let (r, _) = self.ident("variable")?;
            if !consts.is_empty() {
                return Err(invalid(pos, "egd bodies cannot use C(val:..)"));
            }
            return Ok(Constraint::Egd(Egd::new(atoms, &l, &r)));
        }
        let declared = self.exists_prefix()?;
        let (head_atoms, head_consts) = self.conjunction()?;
        let tgd = Tgd::new(atoms, consts, head_atoms, head_consts);
        if let Some(d) = declared {
            if d != tgd.head.existential {
                return Err(invalid(pos, "declared existential variables differ from the head variables not in the body"));
            }
        }
        Ok(Constraint::Tgd(tgd))
    }

    fn exists_prefix(&mut self) -> PResult<Option<BTreeSet<VariableName>>> {
        if !self.eat_kw("exists") {
            return Ok(None);
        }
        let vars = self.list(&Tok::Dot, |p| Ok(VariableName::new(p.ident("variable")?.0)))?;
        self.expect(Tok::Dot)?;
        Ok(Some(vars.into_iter().collect()))
    }

    fn conjunction(&mut self) -> PResult<(Vec<NamedAtom>, Vec<ConstantAtom>)> {
        let mut atoms = Vec::new();
        let mut consts = Vec::new();
        if self.eat_kw("true") {
            return Ok((atoms, consts));
        }
        loop {
            if self.is_kw("C") && self.peek_at(1) == &Tok::LParen && self.peek_at(2) == &Tok::Ident("val".into()) {
                self.bump();
                self.bump();
                self.bump();
                self.expect(Tok::Colon)?;
                let (v, _) = self.ident("variable")?;
                self.expect(Tok::RParen)?;
                consts.push(ConstantAtom { variable: VariableName::new(v) });
            } else {
                atoms.push(self.atom()?);
            }
            if !(self.eat(&Tok::Amp) || self.eat_kw("and")) {
                return Ok((atoms, consts));
            }
        }
    }

    fn atom(&mut self) -> PResult<NamedAtom> {
        let (rel, _) = self.ident("relation name or `true`")?;
        self.expect(Tok::LParen)?;
        let bindings = self.list(&Tok::RParen, |p| {
            let (a, _) = p.ident("attribute name")?;
            p.expect(Tok::Colon)?;
            Ok((AttributeName::new(a), p.term()?))
        })?;
        self.expect(Tok::RParen)?;
        Ok(NamedAtom::new(RelationName::new(rel), bindings))
    }

    fn term(&mut self) -> PResult<Term> {
        match self.peek() {
            Tok::Ident(s) if s != "null" => Ok(Term::Var(VariableName::new(self.ident("variable")?.0))),
            _ => Ok(Term::Const(self.literal()?)),
        }
    }

    /// Numbers, strings, fresh constants and `null`.
    fn literal(&mut self) -> PResult<Value> {
        let v = match self.peek().clone() {
            Tok::Number(n) => Value::constant(n),
            Tok::Str(s) => Value::constant(s),
            Tok::Fresh(f) => Value::constant(f),
            Tok::Ident(s) if s == "null" => {
                self.bump();
                if self.eat(&Tok::LParen) {
                    let Tok::Str(text) = self.peek().clone() else { return self.fail("string") };
                    self.bump();
                    self.expect(Tok::RParen)?;
                    return Ok(Value::Null(text));
                }
                return Ok(Value::null());
            }
            _ => return self.fail("a constant"),
        };
        self.bump();
        Ok(v)
    }

    fn row_value(&mut self) -> PResult<Value> {
        match self.peek().clone() {
            Tok::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                self.bump();
                Ok(Value::constant(s))
            }
            _ => self.literal(),
        }
    }

    fn cell(&mut self) -> PResult<Cell> {
        if let Tok::LNull(n) = self.peek().clone() {
            self.bump();
            return Ok(Cell::Null(LabeledNull::new(n)));
        }
        Ok(Cell::Val(self.row_value()?))
    }

    fn econd(&mut self) -> PResult<ElementCondition> {
        let mut parts = vec![self.econd_and()?];
        while self.eat_kw("or") {
            parts.push(self.econd_and()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { ElementCondition::Or(parts) })
    }

    fn econd_and(&mut self) -> PResult<ElementCondition> {
        let mut parts = vec![self.econd_atom()?];
        while self.eat_kw("and") {
            parts.push(self.econd_atom()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { ElementCondition::And(parts) })
    }

    fn econd_atom(&mut self) -> PResult<ElementCondition> {
        if self.eat(&Tok::LParen) {
            let c = self.econd()?;
            self.expect(Tok::RParen)?;
            return Ok(c);
        }
        if self.eat_kw("true") {
            return Ok(ElementCondition::True);
        }
        if self.eat_kw("false") {
            return Ok(ElementCondition::Or(Vec::new()));
        }
        let Tok::LNull(n) = self.peek().clone() else { return self.fail("`?null = ...`, `true`, `false` or `(`") };
        self.bump();
        let eq = if self.eat(&Tok::Eq) {
            true
        } else if self.eat(&Tok::Ne) {
            false
        } else {
            return self.fail("`=` or `!=`");
        };
        let right = self.cell()?;
        let left = LabeledNull::new(n);
        Ok(if eq { ElementCondition::Eq(left, right) } else { ElementCondition::Ne(left, right) })
    }

    fn bcond(&mut self) -> PResult<BoolCondition> {
        let mut parts = vec![self.bcond_and()?];
        while self.eat_kw("or") {
            parts.push(self.bcond_and()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { BoolCondition::Or(parts) })
    }

    fn bcond_and(&mut self) -> PResult<BoolCondition> {
        let mut parts = vec![self.bcond_not()?];
        while self.eat_kw("and") {
            parts.push(self.bcond_not()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { BoolCondition::And(parts) })
    }

    fn bcond_not(&mut self) -> PResult<BoolCondition> {
        if self.eat_kw("not") {
            return Ok(BoolCondition::Not(Box::new(self.bcond_not()?)));
        }
        if self.eat(&Tok::LParen) {
            let c = self.bcond()?;
            self.expect(Tok::RParen)?;
            return Ok(c);
        }
        if self.eat_kw("true") {
            return Ok(BoolCondition::True);
        }
        if self.eat_kw("false") {
            return Ok(BoolCondition::Or(Vec::new()));
        }
        let (a, _) = self.ident("attribute, `not`, `true`, `false` or `(`")?;
        let a = AttributeName::new(a);
        let eq = if self.eat(&Tok::Eq) {
            true
        } else if self.eat(&Tok::Ne) {
            false
        } else {
            return self.fail("`=` or `!=`");
        };
        match self.peek() {
            Tok::Ident(s) if s != "null" => {
                let b = AttributeName::new(self.ident("attribute")?.0);
                let c = BoolCondition::AttrEq(a, b);
                Ok(if eq { c } else { BoolCondition::Not(Box::new(c)) })
            }
            _ => {
                let v = self.literal()?;
                Ok(if eq { BoolCondition::EqConst(a, v) } else { BoolCondition::NeConst(a, v) })
            }
        }
    }

    fn cq(&mut self) -> PResult<ConjunctiveQuery> {
        let pos = self.pos();
        let free = if self.peek() == &Tok::LParen {
            self.bump();
            let vars = self.list(&Tok::RParen, |p| Ok(VariableName::new(p.ident("variable")?.0)))?;
            self.expect(Tok::RParen)?;
            self.expect(Tok::LArrow)?;
            Some(vars)
        } else {
            None
        };
        let declared = self.exists_prefix()?;
        let (atoms, consts) = self.conjunction()?;
        let q = match free {
            Some(free) => {
                let q = ConjunctiveQuery::with_free(atoms, consts, free);
                if declared.is_some_and(|d| d != q.existential) {
                    return Err(invalid(pos, "declared existential variables differ from the non-free variables"));
                }
                q
            }
            None => ConjunctiveQuery::new(atoms, consts, declared.unwrap_or_default()),
        };
        q.validate().map_err(|e| invalid(pos, e))?;
        Ok(q)
    }

    fn query(&mut self) -> PResult<Query> {
        if self.is_kw("total") && matches!(self.peek_at(1), Tok::Ident(_)) {
            self.bump();
            return Ok(Query::Total(RelationName::new(self.ident("relation name")?.0)));
        }
        if self.is_kw("filtered") && matches!(self.peek_at(1), Tok::Ident(_)) {
            self.bump();
            let relation = RelationName::new(self.ident("relation name")?.0);
            self.expect_kw("where")?;
            return Ok(Query::FilteredTotal { relation, condition: self.bcond()? });
        }
        if self.is_kw("cq") && !(self.peek_at(1) == &Tok::LParen && self.peek_at(3) == &Tok::Colon) {
            self.bump();
        }
        Ok(Query::Cq(self.cq()?))
    }

    fn query_item(&mut self) -> PResult<()> {
        self.expect_kw("query")?;
        let (name, pos) = self.ident("query name")?;
        self.declare(&name, pos)?;
        self.expect(Tok::Colon)?;
        let q = self.query()?;
        self.ws.queries.insert(name, q);
        Ok(())
    }

    fn sequence(&mut self) -> PResult<()> {
        self.expect_kw("seq")?;
        let (name, pos) = self.ident("sequence name")?;
        self.declare(&name, pos)?;
        self.expect(Tok::Eq)?;
        let mut procs = Vec::new();
        if matches!(self.peek(), Tok::Ident(_)) {
            loop {
                let (p, ppos) = self.ident("procedure name")?;
                if !self.ws.procedures.contains_key(&p) {
                    return Err(unresolved(ppos, "procedure", &p));
                }
                procs.push(p);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.ws.sequences.insert(name, procs);
        Ok(())
    }

    /// An entry naming a declaration: an identifier directly followed by a
    /// separator.
    fn at_reference(&self, close: &Tok) -> bool {
        matches!(self.peek(), Tok::Ident(_)) && (self.peek_at(1) == &Tok::Semi || self.peek_at(1) == close)
    }

    fn constraint_entry(&mut self, close: &Tok) -> PResult<Constraint> {
        if self.at_reference(close) {
            let (n, pos) = self.ident("constraint name")?;
            return self.ws.constraints.get(&n).cloned().ok_or_else(|| unresolved(pos, "constraint", &n));
        }
        if matches!(self.peek(), Tok::Ident(_)) && self.peek_at(1) == &Tok::LBracket {
            return Ok(Constraint::Structure(self.structure()?));
        }
        let pos = self.pos();
        let c = self.dependency()?;
        c.validate().map_err(|e| invalid(pos, e))?;
        Ok(c)
    }

    fn query_entry(&mut self, close: &Tok) -> PResult<Query> {
        if self.at_reference(close) {
            let (n, pos) = self.ident("query name")?;
            return self.ws.queries.get(&n).cloned().ok_or_else(|| unresolved(pos, "query", &n));
        }
        self.query()
    }

    /// `item; item; ...` up to (not including) `close`.
    fn entries<T>(&mut self, close: &Tok, mut item: impl FnMut(&mut Self) -> PResult<T>) -> PResult<Vec<T>> {
        let mut out = Vec::new();
        while self.peek() != close {
            out.push(item(self)?);
            if !self.eat(&Tok::Semi) {
                break;
            }
        }
        Ok(out)
    }

    fn procedure(&mut self) -> PResult<()> {
        self.expect_kw("proc")?;
        let (name, pos) = self.ident("procedure name")?;
        self.declare(&name, pos)?;
        let p = if self.eat(&Tok::Eq) {
            self.expect_kw("template")?;
            let tpos = self.pos();
            let t = self.template()?;
            instantiate_template(name.clone(), t).map_err(|e| invalid(tpos, e.to_string()))?
        } else {
            let mut p = Procedure::new(name.clone());
            self.expect(Tok::LBrace)?;
            while !self.eat(&Tok::RBrace) {
                let (section, spos) = self.ident("`scope`, `pre`, `post` or `safe`")?;
                self.expect(Tok::LBrace)?;
                let close = Tok::RBrace;
                match section.as_str() {
                    "scope" => p.scope.extend(self.entries(&close, |p| p.structure())?),
                    "pre" => p.pre.extend(self.entries(&close, |p| p.constraint_entry(&Tok::RBrace))?),
                    "post" => p.post.extend(self.entries(&close, |p| p.constraint_entry(&Tok::RBrace))?),
                    "safe" => p.safe.extend(self.entries(&close, |p| p.query_entry(&Tok::RBrace))?),
                    other => {
                        return Err(DslError::Syntax {
                            line: spos.line,
                            col: spos.col,
                            expected: "`scope`, `pre`, `post` or `safe`".into(),
                            found: format!("`{other}`"),
                        })
                    }
                }
                self.expect(Tok::RBrace)?;
            }
            p.validate().map_err(|e| invalid(pos, e))?;
            p
        };
        self.ws.procedures.insert(name, p);
        Ok(())
    }

    fn attr_list(&mut self, close: &Tok) -> PResult<Vec<AttributeName>> {
        self.list(close, |p| Ok(AttributeName::new(p.ident("attribute name")?.0)))
    }

    fn template(&mut self) -> PResult<Template> {
        let (kind, kpos) = self.ident("template kind")?;
        self.expect(Tok::LParen)?;
        let close = Tok::RParen;
        let semi = |p: &mut Self| p.expect(Tok::Semi);
        let rel = |p: &mut Self| Ok::<_, DslError>(RelationName::new(p.ident("relation name")?.0));
        let t = match kind.as_str() {
            "data_exchange" => {
                Template::DataExchange { dependencies: self.entries(&close, |p| p.constraint_entry(&Tok::RParen))? }
            }
            "alter_table" => {
                let relation = rel(self)?;
                semi(self)?;
                Template::AlterTable { relation, attributes: self.attr_list(&close)? }
            }
            "attribute_copy" => {
                let target = rel(self)?;
                semi(self)?;
                let source = rel(self)?;
                semi(self)?;
                let keys = self.attr_list(&Tok::Semi)?;
                semi(self)?;
                let attribute = AttributeName::new(self.ident("attribute name")?.0);
                let structural = if self.eat(&Tok::Semi) {
                    self.expect_kw("structural")?;
                    true
                } else {
                    false
                };
                Template::AttributeCopy { target, source, keys, attribute, structural }
            }
            "null_scrub" => {
                let relation = rel(self)?;
                semi(self)?;
                let attribute = AttributeName::new(self.ident("attribute name")?.0);
                semi(self)?;
                Template::NullScrub { relation, attribute, context: self.attr_list(&close)? }
            }
            "sql_insert" => {
                let relation = rel(self)?;
                semi(self)?;
                let attributes = self.attr_list(&Tok::Semi)?;
                semi(self)?;
                let source = if self.eat_kw("values") {
                    self.expect(Tok::LParen)?;
                    let vals = self.list(&Tok::RParen, |p| p.literal())?;
                    self.expect(Tok::RParen)?;
                    InsertSource::Values(vals)
                } else {
                    let Query::Cq(q) = self.query()? else { return Err(invalid(kpos, "insert source must be a conjunctive query")) };
                    InsertSource::Query(q)
                };
                Template::SqlInsert { relation, attributes, source }
            }
            "sql_delete" => {
                let relation = rel(self)?;
                semi(self)?;
                Template::SqlDelete { relation, condition: self.bcond()? }
            }
            other => {
                return Err(DslError::Syntax {
                    line: kpos.line,
                    col: kpos.col,
                    expected: "a template kind".into(),
                    found: format!("`{other}`"),
                })
            }
        };
        self.expect(Tok::RParen)?;
        Ok(t)
    }
}
