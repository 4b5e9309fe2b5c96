//! The line-oriented system file format.
//!
//! ```text
//! # comment
//! dim 1
//! update u = (1)
//! update w = (-1)
//! ngvas tiny {
//!   start S
//!   rule S -> S S
//!   rule S -> u
//!   rule S -> w
//!   cin (0); cout (0)
//! }
//! ```
//!
//! Statements inside a block end at `;` or a line break. Counter indices in
//! sets are 1-based; `w` is ω. Semantic problems are left to `validate`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::{contract, Error, Result};
use crate::grammar::{Grammar, Production, Sym};
use crate::ngvas::{from_gvas, Boundedness, Kind, Ngvas, Payload};
use crate::numerics::LinearSet;
use crate::vas::{GMarking, Nw, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeclKind {
    Ngvas,
    Gvas,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemDecl {
    pub kind: DeclKind,
    pub name: String,
    pub start: String,
    /// 0-based counters.
    pub unconstrained: BTreeSet<usize>,
    pub restriction: Option<(Vector, Vec<Vector>)>,
    pub cin: GMarking,
    pub cout: GMarking,
    pub bd: Option<(BTreeSet<usize>, BTreeSet<usize>)>,
    pub ins: Vec<(String, GMarking)>,
    pub outs: Vec<(String, GMarking)>,
    pub rules: Vec<(String, Vec<String>)>,
    /// Local terminal name and the declared system it stands for.
    pub children: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Model {
    pub dim: usize,
    pub updates: Vec<(String, Vector)>,
    pub systems: Vec<SystemDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    Punct(&'static str),
    Sep,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn perr<T>(line: usize, col: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse { line, col, msg: msg.into() })
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    for (ln, raw) in src.lines().enumerate() {
        let line = ln + 1;
        let text = raw.split('#').next().unwrap_or("");
        let chars: Vec<char> = text.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_alphabetic() || c == '_' {
                let s = i;
                // `-` joins words (`tiny-nl`) unless it starts an arrow.
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric()
                        || "_@'".contains(chars[i])
                        || (chars[i] == '-' && chars.get(i + 1).is_some_and(|c| c.is_ascii_alphanumeric())))
                {
                    i += 1;
                }
                out.push(Token { tok: Tok::Ident(chars[s..i].iter().collect()), line, col });
            } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
                let s = i;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let txt: String = chars[s..i].iter().collect();
                let v = txt.parse().or_else(|_| perr(line, col, format!("integer {txt} out of range")))?;
                out.push(Token { tok: Tok::Int(v), line, col });
            } else if c == '-' && chars.get(i + 1) == Some(&'>') {
                out.push(Token { tok: Tok::Punct("->"), line, col });
                i += 2;
            } else if let Some(p) = ["(", ")", "{", "}", ",", "="].into_iter().find(|p| p.starts_with(c)) {
                out.push(Token { tok: Tok::Punct(p), line, col });
                i += 1;
            } else if c == ';' {
                out.push(Token { tok: Tok::Sep, line, col });
                i += 1;
            } else {
                return perr(line, col, format!("unexpected character {c:?}"));
            }
        }
        out.push(Token { tok: Tok::Sep, line, col: chars.len() + 1 });
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    dim: Option<usize>,
}

#[derive(Default)]
struct Partial {
    start: Option<String>,
    unconstrained: BTreeSet<usize>,
    restriction: Option<(Vector, Vec<Vector>)>,
    cin: Option<GMarking>,
    cout: Option<GMarking>,
    bd: Option<(BTreeSet<usize>, BTreeSet<usize>)>,
    ins: Vec<(String, GMarking)>,
    outs: Vec<(String, GMarking)>,
    rules: Vec<(String, Vec<String>)>,
    children: Vec<(String, String)>,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn here(&self) -> (usize, usize) {
        match self.peek().or(self.toks.last()) {
            Some(t) => (t.line, t.col),
            None => (1, 1),
        }
    }

    fn fail<T>(&self, msg: impl Into<String>) -> Result<T> {
        let (l, c) = self.here();
        perr(l, c, msg)
    }

    fn skip_seps(&mut self) {
        while matches!(self.peek(), Some(Token { tok: Tok::Sep, .. })) {
            self.pos += 1;
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.peek() {
            Some(Token { tok: Tok::Ident(s), .. }) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.fail(format!("expected {what}")),
        }
    }

    fn punct(&mut self, p: &str) -> Result<()> {
        match self.peek() {
            Some(Token { tok: Tok::Punct(q), .. }) if *q == p => {
                self.pos += 1;
                Ok(())
            }
            _ => self.fail(format!("expected '{p}'")),
        }
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Punct(q), .. }) if *q == p)
    }

    fn int(&mut self) -> Result<i64> {
        match self.peek() {
            Some(Token { tok: Tok::Int(v), .. }) => {
                let v = *v;
                self.pos += 1;
                Ok(v)
            }
            _ => self.fail("expected an integer"),
        }
    }

    fn end_stmt(&mut self) -> Result<()> {
        match self.peek() {
            Some(Token { tok: Tok::Sep, .. }) => {
                self.skip_seps();
                Ok(())
            }
            Some(Token { tok: Tok::Punct("}"), .. }) | None => Ok(()),
            _ => self.fail("expected end of statement"),
        }
    }

    fn need_dim(&self) -> Result<usize> {
        match self.dim {
            Some(d) => Ok(d),
            None => self.fail("'dim' must come first"),
        }
    }

    fn entries<T>(&mut self, open: &str, close: &str, mut item: impl FnMut(&mut Self) -> Result<T>) -> Result<Vec<T>> {
        self.punct(open)?;
        let mut out = Vec::new();
        if self.is_punct(close) {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            out.push(item(self)?);
            if self.is_punct(",") {
                self.pos += 1;
                continue;
            }
            self.punct(close)?;
            return Ok(out);
        }
    }

    fn vector(&mut self) -> Result<Vector> {
        let d = self.need_dim()?;
        let (l, c) = self.here();
        let v = self.entries("(", ")", Self::int)?;
        if v.len() != d {
            return perr(l, c, format!("vector has {} entries, expected {d}", v.len()));
        }
        Ok(v)
    }

    fn marking(&mut self) -> Result<GMarking> {
        let d = self.need_dim()?;
        let (l, c) = self.here();
        let v = self.entries("(", ")", |p| match p.peek() {
            Some(Token { tok: Tok::Ident(s), .. }) if s == "w" => {
                p.pos += 1;
                Ok(Nw::Omega)
            }
            _ => {
                let (l, c) = p.here();
                let v = p.int()?;
                if v < 0 {
                    return perr(l, c, "marking entries are natural numbers or w");
                }
                Ok(Nw::Fin(v))
            }
        })?;
        if v.len() != d {
            return perr(l, c, format!("marking has {} entries, expected {d}", v.len()));
        }
        Ok(GMarking(v))
    }

    fn counter_set(&mut self) -> Result<BTreeSet<usize>> {
        let d = self.need_dim()?;
        let items = self.entries("{", "}", |p| {
            let (l, c) = p.here();
            let i = p.int()?;
            if i < 1 || i as usize > d {
                return perr(l, c, format!("counter {i} is outside 1..{d}"));
            }
            Ok(i as usize - 1)
        })?;
        Ok(items.into_iter().collect())
    }

    fn model(&mut self) -> Result<Model> {
        let mut updates: Vec<(String, Vector)> = Vec::new();
        let mut systems: Vec<SystemDecl> = Vec::new();
        loop {
            self.skip_seps();
            let Some(t) = self.peek().cloned() else { break };
            let Tok::Ident(kw) = &t.tok else {
                return self.fail("expected 'dim', 'update', 'ngvas' or 'gvas'");
            };
            self.pos += 1;
            match kw.as_str() {
                "dim" => {
                    if self.dim.is_some() {
                        return perr(t.line, t.col, "'dim' given twice");
                    }
                    let v = self.int()?;
                    if v < 1 {
                        return perr(t.line, t.col, "dimension must be positive");
                    }
                    self.dim = Some(v as usize);
                }
                "update" => {
                    let (l, c) = self.here();
                    let name = self.ident("an update name")?;
                    if updates.iter().any(|(n, _)| *n == name) {
                        return perr(l, c, format!("update {name} declared twice"));
                    }
                    self.punct("=")?;
                    let v = self.vector()?;
                    updates.push((name, v));
                }
                "ngvas" | "gvas" => {
                    let kind = if kw == "ngvas" { DeclKind::Ngvas } else { DeclKind::Gvas };
                    let (l, c) = self.here();
                    let name = self.ident("a system name")?;
                    if systems.iter().any(|s| s.name == name) {
                        return perr(l, c, format!("system {name} declared twice"));
                    }
                    systems.push(self.block(kind, name)?);
                }
                other => return perr(t.line, t.col, format!("unknown keyword {other:?}")),
            }
            self.end_stmt()?;
        }
        let Some(dim) = self.dim else {
            return perr(1, 1, "missing 'dim'");
        };
        Ok(Model { dim, updates, systems })
    }

    fn block(&mut self, kind: DeclKind, name: String) -> Result<SystemDecl> {
        self.need_dim()?;
        self.punct("{")?;
        let mut p = Partial::default();
        loop {
            self.skip_seps();
            if self.is_punct("}") {
                break;
            }
            let (l, c) = self.here();
            let kw = self.ident("a statement")?;
            match (kw.as_str(), kind) {
                ("start", _) => p.start = Some(self.ident("a nonterminal")?),
                ("rule", _) => {
                    let lhs = self.ident("a nonterminal")?;
                    self.punct("->")?;
                    let mut rhs = Vec::new();
                    while let Some(Token { tok: Tok::Ident(s), .. }) = self.peek() {
                        rhs.push(s.clone());
                        self.pos += 1;
                    }
                    if rhs.is_empty() {
                        return self.fail("expected right-hand side symbols or eps");
                    }
                    if rhs == ["eps"] {
                        rhs.clear();
                    } else if rhs.iter().any(|s| s == "eps") {
                        return perr(l, c, "eps must stand alone");
                    }
                    p.rules.push((lhs, rhs));
                }
                ("cin", _) => p.cin = Some(self.marking()?),
                ("cout", _) => p.cout = Some(self.marking()?),
                ("unconstrained", DeclKind::Ngvas) => p.unconstrained = self.counter_set()?,
                ("restriction", DeclKind::Ngvas) => {
                    let kw = self.ident("'base'")?;
                    if kw != "base" {
                        return perr(l, c, "expected 'base'");
                    }
                    let base = self.vector()?;
                    let kw = self.ident("'periods'")?;
                    if kw != "periods" {
                        return perr(l, c, "expected 'periods'");
                    }
                    let periods = self.entries("{", "}", Self::vector)?;
                    p.restriction = Some((base, periods));
                }
                ("bd", DeclKind::Ngvas) => {
                    if self.ident("'left'")? != "left" {
                        return perr(l, c, "expected 'left'");
                    }
                    let left = self.counter_set()?;
                    if self.ident("'right'")? != "right" {
                        return perr(l, c, "expected 'right'");
                    }
                    let right = self.counter_set()?;
                    p.bd = Some((left, right));
                }
                ("in" | "out", DeclKind::Ngvas) => {
                    let a = self.ident("a nonterminal")?;
                    self.punct("=")?;
                    let m = self.marking()?;
                    if kw == "in" { &mut p.ins } else { &mut p.outs }.push((a, m));
                }
                ("child", DeclKind::Ngvas) => {
                    let local = self.ident("a child name")?;
                    self.punct("=")?;
                    let target = self.ident("a system name")?;
                    p.children.push((local, target));
                }
                (other, _) => return perr(l, c, format!("unknown statement {other:?} in {name}")),
            }
            self.end_stmt()?;
        }
        let (l, c) = self.here();
        self.punct("}")?;
        fn field<T>(v: Option<T>, f: &str, name: &str, line: usize, col: usize) -> Result<T> {
            v.ok_or_else(|| Error::Parse { line, col, msg: format!("{name} is missing '{f}'") })
        }
        Ok(SystemDecl {
            kind,
            name: name.clone(),
            start: field(p.start, "start", &name, l, c)?,
            unconstrained: p.unconstrained,
            restriction: p.restriction,
            cin: field(p.cin, "cin", &name, l, c)?,
            cout: field(p.cout, "cout", &name, l, c)?,
            bd: p.bd,
            ins: p.ins,
            outs: p.outs,
            rules: p.rules,
            children: p.children,
        })
    }
}

pub fn parse_str(src: &str) -> Result<Model> {
    let toks = lex(src)?;
    Parser { toks, pos: 0, dim: None }.model()
}

pub fn parse_file(path: &std::path::Path) -> Result<Model> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| Error::Contract(format!("cannot read {}: {e}", path.display())))?;
    parse_str(&src)
}

fn vec_str(v: &[i64]) -> String {
    let s: Vec<String> = v.iter().map(i64::to_string).collect();
    format!("({})", s.join(","))
}

fn set_str(s: &BTreeSet<usize>) -> String {
    let v: Vec<String> = s.iter().map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", v.join(","))
}

/// Canonical text; `parse_str(&render(m))` gives back `m`.
pub fn render(m: &Model) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "dim {}", m.dim);
    for (n, v) in &m.updates {
        let _ = writeln!(s, "update {n} = {}", vec_str(v));
    }
    for d in &m.systems {
        let kw = match d.kind {
            DeclKind::Ngvas => "ngvas",
            DeclKind::Gvas => "gvas",
        };
        let _ = writeln!(s, "\n{kw} {} {{", d.name);
        let _ = writeln!(s, "  start {}", d.start);
        if !d.unconstrained.is_empty() {
            let _ = writeln!(s, "  unconstrained {}", set_str(&d.unconstrained));
        }
        if let Some((b, ps)) = &d.restriction {
            let ps: Vec<String> = ps.iter().map(|p| vec_str(p)).collect();
            let _ = writeln!(s, "  restriction base {} periods {{{}}}", vec_str(b), ps.join(","));
        }
        let _ = writeln!(s, "  cin {}", d.cin);
        let _ = writeln!(s, "  cout {}", d.cout);
        if let Some((l, r)) = &d.bd {
            let _ = writeln!(s, "  bd left {} right {}", set_str(l), set_str(r));
        }
        for (a, m) in &d.ins {
            let _ = writeln!(s, "  in {a} = {m}");
        }
        for (a, m) in &d.outs {
            let _ = writeln!(s, "  out {a} = {m}");
        }
        for (l, r) in &d.rules {
            let rhs = if r.is_empty() { "eps".to_string() } else { r.join(" ") };
            let _ = writeln!(s, "  rule {l} -> {rhs}");
        }
        for (l, t) in &d.children {
            let _ = writeln!(s, "  child {l} = {t}");
        }
        s.push_str("}\n");
    }
    s
}

impl Model {
    pub fn system(&self, name: Option<&str>) -> Result<&SystemDecl> {
        match name {
            Some(n) => self
                .systems
                .iter()
                .find(|s| s.name == n)
                .ok_or_else(|| Error::Contract(format!("no system named {n}"))),
            None => self.systems.last().ok_or_else(|| Error::Contract("the file declares no system".into())),
        }
    }

    /// Builds the named system, or the last one declared.
    pub fn build(&self, name: Option<&str>) -> Result<Ngvas> {
        let decl = self.system(name)?;
        self.build_decl(decl, &mut Vec::new())
    }

    fn build_decl(&self, decl: &SystemDecl, stack: &mut Vec<String>) -> Result<Ngvas> {
        if stack.contains(&decl.name) {
            return contract(format!("system {} contains itself", decl.name));
        }
        stack.push(decl.name.clone());
        let d = self.dim;
        let updates: BTreeMap<&str, &Vector> = self.updates.iter().map(|(n, v)| (n.as_str(), v)).collect();
        let children: BTreeMap<&str, &str> =
            decl.children.iter().map(|(l, t)| (l.as_str(), t.as_str())).collect();
        let is_terminal = |s: &str| updates.contains_key(s) || children.contains_key(s);
        let mut nts: Vec<String> = vec![decl.start.clone()];
        let mut terms: Vec<String> = Vec::new();
        for (l, r) in &decl.rules {
            if is_terminal(l) {
                return contract(format!("{l} is a terminal and cannot have rules"));
            }
            for s in std::iter::once(l).chain(r) {
                let list = if is_terminal(s) { &mut terms } else { &mut nts };
                if !list.contains(s) {
                    list.push(s.clone());
                }
            }
        }
        let idx = |s: &str| -> Sym {
            match terms.iter().position(|t| t == s) {
                Some(i) => Sym::T(i),
                None => Sym::N(nts.iter().position(|n| n == s).expect("collected")),
            }
        };
        let prods: Vec<Production> = decl
            .rules
            .iter()
            .map(|(l, r)| Production {
                lhs: nts.iter().position(|n| n == l).expect("collected"),
                rhs: r.iter().map(|s| idx(s)).collect(),
            })
            .collect();
        let g = Grammar::new(nts.clone(), terms.clone(), 0, prods)?;
        let out = match decl.kind {
            DeclKind::Gvas => {
                let ups: Vec<Vector> = terms.iter().map(|t| updates[t.as_str()].clone()).collect();
                let (Some(a), Some(b)) = (decl.cin.to_concrete(), decl.cout.to_concrete()) else {
                    return contract(format!("gvas {} needs concrete cin and cout", decl.name));
                };
                let mut n = from_gvas(&g, &ups, &a, &b)?;
                n.name = decl.name.clone();
                n
            }
            DeclKind::Ngvas => {
                let mut payloads = Vec::new();
                for t in &terms {
                    payloads.push(match children.get(t.as_str()) {
                        Some(target) => {
                            let cd = self.system(Some(target))?;
                            Payload::Child(Box::new(self.build_decl(cd, stack)?))
                        }
                        None => Payload::Update(updates[t.as_str()].clone()),
                    });
                }
                let mut bd = Boundedness::trivial(d, nts.len());
                if let Some((l, r)) = &decl.bd {
                    bd.left = l.clone();
                    bd.right = r.clone();
                }
                for (a, m) in &decl.ins {
                    let Sym::N(i) = idx(a) else { return contract(format!("in: {a} is a terminal")) };
                    bd.inm[i] = m.clone();
                }
                for (a, m) in &decl.outs {
                    let Sym::N(i) = idx(a) else { return contract(format!("out: {a} is a terminal")) };
                    bd.outm[i] = m.clone();
                }
                let restriction = match &decl.restriction {
                    Some((b, ps)) => LinearSet::new(b.clone(), ps.clone())?,
                    None => LinearSet::full(d),
                };
                Ngvas {
                    name: decl.name.clone(),
                    dim: d,
                    grammar: g,
                    payloads,
                    un: decl.unconstrained.clone(),
                    restriction,
                    cin: decl.cin.clone(),
                    cout: decl.cout.clone(),
                    bd,
                    kind: Kind::Strong,
                    tags: vec![None; nts.len()],
                }
            }
        };
        stack.pop();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "# two updates\ndim 1\nupdate u = (1)\nupdate w = (-1)\nngvas tiny {\n  start S; rule S -> S S\n  rule S -> u\n  rule S -> w\n  cin (0); cout (0)\n}\n";

    #[test]
    fn parses_and_builds() {
        let m = parse_str(TINY).unwrap();
        let n = m.build(None).unwrap();
        assert_eq!(n.grammar.num_prods(), 3);
        assert_eq!(n.grammar.terminals, vec!["u", "w"]);
        assert!(crate::ngvas::validate(&n).is_empty());
    }

    #[test]
    fn render_round_trips() {
        let m = parse_str(TINY).unwrap();
        let r = render(&m);
        assert_eq!(parse_str(&r).unwrap(), m);
        assert_eq!(render(&parse_str(&r).unwrap()), r);
    }

    #[test]
    fn missing_cout_is_named() {
        let src = "dim 1\nupdate u = (1)\nngvas x {\n  start S\n  rule S -> u\n  cin (0)\n}\n";
        match parse_str(src) {
            Err(Error::Parse { line, msg, .. }) => {
                assert!(msg.contains("cout"), "{msg}");
                assert_eq!(line, 7);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn positions_point_at_the_offender() {
        let src = "dim 2\nupdate u = (1)\n";
        match parse_str(src) {
            Err(Error::Parse { line, col, .. }) => assert_eq!((line, col), (2, 12)),
            other => panic!("{other:?}"),
        }
        match parse_str("dim 1\nngvas x {\n  start S\n  rule S -> u ?\n}") {
            Err(Error::Parse { line, col, .. }) => assert_eq!((line, col), (4, 15)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn children_and_context_tables() {
        let src = "dim 1\nupdate a = (-1)\nupdate b = (1)\n\
                   ngvas C {\n start A\n unconstrained {1}\n restriction base (0) periods {(1),(-1)}\n cin (w); cout (w)\n rule A -> A A\n rule A -> a\n rule A -> b\n}\n\
                   ngvas P {\n start S\n unconstrained {1}\n cin (w); cout (w)\n bd left {} right {1}\n in S = (w)\n rule S -> S S\n rule S -> c\n child c = C\n}\n";
        let m = parse_str(src).unwrap();
        let p = m.build(None).unwrap();
        assert_eq!(p.depth(), 1);
        assert!(p.bd.left.is_empty());
        assert_eq!(p.child(0).unwrap().name, "C");
        assert_eq!(parse_str(&render(&m)).unwrap(), m);
    }
}
