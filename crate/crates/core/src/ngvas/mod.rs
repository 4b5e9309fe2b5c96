//! Nested GVAS: grammars whose terminals are updates or lower NGVAS, with
//! context information, restriction and boundedness information.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::error::{contract, Result};
use crate::grammar::{Grammar, Production, Shape, Sym};
use crate::numerics::LinearSet;
use crate::vas::{effect, GMarking, Marking, Run, Vector};

mod runs;
pub use runs::{
    is_deconstruction, restriction_included, runs_bounded, runs_bounded_with, runs_from, symbol_runs,
    DeconVerdict,
};

/// Default cap for instantiating ω coordinates of source markings.
pub const DEFAULT_OMEGA_CAP: i64 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Update(Vector),
    Child(Box<Ngvas>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Strong,
    Weak,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Boundedness {
    pub left: BTreeSet<usize>,
    pub right: BTreeSet<usize>,
    pub inm: Vec<GMarking>,
    pub outm: Vec<GMarking>,
}

impl Boundedness {
    /// No concrete tracking: every counter in both sets, all markings ω.
    pub fn trivial(d: usize, nonterminals: usize) -> Self {
        Boundedness {
            left: (0..d).collect(),
            right: (0..d).collect(),
            inm: vec![GMarking::omega(d); nonterminals],
            outm: vec![GMarking::omega(d); nonterminals],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ngvas {
    pub name: String,
    pub dim: usize,
    pub grammar: Grammar,
    /// One payload per grammar terminal.
    pub payloads: Vec<Payload>,
    pub un: BTreeSet<usize>,
    pub restriction: LinearSet,
    pub cin: GMarking,
    pub cout: GMarking,
    pub bd: Boundedness,
    pub kind: Kind,
    /// Optional history tag per nonterminal.
    pub tags: Vec<Option<u64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Violation {
    pub code: &'static str,
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", self.code, self.subject, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunTriple {
    pub source: Marking,
    pub word: Run,
    pub target: Marking,
}

pub(crate) fn fmt_set(s: &BTreeSet<usize>) -> String {
    let v: Vec<String> = s.iter().map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", v.join(","))
}

impl Ngvas {
    /// A depth-0 NGVAS with `Z^d` restriction, empty `Un` and trivial boundedness information.
    pub fn depth0(
        name: &str,
        grammar: Grammar,
        updates: Vec<Vector>,
        cin: GMarking,
        cout: GMarking,
    ) -> Self {
        let d = cin.dim();
        let n = grammar.nonterminals.len();
        Ngvas {
            name: name.to_string(),
            dim: d,
            payloads: updates.into_iter().map(Payload::Update).collect(),
            grammar,
            un: BTreeSet::new(),
            restriction: LinearSet::full(d),
            cin,
            cout,
            bd: Boundedness::trivial(d, n),
            kind: Kind::Strong,
            tags: vec![None; n],
        }
    }

    pub fn depth(&self) -> usize {
        self.children().map(|(_, c)| c.depth() + 1).max().unwrap_or(0)
    }

    pub fn children(&self) -> impl Iterator<Item = (usize, &Ngvas)> {
        self.payloads.iter().enumerate().filter_map(|(i, p)| match p {
            Payload::Child(c) => Some((i, c.as_ref())),
            Payload::Update(_) => None,
        })
    }

    pub fn child(&self, t: usize) -> Option<&Ngvas> {
        match &self.payloads[t] {
            Payload::Child(c) => Some(c),
            Payload::Update(_) => None,
        }
    }

    pub fn update(&self, t: usize) -> Option<&Vector> {
        match &self.payloads[t] {
            Payload::Update(u) => Some(u),
            Payload::Child(_) => None,
        }
    }

    pub fn shape(&self) -> Shape {
        self.grammar.shape()
    }

    pub fn is_linear(&self) -> bool {
        self.shape() == Shape::Linear
    }

    fn all_nts(&self) -> BTreeSet<usize> {
        (0..self.grammar.nonterminals.len()).collect()
    }

    pub fn exit_productions(&self) -> Vec<usize> {
        self.grammar.exit_productions(&self.all_nts())
    }

    /// Every update occurring at any depth, deduplicated in discovery order.
    pub fn all_updates(&self) -> Vec<Vector> {
        let mut out: Vec<Vector> = Vec::new();
        self.collect_updates(&mut out);
        out
    }

    fn collect_updates(&self, out: &mut Vec<Vector>) {
        for p in &self.payloads {
            match p {
                Payload::Update(u) => {
                    if !out.contains(u) {
                        out.push(u.clone());
                    }
                }
                Payload::Child(c) => c.collect_updates(out),
            }
        }
    }

    /// Updates appearing directly as terminals of this grammar.
    pub fn own_updates(&self) -> Vec<Vector> {
        let mut out: Vec<Vector> = Vec::new();
        for p in &self.payloads {
            if let Payload::Update(u) = p {
                if !out.contains(u) {
                    out.push(u.clone());
                }
            }
        }
        out
    }

    pub fn in_of(&self, s: Sym) -> Option<GMarking> {
        match s {
            Sym::N(a) => Some(self.bd.inm[a].clone()),
            Sym::T(t) => self.child(t).map(|c| c.cin.clone()),
        }
    }

    pub fn out_of(&self, s: Sym) -> Option<GMarking> {
        match s {
            Sym::N(a) => Some(self.bd.outm[a].clone()),
            Sym::T(t) => self.child(t).map(|c| c.cout.clone()),
        }
    }

    /// `N_(m,A,m')`: start `A`, context `(m, m')`, restriction `Z^d`, `Un = Ω(m) ∩ Ω(m')`.
    pub fn variant(&self, m: &GMarking, a: usize, m2: &GMarking) -> Ngvas {
        let mut v = self.clone();
        v.grammar.start = a;
        v.cin = m.clone();
        v.cout = m2.clone();
        v.restriction = LinearSet::full(self.dim);
        v.un = m.omega_set().intersection(&m2.omega_set()).copied().collect();
        v.name = format!("{}[{}]", self.name, self.grammar.nonterminals[a]);
        v
    }

    /// Whether `(m, r, m')` fires and meets context and restriction, ignoring children.
    pub fn top_accepts(&self, m: &[i64], r: &[Vector], m2: &[i64]) -> Result<bool> {
        Ok(GMarking::concrete(m).specializes(&self.cin)
            && GMarking::concrete(m2).specializes(&self.cout)
            && self.restriction.contains(&effect(r, self.dim))?)
    }
}

/// Checks every structural and consistency requirement; an empty list means valid.
pub fn validate(n: &Ngvas) -> Vec<Violation> {
    let mut out = Vec::new();
    validate_into(n, &n.name, &mut out);
    out
}

fn validate_into(n: &Ngvas, path: &str, out: &mut Vec<Violation>) {
    let d = n.dim;
    let g = &n.grammar;
    if let Err(e) = g.check() {
        viol(out, "grammar", path.to_string(), e.to_string());
        return;
    }
    if n.payloads.len() != g.terminals.len() {
        viol(out, "payload", path.to_string(), "one payload per terminal required".into());
        return;
    }
    let nts = g.nonterminals.len();
    if n.bd.inm.len() != nts || n.bd.outm.len() != nts || n.tags.len() != nts {
        viol(out, "bd-shape", path.to_string(), "per-nonterminal tables have the wrong length".into());
        return;
    }
    let mut dims_ok = n.cin.dim() == d && n.cout.dim() == d && n.restriction.dim() == d;
    dims_ok &= n.bd.inm.iter().chain(&n.bd.outm).all(|m| m.dim() == d);
    dims_ok &= n.un.iter().chain(&n.bd.left).chain(&n.bd.right).all(|&i| i < d);
    for (t, p) in n.payloads.iter().enumerate() {
        let ok = match p {
            Payload::Update(u) => u.len() == d,
            Payload::Child(c) => c.dim == d,
        };
        if !ok {
            viol(out, "dim", format!("{path}.{}", g.terminals[t]), format!("dimension differs from {d}"));
        }
    }
    if !dims_ok {
        viol(out, "dim", path.to_string(), format!("marking or restriction dimension differs from {d}"));
        return;
    }
    let ctx_omega: BTreeSet<usize> =
        n.cin.omega_set().intersection(&n.cout.omega_set()).copied().collect();
    if !n.un.is_subset(&ctx_omega) {
        viol(
                out,
            "un-context",
            path.to_string(),
            format!("Un {} not within Ω(c_in) ∩ Ω(c_out) {}", fmt_set(&n.un), fmt_set(&ctx_omega)),
        );
    }
    let own: BTreeSet<&String> = g.nonterminals.iter().collect();
    for (t, c) in n.children() {
        let cpath = format!("{path}.{}", g.terminals[t]);
        if !n.un.is_subset(&c.un) {
            viol(
                out,
                "un-child",
                cpath.clone(),
                format!("Un {} not within child Un {}", fmt_set(&n.un), fmt_set(&c.un)),
            );
        }
        if let Some(x) = c.grammar.nonterminals.iter().find(|x| own.contains(x)) {
            viol(out, "names", cpath.clone(), format!("nonterminal {x} also used by the parent"));
        }
        validate_into(c, &cpath, out);
    }
    let shape = g.shape();
    if n.kind == Kind::Strong {
        if !g.is_strongly_connected() {
            viol(out, "strong", path.to_string(), "grammar is not strongly connected".into());
        }
        let useful = g.useful_nonterminals();
        for a in 0..nts {
            if !useful.contains(&a) {
                viol(out, "strong", format!("{path}.{}", g.nonterminals[a]), "nonterminal is not useful".into());
            }
        }
        if shape == Shape::Linear {
            let k = n.exit_productions().len();
            if k != 1 {
                viol(out, "strong", path.to_string(), format!("linear grammar has {k} exit productions"));
            }
        }
    }
    if n.depth() == 0 {
        return;
    }
    let bd = &n.bd;
    let both: BTreeSet<usize> = bd.left.intersection(&bd.right).copied().collect();
    if !n.un.is_subset(&both) {
        viol(out, "bd-un", path.to_string(), "Un not within left ∩ right".into());
    }
    if shape == Shape::NonLinear && bd.left != bd.right {
        viol(out, "bd-branching", path.to_string(), "branching grammar needs left = right".into());
    }
    for a in 0..nts {
        if bd.inm[a].omega_set() != bd.left {
            viol(out, "bd-omega", format!("{path}.{}", g.nonterminals[a]), "Ω(in) differs from left set".into());
        }
        if bd.outm[a].omega_set() != bd.right {
            viol(out, "bd-omega", format!("{path}.{}", g.nonterminals[a]), "Ω(out) differs from right set".into());
        }
    }
    let exits: BTreeSet<usize> = n.exit_productions().into_iter().collect();
    let eq = |a: &Option<GMarking>, b: &Option<GMarking>| match (a, b) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    };
    let sq = |a: &Option<GMarking>, b: &Option<GMarking>| match (a, b) {
        (Some(x), Some(y)) => x.specializes(y),
        _ => true,
    };
    for (p, pr) in g.productions.iter().enumerate() {
        let relaxed = shape == Shape::Linear && exits.contains(&p);
        let lhs_in = Some(bd.inm[pr.lhs].clone());
        let lhs_out = Some(bd.outm[pr.lhs].clone());
        let ins: Vec<Option<GMarking>> = pr.rhs.iter().map(|&s| n.in_of(s)).collect();
        let outs: Vec<Option<GMarking>> = pr.rhs.iter().map(|&s| n.out_of(s)).collect();
        let subject = format!("{path}: {}", g.prod_string(p));
        let ok = if pr.rhs.is_empty() {
            eq(&lhs_in, &lhs_out) || (relaxed && sq(&lhs_out, &lhs_in))
        } else {
            let last = pr.rhs.len() - 1;
            let chain = (0..last).all(|i| eq(&outs[i], &ins[i + 1]));
            if relaxed {
                chain && sq(&ins[0], &lhs_in) && sq(&outs[last], &lhs_out)
            } else {
                chain && eq(&ins[0], &lhs_in) && eq(&outs[last], &lhs_out)
            }
        };
        if !ok {
            viol(out, "bd-prod", subject.clone(), "in/out markings are inconsistent".into());
        }
        if !relaxed {
            for s in &pr.rhs {
                if let Sym::T(t) = s {
                    if let Some(c) = n.child(*t) {
                        if c.cin.omega_set() != c.un || c.cout.omega_set() != c.un {
                            viol(
                out,
                                "bd-shield",
                                subject.clone(),
                                format!("child {} must have Ω(c_in) = Ω(c_out) = Un", g.terminals[*t]),
                            );
                        }
                    }
                }
            }
        }
    }
    if !n.cin.specializes(&bd.inm[g.start]) || !n.cout.specializes(&bd.outm[g.start]) {
        viol(out, "bd-start", path.to_string(), "context not a specialization of in/out of the start".into());
    }
}

fn viol(out: &mut Vec<Violation>, code: &'static str, subject: String, message: String) {
    out.push(Violation { code, subject, message });
}

/// Converts a GVAS into an NGVAS: one strong NGVAS per strongly connected
/// component, lower components as children, linear components split per
/// exit production. The top level is weak if its own component needs a split.
pub fn from_gvas(g: &Grammar, updates: &[Vector], m1: &[i64], m2: &[i64]) -> Result<Ngvas> {
    g.check()?;
    if updates.len() != g.terminals.len() {
        return contract("one update per terminal required");
    }
    let d = m1.len();
    if m2.len() != d || updates.iter().any(|u| u.len() != d) {
        return contract("dimension mismatch");
    }
    let payloads: Vec<Payload> = updates.iter().cloned().map(Payload::Update).collect();
    let mut top = nest(g, &payloads, d, false)?;
    top.cin = GMarking::concrete(m1);
    top.cout = GMarking::concrete(m2);
    top.un = BTreeSet::new();
    Ok(top)
}

/// One strong NGVAS per component of `g` below the start, terminals mapped
/// to `payloads`. Lower components get `Z^d`, or with `tight` the cone of
/// their possible effects, as restriction.
pub(crate) fn nest(g: &Grammar, payloads: &[Payload], d: usize, tight: bool) -> Result<Ngvas> {
    let useful = g.useful_nonterminals();
    if !useful.contains(&g.start) {
        return contract("the start symbol derives no terminal word");
    }
    let mut conv = Converter { g, payloads, d, tight, useful, memo: HashMap::new() };
    let mut top = conv.build_component(g.start)?;
    if strongdec(&top).len() > 1 {
        top.kind = Kind::Weak;
    }
    Ok(top)
}

/// `0 + E*` where `E` collects own updates and child bases and periods.
pub(crate) fn effect_cone(n: &Ngvas) -> LinearSet {
    let mut ps: Vec<Vector> = Vec::new();
    let mut push = |v: &Vector| {
        if v.iter().any(|&x| x != 0) && !ps.contains(v) {
            ps.push(v.clone());
        }
    };
    for p in &n.payloads {
        match p {
            Payload::Update(u) => push(u),
            Payload::Child(c) => {
                push(&c.restriction.base);
                c.restriction.periods.iter().for_each(&mut push);
            }
        }
    }
    LinearSet { base: vec![0; n.dim], periods: ps }
}

struct Converter<'a> {
    g: &'a Grammar,
    payloads: &'a [Payload],
    d: usize,
    tight: bool,
    useful: BTreeSet<usize>,
    memo: HashMap<usize, Vec<Ngvas>>,
}

impl Converter<'_> {
    /// Strong NGVAS for the component of `a` with start `a`: one per exit
    /// production when the component is linear with several exits.
    fn build(&mut self, a: usize) -> Result<Vec<Ngvas>> {
        if let Some(v) = self.memo.get(&a) {
            return Ok(v.clone());
        }
        let one = self.build_component(a)?;
        let out = strongdec(&one);
        self.memo.insert(a, out.clone());
        Ok(out)
    }

    fn prod_useful(&self, p: usize) -> bool {
        self.g.productions[p]
            .rhs
            .iter()
            .all(|s| s.nonterminal().is_none_or(|b| self.useful.contains(&b)))
    }

    fn build_component(&mut self, a: usize) -> Result<Ngvas> {
        let g = self.g;
        let scc: BTreeSet<usize> = g.scc_of(a)?.intersection(&self.useful).copied().collect();
        let nts: Vec<usize> = scc.iter().copied().collect();
        let local: BTreeMap<usize, usize> = nts.iter().enumerate().map(|(i, &x)| (x, i)).collect();
        let mut terminals: Vec<String> = Vec::new();
        let mut payloads: Vec<Payload> = Vec::new();
        let mut term_ix: HashMap<String, usize> = HashMap::new();
        let mut prods: Vec<Production> = Vec::new();
        let names: BTreeSet<String> = nts.iter().map(|&x| g.nonterminals[x].clone()).collect();
        let fresh = |base: String, terminals: &Vec<String>| {
            let mut name = base;
            while names.contains(&name) || terminals.contains(&name) {
                name.push('\'');
            }
            name
        };
        for (p, pr) in g.productions.iter().enumerate() {
            if !scc.contains(&pr.lhs) || !self.prod_useful(p) {
                continue;
            }
            // Alternatives per right-hand symbol.
            let mut alts: Vec<Vec<Sym>> = Vec::new();
            for s in &pr.rhs {
                match *s {
                    Sym::N(b) if scc.contains(&b) => alts.push(vec![Sym::N(local[&b])]),
                    Sym::N(b) => {
                        let kids = self.build(b)?;
                        let mut v = Vec::new();
                        for (i, mut kid) in kids.into_iter().enumerate() {
                            let key = format!("N_{}#{i}", g.nonterminals[b]);
                            let t = match term_ix.get(&key) {
                                Some(&t) => t,
                                None => {
                                    let base = if i == 0 {
                                        format!("N_{}", g.nonterminals[b])
                                    } else {
                                        format!("N_{}.{}", g.nonterminals[b], i + 1)
                                    };
                                    let name = fresh(base, &terminals);
                                    kid.name = name.clone();
                                    terminals.push(name);
                                    payloads.push(Payload::Child(Box::new(kid)));
                                    term_ix.insert(key, terminals.len() - 1);
                                    terminals.len() - 1
                                }
                            };
                            v.push(Sym::T(t));
                        }
                        alts.push(v);
                    }
                    Sym::T(u) => {
                        let key = format!("u#{u}");
                        let t = match term_ix.get(&key) {
                            Some(&t) => t,
                            None => {
                                terminals.push(fresh(g.terminals[u].clone(), &terminals));
                                payloads.push(self.payloads[u].clone());
                                term_ix.insert(key, terminals.len() - 1);
                                terminals.len() - 1
                            }
                        };
                        alts.push(vec![Sym::T(t)]);
                    }
                }
            }
            let mut combos: Vec<Vec<Sym>> = vec![Vec::new()];
            for alt in alts {
                combos = combos
                    .into_iter()
                    .flat_map(|c| {
                        alt.iter().map(move |s| {
                            let mut c2 = c.clone();
                            c2.push(*s);
                            c2
                        })
                    })
                    .collect();
            }
            for rhs in combos {
                prods.push(Production { lhs: local[&pr.lhs], rhs });
            }
        }
        let grammar = Grammar::new(
            nts.iter().map(|&x| g.nonterminals[x].clone()).collect(),
            terminals,
            local[&a],
            prods,
        )?;
        let d = self.d;
        let n = grammar.nonterminals.len();
        let mut out = Ngvas {
            name: format!("N_{}", g.nonterminals[a]),
            dim: d,
            grammar,
            payloads,
            un: (0..d).collect(),
            restriction: LinearSet::full(d),
            cin: GMarking::omega(d),
            cout: GMarking::omega(d),
            bd: Boundedness::trivial(d, n),
            kind: Kind::Strong,
            tags: vec![None; n],
        };
        if self.tight {
            out.restriction = effect_cone(&out);
        }
        Ok(out)
    }
}

/// Splits a linear top level with several exit productions into one NGVAS per exit.
pub fn strongdec(n: &Ngvas) -> Vec<Ngvas> {
    let exits = n.exit_productions();
    if !n.is_linear() || exits.len() <= 1 {
        let mut m = n.clone();
        m.kind = Kind::Strong;
        return vec![m];
    }
    exits
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let mut m = n.clone();
            m.grammar.productions = n
                .grammar
                .productions
                .iter()
                .enumerate()
                .filter(|(p, _)| !exits.contains(p) || *p == e)
                .map(|(_, pr)| pr.clone())
                .collect();
            m.kind = Kind::Strong;
            m.name = format!("{}.{}", n.name, i + 1);
            m
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gr(nts: &[&str], ts: &[&str], start: usize, prods: &[(usize, &[Sym])]) -> Grammar {
        Grammar::new(
            nts.iter().map(|s| s.to_string()).collect(),
            ts.iter().map(|s| s.to_string()).collect(),
            start,
            prods.iter().map(|(l, r)| Production { lhs: *l, rhs: r.to_vec() }).collect(),
        )
        .unwrap()
    }

    fn tiny_nl() -> Ngvas {
        let g = gr(
            &["S"],
            &["u", "w"],
            0,
            &[(0, &[Sym::N(0), Sym::N(0)]), (0, &[Sym::T(0)]), (0, &[Sym::T(1)])],
        );
        Ngvas::depth0("tiny-nl", g, vec![vec![1], vec![-1]], GMarking::zero(1), GMarking::zero(1))
    }

    /// `S -> u S | a | b` with two exits.
    fn two_exit() -> Ngvas {
        let g = gr(
            &["S"],
            &["u", "a", "b"],
            0,
            &[(0, &[Sym::T(0), Sym::N(0)]), (0, &[Sym::T(1)]), (0, &[Sym::T(2)])],
        );
        Ngvas::depth0(
            "two",
            g,
            vec![vec![1], vec![-1], vec![-2]],
            GMarking::zero(1),
            GMarking::zero(1),
        )
    }

    #[test]
    fn tiny_nl_runs() {
        let n = tiny_nl();
        assert!(validate(&n).is_empty());
        let r = runs_bounded(&n, 2).unwrap();
        assert!(r.contains(&RunTriple { source: vec![0], word: vec![vec![1], vec![-1]], target: vec![0] }));
        assert!(r.iter().all(|t| t.word.len() == 2));
        assert!(runs_bounded(&n, 0).unwrap().is_empty());
        let r3 = runs_bounded(&n, 3).unwrap();
        assert!(r.is_subset(&r3));
    }

    #[test]
    fn restriction_filters() {
        let mut n = tiny_nl();
        n.cout = GMarking::omega(1);
        n.restriction = LinearSet::new(vec![1], vec![]).unwrap();
        let r = runs_bounded(&n, 2).unwrap();
        assert!(r.iter().all(|t| t.target[0] - t.source[0] == 1));
        assert!(!r.is_empty());
    }

    #[test]
    fn from_gvas_examples() {
        let g = gr(&["S"], &["u"], 0, &[(0, &[Sym::T(0)])]);
        let n = from_gvas(&g, &[vec![1, 1]], &[0, 0], &[1, 1]).unwrap();
        assert!(validate(&n).is_empty());
        let r = runs_bounded(&n, 1).unwrap();
        assert!(r.contains(&RunTriple { source: vec![0, 0], word: vec![vec![1, 1]], target: vec![1, 1] }));

        let g = gr(
            &["S", "A"],
            &["a", "b"],
            0,
            &[(0, &[Sym::T(0), Sym::N(1)]), (1, &[Sym::T(0), Sym::N(1)]), (1, &[Sym::T(1)])],
        );
        let n = from_gvas(&g, &[vec![1], vec![0]], &[0], &[2]).unwrap();
        assert_eq!(n.children().count(), 1);
        assert!(validate(&n).is_empty(), "{:?}", validate(&n));

        let t = two_exit();
        let n = from_gvas(&t.grammar, &[vec![1], vec![-1], vec![-2]], &[0], &[0]).unwrap();
        assert_eq!(n.kind, Kind::Weak);
        let g = gr(
            &["S", "T"],
            &["a", "b", "c"],
            0,
            &[
                (0, &[Sym::T(0), Sym::N(1)]),
                (1, &[Sym::T(0), Sym::N(1)]),
                (1, &[Sym::T(1)]),
                (1, &[Sym::T(2)]),
            ],
        );
        let n = from_gvas(&g, &[vec![1], vec![-1], vec![-2]], &[0], &[0]).unwrap();
        assert_eq!(n.children().count(), 2);
        assert_eq!(n.grammar.num_prods(), 2);
        assert!(validate(&n).is_empty(), "{:?}", validate(&n));
        let r = runs_bounded(&n, 3).unwrap();
        assert!(r.contains(&RunTriple { source: vec![0], word: vec![vec![1], vec![-1]], target: vec![0] }));
        assert!(r.contains(&RunTriple {
            source: vec![0],
            word: vec![vec![1], vec![1], vec![-2]],
            target: vec![0]
        }));
    }

    #[test]
    fn deconstruction_checks() {
        let n = two_exit();
        let v = is_deconstruction(&n, std::slice::from_ref(&n), 4).unwrap();
        assert!(v.holds);
        let parts = strongdec(&n);
        assert_eq!(parts.len(), 2);
        assert!(parts.iter().all(|p| validate(p).is_empty()));
        assert!(is_deconstruction(&n, &parts, 4).unwrap().holds);
        assert!(!is_deconstruction(&n, &parts[..1], 4).unwrap().holds);
        let mut bad = n.clone();
        bad.cin = GMarking::concrete(&[1]);
        let v = is_deconstruction(&n, &[bad], 4).unwrap();
        assert_eq!(v.failed, Some("c_in"));
    }

    #[test]
    fn violations() {
        let n = tiny_nl();
        let mut p = n.clone();
        let mut c = n.clone();
        c.grammar.nonterminals = vec!["C".into()];
        c.cin = GMarking::omega(1);
        c.cout = GMarking::omega(1);
        p.payloads[0] = Payload::Child(Box::new(c));
        p.cin = GMarking::omega(1);
        p.cout = GMarking::omega(1);
        p.un = BTreeSet::from([0]);
        let v = validate(&p);
        assert!(v.iter().any(|x| x.code == "un-child" && x.subject.ends_with(".u")), "{v:?}");
    }
}
