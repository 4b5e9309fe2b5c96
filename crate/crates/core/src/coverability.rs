//! Karp-Miller trees and coverability grammars over an NGVAS, parameterized
//! by a post/pre approximator pair, and the decomposition read off a
//! coverability grammar that stays bounded.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::chareq::{intpost, intpre, natpost_bounded, natpre_bounded};
use crate::error::{contract, Error, Result};
use crate::grammar::{Grammar, Production, Sym};
use crate::ngvas::{strongdec, Boundedness, Kind, Ngvas, Payload};
use crate::numerics::LinearSet;
use crate::vas::{effect, GMarking, Vector};

/// Upper limit on tree nodes or grammar symbols before giving up.
pub const MAX_SYMBOLS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Approx {
    /// Integer relaxation via the characteristic system.
    Int,
    /// Bounded natural search of the given run length, with acceleration.
    Nat(usize),
}

impl fmt::Display for Approx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Approx::Int => write!(f, "int"),
            Approx::Nat(b) => write!(f, "nat:{b}"),
        }
    }
}

impl FromStr for Approx {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "int" {
            return Ok(Approx::Int);
        }
        match s.strip_prefix("nat:").map(str::parse::<usize>) {
            Some(Ok(b)) => Ok(Approx::Nat(b)),
            _ => contract(format!("unknown approximator {s:?}, expected int or nat:B")),
        }
    }
}

type CacheKey = (bool, GMarking, Sym);

/// Memoized approximator over one NGVAS.
pub struct Approximator<'a> {
    n: &'a Ngvas,
    kind: Approx,
    cache: RefCell<HashMap<CacheKey, Vec<GMarking>>>,
}

impl<'a> Approximator<'a> {
    pub fn new(n: &'a Ngvas, kind: Approx) -> Self {
        Approximator { n, kind, cache: RefCell::new(HashMap::new()) }
    }

    pub fn kind(&self) -> Approx {
        self.kind
    }

    fn call(&self, post: bool, m: &GMarking, s: Sym) -> Result<Vec<GMarking>> {
        let key = (post, m.clone(), s);
        if let Some(v) = self.cache.borrow().get(&key) {
            return Ok(v.clone());
        }
        let mut v = match (self.kind, post) {
            (Approx::Int, true) => intpost(self.n, m, s)?,
            (Approx::Int, false) => intpre(self.n, m, s)?,
            (Approx::Nat(b), true) => natpost_bounded(self.n, m, s, b)?.ideals,
            (Approx::Nat(b), false) => natpre_bounded(self.n, m, s, b)?.ideals,
        };
        v.sort();
        v.dedup();
        self.cache.borrow_mut().insert(key, v.clone());
        Ok(v)
    }

    pub fn post(&self, m: &GMarking, s: Sym) -> Result<Vec<GMarking>> {
        self.call(true, m, s)
    }

    pub fn pre(&self, m: &GMarking, s: Sym) -> Result<Vec<GMarking>> {
        self.call(false, m, s)
    }

    /// Left-to-right extension to a word; the empty word maps `m` to itself.
    pub fn post_word(&self, m: &GMarking, w: &[Sym]) -> Result<Vec<GMarking>> {
        let mut cur = BTreeSet::from([m.clone()]);
        for &s in w {
            let mut next = BTreeSet::new();
            for x in &cur {
                next.extend(self.post(x, s)?);
            }
            cur = next;
        }
        Ok(cur.into_iter().collect())
    }

    /// Right-to-left extension to a word.
    pub fn pre_word(&self, m: &GMarking, w: &[Sym]) -> Result<Vec<GMarking>> {
        let mut cur = BTreeSet::from([m.clone()]);
        for &s in w.iter().rev() {
            let mut next = BTreeSet::new();
            for x in &cur {
                next.extend(self.pre(x, s)?);
            }
            cur = next;
        }
        Ok(cur.into_iter().collect())
    }
}

fn pair(a: &GMarking, b: &GMarking) -> GMarking {
    GMarking(a.0.iter().chain(&b.0).copied().collect())
}

fn unpair(p: &GMarking, d: usize) -> (GMarking, GMarking) {
    (GMarking(p.0[..d].to_vec()), GMarking(p.0[d..].to_vec()))
}

/// Coordinates to promote when `(m', p')` lies strictly below `(m, p)`.
fn strict_below(small: &(GMarking, GMarking), big: &(GMarking, GMarking)) -> Option<BTreeSet<usize>> {
    let (s, b) = (pair(&small.0, &small.1), pair(&big.0, &big.1));
    if s != b && s.below(&b) {
        Some(b.strict_increase(&s).into_iter().filter(|&i| !b.0[i].is_omega()).collect())
    } else {
        None
    }
}

fn max_constant<'a>(ms: impl IntoIterator<Item = &'a GMarking>) -> i64 {
    ms.into_iter().flat_map(|m| m.0.iter().filter_map(|v| v.fin())).max().unwrap_or(0)
}

fn in_or_omega(n: &Ngvas, a: usize) -> GMarking {
    n.in_of(Sym::N(a)).unwrap_or_else(|| GMarking::omega(n.dim))
}

fn out_or_omega(n: &Ngvas, a: usize) -> GMarking {
    n.out_of(Sym::N(a)).unwrap_or_else(|| GMarking::omega(n.dim))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KmStep {
    Root,
    /// Tracked the nonterminal at `pos` of production `prod`.
    Expand { prod: usize, pos: usize },
    Accelerate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KmNode {
    pub input: GMarking,
    pub sym: usize,
    pub output: GMarking,
    pub history: u64,
    pub parent: Option<usize>,
    pub step: KmStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KmVerdict {
    /// Index of a node `(in(A), A, out(A))`.
    PumpingFound(usize),
    /// Largest finite constant in any label.
    Bounded(i64),
}

#[derive(Debug, Clone)]
pub struct KmTree {
    pub nodes: Vec<KmNode>,
    /// Edges `(from, to, step)` to an existing ancestor with the same label.
    pub backlinks: Vec<(usize, usize, KmStep)>,
    pub verdict: KmVerdict,
    pub approx: Approx,
}

impl KmTree {
    /// Node indices from the root down to `i`.
    pub fn path_to(&self, i: usize) -> Vec<usize> {
        let mut p = vec![i];
        let mut cur = i;
        while let Some(q) = self.nodes[cur].parent {
            p.push(q);
            cur = q;
        }
        p.reverse();
        p
    }

    pub fn to_dot(&self, n: &Ngvas) -> String {
        let g = &n.grammar;
        let mut s = String::from("digraph km {\n");
        for (i, x) in self.nodes.iter().enumerate() {
            s.push_str(&format!(
                "  n{i} [label=\"({}, {}, {})\"];\n",
                x.input, g.nonterminals[x.sym], x.output
            ));
        }
        let edge = |st: &KmStep| match st {
            KmStep::Root => String::new(),
            KmStep::Expand { prod, pos } => format!("{}@{}", prod, pos),
            KmStep::Accelerate => "acc".to_string(),
        };
        for (i, x) in self.nodes.iter().enumerate() {
            if let Some(p) = x.parent {
                s.push_str(&format!("  n{p} -> n{i} [label=\"{}\"];\n", edge(&x.step)));
            }
        }
        for (a, b, st) in &self.backlinks {
            s.push_str(&format!("  n{a} -> n{b} [style=dashed, label=\"{}\"];\n", edge(st)));
        }
        s.push_str("}\n");
        s
    }
}

/// Karp-Miller tree from `(c_in, S, c_out)`. Construction is breadth-first
/// and stops at the first node `(in(A), A, out(A))`.
pub fn karp_miller(n: &Ngvas, approx: Approx) -> Result<KmTree> {
    karp_miller_from(n, &n.cin, n.grammar.start, &n.cout, approx)
}

pub fn karp_miller_from(n: &Ngvas, m: &GMarking, a: usize, m2: &GMarking, approx: Approx) -> Result<KmTree> {
    let ap = Approximator::new(n, approx);
    let g = &n.grammar;
    let mut t = KmTree {
        nodes: vec![KmNode {
            input: m.clone(),
            sym: a,
            output: m2.clone(),
            history: 0,
            parent: None,
            step: KmStep::Root,
        }],
        backlinks: Vec::new(),
        verdict: KmVerdict::Bounded(0),
        approx,
    };
    let witness = |x: &KmNode| x.input == in_or_omega(n, x.sym) && x.output == out_or_omega(n, x.sym);
    if witness(&t.nodes[0]) {
        t.verdict = KmVerdict::PumpingFound(0);
        return Ok(t);
    }
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let node = t.nodes[i].clone();
        let path = t.path_to(i);
        let me = (node.input.clone(), node.output.clone());
        let mut acc = BTreeSet::new();
        for &j in &path[..path.len() - 1] {
            let y = &t.nodes[j];
            if y.sym == node.sym {
                if let Some(c) = strict_below(&(y.input.clone(), y.output.clone()), &me) {
                    acc.extend(c);
                }
            }
        }
        let mut children: Vec<(GMarking, usize, GMarking, KmStep)> = Vec::new();
        if !acc.is_empty() {
            let (mi, mo) = unpair(&pair(&node.input, &node.output).with_omega(&acc), n.dim);
            children.push((mi, node.sym, mo, KmStep::Accelerate));
        } else {
            for p in g.prods_of(node.sym) {
                let rhs = &g.productions[p].rhs;
                for (pos, s) in rhs.iter().enumerate() {
                    let Sym::N(b) = *s else { continue };
                    let posts = ap.post_word(&node.input, &rhs[..pos])?;
                    let pres = ap.pre_word(&node.output, &rhs[pos + 1..])?;
                    for x in &posts {
                        for y in &pres {
                            children.push((x.clone(), b, y.clone(), KmStep::Expand { prod: p, pos }));
                        }
                    }
                }
            }
        }
        let mut seen = HashSet::new();
        for (ci, b, co, step) in children {
            if !seen.insert((ci.clone(), b, co.clone())) {
                continue;
            }
            if let Some(&j) = path.iter().find(|&&j| {
                let y = &t.nodes[j];
                y.sym == b && y.input == ci && y.output == co
            }) {
                if step != KmStep::Accelerate {
                    t.backlinks.push((i, j, step));
                    continue;
                }
            }
            let k = t.nodes.len();
            if k >= MAX_SYMBOLS {
                return Err(Error::Budget(format!("Karp-Miller tree exceeds {MAX_SYMBOLS} nodes")));
            }
            t.nodes.push(KmNode { input: ci, sym: b, output: co, history: k as u64, parent: Some(i), step });
            if witness(&t.nodes[k]) {
                t.verdict = KmVerdict::PumpingFound(k);
                return Ok(t);
            }
            queue.push_back(k);
        }
    }
    let c = max_constant(t.nodes.iter().flat_map(|x| [&x.input, &x.output]));
    t.verdict = KmVerdict::Bounded(c);
    Ok(t)
}

/// A symbol `((in, p⁺), σ, (p⁻, out))` with its history tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CovSymbol {
    pub input: GMarking,
    pub postpromise: GMarking,
    pub sym: Sym,
    pub prepromise: GMarking,
    pub output: GMarking,
    pub history: u64,
}

type Five = (GMarking, GMarking, Sym, GMarking, GMarking);

impl CovSymbol {
    fn five(&self) -> Five {
        (
            self.input.clone(),
            self.postpromise.clone(),
            self.sym,
            self.prepromise.clone(),
            self.output.clone(),
        )
    }

    fn from_five(f: Five, history: u64) -> Self {
        CovSymbol { input: f.0, postpromise: f.1, sym: f.2, prepromise: f.3, output: f.4, history }
    }

    /// `in ⊓ p⁻`, if compatible.
    pub fn win(&self) -> Option<GMarking> {
        self.input.meet(&self.prepromise)
    }

    /// `out ⊓ p⁺`, if compatible.
    pub fn wout(&self) -> Option<GMarking> {
        self.output.meet(&self.postpromise)
    }

    /// The overview form `((in, p⁺), σ, (p⁻, out))` without the tag.
    pub fn render(&self, g: &Grammar) -> String {
        format!(
            "(({}, {}), {}, ({}, {}))",
            self.input,
            self.postpromise,
            g.sym_name(self.sym),
            self.prepromise,
            self.output
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RuleKind {
    Init,
    Sim,
    Pump,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CovRule {
    pub lhs: usize,
    pub rhs: Vec<usize>,
    pub kind: RuleKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgVerdict {
    Bounded,
    /// A nonterminal `(in(A), A, out(A))`.
    Unbounded(usize),
}

#[derive(Debug, Clone)]
pub struct CovGrammar {
    pub symbols: Vec<CovSymbol>,
    pub rules: Vec<CovRule>,
    pub start: usize,
    pub verdict: CgVerdict,
    pub approx: Approx,
    /// The NGVAS the grammar was built for.
    pub source: Ngvas,
}

impl CovGrammar {
    pub fn is_bounded(&self) -> bool {
        self.verdict == CgVerdict::Bounded
    }

    pub fn nonterminals(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.symbols.len()).filter(|&i| matches!(self.symbols[i].sym, Sym::N(_)))
    }

    pub fn rules_of(&self, x: usize) -> impl Iterator<Item = &CovRule> + '_ {
        self.rules.iter().filter(move |r| r.lhs == x)
    }

    pub fn to_dot(&self) -> String {
        let g = &self.source.grammar;
        let mut s = String::from("digraph cg {\n");
        for (i, x) in self.symbols.iter().enumerate() {
            let shape = if matches!(x.sym, Sym::T(_)) { ", shape=box" } else { "" };
            s.push_str(&format!("  s{i} [label=\"{}\"{shape}];\n", x.render(g)));
        }
        for r in &self.rules {
            let style = match r.kind {
                RuleKind::Sim => "solid",
                RuleKind::Init | RuleKind::Pump => "bold",
            };
            for (k, &y) in r.rhs.iter().enumerate() {
                s.push_str(&format!("  s{} -> s{y} [style={style}, label=\"{k}\"];\n", r.lhs));
            }
        }
        s.push_str("}\n");
        s
    }
}

struct CgBuilder<'a> {
    n: &'a Ngvas,
    ap: Approximator<'a>,
    symbols: Vec<CovSymbol>,
    rules: Vec<CovRule>,
    rule_set: HashSet<(usize, Vec<usize>)>,
    callers: Vec<BTreeSet<usize>>,
    terminals: HashMap<Five, usize>,
    queue: VecDeque<usize>,
    witness: Option<usize>,
}

impl CgBuilder<'_> {
    fn fresh(&mut self, f: Five) -> Result<usize> {
        let k = self.symbols.len();
        if k >= MAX_SYMBOLS {
            return Err(Error::Budget(format!("coverability grammar exceeds {MAX_SYMBOLS} symbols")));
        }
        let s = CovSymbol::from_five(f, k as u64);
        if let Sym::N(a) = s.sym {
            if self.witness.is_none()
                && s.input == in_or_omega(self.n, a)
                && s.output == out_or_omega(self.n, a)
            {
                self.witness = Some(k);
            }
            self.queue.push_back(k);
        }
        self.symbols.push(s);
        self.callers.push(BTreeSet::new());
        Ok(k)
    }

    /// Nonterminals that can call `x`, `x` included.
    fn can_call(&self, x: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([x]);
        let mut stack = vec![x];
        while let Some(y) = stack.pop() {
            for &c in &self.callers[y] {
                if seen.insert(c) {
                    stack.push(c);
                }
            }
        }
        seen
    }

    /// Reuses a symbol with the same five components that can call `x`;
    /// terminals are shared globally.
    fn resolve(&mut self, f: Five, callers: &BTreeSet<usize>) -> Result<usize> {
        if let Sym::T(_) = f.2 {
            if let Some(&k) = self.terminals.get(&f) {
                return Ok(k);
            }
            let k = self.fresh(f.clone())?;
            self.terminals.insert(f, k);
            return Ok(k);
        }
        for &c in callers {
            if c != 0 && self.symbols[c].five() == f {
                return Ok(c);
            }
        }
        self.fresh(f)
    }

    fn add_rule(&mut self, lhs: usize, rhs: Vec<usize>, kind: RuleKind) {
        if self.rule_set.insert((lhs, rhs.clone())) {
            for &y in &rhs {
                self.callers[y].insert(lhs);
            }
            self.rules.push(CovRule { lhs, rhs, kind });
        }
    }

    fn pump_targets(&mut self, x: usize, a: usize, mi: &GMarking, mo: &GMarking, kind: RuleKind) -> Result<()> {
        let posts = self.ap.post(mi, Sym::N(a))?;
        let pres = self.ap.pre(mo, Sym::N(a))?;
        for p in &posts {
            for q in &pres {
                let y = self.fresh((mi.clone(), p.clone(), Sym::N(a), q.clone(), mo.clone()))?;
                self.add_rule(x, vec![y], kind);
            }
        }
        Ok(())
    }

    fn explore(&mut self, x: usize) -> Result<()> {
        let sx = self.symbols[x].clone();
        let Sym::N(a) = sx.sym else { return Ok(()) };
        if x == 0 {
            return self.pump_targets(x, a, &sx.input, &sx.output, RuleKind::Init);
        }
        let callers = self.can_call(x);
        let me = (sx.input.clone(), sx.output.clone());
        let mut acc = BTreeSet::new();
        for &c in &callers {
            let y = &self.symbols[c];
            if c != x && y.sym == sx.sym {
                if let Some(s) = strict_below(&(y.input.clone(), y.output.clone()), &me) {
                    acc.extend(s);
                }
            }
        }
        if !acc.is_empty() {
            let (mi, mo) = unpair(&pair(&sx.input, &sx.output).with_omega(&acc), self.n.dim);
            return self.pump_targets(x, a, &mi, &mo, RuleKind::Pump);
        }
        let g = &self.n.grammar;
        let prods: Vec<Vec<Sym>> = g.prods_of(a).map(|p| g.productions[p].rhs.clone()).collect();
        for rhs in prods {
            let mut rules: Vec<Vec<Five>> = Vec::new();
            match rhs.len() {
                0 => {
                    if sx.input.specializes(&sx.postpromise)
                        && sx.output.specializes(&sx.prepromise)
                        && sx.input.compatible(&sx.output)
                    {
                        rules.push(Vec::new());
                    }
                }
                1 => {
                    let s = rhs[0];
                    for p1 in self.ap.post(&sx.input, s)? {
                        if !p1.specializes(&sx.postpromise) {
                            continue;
                        }
                        for q1 in self.ap.pre(&sx.output, s)? {
                            if q1.specializes(&sx.prepromise) {
                                rules.push(vec![(sx.input.clone(), p1.clone(), s, q1, sx.output.clone())]);
                            }
                        }
                    }
                }
                _ => {
                    let (s0, s1) = (rhs[0], rhs[1]);
                    for p1 in self.ap.post(&sx.input, s0)? {
                        for p2 in self.ap.post(&p1, s1)? {
                            if !p2.specializes(&sx.postpromise) {
                                continue;
                            }
                            for q1 in self.ap.pre(&sx.output, s1)? {
                                if !p1.compatible(&q1) {
                                    continue;
                                }
                                for q2 in self.ap.pre(&q1, s0)? {
                                    if !q2.specializes(&sx.prepromise) {
                                        continue;
                                    }
                                    rules.push(vec![
                                        (sx.input.clone(), p1.clone(), s0, q2, q1.clone()),
                                        (p1.clone(), p2.clone(), s1, q1.clone(), sx.output.clone()),
                                    ]);
                                }
                            }
                        }
                    }
                }
            }
            for r in rules {
                let mut ids = Vec::with_capacity(r.len());
                for f in r {
                    ids.push(self.resolve(f, &callers)?);
                }
                self.add_rule(x, ids, RuleKind::Sim);
            }
        }
        Ok(())
    }
}

/// Coverability grammar of `n` read as the variant `N_(c_in, S, c_out)`.
/// Construction stops at the first nonterminal `(in(A), A, out(A))`.
pub fn cov_grammar(n: &Ngvas, approx: Approx) -> Result<CovGrammar> {
    let a = n.grammar.start;
    let mut b = CgBuilder {
        n,
        ap: Approximator::new(n, approx),
        symbols: Vec::new(),
        rules: Vec::new(),
        rule_set: HashSet::new(),
        callers: Vec::new(),
        terminals: HashMap::new(),
        queue: VecDeque::new(),
        witness: None,
    };
    b.fresh((n.cin.clone(), out_or_omega(n, a), Sym::N(a), in_or_omega(n, a), n.cout.clone()))?;
    while let Some(x) = b.queue.pop_front() {
        if b.witness.is_some() {
            break;
        }
        b.explore(x)?;
    }
    let verdict = match b.witness {
        Some(w) => CgVerdict::Unbounded(w),
        None => CgVerdict::Bounded,
    };
    Ok(CovGrammar { symbols: b.symbols, rules: b.rules, start: 0, verdict, approx, source: n.clone() })
}

/// A cycle `A →* w.A.w'` with concrete update words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZPump {
    pub nonterminal: usize,
    /// Productions applied along the spine, outermost first.
    pub prods: Vec<usize>,
    pub left: Vec<Vector>,
    pub right: Vec<Vector>,
}

impl ZPump {
    pub fn left_effect(&self, d: usize) -> Vector {
        effect(&self.left, d)
    }

    pub fn right_effect(&self, d: usize) -> Vector {
        effect(&self.right, d)
    }

    /// Left effect `≥ 1` on `up`, right effect `≤ −1` on `down`.
    pub fn has_signs(&self, d: usize, up: &BTreeSet<usize>, down: &BTreeSet<usize>) -> bool {
        let (l, r) = (self.left_effect(d), self.right_effect(d));
        up.iter().all(|&i| l[i] >= 1) && down.iter().all(|&i| r[i] <= -1)
    }
}

const PUMP_WORD_LEN: usize = 4;
const PUMP_OPTIONS: usize = 12;
const PUMP_STEPS: usize = 10;
const PUMP_RANGE: i64 = 6;

/// Short terminal words per symbol, one per distinct effect.
fn short_words(n: &Ngvas) -> Result<(Vec<Vec<Vec<Vector>>>, Vec<Vec<Vec<Vector>>>)> {
    let d = n.dim;
    let mut twords: Vec<Vec<Vec<Vector>>> = Vec::new();
    for p in &n.payloads {
        twords.push(match p {
            Payload::Update(u) => vec![vec![u.clone()]],
            Payload::Child(c) => {
                let (_, cn) = short_words(c)?;
                let mut ok = Vec::new();
                for w in &cn[c.grammar.start] {
                    if c.restriction.contains(&effect(w, d))? {
                        ok.push(w.clone());
                    }
                }
                ok
            }
        });
    }
    let g = &n.grammar;
    let mut nwords: Vec<BTreeMap<Vector, Vec<Vector>>> = vec![BTreeMap::new(); g.nonterminals.len()];
    loop {
        let mut changed = false;
        for pr in &g.productions {
            let opts = |s: &Sym, nw: &Vec<BTreeMap<Vector, Vec<Vector>>>| -> Vec<Vec<Vector>> {
                match *s {
                    Sym::T(t) => twords[t].clone(),
                    Sym::N(b) => nw[b].values().cloned().collect(),
                }
            };
            let mut cands: Vec<Vec<Vector>> = vec![Vec::new()];
            for s in &pr.rhs {
                let o = opts(s, &nwords);
                let mut next = Vec::new();
                for c in &cands {
                    for w in &o {
                        if c.len() + w.len() <= PUMP_WORD_LEN {
                            let mut x = c.clone();
                            x.extend(w.iter().cloned());
                            next.push(x);
                        }
                    }
                }
                cands = next;
            }
            for w in cands {
                let e = effect(&w, d);
                let slot = &mut nwords[pr.lhs];
                if slot.len() < PUMP_OPTIONS && !slot.contains_key(&e) {
                    slot.insert(e, w);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let nw = nwords.into_iter().map(|m| m.into_values().collect()).collect();
    Ok((twords, nw))
}

/// Searches for a cycle on `a` whose left effect is `≥ 1` on `up` and right
/// effect `≤ −1` on `down`, ignoring non-negativity. Cycles may be
/// concatenations of shorter cycles through `a`.
pub fn z_pump(n: &Ngvas, a: usize, up: &BTreeSet<usize>, down: &BTreeSet<usize>) -> Result<Option<ZPump>> {
    let d = n.dim;
    let (tw, nw) = short_words(n)?;
    let g = &n.grammar;
    let words = |s: Sym| -> Vec<Vec<Vector>> {
        match s {
            Sym::T(t) => tw[t].clone(),
            Sym::N(b) => nw[b].clone(),
        }
    };
    type State = (usize, Vector, Vector);
    // (state, parent index, production, side word, word on the left?)
    let mut nodes: Vec<(State, Option<usize>, usize, Vec<Vector>, bool)> = Vec::new();
    let mut seen: HashSet<State> = HashSet::new();
    let root: State = (a, vec![0; d], vec![0; d]);
    nodes.push((root.clone(), None, 0, Vec::new(), true));
    seen.insert(root);
    let mut depth = vec![0usize];
    let mut head = 0;
    while head < nodes.len() {
        let ((b, l, r), _, _, _, _) = nodes[head].clone();
        let i = head;
        head += 1;
        if depth[i] >= PUMP_STEPS {
            continue;
        }
        for p in g.prods_of(b) {
            let rhs = &g.productions[p].rhs;
            for (pos, s) in rhs.iter().enumerate() {
                let Sym::N(c) = *s else { continue };
                let others: Vec<(Vec<Vector>, bool)> = if rhs.len() == 1 {
                    vec![(Vec::new(), true)]
                } else {
                    let other = rhs[1 - pos];
                    words(other).into_iter().map(|w| (w, pos == 1)).collect()
                };
                for (w, on_left) in others {
                    let e = effect(&w, d);
                    let (mut l2, mut r2) = (l.clone(), r.clone());
                    let tgt = if on_left { &mut l2 } else { &mut r2 };
                    for k in 0..d {
                        tgt[k] += e[k];
                    }
                    if l2.iter().chain(&r2).any(|x| x.abs() > PUMP_RANGE) {
                        continue;
                    }
                    let st: State = (c, l2.clone(), r2.clone());
                    let done = c == a
                        && up.iter().all(|&k| l2[k] >= 1)
                        && down.iter().all(|&k| r2[k] <= -1);
                    nodes.push((st.clone(), Some(i), p, w, on_left));
                    depth.push(depth[i] + 1);
                    if done {
                        return Ok(Some(unwind(&nodes, nodes.len() - 1, a)));
                    }
                    if !seen.insert(st) {
                        nodes.pop();
                        depth.pop();
                    }
                }
            }
        }
    }
    Ok(None)
}

type PumpNode = ((usize, Vector, Vector), Option<usize>, usize, Vec<Vector>, bool);

fn unwind(nodes: &[PumpNode], mut i: usize, a: usize) -> ZPump {
    let mut steps = Vec::new();
    while let Some(p) = nodes[i].1 {
        steps.push(i);
        i = p;
    }
    steps.reverse();
    let mut left = Vec::new();
    let mut right_parts: Vec<Vec<Vector>> = Vec::new();
    let mut prods = Vec::new();
    for &s in &steps {
        let (_, _, p, w, on_left) = &nodes[s];
        prods.push(*p);
        if *on_left {
            left.extend(w.iter().cloned());
        } else {
            right_parts.push(w.clone());
        }
    }
    let right = right_parts.into_iter().rev().flatten().collect();
    ZPump { nonterminal: a, prods, left, right }
}

/// Counters a pump must raise on the left and lower on the right for the
/// witness symbol of an unbounded grammar.
pub fn required_signs(cg: &CovGrammar, x: usize) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let n = &cg.source;
    let Sym::N(a) = cg.symbols[x].sym else { return Default::default() };
    let (ia, oa) = (in_or_omega(n, a), out_or_omega(n, a));
    let up = (0..n.dim).filter(|&i| !n.cin.0[i].is_omega() && ia.0[i].is_omega()).collect();
    let down = (0..n.dim).filter(|&i| !n.cout.0[i].is_omega() && oa.0[i].is_omega()).collect();
    (up, down)
}

/// For an unbounded grammar, a Z-pump on the witness nonterminal with the
/// required sign pattern.
pub fn witness_pump(cg: &CovGrammar) -> Result<Option<ZPump>> {
    let CgVerdict::Unbounded(x) = cg.verdict else {
        return contract("the coverability grammar remains bounded");
    };
    let Sym::N(a) = cg.symbols[x].sym else { unreachable!("witness is a nonterminal") };
    let (up, down) = required_signs(cg, x);
    z_pump(&cg.source, a, &up, &down)
}

struct Extractor<'a> {
    cg: &'a CovGrammar,
    rules: Vec<&'a CovRule>,
    cgg: Grammar,
    index: BTreeMap<usize, usize>,
    memo: HashMap<usize, Vec<Ngvas>>,
}

fn sym_label(cg: &CovGrammar, x: usize) -> String {
    let s = &cg.symbols[x];
    format!("{}#{}", cg.source.grammar.sym_name(s.sym), s.history)
}

impl Extractor<'_> {
    fn realize(&mut self, x: usize) -> Result<Vec<Payload>> {
        let s = &self.cg.symbols[x];
        let n = &self.cg.source;
        match s.sym {
            Sym::T(t) => Ok(vec![match &n.payloads[t] {
                Payload::Update(u) => Payload::Update(u.clone()),
                Payload::Child(c) => {
                    let mut c2 = (**c).clone();
                    c2.cin = s.win().expect("useful symbols have compatible promises");
                    c2.cout = s.wout().expect("useful symbols have compatible promises");
                    c2.un = c2.cin.omega_set().intersection(&c2.cout.omega_set()).copied().collect();
                    c2.name = format!("{}#{}", c.name, s.history);
                    Payload::Child(Box::new(c2))
                }
            }]),
            Sym::N(_) => Ok(self.build(x)?.into_iter().map(|m| Payload::Child(Box::new(m))).collect()),
        }
    }

    fn build(&mut self, x: usize) -> Result<Vec<Ngvas>> {
        if let Some(v) = self.memo.get(&x) {
            return Ok(v.clone());
        }
        let cg = self.cg;
        let d = cg.source.dim;
        let scc_local = self.cgg.scc_of(self.index[&x])?;
        let mut members: Vec<usize> = vec![x];
        let back: BTreeMap<usize, usize> = self.index.iter().map(|(&k, &v)| (v, k)).collect();
        members.extend(scc_local.iter().map(|i| back[i]).filter(|&y| y != x));
        let local: BTreeMap<usize, usize> = members.iter().enumerate().map(|(i, &y)| (y, i)).collect();
        let mut terminals: Vec<String> = Vec::new();
        let mut payloads: Vec<Payload> = Vec::new();
        let mut tmap: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut productions = Vec::new();
        let rules: Vec<&CovRule> = self.rules.iter().copied().filter(|r| local.contains_key(&r.lhs)).collect();
        for r in rules {
            let mut alts: Vec<Vec<Sym>> = vec![Vec::new()];
            for &y in &r.rhs {
                let opts: Vec<Sym> = if let Some(&l) = local.get(&y) {
                    vec![Sym::N(l)]
                } else {
                    if !tmap.contains_key(&y) {
                        let ps = self.realize(y)?;
                        let base = sym_label(cg, y);
                        let mut ids = Vec::new();
                        for (k, p) in ps.into_iter().enumerate() {
                            ids.push(terminals.len());
                            terminals.push(if k == 0 { base.clone() } else { format!("{base}.{}", k + 1) });
                            payloads.push(p);
                        }
                        tmap.insert(y, ids);
                    }
                    tmap[&y].iter().map(|&t| Sym::T(t)).collect()
                };
                alts = alts
                    .into_iter()
                    .flat_map(|a| {
                        opts.iter().map(move |&o| {
                            let mut b = a.clone();
                            b.push(o);
                            b
                        })
                    })
                    .collect();
            }
            for rhs in alts {
                productions.push(Production { lhs: local[&r.lhs], rhs });
            }
        }
        let nts: Vec<String> = members.iter().map(|&y| sym_label(cg, y)).collect();
        let grammar = Grammar::new(nts, terminals, 0, productions)?;
        let win = |y: usize| cg.symbols[y].win().expect("useful symbols have compatible promises");
        let wout = |y: usize| cg.symbols[y].wout().expect("useful symbols have compatible promises");
        let cin = win(x);
        let cout = wout(x);
        let un: BTreeSet<usize> = cin.omega_set().intersection(&cout.omega_set()).copied().collect();
        let nn = Ngvas {
            name: format!("{}/{}", cg.source.name, sym_label(cg, x)),
            dim: d,
            payloads,
            un,
            restriction: LinearSet::full(d),
            bd: Boundedness {
                left: cin.omega_set(),
                right: cout.omega_set(),
                inm: members.iter().map(|&y| win(y)).collect(),
                outm: members.iter().map(|&y| wout(y)).collect(),
            },
            cin,
            cout,
            kind: Kind::Weak,
            tags: members.iter().map(|&y| Some(cg.symbols[y].history)).collect(),
            grammar,
        };
        let out = strongdec(&nn);
        self.memo.insert(x, out.clone());
        Ok(out)
    }
}

/// One NGVAS per target of the start symbol, each built from its component
/// of the grammar; lower components become children. Useless symbols and
/// symbols with incompatible promises are dropped first.
pub fn extract_decomposition(cg: &CovGrammar) -> Result<Vec<Ngvas>> {
    if !cg.is_bounded() {
        return contract("decomposition requires a coverability grammar that remains bounded");
    }
    let ok = |x: usize| cg.symbols[x].win().is_some() && cg.symbols[x].wout().is_some();
    let mut productive: BTreeSet<usize> = (0..cg.symbols.len())
        .filter(|&x| matches!(cg.symbols[x].sym, Sym::T(_)) && ok(x))
        .collect();
    loop {
        let before = productive.len();
        for r in &cg.rules {
            if (ok(r.lhs) || r.lhs == cg.start) && r.rhs.iter().all(|y| productive.contains(y)) {
                productive.insert(r.lhs);
            }
        }
        if productive.len() == before {
            break;
        }
    }
    let good: Vec<&CovRule> = cg
        .rules
        .iter()
        .filter(|r| productive.contains(&r.lhs) && r.rhs.iter().all(|y| productive.contains(y)))
        .collect();
    let mut useful = BTreeSet::from([cg.start]);
    let mut stack = vec![cg.start];
    while let Some(x) = stack.pop() {
        for r in good.iter().filter(|r| r.lhs == x) {
            for &y in &r.rhs {
                if useful.insert(y) {
                    stack.push(y);
                }
            }
        }
    }
    if !productive.contains(&cg.start) {
        return Ok(Vec::new());
    }
    let rules: Vec<&CovRule> = good.into_iter().filter(|r| useful.contains(&r.lhs)).collect();
    let nts: Vec<usize> = useful.iter().copied().filter(|&x| matches!(cg.symbols[x].sym, Sym::N(_))).collect();
    let index: BTreeMap<usize, usize> = nts.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let mut tnames = Vec::new();
    let mut tindex = BTreeMap::new();
    for &x in &useful {
        if matches!(cg.symbols[x].sym, Sym::T(_)) {
            tindex.insert(x, tnames.len());
            tnames.push(format!("t{x}"));
        }
    }
    let prods = rules
        .iter()
        .map(|r| Production {
            lhs: index[&r.lhs],
            rhs: r
                .rhs
                .iter()
                .map(|y| match index.get(y) {
                    Some(&i) => Sym::N(i),
                    None => Sym::T(tindex[y]),
                })
                .collect(),
        })
        .collect();
    let names = nts.iter().map(|x| format!("x{x}")).collect();
    let cgg = Grammar::new(names, tnames, index[&cg.start], prods)?;
    let mut ex = Extractor { cg, rules, cgg, index, memo: HashMap::new() };
    let targets: Vec<usize> = ex.rules.iter().filter(|r| r.lhs == cg.start).flat_map(|r| r.rhs.clone()).collect();
    let mut out: Vec<Ngvas> = Vec::new();
    for y in targets {
        for m in ex.build(y)? {
            if !out.contains(&m) {
                out.push(m);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ngvas::{is_deconstruction, validate};
    use crate::rank::rank;
    use crate::vas::Nw;

    fn gr(nts: &[&str], ts: &[&str], prods: &[(usize, &[Sym])]) -> Grammar {
        Grammar::new(
            nts.iter().map(|s| s.to_string()).collect(),
            ts.iter().map(|s| s.to_string()).collect(),
            0,
            prods.iter().map(|(l, r)| Production { lhs: *l, rhs: r.to_vec() }).collect(),
        )
        .unwrap()
    }

    fn nl(ups: Vec<Vector>, cin: GMarking, cout: GMarking) -> Ngvas {
        let ts: Vec<String> = (0..ups.len()).map(|i| format!("t{i}")).collect();
        let ts: Vec<&str> = ts.iter().map(String::as_str).collect();
        let mut prods: Vec<(usize, Vec<Sym>)> = vec![(0, vec![Sym::N(0), Sym::N(0)])];
        prods.extend((0..ups.len()).map(|t| (0, vec![Sym::T(t)])));
        let prods: Vec<(usize, &[Sym])> = prods.iter().map(|(l, r)| (*l, r.as_slice())).collect();
        let mut n = Ngvas::depth0("nl", gr(&["S"], &ts, &prods), ups, cin, cout);
        n.un = n.cin.omega_set().intersection(&n.cout.omega_set()).copied().collect();
        n
    }

    fn fin(v: &[i64]) -> GMarking {
        GMarking::concrete(v)
    }

    fn mk(v: &[Option<i64>]) -> GMarking {
        GMarking(v.iter().map(|x| x.map_or(Nw::Omega, Nw::Fin)).collect())
    }

    #[test]
    fn km_verdicts() {
        let tiny = nl(vec![vec![1], vec![-1]], fin(&[0]), fin(&[0]));
        let t = karp_miller(&tiny, Approx::Nat(6)).unwrap();
        assert!(matches!(t.verdict, KmVerdict::PumpingFound(_)));

        let g = gr(&["S"], &["u", "t"], &[(0, &[Sym::T(0), Sym::N(0)]), (0, &[Sym::T(1)])]);
        let one = Ngvas::depth0("one", g, vec![vec![1], vec![0]], fin(&[0]), GMarking::omega(1));
        let t = karp_miller(&one, Approx::Nat(4)).unwrap();
        let acc = t.nodes.iter().find(|x| x.step == KmStep::Accelerate).unwrap();
        assert!(acc.input.0[0].is_omega());

        let zero = nl(vec![vec![0]], fin(&[0]), fin(&[0]));
        let mut z2 = zero.clone();
        z2.cout = GMarking::omega(1);
        for z in [&zero, &z2] {
            let t = karp_miller(z, Approx::Nat(4)).unwrap();
            assert_eq!(t.verdict, KmVerdict::Bounded(0));
        }
        assert!(t.to_dot(&tiny).starts_with("digraph"));
    }

    #[test]
    fn tiny_nl_unbounded_with_pump() {
        let tiny = nl(vec![vec![1], vec![-1]], fin(&[0]), fin(&[0]));
        let cg = cov_grammar(&tiny, Approx::Int).unwrap();
        assert!(!cg.is_bounded());
        let p = witness_pump(&cg).unwrap().unwrap();
        let one = BTreeSet::from([0]);
        assert!(p.has_signs(1, &one, &one));
        assert!(extract_decomposition(&cg).is_err());
    }

    #[test]
    fn start_promises() {
        let tr = nl(vec![vec![-1, 1]], fin(&[2, 0]), GMarking::omega(2));
        let cg = cov_grammar(&tr, Approx::Int).unwrap();
        for r in cg.rules_of(cg.start) {
            assert_eq!(r.kind, RuleKind::Init);
            for &y in &r.rhs {
                assert_eq!(cg.symbols[y].input, tr.cin);
                assert_eq!(cg.symbols[y].output, tr.cout);
            }
        }
    }

    #[test]
    fn transfer_decomposes() {
        let tr = nl(vec![vec![-1, 1]], fin(&[2, 0]), GMarking::omega(2));
        let cg = cov_grammar(&tr, Approx::Int).unwrap();
        assert!(cg.is_bounded());
        let parts = extract_decomposition(&cg).unwrap();
        assert!(!parts.is_empty());
        let v = is_deconstruction(&tr, &parts, 4).unwrap();
        assert!(v.holds, "{v:?}");
        let r0 = rank(&tr).unwrap();
        for p in &parts {
            assert!(validate(p).is_empty(), "{:?}", validate(p));
            assert!(rank(p).unwrap().recrank() < r0.recrank());
            assert!(!p.cout.0.iter().all(|x| x.is_omega()));
        }
    }

    #[test]
    fn effect_free_gains_concrete_counter() {
        let ef = nl(vec![vec![0]], fin(&[0]), mk(&[None]));
        let cg = cov_grammar(&ef, Approx::Int).unwrap();
        assert!(cg.is_bounded());
        let parts = extract_decomposition(&cg).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].cout, fin(&[0]));
        assert!(is_deconstruction(&ef, &parts, 4).unwrap().holds);
        assert!(rank(&parts[0]).unwrap() <= rank(&ef).unwrap());
    }
}
