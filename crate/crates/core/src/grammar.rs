//! Context-free grammars in weak Chomsky normal form (at most two symbols per
//! right-hand side), parse trees and Parikh images.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{structural, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sym {
    N(usize),
    T(usize),
}

impl Sym {
    pub fn nonterminal(self) -> Option<usize> {
        match self {
            Sym::N(a) => Some(a),
            Sym::T(_) => None,
        }
    }

    pub fn terminal(self) -> Option<usize> {
        match self {
            Sym::T(a) => Some(a),
            Sym::N(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Production {
    pub lhs: usize,
    pub rhs: Vec<Sym>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Linear,
    NonLinear,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    pub nonterminals: Vec<String>,
    pub terminals: Vec<String>,
    pub start: usize,
    pub productions: Vec<Production>,
}

impl Grammar {
    pub fn new(
        nonterminals: Vec<String>,
        terminals: Vec<String>,
        start: usize,
        productions: Vec<Production>,
    ) -> Result<Self> {
        let g = Grammar { nonterminals, terminals, start, productions };
        g.check()?;
        Ok(g)
    }

    pub fn check(&self) -> Result<()> {
        if self.start >= self.nonterminals.len() {
            return structural("start symbol is not a nonterminal");
        }
        let nts: BTreeSet<&String> = self.nonterminals.iter().collect();
        if nts.len() != self.nonterminals.len() {
            return structural("duplicate nonterminal name");
        }
        for t in &self.terminals {
            if nts.contains(t) {
                return structural(format!("{t} is both a terminal and a nonterminal"));
            }
        }
        for (i, p) in self.productions.iter().enumerate() {
            if p.lhs >= self.nonterminals.len() {
                return structural(format!("production {i} has an unknown left-hand side"));
            }
            if p.rhs.len() > 2 {
                return structural(format!(
                    "production {i} has {} right-hand symbols, at most 2 allowed",
                    p.rhs.len()
                ));
            }
            for s in &p.rhs {
                let ok = match *s {
                    Sym::N(a) => a < self.nonterminals.len(),
                    Sym::T(a) => a < self.terminals.len(),
                };
                if !ok {
                    return structural(format!("production {i} mentions an unknown symbol"));
                }
            }
        }
        Ok(())
    }

    pub fn nt(&self, name: &str) -> Option<usize> {
        self.nonterminals.iter().position(|n| n == name)
    }

    pub fn num_prods(&self) -> usize {
        self.productions.len()
    }

    pub fn sym_name(&self, s: Sym) -> &str {
        match s {
            Sym::N(a) => &self.nonterminals[a],
            Sym::T(a) => &self.terminals[a],
        }
    }

    pub fn prod_string(&self, p: usize) -> String {
        let pr = &self.productions[p];
        let rhs: Vec<&str> = pr.rhs.iter().map(|&s| self.sym_name(s)).collect();
        let rhs = if rhs.is_empty() { "ε".to_string() } else { rhs.join(" ") };
        format!("{} -> {}", self.nonterminals[pr.lhs], rhs)
    }

    pub fn prods_of(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.productions.len()).filter(move |&p| self.productions[p].lhs == a)
    }

    fn successors(&self) -> Vec<BTreeSet<usize>> {
        let mut succ = vec![BTreeSet::new(); self.nonterminals.len()];
        for p in &self.productions {
            for s in &p.rhs {
                if let Sym::N(b) = s {
                    succ[p.lhs].insert(*b);
                }
            }
        }
        succ
    }

    /// Strongly connected components, callees before callers.
    pub fn sccs(&self) -> Vec<BTreeSet<usize>> {
        let succ = self.successors();
        let n = self.nonterminals.len();
        let mut index = vec![usize::MAX; n];
        let mut low = vec![0; n];
        let mut on_stack = vec![false; n];
        let mut stack = Vec::new();
        let mut out = Vec::new();
        let mut counter = 0;
        fn visit(
            v: usize,
            succ: &[BTreeSet<usize>],
            index: &mut [usize],
            low: &mut [usize],
            on_stack: &mut [bool],
            stack: &mut Vec<usize>,
            out: &mut Vec<BTreeSet<usize>>,
            counter: &mut usize,
        ) {
            index[v] = *counter;
            low[v] = *counter;
            *counter += 1;
            stack.push(v);
            on_stack[v] = true;
            for &w in &succ[v] {
                if index[w] == usize::MAX {
                    visit(w, succ, index, low, on_stack, stack, out, counter);
                    low[v] = low[v].min(low[w]);
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            }
            if low[v] == index[v] {
                let mut comp = BTreeSet::new();
                loop {
                    let w = stack.pop().unwrap();
                    on_stack[w] = false;
                    comp.insert(w);
                    if w == v {
                        break;
                    }
                }
                out.push(comp);
            }
        }
        for v in 0..n {
            if index[v] == usize::MAX {
                visit(v, &succ, &mut index, &mut low, &mut on_stack, &mut stack, &mut out, &mut counter);
            }
        }
        out
    }

    pub fn scc_of(&self, a: usize) -> Result<BTreeSet<usize>> {
        if a >= self.nonterminals.len() {
            return structural(format!("unknown nonterminal index {a}"));
        }
        Ok(self.sccs().into_iter().find(|c| c.contains(&a)).unwrap())
    }

    /// Nonterminals reachable from `from` (inclusive).
    pub fn reachable_from(&self, from: usize) -> BTreeSet<usize> {
        let succ = self.successors();
        let mut seen = BTreeSet::from([from]);
        let mut todo = vec![from];
        while let Some(a) = todo.pop() {
            for &b in &succ[a] {
                if seen.insert(b) {
                    todo.push(b);
                }
            }
        }
        seen
    }

    /// Nonterminals deriving some terminal word.
    pub fn productive(&self) -> BTreeSet<usize> {
        let mut prod = BTreeSet::new();
        loop {
            let before = prod.len();
            for p in &self.productions {
                if p.rhs.iter().all(|s| match s {
                    Sym::N(b) => prod.contains(b),
                    Sym::T(_) => true,
                }) {
                    prod.insert(p.lhs);
                }
            }
            if prod.len() == before {
                return prod;
            }
        }
    }

    pub fn useful_nonterminals(&self) -> BTreeSet<usize> {
        let productive = self.productive();
        if !productive.contains(&self.start) {
            return BTreeSet::new();
        }
        let mut seen = BTreeSet::from([self.start]);
        let mut todo = vec![self.start];
        while let Some(a) = todo.pop() {
            for p in &self.productions {
                if p.lhs != a {
                    continue;
                }
                let all_prod = p.rhs.iter().all(|s| match s {
                    Sym::N(b) => productive.contains(b),
                    Sym::T(_) => true,
                });
                if !all_prod {
                    continue;
                }
                for s in &p.rhs {
                    if let Sym::N(b) = s {
                        if seen.insert(*b) {
                            todo.push(*b);
                        }
                    }
                }
            }
        }
        seen
    }

    pub fn all_useful(&self) -> bool {
        self.useful_nonterminals().len() == self.nonterminals.len()
    }

    pub fn is_strongly_connected(&self) -> bool {
        let sccs = self.sccs();
        sccs.len() == 1
    }

    /// Linear unless some production has its left-hand side and both right-hand symbols in `scc`.
    pub fn shape_of(&self, scc: &BTreeSet<usize>) -> Shape {
        let branching = self.productions.iter().any(|p| {
            scc.contains(&p.lhs)
                && p.rhs.len() == 2
                && p.rhs.iter().all(|s| matches!(s, Sym::N(b) if scc.contains(b)))
        });
        if branching {
            Shape::NonLinear
        } else {
            Shape::Linear
        }
    }

    pub fn classify(&self) -> Vec<(BTreeSet<usize>, Shape)> {
        self.sccs()
            .into_iter()
            .map(|c| {
                let s = self.shape_of(&c);
                (c, s)
            })
            .collect()
    }

    /// Shape of the component containing the start symbol.
    pub fn shape(&self) -> Shape {
        self.shape_of(&self.scc_of(self.start).unwrap())
    }

    /// Productions whose right-hand side has no nonterminal of `scc`.
    pub fn exit_productions(&self, scc: &BTreeSet<usize>) -> Vec<usize> {
        (0..self.productions.len())
            .filter(|&p| {
                let pr = &self.productions[p];
                scc.contains(&pr.lhs)
                    && !pr.rhs.iter().any(|s| matches!(s, Sym::N(b) if scc.contains(b)))
            })
            .collect()
    }

    /// Column `p` is `Parikh_B(rhs) − 1_{lhs}` (the lhs term only when it is in `b`).
    pub fn effect_matrix(&self, b: &[Sym]) -> Vec<Vec<i64>> {
        let mut m = vec![vec![0i64; self.productions.len()]; b.len()];
        for (j, p) in self.productions.iter().enumerate() {
            for (i, s) in b.iter().enumerate() {
                let mut c = p.rhs.iter().filter(|x| *x == s).count() as i64;
                if *s == Sym::N(p.lhs) {
                    c -= 1;
                }
                m[i][j] = c;
            }
        }
        m
    }

    pub fn nonterminal_syms(&self) -> Vec<Sym> {
        (0..self.nonterminals.len()).map(Sym::N).collect()
    }

    pub fn terminal_syms(&self) -> Vec<Sym> {
        (0..self.terminals.len()).map(Sym::T).collect()
    }

    /// `eff_N · v`.
    pub fn eff_n(&self, v: &[i64]) -> Vec<i64> {
        mat_vec(&self.effect_matrix(&self.nonterminal_syms()), v)
    }

    /// `eff_T · v`.
    pub fn eff_t(&self, v: &[i64]) -> Vec<i64> {
        mat_vec(&self.effect_matrix(&self.terminal_syms()), v)
    }

    /// Keeps only the given nonterminals and the productions among them;
    /// indices are renumbered in order. Returns the old-to-new map.
    pub fn restrict(&self, keep: &BTreeSet<usize>) -> (Grammar, BTreeMap<usize, usize>, Vec<usize>) {
        let map: BTreeMap<usize, usize> = keep.iter().enumerate().map(|(i, &a)| (a, i)).collect();
        let mut prods = Vec::new();
        let mut kept_prods = Vec::new();
        for (i, p) in self.productions.iter().enumerate() {
            if !map.contains_key(&p.lhs) {
                continue;
            }
            let rhs: Option<Vec<Sym>> = p
                .rhs
                .iter()
                .map(|s| match *s {
                    Sym::N(b) => map.get(&b).map(|&n| Sym::N(n)),
                    t => Some(t),
                })
                .collect();
            if let Some(rhs) = rhs {
                prods.push(Production { lhs: map[&p.lhs], rhs });
                kept_prods.push(i);
            }
        }
        let g = Grammar {
            nonterminals: keep.iter().map(|&a| self.nonterminals[a].clone()).collect(),
            terminals: self.terminals.clone(),
            start: *map.get(&self.start).unwrap_or(&0),
            productions: prods,
        };
        (g, map, kept_prods)
    }
}

pub fn mat_vec(m: &[Vec<i64>], v: &[i64]) -> Vec<i64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Occurrence counts of `alphabet` in `word`.
pub fn parikh(word: &[Sym], alphabet: &[Sym]) -> Vec<i64> {
    alphabet
        .iter()
        .map(|a| word.iter().filter(|s| *s == a).count() as i64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ParseTree {
    /// A terminal, or a nonterminal left unexpanded.
    Leaf(Sym),
    Node { nt: usize, prod: usize, children: Vec<ParseTree> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Step {
    /// Position of the rewritten nonterminal in the current sentential form.
    pub pos: usize,
    pub prod: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Derivation {
    pub steps: Vec<Step>,
}

impl ParseTree {
    pub fn symbol(&self) -> Sym {
        match self {
            ParseTree::Leaf(s) => *s,
            ParseTree::Node { nt, .. } => Sym::N(*nt),
        }
    }

    pub fn yield_word(&self) -> Vec<Sym> {
        let mut out = Vec::new();
        self.collect_yield(&mut out);
        out
    }

    fn collect_yield(&self, out: &mut Vec<Sym>) {
        match self {
            ParseTree::Leaf(s) => out.push(*s),
            ParseTree::Node { children, .. } => {
                for c in children {
                    c.collect_yield(out);
                }
            }
        }
    }

    pub fn yield_len(&self) -> usize {
        match self {
            ParseTree::Leaf(_) => 1,
            ParseTree::Node { children, .. } => children.iter().map(|c| c.yield_len()).sum(),
        }
    }

    /// Edges on the longest root-to-leaf path.
    pub fn height(&self) -> usize {
        match self {
            ParseTree::Leaf(_) => 0,
            ParseTree::Node { children, .. } => {
                1 + children.iter().map(|c| c.height()).max().unwrap_or(0)
            }
        }
    }

    pub fn prod_counts(&self, nprods: usize) -> Vec<i64> {
        let mut v = vec![0; nprods];
        self.walk(&mut |t| {
            if let ParseTree::Node { prod, .. } = t {
                v[*prod] += 1;
            }
        });
        v
    }

    pub fn walk(&self, f: &mut impl FnMut(&ParseTree)) {
        f(self);
        if let ParseTree::Node { children, .. } = self {
            for c in children {
                c.walk(f);
            }
        }
    }

    /// Leftmost derivation recorded by the tree.
    pub fn derivation(&self) -> Derivation {
        let mut steps = Vec::new();
        self.push_steps(0, &mut steps);
        Derivation { steps }
    }

    fn push_steps(&self, offset: usize, steps: &mut Vec<Step>) {
        if let ParseTree::Node { prod, children, .. } = self {
            steps.push(Step { pos: offset, prod: *prod });
            let mut off = offset;
            for c in children {
                c.push_steps(off, steps);
                off += c.yield_len();
            }
        }
    }

    /// Checks every internal node against the grammar.
    pub fn check(&self, g: &Grammar) -> Result<()> {
        if let ParseTree::Node { nt, prod, children } = self {
            let p = g
                .productions
                .get(*prod)
                .ok_or_else(|| crate::error::Error::Structural(format!("unknown production {prod}")))?;
            let labels: Vec<Sym> = children.iter().map(|c| c.symbol()).collect();
            if p.lhs != *nt || p.rhs != labels {
                return structural(format!("node does not match production {}", g.prod_string(*prod)));
            }
            for c in children {
                c.check(g)?;
            }
        }
        Ok(())
    }
}

impl Derivation {
    pub fn parikh(&self, nprods: usize) -> Vec<i64> {
        let mut v = vec![0; nprods];
        for s in &self.steps {
            v[s.prod] += 1;
        }
        v
    }

    /// Applies the steps to `form`.
    pub fn apply(&self, g: &Grammar, form: &[Sym]) -> Result<Vec<Sym>> {
        let mut cur = form.to_vec();
        for (i, s) in self.steps.iter().enumerate() {
            let p = g
                .productions
                .get(s.prod)
                .ok_or_else(|| crate::error::Error::Structural(format!("step {i}: unknown production")))?;
            match cur.get(s.pos) {
                Some(Sym::N(a)) if *a == p.lhs => {
                    cur.splice(s.pos..s.pos + 1, p.rhs.iter().copied());
                }
                _ => {
                    return structural(format!(
                        "step {i}: position {} does not hold {}",
                        s.pos, g.nonterminals[p.lhs]
                    ))
                }
            }
        }
        Ok(cur)
    }
}
