//! Arranging `k` copies of a homogeneous production vector into one parse
//! tree of logarithmic height, with every terminal leaf tagged by its copy.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::eek::hom_realize_from;
use crate::error::{contract, Result};
use crate::grammar::{Grammar, ParseTree, Shape, Sym};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// One step-case choice: `k`, the nonterminal `A` being widened, the
/// production at the split node and the side whose subtree was regrown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitChoice {
    pub k: usize,
    pub at: usize,
    pub prod: usize,
    pub side: Side,
}

#[derive(Debug, Clone)]
pub struct ProvenancedTree {
    pub tree: ParseTree,
    /// Copy index in `1..=k` of each terminal leaf, in yield order.
    pub prov: Vec<usize>,
    /// Copy index of each internal node, in preorder.
    pub node_copies: Vec<usize>,
    pub k: usize,
    pub choices: Vec<SplitChoice>,
}

#[derive(Debug, Clone)]
enum PTree {
    Leaf { sym: Sym, copy: usize },
    Node { nt: usize, prod: usize, copy: usize, children: Vec<PTree> },
}

impl PTree {
    fn from_parse(t: &ParseTree, copy: usize) -> PTree {
        match t {
            ParseTree::Leaf(s @ Sym::T(_)) => PTree::Leaf { sym: *s, copy },
            ParseTree::Leaf(s) => PTree::Leaf { sym: *s, copy: 0 },
            ParseTree::Node { nt, prod, children } => PTree::Node {
                nt: *nt,
                prod: *prod,
                copy,
                children: children.iter().map(|c| PTree::from_parse(c, copy)).collect(),
            },
        }
    }

    fn shift(&mut self, by: usize) {
        match self {
            PTree::Leaf { copy, .. } => {
                if *copy > 0 {
                    *copy += by;
                }
            }
            PTree::Node { copy, children, .. } => {
                *copy += by;
                for c in children {
                    c.shift(by);
                }
            }
        }
    }

    fn has_nonterminal_leaf(&self) -> bool {
        match self {
            PTree::Leaf { sym, .. } => matches!(sym, Sym::N(_)),
            PTree::Node { children, .. } => children.iter().any(|c| c.has_nonterminal_leaf()),
        }
    }

    /// Replaces the unique nonterminal leaf with `sub`.
    fn plug(&mut self, sub: PTree) {
        match self {
            PTree::Leaf { sym: Sym::N(_), .. } => *self = sub,
            PTree::Leaf { .. } => unreachable!("no nonterminal leaf to plug"),
            PTree::Node { children, .. } => {
                let c = children
                    .iter_mut()
                    .find(|c| c.has_nonterminal_leaf())
                    .expect("no nonterminal leaf to plug");
                c.plug(sub);
            }
        }
    }

    fn at_mut(&mut self, path: &[usize]) -> &mut PTree {
        match path.split_first() {
            None => self,
            Some((&i, rest)) => match self {
                PTree::Node { children, .. } => children[i].at_mut(rest),
                PTree::Leaf { .. } => unreachable!("path leads through a leaf"),
            },
        }
    }

    /// Preorder candidates: nodes with two nonterminal children, at least one of
    /// them terminal-only. Returns (prod, path, side of the terminal-only child).
    fn split_candidates(&self, path: &mut Vec<usize>, out: &mut Vec<(usize, Vec<usize>, Side)>) {
        if let PTree::Node { prod, children, .. } = self {
            if children.len() == 2
                && children.iter().all(|c| matches!(c, PTree::Node { .. } | PTree::Leaf { sym: Sym::N(_), .. }))
            {
                let closed: Vec<bool> = children
                    .iter()
                    .map(|c| matches!(c, PTree::Node { .. }) && !c.has_nonterminal_leaf())
                    .collect();
                let side = if closed[0] {
                    Some(Side::Left)
                } else if closed[1] {
                    Some(Side::Right)
                } else {
                    None
                };
                if let Some(s) = side {
                    out.push((*prod, path.clone(), s));
                }
            }
            for (i, c) in children.iter().enumerate() {
                path.push(i);
                c.split_candidates(path, out);
                path.pop();
            }
        }
    }

    fn root_nt(&self) -> usize {
        match self {
            PTree::Node { nt, .. } => *nt,
            PTree::Leaf { sym, .. } => sym.nonterminal().expect("nonterminal root"),
        }
    }

    fn into_parse(self, prov: &mut Vec<usize>, node_copies: &mut Vec<usize>) -> ParseTree {
        match self {
            PTree::Leaf { sym, copy } => {
                if let Sym::T(_) = sym {
                    prov.push(copy);
                }
                ParseTree::Leaf(sym)
            }
            PTree::Node { nt, prod, copy, children } => {
                node_copies.push(copy);
                ParseTree::Node {
                    nt,
                    prod,
                    children: children.into_iter().map(|c| c.into_parse(prov, node_copies)).collect(),
                }
            }
        }
    }
}

struct Builder<'a> {
    g: &'a Grammar,
    v: &'a [i64],
    memo: HashMap<(usize, usize), PTree>,
    choices: Vec<SplitChoice>,
}

impl Builder<'_> {
    fn build(&mut self, k: usize, a: usize) -> Result<PTree> {
        if let Some(t) = self.memo.get(&(k, a)) {
            return Ok(t.clone());
        }
        let base = PTree::from_parse(&hom_realize_from(self.g, a, self.v)?, 1);
        let t = if k == 1 {
            base
        } else {
            let k1 = (k - 1) / 2;
            let k2 = k - 1 - k1;
            let mut cands = Vec::new();
            base.split_candidates(&mut Vec::new(), &mut cands);
            let Some((prod, path, side)) = cands.into_iter().min_by_key(|(p, _, _)| *p) else {
                return contract("no branching node with a terminal-only subtree");
            };
            self.choices.push(SplitChoice { k, at: a, prod, side });
            let mut t = base;
            let mut child_path = path.clone();
            child_path.push(if side == Side::Left { 0 } else { 1 });
            let slot = t.at_mut(&child_path);
            let b = slot.root_nt();
            let old = slot.clone();
            let mut grown = self.build(k2, b)?;
            grown.shift(1 + k1);
            grown.plug(old);
            *slot = grown;
            if k1 > 0 {
                let mut inner = self.build(k1, a)?;
                inner.shift(1);
                t.plug(inner);
            }
            t
        };
        self.memo.insert((k, a), t.clone());
        Ok(t)
    }
}

/// `⌈1 + log2 k⌉`.
pub fn log_factor(k: usize) -> usize {
    if k <= 1 {
        1
    } else {
        1 + (usize::BITS - (k - 1).leading_zeros()) as usize
    }
}

pub fn height_bound(k: usize, v: &[i64]) -> usize {
    log_factor(k) * v.iter().sum::<i64>() as usize
}

/// Builds `T(k)` rooted at the start symbol.
pub fn build_wide_tree(g: &Grammar, v: &[i64], k: usize) -> Result<ProvenancedTree> {
    if k == 0 {
        return contract("k must be positive");
    }
    if !g.is_strongly_connected() {
        return contract("grammar is not strongly connected");
    }
    if g.shape() == Shape::Linear {
        return contract("grammar is linear");
    }
    let mut b = Builder { g, v, memo: HashMap::new(), choices: Vec::new() };
    let t = b.build(k, g.start)?;
    let mut prov = Vec::new();
    let mut node_copies = Vec::new();
    let tree = t.into_parse(&mut prov, &mut node_copies);
    Ok(ProvenancedTree { tree, prov, node_copies, k, choices: b.choices })
}

/// Maximum over yield cuts of the number of copies with leaves on both sides.
pub fn order_of(t: &ProvenancedTree) -> usize {
    let mut span: HashMap<usize, (usize, usize)> = HashMap::new();
    for (i, &c) in t.prov.iter().enumerate() {
        let e = span.entry(c).or_insert((i, i));
        e.1 = i;
    }
    let n = t.prov.len();
    let mut delta = vec![0i64; n + 1];
    for &(f, l) in span.values() {
        if f < l {
            delta[f + 1] += 1;
            delta[l + 1] -= 1;
        }
    }
    let mut cur = 0;
    let mut best = 0;
    for d in delta {
        cur += d;
        best = best.max(cur);
    }
    best as usize
}

impl ProvenancedTree {
    /// Terminal counts per copy, indexed `[copy-1][terminal]`.
    pub fn terminals_per_copy(&self, nterms: usize) -> Vec<Vec<i64>> {
        let mut out = vec![vec![0; nterms]; self.k];
        let word = self.tree.yield_word();
        let terms = word.iter().filter_map(|s| s.terminal());
        for (t, &c) in terms.zip(&self.prov) {
            out[c - 1][t] += 1;
        }
        out
    }

    /// Production counts per copy, indexed `[copy-1][production]`.
    pub fn prods_per_copy(&self, nprods: usize) -> Vec<Vec<i64>> {
        let mut out = vec![vec![0; nprods]; self.k];
        let mut prods = Vec::new();
        self.tree.walk(&mut |n| {
            if let ParseTree::Node { prod, .. } = n {
                prods.push(*prod);
            }
        });
        for (p, &c) in prods.iter().zip(&self.node_copies) {
            out[c - 1][*p] += 1;
        }
        out
    }

    /// Graphviz rendering with one fill color per copy.
    pub fn to_dot(&self, g: &Grammar) -> String {
        const PALETTE: [&str; 8] = [
            "#8dd3c7", "#ffffb3", "#bebada", "#fb8072", "#80b1d3", "#fdb462", "#b3de69", "#fccde5",
        ];
        let mut s = String::from("digraph widetree {\n  node [style=filled];\n");
        let mut next = 0usize;
        let mut leaf = 0usize;
        let mut node = 0usize;
        fn go(
            t: &ParseTree,
            g: &Grammar,
            me: &ProvenancedTree,
            s: &mut String,
            next: &mut usize,
            leaf: &mut usize,
            node: &mut usize,
        ) -> usize {
            let id = *next;
            *next += 1;
            let (label, copy) = match t {
                ParseTree::Leaf(sym @ Sym::T(_)) => {
                    let c = me.prov[*leaf];
                    *leaf += 1;
                    (g.sym_name(*sym).to_string(), c)
                }
                ParseTree::Leaf(sym) => (g.sym_name(*sym).to_string(), 0),
                ParseTree::Node { nt, .. } => {
                    let c = me.node_copies[*node];
                    *node += 1;
                    (g.nonterminals[*nt].clone(), c)
                }
            };
            let color = if copy == 0 { "white" } else { PALETTE[(copy - 1) % PALETTE.len()] };
            let _ = writeln!(s, "  n{id} [label=\"{label}\\n#{copy}\", fillcolor=\"{color}\"];");
            if let ParseTree::Node { children, .. } = t {
                for c in children {
                    let cid = go(c, g, me, s, next, leaf, node);
                    let _ = writeln!(s, "  n{id} -> n{cid};");
                }
            }
            id
        }
        go(&self.tree, g, self, &mut s, &mut next, &mut leaf, &mut node);
        s.push_str("}\n");
        s
    }
}
