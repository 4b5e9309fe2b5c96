//! Production-count systems for grammars and their realization as derivations.
//!
//! A vector `v` over productions is realizable from `S` as soon as it uses
//! every production, all nonterminals are useful and `1_S + eff_N·v ≥ 0`.
//! The realizer expands greedily and keeps the invariant that every
//! nonterminal with budget left is reachable, through budgeted productions,
//! from some nonterminal of the current sentential form.

use std::collections::BTreeSet;

use crate::error::{contract, structural, Error, Result};
use crate::grammar::{parikh, Derivation, Grammar, ParseTree, Sym};
use crate::numerics::{Bound, LinearIntSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    /// `eff_N·x = −1_S`
    Standard,
    /// `eff_N·x = 0`
    Homogeneous,
}

/// `EEK(G)` or `homEEK(G)` over variables `x_P[p]`, optionally with the
/// `PT` rows `x_T − eff_T·x_P = 0` over extra variables `x_T[t]`.
pub fn eek_system(g: &Grammar, flavor: Flavor, with_pt: bool) -> LinearIntSystem {
    let mut sys = LinearIntSystem::new();
    let xp: Vec<usize> = (0..g.num_prods())
        .map(|p| sys.add_var(format!("x_P[{p}]"), Bound::NAT))
        .collect();
    let effn = g.effect_matrix(&g.nonterminal_syms());
    for (a, row) in effn.iter().enumerate() {
        let terms: Vec<(usize, i64)> = row.iter().enumerate().map(|(p, &c)| (xp[p], c)).collect();
        let k = if flavor == Flavor::Standard && a == g.start { -1 } else { 0 };
        sys.add_row(&terms, k);
    }
    if with_pt {
        let efft = g.effect_matrix(&g.terminal_syms());
        for (t, row) in efft.iter().enumerate() {
            let xt = sys.add_var(format!("x_T[{t}]"), Bound::NAT);
            let mut terms: Vec<(usize, i64)> = vec![(xt, 1)];
            terms.extend(row.iter().enumerate().map(|(p, &c)| (xp[p], -c)));
            sys.add_row(&terms, 0);
        }
    }
    sys
}

const EXPANSION_BUDGET: usize = 200_000;

struct Node {
    sym: Sym,
    prod: Option<usize>,
    children: Vec<usize>,
}

struct Search<'a> {
    g: &'a Grammar,
    resid: Vec<i64>,
    nodes: Vec<Node>,
    form: Vec<usize>,
    expansions: usize,
}

impl Search<'_> {
    fn feasible(&self) -> bool {
        let n = self.g.nonterminals.len();
        let mut pending = vec![false; n];
        let mut any = false;
        for (p, pr) in self.g.productions.iter().enumerate() {
            if self.resid[p] > 0 {
                pending[pr.lhs] = true;
                any = true;
            }
        }
        if !any {
            return true;
        }
        let mut seen = vec![false; n];
        let mut todo: Vec<usize> = Vec::new();
        for &id in &self.form {
            if let Sym::N(a) = self.nodes[id].sym {
                if !seen[a] {
                    seen[a] = true;
                    todo.push(a);
                }
            }
        }
        while let Some(a) = todo.pop() {
            for (p, pr) in self.g.productions.iter().enumerate() {
                if pr.lhs != a || self.resid[p] == 0 {
                    continue;
                }
                for s in &pr.rhs {
                    if let Sym::N(b) = *s {
                        if !seen[b] {
                            seen[b] = true;
                            todo.push(b);
                        }
                    }
                }
            }
        }
        (0..n).all(|a| !pending[a] || seen[a])
    }

    fn solve(&mut self) -> Result<bool> {
        if self.resid.iter().all(|&r| r == 0) {
            return Ok(true);
        }
        self.expansions += 1;
        if self.expansions > EXPANSION_BUDGET {
            return Err(Error::Budget(format!(
                "derivation search exceeded {EXPANSION_BUDGET} expansions"
            )));
        }
        let mut tried: BTreeSet<usize> = BTreeSet::new();
        for pos in 0..self.form.len() {
            let Sym::N(a) = self.nodes[self.form[pos]].sym else { continue };
            if !tried.insert(a) {
                continue;
            }
            let mut prods: Vec<usize> = self.g.prods_of(a).filter(|&p| self.resid[p] > 0).collect();
            prods.sort_by_key(|&p| (-self.resid[p], p));
            for p in prods {
                let leaf = self.form[pos];
                let rhs = self.g.productions[p].rhs.clone();
                let first = self.nodes.len();
                for &s in &rhs {
                    self.nodes.push(Node { sym: s, prod: None, children: Vec::new() });
                }
                let kids: Vec<usize> = (first..first + rhs.len()).collect();
                self.nodes[leaf].prod = Some(p);
                self.nodes[leaf].children = kids.clone();
                self.form.splice(pos..pos + 1, kids.iter().copied());
                self.resid[p] -= 1;
                if self.feasible() && self.solve()? {
                    return Ok(true);
                }
                self.resid[p] += 1;
                self.form.splice(pos..pos + kids.len(), [leaf]);
                self.nodes[leaf].prod = None;
                self.nodes[leaf].children.clear();
                self.nodes.truncate(first);
            }
        }
        Ok(false)
    }

    fn tree(&self, id: usize) -> ParseTree {
        let n = &self.nodes[id];
        match (n.sym, n.prod) {
            (Sym::N(a), Some(p)) => ParseTree::Node {
                nt: a,
                prod: p,
                children: n.children.iter().map(|&c| self.tree(c)).collect(),
            },
            (s, _) => ParseTree::Leaf(s),
        }
    }
}

fn check_vector(g: &Grammar, v: &[i64]) -> Result<()> {
    if v.len() != g.num_prods() {
        return structural(format!(
            "vector has {} entries for {} productions",
            v.len(),
            g.num_prods()
        ));
    }
    if let Some(p) = v.iter().position(|&x| x < 1) {
        return contract(format!("v ≥ 1 violated at production {}", g.prod_string(p)));
    }
    if !g.all_useful() {
        return contract("grammar has useless nonterminals");
    }
    Ok(())
}

/// Searches a derivation from `root` using each production `v[p]` times.
pub fn realize_from(g: &Grammar, root: usize, v: &[i64]) -> Result<ParseTree> {
    if v.len() != g.num_prods() || v.iter().any(|&x| x < 0) {
        return structural("production vector malformed");
    }
    let eff = g.eff_n(v);
    for (a, &e) in eff.iter().enumerate() {
        let have = e + i64::from(a == root);
        if have < 0 {
            return contract(format!(
                "eff_N·v ≥ −1_{0} violated at {1}: {2}",
                g.nonterminals[root], g.nonterminals[a], e
            ));
        }
    }
    let mut s = Search {
        g,
        resid: v.to_vec(),
        nodes: vec![Node { sym: Sym::N(root), prod: None, children: Vec::new() }],
        form: vec![0],
        expansions: 0,
    };
    if !s.feasible() {
        return contract("some budgeted production is unreachable from the root");
    }
    if !s.solve()? {
        return contract("no derivation realizes the production vector");
    }
    Ok(s.tree(0))
}

/// A derivation `S →σ α` with `Parikh_P(σ) = v`.
pub fn realize(g: &Grammar, v: &[i64]) -> Result<ParseTree> {
    check_vector(g, v)?;
    realize_from(g, g.start, v)
}

/// A derivation `A →σ w1.A.w2` with terminal `w1, w2` and `Parikh_P(σ) = v`.
pub fn hom_realize_from(g: &Grammar, a: usize, v: &[i64]) -> Result<ParseTree> {
    check_vector(g, v)?;
    if let Some(b) = g.eff_n(v).iter().position(|&e| e != 0) {
        return contract(format!("eff_N·v = 0 violated at {}", g.nonterminals[b]));
    }
    let t = realize_from(g, a, v)?;
    debug_assert_eq!(
        t.yield_word().iter().filter(|s| matches!(s, Sym::N(_))).count(),
        1
    );
    Ok(t)
}

pub fn hom_realize(g: &Grammar, v: &[i64]) -> Result<ParseTree> {
    hom_realize_from(g, g.start, v)
}

/// Checks `Parikh_N(α) = 1_S + eff_N·Parikh_P(σ)` and `Parikh_T(α) = eff_T·Parikh_P(σ)`
/// after confirming that `σ` applies to `S`.
pub fn check_converse(g: &Grammar, sigma: &Derivation, alpha: &[Sym]) -> Result<bool> {
    sigma.apply(g, &[Sym::N(g.start)])?;
    let v = sigma.parikh(g.num_prods());
    let mut want_n = g.eff_n(&v);
    want_n[g.start] += 1;
    let want_t = g.eff_t(&v);
    Ok(parikh(alpha, &g.nonterminal_syms()) == want_n && parikh(alpha, &g.terminal_syms()) == want_t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::Production;

    fn ss_a() -> Grammar {
        Grammar::new(
            vec!["S".into()],
            vec!["a".into()],
            0,
            vec![
                Production { lhs: 0, rhs: vec![Sym::N(0), Sym::N(0)] },
                Production { lhs: 0, rhs: vec![Sym::T(0)] },
            ],
        )
        .unwrap()
    }

    #[test]
    fn realize_examples() {
        let g = ss_a();
        let t = realize(&g, &[1, 2]).unwrap();
        assert_eq!(t.yield_word(), vec![Sym::T(0); 2]);
        assert_eq!(t.prod_counts(2), vec![1, 2]);
        assert!(realize(&g, &[0, 1]).is_err());
        let t = realize(&g, &[2, 3]).unwrap();
        assert_eq!(t.yield_word(), vec![Sym::T(0); 3]);
        let d = t.derivation();
        assert!(check_converse(&g, &d, &t.yield_word()).unwrap());
        let mut bad = t.yield_word();
        bad.push(Sym::T(0));
        assert!(!check_converse(&g, &d, &bad).unwrap());
        assert!(check_converse(&g, &Derivation::default(), &[Sym::N(0)]).unwrap());
    }

    #[test]
    fn hom_examples() {
        let g = ss_a();
        let t = hom_realize(&g, &[1, 1]).unwrap();
        let y = t.yield_word();
        assert_eq!(y.iter().filter(|s| **s == Sym::N(0)).count(), 1);
        assert_eq!(y.len(), 2);
        let t = hom_realize(&g, &[2, 2]).unwrap();
        assert_eq!(t.yield_word().len(), 3);
        assert!(hom_realize(&g, &[1, 2]).is_err());
    }

    #[test]
    fn eek_rows() {
        let g = ss_a();
        let s = eek_system(&g, Flavor::Standard, true);
        assert!(s.satisfied_by(&[1, 2, 2]));
        assert!(!s.satisfied_by(&[1, 1, 1]));
        let h = eek_system(&g, Flavor::Homogeneous, false);
        assert!(h.satisfied_by(&[3, 3]));
    }
}
