//! Ranks. Everything is computed per strongly connected component of a
//! grammar; a child terminal stands for the component of its start symbol.
//! For a strong NGVAS the grammar is a single component.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_traits::Zero;

use crate::error::{contract, Result};
use crate::grammar::{Shape, Sym};
use crate::ngvas::Ngvas;
use crate::numerics::linalg::{kernel_basis, rref};
use crate::numerics::{support, Bound, LinearIntSystem, Rational};
use crate::vas::Vector;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleSpace {
    pub dim: usize,
    pub basis: Vec<Vec<Rational>>,
}

/// `rank(N) = (recrank, itrank)`, compared lexicographically in field order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RankTuple {
    /// Number of constrained counters, `d − |Un|`.
    pub constrained: usize,
    pub srank: Vec<u64>,
    pub index: u64,
    pub itrank: Vec<u64>,
}

impl RankTuple {
    pub fn recrank(&self) -> (usize, &[u64], u64) {
        (self.constrained, &self.srank, self.index)
    }
}

impl fmt::Display for RankTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = |x: &[u64]| x.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        write!(
            f,
            "(({}, ({}), {}), ({}))",
            self.constrained,
            v(&self.srank),
            self.index,
            v(&self.itrank)
        )
    }
}

/// A component: an NGVAS and a set of its nonterminals.
#[derive(Clone)]
struct Comp<'a> {
    n: &'a Ngvas,
    scc: BTreeSet<usize>,
}

impl<'a> Comp<'a> {
    fn of(n: &'a Ngvas, a: usize) -> Self {
        let scc = n.grammar.scc_of(a).unwrap_or_else(|_| BTreeSet::from([a]));
        Comp { n, scc }
    }

    fn key(&self) -> (usize, usize) {
        (self.n as *const Ngvas as usize, *self.scc.first().expect("nonempty component"))
    }

    fn label(&self) -> String {
        let a = if self.scc.contains(&self.n.grammar.start) {
            self.n.grammar.start
        } else {
            *self.scc.first().unwrap()
        };
        format!("{}:{}", self.n.name, self.n.grammar.nonterminals[a])
    }

    fn shape(&self) -> Shape {
        self.n.grammar.shape_of(&self.scc)
    }

    fn prods(&self) -> Vec<usize> {
        let g = &self.n.grammar;
        (0..g.num_prods()).filter(|&p| self.scc.contains(&g.productions[p].lhs)).collect()
    }

    fn persistent(&self, p: usize) -> bool {
        self.n.grammar.productions[p]
            .rhs
            .iter()
            .any(|s| s.nonterminal().is_some_and(|b| self.scc.contains(&b)))
    }

    fn sym_comp(&self, s: Sym) -> Option<Comp<'a>> {
        match s {
            Sym::N(b) if !self.scc.contains(&b) => Some(Comp::of(self.n, b)),
            Sym::N(_) => None,
            Sym::T(t) => self.n.child(t).map(|c| Comp::of(c, c.grammar.start)),
        }
    }

    fn dedup(v: Vec<Comp<'a>>) -> Vec<Comp<'a>> {
        let mut seen = BTreeSet::new();
        v.into_iter().filter(|c| seen.insert(c.key())).collect()
    }

    /// Components called by any production of this one.
    fn calls(&self) -> Vec<Comp<'a>> {
        let g = &self.n.grammar;
        let v = self
            .prods()
            .into_iter()
            .flat_map(|p| g.productions[p].rhs.clone())
            .filter_map(|s| self.sym_comp(s))
            .collect();
        Self::dedup(v)
    }

    /// Components produced by persistent productions.
    fn recurring(&self) -> Vec<Comp<'a>> {
        let g = &self.n.grammar;
        let v = self
            .prods()
            .into_iter()
            .filter(|&p| self.persistent(p))
            .flat_map(|p| g.productions[p].rhs.clone())
            .filter_map(|s| self.sym_comp(s))
            .collect();
        Self::dedup(v)
    }

    /// Exit productions with two symbols, as component pairs.
    fn exit_pairs(&self) -> Vec<(Comp<'a>, Comp<'a>)> {
        let g = &self.n.grammar;
        self.prods()
            .into_iter()
            .filter(|&p| !self.persistent(p) && g.productions[p].rhs.len() == 2)
            .filter_map(|p| {
                let r = &g.productions[p].rhs;
                Some((self.sym_comp(r[0])?, self.sym_comp(r[1])?))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Side {
    Whole,
    Left,
    Right,
}

/// Relaxed cycle system of a component: homogeneous production balance on
/// the component and on every lower nonterminal reachable from the cycles.
struct CycleSystem {
    sys: LinearIntSystem,
    /// `(variable, side, effect vector)` contributions.
    effects: Vec<(usize, Side, Vector)>,
    /// `(variable, side, child terminal)` occurrences of children.
    child_uses: Vec<(usize, Side, usize)>,
}

fn sym_value(n: &Ngvas, t: usize) -> Vector {
    match n.update(t) {
        Some(u) => u.clone(),
        None => n.child(t).expect("child").restriction.base.clone(),
    }
}

fn cycle_system(c: &Comp<'_>) -> CycleSystem {
    let n = c.n;
    let g = &n.grammar;
    let linear = c.shape() == Shape::Linear;
    let sides: Vec<Side> = if linear { vec![Side::Left, Side::Right] } else { vec![Side::Whole] };
    let own = c.prods();
    // Lower nonterminals seeded from productions that can occur inside cycles.
    let mut seeds: BTreeMap<Side, BTreeSet<usize>> = BTreeMap::new();
    let side_of = |p: usize, pos: usize| -> Side {
        if !linear {
            return Side::Whole;
        }
        let rhs = &g.productions[p].rhs;
        let k = rhs.iter().position(|s| s.nonterminal().is_some_and(|b| c.scc.contains(&b)));
        match k {
            Some(k) if pos < k => Side::Left,
            _ => Side::Right,
        }
    };
    for &p in &own {
        if linear && !c.persistent(p) {
            continue;
        }
        for (pos, s) in g.productions[p].rhs.iter().enumerate() {
            if let Sym::N(b) = *s {
                if !c.scc.contains(&b) {
                    seeds.entry(side_of(p, pos)).or_default().insert(b);
                }
            }
        }
    }
    let mut sys = LinearIntSystem::new();
    let mut effects = Vec::new();
    let mut child_uses = Vec::new();
    let mut xp: BTreeMap<usize, usize> = BTreeMap::new();
    for &p in &own {
        let v = sys.add_var(format!("x_P[{}]", p + 1), Bound::NAT);
        xp.insert(p, v);
        for (pos, s) in g.productions[p].rhs.iter().enumerate() {
            if let Sym::T(t) = *s {
                let side = side_of(p, pos);
                effects.push((v, side, sym_value(n, t)));
                if n.child(t).is_some() {
                    child_uses.push((v, side, t));
                }
            }
        }
    }
    for &a in &c.scc {
        let row: Vec<(usize, i64)> = own
            .iter()
            .map(|&p| {
                let pr = &g.productions[p];
                let e = pr.rhs.iter().filter(|s| **s == Sym::N(a)).count() as i64 - i64::from(pr.lhs == a);
                (xp[&p], e)
            })
            .filter(|&(_, e)| e != 0)
            .collect();
        sys.add_row(&row, 0);
    }
    for side in sides {
        let Some(seed) = seeds.get(&side) else { continue };
        let mut lower: BTreeSet<usize> = BTreeSet::new();
        for &b in seed {
            lower.extend(g.reachable_from(b));
        }
        let lprods: Vec<usize> = (0..g.num_prods()).filter(|p| lower.contains(&g.productions[*p].lhs)).collect();
        let mut lv: BTreeMap<usize, usize> = BTreeMap::new();
        for &q in &lprods {
            let v = sys.add_var(format!("x_P{:?}[{}]", side, q + 1), Bound::NAT);
            lv.insert(q, v);
            for s in &g.productions[q].rhs {
                if let Sym::T(t) = *s {
                    effects.push((v, side, sym_value(n, t)));
                    if n.child(t).is_some() {
                        child_uses.push((v, side, t));
                    }
                }
            }
        }
        for &b in &lower {
            let mut row: Vec<(usize, i64)> = Vec::new();
            for &p in &own {
                if linear && !c.persistent(p) {
                    continue;
                }
                let k = g.productions[p]
                    .rhs
                    .iter()
                    .enumerate()
                    .filter(|(pos, s)| **s == Sym::N(b) && side_of(p, *pos) == side)
                    .count() as i64;
                if k != 0 {
                    row.push((xp[&p], k));
                }
            }
            for &q in &lprods {
                let pr = &g.productions[q];
                let e = pr.rhs.iter().filter(|s| **s == Sym::N(b)).count() as i64 - i64::from(pr.lhs == b);
                if e != 0 {
                    row.push((lv[&q], e));
                }
            }
            sys.add_row(&row, 0);
        }
    }
    CycleSystem { sys, effects, child_uses }
}

fn rat(x: i64) -> Rational {
    Rational::from_integer(x.into())
}

/// Generators of the cycle space, one block of `d` coordinates per side.
fn cycle_generators(c: &Comp<'_>, sides: &[Side]) -> Result<Vec<Vec<Rational>>> {
    let n = c.n;
    let d = n.dim;
    let cs = cycle_system(c);
    let nv = cs.sys.num_vars();
    let supp = support(&cs.sys)?;
    let mut rows: Vec<Vec<Rational>> = cs
        .sys
        .rows
        .iter()
        .map(|r| {
            let mut row: Vec<Rational> = r.coeffs.iter().map(|&k| rat(k)).collect();
            row.resize(nv, Rational::zero());
            row
        })
        .collect();
    for v in 0..nv {
        if !supp.contains(&v) {
            let mut row = vec![Rational::zero(); nv];
            row[v] = rat(1);
            rows.push(row);
        }
    }
    let block = |s: Side| sides.iter().position(|&x| x == s);
    let width = d * sides.len();
    let mut gens = Vec::new();
    for k in kernel_basis(&rows, nv) {
        let mut g = vec![Rational::zero(); width];
        for (v, side, eff) in &cs.effects {
            if k[*v].is_zero() {
                continue;
            }
            if let Some(b) = block(*side) {
                for i in 0..d {
                    g[b * d + i] += &k[*v] * rat(eff[i]);
                }
            }
        }
        gens.push(g);
    }
    let mut used: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (v, side, t) in &cs.child_uses {
        if supp.contains(v) {
            if let Some(b) = block(*side) {
                used.insert((b, *t));
            }
        }
    }
    for (b, t) in used {
        for p in &n.child(t).expect("child").restriction.periods {
            let mut g = vec![Rational::zero(); width];
            for i in 0..d {
                g[b * d + i] = rat(p[i]);
            }
            gens.push(g);
        }
    }
    Ok(gens)
}

fn span(gens: &[Vec<Rational>]) -> CycleSpace {
    let (basis, _) = rref(gens);
    CycleSpace { dim: basis.len(), basis }
}

fn comp_left_space(c: &Comp<'_>) -> Result<CycleSpace> {
    if c.shape() == Shape::Linear {
        let d = c.n.dim;
        let gens = cycle_generators(c, &[Side::Left, Side::Right])?;
        let left: Vec<Vec<Rational>> = gens.into_iter().map(|g| g[..d].to_vec()).collect();
        Ok(span(&left))
    } else {
        Ok(span(&cycle_generators(c, &[Side::Whole])?))
    }
}

fn comp_full_space(c: &Comp<'_>) -> Result<CycleSpace> {
    if c.shape() != Shape::Linear {
        return contract("the full cycle space is tracked for linear components only");
    }
    Ok(span(&cycle_generators(c, &[Side::Left, Side::Right])?))
}

fn start(n: &Ngvas) -> Comp<'_> {
    Comp::of(n, n.grammar.start)
}

/// Span of the left effects of cycles through the start component. For a
/// non-linear component whole-cycle effects are used; left and right
/// effects span the same space there.
pub fn left_cycle_space(n: &Ngvas) -> Result<CycleSpace> {
    comp_left_space(&start(n))
}

/// Span of `(left, right)` cycle effects in `Q^{2d}`; linear components only.
pub fn full_cycle_space(n: &Ngvas) -> Result<CycleSpace> {
    comp_full_space(&start(n))
}

#[derive(Debug, Clone)]
struct Info {
    lrank: Vec<u64>,
    linlrank: Vec<u64>,
    srank: Vec<u64>,
    index: u64,
    itrank: Vec<u64>,
    /// Next component on the main branch.
    next: Option<(usize, usize)>,
    label: String,
}

fn add(a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[derive(Default)]
struct Ranker {
    memo: RefCell<HashMap<(usize, usize), Info>>,
}

impl Ranker {
    fn info(&self, c: &Comp<'_>) -> Result<Info> {
        if let Some(i) = self.memo.borrow().get(&c.key()) {
            return Ok(i.clone());
        }
        let d = c.n.dim;
        let size = c.scc.len() as u64;
        let linear = c.shape() == Shape::Linear;
        let mut lrank = vec![0u64; d + 1];
        let mut linlrank = vec![0u64; 2 * d + 1];
        if linear {
            linlrank[2 * d - comp_full_space(c)?.dim] = size;
        } else {
            lrank[d - comp_left_space(c)?.dim] = size;
        }
        let calls = c.calls();
        let mut infos = Vec::new();
        for k in &calls {
            infos.push((k.key(), self.info(k)?));
        }
        let below = infos.iter().map(|(_, i)| i.srank.clone()).max().unwrap_or(vec![0; d + 1]);
        let srank = add(&lrank, &below);
        let index = if linear {
            let same = |i: &Info| i.srank == srank;
            let mut idx = 1;
            for (_, i) in &infos {
                if same(i) {
                    idx = idx.max(i.index);
                }
            }
            for k in c.recurring() {
                let i = self.info(&k)?;
                if same(&i) {
                    idx = idx.max(i.index + 1);
                }
            }
            for (l, r) in c.exit_pairs() {
                let (il, ir) = (self.info(&l)?, self.info(&r)?);
                if same(&il) && same(&ir) && il.index == ir.index {
                    idx = idx.max(il.index + 1);
                }
            }
            idx
        } else {
            0
        };
        let mut best: Option<((usize, usize), Vec<u64>)> = None;
        for (k, i) in &infos {
            if i.srank == srank && i.index == index && best.as_ref().is_none_or(|(_, b)| i.itrank > *b) {
                best = Some((*k, i.itrank.clone()));
            }
        }
        let itrank = match &best {
            Some((_, b)) => add(&linlrank, b),
            None => linlrank.clone(),
        };
        let info = Info {
            lrank,
            linlrank,
            srank,
            index,
            itrank,
            next: best.map(|(k, _)| k),
            label: c.label(),
        };
        self.memo.borrow_mut().insert(c.key(), info.clone());
        Ok(info)
    }
}

/// `1_{d−dim}·|N|` for a non-linear start component, zero for a linear one.
/// Slot 0 is the most significant.
pub fn local_rank(n: &Ngvas) -> Result<Vec<u64>> {
    Ok(Ranker::default().info(&start(n))?.lrank)
}

/// Linear local rank `1_{2d−dim}·|N|` over the full cycle space.
pub fn linear_local_rank(n: &Ngvas) -> Result<Vec<u64>> {
    Ok(Ranker::default().info(&start(n))?.linlrank)
}

/// Maximum over branches of summed local ranks.
pub fn system_rank(n: &Ngvas) -> Result<Vec<u64>> {
    Ok(Ranker::default().info(&start(n))?.srank)
}

pub fn local_index(n: &Ngvas) -> Result<u64> {
    Ok(Ranker::default().info(&start(n))?.index)
}

/// Labels `ngvas:nonterminal` of the components on the main branch. Among
/// several main branches the one of largest linear rank is taken.
pub fn main_branch(n: &Ngvas) -> Result<Vec<String>> {
    let r = Ranker::default();
    let top = r.info(&start(n))?;
    let mut out = vec![top.label.clone()];
    let mut cur = top.next;
    while let Some(k) = cur {
        let i = r.memo.borrow()[&k].clone();
        out.push(i.label);
        cur = i.next;
    }
    Ok(out)
}

/// Linear branch rank of the main branch.
pub fn linear_rank(n: &Ngvas) -> Result<Vec<u64>> {
    Ok(Ranker::default().info(&start(n))?.itrank)
}

pub fn rank(n: &Ngvas) -> Result<RankTuple> {
    let i = Ranker::default().info(&start(n))?;
    Ok(RankTuple {
        constrained: n.dim - n.un.len(),
        srank: i.srank,
        index: i.index,
        itrank: i.itrank,
    })
}

/// Rank of a set: its maximum.
pub fn rank_of_set(ns: &[Ngvas]) -> Result<Option<RankTuple>> {
    let mut best = None;
    for n in ns {
        let r = rank(n)?;
        if best.as_ref().is_none_or(|b| r > *b) {
            best = Some(r);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{Grammar, Production};
    use crate::ngvas::Payload;
    use crate::vas::GMarking;

    fn gr(nts: &[&str], ts: &[&str], prods: &[(usize, &[Sym])]) -> Grammar {
        Grammar::new(
            nts.iter().map(|s| s.to_string()).collect(),
            ts.iter().map(|s| s.to_string()).collect(),
            0,
            prods.iter().map(|(l, r)| Production { lhs: *l, rhs: r.to_vec() }).collect(),
        )
        .unwrap()
    }

    fn nl(name: &str, nt: &str, ups: Vec<Vector>) -> Ngvas {
        let ts: Vec<String> = (0..ups.len()).map(|i| format!("{name}{i}")).collect();
        let ts: Vec<&str> = ts.iter().map(String::as_str).collect();
        let mut prods: Vec<(usize, Vec<Sym>)> = vec![(0, vec![Sym::N(0), Sym::N(0)])];
        prods.extend((0..ups.len()).map(|t| (0, vec![Sym::T(t)])));
        let prods: Vec<(usize, &[Sym])> = prods.iter().map(|(l, r)| (*l, r.as_slice())).collect();
        let d = ups[0].len();
        Ngvas::depth0(name, gr(&[nt], &ts, &prods), ups, GMarking::zero(d), GMarking::zero(d))
    }

    #[test]
    fn cycle_spaces() {
        let t = nl("t", "S", vec![vec![1], vec![-1]]);
        assert_eq!(left_cycle_space(&t).unwrap().dim, 1);
        assert_eq!(local_rank(&t).unwrap(), vec![1, 0]);
        let z = nl("z", "S", vec![vec![0]]);
        assert_eq!(left_cycle_space(&z).unwrap().dim, 0);
        assert_eq!(local_rank(&z).unwrap(), vec![0, 1]);
        let p = nl("p", "S", vec![vec![1, 2], vec![2, 4]]);
        assert_eq!(left_cycle_space(&p).unwrap().dim, 1);
        let two = Ngvas::depth0(
            "two",
            gr(
                &["S", "A"],
                &["u", "w"],
                &[(0, &[Sym::N(0), Sym::N(1)]), (0, &[Sym::T(0)]), (1, &[Sym::N(0), Sym::N(0)]), (1, &[Sym::T(1)])],
            ),
            vec![vec![1], vec![-1]],
            GMarking::zero(1),
            GMarking::zero(1),
        );
        assert_eq!(local_rank(&two).unwrap(), vec![2, 0]);
    }

    #[test]
    fn linear_ranks() {
        let n = Ngvas::depth0(
            "lin",
            gr(&["S"], &["u", "a"], &[(0, &[Sym::T(0), Sym::N(0)]), (0, &[Sym::T(1)])]),
            vec![vec![1], vec![-1]],
            GMarking::zero(1),
            GMarking::zero(1),
        );
        assert_eq!(local_rank(&n).unwrap(), vec![0, 0]);
        assert_eq!(full_cycle_space(&n).unwrap().dim, 1);
        assert_eq!(left_cycle_space(&n).unwrap().dim, 1);
        assert_eq!(linear_rank(&n).unwrap(), vec![0, 1, 0]);
        assert_eq!(local_index(&n).unwrap(), 1);
        assert_eq!(main_branch(&n).unwrap(), vec!["lin:S".to_string()]);
    }

    #[test]
    fn rank_laws() {
        let mut child = nl("c", "C", vec![vec![1], vec![-1]]);
        child.cin = GMarking::omega(1);
        child.cout = GMarking::omega(1);
        child.un = BTreeSet::from([0]);
        let mut parent = nl("p", "P", vec![vec![1], vec![-1]]);
        parent.grammar.terminals.push("K".into());
        parent.grammar.productions.push(Production { lhs: 0, rhs: vec![Sym::T(2)] });
        parent.payloads.push(Payload::Child(Box::new(child.clone())));
        assert!(crate::ngvas::validate(&parent).is_empty(), "{:?}", crate::ngvas::validate(&parent));
        let rp = rank(&parent).unwrap();
        let rc = rank(&child).unwrap();
        assert!(rc < rp, "{rc} vs {rp}");
        assert_eq!(rp.srank, vec![2, 0]);
        let mut narrow = child.clone();
        narrow.un = BTreeSet::new();
        assert!(rc < rank(&narrow).unwrap());
    }
}
