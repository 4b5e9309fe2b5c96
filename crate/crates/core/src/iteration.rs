//! Iteration for perfect non-linear NGVAS of depth 0.
//!
//! Given `b'` in the restriction and period multiplicities `e ≥ 1`, the plan
//! produces for every `k ≥ k0` a run from `cin` to `cout` (on tracked
//! counters) with effect `b' + k·P·e`. The run is read off a single derivation
//! tree:
//!
//! ```text
//! pump^J ( W(v, j1) ( W(v', j2) ( ρ ) ) )
//! ```
//!
//! where the pump `S → up S dwn` raises every tracked counter on entry and
//! lowers it on exit, `W(v, j)` is the wide tree of `j` copies of the
//! difference vector `v = c·h − Parikh(pump)`, and `ρ` realizes `s + h`.
//! Counting productions gives `J·pump + j1·v + j2·v' + s + h = s + k·h`.

use std::collections::BTreeSet;

use crate::chareq::{build_char, build_hom_char};
use crate::eek::{hom_realize, realize};
use crate::error::{contract, Error, Result};
use crate::grammar::{Grammar, ParseTree, Shape, Sym};
use crate::ngvas::{Ngvas, Payload};
use crate::numerics::{ilp_feasible, Bound};
use crate::perfectness::{check_conditions, ILP_BUDGET};
use crate::vas::{effect, hurdle, reverse, Marking, Nw, Run, Vector};
use crate::widetree::{build_wide_tree, log_factor};

/// Bound handed to the perfectness check that guards `plan`.
pub const PLAN_BOUND: usize = 6;
/// Longest spine tried for the pump.
pub const MAX_SPINE: usize = 4;
/// Terminal trees kept per nonterminal for off-spine positions.
pub const TREES_PER_NT: usize = 6;
/// Cap on pump candidates examined.
pub const MAX_PUMP_CANDIDATES: usize = 20_000;

/// `S → up S dwn` with terminal `up` and `dwn`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pump {
    pub tree: ParseTree,
    pub up: Vec<usize>,
    pub down: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationPlan {
    pub name: String,
    pub grammar: Grammar,
    /// Update per terminal.
    pub updates: Vec<Vector>,
    pub bprime: Vec<i64>,
    pub e: Vec<i64>,
    /// Counters concrete in both contexts.
    pub tracked: BTreeSet<usize>,
    /// Counters ω in both contexts.
    pub free: BTreeSet<usize>,
    pub cin: Marking,
    pub cout: Marking,
    /// Production vector of a solution of `Char` with effect `b'`.
    pub s: Vec<i64>,
    /// Production vector of a full homogeneous solution with `y = e`.
    pub h: Vec<i64>,
    pub pump: Pump,
    pub c: usize,
    pub cmax: usize,
    /// `c·h − Parikh(pump)` and `(c+1)·h − Parikh(pump)`.
    pub diff: [Vec<i64>; 2],
    pub diff_trees: [ParseTree; 2],
    /// Realizes `s + cmax·h`.
    pub reach: ParseTree,
    /// Largest deficit of `ρ` against the contexts on tracked counters.
    pub gap: i64,
    /// Largest one-sided drift one copy of `v'` can cause on a tracked counter.
    pub spread: i64,
    pub k0: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Iterate {
    pub k: usize,
    pub j1: usize,
    pub j2: usize,
    pub tree: ParseTree,
    pub source: Marking,
    pub run: Run,
    pub target: Marking,
    /// Index of the first letter of `ρ` in `run`.
    pub rho_at: usize,
    /// Whether `run` fires from `source` to `target`.
    pub enabled: bool,
}

/// `(j1, j2)` with `j1·c + j2·(c+1) = k − cmax` and `j2 < c`; `None` below `c² − c + cmax`.
pub fn copies(k: usize, c: usize, cmax: usize) -> Option<(usize, usize)> {
    let kp = k.checked_sub(cmax)?;
    let j2 = kp.checked_rem(c)?;
    let j1 = kp.checked_sub(j2 * (c + 1))? / c;
    Some((j1, j2))
}

fn condition(j: usize, gap: i64, spread: i64) -> bool {
    j as i64 >= gap + 2 * log_factor(j) as i64 * spread
}

/// Least `k ≥ c² + cmax` from which the copy count `J = ⌊(k − cmax)/c⌋`
/// satisfies `J ≥ gap + 2·⌈1 + log2 J⌉·spread` for good.
pub fn threshold(c: usize, cmax: usize, gap: i64, spread: i64) -> usize {
    let holds_from = |j: usize| -> bool {
        if !condition(j, gap, spread) {
            return false;
        }
        // J − 2·L(J)·spread only dips right after a power of two.
        (0..63).map(|m| (1usize << m) + 1).filter(|&p| p > j).all(|p| condition(p, gap, spread))
    };
    let mut k = c * c + cmax;
    loop {
        let j = (k - cmax) / c;
        if j >= 1 && holds_from(j) {
            return k;
        }
        k += 1;
    }
}

pub fn k0_of(plan: &IterationPlan) -> usize {
    threshold(plan.c, plan.cmax, plan.gap, plan.spread)
}

/// Builds the iteration plan. `n` must be strong, of depth 0, non-linear and
/// perfect up to `PLAN_BOUND`.
pub fn plan(n: &Ngvas, bprime: &[i64], e: &[i64]) -> Result<IterationPlan> {
    let d = n.dim;
    if n.depth() != 0 {
        return contract("iteration is implemented for depth 0 only");
    }
    if n.shape() != Shape::NonLinear {
        return contract("iteration needs a non-linear grammar");
    }
    if bprime.len() != d {
        return contract("b' has the wrong dimension");
    }
    if e.len() != n.restriction.periods.len() || e.iter().any(|&x| x < 1) {
        return contract("e needs one positive entry per period");
    }
    if !n.restriction.contains(bprime)? {
        return contract("b' is not in the restriction");
    }
    let report = check_conditions(n, PLAN_BOUND)?;
    if !report.all_hold() {
        let bad: Vec<String> = report
            .verdicts
            .iter()
            .filter(|(_, v)| !v.holds())
            .map(|(c, v)| format!("{} {v}", c.name()))
            .collect();
        return contract(format!("{} is not perfect: {}", n.name, bad.join(", ")));
    }
    let mut tracked = BTreeSet::new();
    let mut free = BTreeSet::new();
    let (mut cin, mut cout) = (vec![0; d], vec![0; d]);
    for i in 0..d {
        match (n.cin.0[i], n.cout.0[i]) {
            (Nw::Fin(a), Nw::Fin(b)) => {
                tracked.insert(i);
                cin[i] = a;
                cout[i] = b;
            }
            (Nw::Omega, Nw::Omega) => {
                free.insert(i);
            }
            _ => return contract(format!("counter {} is concrete on one side only", i + 1)),
        }
    }
    let g = &n.grammar;
    let updates: Vec<Vector> = n
        .payloads
        .iter()
        .map(|p| match p {
            Payload::Update(u) => u.clone(),
            Payload::Child(_) => unreachable!("depth 0"),
        })
        .collect();
    let nprods = g.num_prods();

    let mut cs = build_char(n)?;
    for i in 0..d {
        let row: Vec<(usize, i64)> = cs.x_u.iter().enumerate().map(|(u, &v)| (v, cs.updates[u][i])).collect();
        cs.system.add_row(&row, bprime[i]);
    }
    let sol = ilp_feasible(&cs.system, ILP_BUDGET)?
        .ok_or_else(|| Error::Contract("Char has no solution with effect b'".into()))?;
    let s: Vec<i64> = cs.x_p.iter().map(|v| sol[v.expect("non-linear")]).collect();

    let mut hc = build_hom_char(n)?;
    for (j, &y) in hc.y.iter().enumerate() {
        hc.system.fix(y, e[j]);
    }
    for v in hc.x_p.iter().flatten() {
        hc.system.bounds[*v] = Bound::POS;
    }
    let hsol = ilp_feasible(&hc.system, ILP_BUDGET)?
        .ok_or_else(|| Error::Contract("no full homogeneous solution with period multiplicities e".into()))?;
    let h: Vec<i64> = hc.x_p.iter().map(|v| hsol[v.expect("non-linear")]).collect();

    let pump = find_pump(g, &updates, &tracked, &cin, &cout)?
        .ok_or_else(|| Error::Contract(format!("no pump derivation within spine length {MAX_SPINE}")))?;
    let pp = pump.tree.prod_counts(nprods);
    let c = (1..)
        .find(|&c: &i64| (0..nprods).all(|p| c * h[p] - pp[p] >= 1))
        .expect("h ≥ 1") as usize;
    let cmax = 1;
    let v: Vec<i64> = (0..nprods).map(|p| c as i64 * h[p] - pp[p]).collect();
    let v2: Vec<i64> = (0..nprods).map(|p| v[p] + h[p]).collect();
    let diff_trees = [hom_realize(g, &v)?, hom_realize(g, &v2)?];
    let sp: Vec<i64> = (0..nprods).map(|p| s[p] + cmax as i64 * h[p]).collect();
    let reach = realize(g, &sp)?;

    let rho = word_run(&reach, &updates)?;
    let (hf, hb) = (hurdle(&rho, d), hurdle(&reverse(&rho), d));
    let gap = tracked
        .iter()
        .map(|&i| (hf[i] - cin[i]).max(hb[i] - cout[i]).max(0))
        .max()
        .unwrap_or(0);
    let terms = g.eff_t(&v2);
    let spread = tracked
        .iter()
        .map(|&i| {
            let (mut neg, mut pos) = (0, 0);
            for (t, &cnt) in terms.iter().enumerate() {
                neg += cnt * (-updates[t][i]).max(0);
                pos += cnt * updates[t][i].max(0);
            }
            neg.max(pos)
        })
        .max()
        .unwrap_or(0);
    let k0 = threshold(c, cmax, gap, spread);
    Ok(IterationPlan {
        name: n.name.clone(),
        grammar: g.clone(),
        updates,
        bprime: bprime.to_vec(),
        e: e.to_vec(),
        tracked,
        free,
        cin,
        cout,
        s,
        h,
        pump,
        c,
        cmax,
        diff: [v, v2],
        diff_trees,
        reach,
        gap,
        spread,
        k0,
    })
}

/// `plan` followed by `IterationPlan::iterate`.
pub fn synthesize(n: &Ngvas, bprime: &[i64], e: &[i64], k: usize) -> Result<Iterate> {
    plan(n, bprime, e)?.iterate(k)
}

impl IterationPlan {
    /// Expected effect `b' + k·P·e`, computed from `s + k·h`.
    pub fn expected_effect(&self, k: usize) -> Vector {
        let d = self.cin.len();
        let prods: Vec<i64> = self.s.iter().zip(&self.h).map(|(a, b)| a + k as i64 * b).collect();
        let terms = self.grammar.eff_t(&prods);
        let mut out = vec![0; d];
        for (t, &cnt) in terms.iter().enumerate() {
            for i in 0..d {
                out[i] += cnt * self.updates[t][i];
            }
        }
        out
    }

    /// Assembles the candidate for `k` without requiring `k ≥ k0`.
    pub fn assemble(&self, k: usize) -> Result<Iterate> {
        let d = self.cin.len();
        let Some((j1, j2)) = copies(k, self.c, self.cmax) else {
            return contract(format!("k = {k} has no representation with c = {}", self.c));
        };
        let mut inner = self.reach.clone();
        let mut rho_at = self.pump.up.len() * (j1 + j2);
        for (j, v) in [(j2, &self.diff[1]), (j1, &self.diff[0])] {
            if j > 0 {
                let w = build_wide_tree(&self.grammar, v, j)?;
                rho_at += w.tree.yield_word().iter().position(|s| s.nonterminal().is_some()).unwrap_or(0);
                inner = plug(w.tree, &mut Some(inner));
            }
        }
        for _ in 0..j1 + j2 {
            inner = plug(self.pump.tree.clone(), &mut Some(inner));
        }
        let run = word_run(&inner, &self.updates)?;
        let eff = effect(&run, d);
        let hu = hurdle(&run, d);
        let mut source = self.cin.clone();
        for &i in &self.free {
            source[i] = hu[i];
        }
        let target: Marking = (0..d).map(|i| source[i] + eff[i]).collect();
        let enabled = crate::vas::fire_concrete(&source, &run).as_ref() == Some(&target)
            && self.tracked.iter().all(|&i| target[i] == self.cout[i]);
        Ok(Iterate { k, j1, j2, tree: inner, source, run, target, rho_at, enabled })
    }

    /// The run for `k ≥ k0`; an error if it is not enabled.
    pub fn iterate(&self, k: usize) -> Result<Iterate> {
        if k < self.k0 {
            return contract(format!("k = {k} is below k0 = {}", self.k0));
        }
        let it = self.assemble(k)?;
        if !it.enabled {
            return contract(format!("assembled run for k = {k} is not enabled"));
        }
        Ok(it)
    }
}

/// Replaces the unique nonterminal leaf of `outer` by `inner`.
fn plug(outer: ParseTree, inner: &mut Option<ParseTree>) -> ParseTree {
    match outer {
        ParseTree::Leaf(Sym::N(_)) if inner.is_some() => inner.take().expect("checked"),
        ParseTree::Node { nt, prod, children } => ParseTree::Node {
            nt,
            prod,
            children: children.into_iter().map(|c| plug(c, inner)).collect(),
        },
        leaf => leaf,
    }
}

fn word_run(t: &ParseTree, updates: &[Vector]) -> Result<Run> {
    t.yield_word()
        .into_iter()
        .map(|s| match s {
            Sym::T(x) => Ok(updates[x].clone()),
            Sym::N(_) => contract("tree still has a nonterminal leaf"),
        })
        .collect()
}

fn terminals(word: &[Sym]) -> Vec<usize> {
    word.iter().filter_map(|s| s.terminal()).collect()
}

/// Small terminal trees per nonterminal, shortest yields first.
fn short_trees(g: &Grammar) -> Vec<Vec<ParseTree>> {
    let nn = g.nonterminals.len();
    let mut out: Vec<Vec<ParseTree>> = vec![Vec::new(); nn];
    for _ in 0..3 {
        let mut next = out.clone();
        for (p, prod) in g.productions.iter().enumerate() {
            let mut combos: Vec<Vec<ParseTree>> = vec![Vec::new()];
            for s in &prod.rhs {
                let opts: Vec<ParseTree> = match s {
                    Sym::T(_) => vec![ParseTree::Leaf(*s)],
                    Sym::N(a) => out[*a].iter().take(2).cloned().collect(),
                };
                combos = combos
                    .into_iter()
                    .flat_map(|c| {
                        opts.iter().map(move |o| {
                            let mut c = c.clone();
                            c.push(o.clone());
                            c
                        })
                    })
                    .collect();
            }
            for children in combos {
                next[prod.lhs].push(ParseTree::Node { nt: prod.lhs, prod: p, children });
            }
        }
        for list in next.iter_mut() {
            let mut seen = BTreeSet::new();
            list.retain(|t| seen.insert(t.yield_word()));
            list.sort_by_key(|t| (t.yield_len(), t.yield_word()));
            list.truncate(TREES_PER_NT);
        }
        out = next;
    }
    out
}

fn spine_paths(g: &Grammar) -> Vec<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    let mut layer: Vec<(Vec<(usize, usize)>, usize)> = vec![(Vec::new(), g.start)];
    for _ in 0..MAX_SPINE {
        let mut next = Vec::new();
        for (path, x) in &layer {
            for p in g.prods_of(*x) {
                for (pos, s) in g.productions[p].rhs.iter().enumerate() {
                    let Sym::N(y) = *s else { continue };
                    let mut p2 = path.clone();
                    p2.push((p, pos));
                    if y == g.start {
                        out.push(p2.clone());
                    }
                    next.push((p2, y));
                }
            }
        }
        layer = next;
    }
    out
}

fn spine_tree(g: &Grammar, path: &[(usize, usize)], picks: &mut impl Iterator<Item = ParseTree>) -> ParseTree {
    let Some(&(p, pos)) = path.first() else {
        return ParseTree::Leaf(Sym::N(g.start));
    };
    let prod = &g.productions[p];
    let children = prod
        .rhs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if i == pos {
                spine_tree(g, &path[1..], picks)
            } else if let Sym::N(_) = s {
                picks.next().expect("one pick per off-spine nonterminal")
            } else {
                ParseTree::Leaf(*s)
            }
        })
        .collect();
    ParseTree::Node { nt: prod.lhs, prod: p, children }
}

fn enabled_on(m: &[i64], run: &[Vector], coords: &BTreeSet<usize>) -> bool {
    let mut cur = m.to_vec();
    for u in run {
        for &i in coords {
            cur[i] += u[i];
            if cur[i] < 0 {
                return false;
            }
        }
    }
    true
}

fn find_pump(
    g: &Grammar,
    updates: &[Vector],
    tracked: &BTreeSet<usize>,
    cin: &[i64],
    cout: &[i64],
) -> Result<Option<Pump>> {
    let trees = short_trees(g);
    let d = cin.len();
    let mut examined = 0;
    for path in spine_paths(g) {
        let slots: Vec<usize> = path
            .iter()
            .flat_map(|&(p, pos)| {
                g.productions[p]
                    .rhs
                    .iter()
                    .enumerate()
                    .filter(move |(i, _)| *i != pos)
                    .filter_map(|(_, s)| s.nonterminal())
            })
            .collect();
        if slots.iter().any(|&a| trees[a].is_empty()) {
            continue;
        }
        let mut idx = vec![0usize; slots.len()];
        loop {
            examined += 1;
            if examined > MAX_PUMP_CANDIDATES {
                return Ok(None);
            }
            let mut picks = slots.iter().zip(&idx).map(|(&a, &i)| trees[a][i].clone());
            let tree = spine_tree(g, &path, &mut picks);
            let word = tree.yield_word();
            let hole = word.iter().position(|s| s.nonterminal().is_some()).expect("spine ends in S");
            let (up, down) = (terminals(&word[..hole]), terminals(&word[hole + 1..]));
            let ur: Run = up.iter().map(|&t| updates[t].clone()).collect();
            let dr: Run = down.iter().map(|&t| updates[t].clone()).collect();
            let (eu, ed) = (effect(&ur, d), effect(&dr, d));
            if enabled_on(cin, &ur, tracked)
                && enabled_on(cout, &reverse(&dr), tracked)
                && tracked.iter().all(|&i| eu[i] >= 1 && ed[i] <= -1)
            {
                return Ok(Some(Pump { tree, up, down }));
            }
            // odometer over the off-spine choices
            let mut i = 0;
            loop {
                if i == idx.len() {
                    break;
                }
                idx[i] += 1;
                if idx[i] < trees[slots[i]].len() {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
            if i == idx.len() {
                break;
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::Production;
    use crate::numerics::LinearSet;
    use crate::vas::{fire_concrete, GMarking};

    /// `S -> S S | u | w | z` with `u = +1`, `w = −1`, `z = 0`.
    pub(crate) fn pump1() -> Ngvas {
        let g = Grammar::new(
            vec!["S".into()],
            vec!["u".into(), "w".into(), "z".into()],
            0,
            vec![
                Production { lhs: 0, rhs: vec![Sym::N(0), Sym::N(0)] },
                Production { lhs: 0, rhs: vec![Sym::T(0)] },
                Production { lhs: 0, rhs: vec![Sym::T(1)] },
                Production { lhs: 0, rhs: vec![Sym::T(2)] },
            ],
        )
        .unwrap();
        let mut n = Ngvas::depth0(
            "pump1",
            g,
            vec![vec![1], vec![-1], vec![0]],
            GMarking::concrete(&[0]),
            GMarking::concrete(&[0]),
        );
        n.restriction = LinearSet::new(vec![0], vec![vec![0]]).unwrap();
        n
    }

    #[test]
    fn pump1_iterates() {
        let p = plan(&pump1(), &[0], &[1]).unwrap();
        assert!(p.k0 >= p.c * p.c + p.cmax);
        for k in p.k0..p.k0 + 6 {
            let it = p.iterate(k).unwrap();
            assert_eq!(fire_concrete(&[0], &it.run), Some(vec![0]));
            assert_eq!(effect(&it.run, 1), p.expected_effect(k));
            it.tree.check(&p.grammar).unwrap();
            let want: Vec<i64> = p.s.iter().zip(&p.h).map(|(a, b)| a + k as i64 * b).collect();
            assert_eq!(it.tree.prod_counts(4), want);
        }
    }

    #[test]
    fn pump_raises_then_lowers() {
        let p = plan(&pump1(), &[0], &[1]).unwrap();
        let up: Run = p.pump.up.iter().map(|&t| p.updates[t].clone()).collect();
        let dn: Run = p.pump.down.iter().map(|&t| p.updates[t].clone()).collect();
        assert!(effect(&up, 1)[0] >= 1 && effect(&dn, 1)[0] <= -1);
        assert!(p.diff.iter().all(|v| v.iter().all(|&x| x >= 1)));
    }

    #[test]
    fn prefix_stays_above_copy_count() {
        // Between the pumps and ρ every prefix keeps at least J − 2·L(J)·spread tokens.
        let p = plan(&pump1(), &[0], &[1]).unwrap();
        let it = p.iterate(p.k0 + 3).unwrap();
        let j = it.j1 + it.j2;
        let floor = j as i64 - 2 * log_factor(j) as i64 * p.spread;
        let start = p.pump.up.len() * j;
        let mut cur = it.source[0];
        for (i, u) in it.run.iter().enumerate().take(it.rho_at) {
            cur += u[0];
            if i + 1 >= start {
                assert!(cur >= floor, "prefix {i}: {cur} < {floor}");
            }
        }
        assert!(cur >= p.gap);
    }

    #[test]
    fn copies_reconstruct_k() {
        for c in 1..6 {
            for k in c * c + 1..c * c + 60 {
                let (j1, j2) = copies(k, c, 1).unwrap();
                assert_eq!(j1 * c + j2 * (c + 1), k - 1);
                assert!(j2 < c);
            }
        }
    }

    #[test]
    fn threshold_is_a_tail() {
        for c in 1..4 {
            for gap in 0..4 {
                for spread in 0..4 {
                    let k0 = threshold(c, 1, gap, spread);
                    assert!(k0 >= c * c + 1);
                    for k in k0..k0 + 300 {
                        assert!(condition((k - 1) / c, gap, spread), "c={c} gap={gap} spread={spread} k={k}");
                    }
                }
            }
        }
    }

    #[test]
    fn larger_drift_never_lowers_k0() {
        for c in 1..4 {
            for gap in 0..3 {
                for spread in 0..6 {
                    assert!(threshold(c, 1, gap, 2 * spread) >= threshold(c, 1, gap, spread));
                    assert!(threshold(c, 1, gap + 1, spread) >= threshold(c, 1, gap, spread));
                }
            }
        }
    }

    #[test]
    fn consecutive_effects_differ_by_pe() {
        let p = plan(&pump1(), &[0], &[1]).unwrap();
        assert_eq!(k0_of(&p), p.k0);
        let a = p.iterate(p.k0).unwrap();
        let b = p.iterate(p.k0 + 1).unwrap();
        // P·e = (0)
        assert_eq!(effect(&a.run, 1)[0] - effect(&b.run, 1)[0], 0);
        assert!(b.run.len() > a.run.len());
    }

    #[test]
    fn below_k0_is_refused() {
        let p = plan(&pump1(), &[0], &[1]).unwrap();
        assert!(matches!(p.iterate(p.k0 - 1), Err(Error::Contract(_))));
    }

    #[test]
    fn nothing_to_repay_gives_minimal_threshold() {
        assert_eq!(threshold(3, 1, 0, 0), 10);
        assert_eq!(threshold(1, 1, 0, 0), 2);
    }

    #[test]
    fn rejects_linear_and_bad_e() {
        let n = pump1();
        assert!(matches!(plan(&n, &[0], &[0]), Err(Error::Contract(_))));
        assert!(matches!(plan(&n, &[1], &[1]), Err(Error::Contract(_))));
    }
}
