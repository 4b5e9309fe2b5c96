//! Bounded brute-force ground truth: leftmost-derivation search over run
//! semantics, downward-closure sampling and a plain VASS Karp-Miller tree.
//!
//! Nothing here shares code with the symbolic machinery; the tests of the
//! other modules compare against it.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use crate::error::{contract, Error, Result};
use crate::grammar::{Shape, Sym};
use crate::ngvas::{Ngvas, Payload, RunTriple, DEFAULT_OMEGA_CAP};
use crate::vas::{ideal_decompose, GMarking, Marking, Nw, Run, Vector};

/// Extra sentential-form length tolerated beyond the run bound.
pub const FORM_SLACK: usize = 8;
/// Node cap of the plain Karp-Miller tree.
pub const MAX_KM_NODES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reach {
    Reachable(RunTriple),
    NotWithinBound(usize),
}

impl Reach {
    pub fn witness(&self) -> Option<&RunTriple> {
        match self {
            Reach::Reachable(r) => Some(r),
            Reach::NotWithinBound(_) => None,
        }
    }
}

struct Explorer<'a> {
    n: &'a Ngvas,
    bound: usize,
    minlen: Vec<usize>,
    /// Child runs keyed by (terminal, source, budget).
    child_memo: HashMap<(usize, Marking, usize), Vec<(Run, Marking)>>,
}

impl<'a> Explorer<'a> {
    fn new(n: &'a Ngvas, bound: usize) -> Self {
        let g = &n.grammar;
        let inf = usize::MAX / 4;
        let mut minlen = vec![inf; g.nonterminals.len()];
        let tlen = |t: usize| match n.payloads[t] {
            Payload::Update(_) => 1,
            Payload::Child(_) => 0,
        };
        loop {
            let mut changed = false;
            for p in &g.productions {
                let l: usize = p
                    .rhs
                    .iter()
                    .map(|s| match *s {
                        Sym::T(t) => tlen(t),
                        Sym::N(a) => minlen[a],
                    })
                    .fold(0, |a, b| (a + b).min(inf));
                if l < minlen[p.lhs] {
                    minlen[p.lhs] = l;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        Explorer { n, bound, minlen, child_memo: HashMap::new() }
    }

    fn form_min(&self, form: &[Sym]) -> usize {
        form.iter()
            .map(|s| match *s {
                Sym::N(a) => self.minlen[a],
                Sym::T(t) => match self.n.payloads[t] {
                    Payload::Update(_) => 1,
                    Payload::Child(_) => 0,
                },
            })
            .sum()
    }

    /// Complete runs of length at most `budget` from `m`, with their targets.
    /// Unless `all_words` is set, only the shortest path to each
    /// (marking, form) state is kept, which preserves the reachable targets.
    fn complete_runs(&mut self, m: &Marking, budget: usize, all_words: bool) -> Result<Vec<(Run, Marking)>> {
        let g = &self.n.grammar;
        let start = vec![Sym::N(g.start)];
        let cap = budget + FORM_SLACK;
        // Buckets by run length; zero-length steps stay in the current bucket.
        let mut buckets: BTreeMap<usize, VecDeque<(Marking, Vec<Sym>, Run)>> = BTreeMap::new();
        buckets.entry(0).or_default().push_back((m.clone(), start, Vec::new()));
        let mut best: HashMap<(Marking, Vec<Sym>, Run), usize> = HashMap::new();
        let tag = |w: &Run| if all_words { w.clone() } else { Vec::new() };
        best.insert((m.clone(), vec![Sym::N(g.start)], Vec::new()), 0);
        let mut out = Vec::new();
        let mut seen_done: BTreeSet<(Run, Marking)> = BTreeSet::new();
        while let Some((&len, _)) = buckets.iter().next() {
            let Some((cur, form, word)) = buckets.get_mut(&len).and_then(VecDeque::pop_front) else {
                buckets.remove(&len);
                continue;
            };
            if best.get(&(cur.clone(), form.clone(), tag(&word))).is_some_and(|&b| b < len) {
                continue;
            }
            let Some((&head, rest)) = form.split_first() else {
                if seen_done.insert((word.clone(), cur.clone())) {
                    out.push((word, cur));
                }
                continue;
            };
            let mut next_states: Vec<(Marking, Vec<Sym>, Run)> = Vec::new();
            match head {
                Sym::N(a) => {
                    for p in g.prods_of(a) {
                        let mut f = g.productions[p].rhs.clone();
                        f.extend_from_slice(rest);
                        next_states.push((cur.clone(), f, word.clone()));
                    }
                }
                Sym::T(t) => match &self.n.payloads[t] {
                    Payload::Update(u) => {
                        let next: Marking = cur.iter().zip(u).map(|(a, b)| a + b).collect();
                        if next.iter().all(|&x| x >= 0) {
                            let mut w = word.clone();
                            w.push(u.clone());
                            next_states.push((next, rest.to_vec(), w));
                        }
                    }
                    Payload::Child(_) => {
                        let left = budget - word.len();
                        for (sub, tgt) in self.child_runs(t, &cur, left)? {
                            let mut w = word.clone();
                            w.extend(sub);
                            next_states.push((tgt, rest.to_vec(), w));
                        }
                    }
                },
            }
            for (mk, f, w) in next_states {
                if w.len() + self.form_min(&f) > budget || f.len() > cap {
                    continue;
                }
                let key = (mk, f, tag(&w));
                if best.get(&key).is_some_and(|&b| b <= w.len()) {
                    continue;
                }
                best.insert(key.clone(), w.len());
                buckets.entry(w.len()).or_default().push_back((key.0, key.1, w));
            }
        }
        out.sort();
        Ok(out)
    }

    fn child_runs(&mut self, t: usize, m: &Marking, budget: usize) -> Result<Vec<(Run, Marking)>> {
        let key = (t, m.clone(), budget);
        if let Some(v) = self.child_memo.get(&key) {
            return Ok(v.clone());
        }
        let Payload::Child(c) = &self.n.payloads[t] else {
            unreachable!("child terminal")
        };
        let c = c.as_ref().clone();
        let mut out = Vec::new();
        if GMarking::concrete(m).specializes(&c.cin) {
            let mut sub = Explorer::new(&c, budget);
            for (w, tgt) in sub.complete_runs(m, budget, true)? {
                if accepts(&c, m, &tgt)? {
                    out.push((w, tgt));
                }
            }
        }
        self.child_memo.insert(key, out.clone());
        Ok(out)
    }
}

fn accepts(n: &Ngvas, m: &[i64], t: &[i64]) -> Result<bool> {
    if !GMarking::concrete(t).specializes(&n.cout) {
        return Ok(false);
    }
    let eff: Vector = m.iter().zip(t).map(|(a, b)| b - a).collect();
    n.restriction.contains(&eff)
}

/// All runs of `n` with length at most `bound`, sources drawn from `c_in`
/// with ω coordinates instantiated in `0..=cap`.
pub fn all_runs(n: &Ngvas, bound: usize, cap: i64) -> Result<BTreeSet<RunTriple>> {
    let mut ex = Explorer::new(n, bound);
    let mut out = BTreeSet::new();
    for src in n.cin.concretizations(cap) {
        for (word, target) in ex.complete_runs(&src, ex.bound, true)? {
            if accepts(n, &src, &target)? {
                out.insert(RunTriple { source: src.clone(), word, target });
            }
        }
    }
    Ok(out)
}

/// Shortest run of length at most `bound` from a concretization of `c_in`
/// to one of `c_out` whose effect lies in the restriction.
pub fn bfs_reach(n: &Ngvas, bound: usize) -> Result<Reach> {
    let mut ex = Explorer::new(n, bound);
    let mut found: Vec<RunTriple> = Vec::new();
    for src in n.cin.concretizations(DEFAULT_OMEGA_CAP) {
        for (word, target) in ex.complete_runs(&src, bound, false)? {
            if accepts(n, &src, &target)? {
                found.push(RunTriple { source: src.clone(), word, target });
            }
        }
    }
    Ok(shortest(found, bound))
}

fn shortest(found: Vec<RunTriple>, bound: usize) -> Reach {
    found
        .into_iter()
        .min_by(|a, b| (a.word.len(), a).cmp(&(b.word.len(), b)))
        .map(Reach::Reachable)
        .unwrap_or(Reach::NotWithinBound(bound))
}

/// Like `bfs_reach` between two given concrete markings, ignoring the
/// contexts of `n` but keeping its restriction.
pub fn bfs_reach_between(n: &Ngvas, from: &[i64], to: &[i64], bound: usize) -> Result<Reach> {
    if from.len() != n.dim || to.len() != n.dim {
        return contract("marking dimension does not match the system");
    }
    let eff: Vector = from.iter().zip(to).map(|(a, b)| b - a).collect();
    if !n.restriction.contains(&eff)? {
        return Ok(Reach::NotWithinBound(bound));
    }
    let mut ex = Explorer::new(n, bound);
    let found = ex
        .complete_runs(&from.to_vec(), bound, false)?
        .into_iter()
        .filter(|(_, t)| t == to)
        .map(|(word, target)| RunTriple { source: from.to_vec(), word, target })
        .collect();
    Ok(shortest(found, bound))
}

/// Maximal targets of runs of length at most `bound`, without acceleration.
pub fn cover_sample(n: &Ngvas, bound: usize) -> Result<Vec<GMarking>> {
    let runs = all_runs(n, bound, DEFAULT_OMEGA_CAP)?;
    let ts: Vec<GMarking> = runs.iter().map(|r| GMarking::concrete(&r.target)).collect();
    Ok(ideal_decompose(ts.iter()))
}

/// A plain VASS: states and transitions `(from, update, to)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vass {
    pub dim: usize,
    pub states: usize,
    pub transitions: Vec<(usize, Vector, usize)>,
}

/// Reads a linear depth-0 NGVAS with rules `A -> t B`, `A -> B`, `A -> t`
/// as a VASS. `A -> t` leads to an extra sink state.
pub fn vass_of(n: &Ngvas) -> Result<Vass> {
    if n.depth() != 0 || n.shape() != Shape::Linear {
        return contract("only linear NGVAS of depth 0 read as a VASS");
    }
    let g = &n.grammar;
    let sink = g.nonterminals.len();
    let upd = |t: usize| match &n.payloads[t] {
        Payload::Update(u) => u.clone(),
        Payload::Child(_) => unreachable!("depth 0"),
    };
    let mut transitions = Vec::new();
    for p in &g.productions {
        match p.rhs.as_slice() {
            [] => {}
            [Sym::T(t), Sym::N(b)] => transitions.push((p.lhs, upd(*t), *b)),
            [Sym::N(b)] => transitions.push((p.lhs, vec![0; n.dim], *b)),
            [Sym::T(t)] => transitions.push((p.lhs, upd(*t), sink)),
            _ => return contract(format!("rule {} is not of VASS form", g.prod_string(0))),
        }
    }
    Ok(Vass { dim: n.dim, states: sink + 1, transitions })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassicNode {
    pub state: usize,
    pub marking: GMarking,
    pub parent: Option<usize>,
}

/// Textbook Karp-Miller tree: a node is a leaf when a proper ancestor carries
/// the same label; a new label is accelerated against every ancestor on its
/// path with the same state that it strictly dominates.
pub fn classic_karp_miller(v: &Vass, state: usize, m0: &GMarking) -> Result<Vec<ClassicNode>> {
    let mut nodes = vec![ClassicNode { state, marking: m0.clone(), parent: None }];
    let mut queue = VecDeque::from([0usize]);
    let ancestors = |nodes: &[ClassicNode], i: usize| -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = nodes[i].parent;
        while let Some(j) = cur {
            out.push(j);
            cur = nodes[j].parent;
        }
        out
    };
    while let Some(i) = queue.pop_front() {
        let anc = ancestors(&nodes, i);
        let (q, m) = (nodes[i].state, nodes[i].marking.clone());
        if anc.iter().any(|&j| nodes[j].state == q && nodes[j].marking == m) {
            continue;
        }
        for (from, u, to) in &v.transitions {
            if *from != q {
                continue;
            }
            let Some(mut next) = fire_omega(&m, u) else { continue };
            for &j in std::iter::once(&i).chain(&anc) {
                let y = &nodes[j];
                if y.state != *to {
                    continue;
                }
                if leq(&y.marking, &next) && y.marking != next {
                    for k in 0..v.dim {
                        if let (Nw::Fin(a), Nw::Fin(b)) = (y.marking.0[k], next.0[k]) {
                            if a < b {
                                next.0[k] = Nw::Omega;
                            }
                        }
                    }
                }
            }
            if nodes.len() >= MAX_KM_NODES {
                return Err(Error::Budget(format!("plain Karp-Miller tree exceeds {MAX_KM_NODES} nodes")));
            }
            nodes.push(ClassicNode { state: *to, marking: next, parent: Some(i) });
            queue.push_back(nodes.len() - 1);
        }
    }
    Ok(nodes)
}

fn fire_omega(m: &GMarking, u: &[i64]) -> Option<GMarking> {
    let mut out = Vec::with_capacity(u.len());
    for (x, &d) in m.0.iter().zip(u) {
        out.push(match x {
            Nw::Omega => Nw::Omega,
            Nw::Fin(a) if a + d >= 0 => Nw::Fin(a + d),
            Nw::Fin(_) => return None,
        });
    }
    Some(GMarking(out))
}

fn leq(a: &GMarking, b: &GMarking) -> bool {
    a.0.iter().zip(&b.0).all(|(x, y)| match (x, y) {
        (_, Nw::Omega) => true,
        (Nw::Omega, Nw::Fin(_)) => false,
        (Nw::Fin(p), Nw::Fin(q)) => p <= q,
    })
}

/// `(state, Ω-set)` over all labels.
pub fn omega_patterns(nodes: &[ClassicNode]) -> BTreeSet<(usize, BTreeSet<usize>)> {
    nodes.iter().map(|x| (x.state, x.marking.omega_set())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{Grammar, Production};
    use crate::ngvas::{from_gvas, runs_bounded};
    use crate::vas::{fire_concrete, satisfies_mark_eq};

    fn gr(nts: &[&str], ts: &[&str], prods: &[(usize, &[Sym])]) -> Grammar {
        Grammar::new(
            nts.iter().map(|s| s.to_string()).collect(),
            ts.iter().map(|s| s.to_string()).collect(),
            0,
            prods.iter().map(|(l, r)| Production { lhs: *l, rhs: r.to_vec() }).collect(),
        )
        .unwrap()
    }

    fn tiny() -> Ngvas {
        let g = gr(&["S"], &["u", "w"], &[(0, &[Sym::N(0), Sym::N(0)]), (0, &[Sym::T(0)]), (0, &[Sym::T(1)])]);
        Ngvas::depth0("tiny-nl", g, vec![vec![1], vec![-1]], GMarking::zero(1), GMarking::zero(1))
    }

    #[test]
    fn single_update() {
        let g = gr(&["S"], &["u"], &[(0, &[Sym::T(0)])]);
        let n = from_gvas(&g, &[vec![1, 1]], &[0, 0], &[1, 1]).unwrap();
        let r = bfs_reach(&n, 1).unwrap();
        assert_eq!(r.witness().unwrap().word, vec![vec![1, 1]]);
        let n = from_gvas(&g, &[vec![1, 1]], &[0, 0], &[2, 2]).unwrap();
        assert_eq!(bfs_reach(&n, 1).unwrap(), Reach::NotWithinBound(1));
    }

    #[test]
    fn tiny_up_then_down() {
        let r = bfs_reach(&tiny(), 2).unwrap();
        let w = r.witness().unwrap();
        assert_eq!(w.word, vec![vec![1], vec![-1]]);
        assert_eq!(fire_concrete(&w.source, &w.word), Some(w.target.clone()));
        assert!(satisfies_mark_eq(&w.source, &w.word, &w.target));
    }

    #[test]
    fn agrees_with_fixpoint_semantics() {
        let n = tiny();
        for b in 0..6 {
            assert_eq!(all_runs(&n, b, DEFAULT_OMEGA_CAP).unwrap(), runs_bounded(&n, b).unwrap(), "bound {b}");
        }
    }

    #[test]
    fn one_counter_cover_grows() {
        let g = gr(&["S"], &["u"], &[(0, &[Sym::T(0), Sym::N(0)]), (0, &[Sym::T(0)])]);
        let n = Ngvas::depth0("up", g, vec![vec![1]], GMarking::zero(1), GMarking::omega(1));
        assert_eq!(cover_sample(&n, 3).unwrap(), vec![GMarking::concrete(&[3])]);
        let mut prev = cover_sample(&n, 1).unwrap();
        for b in 2..6 {
            let cur = cover_sample(&n, b).unwrap();
            assert!(prev.iter().all(|m| cur.iter().any(|c| m.below(c))));
            prev = cur;
        }
    }

    #[test]
    fn classic_km_on_counter() {
        let v = Vass { dim: 2, states: 1, transitions: vec![(0, vec![1, -1], 0), (0, vec![0, 1], 0)] };
        let nodes = classic_karp_miller(&v, 0, &GMarking::zero(2)).unwrap();
        assert!(nodes.iter().any(|x| x.marking.omega_count() == 2));
    }

    /// A linear NGVAS for a random VASS; state 0 starts, every state may stop.
    pub(crate) fn random_vass_ngvas(seed: u64) -> Ngvas {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = rng.gen_range(1..=2);
        let states = rng.gen_range(1..=3);
        let nt = rng.gen_range(states..=4);
        let mut trans: Vec<(usize, Vector, usize)> = Vec::new();
        for i in 0..nt {
            let from = if i + 1 < states { i } else { rng.gen_range(0..states) };
            let to = if i + 1 < states { i + 1 } else { rng.gen_range(0..states) };
            let u: Vector = (0..d).map(|_| rng.gen_range(-1..=1)).collect();
            trans.push((from, u, to));
        }
        let names: Vec<String> = (0..states).map(|i| format!("Q{i}")).collect();
        let ts: Vec<String> = (0..trans.len()).map(|i| format!("t{}", i + 1)).collect();
        let mut prods: Vec<Production> = trans
            .iter()
            .enumerate()
            .map(|(i, (f, _, t))| Production { lhs: *f, rhs: vec![Sym::T(i), Sym::N(*t)] })
            .collect();
        prods.extend((0..states).map(|q| Production { lhs: q, rhs: vec![] }));
        let g = Grammar::new(names, ts, 0, prods).unwrap();
        let cin: Vec<i64> = (0..d).map(|_| rng.gen_range(0..=2)).collect();
        Ngvas::depth0(
            &format!("vass{seed}"),
            g,
            trans.into_iter().map(|t| t.1).collect(),
            GMarking::concrete(&cin),
            GMarking::omega(d),
        )
    }

    #[test]
    fn karp_miller_matches_classic() {
        use crate::coverability::{karp_miller, Approx, KmVerdict};
        for seed in 0..20 {
            let n = random_vass_ngvas(seed);
            let v = vass_of(&n).unwrap();
            let classic = classic_karp_miller(&v, 0, &n.cin).unwrap();
            let want = omega_patterns(&classic);
            let t = karp_miller(&n, Approx::Int).unwrap();
            let got: BTreeSet<(usize, BTreeSet<usize>)> =
                t.nodes.iter().map(|x| (x.sym, x.input.omega_set())).collect();
            let full = want.iter().any(|(_, o)| o.len() == n.dim);
            match t.verdict {
                KmVerdict::PumpingFound(_) => {
                    assert!(full, "seed {seed}");
                    assert!(got.is_subset(&want), "seed {seed}: {got:?} vs {want:?}");
                }
                KmVerdict::Bounded(_) => {
                    assert!(!full, "seed {seed}");
                    assert_eq!(got, want, "seed {seed}");
                }
            }
        }
    }
}
