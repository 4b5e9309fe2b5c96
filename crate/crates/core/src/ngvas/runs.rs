//! Bounded run semantics. Every symbol denotes a relation between source
//! markings, update words of length at most the bound, and target markings.
//! Nonterminal relations are least fixpoints; child relations are filtered by
//! the child's own context and restriction.

use std::collections::{BTreeSet, HashMap};

use super::{Ngvas, Payload, RunTriple};
use crate::error::Result;
use crate::grammar::Sym;
use crate::vas::{GMarking, Marking, Nw, Vector};

type Word = Vec<u16>;
pub(crate) type Rel = HashMap<Marking, BTreeSet<(Word, Marking)>>;

pub(crate) struct Engine {
    bound: usize,
    pub(crate) table: Vec<Vector>,
    boxed: Vec<Marking>,
}

fn box_markings(hi: &[i64]) -> Vec<Marking> {
    let mut out: Vec<Marking> = vec![Vec::new()];
    for &h in hi {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..=h).map(move |c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    out
}

impl Engine {
    /// Markings reachable within `bound` steps from `sources` stay in the box.
    pub(crate) fn new(n: &Ngvas, sources: &[Marking], bound: usize) -> Self {
        let table = n.all_updates();
        let d = n.dim;
        let mut hi = vec![0i64; d];
        for s in sources {
            for i in 0..d {
                hi[i] = hi[i].max(s[i]);
            }
        }
        for i in 0..d {
            let inc = table.iter().map(|u| u[i].max(0)).max().unwrap_or(0);
            hi[i] += bound as i64 * inc;
        }
        Engine { bound, table, boxed: box_markings(&hi) }
    }

    fn uid(&self, u: &Vector) -> u16 {
        self.table.iter().position(|x| x == u).expect("update interned") as u16
    }

    pub(crate) fn word_run(&self, w: &[u16]) -> Vec<Vector> {
        w.iter().map(|&i| self.table[i as usize].clone()).collect()
    }

    fn identity(&self) -> Rel {
        self.boxed
            .iter()
            .map(|m| (m.clone(), BTreeSet::from([(Vec::new(), m.clone())])))
            .collect()
    }

    fn update_rel(&self, u: &Vector) -> Rel {
        let id = self.uid(u);
        let mut r = Rel::new();
        if self.bound == 0 {
            return r;
        }
        for m in &self.boxed {
            let t: Marking = m.iter().zip(u).map(|(a, b)| a + b).collect();
            if t.iter().all(|&x| x >= 0) {
                r.entry(m.clone()).or_default().insert((vec![id], t));
            }
        }
        r
    }

    fn join(&self, a: &Rel, b: &Rel) -> Rel {
        let mut out = Rel::new();
        for (m, set) in a {
            for (w1, m1) in set {
                if let Some(s2) = b.get(m1) {
                    for (w2, m2) in s2 {
                        if w1.len() + w2.len() <= self.bound {
                            let mut w = w1.clone();
                            w.extend_from_slice(w2);
                            out.entry(m.clone()).or_default().insert((w, m2.clone()));
                        }
                    }
                }
            }
        }
        out
    }

    /// Unfiltered relations of all terminals and nonterminals of `n`.
    pub(crate) fn symbol_rels(&self, n: &Ngvas) -> Result<(Vec<Rel>, Vec<Rel>)> {
        let mut trels = Vec::with_capacity(n.payloads.len());
        for p in &n.payloads {
            trels.push(match p {
                Payload::Update(u) => self.update_rel(u),
                Payload::Child(c) => self.ngvas_rel(c)?,
            });
        }
        let g = &n.grammar;
        let mut nrels: Vec<Rel> = vec![Rel::new(); g.nonterminals.len()];
        loop {
            let mut changed = false;
            for pr in &g.productions {
                let pick = |s: &Sym, nrels: &Vec<Rel>| -> Rel {
                    match *s {
                        Sym::N(a) => nrels[a].clone(),
                        Sym::T(t) => trels[t].clone(),
                    }
                };
                let r = match pr.rhs.len() {
                    0 => self.identity(),
                    1 => pick(&pr.rhs[0], &nrels),
                    _ => self.join(&pick(&pr.rhs[0], &nrels), &pick(&pr.rhs[1], &nrels)),
                };
                let target = &mut nrels[pr.lhs];
                for (m, set) in r {
                    let e = target.entry(m).or_default();
                    let before = e.len();
                    e.extend(set);
                    changed |= e.len() != before;
                }
            }
            if !changed {
                break;
            }
        }
        Ok((trels, nrels))
    }

    /// `runs(n)` over box sources: start relation filtered by context and restriction.
    pub(crate) fn ngvas_rel(&self, n: &Ngvas) -> Result<Rel> {
        let (_, nrels) = self.symbol_rels(n)?;
        let mut cache: HashMap<Vector, bool> = HashMap::new();
        let mut out = Rel::new();
        for (m, set) in &nrels[n.grammar.start] {
            if !GMarking::concrete(m).specializes(&n.cin) {
                continue;
            }
            for (w, m2) in set {
                if !GMarking::concrete(m2).specializes(&n.cout) {
                    continue;
                }
                let eff: Vector = (0..n.dim).map(|i| m2[i] - m[i]).collect();
                let ok = match cache.get(&eff) {
                    Some(&b) => b,
                    None => {
                        let b = n.restriction.contains(&eff)?;
                        cache.insert(eff, b);
                        b
                    }
                };
                if ok {
                    out.entry(m.clone()).or_default().insert((w.clone(), m2.clone()));
                }
            }
        }
        Ok(out)
    }

    pub(crate) fn triples(&self, rel: &Rel, keep: impl Fn(&Marking) -> bool) -> BTreeSet<RunTriple> {
        let mut out = BTreeSet::new();
        for (m, set) in rel {
            if !keep(m) {
                continue;
            }
            for (w, m2) in set {
                out.insert(RunTriple { source: m.clone(), word: self.word_run(w), target: m2.clone() });
            }
        }
        out
    }
}

fn within_cap(m: &[i64], cin: &GMarking, cap: i64) -> bool {
    m.iter().zip(&cin.0).all(|(&x, c)| match c {
        Nw::Fin(v) => x == *v,
        Nw::Omega => x <= cap,
    })
}

/// All runs of length at most `bound`, sources drawn from `c_in` with ω
/// coordinates instantiated in `0..=DEFAULT_OMEGA_CAP`.
pub fn runs_bounded(n: &Ngvas, bound: usize) -> Result<BTreeSet<RunTriple>> {
    runs_bounded_with(n, bound, super::DEFAULT_OMEGA_CAP)
}

pub fn runs_bounded_with(n: &Ngvas, bound: usize, cap: i64) -> Result<BTreeSet<RunTriple>> {
    let sources = n.cin.concretizations(cap);
    let e = Engine::new(n, &sources, bound);
    let rel = e.ngvas_rel(n)?;
    Ok(e.triples(&rel, |m| within_cap(m, &n.cin, cap)))
}

/// Runs of `n` from the given concrete sources.
pub fn runs_from(n: &Ngvas, sources: &[Marking], bound: usize) -> Result<BTreeSet<RunTriple>> {
    let e = Engine::new(n, sources, bound);
    let rel = e.ngvas_rel(n)?;
    let set: BTreeSet<&Marking> = sources.iter().collect();
    Ok(e.triples(&rel, |m| set.contains(m)))
}

/// `runs(σ)` for a symbol of `n`, from the given sources: derivations of a
/// nonterminal without the top-level context filter, or a terminal's runs.
pub fn symbol_runs(n: &Ngvas, s: Sym, sources: &[Marking], bound: usize) -> Result<BTreeSet<RunTriple>> {
    let e = Engine::new(n, sources, bound);
    let (trels, nrels) = e.symbol_rels(n)?;
    let rel = match s {
        Sym::N(a) => &nrels[a],
        Sym::T(t) => &trels[t],
    };
    let set: BTreeSet<&Marking> = sources.iter().collect();
    Ok(e.triples(rel, |m| set.contains(m)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeconVerdict {
    pub holds: bool,
    /// First failing condition: "un", "c_in", "c_out", "restriction" or "runs".
    pub failed: Option<&'static str>,
    pub detail: String,
    pub bound: usize,
}

impl DeconVerdict {
    fn fail(cond: &'static str, detail: String, bound: usize) -> Self {
        DeconVerdict { holds: false, failed: Some(cond), detail, bound }
    }
}

/// `R' ⊆ R` via base membership and period membership in `R`'s period monoid.
pub fn restriction_included(inner: &crate::numerics::LinearSet, outer: &crate::numerics::LinearSet) -> Result<bool> {
    if !outer.contains(&inner.base)? {
        return Ok(false);
    }
    let hom = outer.homogeneous();
    for p in &inner.periods {
        if !hom.contains(p)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Checks the member conditions and compares run sets at `bound`. Both
/// sides start from the concretizations of `n.c_in` up to the ω cap.
pub fn is_deconstruction(n: &Ngvas, parts: &[Ngvas], bound: usize) -> Result<DeconVerdict> {
    for p in parts {
        if p.un != n.un {
            return Ok(DeconVerdict::fail(
                "un",
                format!("{}: Un {} differs from {}", p.name, super::fmt_set(&p.un), super::fmt_set(&n.un)),
                bound,
            ));
        }
        if !p.cin.specializes(&n.cin) {
            return Ok(DeconVerdict::fail("c_in", format!("{}: c_in {} not ⊑ {}", p.name, p.cin, n.cin), bound));
        }
        if !p.cout.specializes(&n.cout) {
            return Ok(DeconVerdict::fail("c_out", format!("{}: c_out {} not ⊑ {}", p.name, p.cout, n.cout), bound));
        }
        if !restriction_included(&p.restriction, &n.restriction)? {
            return Ok(DeconVerdict::fail("restriction", format!("{}: restriction not included", p.name), bound));
        }
    }
    let sources = n.cin.concretizations(super::DEFAULT_OMEGA_CAP);
    let mine = runs_from(n, &sources, bound)?;
    let mut theirs = BTreeSet::new();
    for p in parts {
        theirs.extend(runs_from(p, &sources, bound)?);
    }
    if mine != theirs {
        let detail = match mine.symmetric_difference(&theirs).next() {
            Some(t) => format!(
                "run {:?} --{:?}--> {:?} only on one side",
                t.source, t.word, t.target
            ),
            None => String::new(),
        };
        return Ok(DeconVerdict::fail("runs", detail, bound));
    }
    Ok(DeconVerdict { holds: true, failed: None, detail: String::new(), bound })
}
