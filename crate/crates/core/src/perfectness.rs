//! Perfectness conditions as bounded decision procedures, rigid counters,
//! and the budget, cleaning and basis steps of the decomposition.
//!
//! Every verdict is three-valued. `Unknown` carries the bound that ran out.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_traits::Zero;

use crate::chareq::{build_char, linear_split, support_of, CharSystem, Dir};
use crate::coverability::{karp_miller, Approx, KmVerdict};
use crate::error::{contract, Error, Result};
use crate::grammar::{Grammar, Production, Sym};
use crate::ngvas::{nest, runs_bounded, symbol_runs, Kind, Ngvas, Payload, RunTriple, DEFAULT_OMEGA_CAP};
use crate::numerics::{ilp_feasible, LinearSet, Rational};
use crate::rank::{full_cycle_space, left_cycle_space, main_branch};
use crate::vas::{effect, GMarking, Marking, Nw, Vector};

/// Node budget of the integer searches behind R-sol.
pub const ILP_BUDGET: usize = 200_000;
/// Cap on enumerated pump derivations.
pub const MAX_SPINES: usize = 256;
/// Cap on the application box searched by `basisfire_depth0`.
pub const MAX_APPLICATIONS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Condition {
    Sol,
    Counters,
    Children,
    Base,
    ChildPeriods,
    Rigid,
    Prods,
    PumpingInt,
    Pumping,
}

impl Condition {
    pub const ALL: [Condition; 9] = [
        Condition::Sol,
        Condition::Counters,
        Condition::Children,
        Condition::Base,
        Condition::ChildPeriods,
        Condition::Rigid,
        Condition::Prods,
        Condition::PumpingInt,
        Condition::Pumping,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Sol => "R-sol",
            Condition::Counters => "R-counters",
            Condition::Children => "R-children",
            Condition::Base => "R-base",
            Condition::ChildPeriods => "R-childperiods",
            Condition::Rigid => "R-rigid",
            Condition::Prods => "R-prods",
            Condition::PumpingInt => "R-pumpingint",
            Condition::Pumping => "R-pumping",
        }
    }

    /// Conditions that only apply to linear NGVAS.
    pub fn linear_only(self) -> bool {
        matches!(self, Condition::ChildPeriods | Condition::PumpingInt)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails(String),
    Unknown(usize),
}

impl Verdict {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds)
    }

    pub fn fails(&self) -> bool {
        matches!(self, Verdict::Fails(_))
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Holds => f.write_str("holds"),
            Verdict::Fails(w) => write!(f, "fails: {w}"),
            Verdict::Unknown(b) => write!(f, "unknown at bound {b}"),
        }
    }
}

/// A derivation `S ->* left.S.right` with runs of both sides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PumpWitness {
    /// Productions along the path from `S` back to `S`.
    pub spine: Vec<usize>,
    pub left: Vec<Sym>,
    pub right: Vec<Sym>,
    pub left_run: RunTriple,
    pub right_run: RunTriple,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerfectnessReport {
    pub name: String,
    pub bound: usize,
    /// Applicable conditions only.
    pub verdicts: BTreeMap<Condition, Verdict>,
    pub pumping: Option<PumpWitness>,
    pub pumping_int: Option<PumpWitness>,
}

impl PerfectnessReport {
    pub fn all_hold(&self) -> bool {
        self.verdicts.values().all(Verdict::holds)
    }

    pub fn any_fails(&self) -> bool {
        self.verdicts.values().any(Verdict::fails)
    }

    pub fn get(&self, c: Condition) -> Option<&Verdict> {
        self.verdicts.get(&c)
    }
}

/// Checks all applicable conditions. Searches use runs of length at most `bound`.
pub fn check_conditions(n: &Ngvas, bound: usize) -> Result<PerfectnessReport> {
    if n.kind == Kind::Weak {
        return contract(format!("{} is weak; perfectness is defined for strong NGVAS", n.name));
    }
    let linear = n.is_linear();
    let (hc, supp) = support_of(n)?;
    let mut verdicts = BTreeMap::new();
    verdicts.insert(Condition::Sol, check_sol(n, &hc, &supp)?);
    verdicts.insert(Condition::Counters, check_counters(n, &hc, &supp));
    verdicts.insert(Condition::Children, check_children(n, bound)?);
    verdicts.insert(Condition::Base, check_base(n, bound)?);
    if linear {
        let center: Vec<&_> = hc.dirs.iter().filter(|d| matches!(d.dir, Dir::CenterLeft | Dir::CenterRight)).collect();
        verdicts.insert(Condition::ChildPeriods, periods_in_support(n, &center, &supp));
    }
    verdicts.insert(Condition::Rigid, check_rigid(n)?);
    verdicts.insert(Condition::Prods, check_prods(n, &hc, &supp));
    let mut pumping_int = None;
    if linear {
        let (v, w) = check_pumping_int(n, &hc, bound)?;
        verdicts.insert(Condition::PumpingInt, v);
        pumping_int = w;
    }
    let (v, pumping) = check_pumping(n, bound)?;
    verdicts.insert(Condition::Pumping, v);
    Ok(PerfectnessReport { name: n.name.clone(), bound, verdicts, pumping, pumping_int })
}

fn fmt_vec(v: &[i64]) -> String {
    let s: Vec<String> = v.iter().map(i64::to_string).collect();
    format!("({})", s.join(","))
}

/// Restriction elements probed for R-sol: the base, base plus each period,
/// and base plus all periods, kept when compatible with concrete contexts.
fn sol_probes(n: &Ngvas) -> Vec<Vector> {
    let r = &n.restriction;
    let plus = |a: &[i64], b: &[i64]| -> Vector { a.iter().zip(b).map(|(x, y)| x + y).collect() };
    let mut probes = vec![r.base.clone()];
    let mut all = r.base.clone();
    for p in &r.periods {
        probes.push(plus(&r.base, p));
        all = plus(&all, p);
    }
    probes.push(all);
    let mut out: Vec<Vector> = Vec::new();
    for b in probes {
        let fits = (0..n.dim).all(|i| match (n.cin.0[i], n.cout.0[i]) {
            (Nw::Fin(a), Nw::Fin(c)) => b[i] == c - a,
            _ => true,
        });
        if fits && !out.contains(&b) {
            out.push(b);
        }
    }
    out
}

fn check_sol(n: &Ngvas, hc: &CharSystem, supp: &BTreeSet<usize>) -> Result<Verdict> {
    let ch = build_char(n)?;
    let mut unknown = false;
    for b in sol_probes(n) {
        let mut sys = ch.system.clone();
        for i in 0..n.dim {
            let row: Vec<(usize, i64)> =
                ch.x_u.iter().enumerate().map(|(u, &v)| (v, ch.updates[u][i])).collect();
            sys.add_row(&row, b[i]);
        }
        match ilp_feasible(&sys, ILP_BUDGET) {
            Ok(Some(_)) => {}
            Ok(None) => return Ok(Verdict::Fails(format!("no solution with effect {}", fmt_vec(&b)))),
            Err(Error::Budget(_)) => unknown = true,
            Err(e) => return Err(e),
        }
    }
    for (j, y) in hc.y.iter().enumerate() {
        if !supp.contains(y) {
            let p = &n.restriction.periods[j];
            return Ok(Verdict::Fails(format!("period {} has no homogeneous solution", fmt_vec(p))));
        }
    }
    Ok(if unknown { Verdict::Unknown(ILP_BUDGET) } else { Verdict::Holds })
}

fn check_counters(n: &Ngvas, hc: &CharSystem, supp: &BTreeSet<usize>) -> Verdict {
    let mut checks = vec![(&hc.x_in, &n.cin, "x_in".to_string()), (&hc.x_out, &n.cout, "x_out".to_string())];
    if n.is_linear() {
        for dv in &hc.dirs[1..3] {
            checks.push((&dv.x_in, &dv.c_in, format!("x_in{}", dv.dir.suffix())));
            checks.push((&dv.x_out, &dv.c_out, format!("x_out{}", dv.dir.suffix())));
        }
    }
    for (vars, ctx, label) in checks {
        for i in ctx.omega_set() {
            if !supp.contains(&vars[i]) {
                return Verdict::Fails(format!("{label}[{}] is not in the support", i + 1));
            }
        }
    }
    Verdict::Holds
}

fn periods_in_support(n: &Ngvas, dirs: &[&crate::chareq::DirVars], supp: &BTreeSet<usize>) -> Verdict {
    for dv in dirs {
        for (t, cv) in &dv.children {
            for (j, y) in cv.y.iter().enumerate() {
                if !supp.contains(y) {
                    return Verdict::Fails(format!(
                        "period {} of child {} ({}) is not in the support",
                        j + 1,
                        n.grammar.terminals[*t],
                        dv.dir
                    ));
                }
            }
        }
    }
    Verdict::Holds
}

fn check_prods(n: &Ngvas, hc: &CharSystem, supp: &BTreeSet<usize>) -> Verdict {
    for (p, v) in hc.x_p.iter().enumerate() {
        if let Some(v) = v {
            if !supp.contains(v) {
                return Verdict::Fails(format!("production {} is not in the support", n.grammar.prod_string(p)));
            }
        }
    }
    let cyc: Vec<&_> = hc.dirs.iter().filter(|d| matches!(d.dir, Dir::Whole | Dir::Left | Dir::Right)).collect();
    periods_in_support(n, &cyc, supp)
}

fn check_children(n: &Ngvas, bound: usize) -> Result<Verdict> {
    let branch: BTreeSet<String> = main_branch(n)?.into_iter().collect();
    let mut unknown = None;
    for (_, c) in n.children() {
        let label = format!("{}:{}", c.name, c.grammar.nonterminals[c.grammar.start]);
        if branch.contains(&label) {
            continue;
        }
        let r = check_conditions(c, bound)?;
        for (cond, v) in &r.verdicts {
            match v {
                Verdict::Fails(w) => return Ok(Verdict::Fails(format!("child {}: {cond} {w}", c.name))),
                Verdict::Unknown(b) => unknown = Some(*b),
                Verdict::Holds => {}
            }
        }
    }
    Ok(unknown.map_or(Verdict::Holds, Verdict::Unknown))
}

fn check_base(n: &Ngvas, bound: usize) -> Result<Verdict> {
    for (_, c) in n.children() {
        let runs = runs_bounded(c, bound)?;
        let base = &c.restriction.base;
        if !runs.iter().any(|r| effect(&r.word, n.dim) == *base) {
            return Ok(Verdict::Unknown(bound));
        }
    }
    Ok(Verdict::Holds)
}

/// Fixed and rigid counters per side. Counter indices are 0-based.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RigidCounters {
    pub fixed_left: BTreeSet<usize>,
    pub fixed_right: BTreeSet<usize>,
    pub rigid_left: BTreeSet<usize>,
    pub rigid_right: BTreeSet<usize>,
    /// Linear only: fixed and concrete at the center contexts.
    pub rigid_inner_left: BTreeSet<usize>,
    pub rigid_inner_right: BTreeSet<usize>,
}

impl RigidCounters {
    pub fn all(&self) -> BTreeSet<usize> {
        let mut s = self.rigid_left.clone();
        s.extend(&self.rigid_right);
        s.extend(&self.rigid_inner_left);
        s.extend(&self.rigid_inner_right);
        s
    }
}

fn zero_columns(basis: &[Vec<Rational>], off: usize, d: usize) -> BTreeSet<usize> {
    (0..d).filter(|&i| basis.iter().all(|r| r[off + i].is_zero())).collect()
}

fn finite(m: &GMarking) -> BTreeSet<usize> {
    (0..m.dim()).filter(|&i| !m.0[i].is_omega()).collect()
}

pub fn rigid_counters(n: &Ngvas) -> Result<RigidCounters> {
    let d = n.dim;
    let left = zero_columns(&left_cycle_space(n)?.basis, 0, d);
    let right = if n.is_linear() { zero_columns(&full_cycle_space(n)?.basis, d, d) } else { left.clone() };
    let mut rc = RigidCounters {
        rigid_left: left.intersection(&finite(&n.cin)).copied().collect(),
        rigid_right: right.intersection(&finite(&n.cout)).copied().collect(),
        fixed_left: left,
        fixed_right: right,
        ..Default::default()
    };
    if n.is_linear() {
        let split = linear_split(n)?;
        let ctx = |t: Option<usize>, inner: bool| -> GMarking {
            match t.and_then(|t| n.child(t)) {
                Some(c) if inner => c.cin.clone(),
                Some(c) => c.cout.clone(),
                None => GMarking::omega(d),
            }
        };
        let cl = ctx(split.center_left, true);
        let cr = ctx(split.center_right, false);
        rc.rigid_inner_left = rc.fixed_left.intersection(&finite(&cl)).copied().collect();
        rc.rigid_inner_right = rc.fixed_right.intersection(&finite(&cr)).copied().collect();
    }
    Ok(rc)
}

/// For a non-linear NGVAS: the entry and exit values of every nonterminal
/// on the rigid counters, ω elsewhere. All derivations of a symbol agree
/// on fixed counters, so any derivation determines them.
pub fn rigid_markings(n: &Ngvas, rc: &RigidCounters) -> Result<Option<(Vec<GMarking>, Vec<GMarking>)>> {
    if n.is_linear() {
        return Ok(None);
    }
    let d = n.dim;
    let g = &n.grammar;
    let tval = |t: usize| -> Vector {
        match &n.payloads[t] {
            Payload::Update(u) => u.clone(),
            Payload::Child(c) => c.restriction.base.clone(),
        }
    };
    let mut eff: Vec<Option<Vector>> = vec![None; g.nonterminals.len()];
    loop {
        let mut changed = false;
        for pr in &g.productions {
            if eff[pr.lhs].is_some() {
                continue;
            }
            let mut acc = vec![0i64; d];
            let mut ok = true;
            for s in &pr.rhs {
                let v = match *s {
                    Sym::T(t) => Some(tval(t)),
                    Sym::N(b) => eff[b].clone(),
                };
                match v {
                    Some(v) => acc.iter_mut().zip(&v).for_each(|(a, x)| *a += x),
                    None => ok = false,
                }
            }
            if ok {
                eff[pr.lhs] = Some(acc);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let fixed: BTreeSet<usize> = rc.rigid_left.union(&rc.rigid_right).copied().collect();
    let Some(es) = eff[g.start].clone() else { return Ok(None) };
    let start_in: Vector = (0..d)
        .map(|i| match (n.cin.0[i], n.cout.0[i]) {
            (Nw::Fin(a), _) => a,
            (_, Nw::Fin(c)) => c - es[i],
            _ => 0,
        })
        .collect();
    let mut entry: Vec<Option<Vector>> = vec![None; g.nonterminals.len()];
    entry[g.start] = Some(start_in);
    let mut todo = vec![g.start];
    while let Some(a) = todo.pop() {
        let ea = entry[a].clone().expect("assigned");
        for p in g.prods_of(a) {
            let mut cur = ea.clone();
            for s in &g.productions[p].rhs {
                if let Sym::N(b) = *s {
                    if entry[b].is_none() {
                        entry[b] = Some(cur.clone());
                        todo.push(b);
                    }
                }
                let v = match *s {
                    Sym::T(t) => tval(t),
                    Sym::N(b) => eff[b].clone().unwrap_or_else(|| vec![0; d]),
                };
                cur.iter_mut().zip(&v).for_each(|(c, x)| *c += x);
            }
        }
    }
    let mark = |v: &Vector| -> GMarking {
        GMarking((0..d).map(|i| if fixed.contains(&i) { Nw::Fin(v[i]) } else { Nw::Omega }).collect())
    };
    let mut inm = Vec::new();
    let mut outm = Vec::new();
    for a in 0..g.nonterminals.len() {
        let e = entry[a].clone().unwrap_or_else(|| vec![0; d]);
        let x = eff[a].clone().unwrap_or_else(|| vec![0; d]);
        let o: Vector = e.iter().zip(&x).map(|(p, q)| p + q).collect();
        inm.push(mark(&e));
        outm.push(mark(&o));
    }
    Ok(Some((inm, outm)))
}

fn check_rigid(n: &Ngvas) -> Result<Verdict> {
    let rc = rigid_counters(n)?;
    let left: BTreeSet<usize> = rc.rigid_left.union(&rc.rigid_inner_left).copied().collect();
    let right: BTreeSet<usize> = rc.rigid_right.union(&rc.rigid_inner_right).copied().collect();
    if let Some(i) = left.intersection(&n.bd.left).next() {
        return Ok(Verdict::Fails(format!("counter {} is rigid on the left but not tracked", i + 1)));
    }
    if let Some(i) = right.intersection(&n.bd.right).next() {
        return Ok(Verdict::Fails(format!("counter {} is rigid on the right but not tracked", i + 1)));
    }
    Ok(Verdict::Holds)
}

/// Requirement on one side of a pump derivation.
#[derive(Debug, Clone)]
enum Side {
    /// Runs from a marking below `ctx`, effect at least 1 on `need`.
    Enter { ctx: GMarking, need: BTreeSet<usize> },
    /// Runs into a marking below `ctx`, effect at most −1 on `need`.
    Leave { ctx: GMarking, need: BTreeSet<usize> },
}

/// Derivations `S ->* left.S.right` with at most `bound` steps and sides of
/// at most `bound` symbols, shortest first, one per pair of sides.
fn spines(n: &Ngvas, bound: usize) -> Vec<(Vec<usize>, Vec<Sym>, Vec<Sym>)> {
    let g = &n.grammar;
    let s0 = g.start;
    let mut out = Vec::new();
    let mut seen: BTreeSet<(Vec<Sym>, Vec<Sym>)> = BTreeSet::new();
    let mut layer: Vec<(Vec<usize>, Vec<Sym>, usize, Vec<Sym>)> = vec![(Vec::new(), Vec::new(), s0, Vec::new())];
    for _ in 0..bound {
        let mut next = Vec::new();
        let mut visited: BTreeSet<(Vec<Sym>, usize, Vec<Sym>)> = BTreeSet::new();
        for (prods, l, x, r) in &layer {
            for p in g.prods_of(*x) {
                let rhs = &g.productions[p].rhs;
                for (pos, s) in rhs.iter().enumerate() {
                    let Sym::N(y) = *s else { continue };
                    let mut l2 = l.clone();
                    l2.extend_from_slice(&rhs[..pos]);
                    let mut r2 = rhs[pos + 1..].to_vec();
                    r2.extend_from_slice(r);
                    if l2.len() + r2.len() > bound || !visited.insert((l2.clone(), y, r2.clone())) {
                        continue;
                    }
                    let mut p2 = prods.clone();
                    p2.push(p);
                    if y == s0 && seen.insert((l2.clone(), r2.clone())) {
                        out.push((p2.clone(), l2.clone(), r2.clone()));
                        if out.len() >= MAX_SPINES {
                            return out;
                        }
                    }
                    next.push((p2, l2, y, r2));
                }
            }
        }
        layer = next;
    }
    out
}

/// Runs of a sentential form from the given sources, length at most `bound`.
fn form_runs(n: &Ngvas, form: &[Sym], sources: &[Marking], bound: usize) -> Result<Vec<RunTriple>> {
    let mut cur: Vec<RunTriple> =
        sources.iter().map(|m| RunTriple { source: m.clone(), word: Vec::new(), target: m.clone() }).collect();
    for &s in form {
        let targets: BTreeSet<Marking> = cur.iter().map(|r| r.target.clone()).collect();
        let targets: Vec<Marking> = targets.into_iter().collect();
        let step = symbol_runs(n, s, &targets, bound)?;
        let mut by: HashMap<&Marking, Vec<&RunTriple>> = HashMap::new();
        for r in &step {
            by.entry(&r.source).or_default().push(r);
        }
        let mut next = BTreeSet::new();
        for r in &cur {
            for q in by.get(&r.target).into_iter().flatten() {
                if r.word.len() + q.word.len() <= bound {
                    let mut w = r.word.clone();
                    w.extend(q.word.iter().cloned());
                    next.insert(RunTriple { source: r.source.clone(), word: w, target: q.target.clone() });
                }
            }
        }
        cur = next.into_iter().collect();
        if cur.is_empty() {
            break;
        }
    }
    Ok(cur)
}

fn side_sources(n: &Ngvas, side: &Side, bound: usize) -> Vec<Marking> {
    match side {
        Side::Enter { ctx, .. } => ctx.concretizations(DEFAULT_OMEGA_CAP),
        Side::Leave { ctx, .. } => {
            let ups = n.all_updates();
            let hi: Vec<i64> = (0..n.dim)
                .map(|i| {
                    let dec = ups.iter().map(|u| (-u[i]).max(0)).max().unwrap_or(0);
                    let top = ctx.0[i].fin().unwrap_or(DEFAULT_OMEGA_CAP);
                    top + bound as i64 * dec
                })
                .collect();
            box_below(&hi)
        }
    }
}

fn box_below(hi: &[i64]) -> Vec<Marking> {
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

fn side_accepts(side: &Side, r: &RunTriple, d: usize) -> bool {
    let e = effect(&r.word, d);
    match side {
        Side::Enter { ctx, need } => {
            GMarking::concrete(&r.source).specializes(ctx) && need.iter().all(|&i| e[i] >= 1)
        }
        Side::Leave { ctx, need } => {
            GMarking::concrete(&r.target).specializes(ctx) && need.iter().all(|&i| e[i] <= -1)
        }
    }
}

fn pump_search(n: &Ngvas, left: &Side, right: &Side, bound: usize) -> Result<Option<PumpWitness>> {
    let ls = side_sources(n, left, bound);
    let rs = side_sources(n, right, bound);
    let mut memo: HashMap<(bool, Vec<Sym>), Option<RunTriple>> = HashMap::new();
    let mut find = |is_left: bool, form: &[Sym]| -> Result<Option<RunTriple>> {
        if let Some(r) = memo.get(&(is_left, form.to_vec())) {
            return Ok(r.clone());
        }
        let (side, src) = if is_left { (left, &ls) } else { (right, &rs) };
        let found = form_runs(n, form, src, bound)?.into_iter().find(|r| side_accepts(side, r, n.dim));
        memo.insert((is_left, form.to_vec()), found.clone());
        Ok(found)
    };
    for (spine, l, r) in spines(n, bound) {
        let Some(lr) = find(true, &l)? else { continue };
        let Some(rr) = find(false, &r)? else { continue };
        return Ok(Some(PumpWitness { spine, left: l, right: r, left_run: lr, right_run: rr }));
    }
    Ok(None)
}

fn minus(a: &BTreeSet<usize>, m: &GMarking) -> BTreeSet<usize> {
    a.difference(&m.omega_set()).copied().collect()
}

fn check_pumping(n: &Ngvas, bound: usize) -> Result<(Verdict, Option<PumpWitness>)> {
    // A bounded integer tree refutes pumping outright, so the search below
    // only runs when a witness may exist.
    let refuted = match karp_miller(n, Approx::Int) {
        Ok(t) => matches!(t.verdict, KmVerdict::Bounded(_)),
        Err(Error::Budget(_)) => false,
        Err(e) => return Err(e),
    };
    if refuted {
        return Ok((Verdict::Fails("the integer Karp-Miller tree has no pumping node".into()), None));
    }
    let left = Side::Enter { ctx: n.cin.clone(), need: minus(&n.bd.left, &n.cin) };
    let right = Side::Leave { ctx: n.cout.clone(), need: minus(&n.bd.right, &n.cout) };
    Ok(match pump_search(n, &left, &right, bound)? {
        Some(w) => (Verdict::Holds, Some(w)),
        None => (Verdict::Unknown(bound), None),
    })
}

fn check_pumping_int(n: &Ngvas, hc: &CharSystem, bound: usize) -> Result<(Verdict, Option<PumpWitness>)> {
    let cl_in = hc.dirs[1].c_in.clone();
    let cr_out = hc.dirs[2].c_out.clone();
    let left = Side::Leave { need: minus(&n.bd.left, &cl_in), ctx: cl_in };
    let right = Side::Enter { need: minus(&n.bd.right, &cr_out), ctx: cr_out };
    Ok(match pump_search(n, &left, &right, bound)? {
        Some(w) => (Verdict::Holds, Some(w)),
        None => (Verdict::Unknown(bound), None),
    })
}

/// Removes nonterminals that are unreachable or unproductive, together with
/// the productions using them. Terminals are kept.
pub fn remove_useless(n: &Ngvas) -> Ngvas {
    let g = &n.grammar;
    let useful = g.useful_nonterminals();
    let keep = if useful.is_empty() { BTreeSet::from([g.start]) } else { useful.clone() };
    let (mut g2, _, _) = g.restrict(&keep);
    if useful.is_empty() {
        g2.productions.clear();
    }
    let pick = |v: &[GMarking]| -> Vec<GMarking> { keep.iter().map(|&a| v[a].clone()).collect() };
    let mut out = n.clone();
    out.bd.inm = pick(&n.bd.inm);
    out.bd.outm = pick(&n.bd.outm);
    out.tags = keep.iter().map(|&a| n.tags[a]).collect();
    out.grammar = g2;
    out
}

/// A bounded object of `refine_budget`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Obj {
    Prod(usize),
    Period(usize, usize),
}

fn boxes(k: usize, b: i64) -> Vec<Vec<i64>> {
    box_below(&vec![b; k])
}

fn budget_name(c: &[i64]) -> String {
    let s: Vec<String> = c.iter().map(i64::to_string).collect();
    s.join(",")
}

/// Adds a budget component `c ∈ [0,b]^k` to every nonterminal, one entry per
/// bounded production and bounded child period. A bounded production
/// decrements its entry; budgets are split across right-hand nonterminals,
/// and a child with bounded periods is specialized to fixed counts of them.
/// Right sides without a nonterminal drop what is left.
pub fn refine_budget(
    n: &Ngvas,
    bounded_prods: &BTreeSet<usize>,
    bounded_periods: &BTreeMap<usize, BTreeSet<usize>>,
    b: usize,
) -> Result<Ngvas> {
    let g = &n.grammar;
    let (hc, supp) = support_of(n)?;
    let mut objs = Vec::new();
    for &p in bounded_prods {
        if p >= g.num_prods() {
            return contract(format!("no production {}", p + 1));
        }
        if hc.x_p[p].is_some_and(|v| supp.contains(&v)) {
            return contract(format!("production {} is in the support", g.prod_string(p)));
        }
        objs.push(Obj::Prod(p));
    }
    for (&t, js) in bounded_periods {
        let Some(c) = n.child(t) else {
            return contract(format!("terminal {} is not a child", t + 1));
        };
        for &j in js {
            if j >= c.restriction.periods.len() {
                return contract(format!("child {} has no period {}", c.name, j + 1));
            }
            let used = hc.dirs.iter().any(|dv| dv.children.get(&t).is_some_and(|cv| supp.contains(&cv.y[j])));
            if used {
                return contract(format!("period {} of child {} is in the support", j + 1, c.name));
            }
            objs.push(Obj::Period(t, j));
        }
    }
    let k = objs.len();
    let bi = b as i64;
    let budgets = boxes(k, bi);
    let slot = |o: Obj| objs.iter().position(|&x| x == o);

    // Terminals: unbudgeted ones as before, budgeted children once per count vector.
    let mut terminals: Vec<String> = Vec::new();
    let mut payloads: Vec<Payload> = Vec::new();
    let mut tmap: BTreeMap<(usize, Vec<i64>), usize> = BTreeMap::new();
    for (t, p) in n.payloads.iter().enumerate() {
        match bounded_periods.get(&t) {
            None => {
                tmap.insert((t, Vec::new()), terminals.len());
                terminals.push(g.terminals[t].clone());
                payloads.push(p.clone());
            }
            Some(js) => {
                let c = n.child(t).expect("checked");
                let js: Vec<usize> = js.iter().copied().collect();
                for cnt in boxes(js.len(), bi) {
                    let mut v = c.clone();
                    for (x, &j) in js.iter().enumerate() {
                        for i in 0..n.dim {
                            v.restriction.base[i] += cnt[x] * c.restriction.periods[j][i];
                        }
                    }
                    v.restriction.periods =
                        (0..c.restriction.periods.len()).filter(|j| !js.contains(j)).map(|j| c.restriction.periods[j].clone()).collect();
                    v.name = format!("{}@{}", c.name, budget_name(&cnt));
                    tmap.insert((t, cnt.clone()), terminals.len());
                    terminals.push(format!("{}@{}", g.terminals[t], budget_name(&cnt)));
                    payloads.push(Payload::Child(Box::new(v)));
                }
            }
        }
    }

    let nts = g.nonterminals.len();
    let nt_index = |c: &[i64], a: usize| -> usize {
        let mut ix = 0usize;
        for &x in c {
            ix = ix * (b + 1) + x as usize;
        }
        ix * nts + a
    };
    let mut names = Vec::with_capacity(budgets.len() * nts);
    let mut origin = Vec::with_capacity(budgets.len() * nts);
    for c in &budgets {
        for a in 0..nts {
            names.push(if k == 0 { g.nonterminals[a].clone() } else { format!("{}@{}", g.nonterminals[a], budget_name(c)) });
            origin.push(a);
        }
    }

    // Shares a right-hand symbol may take.
    let share_options = |s: Sym, rest: &[i64]| -> Vec<Vec<i64>> {
        match s {
            Sym::N(_) => box_below(rest),
            Sym::T(t) => match bounded_periods.get(&t) {
                None => vec![vec![0; k]],
                Some(js) => {
                    let lim: Vec<i64> = (0..k)
                        .map(|x| match objs[x] {
                            Obj::Period(t2, j) if t2 == t && js.contains(&j) => rest[x],
                            _ => 0,
                        })
                        .collect();
                    box_below(&lim)
                }
            },
        }
    };
    let mut prods: Vec<Production> = Vec::new();
    let mut seen: BTreeSet<(usize, Vec<Sym>)> = BTreeSet::new();
    for c in &budgets {
        for (p, pr) in g.productions.iter().enumerate() {
            let mut rest = c.clone();
            if let Some(x) = slot(Obj::Prod(p)) {
                if rest[x] == 0 {
                    continue;
                }
                rest[x] -= 1;
            }
            let has_nt = pr.rhs.iter().any(|s| matches!(s, Sym::N(_)));
            let mut combos: Vec<(Vec<Sym>, Vec<i64>)> = vec![(Vec::new(), vec![0; k])];
            for &s in &pr.rhs {
                let mut next = Vec::new();
                for (syms, used) in &combos {
                    let left: Vec<i64> = rest.iter().zip(used).map(|(r, u)| r - u).collect();
                    for sh in share_options(s, &left) {
                        let sym = match s {
                            Sym::N(a) => Sym::N(nt_index(&sh, a)),
                            Sym::T(t) => {
                                let key: Vec<i64> = match bounded_periods.get(&t) {
                                    None => Vec::new(),
                                    Some(js) => js
                                        .iter()
                                        .map(|&j| sh[slot(Obj::Period(t, j)).expect("slot")])
                                        .collect(),
                                };
                                Sym::T(tmap[&(t, key)])
                            }
                        };
                        let mut syms2 = syms.clone();
                        syms2.push(sym);
                        let used2: Vec<i64> = used.iter().zip(&sh).map(|(u, x)| u + x).collect();
                        next.push((syms2, used2));
                    }
                }
                combos = next;
            }
            for (rhs, used) in combos {
                if has_nt && used != rest {
                    continue;
                }
                let lhs = nt_index(c, pr.lhs);
                if seen.insert((lhs, rhs.clone())) {
                    prods.push(Production { lhs, rhs });
                }
            }
        }
    }
    let top_budget = vec![bi; k];
    let g2 = Grammar::new(names, terminals, nt_index(&top_budget, g.start), prods)?;
    let mut out = nest(&g2, &payloads, n.dim, true)?;
    let by_name: HashMap<&str, usize> = g2.nonterminals.iter().enumerate().map(|(i, s)| (s.as_str(), origin[i])).collect();
    let orig = |name: &str| by_name[name];
    out.name = format!("{}/budget{}", n.name, b);
    out.un = n.un.clone();
    out.restriction = n.restriction.clone();
    out.cin = n.cin.clone();
    out.cout = n.cout.clone();
    out.bd.left = n.bd.left.clone();
    out.bd.right = n.bd.right.clone();
    out.bd.inm = out.grammar.nonterminals.iter().map(|x| n.bd.inm[orig(x)].clone()).collect();
    out.bd.outm = out.grammar.nonterminals.iter().map(|x| n.bd.outm[orig(x)].clone()).collect();
    out.tags = out.grammar.nonterminals.iter().map(|x| n.tags[orig(x)]).collect();
    let created: BTreeSet<String> = g2.nonterminals.iter().cloned().collect();
    fit_children(&mut out, n, &created, &orig);
    Ok(out)
}

/// Budget components below the top take the in/out markings of their start.
fn fit_children(m: &mut Ngvas, n: &Ngvas, created: &BTreeSet<String>, orig: &dyn Fn(&str) -> usize) {
    for p in m.payloads.iter_mut() {
        let Payload::Child(c) = p else { continue };
        let start = c.grammar.nonterminals[c.grammar.start].clone();
        if !created.contains(&start) {
            continue;
        }
        let a = orig(&start);
        let (ci, co) = (n.bd.inm[a].clone(), n.bd.outm[a].clone());
        if ci.omega_set() == co.omega_set() {
            c.un = ci.omega_set();
            c.cin = ci;
            c.cout = co;
        }
        fit_children(c, n, created, orig);
    }
}

/// Outcome of the minimal-application search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisFire {
    /// `N` restricted to `base + P·z + P*`, one per minimal `z`.
    pub parts: Vec<Ngvas>,
    pub minimal: Vec<Vec<i64>>,
    /// Minimal period applications not covered by `minimal` whose emptiness
    /// was not refuted by the characteristic system.
    pub frontier: Vec<Vec<i64>>,
    pub bound: usize,
}

fn dominates(a: &[i64], b: &[i64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y)
}

fn minimal_of(mut v: Vec<Vec<i64>>) -> Vec<Vec<i64>> {
    v.sort_by_key(|z| (z.iter().sum::<i64>(), z.clone()));
    let mut out: Vec<Vec<i64>> = Vec::new();
    for z in v {
        if !out.iter().any(|m| dominates(&z, m)) {
            out.push(z);
        }
    }
    out
}

/// Restricts `n` to `base + P·z + P*`.
pub fn restrict_applications(n: &Ngvas, z: &[i64]) -> Ngvas {
    let mut m = n.clone();
    let r = &n.restriction;
    let mut base = r.base.clone();
    for (j, p) in r.periods.iter().enumerate() {
        for i in 0..n.dim {
            base[i] += z[j] * p[i];
        }
    }
    m.restriction = LinearSet { base, periods: r.periods.clone() };
    m.name = format!("{}>={}", n.name, fmt_vec(z));
    m
}

/// Minimal period applications `z` such that a run of length at most
/// `bound` has effect `base + P·z`, searched over `z ≤ bound·‖U‖` per entry.
pub fn basisfire_depth0(n: &Ngvas, bound: usize) -> Result<BasisFire> {
    if n.depth() != 0 {
        return contract(format!("{} has nesting depth {}; basisfire is implemented at depth 0", n.name, n.depth()));
    }
    let r = &n.restriction;
    let k = r.periods.len();
    let norm = n.all_updates().iter().flatten().map(|x| x.abs()).max().unwrap_or(0);
    let zcap = (bound as i64 * norm).max(1);
    let size = (zcap as f64 + 1.0).powi(k as i32);
    if size > MAX_APPLICATIONS as f64 {
        return contract(format!("application box of size {size} exceeds {MAX_APPLICATIONS}"));
    }
    let effects: BTreeSet<Vector> = runs_bounded(n, bound)?.iter().map(|t| effect(&t.word, n.dim)).collect();
    let apply = |z: &[i64]| -> Vector {
        (0..n.dim).map(|i| r.base[i] + (0..k).map(|j| z[j] * r.periods[j][i]).sum::<i64>()).collect()
    };
    let all = boxes(k, zcap);
    let achieved: Vec<Vec<i64>> = all.iter().filter(|z| effects.contains(&apply(z))).cloned().collect();
    let minimal = minimal_of(achieved);
    let rest: Vec<Vec<i64>> = all.into_iter().filter(|z| !minimal.iter().any(|m| dominates(z, m))).collect();
    let ch = build_char(n)?;
    let mut frontier = Vec::new();
    for z in minimal_of(rest) {
        let mut sys = ch.system.clone();
        for (j, &y) in ch.y.iter().enumerate() {
            sys.bounds[y].lower = z[j];
        }
        match ilp_feasible(&sys, ILP_BUDGET) {
            Ok(None) => {}
            Ok(Some(_)) | Err(Error::Budget(_)) => frontier.push(z),
            Err(e) => return Err(e),
        }
    }
    let parts = minimal.iter().map(|z| restrict_applications(n, z)).collect();
    Ok(BasisFire { parts, minimal, frontier, bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ngvas::{is_deconstruction, validate, Boundedness};
    use crate::rank::rank;
    use crate::vas::fire_concrete;

    fn gr(nts: &[&str], ts: &[&str], prods: &[(usize, &[Sym])]) -> Grammar {
        Grammar::new(
            nts.iter().map(|s| s.to_string()).collect(),
            ts.iter().map(|s| s.to_string()).collect(),
            0,
            prods.iter().map(|(l, r)| Production { lhs: *l, rhs: r.to_vec() }).collect(),
        )
        .unwrap()
    }

    fn fin(v: &[i64]) -> GMarking {
        GMarking::concrete(v)
    }

    /// `S -> S S | t_1 | ... | t_k`.
    fn nl(name: &str, ups: Vec<Vector>, cin: GMarking, cout: GMarking) -> Ngvas {
        let ts: Vec<String> = (0..ups.len()).map(|i| format!("t{}", i + 1)).collect();
        let ts: Vec<&str> = ts.iter().map(String::as_str).collect();
        let mut prods: Vec<(usize, Vec<Sym>)> = vec![(0, vec![Sym::N(0), Sym::N(0)])];
        for t in 0..ups.len() {
            prods.push((0, vec![Sym::T(t)]));
        }
        let prods: Vec<(usize, &[Sym])> = prods.iter().map(|(l, r)| (*l, r.as_slice())).collect();
        Ngvas::depth0(name, gr(&["S"], &ts, &prods), ups, cin, cout)
    }

    fn tiny() -> Ngvas {
        nl("tiny-nl", vec![vec![1], vec![-1]], fin(&[0]), fin(&[0]))
    }

    /// The third update is used exactly once and lies outside the support.
    fn once(cout: &[i64]) -> Ngvas {
        nl("once", vec![vec![1, 0], vec![-1, 0], vec![0, 1]], fin(&[0, 0]), fin(cout))
    }

    fn with_child() -> Ngvas {
        let d = 1;
        let cg = gr(&["A"], &["a", "b"], &[(0, &[Sym::N(0), Sym::N(0)]), (0, &[Sym::T(0)]), (0, &[Sym::T(1)])]);
        let mut c = Ngvas::depth0("C", cg, vec![vec![-1], vec![1]], GMarking::omega(d), GMarking::omega(d));
        c.un = BTreeSet::from([0]);
        c.restriction = LinearSet::new(vec![0], vec![vec![1], vec![-1]]).unwrap();
        let pg = gr(&["S"], &["C"], &[(0, &[Sym::N(0), Sym::N(0)]), (0, &[Sym::T(0)])]);
        let mut p = Ngvas::depth0("P", pg, vec![vec![0]], GMarking::omega(d), GMarking::omega(d));
        p.payloads = vec![Payload::Child(Box::new(c))];
        p.un = BTreeSet::from([0]);
        p.bd = Boundedness::trivial(d, 1);
        p
    }

    #[test]
    fn tiny_nl_is_perfect() {
        let r = check_conditions(&tiny(), 6).unwrap();
        assert!(r.all_hold(), "{:?}", r.verdicts);
        assert!(!r.verdicts.contains_key(&Condition::PumpingInt));
        let w = r.pumping.unwrap();
        let e = effect(&w.left_run.word, 1);
        assert!(e[0] >= 1);
        assert_eq!(fire_concrete(&w.left_run.source, &w.left_run.word), Some(w.left_run.target.clone()));
        assert_eq!(fire_concrete(&w.right_run.source, &w.right_run.word), Some(w.right_run.target.clone()));
        assert!(effect(&w.right_run.word, 1)[0] <= -1);
        assert_eq!(w.right_run.target, vec![0]);
    }

    #[test]
    fn production_outside_support() {
        let n = once(&[0, 1]);
        let r = check_conditions(&n, 4).unwrap();
        match r.get(Condition::Prods).unwrap() {
            Verdict::Fails(w) => assert!(w.contains("S -> t3"), "{w}"),
            v => panic!("expected failure, got {v}"),
        }
    }

    #[test]
    fn base_needs_longer_runs() {
        let p = with_child();
        assert!(validate(&p).is_empty(), "{:?}", validate(&p));
        let r1 = check_conditions(&p, 1).unwrap();
        assert_eq!(r1.get(Condition::Base), Some(&Verdict::Unknown(1)));
        let r4 = check_conditions(&p, 4).unwrap();
        assert_eq!(r4.get(Condition::Base), Some(&Verdict::Holds));
        for (c, v) in &r1.verdicts {
            if v.holds() {
                assert!(r4.verdicts[c].holds(), "{c} flipped");
            }
        }
    }

    #[test]
    fn fixed_and_rigid() {
        let rc = rigid_counters(&tiny()).unwrap();
        assert!(rc.fixed_left.is_empty() && rc.fixed_right.is_empty());
        let still = nl("still", vec![vec![0]], fin(&[0]), GMarking::omega(1));
        let rc = rigid_counters(&still).unwrap();
        assert_eq!(rc.rigid_left, BTreeSet::from([0]));
        assert!(rc.rigid_right.is_empty());
        let r = check_conditions(&still, 2).unwrap();
        assert!(r.get(Condition::Rigid).unwrap().fails());
        let free = nl("free", vec![vec![0]], GMarking::omega(1), GMarking::omega(1));
        let rc = rigid_counters(&free).unwrap();
        assert_eq!(rc.fixed_left, BTreeSet::from([0]));
        assert!(rc.all().is_empty());
    }

    #[test]
    fn rigid_values_propagate() {
        let n = nl("mixed", vec![vec![1, 0], vec![-1, 0]], fin(&[0, 2]), fin(&[0, 2]));
        let rc = rigid_counters(&n).unwrap();
        assert_eq!(rc.rigid_left, BTreeSet::from([1]));
        let (inm, outm) = rigid_markings(&n, &rc).unwrap().unwrap();
        assert_eq!(inm[0], GMarking(vec![Nw::Omega, Nw::Fin(2)]));
        assert_eq!(outm[0], inm[0]);
    }

    #[test]
    fn budget_refinement() {
        let n = once(&[0, 1]);
        let p = n.grammar.productions.iter().position(|pr| pr.rhs == vec![Sym::T(2)]).unwrap();
        let out = refine_budget(&n, &BTreeSet::from([p]), &BTreeMap::new(), 1).unwrap();
        assert!(validate(&out).is_empty(), "{:?}", validate(&out));
        let v = is_deconstruction(&n, &[out.clone()], 4).unwrap();
        assert!(v.holds, "{}", v.detail);
        assert!(rank(&out).unwrap() < rank(&n).unwrap());
        let err = refine_budget(&n, &BTreeSet::from([0]), &BTreeMap::new(), 1);
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn zero_budget_drops_unused_production() {
        let n = once(&[0, 0]);
        let out = refine_budget(&n, &BTreeSet::from([3]), &BTreeMap::new(), 0).unwrap();
        assert_eq!(runs_bounded(&n, 4).unwrap(), runs_bounded(&out, 4).unwrap());
    }

    fn budget_of(name: &str) -> Vec<i64> {
        name.rsplit_once('@').map(|(_, c)| c.split(',').map(|x| x.parse().unwrap()).collect()).unwrap()
    }

    #[test]
    fn budget_is_conserved() {
        let n = once(&[0, 2]);
        let out = refine_budget(&n, &BTreeSet::from([3]), &BTreeMap::new(), 2).unwrap();
        let mut stack = vec![&out];
        let mut checked = 0;
        while let Some(m) = stack.pop() {
            let g = &m.grammar;
            for pr in &g.productions {
                let lhs = budget_of(&g.nonterminals[pr.lhs]);
                let nts: Vec<usize> = pr.rhs.iter().filter_map(|s| s.nonterminal()).collect();
                let kids: Vec<&Ngvas> = pr.rhs.iter().filter_map(|s| s.terminal().and_then(|t| m.child(t))).collect();
                if nts.len() + kids.len() == 0 {
                    continue;
                }
                let mut sum = 0;
                for &b in &nts {
                    sum += budget_of(&g.nonterminals[b])[0];
                }
                for c in &kids {
                    sum += budget_of(&c.grammar.nonterminals[c.grammar.start])[0];
                }
                let dec = i64::from(pr.rhs.iter().any(|s| s.terminal().is_some_and(|t| m.update(t) == Some(&vec![0, 1]))));
                assert_eq!(sum + dec, lhs[0], "{}", g.prod_string(0));
                checked += 1;
            }
            stack.extend(m.children().map(|(_, c)| c));
        }
        assert!(checked > 0);
    }

    #[test]
    fn useless_removed() {
        let g = gr(
            &["S", "A"],
            &["u", "w"],
            &[
                (0, &[Sym::N(0), Sym::N(0)]),
                (0, &[Sym::T(0)]),
                (0, &[Sym::T(1)]),
                (0, &[Sym::N(1), Sym::N(0)]),
                (1, &[Sym::N(1), Sym::T(0)]),
            ],
        );
        let n = Ngvas::depth0("dead", g, vec![vec![1], vec![-1]], fin(&[0]), fin(&[0]));
        let m = remove_useless(&n);
        assert_eq!(m.grammar.nonterminals, vec!["S".to_string()]);
        assert_eq!(m.grammar.num_prods(), 3);
        assert_eq!(runs_bounded(&n, 4).unwrap(), runs_bounded(&m, 4).unwrap());
    }

    #[test]
    fn basisfire_minimal_applications() {
        let mut n = tiny();
        n.restriction = LinearSet::new(vec![0], vec![vec![1]]).unwrap();
        let bf = basisfire_depth0(&n, 4).unwrap();
        assert_eq!(bf.minimal, vec![vec![0]]);
        assert!(bf.frontier.is_empty());
        assert_eq!(bf.parts.len(), 1);
        let empty = nl("empty", vec![vec![1]], fin(&[0]), fin(&[0]));
        let bf = basisfire_depth0(&empty, 4).unwrap();
        assert!(bf.parts.is_empty());
        assert!(bf.frontier.is_empty());
        assert!(matches!(basisfire_depth0(&with_child(), 2), Err(Error::Contract(_))));
    }
}
