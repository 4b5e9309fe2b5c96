//! Characteristic equation systems, their support, and the approximators
//! `intpost`/`intpre` (integer) and `natpost`/`natpre` (bounded run oracle).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{contract, Result};
use crate::grammar::{Shape, Sym};
use crate::ngvas::{symbol_runs, Kind, Ngvas, Payload, DEFAULT_OMEGA_CAP};
use crate::numerics::{
    full_hom_solution, project_points, support, Bound, LinearIntSystem, LinearSet,
};
use crate::vas::{ideal_decompose, GMarking, Marking, Nw, Vector};

/// Cap on enumerated points of a bounded projection.
pub const PROJECTION_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dir {
    Whole,
    Left,
    CenterLeft,
    CenterRight,
    Right,
}

impl Dir {
    pub fn suffix(self) -> &'static str {
        match self {
            Dir::Whole => "",
            Dir::Left => "^l",
            Dir::CenterLeft => "^cl",
            Dir::CenterRight => "^cr",
            Dir::Right => "^r",
        }
    }
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dir::Whole => "whole",
            Dir::Left => "left",
            Dir::CenterLeft => "center-left",
            Dir::CenterRight => "center-right",
            Dir::Right => "right",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChildVars {
    pub x_u: Vec<usize>,
    pub y: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirVars {
    pub dir: Dir,
    pub x_t: BTreeMap<usize, usize>,
    pub x_u: Vec<usize>,
    pub x_in: Vec<usize>,
    pub x_out: Vec<usize>,
    pub children: BTreeMap<usize, ChildVars>,
    pub c_in: GMarking,
    pub c_out: GMarking,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharSystem {
    pub system: LinearIntSystem,
    pub shape: Shape,
    pub homogeneous: bool,
    /// All updates of the NGVAS at every depth, indexing `x_U`.
    pub updates: Vec<Vector>,
    /// `x_P[p]`; `None` for the center production of a linear grammar.
    pub x_p: Vec<Option<usize>>,
    pub x_u: Vec<usize>,
    pub x_in: Vec<usize>,
    pub x_out: Vec<usize>,
    pub y: Vec<usize>,
    pub dirs: Vec<DirVars>,
    /// The center production, linear shape only.
    pub center: Option<usize>,
}

/// Production split of a linear grammar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearSplit {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub center: usize,
    pub center_left: Option<usize>,
    pub center_right: Option<usize>,
}

/// Left productions emit terminals before the nonterminal, right ones after.
/// Unit productions count as left.
pub fn linear_split(n: &Ngvas) -> Result<LinearSplit> {
    let exits = n.exit_productions();
    if n.shape() != Shape::Linear || exits.len() != 1 {
        return contract(format!("{} is not linear with a unique exit production", n.name));
    }
    let center = exits[0];
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for (p, pr) in n.grammar.productions.iter().enumerate() {
        if p == center {
            continue;
        }
        match pr.rhs.iter().position(|s| matches!(s, Sym::N(_))) {
            Some(0) if pr.rhs.len() == 2 => right.push(p),
            _ => left.push(p),
        }
    }
    let crhs = &n.grammar.productions[center].rhs;
    let t = |i: usize| crhs.get(i).and_then(|s| s.terminal());
    Ok(LinearSplit { left, right, center, center_left: t(0), center_right: t(1) })
}

fn add_marking_vars(sys: &mut LinearIntSystem, name: &str, sfx: &str, c: &GMarking, hom: bool) -> Vec<usize> {
    c.0.iter()
        .enumerate()
        .map(|(i, v)| {
            let b = match v {
                Nw::Fin(k) => Bound::fixed(if hom { 0 } else { *k }),
                Nw::Omega => Bound::NAT,
            };
            sys.add_var(format!("{name}{sfx}[{}]", i + 1), b)
        })
        .collect()
}

struct Builder<'a> {
    n: &'a Ngvas,
    hom: bool,
    sys: LinearIntSystem,
    updates: Vec<Vector>,
}

impl Builder<'_> {
    fn uidx(&self, u: &Vector) -> usize {
        self.updates.iter().position(|x| x == u).expect("update collected")
    }

    /// `Eval` for one direction. `counts[t]` lists `(x_P variable or None for
    /// the constant one, multiplicity)` producing terminal `t`.
    fn eval(
        &mut self,
        dir: Dir,
        counts: &BTreeMap<usize, Vec<(Option<usize>, i64)>>,
        c_in: GMarking,
        c_out: GMarking,
    ) -> DirVars {
        let sfx = dir.suffix();
        let d = self.n.dim;
        let g = &self.n.grammar;
        let mut x_t = BTreeMap::new();
        for (&t, terms) in counts {
            let v = self.sys.add_var(format!("x_T{sfx}[{}]", g.terminals[t]), Bound::NAT);
            let mut row = vec![(v, 1)];
            let mut k = 0;
            for &(p, c) in terms {
                match p {
                    Some(p) => row.push((p, -c)),
                    None => k += if self.hom { 0 } else { c },
                }
            }
            self.sys.add_row(&row, k);
            x_t.insert(t, v);
        }
        let nu = self.updates.len();
        let x_u: Vec<usize> = (0..nu)
            .map(|u| self.sys.add_var(format!("x_U{sfx}[{}]", u + 1), Bound::NAT))
            .collect();
        let mut children = BTreeMap::new();
        let mut u_rows: Vec<Vec<(usize, i64)>> = x_u.iter().map(|&v| vec![(v, 1)]).collect();
        for (&t, &xt) in &x_t {
            match &self.n.payloads[t] {
                Payload::Update(u) => u_rows[self.uidx(u)].push((xt, -1)),
                Payload::Child(m) => {
                    let name = &g.terminals[t];
                    let cx: Vec<usize> = (0..nu)
                        .map(|u| self.sys.add_var(format!("x_{{{name},U}}{sfx}[{}]", u + 1), Bound::NAT))
                        .collect();
                    let cy: Vec<usize> = (0..m.restriction.periods.len())
                        .map(|j| self.sys.add_var(format!("y_{{{name}}}{sfx}[{}]", j + 1), Bound::NAT))
                        .collect();
                    for i in 0..d {
                        let mut row: Vec<(usize, i64)> =
                            cx.iter().enumerate().map(|(u, &v)| (v, self.updates[u][i])).collect();
                        row.push((xt, -m.restriction.base[i]));
                        for (j, &yv) in cy.iter().enumerate() {
                            row.push((yv, -m.restriction.periods[j][i]));
                        }
                        self.sys.add_row(&row, 0);
                    }
                    for (u, &v) in cx.iter().enumerate() {
                        u_rows[u].push((v, -1));
                    }
                    children.insert(t, ChildVars { x_u: cx, y: cy });
                }
            }
        }
        for row in u_rows {
            self.sys.add_row(&row, 0);
        }
        let x_in = add_marking_vars(&mut self.sys, "x_in", sfx, &c_in, self.hom);
        let x_out = add_marking_vars(&mut self.sys, "x_out", sfx, &c_out, self.hom);
        for i in 0..d {
            let mut row = vec![(x_out[i], 1), (x_in[i], -1)];
            row.extend(x_u.iter().enumerate().map(|(u, &v)| (v, -self.updates[u][i])));
            self.sys.add_row(&row, 0);
        }
        DirVars { dir, x_t, x_u, x_in, x_out, children, c_in, c_out }
    }

    fn restriction(&mut self, x_u: &[usize]) -> Vec<usize> {
        let r: &LinearSet = &self.n.restriction;
        let y: Vec<usize> = (0..r.periods.len())
            .map(|j| self.sys.add_var(format!("y[{}]", j + 1), Bound::NAT))
            .collect();
        for i in 0..self.n.dim {
            let mut row: Vec<(usize, i64)> =
                x_u.iter().enumerate().map(|(u, &v)| (v, self.updates[u][i])).collect();
            row.extend(y.iter().enumerate().map(|(j, &v)| (v, -r.periods[j][i])));
            self.sys.add_row(&row, if self.hom { 0 } else { r.base[i] });
        }
        y
    }

    fn eek(&mut self, x_p: &[Option<usize>]) {
        let g = &self.n.grammar;
        let effn = g.effect_matrix(&g.nonterminal_syms());
        for (a, row) in effn.iter().enumerate() {
            let mut terms = Vec::new();
            let mut k = if !self.hom && a == g.start { -1 } else { 0 };
            for (p, &c) in row.iter().enumerate() {
                match x_p[p] {
                    Some(v) => terms.push((v, c)),
                    None if !self.hom => k -= c,
                    None => {}
                }
            }
            self.sys.add_row(&terms, k);
        }
    }
}

fn term_counts(n: &Ngvas, prods: &[usize], x_p: &[Option<usize>]) -> BTreeMap<usize, Vec<(Option<usize>, i64)>> {
    let mut out: BTreeMap<usize, Vec<(Option<usize>, i64)>> = BTreeMap::new();
    for &p in prods {
        let mut cnt: BTreeMap<usize, i64> = BTreeMap::new();
        for s in &n.grammar.productions[p].rhs {
            if let Sym::T(t) = s {
                *cnt.entry(*t).or_default() += 1;
            }
        }
        for (t, c) in cnt {
            out.entry(t).or_default().push((x_p[p], c));
        }
    }
    out
}

fn context_of(n: &Ngvas, t: Option<usize>) -> (GMarking, GMarking) {
    match t.and_then(|t| n.child(t)) {
        Some(c) => (c.cin.clone(), c.cout.clone()),
        None => (GMarking::omega(n.dim), GMarking::omega(n.dim)),
    }
}

fn build(n: &Ngvas, hom: bool) -> Result<CharSystem> {
    if n.kind == Kind::Weak {
        return contract(format!("{} is weak; characteristic equations need a strong NGVAS", n.name));
    }
    let mut b = Builder { n, hom, sys: LinearIntSystem::new(), updates: n.all_updates() };
    let g = &n.grammar;
    let shape = n.shape();
    let d = n.dim;
    let (x_p, dirs, center) = if shape == Shape::NonLinear {
        let x_p: Vec<Option<usize>> = (0..g.num_prods())
            .map(|p| Some(b.sys.add_var(format!("x_P[{}]", p + 1), Bound::NAT)))
            .collect();
        b.eek(&x_p);
        let all: Vec<usize> = (0..g.num_prods()).collect();
        let counts = term_counts(n, &all, &x_p);
        let dv = b.eval(Dir::Whole, &counts, n.cin.clone(), n.cout.clone());
        (x_p, vec![dv], None)
    } else {
        let split = linear_split(n)?;
        let mut x_p: Vec<Option<usize>> = vec![None; g.num_prods()];
        for &p in split.left.iter().chain(&split.right) {
            x_p[p] = Some(b.sys.add_var(format!("x_P[{}]", p + 1), Bound::NAT));
        }
        b.eek(&x_p);
        let (cl_in, cl_out) = context_of(n, split.center_left);
        let (cr_in, cr_out) = context_of(n, split.center_right);
        let mut dirs = Vec::new();
        let counts = term_counts(n, &split.left, &x_p);
        dirs.push(b.eval(Dir::Left, &counts, n.cin.clone(), cl_in.clone()));
        let one = |t: Option<usize>| -> BTreeMap<usize, Vec<(Option<usize>, i64)>> {
            t.into_iter().map(|t| (t, vec![(None, 1)])).collect()
        };
        dirs.push(b.eval(Dir::CenterLeft, &one(split.center_left), cl_in, cl_out));
        dirs.push(b.eval(Dir::CenterRight, &one(split.center_right), cr_in, cr_out.clone()));
        let counts = term_counts(n, &split.right, &x_p);
        dirs.push(b.eval(Dir::Right, &counts, cr_out, n.cout.clone()));
        for w in 0..3 {
            for i in 0..d {
                let (o, inn) = (dirs[w].x_out[i], dirs[w + 1].x_in[i]);
                b.sys.add_row(&[(o, 1), (inn, -1)], 0);
            }
        }
        (x_p, dirs, Some(split.center))
    };
    let (x_u, x_in, x_out) = if dirs.len() == 1 {
        (dirs[0].x_u.clone(), dirs[0].x_in.clone(), dirs[0].x_out.clone())
    } else {
        let x_u: Vec<usize> = (0..b.updates.len())
            .map(|u| b.sys.add_var(format!("x_U[{}]", u + 1), Bound::NAT))
            .collect();
        for (u, &v) in x_u.iter().enumerate() {
            let mut row = vec![(v, 1)];
            row.extend(dirs.iter().map(|dv| (dv.x_u[u], -1)));
            b.sys.add_row(&row, 0);
        }
        (x_u, dirs[0].x_in.clone(), dirs[3].x_out.clone())
    };
    let y = b.restriction(&x_u);
    Ok(CharSystem {
        system: b.sys,
        shape,
        homogeneous: hom,
        updates: b.updates,
        x_p,
        x_u,
        x_in,
        x_out,
        y,
        dirs,
        center,
    })
}

/// `Char(N)`.
pub fn build_char(n: &Ngvas) -> Result<CharSystem> {
    build(n, false)
}

/// `homChar(N)`: zero-version contexts, homogeneous EEK and restriction.
pub fn build_hom_char(n: &Ngvas) -> Result<CharSystem> {
    build(n, true)
}

impl CharSystem {
    pub fn var_name(&self, v: usize) -> &str {
        &self.system.variables[v]
    }

    /// Fixes input, output and update counts to those of a concrete run.
    pub fn fix_run(&mut self, m: &[i64], parikh_u: &[i64], m2: &[i64]) {
        for (i, &v) in self.x_in.iter().enumerate() {
            self.system.fix(v, m[i]);
        }
        for (i, &v) in self.x_out.iter().enumerate() {
            self.system.fix(v, m2[i]);
        }
        for (u, &v) in self.x_u.iter().enumerate() {
            self.system.fix(v, parikh_u[u]);
        }
    }
}

/// Support of `homChar(N)` as variable indices, together with the system.
pub fn support_of(n: &Ngvas) -> Result<(CharSystem, BTreeSet<usize>)> {
    let hc = build_hom_char(n)?;
    let s = support(&hc.system)?;
    Ok((hc, s))
}

/// A solution of `homChar(N)` positive exactly on the support.
pub fn full_hom(n: &Ngvas) -> Result<(CharSystem, Vec<i64>)> {
    let hc = build_hom_char(n)?;
    let w = full_hom_solution(&hc.system)?;
    Ok((hc, w))
}

/// Counts of each update of `CharSystem::updates` in a run.
pub fn parikh_updates(updates: &[Vector], run: &[Vector]) -> Vec<i64> {
    let mut out = vec![0; updates.len()];
    for r in run {
        if let Some(i) = updates.iter().position(|u| u == r) {
            out[i] += 1;
        }
    }
    out
}

fn omega_abstraction(
    sys: &LinearIntSystem,
    coords: &[usize],
    unbounded: &BTreeSet<usize>,
    fixed_omega: &BTreeSet<usize>,
) -> Result<Vec<GMarking>> {
    let bounded: Vec<usize> = (0..coords.len())
        .filter(|i| !unbounded.contains(i) && !fixed_omega.contains(i))
        .collect();
    let vars: Vec<usize> = bounded.iter().map(|&i| coords[i]).collect();
    let points = project_points(sys, &vars, PROJECTION_LIMIT)?;
    let mut outs = BTreeSet::new();
    for pt in points {
        let mut m = vec![Nw::Omega; coords.len()];
        for (k, &i) in bounded.iter().enumerate() {
            m[i] = Nw::Fin(pt[k]);
        }
        outs.insert(GMarking(m));
    }
    // Every point is kept: dropping ≤-smaller ones would lose runs under ⊑.
    Ok(outs.into_iter().collect())
}

/// `(m ± R) ∩ N^d`, ω-abstracted. `sign` is +1 for post, −1 for pre.
fn terminal_approx(m: &GMarking, r: &LinearSet, sign: i64) -> Result<Vec<GMarking>> {
    let mut sys = LinearIntSystem::new();
    let y: Vec<usize> = (0..r.periods.len())
        .map(|j| sys.add_var(format!("y[{}]", j + 1), Bound::NAT))
        .collect();
    let mut coords = Vec::new();
    let mut omega = BTreeSet::new();
    for (i, v) in m.0.iter().enumerate() {
        let z = sys.add_var(format!("z[{}]", i + 1), Bound::NAT);
        coords.push(z);
        match v {
            Nw::Omega => {
                omega.insert(i);
            }
            Nw::Fin(k) => {
                let mut row = vec![(z, 1)];
                row.extend(y.iter().enumerate().map(|(j, &yv)| (yv, -sign * r.periods[j][i])));
                sys.add_row(&row, k + sign * r.base[i]);
            }
        }
    }
    let mut unb = BTreeSet::new();
    for (i, &z) in coords.iter().enumerate() {
        if !omega.contains(&i) && crate::numerics::lp_unbounded_above(&sys, z)? == Some(true) {
            unb.insert(i);
        }
    }
    omega_abstraction(&sys, &coords, &unb, &omega)
}

fn symbol_restriction(n: &Ngvas, t: usize) -> LinearSet {
    match &n.payloads[t] {
        Payload::Update(u) => LinearSet { base: u.clone(), periods: vec![] },
        Payload::Child(c) => c.restriction.clone(),
    }
}

fn in_or_omega(n: &Ngvas, s: Sym) -> GMarking {
    n.in_of(s).unwrap_or_else(|| GMarking::omega(n.dim))
}

fn out_or_omega(n: &Ngvas, s: Sym) -> GMarking {
    n.out_of(s).unwrap_or_else(|| GMarking::omega(n.dim))
}

fn nonterminal_approx(n: &Ngvas, m: &GMarking, a: usize, post: bool) -> Result<Vec<GMarking>> {
    let v = if post {
        n.variant(m, a, &out_or_omega(n, Sym::N(a)))
    } else {
        n.variant(&in_or_omega(n, Sym::N(a)), a, m)
    };
    let c = build_char(&v)?;
    let hc = build_hom_char(&v)?;
    let supp = support(&hc.system)?;
    let (coords, hcoords) = if post { (&c.x_out, &hc.x_out) } else { (&c.x_in, &hc.x_in) };
    let unb: BTreeSet<usize> = (0..n.dim).filter(|&i| supp.contains(&hcoords[i])).collect();
    omega_abstraction(&c.system, coords, &unb, &BTreeSet::new())
}

/// Integer post-approximation of symbol `s` from `m`.
pub fn intpost(n: &Ngvas, m: &GMarking, s: Sym) -> Result<Vec<GMarking>> {
    if !m.specializes(&in_or_omega(n, s)) {
        return Ok(Vec::new());
    }
    match s {
        Sym::T(t) => terminal_approx(m, &symbol_restriction(n, t), 1),
        Sym::N(a) => nonterminal_approx(n, m, a, true),
    }
}

/// Integer pre-approximation of symbol `s` towards `m`.
pub fn intpre(n: &Ngvas, m: &GMarking, s: Sym) -> Result<Vec<GMarking>> {
    if !m.specializes(&out_or_omega(n, s)) {
        return Ok(Vec::new());
    }
    match s {
        Sym::T(t) => terminal_approx(m, &symbol_restriction(n, t), -1),
        Sym::N(a) => nonterminal_approx(n, m, a, false),
    }
}

/// Result of a bounded approximator; `bound` is the run length explored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundedApprox {
    pub ideals: Vec<GMarking>,
    pub bound: usize,
}

impl BoundedApprox {
    /// Membership of `m` in the downward closure of the ideals.
    pub fn covers(&self, m: &GMarking) -> bool {
        crate::vas::dc_contains(&self.ideals, m)
    }
}

/// Promotes to ω every coordinate on which one marking strictly dominates
/// another, until no strict dominance is left.
pub fn accelerate(ms: &[GMarking]) -> Vec<GMarking> {
    let mut cur: Vec<GMarking> = ideal_decompose(ms.iter());
    let mut all: Vec<GMarking> = ms.to_vec();
    loop {
        let mut grown = Vec::new();
        for a in &all {
            for b in &cur {
                if a != b && a.below(b) {
                    let inc = b.strict_increase(a);
                    if !inc.is_empty() {
                        let nb = b.with_omega(&inc);
                        if !cur.contains(&nb) {
                            grown.push(nb);
                        }
                    }
                }
            }
        }
        if grown.is_empty() {
            return cur;
        }
        all.extend(grown.iter().cloned());
        cur = ideal_decompose(cur.iter().chain(grown.iter()));
    }
}

fn natural_approx(n: &Ngvas, m: &GMarking, s: Sym, bound: usize, post: bool) -> Result<BoundedApprox> {
    let gate = if post { in_or_omega(n, s) } else { out_or_omega(n, s) };
    let other = if post { out_or_omega(n, s) } else { in_or_omega(n, s) };
    if !m.specializes(&gate) {
        return Ok(BoundedApprox { ideals: Vec::new(), bound });
    }
    let cap = DEFAULT_OMEGA_CAP;
    let concrete: Vec<Marking> = m.concretizations(cap);
    let omega = m.omega_set();
    let mut ideals = Vec::new();
    for c in &concrete {
        let runs = if post {
            symbol_runs(n, s, std::slice::from_ref(c), bound)?
        } else {
            let dec: Vec<i64> = (0..n.dim)
                .map(|i| n.all_updates().iter().map(|u| (-u[i]).max(0)).max().unwrap_or(0))
                .collect();
            let hi: Vec<i64> = (0..n.dim).map(|i| c[i] + bound as i64 * dec[i]).collect();
            let srcs = box_below(&hi);
            let all = symbol_runs(n, s, &srcs, bound)?;
            all.into_iter().filter(|r| &r.target == c).collect()
        };
        let found: Vec<GMarking> = runs
            .iter()
            .map(|r| if post { &r.target } else { &r.source })
            .map(|x| GMarking::concrete(x))
            .filter(|x| x.specializes(&other))
            .collect();
        ideals.extend(accelerate(&found));
    }
    let ideals: Vec<GMarking> = ideals.iter().map(|x| x.with_omega(&omega)).collect();
    Ok(BoundedApprox { ideals: ideal_decompose(ideals.iter()), bound })
}

fn box_below(top: &[i64]) -> Vec<Marking> {
    let mut out: Vec<Marking> = vec![Vec::new()];
    for &h in top {
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

/// Bounded natural post-approximation of `s` from `m` with ω acceleration.
pub fn natpost_bounded(n: &Ngvas, m: &GMarking, s: Sym, bound: usize) -> Result<BoundedApprox> {
    natural_approx(n, m, s, bound, true)
}

/// Bounded natural pre-approximation of `s` towards `m` with ω acceleration.
pub fn natpre_bounded(n: &Ngvas, m: &GMarking, s: Sym, bound: usize) -> Result<BoundedApprox> {
    natural_approx(n, m, s, bound, false)
}
