//! Markings over `N ∪ {ω}`, firing, hurdles and downward-closed sets.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{structural, Result};
use crate::numerics::{Bound, LinearIntSystem};

pub type Vector = Vec<i64>;
pub type Marking = Vec<i64>;
pub type Run = Vec<Vector>;

/// A natural number or ω. The derived order puts ω above every number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Nw {
    Fin(i64),
    Omega,
}

impl Nw {
    pub fn is_omega(self) -> bool {
        self == Nw::Omega
    }

    pub fn fin(self) -> Option<i64> {
        match self {
            Nw::Fin(v) => Some(v),
            Nw::Omega => None,
        }
    }

    /// `k ⊑ k`, `k ⊑ ω`, `ω ⊑ ω`.
    pub fn specializes(self, other: Nw) -> bool {
        other == Nw::Omega || self == other
    }
}

impl fmt::Display for Nw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nw::Fin(v) => write!(f, "{v}"),
            Nw::Omega => write!(f, "w"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GMarking(pub Vec<Nw>);

impl GMarking {
    pub fn concrete(m: &[i64]) -> Self {
        GMarking(m.iter().map(|&v| Nw::Fin(v)).collect())
    }

    pub fn omega(d: usize) -> Self {
        GMarking(vec![Nw::Omega; d])
    }

    pub fn zero(d: usize) -> Self {
        GMarking(vec![Nw::Fin(0); d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn omega_set(&self) -> BTreeSet<usize> {
        (0..self.dim()).filter(|&i| self.0[i].is_omega()).collect()
    }

    pub fn omega_count(&self) -> usize {
        self.0.iter().filter(|v| v.is_omega()).count()
    }

    pub fn is_concrete(&self) -> bool {
        self.omega_count() == 0
    }

    pub fn to_concrete(&self) -> Option<Marking> {
        self.0.iter().map(|v| v.fin()).collect()
    }

    /// `self ⊑ other`.
    pub fn specializes(&self, other: &GMarking) -> bool {
        self.dim() == other.dim() && self.0.iter().zip(&other.0).all(|(a, b)| a.specializes(*b))
    }

    /// Pointwise `≤` with ω on top.
    pub fn below(&self, other: &GMarking) -> bool {
        self.dim() == other.dim() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// `m ∼ m'`: equal wherever both are concrete.
    pub fn compatible(&self, other: &GMarking) -> bool {
        self.meet(other).is_some()
    }

    /// The largest common specialization, if any.
    pub fn meet(&self, other: &GMarking) -> Option<GMarking> {
        if self.dim() != other.dim() {
            return None;
        }
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| match (a, b) {
                (Nw::Omega, x) | (x, Nw::Omega) => Some(x),
                (Nw::Fin(x), Nw::Fin(y)) if x == y => Some(a),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(GMarking)
    }

    /// Concrete entries set to 0, ω kept.
    pub fn zero_version(&self) -> GMarking {
        GMarking(
            self.0
                .iter()
                .map(|v| if v.is_omega() { Nw::Omega } else { Nw::Fin(0) })
                .collect(),
        )
    }

    /// Sets the given coordinates to ω.
    pub fn with_omega(&self, coords: &BTreeSet<usize>) -> GMarking {
        let mut m = self.clone();
        for &i in coords {
            m.0[i] = Nw::Omega;
        }
        m
    }

    /// `self + u`, ω absorbing; `None` if a concrete entry drops below 0.
    pub fn add(&self, u: &[i64]) -> Option<GMarking> {
        self.0
            .iter()
            .zip(u)
            .map(|(&a, &x)| match a {
                Nw::Omega => Some(Nw::Omega),
                Nw::Fin(v) if v + x >= 0 => Some(Nw::Fin(v + x)),
                Nw::Fin(_) => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(GMarking)
    }

    /// Strict coordinates where `self` exceeds `smaller` (which must be `≤`).
    pub fn strict_increase(&self, smaller: &GMarking) -> BTreeSet<usize> {
        (0..self.dim()).filter(|&i| smaller.0[i] < self.0[i]).collect()
    }

    /// Concrete markings `m ⊑ self`, with ω coordinates drawn from `0..=cap`.
    pub fn concretizations(&self, cap: i64) -> Vec<Marking> {
        let mut out: Vec<Marking> = vec![Vec::new()];
        for v in &self.0 {
            let choices: Vec<i64> = match v {
                Nw::Fin(x) => vec![*x],
                Nw::Omega => (0..=cap).collect(),
            };
            out = out
                .into_iter()
                .flat_map(|p| {
                    choices.iter().map(move |&c| {
                        let mut q = p.clone();
                        q.push(c);
                        q
                    })
                })
                .collect();
        }
        out
    }
}

impl fmt::Display for GMarking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Fires `r` from `m`. `None` means disabled.
pub fn fire(m: &GMarking, r: &[Vector]) -> Result<Option<GMarking>> {
    let mut cur = m.clone();
    for u in r {
        if u.len() != m.dim() {
            return structural(format!(
                "update of dimension {} fired on marking of dimension {}",
                u.len(),
                m.dim()
            ));
        }
        match cur.add(u) {
            Some(n) => cur = n,
            None => return Ok(None),
        }
    }
    Ok(Some(cur))
}

/// Concrete firing; `None` if disabled.
pub fn fire_concrete(m: &[i64], r: &[Vector]) -> Option<Marking> {
    let mut cur = m.to_vec();
    for u in r {
        for (c, x) in cur.iter_mut().zip(u) {
            *c += x;
            if *c < 0 {
                return None;
            }
        }
    }
    Some(cur)
}

pub fn effect(r: &[Vector], d: usize) -> Vector {
    let mut e = vec![0; d];
    for u in r {
        for (a, b) in e.iter_mut().zip(u) {
            *a += b;
        }
    }
    e
}

/// The least marking enabling `r`.
pub fn hurdle(r: &[Vector], d: usize) -> Marking {
    let mut h = vec![0; d];
    let mut e = vec![0i64; d];
    for u in r {
        for i in 0..d {
            e[i] += u[i];
            h[i] = h[i].max(-e[i]);
        }
    }
    h
}

pub fn reverse(r: &[Vector]) -> Run {
    r.iter()
        .rev()
        .map(|u| u.iter().map(|x| -x).collect())
        .collect()
}

/// `m ⊓ m'`, `None` when incompatible.
pub fn meet(a: &GMarking, b: &GMarking) -> Option<GMarking> {
    a.meet(b)
}

/// The maximal elements of `s`, sorted; they generate the same downward closure.
pub fn ideal_decompose<'a>(s: impl IntoIterator<Item = &'a GMarking>) -> Vec<GMarking> {
    let all: BTreeSet<GMarking> = s.into_iter().cloned().collect();
    all.iter()
        .filter(|m| !all.iter().any(|o| o != *m && m.below(o)))
        .cloned()
        .collect()
}

/// Splits `m↓` into disjoint parts `{a} × N^Ω(m)`, one per concrete point `a`
/// below `m` on the concrete coordinates.
pub fn ideal_parts(m: &GMarking) -> Vec<GMarking> {
    let mut out = vec![Vec::new()];
    for v in &m.0 {
        let choices: Vec<Nw> = match v {
            Nw::Fin(x) => (0..=*x).map(Nw::Fin).collect(),
            Nw::Omega => vec![Nw::Omega],
        };
        out = out
            .into_iter()
            .flat_map(|p: Vec<Nw>| {
                choices.iter().map(move |&c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    out.into_iter().map(GMarking).collect()
}

/// Entry `k` counts generators with exactly `k` ω entries.
pub fn dc_type(s: &[GMarking]) -> Vec<usize> {
    let d = s.iter().map(|m| m.dim()).max().unwrap_or(0);
    let mut t = vec![0; d + 1];
    for m in s {
        t[m.omega_count()] += 1;
    }
    t
}

/// Whether some generator of the ideal decomposition covers `m`.
pub fn dc_contains(dc: &[GMarking], m: &GMarking) -> bool {
    dc.iter().any(|g| m.below(g))
}

/// The marking equation `x_in + U·y − x_out = 0` over the columns of `updates`.
/// Variables: `x_in[i]`, `y[j]`, `x_out[i]` in that order.
pub fn mark_eq_system(updates: &[Vector], d: usize) -> LinearIntSystem {
    let mut sys = LinearIntSystem::new();
    let xin: Vec<usize> = (0..d).map(|i| sys.add_var(format!("x_in[{i}]"), Bound::NAT)).collect();
    let ys: Vec<usize> = (0..updates.len())
        .map(|j| sys.add_var(format!("y[{j}]"), Bound::NAT))
        .collect();
    let xout: Vec<usize> = (0..d).map(|i| sys.add_var(format!("x_out[{i}]"), Bound::NAT)).collect();
    for i in 0..d {
        let mut t = vec![(xin[i], 1), (xout[i], -1)];
        for (j, u) in updates.iter().enumerate() {
            t.push((ys[j], u[i]));
        }
        sys.add_row(&t, 0);
    }
    sys
}

/// Checks `(m, Parikh(r), m')` against the marking equation of the distinct updates in `r`.
pub fn satisfies_mark_eq(m: &[i64], r: &[Vector], m2: &[i64]) -> bool {
    let d = m.len();
    let mut alphabet: Vec<Vector> = r.to_vec();
    alphabet.sort();
    alphabet.dedup();
    let sys = mark_eq_system(&alphabet, d);
    let mut x = m.to_vec();
    for u in &alphabet {
        x.push(r.iter().filter(|v| *v == u).count() as i64);
    }
    x.extend_from_slice(m2);
    sys.satisfied_by(&x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Nw::{Fin, Omega};

    fn gm(v: &[Nw]) -> GMarking {
        GMarking(v.to_vec())
    }

    #[test]
    fn fire_examples() {
        let r = fire(&GMarking::zero(2), &[vec![1, 0], vec![-1, 1]]).unwrap();
        assert_eq!(r, Some(GMarking::concrete(&[0, 1])));
        assert_eq!(fire(&gm(&[Fin(0), Omega]), &[vec![-1, -5]]).unwrap(), None);
        let r = fire(&gm(&[Fin(1), Omega]), &[vec![-1, -5], vec![0, -5]]).unwrap();
        assert_eq!(r, Some(gm(&[Fin(0), Omega])));
        assert!(fire(&GMarking::zero(2), &[vec![1]]).is_err());
    }

    #[test]
    fn hurdle_and_reverse() {
        assert_eq!(hurdle(&[vec![-1, 0], vec![2, 0]], 2), vec![1, 0]);
        assert_eq!(hurdle(&[vec![1, 1]], 2), vec![0, 0]);
        assert_eq!(reverse(&[vec![1, 0], vec![0, 2]]), vec![vec![0, -2], vec![-1, 0]]);
        assert!(reverse(&[]).is_empty());
    }

    #[test]
    fn meet_examples() {
        let a = gm(&[Fin(1), Omega]);
        assert_eq!(meet(&a, &gm(&[Omega, Fin(2)])), Some(gm(&[Fin(1), Fin(2)])));
        assert_eq!(meet(&a, &gm(&[Fin(2), Omega])), None);
        assert_eq!(meet(&GMarking::omega(2), &a), Some(a));
    }

    #[test]
    fn ideals() {
        let a = gm(&[Fin(1), Omega]);
        let b = gm(&[Fin(0), Omega]);
        assert_eq!(ideal_decompose([&a, &b]), vec![a.clone()]);
        let c = GMarking::concrete(&[1, 0]);
        let e = GMarking::concrete(&[0, 1]);
        assert_eq!(ideal_decompose([&c, &e]).len(), 2);
        assert!(ideal_decompose(std::iter::empty()).is_empty());
        assert_eq!(dc_type(&[b, a]), vec![0, 2, 0]);
        assert_eq!(dc_type(&[GMarking::zero(2)]), vec![1, 0, 0]);
        let parts = ideal_parts(&gm(&[Fin(1), Omega]));
        assert_eq!(dc_type(&parts), vec![0, 2, 0]);
        assert_eq!(dc_type(&[GMarking::omega(2)]), vec![0, 0, 1]);
    }

    #[test]
    fn mark_eq() {
        assert!(satisfies_mark_eq(&[0, 0], &[vec![1, 0], vec![-1, 1]], &[0, 1]));
        assert!(!satisfies_mark_eq(&[0, 0], &[vec![1, 0]], &[0, 1]));
    }
}
