//! Exact rational linear programming, integer feasibility and linear sets.
//!
//! Every equation system in the crate is a [`LinearIntSystem`]: integer
//! equalities over named variables with per-variable bounds.

mod ilp;
pub mod linalg;
mod simplex;

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{contract, structural, Result};

pub use ilp::{ilp_feasible, ilp_solve, IlpOutcome, DEFAULT_NODE_BUDGET};
pub use simplex::{minimize, LpOutcome};

pub type Rational = BigRational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bound {
    pub lower: i64,
    pub upper: Option<i64>,
}

impl Bound {
    pub const NAT: Bound = Bound { lower: 0, upper: None };
    pub const POS: Bound = Bound { lower: 1, upper: None };

    pub fn fixed(v: i64) -> Bound {
        Bound { lower: v, upper: Some(v) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Equality {
    pub coeffs: Vec<i64>,
    pub constant: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinearIntSystem {
    pub variables: Vec<String>,
    pub rows: Vec<Equality>,
    pub bounds: Vec<Bound>,
    index: BTreeMap<String, usize>,
}

impl LinearIntSystem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, bound: Bound) -> usize {
        let name = name.into();
        let id = self.variables.len();
        assert!(
            self.index.insert(name.clone(), id).is_none(),
            "duplicate variable {name}"
        );
        self.variables.push(name);
        self.bounds.push(bound);
        for r in self.rows.iter_mut() {
            r.coeffs.push(0);
        }
        id
    }

    pub fn var(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    /// Adds `Σ coeff·x = constant` given sparse terms; repeated variables accumulate.
    pub fn add_row(&mut self, terms: &[(usize, i64)], constant: i64) {
        let mut coeffs = vec![0; self.variables.len()];
        for &(v, c) in terms {
            coeffs[v] += c;
        }
        self.rows.push(Equality { coeffs, constant });
    }

    pub fn fix(&mut self, v: usize, value: i64) {
        self.bounds[v] = Bound::fixed(value);
    }

    pub fn check(&self) -> Result<()> {
        let n = self.variables.len();
        if self.bounds.len() != n {
            return structural("bound list length differs from variable count");
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.coeffs.len() != n {
                return structural(format!(
                    "row {i} has {} coefficients for {n} variables",
                    r.coeffs.len()
                ));
            }
        }
        Ok(())
    }

    pub fn is_homogeneous(&self) -> bool {
        self.rows.iter().all(|r| r.constant == 0)
            && self
                .bounds
                .iter()
                .all(|b| b.lower == 0 && matches!(b.upper, None | Some(0)))
    }

    pub fn satisfied_by(&self, x: &[i64]) -> bool {
        x.len() == self.variables.len()
            && self.bounds.iter().zip(x).all(|(b, &v)| {
                v >= b.lower && b.upper.is_none_or(|u| v <= u)
            })
            && self.rows.iter().all(|r| {
                r.coeffs
                    .iter()
                    .zip(x)
                    .map(|(&a, &v)| a as i128 * v as i128)
                    .sum::<i128>()
                    == r.constant as i128
            })
    }

    fn satisfied_by_rational(&self, x: &[Rational]) -> bool {
        self.bounds.iter().zip(x).all(|(b, v)| {
            *v >= Rational::from_integer(b.lower.into())
                && b.upper.is_none_or(|u| *v <= Rational::from_integer(u.into()))
        }) && self.rows.iter().all(|r| {
            r.coeffs
                .iter()
                .zip(x)
                .fold(Rational::zero(), |acc, (&a, v)| {
                    acc + v * Rational::from_integer(a.into())
                })
                == Rational::from_integer(r.constant.into())
        })
    }
}

/// Exact LP feasibility with `x[v] > 0` demanded for every `v` in `strict_positive`.
pub fn lp_feasible(
    sys: &LinearIntSystem,
    strict_positive: &BTreeSet<usize>,
) -> Result<Option<Vec<Rational>>> {
    sys.check()?;
    let n = sys.num_vars();
    if strict_positive.is_empty() {
        return Ok(match minimize(sys, &[]) {
            LpOutcome::Optimal { x, .. } => Some(x),
            _ => None,
        });
    }
    let mut aux = sys.clone();
    let t = aux.add_var("#t", Bound { lower: 0, upper: Some(1) });
    for &v in strict_positive {
        if v >= n {
            return structural(format!("strict variable {v} out of range"));
        }
        let s = aux.add_var(format!("#s{v}"), Bound::NAT);
        aux.add_row(&[(v, 1), (t, -1), (s, -1)], 0);
    }
    let mut obj = vec![Rational::zero(); aux.num_vars()];
    obj[t] = -Rational::one();
    match minimize(&aux, &obj) {
        LpOutcome::Optimal { x, .. } if x[t].is_positive() => {
            let w: Vec<Rational> = x[..n].to_vec();
            debug_assert!(sys.satisfied_by_rational(&w));
            Ok(Some(w))
        }
        _ => Ok(None),
    }
}

/// Whether `x[var]` is unbounded above over the rational relaxation. `None` if infeasible.
pub fn lp_unbounded_above(sys: &LinearIntSystem, var: usize) -> Result<Option<bool>> {
    sys.check()?;
    let mut obj = vec![Rational::zero(); sys.num_vars()];
    obj[var] = -Rational::one();
    Ok(match minimize(sys, &obj) {
        LpOutcome::Infeasible => None,
        LpOutcome::Unbounded => Some(true),
        LpOutcome::Optimal { .. } => Some(false),
    })
}

/// Floor of the rational maximum of `x[var]`: `None` if infeasible, `Some(None)` if unbounded.
pub fn lp_maximum(sys: &LinearIntSystem, var: usize) -> Result<Option<Option<i64>>> {
    sys.check()?;
    let mut obj = vec![Rational::zero(); sys.num_vars()];
    obj[var] = -Rational::one();
    Ok(match minimize(sys, &obj) {
        LpOutcome::Infeasible => None,
        LpOutcome::Unbounded => Some(None),
        LpOutcome::Optimal { value, .. } => Some(Some(
            (-value).floor().to_integer().to_i64().expect("maximum exceeds i64"),
        )),
    })
}

/// All integer points of the projection of the natural solutions onto `vars`,
/// each of which must be bounded. Errors once more than `limit` points exist.
pub fn project_points(sys: &LinearIntSystem, vars: &[usize], limit: usize) -> Result<Vec<Vec<i64>>> {
    let mut out = Vec::new();
    let mut work = sys.clone();
    project_rec(&mut work, vars, 0, &mut Vec::new(), &mut out, limit)?;
    Ok(out)
}

fn project_rec(
    work: &mut LinearIntSystem,
    vars: &[usize],
    k: usize,
    prefix: &mut Vec<i64>,
    out: &mut Vec<Vec<i64>>,
    limit: usize,
) -> Result<()> {
    if ilp_feasible(work, DEFAULT_NODE_BUDGET)?.is_none() {
        return Ok(());
    }
    if k == vars.len() {
        if out.len() >= limit {
            return Err(crate::Error::Budget(format!("projection exceeds {limit} points")));
        }
        out.push(prefix.clone());
        return Ok(());
    }
    let v = vars[k];
    let hi = match lp_maximum(work, v)? {
        None => return Ok(()),
        Some(None) => return contract(format!("variable {} is unbounded", work.variables[v])),
        Some(Some(h)) => h,
    };
    let saved = work.bounds[v];
    for val in saved.lower..=hi {
        work.bounds[v] = Bound::fixed(val);
        prefix.push(val);
        project_rec(work, vars, k + 1, prefix, out, limit)?;
        prefix.pop();
    }
    work.bounds[v] = saved;
    Ok(())
}

fn require_homogeneous(sys: &LinearIntSystem) -> Result<()> {
    sys.check()?;
    if !sys.is_homogeneous() {
        return contract("system is not homogeneous");
    }
    Ok(())
}

/// Variables that are positive in some natural solution of a homogeneous system.
pub fn support(sys: &LinearIntSystem) -> Result<BTreeSet<usize>> {
    Ok(support_witnesses(sys)?.0)
}

fn support_witnesses(sys: &LinearIntSystem) -> Result<(BTreeSet<usize>, Vec<Vec<Rational>>)> {
    require_homogeneous(sys)?;
    let mut supp = BTreeSet::new();
    let mut witnesses = Vec::new();
    for v in 0..sys.num_vars() {
        if supp.contains(&v) || sys.bounds[v].upper == Some(0) {
            continue;
        }
        if let Some(w) = lp_feasible(sys, &BTreeSet::from([v]))? {
            for (j, x) in w.iter().enumerate() {
                if x.is_positive() {
                    supp.insert(j);
                }
            }
            witnesses.push(w);
        }
    }
    Ok((supp, witnesses))
}

/// Scales a nonnegative rational vector to the smallest integer multiple.
pub fn clear_denominators(x: &[Rational]) -> Vec<i64> {
    let l = x
        .iter()
        .fold(BigInt::one(), |acc, r| acc.lcm(r.denom()));
    x.iter()
        .map(|r| {
            (r.numer() * (&l / r.denom()))
                .to_i64()
                .expect("witness exceeds i64")
        })
        .collect()
}

/// A natural solution positive on exactly the support.
pub fn full_hom_solution(sys: &LinearIntSystem) -> Result<Vec<i64>> {
    let (_, witnesses) = support_witnesses(sys)?;
    let mut sum = vec![0i64; sys.num_vars()];
    for w in witnesses {
        for (s, v) in sum.iter_mut().zip(clear_denominators(&w)) {
            *s += v;
        }
    }
    debug_assert!(sys.satisfied_by(&sum));
    Ok(sum)
}

/// A linear set `base + periods*` over the integers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinearSet {
    pub base: Vec<i64>,
    pub periods: Vec<Vec<i64>>,
}

impl LinearSet {
    pub fn new(base: Vec<i64>, periods: Vec<Vec<i64>>) -> Result<Self> {
        let d = base.len();
        let mut ps: Vec<Vec<i64>> = Vec::new();
        for p in periods {
            if p.len() != d {
                return structural("period dimension differs from base");
            }
            if !ps.contains(&p) {
                ps.push(p);
            }
        }
        Ok(LinearSet { base, periods: ps })
    }

    /// `Z^d`, encoded as base 0 with periods `±e_i`.
    pub fn full(d: usize) -> Self {
        let mut periods = Vec::new();
        for i in 0..d {
            for s in [1, -1] {
                let mut p = vec![0; d];
                p[i] = s;
                periods.push(p);
            }
        }
        LinearSet { base: vec![0; d], periods }
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn is_full(&self) -> bool {
        self.base.iter().all(|&b| b == 0)
            && (0..self.dim()).all(|i| {
                [1, -1].iter().all(|&s| {
                    self.periods
                        .iter()
                        .any(|p| p.iter().enumerate().all(|(j, &x)| x == if j == i { s } else { 0 }))
                })
            })
    }

    /// The homogeneous variant `periods*`.
    pub fn homogeneous(&self) -> Self {
        LinearSet { base: vec![0; self.dim()], periods: self.periods.clone() }
    }

    pub fn contains(&self, v: &[i64]) -> Result<bool> {
        linset_member(v, self)
    }
}

/// Whether `v ∈ base + periods*`.
pub fn linset_member(v: &[i64], l: &LinearSet) -> Result<bool> {
    if v.len() != l.dim() {
        return structural("vector and linear set differ in dimension");
    }
    if l.is_full() {
        return Ok(true);
    }
    let mut sys = LinearIntSystem::new();
    let cs: Vec<usize> = (0..l.periods.len())
        .map(|i| sys.add_var(format!("c{i}"), Bound::NAT))
        .collect();
    for j in 0..l.dim() {
        let terms: Vec<(usize, i64)> = cs.iter().map(|&c| (c, l.periods[c][j])).collect();
        sys.add_row(&terms, v[j] - l.base[j]);
    }
    Ok(ilp_feasible(&sys, DEFAULT_NODE_BUDGET)?.is_some())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(rows: &[(&[i64], i64)], bounds: &[Bound]) -> LinearIntSystem {
        let mut s = LinearIntSystem::new();
        for (i, b) in bounds.iter().enumerate() {
            s.add_var(format!("x{}", i + 1), b.clone());
        }
        for (c, k) in rows {
            let t: Vec<(usize, i64)> = c.iter().copied().enumerate().collect();
            s.add_row(&t, *k);
        }
        s
    }

    fn r(n: i64) -> Rational {
        Rational::from_integer(n.into())
    }

    #[test]
    fn lp_examples() {
        let s = sys(&[(&[1, -1], -1)], &[Bound::POS, Bound::POS]);
        let w = lp_feasible(&s, &BTreeSet::new()).unwrap().unwrap();
        assert_eq!(&w[1] - &w[0], r(1));
        assert!(w[0] >= r(1));
        let s = sys(&[(&[1], -1)], &[Bound::NAT]);
        assert!(lp_feasible(&s, &BTreeSet::new()).unwrap().is_none());
        let s = sys(&[(&[1, -1, 0], 0), (&[0, 0, 1], 0)], &[Bound::NAT; 3]);
        assert!(lp_feasible(&s, &BTreeSet::from([2])).unwrap().is_none());
    }

    #[test]
    fn ilp_examples() {
        let s = sys(&[(&[2], 3)], &[Bound::NAT]);
        assert_eq!(ilp_solve(&s).unwrap(), IlpOutcome::Unsat);
        let s = sys(&[(&[1, 1], 2)], &[Bound::NAT; 2]);
        assert_eq!(ilp_solve(&s).unwrap(), IlpOutcome::Sat(vec![2, 0]));
    }

    #[test]
    fn support_examples() {
        let s = sys(&[(&[1, -1, 0], 0), (&[0, 0, 1], 0)], &[Bound::NAT; 3]);
        assert_eq!(support(&s).unwrap(), BTreeSet::from([0, 1]));
        let h = full_hom_solution(&s).unwrap();
        assert!(h[0] >= 1 && h[0] == h[1] && h[2] == 0);
        let s = sys(&[(&[1, 0], 0), (&[0, 1], 0)], &[Bound::NAT; 2]);
        assert!(support(&s).unwrap().is_empty());
        let s = sys(&[(&[1, -2], 0)], &[Bound::NAT; 2]);
        assert_eq!(support(&s).unwrap(), BTreeSet::from([0, 1]));
        assert_eq!(full_hom_solution(&sys(&[(&[1], 0)], &[Bound::NAT])).unwrap(), vec![0]);
        let s = sys(&[(&[1], 1)], &[Bound::NAT]);
        assert!(support(&s).is_err());
    }

    #[test]
    fn linset_examples() {
        let l = LinearSet::new(vec![1, 0], vec![vec![0, 1]]).unwrap();
        assert!(linset_member(&[1, 1], &l).unwrap());
        assert!(!linset_member(&[0, 0], &l).unwrap());
        let l = LinearSet::new(vec![1, 2], vec![vec![1, 2]]).unwrap();
        assert!(linset_member(&[3, 6], &l).unwrap());
        assert!(LinearSet::full(3).is_full());
        assert!(linset_member(&[-4, 7, 0], &LinearSet::full(3)).unwrap());
    }

    #[test]
    fn unbounded_detection() {
        let s = sys(&[(&[1, -1], 0)], &[Bound::NAT; 2]);
        assert_eq!(lp_unbounded_above(&s, 0).unwrap(), Some(true));
        let s = sys(&[(&[1, 1], 4)], &[Bound::NAT; 2]);
        assert_eq!(lp_unbounded_above(&s, 0).unwrap(), Some(false));
    }
}
