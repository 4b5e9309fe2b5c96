//! Branch-and-bound integer feasibility over the exact LP relaxation.

use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

use super::simplex::{minimize, LpOutcome};
use super::{Bound, LinearIntSystem, Rational};
use crate::error::{Error, Result};

pub const DEFAULT_NODE_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IlpOutcome {
    Sat(Vec<i64>),
    Unsat,
}

impl IlpOutcome {
    pub fn witness(&self) -> Option<&[i64]> {
        match self {
            IlpOutcome::Sat(w) => Some(w),
            IlpOutcome::Unsat => None,
        }
    }
}

fn to_i64(r: &Rational) -> i64 {
    r.to_integer().to_i64().expect("value exceeds i64")
}

fn floor(r: &Rational) -> i64 {
    to_i64(&r.floor())
}

fn ceil(r: &Rational) -> i64 {
    to_i64(&r.ceil())
}

/// Cheap infeasibility test: after substituting fixed variables, every row's
/// coefficient gcd must divide its constant.
fn gcd_refutes(sys: &LinearIntSystem) -> bool {
    sys.rows.iter().any(|r| {
        let mut g = 0i64;
        let mut k = r.constant as i128;
        for (j, &a) in r.coeffs.iter().enumerate() {
            let b = &sys.bounds[j];
            if b.upper == Some(b.lower) {
                k -= a as i128 * b.lower as i128;
            } else {
                g = g.gcd(&a);
            }
        }
        if g == 0 {
            k != 0
        } else {
            k % g as i128 != 0
        }
    })
}

/// Any natural solution, found depth first (down branches first). The objective
/// `Σ x` keeps witnesses small.
pub fn ilp_feasible(sys: &LinearIntSystem, budget: usize) -> Result<Option<Vec<i64>>> {
    sys.check()?;
    let mut nodes = 0usize;
    let obj = vec![Rational::one(); sys.num_vars()];
    let bounded_below = sys.bounds.iter().all(|b| b.lower >= 0);
    let obj: &[Rational] = if bounded_below { &obj } else { &[] };
    let mut stack = vec![sys.bounds.clone()];
    let mut work = sys.clone();
    while let Some(bounds) = stack.pop() {
        nodes += 1;
        if nodes > budget {
            return Err(Error::Budget(format!(
                "integer search exceeded {budget} nodes"
            )));
        }
        work.bounds = bounds;
        if gcd_refutes(&work) {
            continue;
        }
        let x = match minimize(&work, obj) {
            LpOutcome::Optimal { x, .. } => x,
            LpOutcome::Unbounded => match minimize(&work, &[]) {
                LpOutcome::Optimal { x, .. } => x,
                _ => continue,
            },
            LpOutcome::Infeasible => continue,
        };
        match x.iter().position(|v| !v.is_integer()) {
            None => return Ok(Some(x.iter().map(to_i64).collect())),
            Some(j) => {
                let mut up = work.bounds.clone();
                up[j].lower = ceil(&x[j]);
                let mut down = work.bounds.clone();
                down[j].upper = Some(floor(&x[j]));
                stack.push(up);
                stack.push(down);
            }
        }
    }
    Ok(None)
}

/// The least natural solution, comparing coordinates from the last declared
/// variable to the first.
pub fn ilp_solve(sys: &LinearIntSystem) -> Result<IlpOutcome> {
    ilp_solve_with_budget(sys, super::DEFAULT_NODE_BUDGET)
}

pub fn ilp_solve_with_budget(sys: &LinearIntSystem, budget: usize) -> Result<IlpOutcome> {
    let Some(mut cur) = ilp_feasible(sys, budget)? else {
        return Ok(IlpOutcome::Unsat);
    };
    let mut work = sys.clone();
    for i in (0..sys.num_vars()).rev() {
        let mut obj = vec![Rational::zero(); sys.num_vars()];
        obj[i] = Rational::one();
        let lo = match minimize(&work, &obj) {
            LpOutcome::Optimal { value, .. } => ceil(&value).max(work.bounds[i].lower),
            _ => work.bounds[i].lower,
        };
        for k in lo..cur[i] {
            let mut probe = work.clone();
            probe.bounds[i] = Bound::fixed(k);
            if let Some(w) = ilp_feasible(&probe, budget)? {
                cur = w;
                break;
            }
        }
        work.bounds[i] = Bound::fixed(cur[i]);
    }
    debug_assert!(sys.satisfied_by(&cur));
    Ok(IlpOutcome::Sat(cur))
}
