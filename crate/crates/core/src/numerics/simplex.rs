//! Dense two-phase simplex over exact rationals, Bland's pivoting rule.

use num_traits::{One, Signed, Zero};

use super::{LinearIntSystem, Rational};

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<Rational>, value: Rational },
    Unbounded,
    Infeasible,
}

struct Tableau {
    /// `rows[i]` holds the coefficients followed by the right-hand side.
    rows: Vec<Vec<Rational>>,
    basis: Vec<usize>,
    /// Reduced costs followed by the negated objective value.
    obj: Vec<Rational>,
    ncols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        for v in self.rows[r].iter_mut() {
            *v /= &p;
        }
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for (v, pv) in row.iter_mut().zip(prow.iter()) {
                if !pv.is_zero() {
                    *v -= &f * pv;
                }
            }
        }
        if !self.obj[c].is_zero() {
            let f = self.obj[c].clone();
            for (v, pv) in self.obj.iter_mut().zip(prow.iter()) {
                if !pv.is_zero() {
                    *v -= &f * pv;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Runs Bland's rule to optimality. Returns false on unboundedness.
    fn optimize(&mut self, allowed: usize) -> bool {
        loop {
            let entering = (0..allowed).find(|&j| self.obj[j].is_negative());
            let Some(c) = entering else { return true };
            let rhs = self.ncols;
            let mut best: Option<(usize, Rational)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[c].is_positive() {
                    let ratio = &row[rhs] / &row[c];
                    let better = match &best {
                        None => true,
                        Some((bi, br)) => {
                            ratio < *br || (ratio == *br && self.basis[i] < self.basis[*bi])
                        }
                    };
                    if better {
                        best = Some((i, ratio));
                    }
                }
            }
            match best {
                None => return false,
                Some((r, _)) => self.pivot(r, c),
            }
        }
    }
}

/// Minimizes `objective · x` subject to the system's equalities and bounds.
pub fn minimize(sys: &LinearIntSystem, objective: &[Rational]) -> LpOutcome {
    let n = sys.variables.len();
    let zero = Rational::zero();
    for b in &sys.bounds {
        if let Some(u) = b.upper {
            if u < b.lower {
                return LpOutcome::Infeasible;
            }
        }
    }
    // Columns: shifted variables z_j = x_j - l_j, then one slack per upper bound.
    let uppers: Vec<usize> = (0..n).filter(|&j| sys.bounds[j].upper.is_some()).collect();
    let ncols_struct = n + uppers.len();
    let mut rows: Vec<Vec<Rational>> = Vec::new();
    for eq in &sys.rows {
        let mut row = vec![zero.clone(); ncols_struct + 1];
        let mut rhs = eq.constant as i128;
        for (j, &a) in eq.coeffs.iter().enumerate() {
            row[j] = Rational::from_integer(a.into());
            rhs -= a as i128 * sys.bounds[j].lower as i128;
        }
        row[ncols_struct] = Rational::from_integer(rhs.into());
        rows.push(row);
    }
    for (k, &j) in uppers.iter().enumerate() {
        let mut row = vec![zero.clone(); ncols_struct + 1];
        row[j] = Rational::one();
        row[n + k] = Rational::one();
        let b = &sys.bounds[j];
        row[ncols_struct] = Rational::from_integer((b.upper.unwrap() - b.lower).into());
        rows.push(row);
    }
    let m = rows.len();
    for row in rows.iter_mut() {
        if row[ncols_struct].is_negative() {
            for v in row.iter_mut() {
                *v = -v.clone();
            }
        }
    }
    // Phase 1 with one artificial per row.
    let total = ncols_struct + m;
    let mut trows = Vec::with_capacity(m);
    for (i, row) in rows.iter().enumerate() {
        let mut t = vec![zero.clone(); total + 1];
        t[..ncols_struct].clone_from_slice(&row[..ncols_struct]);
        t[ncols_struct + i] = Rational::one();
        t[total] = row[ncols_struct].clone();
        trows.push(t);
    }
    let mut obj = vec![zero.clone(); total + 1];
    for t in &trows {
        for j in 0..ncols_struct {
            obj[j] -= &t[j];
        }
        obj[total] -= &t[total];
    }
    let mut tab = Tableau {
        rows: trows,
        basis: (ncols_struct..total).collect(),
        obj,
        ncols: total,
    };
    tab.optimize(ncols_struct);
    if !tab.obj[total].is_zero() {
        return LpOutcome::Infeasible;
    }
    // Drive artificials out of the basis; drop redundant rows.
    let mut i = 0;
    while i < tab.rows.len() {
        if tab.basis[i] >= ncols_struct {
            match (0..ncols_struct).find(|&j| !tab.rows[i][j].is_zero()) {
                Some(j) => {
                    tab.pivot(i, j);
                    i += 1;
                }
                None => {
                    tab.rows.remove(i);
                    tab.basis.remove(i);
                }
            }
        } else {
            i += 1;
        }
    }
    // Phase 2.
    let mut cost = vec![zero.clone(); total];
    for j in 0..n {
        cost[j] = objective.get(j).cloned().unwrap_or_else(Rational::zero);
    }
    let mut obj = vec![zero.clone(); total + 1];
    for j in 0..ncols_struct {
        obj[j] = cost[j].clone();
    }
    for (r, &b) in tab.basis.iter().enumerate() {
        if cost[b].is_zero() {
            continue;
        }
        for j in 0..ncols_struct {
            obj[j] -= &cost[b] * &tab.rows[r][j];
        }
        obj[total] -= &cost[b] * &tab.rows[r][total];
    }
    tab.obj = obj;
    if !tab.optimize(ncols_struct) {
        return LpOutcome::Unbounded;
    }
    let mut z = vec![zero.clone(); ncols_struct];
    for (r, &b) in tab.basis.iter().enumerate() {
        z[b] = tab.rows[r][total].clone();
    }
    let x: Vec<Rational> = (0..n)
        .map(|j| &z[j] + Rational::from_integer(sys.bounds[j].lower.into()))
        .collect();
    let value = x
        .iter()
        .zip(cost.iter())
        .fold(Rational::zero(), |acc, (a, c)| acc + a * c);
    LpOutcome::Optimal { x, value }
}
