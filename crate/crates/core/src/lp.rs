//! Small dense linear programs: two-phase simplex with Bland's rule.
//!
//! `minimize c.x  s.t.  A_eq x = b_eq,  A_le x <= b_le,  x >= 0`.
//! Sizes here are tens of variables and at most a few thousand rows, so a
//! dense tableau is fine; Bland's rule makes it terminate on the degenerate
//! programs the multiplier search produces.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearProgram {
    pub c: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub a_le: Vec<Vec<f64>>,
    pub b_le: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LinearProgram {
    pub fn new(c: Vec<f64>) -> LinearProgram {
        LinearProgram { c, ..Default::default() }
    }

    pub fn vars(&self) -> usize {
        self.c.len()
    }

    pub fn equal(&mut self, row: Vec<f64>, b: f64) {
        self.a_eq.push(row);
        self.b_eq.push(b);
    }

    pub fn at_most(&mut self, row: Vec<f64>, b: f64) {
        self.a_le.push(row);
        self.b_le.push(b);
    }

    /// Largest constraint violation of `x` (including `x >= 0`).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let dot = |r: &[f64]| r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let mut v = x.iter().fold(0.0f64, |m, &xi| m.max(-xi));
        for (r, b) in self.a_eq.iter().zip(&self.b_eq) {
            v = v.max((dot(r) - b).abs());
        }
        for (r, b) in self.a_le.iter().zip(&self.b_le) {
            v = v.max(dot(r) - b);
        }
        v
    }
}

struct Tableau {
    /// Constraint rows, last entry is the right-hand side.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
    tol: f64,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost` over the columns allowed by `usable`. Returns false
    /// when unbounded.
    fn optimize(&mut self, cost: &[f64], usable: &dyn Fn(usize) -> bool, max_iter: usize) -> Result<bool> {
        for _ in 0..max_iter {
            // Reduced costs d_j = c_j - c_B . column_j.
            let mut enter = None;
            for j in 0..self.cols {
                if !usable(j) || self.basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j];
                for (row, &b) in self.rows.iter().zip(&self.basis) {
                    d -= cost[b] * row[j];
                }
                if d < -self.tol {
                    enter = Some(j);
                    break;
                }
            }
            let Some(c) = enter else { return Ok(true) };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[c] > self.tol {
                    let ratio = row[self.cols] / row[c];
                    let better = match leave {
                        None => true,
                        Some((l, best)) => {
                            ratio < best - self.tol || (ratio <= best + self.tol && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            match leave {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, c),
            }
        }
        Err(Error::LpIterationLimit)
    }
}

/// Solves `lp` with pivot tolerance `tol`.
pub fn solve(lp: &LinearProgram, tol: f64) -> Result<LpOutcome> {
    let n = lp.vars();
    for r in lp.a_eq.iter().chain(&lp.a_le) {
        if r.len() != n {
            return Err(Error::Dimension { what: "LP row", expected: n, found: r.len() });
        }
    }
    let all = lp.c.iter().chain(lp.a_eq.iter().flatten()).chain(lp.a_le.iter().flatten());
    if all.chain(&lp.b_eq).chain(&lp.b_le).any(|v| !v.is_finite()) {
        return Err(Error::Invalid("LP data must be finite".into()));
    }
    let n_le = lp.a_le.len();
    let m = lp.a_eq.len() + n_le;
    // Columns: x (n), slack/surplus per le row (n_le), artificials (m at most).
    let slack0 = n;
    let art0 = n + n_le;
    let cols = art0 + m;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut n_art = 0;
    for (k, (a, &b)) in lp.a_le.iter().zip(&lp.b_le).enumerate() {
        let mut row = vec![0.0; cols + 1];
        let s = if b < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            row[j] = s * a[j];
        }
        row[slack0 + k] = s;
        row[cols] = s * b;
        if b < 0.0 {
            row[art0 + n_art] = 1.0;
            basis.push(art0 + n_art);
            n_art += 1;
        } else {
            basis.push(slack0 + k);
        }
        rows.push(row);
    }
    for (a, &b) in lp.a_eq.iter().zip(&lp.b_eq) {
        let mut row = vec![0.0; cols + 1];
        let s = if b < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            row[j] = s * a[j];
        }
        row[cols] = s * b;
        row[art0 + n_art] = 1.0;
        basis.push(art0 + n_art);
        n_art += 1;
        rows.push(row);
    }
    let mut tab = Tableau { rows, basis, cols, tol };
    let max_iter = 50 * (cols + m + 10);

    if n_art > 0 {
        let mut cost1 = vec![0.0; cols];
        for c in cost1.iter_mut().skip(art0).take(n_art) {
            *c = 1.0;
        }
        tab.optimize(&cost1, &|j| j < art0 + n_art, max_iter)?;
        let infeas: f64 = tab.rows.iter().zip(&tab.basis).filter(|(_, &b)| b >= art0).map(|(r, _)| r[cols]).sum();
        let scale = 1.0 + lp.b_eq.iter().chain(&lp.b_le).fold(0.0f64, |m, b| m.max(b.abs()));
        if infeas > tol * scale {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive artificials out of the basis; drop redundant rows.
        let mut i = 0;
        while i < tab.rows.len() {
            if tab.basis[i] >= art0 {
                match (0..art0).find(|&j| tab.rows[i][j].abs() > tol) {
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
    }

    let mut cost2 = vec![0.0; cols];
    cost2[..n].copy_from_slice(&lp.c);
    if !tab.optimize(&cost2, &|j| j < art0, max_iter)? {
        return Ok(LpOutcome::Unbounded);
    }
    let mut x = vec![0.0; n];
    for (row, &b) in tab.rows.iter().zip(&tab.basis) {
        if b < n {
            x[b] = row[cols].max(0.0);
        }
    }
    let value = lp.c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Ok(LpOutcome::Optimal { x, value })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(lp: &LinearProgram) -> (Vec<f64>, f64) {
        match solve(lp, 1e-10).unwrap() {
            LpOutcome::Optimal { x, value } => (x, value),
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36.
        let mut lp = LinearProgram::new(vec![-3.0, -5.0]);
        lp.at_most(vec![1.0, 0.0], 4.0);
        lp.at_most(vec![0.0, 2.0], 12.0);
        lp.at_most(vec![3.0, 2.0], 18.0);
        let (x, v) = optimal(&lp);
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 6.0).abs() < 1e-12);
        assert!((v + 36.0).abs() < 1e-12);
    }

    #[test]
    fn equalities_and_negative_rhs() {
        // min x + y, x + y = 1, x - y <= -0.5 -> x = 0.25, y = 0.75 is one optimum, value 1.
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.equal(vec![1.0, 1.0], 1.0);
        lp.at_most(vec![1.0, -1.0], -0.5);
        let (x, v) = optimal(&lp);
        assert!((v - 1.0).abs() < 1e-12);
        assert!(lp.violation(&x) < 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.equal(vec![1.0], 1.0);
        lp.at_most(vec![1.0], 0.5);
        assert_eq!(solve(&lp, 1e-10).unwrap(), LpOutcome::Infeasible);
        let mut lp = LinearProgram::new(vec![-1.0, 0.0]);
        lp.at_most(vec![-1.0, 1.0], 1.0);
        assert_eq!(solve(&lp, 1e-10).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        let mut lp = LinearProgram::new(vec![1.0, 2.0]);
        lp.equal(vec![1.0, 1.0], 1.0);
        lp.equal(vec![2.0, 2.0], 2.0);
        let (x, v) = optimal(&lp);
        assert_eq!(x, [1.0, 0.0]);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's example, which cycles under the largest-coefficient rule.
        let mut lp = LinearProgram::new(vec![-0.75, 150.0, -0.02, 6.0]);
        lp.at_most(vec![0.25, -60.0, -0.04, 9.0], 0.0);
        lp.at_most(vec![0.5, -90.0, -0.02, 3.0], 0.0);
        lp.at_most(vec![0.0, 0.0, 1.0, 0.0], 1.0);
        let (_, v) = optimal(&lp);
        assert!((v + 0.05).abs() < 1e-12);
    }
}
