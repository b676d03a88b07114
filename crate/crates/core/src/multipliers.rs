//! Finite-sample multiplier search. For sampled needles `(t_i, v_i)` the row
//! `w_i = (Dg^j(x(T)) X(T, t_i) Delta f_i)_j` must satisfy `lambda . w_i <= 0`,
//! together with `||lambda||_1 = 1`, `lambda_j >= 0` for the objective and
//! inequalities, and `lambda_j = 0` for inactive inequalities.
//!
//! One LP per sign pattern of the equality multipliers makes the `l1`
//! normalization linear. Among feasible points the lexicographically
//! smallest is returned; rows enter through cutting planes so programs with
//! thousands of samples stay small.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fde::{ControlledProblem, Trajectory};
use crate::linalg;
use crate::lp::{self, LinearProgram, LpOutcome};
use crate::needle::{delta_f, NeedleSpec};
use crate::pmp::Multipliers;
use crate::resolvent::FundamentalMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRow {
    pub t: usize,
    pub v: Vec<f64>,
    pub row: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierProgram {
    /// `Dg^j(x(T))`, `j = 0..=n_i + n_e`.
    pub gradients: Vec<Vec<f64>>,
    /// `g^j(x(T))`.
    pub activity: Vec<f64>,
    pub n_ineq: usize,
    pub n_eq: usize,
    pub samples: Vec<SampleRow>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchOptions {
    /// Inequalities with `|g^j| <=` this are active.
    pub activity_tol: f64,
    pub lp_tol: f64,
    /// Bound on the substitution residuals of a returned `lambda`.
    pub verify_tol: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { activity_tol: 1e-8, lp_tol: 1e-11, verify_tol: 1e-8 }
    }
}

/// Residuals of the four conditions, by direct substitution.
#[derive(Clone, Debug, PartialEq)]
pub struct SubstitutionCheck {
    /// `| ||lambda||_1 - 1 |`.
    pub norm: f64,
    /// Largest negative part among `lambda_0..=lambda_{n_i}`.
    pub sign: f64,
    /// `max_j |lambda_j g^j|` over the inequalities.
    pub slackness: f64,
    /// `max(0, max_i lambda . w_i)`.
    pub samples: f64,
}

impl SubstitutionCheck {
    pub fn max(&self) -> f64 {
        self.norm.max(self.sign).max(self.slackness).max(self.samples)
    }
}

/// No `lambda` exists on this sample set: even the best one violates
/// sample `worst` by `violation > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct InfeasibilityCertificate {
    pub violation: f64,
    pub lambda: Vec<f64>,
    pub worst: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MultiplierOutcome {
    Found { multipliers: Multipliers, check: SubstitutionCheck },
    Infeasible(InfeasibilityCertificate),
}

impl MultiplierProgram {
    /// Terminal data at `x(T)` and no samples.
    pub fn new(problem: &ControlledProblem, reference: &Trajectory) -> MultiplierProgram {
        let x_t = reference.terminal();
        MultiplierProgram {
            gradients: problem.terminal_gradients(x_t),
            activity: problem.terminal_values(x_t),
            n_ineq: problem.n_ineq,
            n_eq: problem.n_eq,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.gradients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gradients.is_empty()
    }

    /// Appends the rows of `batch`. The feasible set can only shrink.
    pub fn enrich_samples(
        &mut self,
        problem: &ControlledProblem,
        reference: &Trajectory,
        xf: &FundamentalMatrix,
        batch: &[(usize, Vec<f64>)],
    ) -> Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        let n = problem.state_dim();
        let spec = NeedleSpec { needles: batch.to_vec(), widths: vec![0; batch.len()] };
        for ((t, v), df) in batch.iter().zip(delta_f(problem, reference, &spec)) {
            if *t > xf.steps() {
                return Err(Error::Domain { what: "sample time", time: *t as f64 * xf.h() });
            }
            let mut y = vec![0.0; n];
            linalg::mat_vec_acc(&mut y, xf.terminal(*t), &df, n, n, 1.0);
            let row: Vec<f64> = self.gradients.iter().map(|g| linalg::dot(g, &y)).collect();
            if row.iter().any(|r| !r.is_finite()) {
                return Err(Error::NonFinite { what: "multiplier sample row", time: *t as f64 * xf.h() });
            }
            self.samples.push(SampleRow { t: *t, v: v.clone(), row });
        }
        Ok(())
    }

    fn inactive(&self, j: usize, tol: f64) -> bool {
        (1..=self.n_ineq).contains(&j) && self.activity[j].abs() > tol
    }

    /// Direct substitution of `lambda` into the four conditions.
    pub fn verify(&self, lambda: &[f64]) -> SubstitutionCheck {
        let norm = (lambda.iter().map(|v| v.abs()).sum::<f64>() - 1.0).abs();
        let sign = lambda[..=self.n_ineq].iter().fold(0.0f64, |m, &v| if -v > m { -v } else { m });
        let slackness = (1..=self.n_ineq).fold(0.0f64, |m, j| m.max((lambda[j] * self.activity[j]).abs()));
        let samples = self.samples.iter().fold(0.0f64, |m, s| m.max(linalg::dot(lambda, &s.row)));
        SubstitutionCheck { norm, sign, slackness, samples }
    }
}

/// Sample times every `stride` nodes (and `T`) crossed with the control samples.
pub fn sample_family(problem: &ControlledProblem, stride: usize) -> Vec<(usize, Vec<f64>)> {
    sample_family_with(problem, stride, &problem.controls.samples())
}

/// As [`sample_family`] with explicit control values.
pub fn sample_family_with(problem: &ControlledProblem, stride: usize, values: &[Vec<f64>]) -> Vec<(usize, Vec<f64>)> {
    let steps = problem.mesh.steps();
    let stride = stride.max(1);
    let mut times: Vec<usize> = (0..=steps).step_by(stride).collect();
    if times.last() != Some(&steps) {
        times.push(steps);
    }
    times.iter().flat_map(|&t| values.iter().map(move |v| (t, v.clone()))).collect()
}

/// One sign pattern: `lambda_j = sign_j mu_j` over the free indices.
struct Orthant {
    free: Vec<(usize, f64)>,
}

impl Orthant {
    fn lambda(&self, mu: &[f64], len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (&(j, s), &m) in self.free.iter().zip(mu) {
            out[j] = s * m;
        }
        out
    }

    fn row(&self, w: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&(j, s)| s * w[j]).collect()
    }
}

fn orthants(prog: &MultiplierProgram, opts: &SearchOptions) -> Vec<Orthant> {
    let base: Vec<usize> = (0..=prog.n_ineq).filter(|&j| !prog.inactive(j, opts.activity_tol)).collect();
    let eq0 = prog.n_ineq + 1;
    (0..1usize << prog.n_eq)
        .map(|mask| {
            let mut free: Vec<(usize, f64)> = base.iter().map(|&j| (j, 1.0)).collect();
            for k in 0..prog.n_eq {
                free.push((eq0 + k, if mask >> k & 1 == 1 { -1.0 } else { 1.0 }));
            }
            free.sort_by_key(|e| e.0);
            Orthant { free }
        })
        .collect()
}

/// Rows divided by the largest entry, with round-off sized entries cleared.
fn scaled_rows(prog: &MultiplierProgram) -> Vec<Vec<f64>> {
    let scale = prog.samples.iter().fold(0.0f64, |m, s| m.max(linalg::norm_inf(&s.row)));
    if scale == 0.0 {
        return prog.samples.iter().map(|s| vec![0.0; s.row.len()]).collect();
    }
    prog.samples
        .iter()
        .map(|s| s.row.iter().map(|&v| if v.abs() <= 1e-14 * scale { 0.0 } else { v / scale }).collect())
        .collect()
}

fn most_violated(rows: &[Vec<f64>], lambda: &[f64], cut: &[bool], tol: f64, limit: usize) -> Vec<usize> {
    let mut v: Vec<(usize, f64)> = rows
        .iter()
        .enumerate()
        .filter(|(i, _)| !cut[*i])
        .map(|(i, r)| (i, linalg::dot(r, lambda)))
        .filter(|(_, x)| *x > tol)
        .collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().take(limit).map(|(i, _)| i).collect()
}

const CUTS_PER_ROUND: usize = 32;

/// Lexicographic minimum over one orthant with the rows in `cut`.
fn lex_min(o: &Orthant, rows: &[Vec<f64>], cut: &[bool], tol: f64) -> Result<Option<Vec<f64>>> {
    let k = o.free.len();
    let mut lp = LinearProgram::new(vec![0.0; k]);
    lp.equal(vec![1.0; k], 1.0);
    for (r, _) in rows.iter().zip(cut).filter(|(_, c)| **c) {
        lp.at_most(o.row(r), 0.0);
    }
    let mut mu = None;
    for stage in 0..k {
        let s = o.free[stage].1;
        let mut c = vec![0.0; k];
        c[stage] = s;
        lp.c = c.clone();
        match lp::solve(&lp, tol)? {
            LpOutcome::Optimal { x, value } => {
                lp.at_most(c, value);
                mu = Some(x);
            }
            LpOutcome::Infeasible => return Ok(None),
            LpOutcome::Unbounded => return Err(Error::Invalid("multiplier LP unbounded on the simplex".into())),
        }
    }
    Ok(mu)
}

/// Smallest worst-case violation `max_i lambda . w_i` over one orthant.
fn min_violation(o: &Orthant, rows: &[Vec<f64>], len: usize, tol: f64) -> Result<(f64, Vec<f64>)> {
    let k = o.free.len();
    let mut cut = vec![false; rows.len()];
    loop {
        // Variables: mu (k), tau+ and tau-.
        let mut c = vec![0.0; k + 2];
        c[k] = 1.0;
        c[k + 1] = -1.0;
        let mut lp = LinearProgram::new(c);
        let mut norm = vec![1.0; k + 2];
        norm[k] = 0.0;
        norm[k + 1] = 0.0;
        lp.equal(norm, 1.0);
        let mut floor = vec![0.0; k + 2];
        floor[k + 1] = 1.0;
        lp.at_most(floor, 1.0);
        for (r, _) in rows.iter().zip(&cut).filter(|(_, c)| **c) {
            let mut row = o.row(r);
            row.push(-1.0);
            row.push(1.0);
            lp.at_most(row, 0.0);
        }
        let LpOutcome::Optimal { x, value } = lp::solve(&lp, tol)? else {
            return Err(Error::Invalid("violation LP has no optimum".into()));
        };
        let lambda = o.lambda(&x[..k], len);
        let add = most_violated(rows, &lambda, &cut, value + tol, CUTS_PER_ROUND);
        if add.is_empty() {
            return Ok((value, lambda));
        }
        for i in add {
            cut[i] = true;
        }
    }
}

fn lex_less(a: &[f64], b: &[f64], tol: f64) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < &(y - tol) {
            return true;
        }
        if x > &(y + tol) {
            return false;
        }
    }
    false
}

/// Searches `lambda` satisfying every condition on the program's samples.
pub fn solve_multipliers(prog: &MultiplierProgram, opts: &SearchOptions) -> Result<MultiplierOutcome> {
    let len = prog.len();
    if len != 1 + prog.n_ineq + prog.n_eq || prog.activity.len() != len {
        return Err(Error::Dimension { what: "terminal functions", expected: 1 + prog.n_ineq + prog.n_eq, found: len });
    }
    if prog.samples.iter().any(|s| s.row.len() != len) {
        return Err(Error::Invalid("sample row length differs from the number of terminal functions".into()));
    }
    let rows = scaled_rows(prog);
    let list = orthants(prog, opts);
    let mut best: Option<Vec<f64>> = None;
    for o in &list {
        let mut cut = vec![false; rows.len()];
        let found = loop {
            let Some(mu) = lex_min(o, &rows, &cut, opts.lp_tol)? else { break None };
            let lambda = o.lambda(&mu, len);
            let add = most_violated(&rows, &lambda, &cut, 10.0 * opts.lp_tol, CUTS_PER_ROUND);
            if add.is_empty() {
                break Some(lambda);
            }
            for i in add {
                cut[i] = true;
            }
        };
        if let Some(l) = found {
            if best.as_ref().map_or(true, |b| lex_less(&l, b, 1e-12)) {
                best = Some(l);
            }
        }
    }
    match best {
        Some(mut lambda) => {
            // Exact zeros stay zero; the rest is renormalized after the LP.
            let l1: f64 = lambda.iter().map(|v| v.abs()).sum();
            lambda.iter_mut().for_each(|v| *v /= l1);
            let check = prog.verify(&lambda);
            if check.max() > opts.verify_tol {
                return Err(Error::IllConditioned { what: "multiplier substitution residual", value: check.max() });
            }
            Ok(MultiplierOutcome::Found { multipliers: Multipliers::new(lambda), check })
        }
        None => {
            let mut cert: Option<(f64, Vec<f64>)> = None;
            for o in &list {
                let (v, l) = min_violation(o, &rows, len, opts.lp_tol)?;
                if cert.as_ref().map_or(true, |c| v < c.0) {
                    cert = Some((v, l));
                }
            }
            let (_, lambda) = cert.ok_or_else(|| Error::Invalid("no sign pattern to search".into()))?;
            let (worst, violation) = prog
                .samples
                .iter()
                .enumerate()
                .map(|(i, s)| (i, linalg::dot(&lambda, &s.row)))
                .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            Ok(MultiplierOutcome::Infeasible(InfeasibilityCertificate { violation, lambda, worst }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn program(gradients: Vec<Vec<f64>>, activity: Vec<f64>, n_ineq: usize, n_eq: usize, rows: Vec<Vec<f64>>) -> MultiplierProgram {
        let samples = rows.into_iter().enumerate().map(|(t, row)| SampleRow { t, v: vec![0.0], row }).collect();
        MultiplierProgram { gradients, activity, n_ineq, n_eq, samples }
    }

    fn found(prog: &MultiplierProgram) -> Vec<f64> {
        match solve_multipliers(prog, &SearchOptions::default()).unwrap() {
            MultiplierOutcome::Found { multipliers, .. } => multipliers.lambda,
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn objective_only_gives_unit_lambda() {
        let prog = program(vec![vec![1.0]], vec![0.0], 0, 0, vec![vec![-1.0], vec![0.0]]);
        assert_eq!(found(&prog), [1.0]);
    }

    #[test]
    fn degenerate_simplex_picks_lexicographic_vertex() {
        let prog = program(vec![vec![1.0], vec![-1.0]], vec![0.0, 0.0], 1, 0, vec![vec![0.0, 0.0]]);
        assert_eq!(found(&prog), [0.0, 1.0]);
    }

    #[test]
    fn inactive_inequality_gets_zero() {
        // Without slackness lambda = (0, 1) would be lexicographically smaller.
        let prog = program(vec![vec![1.0], vec![-1.0]], vec![0.0, 0.5], 1, 0, vec![]);
        assert_eq!(found(&prog), [1.0, 0.0]);
    }

    #[test]
    fn equality_sign_is_searched() {
        // lambda_0 - 2 lambda_1 <= 0 and -lambda_0 + 2 lambda_1 <= 0 force lambda_1 = lambda_0 / 2.
        let prog = program(vec![vec![1.0], vec![1.0]], vec![0.0, 0.0], 0, 1, vec![vec![1.0, -2.0], vec![-1.0, 2.0]]);
        let l = found(&prog);
        assert!((l[0] - 2.0 / 3.0).abs() < 1e-12 && (l[1] - 1.0 / 3.0).abs() < 1e-12, "{l:?}");
        let prog = program(vec![vec![1.0], vec![1.0]], vec![0.0, 0.0], 0, 1, vec![vec![1.0, 2.0], vec![-1.0, -2.0]]);
        let l = found(&prog);
        assert!((l[0] - 2.0 / 3.0).abs() < 1e-12 && (l[1] + 1.0 / 3.0).abs() < 1e-12, "{l:?}");
    }

    #[test]
    fn infeasible_program_reports_certificate() {
        // lambda_0 = 1 is forced, and the row demands lambda_0 <= 0.
        let prog = program(vec![vec![1.0]], vec![0.0], 0, 0, vec![vec![0.0], vec![0.25]]);
        match solve_multipliers(&prog, &SearchOptions::default()).unwrap() {
            MultiplierOutcome::Infeasible(c) => {
                assert_eq!(c.worst, 1);
                assert!((c.violation - 0.25).abs() < 1e-12);
                assert_eq!(c.lambda, [1.0]);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn many_rows_through_cutting_planes() {
        // lambda_0 (1 - t) - lambda_1 t <= 0 for t on a grid: only t = 0 binds... and forces lambda_0 = 0.
        let rows: Vec<Vec<f64>> = (0..500).map(|i| i as f64 / 499.0).map(|t| vec![1.0 - t, -t]).collect();
        let prog = program(vec![vec![1.0], vec![1.0]], vec![0.0, 0.0], 1, 0, rows);
        assert_eq!(found(&prog), [0.0, 1.0]);
    }
}
