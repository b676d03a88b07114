//! Covector construction and the first-order conditions: nontriviality (NN),
//! sign (Si), slackness (Sl), adjoint equation (AE), transversality (T),
//! maximum principle (MP), the nonvanishing conclusions (A1, A2) and the
//! qualification condition (QC) on the terminal constraints.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fde::{ControlledProblem, Trajectory};
use crate::kernel::DelayKernel;
use crate::linalg;
use crate::lp::{self, LinearProgram, LpOutcome};
use crate::resolvent::FundamentalMatrix;
use crate::timegrid::{Mesh, PiecewiseFn, Side};

/// `lambda_0, ..., lambda_{n_i + n_e}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Multipliers {
    pub lambda: Vec<f64>,
}

impl Multipliers {
    pub fn new(lambda: Vec<f64>) -> Multipliers {
        Multipliers { lambda }
    }

    /// `(1, 0, ..., 0)`: the objective alone.
    pub fn objective_only(len: usize) -> Multipliers {
        let mut lambda = vec![0.0; len];
        if len > 0 {
            lambda[0] = 1.0;
        }
        Multipliers { lambda }
    }

    pub fn l1(&self) -> f64 {
        self.lambda.iter().map(|v| v.abs()).sum()
    }

    pub fn scaled(&self, gamma: f64) -> Multipliers {
        Multipliers { lambda: self.lambda.iter().map(|v| gamma * v).collect() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::NotApplicable => "n/a",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionResult {
    pub name: &'static str,
    pub residual: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl ConditionResult {
    /// Passes when `residual <= tolerance`.
    fn at_most(name: &'static str, residual: f64, tolerance: f64) -> ConditionResult {
        let verdict = if residual <= tolerance { Verdict::Pass } else { Verdict::Fail };
        ConditionResult { name, residual, tolerance, verdict }
    }

    /// Passes when `value > tolerance` (nonvanishing conditions).
    fn above(name: &'static str, value: f64, tolerance: f64) -> ConditionResult {
        let verdict = if value > tolerance { Verdict::Pass } else { Verdict::Fail };
        ConditionResult { name, residual: value, tolerance, verdict }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances {
    pub feasibility: f64,
    /// Pass threshold for AE, T and MP.
    pub residual: f64,
    /// Length of the window before `T` used by A1.
    pub a1_window: f64,
    /// `||p||` above this counts as nonzero (A1, A2) and `||lambda||_1`
    /// above it as nontrivial (NN).
    pub nonvanishing: f64,
}

impl Tolerances {
    pub fn for_mesh(mesh: &Mesh) -> Tolerances {
        let h = mesh.h();
        let w = mesh.delay().min(mesh.horizon()) / 10.0;
        Tolerances { feasibility: 1e-8, residual: 10.0 * h, a1_window: w.max(h), nonvanishing: 1e-8 }
    }
}

/// Outcome of the qualification check.
#[derive(Clone, Debug, PartialEq)]
pub struct QcReport {
    pub holds: bool,
    /// Largest `sum |c_j|` found with `sum c_j Dg^j = 0` and `|c_j| <= 1`;
    /// zero exactly when QC holds.
    pub residual: f64,
    /// A nonzero `c` when QC fails.
    pub certificate: Option<Vec<f64>>,
    /// Indices `j` that took part (objective, active inequalities, equalities).
    pub active: Vec<usize>,
    /// Rank of the participating gradients.
    pub rank: usize,
}

#[derive(Clone, Debug)]
pub struct PmpCertificate {
    pub lambda: Multipliers,
    pub p: PiecewiseFn,
    pub conditions: Vec<ConditionResult>,
    pub qc: QcReport,
    /// `c(t)` of the integrated adjoint equation at every node.
    pub ae_profile: Vec<Vec<f64>>,
    /// `max_t |int_t^{min(t+r,T)} - int_t^T|` of the adjoint integral.
    pub truncation_gap: f64,
    pub mp_samples: usize,
    /// Node and control sample where the MP residual is attained.
    pub mp_worst: Option<(usize, Vec<f64>)>,
}

impl PmpCertificate {
    pub fn condition(&self, name: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.name == name)
    }

    /// True when no conclusion failed. QC is a hypothesis, not a conclusion,
    /// and does not count.
    pub fn passed(&self) -> bool {
        self.conditions.iter().filter(|c| c.name != "QC").all(|c| c.verdict != Verdict::Fail)
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.conditions.iter().filter(|c| c.name != "QC" && c.verdict == Verdict::Fail).map(|c| c.name).collect()
    }

    /// `name residual tolerance verdict` lines.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.conditions {
            s.push_str(&format!("{:<3} {:>12.4e} {:>12.4e} {}\n", c.name, c.residual, c.tolerance, c.verdict.as_str()));
        }
        s
    }
}

/// `p(t) = sum_j lambda_j Dg^j(x(T)) X(T, t)` on nodes `0..=M` (row vector).
pub fn build_p(lambda: &Multipliers, gradients: &[Vec<f64>], xf: &FundamentalMatrix) -> Result<PiecewiseFn> {
    let n = xf.n();
    if lambda.lambda.len() != gradients.len() {
        return Err(Error::Dimension { what: "multipliers", expected: gradients.len(), found: lambda.lambda.len() });
    }
    let mut w = vec![0.0; n];
    for (l, g) in lambda.lambda.iter().zip(gradients) {
        if g.len() != n {
            return Err(Error::Dimension { what: "terminal gradient", expected: n, found: g.len() });
        }
        linalg::axpy(&mut w, *l, g);
    }
    let steps = xf.steps();
    let mut values = vec![0.0; (steps + 1) * n];
    for s in 0..=steps {
        linalg::vec_mat_acc(&mut values[s * n..(s + 1) * n], &w, xf.terminal(s), n, n, 1.0);
    }
    Ok(PiecewiseFn::from_nodes(xf.h(), 0, n, values))
}

/// Integrand `p(a) eta(a, t - a)` one-sided at node `a = j`: `a+` uses the
/// right coefficients and `theta -> (t - j)-`, `a-` the left ones and
/// `theta -> (t - j)+`.
fn eta_term(kernel: &DelayKernel, p: &[f64], j: usize, t: usize, from_right: bool, out: &mut [f64]) {
    let n = kernel.n();
    let q = j - t;
    let e = if from_right {
        kernel.eta_at(j, Side::Right, q, Some(Side::Left))
    } else {
        kernel.eta_at(j, Side::Left, q, Some(Side::Right))
    };
    out.iter_mut().for_each(|v| *v = 0.0);
    linalg::vec_mat_acc(out, p, &e, n, n, 1.0);
}

/// `int_t^{upper} p(a) eta(a, t - a) da` by the one-sided trapezoid rule.
pub fn adjoint_integral(kernel: &DelayKernel, p: &PiecewiseFn, t: usize, upper: usize) -> Vec<f64> {
    let n = kernel.n();
    let h = kernel.mesh().h();
    let mut acc = vec![0.0; n];
    let mut a = vec![0.0; n];
    for j in t..upper {
        eta_term(kernel, p.value(j as i64, Side::Right), j, t, true, &mut a);
        linalg::axpy(&mut acc, 0.5 * h, &a);
        eta_term(kernel, p.value(j as i64 + 1, Side::Left), j + 1, t, false, &mut a);
        linalg::axpy(&mut acc, 0.5 * h, &a);
    }
    acc
}

/// `c(t) = p(t) + int_t^{min(t+r,T)} p(a) eta(a, t - a) da - int_t^T p(a) eta(a, 0) da`
/// at every node. The last term is what the left-end normalization of
/// `eta` adds; `c` is constant (and equal to `p(T)`) along a solution of
/// the adjoint equation.
pub fn ae_profile(kernel: &DelayKernel, p: &PiecewiseFn) -> Vec<Vec<f64>> {
    let n = kernel.n();
    let steps = kernel.mesh().steps();
    let m = kernel.mesh().delay_steps();
    let h = kernel.mesh().h();
    // Suffix sums of p(a) eta(a, 0).
    let mut tail = vec![vec![0.0; n]; steps + 1];
    let mut a = vec![0.0; n];
    for j in (0..steps).rev() {
        let mut acc = tail[j + 1].clone();
        let er = kernel.eta_at(j, Side::Right, 0, None);
        a.iter_mut().for_each(|v| *v = 0.0);
        linalg::vec_mat_acc(&mut a, p.value(j as i64, Side::Right), &er, n, n, 1.0);
        linalg::axpy(&mut acc, 0.5 * h, &a);
        let el = kernel.eta_at(j + 1, Side::Left, 0, None);
        a.iter_mut().for_each(|v| *v = 0.0);
        linalg::vec_mat_acc(&mut a, p.value(j as i64 + 1, Side::Left), &el, n, n, 1.0);
        linalg::axpy(&mut acc, 0.5 * h, &a);
        tail[j] = acc;
    }
    (0..=steps)
        .map(|t| {
            let mut c = p.value(t as i64, Side::Right).to_vec();
            linalg::axpy(&mut c, 1.0, &adjoint_integral(kernel, p, t, (t + m).min(steps)));
            linalg::axpy(&mut c, -1.0, &tail[t]);
            c
        })
        .collect()
}

/// `max_t || int_t^{min(t+r,T)} - int_t^T ||` of `p(a) eta(a, t - a)`.
pub fn truncation_gap(kernel: &DelayKernel, p: &PiecewiseFn, stride: usize) -> f64 {
    let steps = kernel.mesh().steps();
    let m = kernel.mesh().delay_steps();
    (0..=steps)
        .step_by(stride.max(1))
        .map(|t| {
            let short = adjoint_integral(kernel, p, t, (t + m).min(steps));
            let full = adjoint_integral(kernel, p, t, steps);
            linalg::max_abs_diff(&short, &full)
        })
        .fold(0.0, f64::max)
}

/// Decides whether a nonzero `c` exists with `c_j >= 0` for `j <= n_i`,
/// `c_j = 0` for inactive inequalities and `sum c_j Dg^j = 0`.
///
/// Each sign pattern of the equality coefficients is one bounded LP
/// (maximize `sum |c_j|` with `|c_j| <= 1`); QC holds iff every optimum is 0.
pub fn check_qc(values: &[f64], gradients: &[Vec<f64>], n_ineq: usize, n_eq: usize, tol: f64) -> Result<QcReport> {
    if values.len() != 1 + n_ineq + n_eq || gradients.len() != values.len() {
        return Err(Error::Dimension { what: "terminal data", expected: 1 + n_ineq + n_eq, found: gradients.len() });
    }
    let n = gradients[0].len();
    let mut active = vec![0];
    for j in 1..=n_ineq {
        if values[j] <= tol {
            active.push(j);
        }
    }
    let eq: Vec<usize> = (n_ineq + 1..=n_ineq + n_eq).collect();
    active.extend(&eq);
    let rows: Vec<Vec<f64>> = active.iter().map(|&j| gradients[j].clone()).collect();
    let rank = linalg::rank(&rows, 1e-10);

    let k = active.len();
    let mut best = 0.0;
    let mut certificate = None;
    for pattern in 0..(1usize << eq.len()) {
        let sign = |idx: usize| -> f64 {
            let j = active[idx];
            if j > n_ineq && (pattern >> (j - n_ineq - 1)) & 1 == 1 {
                -1.0
            } else {
                1.0
            }
        };
        let mut prog = LinearProgram::new(vec![-1.0; k]);
        for comp in 0..n {
            prog.equal((0..k).map(|i| sign(i) * rows[i][comp]).collect(), 0.0);
        }
        for i in 0..k {
            let mut r = vec![0.0; k];
            r[i] = 1.0;
            prog.at_most(r, 1.0);
        }
        match lp::solve(&prog, 1e-12)? {
            LpOutcome::Optimal { x, value } => {
                if -value > best {
                    best = -value;
                    let mut c = vec![0.0; values.len()];
                    for (i, &j) in active.iter().enumerate() {
                        c[j] = sign(i) * x[i];
                    }
                    certificate = Some(c);
                }
            }
            LpOutcome::Infeasible | LpOutcome::Unbounded => {
                return Err(Error::IllConditioned { what: "qualification LP", value: f64::NAN })
            }
        }
    }
    let holds = best <= tol;
    Ok(QcReport { holds, residual: best, certificate: if holds { None } else { certificate }, active, rank })
}

/// Runs every check for `(reference, lambda)`. `kernel` and `xf` must come
/// from linearizing along `reference`; `samples` is the control sample set
/// used by MP.
pub fn check_conditions(
    problem: &ControlledProblem,
    reference: &Trajectory,
    kernel: &DelayKernel,
    xf: &FundamentalMatrix,
    lambda: &Multipliers,
    samples: &[Vec<f64>],
    tol: &Tolerances,
) -> Result<PmpCertificate> {
    let mesh = &problem.mesh;
    let n = problem.state_dim();
    let steps = mesh.steps();
    if xf.steps() != steps || xf.n() != n || kernel.n() != n {
        return Err(Error::Dimension { what: "fundamental matrix", expected: steps, found: xf.steps() });
    }
    let x_t = reference.terminal().to_vec();
    problem.check_admissible(&x_t, tol.feasibility)?;
    let values = problem.terminal_values(&x_t);
    let grads = problem.terminal_gradients(&x_t);
    let p = build_p(lambda, &grads, xf)?;
    let lam = &lambda.lambda;
    let (ni, ne) = (problem.n_ineq, problem.n_eq);

    let mut conditions = Vec::new();
    let l1 = lambda.l1();
    conditions.push(ConditionResult {
        name: "NN",
        residual: (1.0 - l1).abs(),
        tolerance: tol.nonvanishing,
        verdict: if l1 > tol.nonvanishing { Verdict::Pass } else { Verdict::Fail },
    });
    let si = lam[..=ni].iter().fold(0.0f64, |m, &l| if -l > m { -l } else { m });
    conditions.push(ConditionResult::at_most("Si", si, tol.feasibility));
    let sl = (1..=ni).map(|j| (lam[j] * values[j]).abs()).fold(0.0, f64::max);
    conditions.push(ConditionResult::at_most("Sl", sl, tol.feasibility));

    let profile = ae_profile(kernel, &p);
    let c_t = profile[steps].clone();
    let ae = profile.iter().map(|c| linalg::max_abs_diff(c, &c_t)).fold(0.0, f64::max);
    conditions.push(ConditionResult::at_most("AE", ae, tol.residual));

    let mut target = vec![0.0; n];
    for (l, g) in lam.iter().zip(&grads) {
        linalg::axpy(&mut target, *l, g);
    }
    let tr = linalg::max_abs_diff(p.value(steps as i64, Side::Left), &target);
    conditions.push(ConditionResult::at_most("T", tr, tol.residual));

    let mut mp = 0.0;
    let mut mp_worst = None;
    for i in 0..=steps {
        let pi = p.value(i as i64, Side::Right);
        let ubar = reference.u.value(i as i64, Side::Right);
        let fbar = problem.eval_along(&reference.x, i, Side::Right, ubar);
        let hbar = linalg::dot(pi, &fbar);
        for u in samples {
            let f = problem.eval_along(&reference.x, i, Side::Right, u);
            let gap = linalg::dot(pi, &f) - hbar;
            if gap > mp {
                mp = gap;
                mp_worst = Some((i, u.clone()));
            }
        }
    }
    conditions.push(ConditionResult::at_most("MP", mp, tol.residual));

    let qc = check_qc(&values, &grads, ni, ne, tol.feasibility)?;
    conditions.push(ConditionResult {
        name: "QC",
        residual: qc.residual,
        tolerance: tol.feasibility,
        verdict: if qc.holds { Verdict::Pass } else { Verdict::Fail },
    });

    let norm = |i: usize| linalg::norm_inf(p.value(i as i64, Side::Right));
    let window = (libm::round(tol.a1_window / mesh.h()) as usize).clamp(1, steps.max(1));
    let a1 = (steps.saturating_sub(window)..=steps).map(norm).fold(f64::INFINITY, f64::min);
    let m = mesh.delay_steps();
    let a2 = (0..=steps)
        .map(|t| (t..=(t + m).min(steps)).map(norm).fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min);
    for (name, v) in [("A1", a1), ("A2", a2)] {
        if qc.holds {
            conditions.push(ConditionResult::above(name, v, tol.nonvanishing));
        } else {
            conditions.push(ConditionResult { name, residual: v, tolerance: tol.nonvanishing, verdict: Verdict::NotApplicable });
        }
    }

    let stride = (steps / 200).max(1);
    let truncation_gap = truncation_gap(kernel, &p, stride);
    Ok(PmpCertificate {
        lambda: lambda.clone(),
        p,
        conditions,
        qc,
        ae_profile: profile,
        truncation_gap,
        mp_samples: samples.len(),
        mp_worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qc_examples() {
        let r = check_qc(&[0.0], &[vec![1.0, 0.0]], 0, 0, 1e-8).unwrap();
        assert!(r.holds);
        let r = check_qc(&[0.0, 0.5], &[vec![1.0, 0.0], vec![-1.0, 0.0]], 1, 0, 1e-8).unwrap();
        assert!(r.holds);
        let r = check_qc(&[0.0, 0.0], &[vec![1.0, 0.0], vec![-1.0, 0.0]], 1, 0, 1e-8).unwrap();
        assert!(!r.holds);
        assert_eq!(r.certificate.unwrap(), [1.0, 1.0]);
    }

    #[test]
    fn qc_with_equalities_needs_a_real_combination() {
        // Equality gradient parallel to the objective: c = (1, -1) kills it.
        let r = check_qc(&[0.0, 0.0], &[vec![0.0, 1.0], vec![0.0, 1.0]], 0, 1, 1e-8).unwrap();
        assert!(!r.holds);
        let c = r.certificate.unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] + 1.0).abs() < 1e-12);
        // Independent gradients: QC holds.
        let r = check_qc(&[0.0, 1.0, 0.0], &[vec![0.0, 1.0], vec![-1.0, 0.0], vec![1.0, 0.0]], 1, 1, 1e-8).unwrap();
        assert!(r.holds);
        assert_eq!(r.active, [0, 2]);
        assert_eq!(r.rank, 2);
    }
}
