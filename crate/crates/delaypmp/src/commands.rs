//! The pipelines behind each CLI subcommand. They compute everything in
//! memory and hand back tables plus a report; writing is left to the caller.

use delaypmp_core::fde::{solve, Trajectory};
use delaypmp_core::kernel::{linearize, DelayKernel};
use delaypmp_core::multipliers::{
    sample_family_with, solve_multipliers, MultiplierOutcome, MultiplierProgram, SearchOptions,
};
use delaypmp_core::needle::{finite_difference_check, l1_bound_check, NeedleSpec};
use delaypmp_core::pmp::{check_conditions, Multipliers, Tolerances};
use delaypmp_core::problems::catalog;
use delaypmp_core::resolvent::{adjoint_identity_residual, fundamental, FundamentalMatrix, FundamentalOptions, Route};
use delaypmp_core::{ControlledProblem, PiecewiseFn, Side};

use crate::config::{LambdaSource, Loaded};
use crate::error::CliError;
use crate::output::{numbered, Cell, RunReport, Table};

/// Largest allowed distance between the two fundamental-matrix routes.
pub const ROUTE_TOL: f64 = 1e-4;
/// Smallest acceptable fitted slope of the needle finite differences.
pub const MIN_SLOPE: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    ConditionFailed,
    ConvergenceFailed,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::ConditionFailed => 5,
            Status::ConvergenceFailed => 6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: RunReport,
    /// `(file name, contents)`; the first one is the primary output.
    pub files: Vec<(String, String)>,
    pub status: Status,
}

fn times(problem: &ControlledProblem) -> impl Iterator<Item = (usize, f64)> + '_ {
    (0..=problem.mesh.steps()).map(|i| (i, problem.mesh.time(i as i64)))
}

/// Right value, except the left one at `T`.
fn node_value(f: &PiecewiseFn, i: usize) -> &[f64] {
    let side = if i as i64 == f.last() { Side::Left } else { Side::Right };
    f.value(i as i64, side)
}

struct Linearized {
    trajectory: Trajectory,
    kernel: DelayKernel,
}

fn linearized(loaded: &Loaded, control: &PiecewiseFn) -> Result<Linearized, CliError> {
    let trajectory = solve(&loaded.problem, control)?;
    let kernel = linearize(&loaded.problem, &trajectory)?;
    Ok(Linearized { trajectory, kernel })
}

/// Both routes; returns the Volterra one and records their distance.
fn both_routes(kernel: &DelayKernel, opts: &FundamentalOptions, report: &mut RunReport) -> Result<FundamentalMatrix, CliError> {
    let v = fundamental(kernel, Route::Volterra, opts)?;
    let d = fundamental(kernel, Route::Direct, opts)?;
    let dist = v.max_distance(&d)?;
    if !report.check_at_most("route distance", dist, ROUTE_TOL) {
        return Err(CliError::Numeric(format!("fundamental-matrix routes disagree by {dist:e}")));
    }
    Ok(v)
}

pub fn cmd_solve(loaded: &Loaded, control: &PiecewiseFn, command: &str) -> Result<Outcome, CliError> {
    let p = &loaded.problem;
    let tr = solve(p, control)?;
    let (n, d) = (p.state_dim(), p.control_dim());
    let mut header = vec!["t".to_string()];
    header.extend(numbered("x", n));
    header.extend(numbered("u", d));
    let mut table = Table::new(header);
    for (i, t) in times(p) {
        let mut row = vec![t];
        row.extend_from_slice(node_value(&tr.x, i));
        row.extend_from_slice(node_value(control, i));
        table.push_nums(row);
    }
    let mut report = RunReport::new(command, &loaded.source, &p.mesh);
    for (j, g) in p.terminal_values(tr.terminal()).iter().enumerate() {
        report.info(&format!("g{j}(x(T))"), *g);
    }
    match p.check_admissible(tr.terminal(), 1e-8) {
        Ok(()) => report.note("terminal constraints hold"),
        Err(e) => report.note(format!("terminal constraints violated: {e}")),
    }
    Ok(Outcome { report, files: vec![("trajectory.csv".into(), table.to_csv())], status: Status::Pass })
}

pub fn cmd_fundamental(loaded: &Loaded, control: &PiecewiseFn, dense: bool, command: &str) -> Result<Outcome, CliError> {
    let p = &loaded.problem;
    let lin = linearized(loaded, control)?;
    let mut report = RunReport::new(command, &loaded.source, &p.mesh);
    let opts = if dense { FundamentalOptions::dense() } else { FundamentalOptions::terminal() };
    let xf = both_routes(&lin.kernel, &opts, &mut report)?;
    let n = p.state_dim();
    let entries: Vec<String> = (1..=n).flat_map(|a| (1..=n).map(move |b| format!("X{a}{b}"))).collect();
    let mut header = vec!["s".to_string()];
    header.extend(entries.iter().cloned());
    let mut table = Table::new(header);
    for (i, s) in times(p) {
        let mut row = vec![s];
        row.extend_from_slice(xf.terminal(i));
        table.push_nums(row);
    }
    let mut files = vec![("x_terminal.csv".to_string(), table.to_csv())];
    if dense {
        let r = adjoint_identity_residual(&xf, &lin.kernel)?;
        report.check_at_most("adjoint identity", r, ROUTE_TOL);
        let mut header = vec!["t".to_string(), "s".to_string()];
        header.extend(entries);
        let mut table = Table::new(header);
        for (i, t) in times(p) {
            for (j, s) in times(p).take(i + 1) {
                let mut row = vec![t, s];
                row.extend_from_slice(xf.get(i, j)?);
                table.push_nums(row);
            }
        }
        files.push(("x_dense.csv".into(), table.to_csv()));
    }
    Ok(Outcome { report, files, status: Status::Pass })
}

fn mp_samples(p: &ControlledProblem, mp_grid: Option<usize>) -> Vec<Vec<f64>> {
    match mp_grid {
        Some(k) => p.controls.samples_with_grid(k),
        None => p.controls.samples(),
    }
}

fn search(
    loaded: &Loaded,
    lin: &Linearized,
    xf: &FundamentalMatrix,
    samples: &[Vec<f64>],
    stride: usize,
    report: &mut RunReport,
) -> Result<(Multipliers, Table), CliError> {
    let p = &loaded.problem;
    let mut prog = MultiplierProgram::new(p, &lin.trajectory);
    prog.enrich_samples(p, &lin.trajectory, xf, &sample_family_with(p, stride, samples))?;
    report.info("multiplier samples", prog.samples.len() as f64);
    match solve_multipliers(&prog, &SearchOptions::default())? {
        MultiplierOutcome::Found { multipliers, check } => {
            let tol = SearchOptions::default().verify_tol;
            report.check_at_most("lambda l1 norm", check.norm, tol);
            report.check_at_most("lambda sign", check.sign, tol);
            report.check_at_most("lambda slackness", check.slackness, tol);
            report.check_at_most("lambda samples", check.samples, tol);
            let mut table = Table::new(["j", "lambda", "g", "kind"]);
            for (j, l) in multipliers.lambda.iter().enumerate() {
                let kind = if j == 0 {
                    "objective"
                } else if j <= p.n_ineq {
                    "inequality"
                } else {
                    "equality"
                };
                table.push(vec![Cell::Num(j as f64), Cell::Num(*l), Cell::Num(prog.activity[j]), kind.into()]);
            }
            Ok((multipliers, table))
        }
        MultiplierOutcome::Infeasible(c) => {
            let s = &prog.samples[c.worst];
            Err(CliError::Infeasible(format!(
                "no multiplier on this sample set ({} samples): the candidate is not optimal up to discretization; \
                 the best lambda {:?} still violates the sample at t = {}, v = {:?} by {:e}",
                prog.samples.len(),
                c.lambda,
                p.mesh.time(s.t as i64),
                s.v,
                c.violation
            )))
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_check_pmp(
    loaded: &Loaded,
    control: &PiecewiseFn,
    lambda: &LambdaSource,
    mp_grid: Option<usize>,
    stride: usize,
    command: &str,
) -> Result<Outcome, CliError> {
    let p = &loaded.problem;
    let lin = linearized(loaded, control)?;
    let mut report = RunReport::new(command, &loaded.source, &p.mesh);
    let xf = both_routes(&lin.kernel, &FundamentalOptions::terminal(), &mut report)?;
    let samples = mp_samples(p, mp_grid);
    let mut files = Vec::new();
    let lambda = match lambda {
        LambdaSource::Given(v) => Multipliers::new(v.clone()),
        LambdaSource::Search => {
            let (m, table) = search(loaded, &lin, &xf, &samples, stride, &mut report)?;
            files.push(("lambda.csv".to_string(), table.to_csv()));
            m
        }
    };
    let tol = Tolerances::for_mesh(&p.mesh);
    let cert = check_conditions(p, &lin.trajectory, &lin.kernel, &xf, &lambda, &samples, &tol)?;

    let mut table = Table::new(["condition", "residual", "tolerance", "verdict"]);
    for c in &cert.conditions {
        table.push(vec![c.name.into(), Cell::Num(c.residual), Cell::Num(c.tolerance), c.verdict.as_str().into()]);
        report.check(c.name, c.residual, c.tolerance, c.verdict.as_str());
    }
    files.insert(0, ("conditions.csv".to_string(), table.to_csv()));

    let n = p.state_dim();
    let mut header = vec!["t".to_string()];
    header.extend(numbered("p", n));
    header.extend(numbered("c", n));
    let mut cov = Table::new(header);
    for (i, t) in times(p) {
        let mut row = vec![t];
        row.extend_from_slice(node_value(&cert.p, i));
        row.extend_from_slice(&cert.ae_profile[i]);
        cov.push_nums(row);
    }
    files.push(("covector.csv".to_string(), cov.to_csv()));

    report.info("truncation gap", cert.truncation_gap);
    report.info("QC rank", cert.qc.rank as f64);
    report.info("MP samples", cert.mp_samples as f64);
    report.note(format!("lambda = {:?}", cert.lambda.lambda));
    if let Some((i, v)) = &cert.mp_worst {
        report.note(format!("MP residual attained at t = {}, u = {v:?}", p.mesh.time(*i as i64)));
    }
    if let Some(c) = &cert.qc.certificate {
        report.note(format!("QC fails: sum c_j Dg^j = 0 with c = {c:?}"));
    }
    let status = if cert.passed() { Status::Pass } else { Status::ConditionFailed };
    if status != Status::Pass {
        report.note(format!("failed: {}", cert.failed().join(", ")));
    }
    Ok(Outcome { report, files, status })
}

/// Node multiples of `h` for the widths `eps`.
pub fn eps_ladder(eps: &[f64], h: f64) -> Result<Vec<usize>, CliError> {
    eps.iter()
        .map(|&e| {
            let k = e / h;
            if !(e > 0.0) || k < 1.0 - 1e-9 {
                return Err(CliError::Config(format!("needle width eps = {e} is below the mesh step h = {h}")));
            }
            let r = k.round();
            if (k - r).abs() > 1e-9 * r.max(1.0) {
                return Err(CliError::Config(format!("needle width eps = {e} is not a multiple of h = {h}")));
            }
            Ok(r as usize)
        })
        .collect()
}

pub fn cmd_needle(
    loaded: &Loaded,
    control: &PiecewiseFn,
    needles: &[(f64, Vec<f64>)],
    eps: &[f64],
    command: &str,
) -> Result<Outcome, CliError> {
    let p = &loaded.problem;
    if needles.is_empty() {
        return Err(CliError::Config("at least one --needle t:v is required".into()));
    }
    for (t, v) in needles {
        if v.len() != p.control_dim() || !p.controls.contains(v, 1e-12) {
            return Err(CliError::Config(format!("needle value {v:?} at t = {t} is not in U")));
        }
    }
    let ladder = eps_ladder(eps, p.mesh.h())?;
    let spec = NeedleSpec::at_times(&p.mesh, needles)?;
    let lin = linearized(loaded, control)?;
    let mut report = RunReport::new(command, &loaded.source, &p.mesh);
    let xf = fundamental(&lin.kernel, Route::Volterra, &FundamentalOptions::terminal())?;
    let fd = finite_difference_check(p, &lin.trajectory, &xf, &spec, &ladder)?;

    let k = spec.len();
    let mut header = vec!["eps".to_string()];
    header.extend(numbered("error", k));
    header.extend(numbered("slope", k));
    let mut table = Table::new(header);
    for r in &fd.rows {
        let mut row: Vec<Cell> = vec![Cell::Num(r.eps)];
        row.extend(r.errors.iter().map(|e| Cell::Num(*e)));
        row.extend(fd.slopes.iter().map(|s| s.map_or(Cell::Text("exact".into()), Cell::Num)));
        table.push(row);
    }
    for (i, ((t, v), d)) in spec.needles.iter().zip(&fd.sensitivities).enumerate() {
        report.note(format!("needle {} at t = {}, v = {v:?}: d = {d:?}", i + 1, p.mesh.time(*t as i64)));
        match fd.slopes[i] {
            Some(s) => {
                let ok = s >= MIN_SLOPE;
                report.check(&format!("slope {}", i + 1), s, MIN_SLOPE, if ok { "pass" } else { "fail" });
            }
            None => report.check(&format!("slope {}", i + 1), 0.0, MIN_SLOPE, "exact"),
        }
    }

    let mut files = vec![("convergence.csv".to_string(), table.to_csv())];
    // Overlapping intervals at the larger widths only skip this part.
    match l1_bound_check(p, &lin.trajectory, &spec, &vec![1; k], &ladder) {
        Ok(l1) => {
            let mut t = Table::new(["a_l1", "integral", "ratio"]);
            for (a, i, r) in &l1.rows {
                t.push_nums([*a, *i, *r]);
            }
            files.push(("l1.csv".to_string(), t.to_csv()));
            report.info("l1 ratio max", l1.max_ratio);
            report.info("l1 ratio variation", l1.variation);
            report.info("l1 ratio limit", l1.limit);
        }
        Err(e) => report.note(format!("l1 check skipped: {e}")),
    }
    let status = if fd.converges(MIN_SLOPE) { Status::Pass } else { Status::ConvergenceFailed };
    Ok(Outcome { report, files, status })
}

pub fn cmd_search_multipliers(
    loaded: &Loaded,
    control: &PiecewiseFn,
    mp_grid: Option<usize>,
    stride: usize,
    command: &str,
) -> Result<Outcome, CliError> {
    let p = &loaded.problem;
    let lin = linearized(loaded, control)?;
    let mut report = RunReport::new(command, &loaded.source, &p.mesh);
    let xf = both_routes(&lin.kernel, &FundamentalOptions::terminal(), &mut report)?;
    let samples = mp_samples(p, mp_grid);
    let (m, table) = search(loaded, &lin, &xf, &samples, stride, &mut report)?;
    report.note(format!("lambda = {:?}", m.lambda));
    let all_pass = report.checks.iter().all(|c| c.verdict != "fail");
    Ok(Outcome {
        report,
        files: vec![("lambda.csv".to_string(), table.to_csv())],
        status: if all_pass { Status::Pass } else { Status::ConditionFailed },
    })
}

/// The catalog as a table.
pub fn cmd_catalog() -> Table {
    let mut t = Table::new(["name", "T", "r", "default_h", "summary", "oracle"]);
    for e in catalog() {
        t.push(vec![
            e.name.into(),
            Cell::Num(e.horizon),
            Cell::Num(e.delay),
            Cell::Num(e.default_h),
            e.summary.into(),
            e.oracle.into(),
        ]);
    }
    t
}
