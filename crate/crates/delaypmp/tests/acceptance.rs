//! Acceptance criteria 1-10, one PASS/FAIL line each. Runs without the
//! libtest harness so the lines are always printed.

use std::time::Instant;

use delaypmp::commands::{cmd_check_pmp, Status};
use delaypmp::config::{load_problem, LambdaSource};
use delaypmp_core::fde::{picard_solve, solve, solve_linear, PicardOptions};
use delaypmp_core::kernel::{linearize, DelayKernel};
use delaypmp_core::multipliers::{sample_family, solve_multipliers, MultiplierOutcome, MultiplierProgram, SearchOptions};
use delaypmp_core::needle::{finite_difference_check, l1_bound_check, NeedleSpec};
use delaypmp_core::pmp::{check_conditions, Multipliers, Tolerances};
use delaypmp_core::problems::{by_name, catalog};
use delaypmp_core::resolvent::{
    adjoint_identity_residual, fundamental, var_const_u, var_const_v, FundamentalMatrix, FundamentalOptions, Route,
};
use delaypmp_core::{linalg, ControlledProblem, HistorySegment, PiecewiseFn, Side, Trajectory};

struct Verdicts {
    failed: Vec<usize>,
}

impl Verdicts {
    fn record(&mut self, n: usize, title: &str, ok: bool, budget: f64, secs: f64, detail: String) {
        let ok = ok && secs < budget;
        if !ok {
            self.failed.push(n);
        }
        println!(
            "criterion {n:>2} {} {title}: {detail}; {secs:.2} s (budget {budget} s)",
            if ok { "PASS" } else { "FAIL" }
        );
    }
}

fn setup(name: &str, h: Option<f64>) -> (ControlledProblem, Trajectory, DelayKernel) {
    let e = by_name(name).unwrap();
    let p = e.problem(h).unwrap();
    let u = e.reference_control(&p.mesh).unwrap();
    let tr = solve(&p, &u).unwrap();
    let k = linearize(&p, &tr).unwrap();
    (p, tr, k)
}

fn sup_distance(a: &PiecewiseFn, b: &PiecewiseFn) -> f64 {
    let mut worst: f64 = 0.0;
    for i in a.first()..=a.last() {
        for side in [Side::Left, Side::Right] {
            worst = worst.max(linalg::max_abs_diff(a.value(i, side), b.value(i, side)));
        }
    }
    worst
}

fn c1_method_of_steps(v: &mut Verdicts) {
    let start = Instant::now();
    let e = by_name("scalar_delay_free_decay").unwrap();
    let p = e.problem(Some(1e-3)).unwrap();
    let tr = solve(&p, &e.reference_control(&p.mesh).unwrap()).unwrap();
    let x1 = tr.x.value(1000, Side::Right)[0];
    let x2 = tr.terminal()[0];
    let secs = start.elapsed().as_secs_f64();
    let ok = x1.abs() <= 1e-6 && (x2 + 0.5).abs() <= 1e-5;
    v.record(1, "method of steps", ok, 1.0, secs, format!("x(1) = {x1:.3e}, x(2) + 0.5 = {:.3e}", x2 + 0.5));
}

fn c2_picard(v: &mut Verdicts) {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    for e in catalog() {
        let p = e.problem(Some(1e-3)).unwrap();
        let u = e.reference_control(&p.mesh).unwrap();
        let tr = solve(&p, &u).unwrap();
        let pic = picard_solve(&p, &u, &PicardOptions::default()).unwrap();
        worst = worst.max(sup_distance(&tr.x, &pic.trajectory.x));
        // Successive increment ratios after the first three iterates, above round-off.
        let inc = &pic.increments;
        for k in 3..inc.len().saturating_sub(1) {
            if inc[k] > 1e-13 {
                worst_ratio = worst_ratio.max(inc[k + 1] / inc[k]);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst <= 1e-5 && worst_ratio < 1.0;
    v.record(
        2,
        "Picard oracle",
        ok,
        10.0,
        secs,
        format!("max sup distance {worst:.3e}, largest increment ratio after 3 iterates {worst_ratio:.3}"),
    );
}

fn c3_routes(v: &mut Verdicts) -> Vec<(String, DelayKernel, FundamentalMatrix)> {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut identity = true;
    let mut kept = Vec::new();
    for e in catalog() {
        let (_, _, k) = setup(e.name, Some(1e-3));
        let xv = fundamental(&k, Route::Volterra, &FundamentalOptions::dense()).unwrap();
        let xd = fundamental(&k, Route::Direct, &FundamentalOptions::dense()).unwrap();
        worst = worst.max(xv.max_distance(&xd).unwrap());
        let id = linalg::identity(k.n());
        for t in 0..=xv.steps() {
            for s in t..=xv.steps() {
                identity &= xv.get(t, s).unwrap() == &id[..] && xd.get(t, s).unwrap() == &id[..];
            }
        }
        kept.push((e.name.to_string(), k, xd));
    }
    let secs = start.elapsed().as_secs_f64();
    v.record(
        3,
        "route equivalence",
        worst <= 1e-4 && identity,
        30.0,
        secs,
        format!("max |X_volterra - X_direct| = {worst:.3e}, X(t,s) = I for s >= t: {identity}"),
    );
    kept
}

fn c4_variation_of_constants(v: &mut Verdicts, kept: &[(String, DelayKernel, FundamentalMatrix)]) {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (_, k, xf) in kept {
        let mesh = k.mesh();
        let n = k.n();
        let m = mesh.delay_steps();
        let phi = HistorySegment::from_fn(mesh.h(), m, |th| (0..n).map(|j| 1.0 + th + 0.25 * j as f64).collect());
        let forcing = PiecewiseFn::sample(mesh.h(), 0, mesh.steps() as i64, n, &[], |t, _, out| {
            for (j, o) in out.iter_mut().enumerate() {
                *o = (2.0 * t + j as f64).sin();
            }
        });
        for sigma in [0, mesh.steps() / 4] {
            let u = var_const_u(xf, k, sigma, &phi).unwrap();
            worst = worst.max(sup_distance(&u, &solve_linear(k, sigma, &phi, None).unwrap()));
            let w = var_const_v(xf, k, sigma, &phi, &forcing).unwrap();
            worst = worst.max(sup_distance(&w, &solve_linear(k, sigma, &phi, Some(&forcing)).unwrap()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    v.record(
        4,
        "variation of constants",
        worst <= 1e-4,
        10.0,
        secs,
        format!("max |U - x|, |V - x| = {worst:.3e} over {} kernels, sigma in {{0, T/4}}, with forcing (X from criterion 3)", kept.len()),
    );
}

fn c5_adjoint(v: &mut Verdicts) {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut sizes = Vec::new();
    for e in catalog() {
        // About 200 steps with r/h an integer.
        let per_delay = (200.0 * e.delay / e.horizon).round();
        let h = e.delay / per_delay;
        let (_, _, k) = setup(e.name, Some(h));
        sizes.push(k.mesh().steps());
        let xf = fundamental(&k, Route::Volterra, &FundamentalOptions::dense()).unwrap();
        worst = worst.max(adjoint_identity_residual(&xf, &k).unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    v.record(
        5,
        "adjoint identity",
        worst <= 1e-4,
        10.0,
        secs,
        format!("max residual over all node pairs {worst:.3e} (steps {sizes:?})"),
    );
}

fn c6_ae_constancy(v: &mut Verdicts) {
    let start = Instant::now();
    let (p, tr, k) = setup("scalar_delay_feedback", Some(1e-3));
    let xf = fundamental(&k, Route::Volterra, &FundamentalOptions::terminal()).unwrap();
    let tol = Tolerances::for_mesh(&p.mesh);
    let cert = check_conditions(&p, &tr, &k, &xf, &Multipliers::new(vec![1.0]), &p.controls.samples(), &tol).unwrap();
    let p_t = cert.p.value(cert.p.last(), Side::Left).to_vec();
    let dev = cert.ae_profile.iter().map(|c| linalg::max_abs_diff(c, &p_t)).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let ok = dev <= 10.0 * p.mesh.h() && cert.truncation_gap <= 1e-12;
    v.record(
        6,
        "AE constancy",
        ok,
        5.0,
        secs,
        format!("max |c(t) - p(T)| = {dev:.3e} (limit {:.1e}), truncation gap {:.3e}", 10.0 * p.mesh.h(), cert.truncation_gap),
    );
}

/// Controls with values +-1 and at most three switches on the 21-node grid.
fn bang_bang_controls(p: &ControlledProblem) -> Vec<PiecewiseFn> {
    let grid: Vec<f64> = (1..20).map(|k| k as f64 * 0.1).collect();
    let mut out = Vec::new();
    for first in [1.0, -1.0] {
        let mut push = |sw: &[f64]| {
            let mut pieces = vec![(0.0, vec![first])];
            for (i, &t) in sw.iter().enumerate() {
                pieces.push((t, vec![if i % 2 == 0 { -first } else { first }]));
            }
            out.push(PiecewiseFn::piecewise_constant(&p.mesh, &pieces).unwrap());
        };
        push(&[]);
        for a in 0..grid.len() {
            push(&[grid[a]]);
            for b in a + 1..grid.len() {
                push(&[grid[a], grid[b]]);
                for c in b + 1..grid.len() {
                    push(&[grid[a], grid[b], grid[c]]);
                }
            }
        }
    }
    out
}

fn c7_pmp_end_to_end(v: &mut Verdicts) {
    let start = Instant::now();
    let loaded = load_problem("scalar_delay_feedback", Some(1e-3)).unwrap();
    let p = &loaded.problem;
    let lam = LambdaSource::Given(vec![1.0]);
    let good = cmd_check_pmp(&loaded, &p.constant_control(&[1.0]), &lam, None, 1, "acceptance").unwrap();
    let all_pass = good.status == Status::Pass && good.report.checks.iter().all(|c| c.verdict != "fail" && c.verdict != "n/a");
    let bad = cmd_check_pmp(&loaded, &p.constant_control(&[-1.0]), &lam, None, 1, "acceptance").unwrap();
    let mp_bad = bad.report.checks.iter().find(|c| c.name == "MP").unwrap();
    let mp_fails = bad.status == Status::ConditionFailed && mp_bad.verdict == "fail" && mp_bad.value >= 0.1;

    let controls = bang_bang_controls(p);
    let best_other = controls
        .iter()
        .skip(1)
        .map(|u| solve(p, u).unwrap().terminal()[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let ubar = solve(p, &controls[0]).unwrap().terminal()[0];
    let secs = start.elapsed().as_secs_f64();
    v.record(
        7,
        "PMP end to end",
        all_pass && mp_fails && ubar >= best_other,
        60.0,
        secs,
        format!(
            "u = 1 passes all nine: {all_pass}; u = -1 MP residual {:.3}; brute force over {} bang-bang controls: g0(u = 1) = {ubar:.6}, best other {best_other:.6}",
            mp_bad.value,
            controls.len()
        ),
    );
}

fn c8_needles(v: &mut Verdicts) {
    let start = Instant::now();
    let ladder = [1, 2, 4, 8, 16, 32];
    let (p, tr, k) = setup("scalar_delay_feedback", Some(1e-3));
    let xf = fundamental(&k, Route::Volterra, &FundamentalOptions::terminal()).unwrap();
    let spec = NeedleSpec::at_times(&p.mesh, &[(0.25, vec![-1.0]), (0.5, vec![0.0]), (1.25, vec![-0.5])]).unwrap();
    let fd = finite_difference_check(&p, &tr, &xf, &spec, &ladder).unwrap();
    let slopes: Vec<f64> = fd.slopes.iter().map(|s| s.unwrap_or(f64::INFINITY)).collect();
    // Needles after T - r see no delay feedback: their errors are round-off.
    let feedback_ok = fd.slopes[0].is_some_and(|s| s >= 0.9) && fd.slopes[1].is_some_and(|s| s >= 0.9) && fd.converges(0.9);

    let (p, tr, k) = setup("pure_integrator", None);
    let xf = fundamental(&k, Route::Volterra, &FundamentalOptions::terminal()).unwrap();
    let spec = NeedleSpec::at_times(&p.mesh, &[(0.25, vec![-1.0]), (0.75, vec![-1.0])]).unwrap();
    let fd = finite_difference_check(&p, &tr, &xf, &spec, &ladder).unwrap();
    let zeros = fd.exact_zero(0) && fd.exact_zero(1);
    let secs = start.elapsed().as_secs_f64();
    v.record(
        8,
        "needle convergence",
        feedback_ok && zeros,
        30.0,
        secs,
        format!("scalar_delay_feedback slopes {slopes:.3?} (inf = round-off only); pure_integrator exact zeros: {zeros}"),
    );
}

fn c9_l1_bound(v: &mut Verdicts) {
    let start = Instant::now();
    let scales = [1, 2, 4, 8, 16, 32, 64];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, t, val) in [("scalar_delay_feedback", 0.25, -1.0), ("delayed_logistic", 0.5, 0.0), ("delayed_logistic", 2.0, 2.0)] {
        let (p, tr, _) = setup(name, Some(1e-3));
        let spec = NeedleSpec::at_times(&p.mesh, &[(t, vec![val])]).unwrap();
        let r = l1_bound_check(&p, &tr, &spec, &[1], &scales).unwrap();
        // The smallest width stands in for a -> 0.
        let limit_estimate = r.rows[0].2;
        let rel = (limit_estimate - r.sum_delta_f).abs() / r.sum_delta_f;
        ok &= r.variation <= 0.10 && rel <= 0.02 && r.max_ratio.is_finite();
        detail.push(format!("{name} t = {t}: variation {:.2}%, limit vs sum |df| {:.3}%", 100.0 * r.variation, 100.0 * rel));
    }
    let secs = start.elapsed().as_secs_f64();
    v.record(9, "L1 bound", ok, 10.0, secs, detail.join("; "));
}

fn c10_multipliers(v: &mut Verdicts) {
    let start = Instant::now();
    let (p, tr, k) = setup("constrained_terminal", Some(1e-3));
    let xf = fundamental(&k, Route::Volterra, &FundamentalOptions::terminal()).unwrap();
    let mut prog = MultiplierProgram::new(&p, &tr);
    prog.enrich_samples(&p, &tr, &xf, &sample_family(&p, 1)).unwrap();
    let opts = SearchOptions::default();
    let MultiplierOutcome::Found { multipliers, check } = solve_multipliers(&prog, &opts).unwrap() else {
        v.record(10, "multiplier search", false, 30.0, start.elapsed().as_secs_f64(), "LP found no multiplier".into());
        return;
    };
    let lp = &multipliers.lambda;

    // Brute force over the l1 sphere on a 1e-3 grid, with the sign and
    // slackness conditions imposed exactly. A grid point within delta of a
    // feasible lambda violates a sample row by at most delta * |w|, so that
    // is the acceptance slack.
    let delta = 1e-3;
    let steps = (1.0 / delta) as usize;
    let wmax = prog.samples.iter().map(|s| linalg::norm_inf(&s.row)).fold(0.0, f64::max);
    let slack = delta * wmax;
    let free_ineq = (1..=p.n_ineq).any(|j| prog.activity[j].abs() <= opts.activity_tol);
    let mut feasible: Vec<[f64; 3]> = Vec::new();
    let mut grid_points = 0usize;
    for i in 0..=steps {
        for j in 0..=(steps - i) {
            if j > 0 && !free_ineq {
                continue;
            }
            let rest = (steps - i - j) as f64 * delta;
            for sign in [1.0, -1.0] {
                if rest == 0.0 && sign < 0.0 {
                    continue;
                }
                let lam = [i as f64 * delta, j as f64 * delta, sign * rest];
                grid_points += 1;
                if prog.samples.iter().all(|s| linalg::dot(&lam, &s.row) <= slack) {
                    feasible.push(lam);
                }
            }
        }
    }
    let dist = |a: &[f64; 3]| a.iter().zip(lp).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let nearest = feasible.iter().map(dist).fold(f64::INFINITY, f64::min);
    let farthest = feasible.iter().map(dist).fold(0.0, f64::max);
    let residual = check.max();
    let secs = start.elapsed().as_secs_f64();
    let ok = !feasible.is_empty() && nearest <= delta && residual <= 1e-8;
    v.record(
        10,
        "multiplier search",
        ok,
        30.0,
        secs,
        format!(
            "LP lambda {lp:.6?} ({} samples); grid: {} of {grid_points} points feasible, nearest {nearest:.1e}, farthest {farthest:.1e}; substitution residual {residual:.1e}",
            prog.samples.len(),
            feasible.len()
        ),
    );
}

fn main() {
    // `cargo test -- --list` expects a listing, not a run.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut v = Verdicts { failed: Vec::new() };
    c1_method_of_steps(&mut v);
    c2_picard(&mut v);
    let kept = c3_routes(&mut v);
    c4_variation_of_constants(&mut v, &kept);
    drop(kept);
    c5_adjoint(&mut v);
    c6_ae_constancy(&mut v);
    c7_pmp_end_to_end(&mut v);
    c8_needles(&mut v);
    c9_l1_bound(&mut v);
    c10_multipliers(&mut v);
    if v.failed.is_empty() {
        println!("acceptance: all 10 criteria pass");
    } else {
        println!("acceptance: failed criteria {:?}", v.failed);
        std::process::exit(1);
    }
}
