//! Closed forms and independent routes checked against each other.

use delaypmp_core::fde::{picard_solve, solve, solve_linear, PicardOptions};
use delaypmp_core::kernel::{linearize, DelayKernel};
use delaypmp_core::multipliers::{sample_family, solve_multipliers, MultiplierOutcome, MultiplierProgram, SearchOptions};
use delaypmp_core::needle::{finite_difference_check, l1_bound_check, l1_deviation, linearized_sensitivity, NeedleSpec};
use delaypmp_core::pmp::{check_conditions, Multipliers, Tolerances};
use delaypmp_core::problems::{by_name, catalog};
use delaypmp_core::resolvent::{
    adjoint_identity_residual, fundamental, var_const_u, var_const_v, FundamentalMatrix, FundamentalOptions, Route,
};
use delaypmp_core::{linalg, ControlledProblem, HistorySegment, PiecewiseFn, Side, Trajectory};

fn setup(name: &str, h: Option<f64>) -> (ControlledProblem, Trajectory, DelayKernel) {
    let e = by_name(name).unwrap();
    let p = e.problem(h).unwrap();
    let u = e.reference_control(&p.mesh).unwrap();
    let tr = solve(&p, &u).unwrap();
    let k = linearize(&p, &tr).unwrap();
    (p, tr, k)
}

fn sup_distance(a: &PiecewiseFn, b: &PiecewiseFn, from: i64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in from..=a.last() {
        for side in [Side::Left, Side::Right] {
            worst = worst.max(linalg::max_abs_diff(a.value(i, side), b.value(i, side)));
        }
    }
    worst
}

#[test]
fn decay_matches_closed_form() {
    let (p, tr, _) = setup("scalar_delay_free_decay", Some(1e-3));
    let exact = |t: f64| if t <= 1.0 { 1.0 - t } else { t * t / 2.0 - 2.0 * t + 1.5 };
    for i in 0..=p.mesh.steps() {
        let t = p.mesh.time(i as i64);
        assert!((tr.x.value(i as i64, Side::Right)[0] - exact(t)).abs() < 1e-9, "t = {t}");
    }
}

#[test]
fn picard_agrees_with_marching() {
    for e in catalog() {
        let p = e.problem(Some(1e-2)).unwrap();
        let u = e.reference_control(&p.mesh).unwrap();
        let tr = solve(&p, &u).unwrap();
        let pic = picard_solve(&p, &u, &PicardOptions::default()).unwrap();
        let d = sup_distance(&tr.x, &pic.trajectory.x, tr.x.first());
        // Both schemes are second order; at h = 1e-2 they differ by O(h^2).
        assert!(d < 1e-4, "{}: {d:e}", e.name);
    }
}

#[test]
fn routes_agree_and_x_is_identity_above_diagonal() {
    for e in catalog() {
        let (_, _, k) = setup(e.name, Some(1e-2));
        let v = fundamental(&k, Route::Volterra, &FundamentalOptions::dense()).unwrap();
        let d = fundamental(&k, Route::Direct, &FundamentalOptions::dense()).unwrap();
        assert!(v.max_distance(&d).unwrap() < 1e-4, "{}", e.name);
        let id = linalg::identity(k.n());
        for t in [0, 10, v.steps()] {
            for s in t..=v.steps() {
                assert_eq!(v.get(t, s).unwrap(), &id[..]);
                assert_eq!(d.get(t, s).unwrap(), &id[..]);
            }
        }
    }
}

#[test]
fn variation_of_constants_reproduces_linear_solutions() {
    for e in catalog() {
        let (p, _, k) = setup(e.name, Some(1e-2));
        let xf = fundamental(&k, Route::Direct, &FundamentalOptions::dense()).unwrap();
        let m = p.mesh.delay_steps();
        let n = k.n();
        let phi = HistorySegment::from_fn(p.mesh.h(), m, |th| (0..n).map(|j| 1.0 + 0.5 * th + 0.1 * j as f64).collect());
        let forcing = PiecewiseFn::sample(p.mesh.h(), 0, p.mesh.steps() as i64, n, &[], |t, _, out| {
            for (j, o) in out.iter_mut().enumerate() {
                *o = (t + j as f64).cos();
            }
        });
        for sigma in [0, p.mesh.steps() / 3] {
            let u = var_const_u(&xf, &k, sigma, &phi).unwrap();
            let x = solve_linear(&k, sigma, &phi, None).unwrap();
            assert!(sup_distance(&u, &x, u.first()) < 1e-4, "{} U sigma {sigma}", e.name);
            let v = var_const_v(&xf, &k, sigma, &phi, &forcing).unwrap();
            let y = solve_linear(&k, sigma, &phi, Some(&forcing)).unwrap();
            assert!(sup_distance(&v, &y, v.first()) < 1e-4, "{} V sigma {sigma}", e.name);
        }
    }
}

#[test]
fn adjoint_identity_on_coarse_mesh() {
    for e in catalog() {
        let h = e.horizon / 200.0;
        let h = if (e.delay / h).fract() == 0.0 { h } else { e.delay / 100.0 };
        let (_, _, k) = setup(e.name, Some(h));
        let xf = fundamental(&k, Route::Volterra, &FundamentalOptions::dense()).unwrap();
        let r = adjoint_identity_residual(&xf, &k).unwrap();
        assert!(r < 1e-4, "{}: {r:e}", e.name);
    }
}

fn terminal_x(k: &DelayKernel) -> FundamentalMatrix {
    fundamental(k, Route::Volterra, &FundamentalOptions::terminal()).unwrap()
}

#[test]
fn feedback_reference_passes_every_condition() {
    let (p, tr, k) = setup("scalar_delay_feedback", None);
    let xf = terminal_x(&k);
    let tol = Tolerances::for_mesh(&p.mesh);
    let cert =
        check_conditions(&p, &tr, &k, &xf, &Multipliers::new(vec![1.0]), &p.controls.samples(), &tol).unwrap();
    assert!(cert.passed(), "{}", cert.summary());
    // p(t) = 2 - t on [0, 1], 1 after.
    for i in [0, 250, 1000, 1500, 2000] {
        let t = p.mesh.time(i);
        let want = if t < 1.0 { 2.0 - t } else { 1.0 };
        assert!((cert.p.value(i, Side::Right)[0] - want).abs() < 1e-6);
    }
}

#[test]
fn needle_sensitivity_matches_finite_differences() {
    let (p, tr, k) = setup("scalar_delay_feedback", None);
    let xf = terminal_x(&k);
    let spec = NeedleSpec::at_times(&p.mesh, &[(0.25, vec![-1.0])]).unwrap();
    let fd = finite_difference_check(&p, &tr, &xf, &spec, &[1, 2, 4, 8, 16, 32]).unwrap();
    // X(2, 0.25) = 1.75, Delta f = -2.
    assert!((fd.sensitivities[0][0] + 3.5).abs() < 1e-9);
    assert!(fd.slopes[0].unwrap() >= 0.9);
    assert!(fd.rows.windows(2).all(|w| w[0].errors[0] < w[1].errors[0]));

    let (p, tr, k) = setup("pure_integrator", None);
    let xf = terminal_x(&k);
    let spec = NeedleSpec::at_times(&p.mesh, &[(0.25, vec![-1.0]), (0.5, vec![1.0])]).unwrap();
    let fd = finite_difference_check(&p, &tr, &xf, &spec, &[1, 2, 4]).unwrap();
    assert!(fd.exact_zero(0) && fd.exact_zero(1));
    assert_eq!(fd.sensitivities, [vec![-2.0], vec![0.0]]);
    assert!(fd.converges(0.9));
    assert!(finite_difference_check(&p, &tr, &xf, &spec, &[0, 1]).is_err());
}

#[test]
fn needle_superposition_to_first_order() {
    let (p, tr, k) = setup("scalar_delay_feedback", None);
    let xf = terminal_x(&k);
    let spec = NeedleSpec::at_times(&p.mesh, &[(0.25, vec![-1.0]), (1.25, vec![0.0])]).unwrap();
    let d = linearized_sensitivity(&p, &tr, &xf, &spec).unwrap();
    let eps = 4;
    let u = delaypmp_core::needle::perturb_control(&tr.u, &spec.with_widths(vec![eps, eps]).unwrap()).unwrap();
    let x = solve(&p, &u).unwrap();
    let a = eps as f64 * p.mesh.h();
    let predicted = tr.terminal()[0] + a * (d[0][0] + d[1][0]);
    assert!((x.terminal()[0] - predicted).abs() < 10.0 * a * a, "{} vs {predicted}", x.terminal()[0]);
}

#[test]
fn l1_integral_of_unit_needle_is_its_width() {
    let e = by_name("pure_integrator").unwrap();
    let p = e.problem(None).unwrap();
    let tr = solve(&p, &p.constant_control(&[0.0])).unwrap();
    let spec = NeedleSpec::at_times(&p.mesh, &[(0.5, vec![1.0])]).unwrap();
    assert_eq!(l1_deviation(&p, &tr, &spec).unwrap(), 0.0);
    for w in [1, 3, 64] {
        let s = spec.with_widths(vec![w]).unwrap();
        assert_eq!(l1_deviation(&p, &tr, &s).unwrap(), w as f64 * p.mesh.h());
    }
    let r = l1_bound_check(&p, &tr, &spec, &[1], &[1, 2, 4, 8]).unwrap();
    assert_eq!((r.max_ratio, r.min_ratio, r.limit), (1.0, 1.0, 1.0));
}

#[test]
fn constrained_terminal_multipliers_near_two_thirds() {
    let (p, tr, k) = setup("constrained_terminal", None);
    let xf = terminal_x(&k);
    let mut prog = MultiplierProgram::new(&p, &tr);
    prog.enrich_samples(&p, &tr, &xf, &sample_family(&p, 1)).unwrap();
    let MultiplierOutcome::Found { multipliers, check } = solve_multipliers(&prog, &SearchOptions::default()).unwrap()
    else {
        panic!("expected multipliers")
    };
    let l = &multipliers.lambda;
    assert!((l[0] - 2.0 / 3.0).abs() < 0.01 && l[1] == 0.0 && (l[2] + 1.0 / 3.0).abs() < 0.01, "{l:?}");
    assert!(check.max() <= 1e-8);

    // The same lambda passes the maximum principle over the sampled controls.
    let tol = Tolerances::for_mesh(&p.mesh);
    let cert = check_conditions(&p, &tr, &k, &xf, &multipliers, &p.controls.samples(), &tol).unwrap();
    assert!(cert.condition("MP").unwrap().residual <= 1e-9, "{}", cert.summary());
}

#[test]
fn non_optimal_reference_has_no_multiplier() {
    let (p, tr, k) = setup("two_dim_rotation_with_delay", None);
    let xf = terminal_x(&k);
    let mut prog = MultiplierProgram::new(&p, &tr);
    prog.enrich_samples(&p, &tr, &xf, &sample_family(&p, 20)).unwrap();
    let MultiplierOutcome::Infeasible(c) = solve_multipliers(&prog, &SearchOptions::default()).unwrap() else {
        panic!("expected infeasibility")
    };
    assert!(c.violation > 0.1);
    // More samples keep it infeasible.
    prog.enrich_samples(&p, &tr, &xf, &sample_family(&p, 7)).unwrap();
    assert!(matches!(solve_multipliers(&prog, &SearchOptions::default()).unwrap(), MultiplierOutcome::Infeasible(_)));
}
