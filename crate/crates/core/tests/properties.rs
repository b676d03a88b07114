use delaypmp_core::kernel::DelayKernel;
use delaypmp_core::lp::{self, LinearProgram, LpOutcome};
use delaypmp_core::multipliers::{solve_multipliers, MultiplierOutcome, MultiplierProgram, SampleRow, SearchOptions};
use delaypmp_core::needle::{perturb_control, NeedleSpec};
use delaypmp_core::fde::solve_linear;
use delaypmp_core::{linalg, HistorySegment, Mesh, PiecewiseFn, Side};
use proptest::prelude::*;

fn mesh() -> Mesh {
    Mesh::new(2.0, 0.5, 0.05).unwrap()
}

fn sides(f: &PiecewiseFn) -> Vec<(Vec<f64>, Vec<f64>)> {
    (f.first()..=f.last()).map(|i| (f.value(i, Side::Right).to_vec(), f.value(i, Side::Left).to_vec())).collect()
}

proptest! {
    #[test]
    fn zero_width_needles_are_bit_identical(
        pieces in prop::collection::vec((0usize..40, -1.0f64..1.0), 1..5),
        needles in prop::collection::vec((0usize..40, -1.0f64..1.0), 0..6),
    ) {
        let m = mesh();
        let mut pieces: Vec<(f64, Vec<f64>)> = pieces.into_iter().map(|(i, v)| (i as f64 * m.h(), vec![v])).collect();
        pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
        pieces.dedup_by(|a, b| a.0 == b.0);
        pieces[0].0 = 0.0;
        let u = PiecewiseFn::piecewise_constant(&m, &pieces).unwrap();
        let spec = NeedleSpec::new(needles.into_iter().map(|(t, v)| (t, vec![v])).collect());
        prop_assert_eq!(perturb_control(&u, &spec).unwrap(), u);
    }

    #[test]
    fn stacked_intervals_are_disjoint_and_cover_widths(
        raw in prop::collection::vec((0usize..30, 0usize..3, -1.0f64..1.0), 1..6),
    ) {
        let spec = NeedleSpec::new(raw.iter().map(|(t, _, v)| (*t, vec![*v])).collect());
        let widths: Vec<usize> = {
            let mut w: Vec<(usize, usize)> = raw.iter().map(|(t, a, _)| (*t, *a)).collect();
            w.sort_by_key(|e| e.0);
            w.into_iter().map(|e| e.1).collect()
        };
        let spec = spec.with_widths(widths.clone()).unwrap();
        let iv = spec.intervals();
        let ok = spec.validate(40).is_ok();
        // Equal-time needles never overlap each other.
        for i in 0..iv.len() {
            prop_assert_eq!(iv[i].1 - iv[i].0, widths[i]);
            for j in 0..i {
                if spec.needles[i].0 == spec.needles[j].0 && widths[i] > 0 && widths[j] > 0 {
                    prop_assert!(iv[i].0 >= iv[j].1);
                }
            }
        }
        if ok {
            let u = PiecewiseFn::constant(0.05, 0, 40, &[5.0]);
            let p = perturb_control(&u, &spec).unwrap();
            for (k, &(s, e)) in iv.iter().enumerate() {
                for i in s..e {
                    prop_assert_eq!(p.value(i as i64, Side::Right), &spec.needles[k].1[..]);
                }
            }
        }
    }

    #[test]
    fn needle_order_is_irrelevant_at_distinct_times(
        times in prop::collection::btree_set(0usize..38, 1..5),
        seed in 0u64..1000,
    ) {
        let needles: Vec<(usize, Vec<f64>)> = times.iter().map(|&t| (t, vec![t as f64 + 0.5])).collect();
        let mut shuffled = needles.clone();
        let k = shuffled.len();
        shuffled.rotate_left(seed as usize % k);
        let u = PiecewiseFn::constant(0.05, 0, 40, &[0.0]);
        let a = NeedleSpec::new(needles).with_widths(vec![1; k]).unwrap();
        let b = NeedleSpec::new(shuffled).with_widths(vec![1; k]).unwrap();
        prop_assume!(a.validate(40).is_ok());
        prop_assert_eq!(sides(&perturb_control(&u, &a).unwrap()), sides(&perturb_control(&u, &b).unwrap()));
    }

    #[test]
    fn lp_optimum_is_feasible_and_beats_vertices(
        c in prop::collection::vec(-2.0f64..2.0, 3),
        rows in prop::collection::vec(prop::collection::vec(0.1f64..2.0, 3), 1..5),
    ) {
        // Bounded feasible region: positive rows with positive rhs.
        let mut prog = LinearProgram::new(c.clone());
        for r in &rows {
            prog.at_most(r.clone(), 1.0);
        }
        let LpOutcome::Optimal { x, value } = lp::solve(&prog, 1e-10).unwrap() else {
            return Err(TestCaseError::fail("expected an optimum"));
        };
        prop_assert!(prog.violation(&x) < 1e-9);
        // No coordinate vertex does better.
        for j in 0..3 {
            let cap = rows.iter().map(|r| 1.0 / r[j]).fold(f64::INFINITY, f64::min);
            prop_assert!(value <= c[j] * cap + 1e-9);
            prop_assert!(value <= 1e-12);
        }
    }

    #[test]
    fn multipliers_satisfy_conditions_and_cone_scaling(
        rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 0..12),
        active in any::<bool>(),
    ) {
        let prog = MultiplierProgram {
            gradients: vec![vec![1.0]; 3],
            activity: vec![0.0, if active { 0.0 } else { 1.0 }, 0.0],
            n_ineq: 1,
            n_eq: 1,
            samples: rows.into_iter().enumerate().map(|(t, row)| SampleRow { t, v: vec![0.0], row }).collect(),
        };
        match solve_multipliers(&prog, &SearchOptions::default()).unwrap() {
            MultiplierOutcome::Found { multipliers, check } => {
                prop_assert!(check.max() <= 1e-8);
                if !active {
                    prop_assert_eq!(multipliers.lambda[1], 0.0);
                }
                // gamma * lambda satisfies every sample row as well.
                let scaled = multipliers.scaled(3.5);
                for s in &prog.samples {
                    prop_assert!(linalg::dot(&scaled.lambda, &s.row) <= 1e-8);
                }
            }
            MultiplierOutcome::Infeasible(c) => {
                prop_assert!(c.violation > 0.0);
                // More rows cannot restore feasibility.
                let mut more = prog.clone();
                more.samples.push(SampleRow { t: 99, v: vec![0.0], row: vec![0.3, -0.2, 0.1] });
                let still = matches!(
                    solve_multipliers(&more, &SearchOptions::default()).unwrap(),
                    MultiplierOutcome::Infeasible(_)
                );
                prop_assert!(still);
            }
        }
    }

    #[test]
    fn linear_solutions_superpose(a in -2.0f64..2.0, b in -2.0f64..2.0, c0 in -1.0f64..1.0) {
        let m = Mesh::new(1.0, 0.25, 0.025).unwrap();
        let k = DelayKernel::constant(&m, 1, &[(0, vec![c0]), (10, vec![0.5])]).unwrap();
        let phi1 = HistorySegment::constant(m.h(), 10, &[1.0]);
        let phi2 = HistorySegment::from_fn(m.h(), 10, |t| vec![t]);
        let both = HistorySegment::from_fn(m.h(), 10, |t| vec![a + b * t]);
        let x1 = solve_linear(&k, 0, &phi1, None).unwrap();
        let x2 = solve_linear(&k, 0, &phi2, None).unwrap();
        let x = solve_linear(&k, 0, &both, None).unwrap();
        for i in x.first()..=x.last() {
            let want = a * x1.value(i, Side::Right)[0] + b * x2.value(i, Side::Right)[0];
            prop_assert!((x.value(i, Side::Right)[0] - want).abs() < 1e-10);
        }
    }
}
