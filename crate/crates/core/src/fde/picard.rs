//! Picard iteration `x^m(t) = phi(0) + int_0^t f(s, x^{m-1}_s, u(s)) ds`,
//! used as an oracle for the marching solver.

use alloc::vec;
use alloc::vec::Vec;

use super::{check_control, ControlledProblem, Trajectory};
use crate::error::{Error, Result};
use crate::timegrid::{NodeLags, PiecewiseFn, Segment, Side, Smoothness};

#[derive(Clone, Debug)]
pub struct PicardOptions {
    pub max_iter: usize,
    /// Stop once the sup-distance of successive iterates drops below this.
    pub tol: f64,
    /// Starting iterate on `[-r, T]`; defaults to `phi` continued by `phi(0)`.
    pub seed: Option<PiecewiseFn>,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions { max_iter: 200, tol: 1e-9, seed: None }
    }
}

#[derive(Clone, Debug)]
pub struct PicardReport {
    pub trajectory: Trajectory,
    pub iterations: usize,
    /// `||x^k - x^{k-1}||_inf` for `k = 1..=iterations`.
    pub increments: Vec<f64>,
}

pub fn picard_solve(problem: &ControlledProblem, u: &PiecewiseFn, opts: &PicardOptions) -> Result<PicardReport> {
    check_control(problem, u)?;
    let mesh = &problem.mesh;
    let (n, m, steps, h) = (problem.state_dim(), mesh.delay_steps() as i64, mesh.steps() as i64, mesh.h());
    let len = (steps + m + 1) as usize;
    let phi0 = problem.history.value(0, Side::Right).to_vec();

    let mut values = match &opts.seed {
        Some(seed) => {
            if seed.first() != -m || seed.last() != steps || seed.dim() != n {
                return Err(Error::Invalid("Picard seed must cover [-r, T]".into()));
            }
            (-m..=steps).flat_map(|i| seed.value(i, Side::Right).to_vec()).collect::<Vec<f64>>()
        }
        None => {
            let mut v = Vec::with_capacity(len * n);
            for i in -m..=0 {
                v.extend_from_slice(problem.history.value(i, Side::Right));
            }
            for _ in 1..=steps {
                v.extend_from_slice(&phi0);
            }
            v
        }
    };

    let mut seeds: Vec<i64> = mesh.breakpoints().iter().map(|&b| b as i64).collect();
    seeds.extend_from_slice(u.discont());
    let mut increments = Vec::new();
    let mut g_right = vec![0.0; (steps as usize + 1) * n];
    let mut g_left = vec![0.0; (steps as usize + 1) * n];
    for iter in 1..=opts.max_iter {
        let prev = PiecewiseFn::from_nodes(h, -m, n, values.clone());
        for i in 0..=steps {
            let k = i as usize * n;
            for side in [Side::Right, Side::Left] {
                if side == Side::Left && !seeds.contains(&i) {
                    let (r, l) = (&g_right[k..k + n].to_vec(), &mut g_left[k..k + n]);
                    l.copy_from_slice(r);
                    continue;
                }
                let lags = NodeLags { f: &prev, node: i, side };
                let seg = Segment::new(&lags, n, m as usize, h);
                let out = if side == Side::Right { &mut g_right[k..k + n] } else { &mut g_left[k..k + n] };
                problem.dynamics.eval(i as f64 * h, &seg, u.value(i, side), out);
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { what: "vector field", time: i as f64 * h });
                }
            }
        }
        let base = m as usize * n;
        let mut next = values.clone();
        next[base..base + n].copy_from_slice(&phi0);
        for i in 0..steps as usize {
            for c in 0..n {
                next[base + (i + 1) * n + c] =
                    next[base + i * n + c] + 0.5 * h * (g_right[i * n + c] + g_left[(i + 1) * n + c]);
            }
        }
        let inc = next.iter().zip(&values).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        values = next;
        increments.push(inc);
        if inc < opts.tol {
            let mut sr = vec![f64::NAN; len * n];
            let mut sl = vec![f64::NAN; len * n];
            sr[base..].copy_from_slice(&g_right);
            sl[base..].copy_from_slice(&g_left);
            let x = PiecewiseFn::from_sides(h, -m, n, values.clone(), values, Smoothness::PC1)?.with_slopes(sr, sl);
            return Ok(PicardReport { trajectory: Trajectory { x, u: u.clone() }, iterations: iter, increments });
        }
    }
    Err(Error::PicardNotConverged { iterations: opts.max_iter, increment: *increments.last().unwrap_or(&f64::NAN) })
}
