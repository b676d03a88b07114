//! Needle variations. A needle family `S = ((t_1, v_1), ..., (t_N, v_N))`
//! with widths `a` replaces the control by `v_i` on
//! `I_i = [t_i + b_i, t_i + b_i + a_i)`, where `b_i` stacks the widths of
//! the earlier needles sharing the time `t_i`. To first order the terminal
//! state moves by `sum_i a_i X(T, t_i) [f(t_i, x_{t_i}, v_i) - f(t_i, x_{t_i}, u(t_i))]`.
//!
//! Times and widths are node counts, so every interval end is a node.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fde::{solve, ControlledProblem, Trajectory};
use crate::linalg;
use crate::resolvent::FundamentalMatrix;
use crate::timegrid::{Mesh, PiecewiseFn, Side, Smoothness};

#[derive(Clone, Debug, PartialEq)]
pub struct NeedleSpec {
    /// `(t_i node, v_i)`, sorted by time.
    pub needles: Vec<(usize, Vec<f64>)>,
    /// Widths `a_i` in steps.
    pub widths: Vec<usize>,
}

impl NeedleSpec {
    /// Needles at node `times` with zero widths. Entries are sorted stably
    /// by time.
    pub fn new(mut needles: Vec<(usize, Vec<f64>)>) -> NeedleSpec {
        needles.sort_by_key(|(t, _)| *t);
        let widths = vec![0; needles.len()];
        NeedleSpec { needles, widths }
    }

    /// From float times, which must be nodes of `[0, T)`.
    pub fn at_times(mesh: &Mesh, needles: &[(f64, Vec<f64>)]) -> Result<NeedleSpec> {
        let mut out = Vec::with_capacity(needles.len());
        for (t, v) in needles {
            let i = mesh.node_in_horizon(*t, "needle time")?;
            if i >= mesh.steps() {
                return Err(Error::Domain { what: "needle time (must be < T)", time: *t });
            }
            out.push((i, v.clone()));
        }
        Ok(NeedleSpec::new(out))
    }

    pub fn len(&self) -> usize {
        self.needles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.needles.is_empty()
    }

    pub fn with_widths(&self, widths: Vec<usize>) -> Result<NeedleSpec> {
        if widths.len() != self.needles.len() {
            return Err(Error::Dimension { what: "needle widths", expected: self.needles.len(), found: widths.len() });
        }
        Ok(NeedleSpec { needles: self.needles.clone(), widths })
    }

    /// Only needle `i` switched on, width `w`.
    pub fn single(&self, i: usize, w: usize) -> NeedleSpec {
        let mut widths = vec![0; self.needles.len()];
        widths[i] = w;
        NeedleSpec { needles: self.needles.clone(), widths }
    }

    /// `b_i`: widths of the earlier needles at the same time.
    pub fn offsets(&self) -> Vec<usize> {
        (0..self.needles.len())
            .map(|i| {
                let t = self.needles[i].0;
                (0..i).filter(|&j| self.needles[j].0 == t).map(|j| self.widths[j]).sum()
            })
            .collect()
    }

    /// `I_i` as node ranges `[start, end)`.
    pub fn intervals(&self) -> Vec<(usize, usize)> {
        self.offsets()
            .iter()
            .zip(&self.needles)
            .zip(&self.widths)
            .map(|((b, (t, _)), a)| (t + b, t + b + a))
            .collect()
    }

    /// Intervals inside `[0, T]` and pairwise disjoint.
    pub fn validate(&self, steps: usize) -> Result<()> {
        if self.widths.len() != self.needles.len() {
            return Err(Error::Dimension { what: "needle widths", expected: self.needles.len(), found: self.widths.len() });
        }
        if self.needles.windows(2).any(|w| w[0].0 > w[1].0) {
            return Err(Error::Invalid("needle times must be sorted".into()));
        }
        let iv = self.intervals();
        for (k, &(s, e)) in iv.iter().enumerate() {
            if e > steps {
                return Err(Error::Invalid(alloc::format!("needle interval {k} ends after T")));
            }
            for &(s2, e2) in &iv[..k] {
                if s < e && s2 < e2 && s < e2 && s2 < e {
                    return Err(Error::Invalid(alloc::format!("needle interval {k} overlaps an earlier one")));
                }
            }
        }
        Ok(())
    }
}

/// `u(t, S, a)`: `v_i` on `I_i`, `ubar` elsewhere (right-continuous).
pub fn perturb_control(ubar: &PiecewiseFn, spec: &NeedleSpec) -> Result<PiecewiseFn> {
    let steps = ubar.last();
    if ubar.first() != 0 || steps < 0 {
        return Err(Error::Invalid("control must start at t = 0".into()));
    }
    spec.validate(steps as usize)?;
    if spec.widths.iter().all(|&a| a == 0) {
        return Ok(ubar.clone());
    }
    let d = ubar.dim();
    for (_, v) in &spec.needles {
        if v.len() != d {
            return Err(Error::Dimension { what: "needle value", expected: d, found: v.len() });
        }
    }
    let len = (steps + 1) as usize;
    let mut right = Vec::with_capacity(len * d);
    let mut left = Vec::with_capacity(len * d);
    let mut sr = Vec::with_capacity(len * d);
    let mut sl = Vec::with_capacity(len * d);
    let zero = vec![0.0; d];
    let iv = spec.intervals();
    let covering = |i: usize, side: Side| {
        iv.iter().position(|&(s, e)| match side {
            Side::Right => s <= i && i < e,
            Side::Left => s < i && i <= e,
        })
    };
    for i in 0..len {
        for side in [Side::Right, Side::Left] {
            let (vals, slopes) = if side == Side::Right { (&mut right, &mut sr) } else { (&mut left, &mut sl) };
            match covering(i, side) {
                Some(k) => {
                    vals.extend_from_slice(&spec.needles[k].1);
                    slopes.extend_from_slice(&zero);
                }
                None => {
                    vals.extend_from_slice(ubar.value(i as i64, side));
                    slopes.extend_from_slice(ubar.slope(i as i64, side).unwrap_or(&zero));
                }
            }
        }
    }
    // At T the control is its left value.
    let last = (len - 1) * d;
    let tail = left[last..].to_vec();
    right[last..].copy_from_slice(&tail);
    let tail = sl[last..].to_vec();
    sr[last..].copy_from_slice(&tail);
    let out = PiecewiseFn::from_sides(ubar.h(), 0, d, right, left, Smoothness::PC0)?;
    Ok(if ubar.slope(0, Side::Right).is_some() { out.with_slopes(sr, sl) } else { out })
}

/// `Delta f_i = f(t_i, x_{t_i}, v_i) - f(t_i, x_{t_i}, u(t_i))` with right values at `t_i`.
pub fn delta_f(problem: &ControlledProblem, reference: &Trajectory, spec: &NeedleSpec) -> Vec<Vec<f64>> {
    spec.needles
        .iter()
        .map(|(t, v)| {
            let ubar = reference.u.value(*t as i64, Side::Right);
            let mut df = problem.eval_along(&reference.x, *t, Side::Right, v);
            linalg::axpy(&mut df, -1.0, &problem.eval_along(&reference.x, *t, Side::Right, ubar));
            df
        })
        .collect()
}

/// `d_i = X(T, t_i) Delta f_i`, the partial derivatives of `x(T, S, a)` at `a = 0`.
pub fn linearized_sensitivity(
    problem: &ControlledProblem,
    reference: &Trajectory,
    xf: &FundamentalMatrix,
    spec: &NeedleSpec,
) -> Result<Vec<Vec<f64>>> {
    let n = problem.state_dim();
    if xf.n() != n || xf.steps() != problem.mesh.steps() {
        return Err(Error::Dimension { what: "fundamental matrix", expected: problem.mesh.steps(), found: xf.steps() });
    }
    Ok(delta_f(problem, reference, spec)
        .iter()
        .zip(&spec.needles)
        .map(|(df, (t, _))| {
            let mut d = vec![0.0; n];
            linalg::mat_vec_acc(&mut d, xf.terminal(*t), df, n, n, 1.0);
            d
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdRow {
    pub eps: f64,
    /// `|| (x(T, S, eps e_i) - x(T)) / eps - d_i ||` per needle.
    pub errors: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdTable {
    pub rows: Vec<FdRow>,
    pub sensitivities: Vec<Vec<f64>>,
    /// Least-squares slope of `log error` against `log eps`, per needle;
    /// `None` when every error is at round-off level (or exactly zero).
    pub slopes: Vec<Option<f64>>,
}

impl FdTable {
    pub fn exact_zero(&self, i: usize) -> bool {
        self.rows.iter().all(|r| r.errors[i] == 0.0)
    }

    /// Every needle either reproduces `d_i` exactly or converges with slope
    /// at least `min_slope`.
    pub fn converges(&self, min_slope: f64) -> bool {
        self.slopes.iter().all(|s| s.map_or(true, |v| v >= min_slope))
    }
}

/// Least-squares slope of `log y` against `log x` over positive pairs.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (libm::log(*a), libm::log(*b))).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Finite-difference check of `d_i` over widths `eps = k h`, `k` in `ladder`.
pub fn finite_difference_check(
    problem: &ControlledProblem,
    reference: &Trajectory,
    xf: &FundamentalMatrix,
    spec: &NeedleSpec,
    ladder: &[usize],
) -> Result<FdTable> {
    if ladder.contains(&0) {
        return Err(Error::Invalid("needle widths below h cannot be represented on the mesh".into()));
    }
    let h = problem.mesh.h();
    let d = linearized_sensitivity(problem, reference, xf, spec)?;
    let x_t = reference.terminal();
    let mut rows = Vec::with_capacity(ladder.len());
    for &k in ladder {
        let eps = k as f64 * h;
        let mut errors = Vec::with_capacity(spec.len());
        for i in 0..spec.len() {
            let u = perturb_control(&reference.u, &spec.single(i, k))?;
            let x = solve(problem, &u)?;
            let q: Vec<f64> = x.terminal().iter().zip(x_t).zip(&d[i]).map(|((a, b), di)| (a - b) / eps - di).collect();
            errors.push(linalg::norm_inf(&q));
        }
        rows.push(FdRow { eps, errors });
    }
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let slopes = (0..spec.len())
        .map(|i| {
            let e: Vec<f64> = rows.iter().map(|r| r.errors[i]).collect();
            let floor = 1e-10 * linalg::norm_inf(&d[i]).max(1.0);
            if e.iter().all(|&v| v <= floor) {
                None
            } else {
                Some(loglog_slope(&eps, &e).unwrap_or(f64::NAN))
            }
        })
        .collect();
    Ok(FdTable { rows, sensitivities: d, slopes })
}

/// `int_0^T || f(t, x_t, u(t, S, a)) - f(t, x_t, u(t)) || dt` along the
/// fixed reference state, by the one-sided trapezoid rule.
pub fn l1_deviation(problem: &ControlledProblem, reference: &Trajectory, spec: &NeedleSpec) -> Result<f64> {
    let u = perturb_control(&reference.u, spec)?;
    let steps = problem.mesh.steps();
    let h = problem.mesh.h();
    let dev = |i: usize, side: Side| {
        let mut a = problem.eval_along(&reference.x, i, side, u.value(i as i64, side));
        linalg::axpy(&mut a, -1.0, &problem.eval_along(&reference.x, i, side, reference.u.value(i as i64, side)));
        linalg::norm_inf(&a)
    };
    let mut total = 0.0;
    for (s, e) in spec.intervals() {
        // Zero off the intervals; trapezoid cells touching [s, e).
        for j in s.saturating_sub(1)..e.min(steps) {
            total += 0.5 * h * (dev(j, Side::Right) + dev(j + 1, Side::Left));
        }
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct L1Report {
    /// `(||a||_1, integral, ratio)` per grid point.
    pub rows: Vec<(f64, f64, f64)>,
    pub max_ratio: f64,
    pub min_ratio: f64,
    /// `(max - min) / max` of the ratio over the grid.
    pub variation: f64,
    /// `sum_i a_i ||Delta f_i|| / ||a||_1` for the grid direction: the
    /// `a -> 0` limit of the ratio. Equals `sum_i ||Delta f_i||` for one needle.
    pub limit: f64,
    pub sum_delta_f: f64,
}

/// Integral-to-`||a||_1` ratios along `a = k * direction` for `k` in `scales`.
pub fn l1_bound_check(
    problem: &ControlledProblem,
    reference: &Trajectory,
    spec: &NeedleSpec,
    direction: &[usize],
    scales: &[usize],
) -> Result<L1Report> {
    let h = problem.mesh.h();
    let norms: Vec<f64> = delta_f(problem, reference, spec).iter().map(|d| linalg::norm_inf(d)).collect();
    let wsum: usize = direction.iter().sum();
    if wsum == 0 {
        return Err(Error::Invalid("needle direction must be nonzero".into()));
    }
    let limit = direction.iter().zip(&norms).map(|(&w, n)| w as f64 * n).sum::<f64>() / wsum as f64;
    let mut rows = Vec::with_capacity(scales.len());
    for &k in scales {
        let widths: Vec<usize> = direction.iter().map(|&w| w * k).collect();
        let s = spec.with_widths(widths)?;
        let a1 = (wsum * k) as f64 * h;
        let integral = l1_deviation(problem, reference, &s)?;
        rows.push((a1, integral, if a1 > 0.0 { integral / a1 } else { 0.0 }));
    }
    let ratios: Vec<f64> = rows.iter().filter(|r| r.0 > 0.0).map(|r| r.2).collect();
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let variation = if max_ratio > 0.0 { (max_ratio - min_ratio) / max_ratio } else { 0.0 };
    Ok(L1Report { rows, max_ratio, min_ratio, variation, limit, sum_delta_f: norms.iter().sum() })
}
