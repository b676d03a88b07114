//! Row-wise solution of `R(t, s) = kt(t, s) - int_s^t R(t, a) kt(a, s) da`.
//!
//! For fixed `t` the unknown is marched in `s` from `t` down to 0. The part
//! `W(t, s) = R(t, s) - kt(t, s)` is continuous in `s`, so it is what gets
//! stored; `R` itself jumps where `kt(t, .)` does and is rebuilt on demand
//! with the side needed. The trapezoid rule uses one-sided values at every
//! node, so no jump line `a = s + r_k` is ever straddled. The only implicit
//! term is the lag-0 atom at `a = s`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::{kt_into, tri, FundamentalMatrix, FundamentalOptions, Route, RowIntegrator};
use crate::error::{Error, Result};
use crate::kernel::DelayKernel;
use crate::linalg;
use crate::timegrid::Side;

struct RowSolver<'a> {
    kernel: &'a DelayKernel,
    integ: RowIntegrator<'a>,
    /// `(I - h/2 A_0(s+))^{-1}` per node, when there is a lag-0 atom.
    inv: Option<Vec<f64>>,
    lag0: Option<usize>,
}

impl<'a> RowSolver<'a> {
    fn new(kernel: &'a DelayKernel) -> Result<RowSolver<'a>> {
        let n = kernel.n();
        let nn = n * n;
        let h = kernel.mesh().h();
        let lag0 = kernel.atoms().iter().position(|a| a.lag == 0);
        let inv = match lag0 {
            None => None,
            Some(k) => {
                let steps = kernel.mesh().steps();
                let mut all = Vec::with_capacity((steps + 1) * nn);
                for s in 0..=steps {
                    let mut a = linalg::identity(n);
                    linalg::axpy(&mut a, -0.5 * h, kernel.atom_coeff(k, s, Side::Right));
                    let ai = linalg::inverse(&a, n)
                        .ok_or(Error::IllConditioned { what: "Volterra diagonal factor", value: f64::INFINITY })?;
                    let c = linalg::mat_norm_inf(&ai, n, n);
                    if c > 1e8 {
                        return Err(Error::IllConditioned { what: "Volterra diagonal factor", value: c });
                    }
                    all.extend(ai);
                }
                Some(all)
            }
        };
        Ok(RowSolver { kernel, integ: RowIntegrator::new(kernel), inv, lag0 })
    }

    /// Fills `w[s] = W(t, s)` for `s = 0..=t` using coefficients of the row
    /// `t` from side `side`.
    fn solve_row(&mut self, t: usize, side: Side, w: &mut [f64]) {
        let k = self.kernel;
        let n = k.n();
        let nn = n * n;
        let h = k.mesh().h();
        let total = k.eta_at(t, side, 0, None);
        let mut integral = vec![0.0; nn];
        let mut kp = vec![0.0; nn];
        let mut km = vec![0.0; nn];
        let mut gp = vec![0.0; nn];
        let mut gm = vec![0.0; nn];
        let mut rhs = vec![0.0; nn];
        self.integ.reset(t);
        for s in (0..=t).rev() {
            let ws = s * nn..(s + 1) * nn;
            kt_into(k, t, side, t - s, Some(Side::Right), &total, &mut kp);
            if s == t {
                w[ws.clone()].iter_mut().for_each(|v| *v = 0.0);
            } else {
                self.integ.integral(s, false, &mut integral);
                for e in 0..nn {
                    rhs[e] = -integral[e];
                }
                match (self.lag0, &self.inv) {
                    (Some(k0), Some(inv)) => {
                        linalg::mat_mul_acc(&mut rhs, &kp, k.atom_coeff(k0, s, Side::Right), n, n, n, 0.5 * h);
                        let x = linalg::mat_mul(&rhs, &inv[s * nn..(s + 1) * nn], n, n, n);
                        w[ws.clone()].copy_from_slice(&x);
                    }
                    _ => w[ws.clone()].copy_from_slice(&rhs),
                }
            }
            kt_into(k, t, side, t - s, Some(Side::Left), &total, &mut km);
            for e in 0..nn {
                gp[e] = w[s * nn + e] + kp[e];
                gm[e] = w[s * nn + e] + km[e];
            }
            self.integ.push(s, &gp, &gm);
        }
    }
}

/// The resolvent kernel. Stores the continuous part `W = R - kt` for rows
/// with right-hand coefficients, plus left-hand rows at kernel breakpoints.
#[derive(Clone, Debug)]
pub struct ResolventKernel {
    kernel: DelayKernel,
    w_right: Vec<f64>,
    w_left: BTreeMap<usize, Vec<f64>>,
}

pub fn solve_resolvent(kernel: &DelayKernel) -> Result<ResolventKernel> {
    let n = kernel.n();
    let nn = n * n;
    let steps = kernel.mesh().steps();
    let mut solver = RowSolver::new(kernel)?;
    let mut w_right = vec![0.0; (tri(steps, steps) + 1) * nn];
    let mut w_left = BTreeMap::new();
    let mut row = vec![0.0; (steps + 1) * nn];
    for t in 0..=steps {
        solver.solve_row(t, Side::Right, &mut row[..(t + 1) * nn]);
        w_right[tri(t, 0) * nn..tri(t, t) * nn + nn].copy_from_slice(&row[..(t + 1) * nn]);
        if kernel.is_breakpoint(t) {
            solver.solve_row(t, Side::Left, &mut row[..(t + 1) * nn]);
            w_left.insert(t, row[..(t + 1) * nn].to_vec());
        }
    }
    Ok(ResolventKernel { kernel: kernel.clone(), w_right, w_left })
}

impl ResolventKernel {
    pub fn kernel(&self) -> &DelayKernel {
        &self.kernel
    }

    /// `W(t, s)` for the row side `side`.
    pub fn smooth_part(&self, t: usize, side: Side, s: usize) -> &[f64] {
        let nn = self.kernel.n() * self.kernel.n();
        if side == Side::Left {
            if let Some(r) = self.w_left.get(&t) {
                return &r[s * nn..(s + 1) * nn];
            }
        }
        let k = tri(t, s) * nn;
        &self.w_right[k..k + nn]
    }

    /// `R(t, s)` with row coefficients from `t_side` and the given one-sided
    /// limit in `s` (`None` = point value).
    pub fn value_sided(&self, t: usize, t_side: Side, s: usize, s_side: Option<Side>) -> Vec<f64> {
        let nn = self.kernel.n() * self.kernel.n();
        let mut out = vec![0.0; nn];
        if s > t {
            return out;
        }
        let total = self.kernel.eta_at(t, t_side, 0, None);
        kt_into(&self.kernel, t, t_side, t - s, s_side, &total, &mut out);
        linalg::axpy(&mut out, 1.0, self.smooth_part(t, t_side, s));
        out
    }

    /// Point value `R(t, s)`.
    pub fn get(&self, t: usize, s: usize) -> Vec<f64> {
        self.value_sided(t, Side::Right, s, None)
    }

    /// Largest residual of the discrete Volterra identity over all node
    /// pairs, with every term rebuilt from the kernel by brute force (no
    /// suffix sums). Costs `O(M^3)`; meant for small meshes.
    pub fn residual(&self) -> f64 {
        let k = &self.kernel;
        let n = k.n();
        let nn = n * n;
        let h = k.mesh().h();
        let mut worst: f64 = 0.0;
        for t in 0..=k.mesh().steps() {
            for s in 0..=t {
                let mut integral = vec![0.0; nn];
                for j in s..t {
                    let rp = self.value_sided(t, Side::Right, j, Some(Side::Right));
                    let kp = super::adjoint_kernel_sided(k, j, Side::Right, s, Some(Side::Left));
                    linalg::mat_mul_acc(&mut integral, &rp, &kp, n, n, n, 0.5 * h);
                    let rm = self.value_sided(t, Side::Right, j + 1, Some(Side::Left));
                    let km = super::adjoint_kernel_sided(k, j + 1, Side::Left, s, Some(Side::Right));
                    linalg::mat_mul_acc(&mut integral, &rm, &km, n, n, n, 0.5 * h);
                }
                let w = self.smooth_part(t, Side::Right, s);
                for e in 0..nn {
                    worst = worst.max((w[e] + integral[e]).abs());
                }
            }
        }
        worst
    }
}

/// `X = I - int R` integrated in the first argument, row by row:
/// `X(t, s) = X(t-1, s) - h/2 [R((t-1)+, s) + R(t-, s)]`.
pub(crate) fn fundamental_volterra(kernel: &DelayKernel, opts: &FundamentalOptions) -> Result<FundamentalMatrix> {
    let n = kernel.n();
    let nn = n * n;
    let steps = kernel.mesh().steps();
    let h = kernel.mesh().h();
    let mut out = FundamentalMatrix::empty(n, steps, h, Route::Volterra, opts);
    let mut solver = RowSolver::new(kernel)?;
    let id = linalg::identity(n);
    let mut w_prev = vec![0.0; (steps + 1) * nn];
    let mut w_right = vec![0.0; (steps + 1) * nn];
    let mut w_left = vec![0.0; (steps + 1) * nn];
    let mut x_prev = vec![0.0; (steps + 1) * nn];
    let mut x_row = vec![0.0; (steps + 1) * nn];
    let mut r1 = vec![0.0; nn];
    let mut r2 = vec![0.0; nn];
    for t in 0..=steps {
        solver.solve_row(t, Side::Right, &mut w_right[..(t + 1) * nn]);
        let left_row = if kernel.is_breakpoint(t) {
            solver.solve_row(t, Side::Left, &mut w_left[..(t + 1) * nn]);
            &w_left
        } else {
            &w_right
        };
        x_row[t * nn..(t + 1) * nn].copy_from_slice(&id);
        if t > 0 {
            let tot_prev = kernel.eta_at(t - 1, Side::Right, 0, None);
            let tot_left = kernel.eta_at(t, Side::Left, 0, None);
            for s in 0..t {
                kt_into(kernel, t - 1, Side::Right, t - 1 - s, Some(Side::Left), &tot_prev, &mut r1);
                linalg::axpy(&mut r1, 1.0, &w_prev[s * nn..(s + 1) * nn]);
                kt_into(kernel, t, Side::Left, t - s, Some(Side::Right), &tot_left, &mut r2);
                linalg::axpy(&mut r2, 1.0, &left_row[s * nn..(s + 1) * nn]);
                for e in 0..nn {
                    x_row[s * nn + e] = x_prev[s * nn + e] - 0.5 * h * (r1[e] + r2[e]);
                }
            }
        }
        for s in 0..=t {
            if t == steps || out.wants_column(s) {
                let x = &x_row[s * nn..(s + 1) * nn];
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { what: "fundamental matrix", time: t as f64 * h });
                }
                out.put(t, s, x);
            }
        }
        core::mem::swap(&mut x_prev, &mut x_row);
        core::mem::swap(&mut w_prev, &mut w_right);
    }
    Ok(out)
}
