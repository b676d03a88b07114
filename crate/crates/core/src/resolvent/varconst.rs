//! Variation of constants:
//! `Z(t) = int_sigma^t X(t, xi) G(xi) dxi` with
//! `G(xi) = int_{-r}^{sigma - xi} d eta(xi, theta) phi(xi - sigma + theta)`,
//! `U(t) = X(t, sigma) phi(0) + Z(t)` (and `phi(t - sigma)` before `sigma`),
//! `V(t) = U(t) + int_sigma^t X(t, a) h(a) da`.
//!
//! The inner Stieltjes integral includes the atom sitting exactly at the
//! upper bound `theta = sigma - xi`; this is the convention under which `U`
//! reproduces the solution of the linear equation. Trapezoid nodes use
//! `G(xi+)` (atoms strictly beyond the bound) and `G(xi-)` (bound included).

use alloc::vec;
use alloc::vec::Vec;

use super::FundamentalMatrix;
use crate::error::{Error, Result};
use crate::kernel::DelayKernel;
use crate::linalg;
use crate::timegrid::{HistorySegment, PiecewiseFn, Side};

fn check(xf: &FundamentalMatrix, kernel: &DelayKernel, sigma: usize, phi: &HistorySegment) -> Result<()> {
    if !xf.is_dense() {
        return Err(Error::NotStored { t: xf.steps(), s: sigma });
    }
    if xf.n() != kernel.n() || phi.dim() != kernel.n() {
        return Err(Error::Dimension { what: "variation of constants", expected: kernel.n(), found: phi.dim() });
    }
    if phi.delay_steps() != kernel.mesh().delay_steps() {
        return Err(Error::Dimension {
            what: "history segment length",
            expected: kernel.mesh().delay_steps() + 1,
            found: phi.delay_steps() + 1,
        });
    }
    if sigma > xf.steps() {
        return Err(Error::Domain { what: "initial time", time: sigma as f64 * kernel.mesh().h() });
    }
    Ok(())
}

/// `G(xi)` at node `xi = sigma + d`, one-sided as described above.
fn inner(kernel: &DelayKernel, xi: usize, d: usize, side: Side, phi: &HistorySegment, out: &mut [f64]) {
    let n = kernel.n();
    let m = kernel.mesh().delay_steps();
    let h = kernel.mesh().h();
    out.iter_mut().for_each(|v| *v = 0.0);
    if d > m {
        return;
    }
    for (k, atom) in kernel.atoms().iter().enumerate() {
        let included = match side {
            Side::Right => atom.lag > d,
            Side::Left => atom.lag >= d,
        };
        if included {
            linalg::mat_vec_acc(out, kernel.atom_coeff(k, xi, side), phi.at_lag(atom.lag - d), n, n, 1.0);
        }
    }
    if kernel.has_density() && d < m {
        let mut c = vec![0.0; n * n];
        for q in d..=m {
            let w = if q == d || q == m { 0.5 * h } else { h };
            kernel.density_at(xi, side, q, &mut c);
            linalg::mat_vec_acc(out, &c, phi.at_lag(q - d), n, n, w);
        }
    }
}

pub fn var_const_z(
    xf: &FundamentalMatrix,
    kernel: &DelayKernel,
    sigma: usize,
    phi: &HistorySegment,
) -> Result<PiecewiseFn> {
    check(xf, kernel, sigma, phi)?;
    let n = kernel.n();
    let steps = xf.steps();
    let h = kernel.mesh().h();
    let len = steps - sigma + 1;
    let mut g_plus = vec![0.0; len * n];
    let mut g_minus = vec![0.0; len * n];
    for d in 0..len {
        inner(kernel, sigma + d, d, Side::Right, phi, &mut g_plus[d * n..(d + 1) * n]);
        inner(kernel, sigma + d, d, Side::Left, phi, &mut g_minus[d * n..(d + 1) * n]);
    }
    let mut values = vec![0.0; len * n];
    for t in sigma..=steps {
        let out = &mut values[(t - sigma) * n..(t - sigma + 1) * n];
        for j in sigma..t {
            let (a, b) = (j - sigma, j + 1 - sigma);
            linalg::mat_vec_acc(out, xf.get(t, j)?, &g_plus[a * n..(a + 1) * n], n, n, 0.5 * h);
            linalg::mat_vec_acc(out, xf.get(t, j + 1)?, &g_minus[b * n..(b + 1) * n], n, n, 0.5 * h);
        }
    }
    Ok(PiecewiseFn::from_nodes(h, sigma as i64, n, values))
}

pub fn var_const_u(
    xf: &FundamentalMatrix,
    kernel: &DelayKernel,
    sigma: usize,
    phi: &HistorySegment,
) -> Result<PiecewiseFn> {
    let z = var_const_z(xf, kernel, sigma, phi)?;
    let n = kernel.n();
    let m = kernel.mesh().delay_steps();
    let steps = xf.steps();
    let mut values = Vec::with_capacity((steps - sigma + m + 1) * n);
    for k in (1..=m).rev() {
        values.extend_from_slice(phi.at_lag(k));
    }
    for t in sigma..=steps {
        let mut v = z.value(t as i64, Side::Right).to_vec();
        linalg::mat_vec_acc(&mut v, xf.get(t, sigma)?, phi.at_lag(0), n, n, 1.0);
        values.extend(v);
    }
    Ok(PiecewiseFn::from_nodes(kernel.mesh().h(), sigma as i64 - m as i64, n, values))
}

pub fn var_const_v(
    xf: &FundamentalMatrix,
    kernel: &DelayKernel,
    sigma: usize,
    phi: &HistorySegment,
    forcing: &PiecewiseFn,
) -> Result<PiecewiseFn> {
    let n = kernel.n();
    let steps = xf.steps();
    let h = kernel.mesh().h();
    if forcing.dim() != n || forcing.first() > sigma as i64 || forcing.last() < steps as i64 {
        return Err(Error::Invalid("forcing must cover [sigma, T] with the state dimension".into()));
    }
    let u = var_const_u(xf, kernel, sigma, phi)?;
    let m = kernel.mesh().delay_steps();
    let mut values: Vec<f64> = (u.first()..=u.last()).flat_map(|i| u.value(i, Side::Right).to_vec()).collect();
    for t in sigma..=steps {
        let k = (t - sigma + m) * n;
        let out = &mut values[k..k + n];
        for j in sigma..t {
            linalg::mat_vec_acc(out, xf.get(t, j)?, forcing.value(j as i64, Side::Right), n, n, 0.5 * h);
            linalg::mat_vec_acc(out, xf.get(t, j + 1)?, forcing.value(j as i64 + 1, Side::Left), n, n, 0.5 * h);
        }
    }
    Ok(PiecewiseFn::from_nodes(h, u.first(), n, values))
}
