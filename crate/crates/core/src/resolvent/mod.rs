//! Resolvent kernel, fundamental matrix, variation of constants and the
//! adjoint identity.
//!
//! `X(t, s)` is the fundamental matrix with history `0` on `[s - r, s)` and
//! `I` at `s`, and `X(t, s) = I` for `s >= t`. It satisfies
//! `X(t, s) = I - int_s^t X(t, a) kt(a, s) da` and `X(t, s) = I - int_s^t R(a, s) da`
//! where `R(t, s) = kt(t, s) - int_s^t R(t, a) kt(a, s) da` and
//! `kt(a, s) = eta(a, s - a) - eta(a, 0)` is the kernel renormalized to vanish
//! at `theta = 0` (it equals minus the total mass of `eta(a, .)` beyond the
//! delay). With the left-end normalization of `eta` alone these identities
//! fail by a term linear in `t - s`; see [`kernel_k`] for the literal kernel.

mod direct;
mod varconst;
mod volterra;

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernel::DelayKernel;
use crate::linalg;
use crate::timegrid::Side;

pub use varconst::{var_const_u, var_const_v, var_const_z};
pub use volterra::{solve_resolvent, ResolventKernel};

/// Construction route of a [`FundamentalMatrix`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    /// Integrate the resolvent kernel: `X = I - int R`.
    Volterra,
    /// Solve the linear delay equation column by column.
    Direct,
}

/// What to keep of `X`. The terminal row `X(T, .)` is always kept.
#[derive(Clone, Debug, Default)]
pub struct FundamentalOptions {
    /// Full lower triangle `X(t, s)`, `s <= t`.
    pub dense: bool,
    /// Columns `X(., s)` for these nodes `s`.
    pub columns: Vec<usize>,
}

impl FundamentalOptions {
    pub fn dense() -> Self {
        FundamentalOptions { dense: true, columns: Vec::new() }
    }
    pub fn terminal() -> Self {
        FundamentalOptions::default()
    }
}

#[derive(Clone, Debug)]
pub struct FundamentalMatrix {
    n: usize,
    steps: usize,
    h: f64,
    route: Route,
    identity: Vec<f64>,
    dense: Option<Vec<f64>>,
    /// `X(t, s)` for `t = s..=M`.
    columns: BTreeMap<usize, Vec<f64>>,
    /// `X(M, s)` for `s = 0..=M`.
    terminal: Vec<f64>,
}

fn tri(t: usize, s: usize) -> usize {
    t * (t + 1) / 2 + s
}

impl FundamentalMatrix {
    fn empty(n: usize, steps: usize, h: f64, route: Route, opts: &FundamentalOptions) -> FundamentalMatrix {
        let nn = n * n;
        let mut columns = BTreeMap::new();
        for &s in &opts.columns {
            if s <= steps {
                columns.insert(s, vec![0.0; (steps - s + 1) * nn]);
            }
        }
        FundamentalMatrix {
            n,
            steps,
            h,
            route,
            identity: linalg::identity(n),
            dense: if opts.dense { Some(vec![0.0; tri(steps, steps) * nn + nn]) } else { None },
            columns,
            terminal: vec![0.0; (steps + 1) * nn],
        }
    }

    /// Records `X(t, s)` wherever it is wanted.
    fn put(&mut self, t: usize, s: usize, x: &[f64]) {
        let nn = self.n * self.n;
        if let Some(d) = &mut self.dense {
            let k = tri(t, s) * nn;
            d[k..k + nn].copy_from_slice(x);
        }
        if let Some(c) = self.columns.get_mut(&s) {
            let k = (t - s) * nn;
            c[k..k + nn].copy_from_slice(x);
        }
        if t == self.steps {
            self.terminal[s * nn..(s + 1) * nn].copy_from_slice(x);
        }
    }

    fn wants_column(&self, s: usize) -> bool {
        self.dense.is_some() || self.columns.contains_key(&s)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn route(&self) -> Route {
        self.route
    }
    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }
    pub fn stored_columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.columns.keys().copied()
    }

    /// `X(t, s)` at nodes, `I` whenever `s >= t`.
    pub fn get(&self, t: usize, s: usize) -> Result<&[f64]> {
        let nn = self.n * self.n;
        if t > self.steps || s > self.steps {
            return Err(Error::NotStored { t, s });
        }
        if s >= t {
            return Ok(&self.identity);
        }
        if let Some(d) = &self.dense {
            let k = tri(t, s) * nn;
            return Ok(&d[k..k + nn]);
        }
        if t == self.steps {
            return Ok(&self.terminal[s * nn..(s + 1) * nn]);
        }
        if let Some(c) = self.columns.get(&s) {
            let k = (t - s) * nn;
            return Ok(&c[k..k + nn]);
        }
        Err(Error::NotStored { t, s })
    }

    /// `X(T, s)`.
    pub fn terminal(&self, s: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.terminal[s * nn..(s + 1) * nn]
    }

    /// Largest entry magnitude over stored values.
    pub fn max_abs(&self) -> f64 {
        let a = linalg::norm_inf(&self.terminal);
        let b = self.dense.as_ref().map_or(0.0, |d| linalg::norm_inf(d));
        let c = self.columns.values().map(|c| linalg::norm_inf(c)).fold(0.0, f64::max);
        a.max(b).max(c).max(1.0)
    }

    /// Max entry distance over everything both matrices store.
    pub fn max_distance(&self, other: &FundamentalMatrix) -> Result<f64> {
        if self.n != other.n || self.steps != other.steps {
            return Err(Error::Dimension { what: "fundamental matrices", expected: self.steps, found: other.steps });
        }
        let mut d = linalg::max_abs_diff(&self.terminal, &other.terminal);
        if let (Some(a), Some(b)) = (&self.dense, &other.dense) {
            d = d.max(linalg::max_abs_diff(a, b));
        }
        for (s, c) in &self.columns {
            if let Some(o) = other.columns.get(s) {
                d = d.max(linalg::max_abs_diff(c, o));
            }
        }
        Ok(d)
    }
}

/// Builds `X` by the chosen route.
pub fn fundamental(kernel: &DelayKernel, route: Route, opts: &FundamentalOptions) -> Result<FundamentalMatrix> {
    match route {
        Route::Volterra => volterra::fundamental_volterra(kernel, opts),
        Route::Direct => direct::fundamental_direct(kernel, opts),
    }
}

/// `k(a, s) = eta(a, s - a)` at nodes, exactly as the Stieltjes kernel reads:
/// zero for `s - a < -r`, and `eta(a, 0)` for `s >= a`.
pub fn kernel_k(kernel: &DelayKernel, alpha: usize, s: usize) -> Vec<f64> {
    if s >= alpha {
        return kernel.eta_at(alpha, Side::Right, 0, None);
    }
    kernel.eta_at(alpha, Side::Right, alpha - s, None)
}

/// `kt(a, s) = eta(a, s - a) - eta(a, 0)` at nodes (zero for `s >= a`).
pub fn adjoint_kernel(kernel: &DelayKernel, alpha: usize, s: usize) -> Vec<f64> {
    let nn = kernel.n() * kernel.n();
    if s >= alpha {
        return vec![0.0; nn];
    }
    let mut out = vec![0.0; nn];
    let total = kernel.eta_at(alpha, Side::Right, 0, None);
    kt_into(kernel, alpha, Side::Right, alpha - s, None, &total, &mut out);
    out
}

/// `kt(a, s)` with coefficients of node `a` from `a_side` and a one-sided
/// limit in `theta = s - a` (`None` = point value).
pub fn adjoint_kernel_sided(kernel: &DelayKernel, alpha: usize, a_side: Side, s: usize, theta_side: Option<Side>) -> Vec<f64> {
    let nn = kernel.n() * kernel.n();
    let mut out = vec![0.0; nn];
    if s > alpha {
        return out;
    }
    let total = kernel.eta_at(alpha, a_side, 0, None);
    kt_into(kernel, alpha, a_side, alpha - s, theta_side, &total, &mut out);
    out
}

/// `kt` at coefficient node `i` (side `side`), `theta = -d h`, with the
/// given one-sided limit in `theta`; `total` must be `eta(t_i, 0)` for the
/// same coefficient side.
pub(crate) fn kt_into(
    kernel: &DelayKernel,
    i: usize,
    side: Side,
    d: usize,
    theta_side: Option<Side>,
    total: &[f64],
    out: &mut [f64],
) {
    if d == 0 && theta_side != Some(Side::Left) {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let eta = kernel.eta_at(i, side, d, theta_side);
    for e in 0..out.len() {
        out[e] = eta[e] - total[e];
    }
}

/// Tail-sum evaluation of `I(s) = int_s^t G(a) kt(a, s) da` for a fixed row
/// `t`, with `G` supplied node by node in decreasing order. `G` may jump at
/// nodes: `g_plus(j)` is its right limit, `g_minus(j)` its left limit.
///
/// Because `kt(a, s)` depends on `a - s` only through which atoms lie beyond
/// it (plus the density tail), sums over `a` reduce to per-atom suffix sums.
pub(crate) struct RowIntegrator<'a> {
    kernel: &'a DelayKernel,
    n: usize,
    m: usize,
    t: usize,
    lags: Vec<usize>,
    /// Per atom: `sum_{j' >= j, j' < t} G+(j') A_k(j'+)`, indexed by `j`.
    plus: Vec<Vec<f64>>,
    /// Per atom: `sum_{j' >= j, j' <= t} G-(j') A_k(j'-)`.
    minus: Vec<Vec<f64>>,
    density: Option<DensityRows>,
    tmp: Vec<f64>,
}

struct DensityRows {
    g_plus: Vec<f64>,
    g_minus: Vec<f64>,
    /// Suffix sums of `G+(j) D(j+, m)` and `G-(j) D(j-, m)`.
    e_plus: Vec<f64>,
    e_minus: Vec<f64>,
}

impl<'a> RowIntegrator<'a> {
    pub(crate) fn new(kernel: &'a DelayKernel) -> RowIntegrator<'a> {
        let n = kernel.n();
        let nn = n * n;
        let steps = kernel.mesh().steps();
        let lags = kernel.lags();
        let len = (steps + 2) * nn;
        let density = kernel.has_density().then(|| DensityRows {
            g_plus: vec![0.0; len],
            g_minus: vec![0.0; len],
            e_plus: vec![0.0; len],
            e_minus: vec![0.0; len],
        });
        RowIntegrator {
            kernel,
            n,
            m: kernel.mesh().delay_steps(),
            t: 0,
            plus: lags.iter().map(|_| vec![0.0; len]).collect(),
            minus: lags.iter().map(|_| vec![0.0; len]).collect(),
            lags,
            density,
            tmp: vec![0.0; nn],
        }
    }

    /// Starts row `t`; suffix sums beyond `t` are zero.
    pub(crate) fn reset(&mut self, t: usize) {
        self.t = t;
        let nn = self.n * self.n;
        let lo = (t + 1) * nn;
        for v in self.plus.iter_mut().chain(self.minus.iter_mut()) {
            v[lo..].iter_mut().for_each(|x| *x = 0.0);
        }
        if let Some(d) = &mut self.density {
            d.e_plus[lo..].iter_mut().for_each(|x| *x = 0.0);
            d.e_minus[lo..].iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Adds node `j` (nodes must arrive as `t, t-1, ...`).
    pub(crate) fn push(&mut self, j: usize, g_plus: &[f64], g_minus: &[f64]) {
        let (n, nn, t) = (self.n, self.n * self.n, self.t);
        let (a, b) = (j * nn, (j + 1) * nn);
        for (k, _) in self.lags.iter().enumerate() {
            let (lo, hi) = self.plus[k].split_at_mut(b);
            lo[a..b].copy_from_slice(&hi[..nn]);
            if j < t {
                linalg::mat_mul_acc(&mut lo[a..b], g_plus, self.kernel.atom_coeff(k, j, Side::Right), n, n, n, 1.0);
            }
            let (lo, hi) = self.minus[k].split_at_mut(b);
            lo[a..b].copy_from_slice(&hi[..nn]);
            linalg::mat_mul_acc(&mut lo[a..b], g_minus, self.kernel.atom_coeff(k, j, Side::Left), n, n, n, 1.0);
        }
        if let Some(d) = &mut self.density {
            d.g_plus[a..b].copy_from_slice(g_plus);
            d.g_minus[a..b].copy_from_slice(g_minus);
            // Full density mass int_{-r}^{0} C(t_j, .), from eta(t_j, 0-).
            let dr = self.kernel.eta_at(j, Side::Right, 0, Some(Side::Left));
            let dl = self.kernel.eta_at(j, Side::Left, 0, Some(Side::Left));
            let tail_r = density_total(self.kernel, j, Side::Right, &dr);
            let tail_l = density_total(self.kernel, j, Side::Left, &dl);
            let (lo, hi) = d.e_plus.split_at_mut(b);
            lo[a..b].copy_from_slice(&hi[..nn]);
            if j < t {
                linalg::mat_mul_acc(&mut lo[a..b], g_plus, &tail_r, n, n, n, 1.0);
            }
            let (lo, hi) = d.e_minus.split_at_mut(b);
            lo[a..b].copy_from_slice(&hi[..nn]);
            linalg::mat_mul_acc(&mut lo[a..b], g_minus, &tail_l, n, n, n, 1.0);
        }
    }

    /// `out = I(s)`. With `implicit = false` the `j = s` lag-0 term
    /// `-(h/2) G+(s) A_0(s+)` is left out (node `s` need not be pushed).
    pub(crate) fn integral(&mut self, s: usize, implicit: bool, out: &mut [f64]) {
        let (n, nn, t) = (self.n, self.n * self.n, self.t);
        let h = self.kernel.mesh().h();
        out.iter_mut().for_each(|v| *v = 0.0);
        let at = |j: usize| {
            let j = j.min(t + 1);
            j * nn..(j + 1) * nn
        };
        for (k, &lag) in self.lags.iter().enumerate() {
            let jp = if lag == 0 && !implicit { s + 1 } else { s + lag };
            linalg::axpy(out, -0.5 * h, &self.plus[k][at(jp)]);
            linalg::axpy(out, -0.5 * h, &self.minus[k][at(s + lag + 1)]);
        }
        if let Some(d) = &self.density {
            let m = self.m;
            let tmp = &mut self.tmp;
            // Direct part: s < j < s + m.
            for j in s + 1..(s + m).min(t + 1) {
                let dd = j - s;
                let (a, b) = (j * nn, (j + 1) * nn);
                if j < t {
                    density_partial(self.kernel, j, Side::Right, dd, tmp);
                    linalg::mat_mul_acc(out, &d.g_plus[a..b], tmp, n, n, n, -0.5 * h);
                }
                density_partial(self.kernel, j, Side::Left, dd, tmp);
                linalg::mat_mul_acc(out, &d.g_minus[a..b], tmp, n, n, n, -0.5 * h);
            }
            // Beyond s + m the density tail is the full mass.
            let j0 = (s + m).max(s + 1).min(t + 1);
            linalg::axpy(out, -0.5 * h, &d.e_plus[j0 * nn..(j0 + 1) * nn]);
            linalg::axpy(out, -0.5 * h, &d.e_minus[j0 * nn..(j0 + 1) * nn]);
        }
    }
}

/// `int_{-r}^0 C(t_j, .)`: `eta(j, 0-)` minus its atoms.
fn density_total(kernel: &DelayKernel, j: usize, side: Side, eta_0_minus: &[f64]) -> Vec<f64> {
    let mut out = eta_0_minus.to_vec();
    for (k, a) in kernel.atoms().iter().enumerate() {
        if a.lag > 0 {
            linalg::axpy(&mut out, -1.0, kernel.atom_coeff(k, j, side));
        }
    }
    out
}

/// `int_{-d h}^0 C(t_j, .)` (`d < m`).
fn density_partial(kernel: &DelayKernel, j: usize, side: Side, d: usize, out: &mut [f64]) {
    // eta(0-) - eta((-d h)+) holds the atoms with 0 < lag < d plus the
    // density over [-d h, 0]; remove the atoms again.
    let a = kernel.eta_at(j, side, 0, Some(Side::Left));
    let b = kernel.eta_at(j, side, d, Some(Side::Right));
    for e in 0..out.len() {
        out[e] = a[e] - b[e];
    }
    for (k, at) in kernel.atoms().iter().enumerate() {
        if at.lag > 0 && at.lag < d {
            linalg::axpy(out, -1.0, kernel.atom_coeff(k, j, side));
        }
    }
}

/// `max_{s <= t} || X(t, s) - I + int_s^t X(t, a) kt(a, s) da ||` over all
/// node pairs (needs a dense `X`).
pub fn adjoint_identity_residual(xf: &FundamentalMatrix, kernel: &DelayKernel) -> Result<f64> {
    if !xf.is_dense() {
        return Err(Error::NotStored { t: xf.steps(), s: 0 });
    }
    let n = kernel.n();
    let nn = n * n;
    let id = linalg::identity(n);
    let mut integ = RowIntegrator::new(kernel);
    let mut out = vec![0.0; nn];
    let mut worst: f64 = 0.0;
    for t in 0..=xf.steps() {
        integ.reset(t);
        for s in (0..=t).rev() {
            let x = xf.get(t, s)?;
            integ.push(s, x, x);
            integ.integral(s, true, &mut out);
            for e in 0..nn {
                worst = worst.max((x[e] - id[e] + out[e]).abs());
            }
        }
    }
    Ok(worst)
}
