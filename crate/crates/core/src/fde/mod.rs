//! Controlled delay equations `x'(t) = f(t, x_t, u(t))`, `x_0 = phi`, and
//! the linear equations `x'(t) = L(t) x_t + h(t)`, solved by the method of
//! steps with an explicit midpoint scheme. [`picard_solve`] is an
//! independent fixed-point oracle.

mod march;
mod picard;

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernel::{DelayKernel, Point};
use crate::linalg;
use crate::timegrid::{HistorySegment, LagSource, Mesh, PiecewiseFn, Segment, Side};

pub use march::propagate_breakpoints;
pub use picard::{picard_solve, PicardOptions, PicardReport};

/// Structured derivative `D_2 f(t, x_t, u)`: discrete-delay atoms
/// `(lag steps, n*n matrix)` plus an optional density sampled at
/// `theta = -q h`, `q = 0..=m` (row-major `n*n` per sample).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Linearization {
    pub atoms: Vec<(usize, Vec<f64>)>,
    pub density: Option<Vec<f64>>,
}

/// A vector field on segments. Lags are in mesh steps, so an implementation
/// is built for a specific mesh.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn eval(&self, t: f64, x: &Segment<'_>, u: &[f64], out: &mut [f64]);
    fn linearization(&self, t: f64, x: &Segment<'_>, u: &[f64]) -> Linearization;
    /// Lags (in steps) at which `f` reads point values of the segment. They
    /// carry derivative jumps forward in time.
    fn point_lags(&self) -> Vec<usize>;
}

/// The admissible control values `U`.
#[derive(Clone, Debug, PartialEq)]
pub enum ControlSet {
    Finite(Vec<Vec<f64>>),
    /// A box, sampled by a tensor grid with `grid` points per axis.
    Box { lower: Vec<f64>, upper: Vec<f64>, grid: usize },
}

impl ControlSet {
    pub fn dim(&self) -> usize {
        match self {
            ControlSet::Finite(v) => v.first().map_or(0, |x| x.len()),
            ControlSet::Box { lower, .. } => lower.len(),
        }
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        match self {
            ControlSet::Finite(vals) => vals.iter().any(|v| linalg::max_abs_diff(v, u) <= tol),
            ControlSet::Box { lower, upper, .. } => {
                u.iter().zip(lower).zip(upper).all(|((x, lo), hi)| *x >= lo - tol && *x <= hi + tol)
            }
        }
    }

    /// The declared sample set.
    pub fn samples(&self) -> Vec<Vec<f64>> {
        match self {
            ControlSet::Finite(v) => v.clone(),
            ControlSet::Box { grid, .. } => self.samples_with_grid(*grid),
        }
    }

    /// Samples with `k` points per box axis (finite sets ignore `k`).
    pub fn samples_with_grid(&self, k: usize) -> Vec<Vec<f64>> {
        match self {
            ControlSet::Finite(v) => v.clone(),
            ControlSet::Box { lower, upper, .. } => {
                let k = k.max(1);
                let axis = |j: usize, a: usize| {
                    if k == 1 {
                        0.5 * (lower[j] + upper[j])
                    } else {
                        lower[j] + (upper[j] - lower[j]) * a as f64 / (k - 1) as f64
                    }
                };
                let d = lower.len();
                let total = k.pow(d as u32);
                (0..total)
                    .map(|mut idx| {
                        (0..d)
                            .map(|j| {
                                let a = idx % k;
                                idx /= k;
                                axis(j, a)
                            })
                            .collect()
                    })
                    .collect()
            }
        }
    }
}

/// Terminal function `g(x) = c + b.x + x^T Q x / 2`.
#[derive(Clone, Debug, PartialEq)]
pub enum TerminalFn {
    Affine { constant: f64, linear: Vec<f64> },
    Quadratic { constant: f64, linear: Vec<f64>, quadratic: Vec<f64> },
}

impl TerminalFn {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            TerminalFn::Affine { constant, linear } => constant + linalg::dot(linear, x),
            TerminalFn::Quadratic { constant, linear, quadratic } => {
                let n = x.len();
                let mut q = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        q += x[i] * quadratic[i * n + j] * x[j];
                    }
                }
                constant + linalg::dot(linear, x) + 0.5 * q
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            TerminalFn::Affine { linear, .. } => linear.clone(),
            TerminalFn::Quadratic { linear, quadratic, .. } => {
                let n = x.len();
                let mut g = linear.clone();
                for i in 0..n {
                    for j in 0..n {
                        g[i] += 0.5 * (quadratic[i * n + j] + quadratic[j * n + i]) * x[j];
                    }
                }
                g
            }
        }
    }

    fn dim(&self) -> usize {
        match self {
            TerminalFn::Affine { linear, .. } | TerminalFn::Quadratic { linear, .. } => linear.len(),
        }
    }
}

/// Maximize `g^0(x(T))` subject to `g^j(x(T)) >= 0` (`j = 1..=n_i`) and
/// `g^j(x(T)) = 0` (`j = n_i+1..=n_i+n_e`).
#[derive(Clone)]
pub struct ControlledProblem {
    pub name: String,
    /// Registered breakpoints form the set `F`.
    pub mesh: Mesh,
    pub dynamics: Arc<dyn Dynamics>,
    /// Initial history on nodes `-m..=0`.
    pub history: PiecewiseFn,
    pub controls: ControlSet,
    pub terminal: Vec<TerminalFn>,
    pub n_ineq: usize,
    pub n_eq: usize,
}

impl core::fmt::Debug for ControlledProblem {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ControlledProblem")
            .field("name", &self.name)
            .field("mesh", &self.mesh)
            .field("controls", &self.controls)
            .field("terminal", &self.terminal)
            .field("n_ineq", &self.n_ineq)
            .field("n_eq", &self.n_eq)
            .finish()
    }
}

impl ControlledProblem {
    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }
    pub fn control_dim(&self) -> usize {
        self.dynamics.control_dim()
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        let m = self.mesh.delay_steps() as i64;
        if self.history.dim() != n {
            return Err(Error::Dimension { what: "history", expected: n, found: self.history.dim() });
        }
        if self.history.first() != -m || self.history.last() != 0 || self.history.h() != self.mesh.h() {
            return Err(Error::Invalid("history must be sampled on the delayed nodes of [-r, 0]".into()));
        }
        if !self.history.discont().is_empty() {
            return Err(Error::Invalid("initial history must be continuous".into()));
        }
        if self.controls.dim() != self.control_dim() {
            return Err(Error::Dimension { what: "control set", expected: self.control_dim(), found: self.controls.dim() });
        }
        if self.terminal.len() != 1 + self.n_ineq + self.n_eq {
            return Err(Error::Dimension {
                what: "terminal functions (1 + n_i + n_e)",
                expected: 1 + self.n_ineq + self.n_eq,
                found: self.terminal.len(),
            });
        }
        for g in &self.terminal {
            if g.dim() != n {
                return Err(Error::Dimension { what: "terminal function", expected: n, found: g.dim() });
            }
        }
        Ok(())
    }

    pub fn initial_segment(&self) -> HistorySegment {
        crate::timegrid::segment(&self.history, 0, self.mesh.delay_steps()).expect("history covers [-r, 0]")
    }

    pub fn terminal_values(&self, x: &[f64]) -> Vec<f64> {
        self.terminal.iter().map(|g| g.value(x)).collect()
    }

    pub fn terminal_gradients(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.terminal.iter().map(|g| g.gradient(x)).collect()
    }

    /// Checks that `x(T)` satisfies the terminal constraints within `tol`.
    pub fn check_admissible(&self, x_t: &[f64], tol: f64) -> Result<()> {
        let g = self.terminal_values(x_t);
        for j in 1..=self.n_ineq {
            if g[j] < -tol {
                return Err(Error::InfeasibleReference { index: j, value: g[j] });
            }
        }
        for j in self.n_ineq + 1..g.len() {
            if g[j].abs() > tol {
                return Err(Error::InfeasibleReference { index: j, value: g[j] });
            }
        }
        Ok(())
    }

    /// Control constant in time.
    pub fn constant_control(&self, u: &[f64]) -> PiecewiseFn {
        PiecewiseFn::constant(self.mesh.h(), 0, self.mesh.steps() as i64, u)
    }

    /// `f(t_i, x_{t_i}, u)` along a stored state, one-sided at node `i`.
    pub fn eval_along(&self, x: &PiecewiseFn, i: usize, side: Side, u: &[f64]) -> Vec<f64> {
        let lags = crate::timegrid::NodeLags { f: x, node: i as i64, side };
        let seg = Segment::new(&lags, self.state_dim(), self.mesh.delay_steps(), self.mesh.h());
        let mut out = vec![0.0; self.state_dim()];
        self.dynamics.eval(i as f64 * self.mesh.h(), &seg, u, &mut out);
        out
    }
}

/// A process: state on `[-r, T]` and control on `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub x: PiecewiseFn,
    pub u: PiecewiseFn,
}

impl Trajectory {
    /// `x(T)`.
    pub fn terminal(&self) -> &[f64] {
        self.x.value(self.x.last(), Side::Left)
    }
}

fn check_control(problem: &ControlledProblem, u: &PiecewiseFn) -> Result<()> {
    let mesh = &problem.mesh;
    if u.dim() != problem.control_dim() {
        return Err(Error::Dimension { what: "control", expected: problem.control_dim(), found: u.dim() });
    }
    if u.h() != mesh.h() || u.first() != 0 || u.last() != mesh.steps() as i64 {
        return Err(Error::Alignment { what: "control grid", time: u.last() as f64 * u.h() });
    }
    Ok(())
}

/// Breakpoint seeds of a controlled solve: `F`, the control jumps, and 0.
fn control_seeds(problem: &ControlledProblem, u: &PiecewiseFn) -> Vec<usize> {
    let mut seeds: Vec<usize> = problem.mesh.breakpoints().to_vec();
    seeds.extend(u.discont().iter().map(|&i| i as usize));
    seeds.push(0);
    seeds
}

/// Solves the controlled equation on `[0, T]` with control `u`.
pub fn solve(problem: &ControlledProblem, u: &PiecewiseFn) -> Result<Trajectory> {
    check_control(problem, u)?;
    let mesh = &problem.mesh;
    let rhs = march::ControlledRhs { problem, u };
    let breaks = propagate_breakpoints(&control_seeds(problem, u), &problem.dynamics.point_lags(), mesh.steps());
    let x = march::march(&rhs, problem.state_dim(), mesh, &problem.history, 0, &breaks)?;
    Ok(Trajectory { x, u: u.clone() })
}

/// Solves `x' = L(t) x_t + forcing(t)` on `[sigma, T]` with `x_sigma = phi`.
/// The result lives on nodes `sigma - m ..= M`.
pub fn solve_linear(
    kernel: &DelayKernel,
    sigma: usize,
    phi: &HistorySegment,
    forcing: Option<&PiecewiseFn>,
) -> Result<PiecewiseFn> {
    let m = kernel.mesh().delay_steps();
    if phi.delay_steps() != m || phi.dim() != kernel.n() {
        return Err(Error::Dimension { what: "history segment", expected: m + 1, found: phi.delay_steps() + 1 });
    }
    let mut hist = phi.to_fn();
    hist = shift(hist, sigma as i64);
    solve_linear_from(kernel, sigma, &hist, forcing)
}

fn shift(f: PiecewiseFn, by: i64) -> PiecewiseFn {
    let d = f.dim();
    let mut right = Vec::with_capacity(f.len() * d);
    let mut left = Vec::with_capacity(f.len() * d);
    for i in f.first()..=f.last() {
        right.extend_from_slice(f.value(i, Side::Right));
        left.extend_from_slice(f.value(i, Side::Left));
    }
    PiecewiseFn::from_sides(f.h(), f.first() + by, d, right, left, crate::timegrid::Smoothness::PC0)
        .expect("shift keeps sides consistent")
}

/// As [`solve_linear`], with the history given as a function on nodes
/// `sigma - m ..= sigma`; it may jump at `sigma` (right value = start value).
pub fn solve_linear_from(
    kernel: &DelayKernel,
    sigma: usize,
    history: &PiecewiseFn,
    forcing: Option<&PiecewiseFn>,
) -> Result<PiecewiseFn> {
    let mesh = kernel.mesh();
    if sigma > mesh.steps() {
        return Err(Error::Domain { what: "initial time", time: sigma as f64 * mesh.h() });
    }
    if let Some(f) = forcing {
        if f.dim() != kernel.n() || f.first() > sigma as i64 || f.last() < mesh.steps() as i64 {
            return Err(Error::Invalid("forcing must cover [sigma, T] with the state dimension".into()));
        }
    }
    let mut seeds: Vec<usize> = kernel.breakpoints().to_vec();
    seeds.push(sigma);
    if let Some(f) = forcing {
        seeds.extend(f.discont().iter().filter(|&&i| i >= 0).map(|&i| i as usize));
    }
    let breaks = propagate_breakpoints(&seeds, &kernel.lags(), mesh.steps());
    let rhs = march::LinearRhs { kernel, forcing };
    march::march(&rhs, kernel.n(), mesh, history, sigma, &breaks)
}

/// Right-hand side evaluated by the marching engine.
pub(crate) trait Rhs {
    fn eval(&self, p: Point, lags: &dyn LagSource, out: &mut [f64]);
}
