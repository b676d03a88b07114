//! Built-in problems and the linear-in-state dynamics used by config files:
//! `f(t, phi, u) = sum_k A_k(t) phi(-r_k) + int C(t, theta) phi(theta) dtheta + B(t) u + c(t)`
//! with every coefficient polynomial in `t` (and `C` also in `theta`).

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fde::{ControlSet, ControlledProblem, Dynamics, Linearization, TerminalFn};
use crate::linalg;
use crate::timegrid::{Mesh, PiecewiseFn, Segment};

/// Matrix polynomial `sum_p t^p M_p` (each `M_p` row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMat {
    pub rows: usize,
    pub cols: usize,
    pub coeffs: Vec<Vec<f64>>,
}

impl PolyMat {
    pub fn constant(rows: usize, cols: usize, m: Vec<f64>) -> PolyMat {
        PolyMat { rows, cols, coeffs: vec![m] }
    }

    pub fn zero(rows: usize, cols: usize) -> PolyMat {
        PolyMat::constant(rows, cols, vec![0.0; rows * cols])
    }

    fn check(&self, what: &'static str, rows: usize, cols: usize) -> Result<()> {
        if self.rows != rows || self.cols != cols {
            return Err(Error::Dimension { what, expected: rows * cols, found: self.rows * self.cols });
        }
        for c in &self.coeffs {
            if c.len() != rows * cols {
                return Err(Error::Dimension { what, expected: rows * cols, found: c.len() });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(alloc::format!("{what}: non-finite coefficient")));
            }
        }
        Ok(())
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut tp = 1.0;
        for c in &self.coeffs {
            linalg::axpy(out, tp, c);
            tp *= t;
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        self.eval_into(t, &mut out);
        out
    }
}

/// One term `t^a theta^b M` of the density `C(t, theta)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityTerm {
    pub t_power: u32,
    pub theta_power: u32,
    pub matrix: Vec<f64>,
}

/// Linear dynamics with delays in time units.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSpec {
    pub n: usize,
    pub d: usize,
    pub atoms: Vec<(f64, PolyMat)>,
    pub density: Vec<DensityTerm>,
    pub control: PolyMat,
    pub drift: Option<PolyMat>,
}

/// [`LinearSpec`] bound to a mesh (delays converted to steps).
#[derive(Clone, Debug)]
pub struct LinearDynamics {
    spec: LinearSpec,
    lags: Vec<usize>,
    delay_steps: usize,
    h: f64,
}

impl LinearDynamics {
    pub fn new(spec: LinearSpec, mesh: &Mesh) -> Result<LinearDynamics> {
        let (n, d) = (spec.n, spec.d);
        if n == 0 || d == 0 {
            return Err(Error::Invalid("state and control dimensions must be positive".into()));
        }
        let mut lags = Vec::with_capacity(spec.atoms.len());
        for (delay, a) in &spec.atoms {
            a.check("atom coefficient", n, n)?;
            let q = mesh.node(*delay, "atom delay (delay/h not integer)")?;
            if q < 0 || q as usize > mesh.delay_steps() {
                return Err(Error::Invalid(alloc::format!("atom delay {delay} outside [0, r]")));
            }
            lags.push(q as usize);
        }
        for term in &spec.density {
            if term.matrix.len() != n * n {
                return Err(Error::Dimension { what: "density term", expected: n * n, found: term.matrix.len() });
            }
        }
        if !spec.density.is_empty() && mesh.delay_steps() == 0 {
            return Err(Error::Invalid("a density term needs r > 0".into()));
        }
        spec.control.check("control matrix", n, d)?;
        if let Some(c) = &spec.drift {
            c.check("drift", n, 1)?;
        }
        Ok(LinearDynamics { spec, lags, delay_steps: mesh.delay_steps(), h: mesh.h() })
    }

    pub fn spec(&self) -> &LinearSpec {
        &self.spec
    }

    fn density_into(&self, t: f64, theta: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for term in &self.spec.density {
            let w = libm::pow(t, term.t_power as f64) * libm::pow(theta, term.theta_power as f64);
            linalg::axpy(out, w, &term.matrix);
        }
    }
}

impl Dynamics for LinearDynamics {
    fn state_dim(&self) -> usize {
        self.spec.n
    }
    fn control_dim(&self) -> usize {
        self.spec.d
    }

    fn eval(&self, t: f64, x: &Segment<'_>, u: &[f64], out: &mut [f64]) {
        let n = self.spec.n;
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut a = vec![0.0; n * n];
        let mut xv = vec![0.0; n];
        for ((_, poly), &lag) in self.spec.atoms.iter().zip(&self.lags) {
            poly.eval_into(t, &mut a);
            x.lag_into(lag, &mut xv);
            linalg::mat_vec_acc(out, &a, &xv, n, n, 1.0);
        }
        if !self.spec.density.is_empty() {
            let m = self.delay_steps;
            for q in 0..=m {
                let w = if q == 0 || q == m { 0.5 * self.h } else { self.h };
                self.density_into(t, -(q as f64) * self.h, &mut a);
                x.lag_into(q, &mut xv);
                linalg::mat_vec_acc(out, &a, &xv, n, n, w);
            }
        }
        let b = self.spec.control.eval(t);
        linalg::mat_vec_acc(out, &b, u, n, self.spec.d, 1.0);
        if let Some(c) = &self.spec.drift {
            linalg::axpy(out, 1.0, &c.eval(t));
        }
    }

    fn linearization(&self, t: f64, _x: &Segment<'_>, _u: &[f64]) -> Linearization {
        let nn = self.spec.n * self.spec.n;
        let atoms = self.spec.atoms.iter().zip(&self.lags).map(|((_, p), &lag)| (lag, p.eval(t))).collect();
        let density = (!self.spec.density.is_empty()).then(|| {
            let m = self.delay_steps;
            let mut row = vec![0.0; (m + 1) * nn];
            for q in 0..=m {
                self.density_into(t, -(q as f64) * self.h, &mut row[q * nn..(q + 1) * nn]);
            }
            row
        });
        Linearization { atoms, density }
    }

    fn point_lags(&self) -> Vec<usize> {
        self.lags.clone()
    }
}

/// `x'(t) = u(t) x(t) (1 - x(t - tau))`, scalar.
#[derive(Clone, Debug)]
pub struct DelayedLogistic {
    lag: usize,
}

impl DelayedLogistic {
    pub fn new(mesh: &Mesh, tau: f64) -> Result<DelayedLogistic> {
        let q = mesh.node(tau, "logistic delay (delay/h not integer)")?;
        if q <= 0 || q as usize > mesh.delay_steps() {
            return Err(Error::Invalid("logistic delay must lie in (0, r]".into()));
        }
        Ok(DelayedLogistic { lag: q as usize })
    }
}

impl Dynamics for DelayedLogistic {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn eval(&self, _t: f64, x: &Segment<'_>, u: &[f64], out: &mut [f64]) {
        let (x0, xd) = (x.lag(0)[0], x.lag(self.lag)[0]);
        out[0] = u[0] * x0 * (1.0 - xd);
    }
    fn linearization(&self, _t: f64, x: &Segment<'_>, u: &[f64]) -> Linearization {
        let (x0, xd) = (x.lag(0)[0], x.lag(self.lag)[0]);
        Linearization { atoms: vec![(0, vec![u[0] * (1.0 - xd)]), (self.lag, vec![-u[0] * x0])], density: None }
    }
    fn point_lags(&self) -> Vec<usize> {
        vec![0, self.lag]
    }
}

/// Names of dynamics that exist only as compiled fixtures.
pub const NONLINEAR_DYNAMICS: &[&str] = &["delayed_logistic"];

/// Compiled nonlinear dynamics by name, bound to `mesh`.
pub fn nonlinear_dynamics(name: &str, mesh: &Mesh) -> Result<Arc<dyn Dynamics>> {
    match name {
        "delayed_logistic" => Ok(Arc::new(DelayedLogistic::new(mesh, mesh.delay())?)),
        _ => Err(Error::Invalid(alloc::format!("unknown dynamics \"{name}\""))),
    }
}

/// A catalog problem with its reference control and documented oracle.
#[derive(Clone, Debug)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
    /// How the entry is checked, in words.
    pub oracle: &'static str,
    pub default_h: f64,
    pub horizon: f64,
    pub delay: f64,
    /// Reference control `(start time, value)` pieces.
    pub reference: Vec<(f64, Vec<f64>)>,
    build: fn(&Mesh) -> Result<ControlledProblem>,
}

impl CatalogEntry {
    pub fn mesh(&self, h: Option<f64>) -> Result<Mesh> {
        Mesh::new(self.horizon, self.delay, h.unwrap_or(self.default_h))
    }

    /// The problem on a mesh of step `h` (default step when `None`).
    pub fn problem(&self, h: Option<f64>) -> Result<ControlledProblem> {
        let mesh = self.mesh(h)?;
        let p = (self.build)(&mesh)?;
        p.validate()?;
        Ok(p)
    }

    pub fn reference_control(&self, mesh: &Mesh) -> Result<PiecewiseFn> {
        PiecewiseFn::piecewise_constant(mesh, &self.reference)
    }
}

fn linear(mesh: &Mesh, spec: LinearSpec) -> Result<Arc<dyn Dynamics>> {
    Ok(Arc::new(LinearDynamics::new(spec, mesh)?))
}

fn constant_history(mesh: &Mesh, v: &[f64]) -> PiecewiseFn {
    PiecewiseFn::constant(mesh.h(), -(mesh.delay_steps() as i64), 0, v)
}

fn maximize(linear: Vec<f64>) -> TerminalFn {
    TerminalFn::Affine { constant: 0.0, linear }
}

#[allow(clippy::too_many_arguments)]
fn problem(
    name: &str,
    mesh: &Mesh,
    dynamics: Arc<dyn Dynamics>,
    phi: &[f64],
    controls: ControlSet,
    terminal: Vec<TerminalFn>,
    n_ineq: usize,
    n_eq: usize,
) -> ControlledProblem {
    ControlledProblem {
        name: name.to_string(),
        mesh: mesh.clone(),
        dynamics,
        history: constant_history(mesh, phi),
        controls,
        terminal,
        n_ineq,
        n_eq,
    }
}

fn unit_box() -> ControlSet {
    ControlSet::Box { lower: vec![-1.0], upper: vec![1.0], grid: 21 }
}

fn pure_integrator(mesh: &Mesh) -> Result<ControlledProblem> {
    let spec = LinearSpec {
        n: 1,
        d: 1,
        atoms: vec![],
        density: vec![],
        control: PolyMat::constant(1, 1, vec![1.0]),
        drift: None,
    };
    let u = ControlSet::Finite(vec![vec![-1.0], vec![1.0]]);
    Ok(problem("pure_integrator", mesh, linear(mesh, spec)?, &[0.0], u, vec![maximize(vec![1.0])], 0, 0))
}

fn scalar_delay_free_decay(mesh: &Mesh) -> Result<ControlledProblem> {
    let spec = LinearSpec {
        n: 1,
        d: 1,
        atoms: vec![(1.0, PolyMat::constant(1, 1, vec![-1.0]))],
        density: vec![],
        control: PolyMat::zero(1, 1),
        drift: None,
    };
    let u = ControlSet::Finite(vec![vec![0.0]]);
    Ok(problem("scalar_delay_free_decay", mesh, linear(mesh, spec)?, &[1.0], u, vec![maximize(vec![1.0])], 0, 0))
}

fn scalar_delay_feedback(mesh: &Mesh) -> Result<ControlledProblem> {
    let spec = LinearSpec {
        n: 1,
        d: 1,
        atoms: vec![(1.0, PolyMat::constant(1, 1, vec![1.0]))],
        density: vec![],
        control: PolyMat::constant(1, 1, vec![1.0]),
        drift: None,
    };
    Ok(problem("scalar_delay_feedback", mesh, linear(mesh, spec)?, &[0.0], unit_box(), vec![maximize(vec![1.0])], 0, 0))
}

fn two_dim_rotation_with_delay(mesh: &Mesh) -> Result<ControlledProblem> {
    let spec = LinearSpec {
        n: 2,
        d: 1,
        atoms: vec![
            (0.0, PolyMat::constant(2, 2, vec![-0.5, 0.0, 0.0, -0.5])),
            (0.5, PolyMat::constant(2, 2, vec![0.0, 1.0, -1.0, 0.0])),
        ],
        density: vec![],
        control: PolyMat::constant(2, 1, vec![0.0, 1.0]),
        drift: None,
    };
    Ok(problem(
        "two_dim_rotation_with_delay",
        mesh,
        linear(mesh, spec)?,
        &[1.0, 0.0],
        unit_box(),
        vec![maximize(vec![1.0, 0.0])],
        0,
        0,
    ))
}

fn constrained_terminal(mesh: &Mesh) -> Result<ControlledProblem> {
    let spec = LinearSpec {
        n: 2,
        d: 1,
        atoms: vec![(0.5, PolyMat::constant(2, 2, vec![0.0, 0.0, 1.0, 0.0]))],
        density: vec![],
        control: PolyMat::constant(2, 1, vec![1.0, 0.0]),
        drift: None,
    };
    let terminal = vec![
        maximize(vec![0.0, 1.0]),
        TerminalFn::Affine { constant: 1.0, linear: vec![-1.0, 0.0] },
        TerminalFn::Affine { constant: 0.0, linear: vec![1.0, 0.0] },
    ];
    Ok(problem("constrained_terminal", mesh, linear(mesh, spec)?, &[0.0, 0.0], unit_box(), terminal, 1, 1))
}

fn delayed_logistic(mesh: &Mesh) -> Result<ControlledProblem> {
    let u = ControlSet::Box { lower: vec![0.0], upper: vec![2.0], grid: 21 };
    let dynamics = nonlinear_dynamics("delayed_logistic", mesh)?;
    Ok(problem("delayed_logistic", mesh, dynamics, &[0.5], u, vec![maximize(vec![1.0])], 0, 0))
}

/// The built-in instances.
pub fn catalog() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            name: "pure_integrator",
            summary: "x' = u, U = {-1, 1}, maximize x(1); r = 0.5 is carried but unused",
            oracle: "x(T) = T for u = 1; p = 1; needle sensitivities exact (no remainder)",
            default_h: 1.0 / 1024.0,
            horizon: 1.0,
            delay: 0.5,
            reference: vec![(0.0, vec![1.0])],
            build: pure_integrator,
        },
        CatalogEntry {
            name: "scalar_delay_free_decay",
            summary: "x' = -x(t - 1), phi = 1, T = 2 (no control)",
            oracle: "closed form: x = 1 - t on [0,1], t^2/2 - 2t + 3/2 on [1,2]; x(1) = 0, x(2) = -0.5",
            default_h: 1e-3,
            horizon: 2.0,
            delay: 1.0,
            reference: vec![(0.0, vec![0.0])],
            build: scalar_delay_free_decay,
        },
        CatalogEntry {
            name: "scalar_delay_feedback",
            summary: "x' = x(t - 1) + u, phi = 0, U = [-1, 1] (grid 21), maximize x(2)",
            oracle: "u = 1 optimal (brute force over bang-bang controls); x(2) = 2.5; p(t) = X(2, t) = 2 - t on [0,1], 1 on [1,2]",
            default_h: 1e-3,
            horizon: 2.0,
            delay: 1.0,
            reference: vec![(0.0, vec![1.0])],
            build: scalar_delay_feedback,
        },
        CatalogEntry {
            name: "two_dim_rotation_with_delay",
            summary: "x' = -x/2 + [[0,1],[-1,0]] x(t - 1/2) + (0,1) u, phi = (1,0), maximize x1(2)",
            oracle: "Picard iteration and both fundamental-matrix routes agree; reference control switches at t = 1",
            default_h: 1e-3,
            horizon: 2.0,
            delay: 0.5,
            reference: vec![(0.0, vec![1.0]), (1.0, vec![-1.0])],
            build: two_dim_rotation_with_delay,
        },
        CatalogEntry {
            name: "constrained_terminal",
            summary: "x1' = u, x2' = x1(t - 1/2), maximize x2(2) s.t. 1 - x1(2) >= 0, x1(2) = 0",
            oracle: "u = 1 on [0,1), -1 on [1,2]; x2(2) = 0.875; multipliers (2/3, 0, -1/3); QC holds",
            default_h: 1e-3,
            horizon: 2.0,
            delay: 0.5,
            reference: vec![(0.0, vec![1.0]), (1.0, vec![-1.0])],
            build: constrained_terminal,
        },
        CatalogEntry {
            name: "delayed_logistic",
            summary: "x' = u x (1 - x(t - 1)), phi = 0.5, U = [0, 2] (grid 21), T = 3",
            oracle: "nonlinear; Picard iteration agrees with the marching solver",
            default_h: 1e-3,
            horizon: 3.0,
            delay: 1.0,
            reference: vec![(0.0, vec![1.0])],
            build: delayed_logistic,
        },
    ]
}

pub fn by_name(name: &str) -> Option<CatalogEntry> {
    catalog().into_iter().find(|e| e.name == name)
}

pub fn names() -> Vec<String> {
    catalog().iter().map(|e| e.name.to_string()).collect()
}
