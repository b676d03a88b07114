//! The linear delay operator `L(t) phi = sum_k A_k(t) phi(-r_k) + int C(t, theta) phi(theta) dtheta`
//! and its Stieltjes kernel
//! `eta(t, theta) = sum_{k: -r_k < theta} A_k(t) + int_{-r}^{theta} C(t, s) ds`,
//! with `eta(t, theta) = 0` for `theta <= -r` and the lag-0 atom carried at
//! `theta = 0` itself.
//!
//! Lags are integer step counts. A kernel point `theta = -q h` is addressed
//! by `q`; one-sided limits in `theta` are explicit so that no jump of `eta`
//! is ever straddled.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fde::{ControlledProblem, Trajectory};
use crate::linalg::{self, mat_norm_inf};
use crate::timegrid::{snap, LagSource, Mesh, NodeLags, PiecewiseFn, Segment, Side, Smoothness};

/// Where a coefficient is evaluated: a node with a one-sided limit, or the
/// midpoint of the interval `[i, i+1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Point {
    Node(usize, Side),
    Mid(usize),
}

impl Point {
    pub fn time(&self, h: f64) -> f64 {
        match *self {
            Point::Node(i, _) => i as f64 * h,
            Point::Mid(i) => (i as f64 + 0.5) * h,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Atom {
    /// Delay in steps.
    pub lag: usize,
    /// `A_k(t)` as an `n*n` row-major matrix function on nodes `0..=M`.
    pub coeff: PiecewiseFn,
}

#[derive(Clone, Debug)]
struct Density {
    /// `C(t_i, -q h)` for all nodes `i` (right limits), row-major by `(i, q)`.
    right: Vec<f64>,
    /// Left limits at the breakpoints of the kernel.
    left: BTreeMap<usize, Vec<f64>>,
    /// `int_{-q h}^{0} C(t_i, s) ds` by the trapezoid rule, same layout.
    tail_right: Vec<f64>,
    tail_left: BTreeMap<usize, Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct DelayKernel {
    n: usize,
    mesh: Mesh,
    atoms: Vec<Atom>,
    density: Option<Density>,
    breakpoints: Vec<usize>,
}

impl DelayKernel {
    /// The zero operator.
    pub fn zero(mesh: &Mesh, n: usize) -> DelayKernel {
        DelayKernel { n, mesh: mesh.clone(), atoms: Vec::new(), density: None, breakpoints: mesh.breakpoints().to_vec() }
    }

    /// Time-invariant discrete-delay kernel from `(lag steps, n*n matrix)`.
    pub fn constant(mesh: &Mesh, n: usize, atoms: &[(usize, Vec<f64>)]) -> Result<DelayKernel> {
        let mut k = DelayKernel::zero(mesh, n);
        for (lag, a) in atoms {
            k.add_atom(*lag, PiecewiseFn::constant(mesh.h(), 0, mesh.steps() as i64, a))?;
        }
        Ok(k)
    }

    /// Adds `A(t) phi(-lag h)`; atoms with equal lags are merged.
    pub fn add_atom(&mut self, lag: usize, coeff: PiecewiseFn) -> Result<()> {
        if lag > self.mesh.delay_steps() {
            return Err(Error::Invalid(alloc::format!(
                "atom delay {} exceeds r = {}",
                lag as f64 * self.mesh.h(),
                self.mesh.delay()
            )));
        }
        if coeff.dim() != self.n * self.n {
            return Err(Error::Dimension { what: "atom coefficient", expected: self.n * self.n, found: coeff.dim() });
        }
        if coeff.first() != 0 || coeff.last() != self.mesh.steps() as i64 {
            return Err(Error::Domain { what: "atom coefficient", time: coeff.last() as f64 * self.mesh.h() });
        }
        for &d in coeff.discont() {
            self.register_breakpoint(d as usize);
        }
        if let Some(a) = self.atoms.iter_mut().find(|a| a.lag == lag) {
            let m = self.mesh.steps() as i64;
            let nn = self.n * self.n;
            let mut right = Vec::with_capacity((m as usize + 1) * nn);
            let mut left = Vec::with_capacity((m as usize + 1) * nn);
            for i in 0..=m {
                for side in [Side::Right, Side::Left] {
                    let dst = if side == Side::Right { &mut right } else { &mut left };
                    let (x, y) = (a.coeff.value(i, side), coeff.value(i, side));
                    dst.extend(x.iter().zip(y).map(|(p, q)| p + q));
                }
            }
            a.coeff = PiecewiseFn::from_sides(self.mesh.h(), 0, nn, right, left, Smoothness::PC0)?;
        } else {
            self.atoms.push(Atom { lag, coeff });
            self.atoms.sort_by_key(|a| a.lag);
        }
        Ok(())
    }

    /// Samples the density `C(t, theta)` on nodes times delayed nodes via
    /// `f(t, side, theta, out)`; left limits are sampled at breakpoints.
    pub fn set_density<F>(&mut self, mut f: F)
    where
        F: FnMut(f64, Side, f64, &mut [f64]),
    {
        let (m, nn, h) = (self.mesh.delay_steps(), self.n * self.n, self.mesh.h());
        let mut sample = |i: usize, side: Side| {
            let mut row = vec![0.0; (m + 1) * nn];
            for q in 0..=m {
                f(i as f64 * h, side, -(q as f64) * h, &mut row[q * nn..(q + 1) * nn]);
            }
            row
        };
        let mut right = Vec::with_capacity((self.mesh.steps() + 1) * (m + 1) * nn);
        for i in 0..=self.mesh.steps() {
            right.extend(sample(i, Side::Right));
        }
        let mut left = BTreeMap::new();
        for &b in &self.breakpoints {
            left.insert(b, sample(b, Side::Left));
        }
        self.install_density(right, left);
    }

    fn install_density(&mut self, right: Vec<f64>, left: BTreeMap<usize, Vec<f64>>) {
        let (m, nn, h) = (self.mesh.delay_steps(), self.n * self.n, self.mesh.h());
        let tail = |row: &[f64]| {
            let mut t = vec![0.0; (m + 1) * nn];
            for q in 1..=m {
                for e in 0..nn {
                    t[q * nn + e] = t[(q - 1) * nn + e] + 0.5 * h * (row[(q - 1) * nn + e] + row[q * nn + e]);
                }
            }
            t
        };
        let row_len = (m + 1) * nn;
        let mut tail_right = Vec::with_capacity(right.len());
        for row in right.chunks(row_len) {
            tail_right.extend(tail(row));
        }
        let tail_left = left.iter().map(|(&b, row)| (b, tail(row))).collect();
        self.density = Some(Density { right, left, tail_right, tail_left });
    }

    pub fn register_breakpoint(&mut self, i: usize) {
        if let Err(pos) = self.breakpoints.binary_search(&i) {
            self.breakpoints.insert(pos, i);
            if let Some(d) = &mut self.density {
                // Without a sampled left limit the right one is the best we have.
                let row_len = (self.mesh.delay_steps() + 1) * self.n * self.n;
                let row = d.right[i * row_len..(i + 1) * row_len].to_vec();
                let tail = d.tail_right[i * row_len..(i + 1) * row_len].to_vec();
                d.left.insert(i, row);
                d.tail_left.insert(i, tail);
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }
    pub fn has_density(&self) -> bool {
        self.density.is_some()
    }
    /// The set `N_L` where coefficients may jump in `t`.
    pub fn breakpoints(&self) -> &[usize] {
        &self.breakpoints
    }
    pub fn is_breakpoint(&self, i: usize) -> bool {
        self.breakpoints.binary_search(&i).is_ok()
    }
    pub fn lags(&self) -> Vec<usize> {
        self.atoms.iter().map(|a| a.lag).collect()
    }

    /// `A_k` at node `i`.
    pub fn atom_coeff(&self, k: usize, i: usize, side: Side) -> &[f64] {
        self.atoms[k].coeff.value(i as i64, side)
    }

    fn density_row(&self, i: usize, side: Side) -> Option<&[f64]> {
        let d = self.density.as_ref()?;
        let row_len = (self.mesh.delay_steps() + 1) * self.n * self.n;
        if side == Side::Left {
            if let Some(r) = d.left.get(&i) {
                return Some(r);
            }
        }
        Some(&d.right[i * row_len..(i + 1) * row_len])
    }

    fn tail_row(&self, i: usize, side: Side) -> Option<&[f64]> {
        let d = self.density.as_ref()?;
        let row_len = (self.mesh.delay_steps() + 1) * self.n * self.n;
        if side == Side::Left {
            if let Some(r) = d.tail_left.get(&i) {
                return Some(r);
            }
        }
        Some(&d.tail_right[i * row_len..(i + 1) * row_len])
    }

    /// Density sample `C(t_i, -q h)`, zero when there is no density.
    pub fn density_at(&self, i: usize, side: Side, q: usize, out: &mut [f64]) {
        let nn = self.n * self.n;
        match self.density_row(i, side) {
            Some(row) => out.copy_from_slice(&row[q * nn..(q + 1) * nn]),
            None => out.iter_mut().for_each(|v| *v = 0.0),
        }
    }

    /// Coefficient of atom `k` at a point (midpoints average the adjacent
    /// one-sided node values).
    pub fn atom_at(&self, k: usize, p: Point, out: &mut [f64]) {
        match p {
            Point::Node(i, side) => out.copy_from_slice(self.atom_coeff(k, i, side)),
            Point::Mid(i) => {
                let a = self.atom_coeff(k, i, Side::Right);
                let b = self.atom_coeff(k, i + 1, Side::Left);
                for e in 0..out.len() {
                    out[e] = 0.5 * (a[e] + b[e]);
                }
            }
        }
    }

    /// `out = L(p) x_p` where `lags` supplies `x(p - k h)`.
    pub fn apply_at(&self, p: Point, lags: &dyn LagSource, out: &mut [f64]) {
        let n = self.n;
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut a = vec![0.0; n * n];
        let mut x = vec![0.0; n];
        for k in 0..self.atoms.len() {
            self.atom_at(k, p, &mut a);
            lags.lag_into(self.atoms[k].lag, &mut x);
            linalg::mat_vec_acc(out, &a, &x, n, n, 1.0);
        }
        if self.density.is_some() {
            let m = self.mesh.delay_steps();
            let h = self.mesh.h();
            let nn = n * n;
            let rows: [(&[f64], f64); 2] = match p {
                Point::Node(i, side) => [(self.density_row(i, side).unwrap(), 1.0), (&[], 0.0)],
                Point::Mid(i) => [
                    (self.density_row(i, Side::Right).unwrap(), 0.5),
                    (self.density_row(i + 1, Side::Left).unwrap(), 0.5),
                ],
            };
            for q in 0..=m {
                let w = if q == 0 || q == m { 0.5 * h } else { h };
                lags.lag_into(q, &mut x);
                for (row, scale) in rows.iter() {
                    if *scale != 0.0 {
                        linalg::mat_vec_acc(out, &row[q * nn..(q + 1) * nn], &x, n, n, w * scale);
                    }
                }
            }
        }
    }

    /// `L(t) phi` at node `t` (right-hand coefficients at breakpoints).
    pub fn apply_l(&self, t: usize, phi: &crate::timegrid::HistorySegment) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_at(Point::Node(t, Side::Right), phi, &mut out);
        out
    }

    /// `eta(t_i, theta)` at `theta = -q h`. `theta_side` selects the value
    /// at the point itself (`None`) or the limit from the left/right.
    pub fn eta_at(&self, i: usize, t_side: Side, q: usize, theta_side: Option<Side>) -> Vec<f64> {
        let nn = self.n * self.n;
        let m = self.mesh.delay_steps();
        let mut out = vec![0.0; nn];
        if q > m || (q == m && theta_side != Some(Side::Right)) {
            return out;
        }
        for atom in &self.atoms {
            let included = match theta_side {
                None => atom.lag > q || q == 0,
                Some(Side::Left) => atom.lag > q,
                Some(Side::Right) => atom.lag >= q,
            };
            if included {
                linalg::axpy(&mut out, 1.0, atom.coeff.value(i as i64, t_side));
            }
        }
        if let Some(tail) = self.tail_row(i, t_side) {
            // int_{-r}^{-q h} C = tail(m) - tail(q)
            for e in 0..nn {
                out[e] += tail[m * nn + e] - tail[q * nn + e];
            }
        }
        out
    }

    /// `eta(t, theta)` at node `t` for any real `theta`: zero at and below
    /// `-r`, `eta(t, 0)` above 0, linear interpolation of the density part
    /// between delayed nodes.
    pub fn eta_eval(&self, t: usize, theta: f64) -> Vec<f64> {
        let h = self.mesh.h();
        let m = self.mesh.delay_steps();
        if theta > 0.0 {
            return self.eta_at(t, Side::Right, 0, None);
        }
        let x = -theta / h;
        if let Some(q) = snap(x) {
            return self.eta_at(t, Side::Right, q as usize, None);
        }
        if x >= m as f64 {
            return vec![0.0; self.n * self.n];
        }
        // Strictly between delayed nodes q0 < x < q0 + 1: atoms are those
        // with lag > x, the density integral is interpolated.
        let q0 = libm::floor(x) as usize;
        let a = self.eta_at(t, Side::Right, q0 + 1, Some(Side::Right));
        let b = self.eta_at(t, Side::Right, q0, Some(Side::Left));
        let w = x - q0 as f64;
        let mut out = vec![0.0; self.n * self.n];
        let nn = self.n * self.n;
        // Atoms: a includes lag >= q0+1, b includes lag > q0, identical sets.
        for e in 0..nn {
            out[e] = w * a[e] + (1.0 - w) * b[e];
        }
        out
    }

    /// `theta -> eta(t, theta)` on the delayed nodes as a piecewise function
    /// (nodes `-m..=0`, matrix-valued).
    pub fn eta_fn(&self, t: usize) -> PiecewiseFn {
        let m = self.mesh.delay_steps() as i64;
        let nn = self.n * self.n;
        let mut right = Vec::with_capacity((m as usize + 1) * nn);
        let mut left = Vec::with_capacity((m as usize + 1) * nn);
        for j in -m..=0 {
            let q = (-j) as usize;
            // Left-continuous representative: the value at a node is its
            // left limit, except the endpoint convention at theta = 0.
            let l = self.eta_at(t, Side::Right, q, Some(Side::Left));
            let r = if q == 0 { self.eta_at(t, Side::Right, 0, None) } else { self.eta_at(t, Side::Right, q, Some(Side::Right)) };
            left.extend(if q == m as usize { vec![0.0; nn] } else { l });
            right.extend(r);
        }
        PiecewiseFn::from_sides(self.mesh.h(), -m, nn, right, left, Smoothness::PC0).expect("consistent sides")
    }

    /// `||eta(t, .)||_BV = sum ||A_k(t)|| + int ||C(t, theta)|| dtheta`
    /// (induced infinity norm).
    pub fn bv_norm(&self, t: usize) -> f64 {
        let n = self.n;
        let mut v: f64 = self.atoms.iter().map(|a| mat_norm_inf(a.coeff.value(t as i64, Side::Right), n, n)).sum();
        if let Some(row) = self.density_row(t, Side::Right) {
            let m = self.mesh.delay_steps();
            let h = self.mesh.h();
            let nn = n * n;
            for q in 0..=m {
                let w = if q == 0 || q == m { 0.5 * h } else { h };
                v += w * mat_norm_inf(&row[q * nn..(q + 1) * nn], n, n);
            }
        }
        v
    }

    /// `max_t ||L(t)||`, the constant in the Gronwall bound on `X`.
    pub fn lambda_max(&self) -> f64 {
        (0..=self.mesh.steps()).map(|i| self.bv_norm(i)).fold(0.0, f64::max)
    }
}

/// Samples `D_2 f(t, x_t, u(t))` along a reference process. Breakpoints are
/// the control jumps plus the problem's registered set.
pub fn linearize(problem: &ControlledProblem, reference: &Trajectory) -> Result<DelayKernel> {
    let mesh = &problem.mesh;
    let n = problem.state_dim();
    let (x, u) = (&reference.x, &reference.u);
    let m = mesh.steps() as i64;
    if x.h() != mesh.h() || x.first() != -(mesh.delay_steps() as i64) || x.last() != m {
        return Err(Error::Invalid("trajectory mesh does not match the problem mesh".into()));
    }
    if u.h() != mesh.h() || u.first() != 0 || u.last() != m {
        return Err(Error::Invalid("control mesh does not match the problem mesh".into()));
    }
    let mut breaks: Vec<usize> = mesh.breakpoints().to_vec();
    breaks.extend(u.discont().iter().map(|&i| i as usize));
    breaks.sort_unstable();
    breaks.dedup();

    let lin_at = |i: usize, side: Side| {
        let lags = NodeLags { f: x, node: i as i64, side };
        let seg = Segment::new(&lags, n, mesh.delay_steps(), mesh.h());
        problem.dynamics.linearization(i as f64 * mesh.h(), &seg, u.value(i as i64, side))
    };

    let nn = n * n;
    let steps = mesh.steps();
    let mut atom_right: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut atom_left: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut dens_right: Vec<f64> = Vec::new();
    let mut dens_left: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut has_density = false;
    let row_len = (mesh.delay_steps() + 1) * nn;
    for i in 0..=steps {
        let sides: &[Side] = if breaks.binary_search(&i).is_ok() { &[Side::Right, Side::Left] } else { &[Side::Right] };
        for &side in sides {
            let lin = lin_at(i, side);
            let store = if side == Side::Right { &mut atom_right } else { &mut atom_left };
            for (lag, a) in &lin.atoms {
                if a.len() != nn {
                    return Err(Error::Dimension { what: "linearization atom", expected: nn, found: a.len() });
                }
                let col = store.entry(*lag).or_insert_with(|| vec![0.0; (steps + 1) * nn]);
                linalg::axpy(&mut col[i * nn..(i + 1) * nn], 1.0, a);
            }
            if let Some(c) = &lin.density {
                if c.len() != row_len {
                    return Err(Error::Dimension { what: "linearization density", expected: row_len, found: c.len() });
                }
                has_density = true;
            }
            match side {
                Side::Right => {
                    let row = lin.density.clone().unwrap_or_else(|| vec![0.0; row_len]);
                    dens_right.extend(row);
                }
                Side::Left => {
                    dens_left.insert(i, lin.density.clone().unwrap_or_else(|| vec![0.0; row_len]));
                }
            }
        }
    }
    let mut kernel = DelayKernel::zero(mesh, n);
    for &b in &breaks {
        kernel.register_breakpoint(b);
    }
    for (lag, right) in atom_right {
        let mut left = right.clone();
        for &b in &breaks {
            let src = atom_left.get(&lag).map(|l| l[b * nn..(b + 1) * nn].to_vec()).unwrap_or_else(|| vec![0.0; nn]);
            left[b * nn..(b + 1) * nn].copy_from_slice(&src);
        }
        let coeff = PiecewiseFn::from_sides(mesh.h(), 0, nn, right, left, Smoothness::PC0)?;
        kernel.add_atom(lag, coeff)?;
    }
    // Lags appearing only in left limits.
    for (lag, l) in atom_left {
        if kernel.atoms.iter().all(|a| a.lag != lag) {
            let right = vec![0.0; (steps + 1) * nn];
            let mut left = right.clone();
            for &b in &breaks {
                left[b * nn..(b + 1) * nn].copy_from_slice(&l[b * nn..(b + 1) * nn]);
            }
            kernel.add_atom(lag, PiecewiseFn::from_sides(mesh.h(), 0, nn, right, left, Smoothness::PC0)?)?;
        }
    }
    if has_density {
        kernel.install_density(dens_right, dens_left);
    }
    Ok(kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timegrid::{total_variation_with, HistorySegment};

    fn mesh() -> Mesh {
        Mesh::new(2.0, 1.0, 0.01).unwrap()
    }

    #[test]
    fn apply_l_examples() {
        let mesh = mesh();
        let k = DelayKernel::constant(&mesh, 1, &[(100, vec![-1.0])]).unwrap();
        let one = HistorySegment::constant(0.01, 100, &[1.0]);
        assert_eq!(k.apply_l(37, &one), [-1.0]);
        let z = DelayKernel::zero(&mesh, 1);
        let phi = HistorySegment::from_fn(0.01, 100, |th| vec![th + 1.0]);
        assert_eq!(z.apply_l(3, &phi), [0.0]);
        let k2 = DelayKernel::constant(&mesh, 1, &[(0, vec![2.0]), (100, vec![3.0])]).unwrap();
        assert!((k2.apply_l(5, &phi)[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn eta_eval_examples() {
        let mesh = mesh();
        let k = DelayKernel::constant(&mesh, 1, &[(100, vec![-1.0])]).unwrap();
        assert_eq!(k.eta_eval(10, -1.0), [0.0]);
        assert_eq!(k.eta_eval(10, -0.999), [-1.0]);
        assert_eq!(k.eta_eval(10, -0.5), [-1.0]);
        assert_eq!(k.eta_eval(10, 0.0), [-1.0]);
        assert_eq!(k.eta_eval(10, -1.3), [0.0]);
        let k0 = DelayKernel::constant(&mesh, 1, &[(0, vec![4.0])]).unwrap();
        assert_eq!(k0.eta_eval(0, -0.2), [0.0]);
        assert_eq!(k0.eta_eval(0, -0.0001), [0.0]);
        assert_eq!(k0.eta_eval(0, 0.0), [4.0]);
        assert_eq!(k0.eta_eval(0, 0.5), [4.0]);
    }

    #[test]
    fn bv_norm_examples() {
        let mesh = mesh();
        assert_eq!(DelayKernel::constant(&mesh, 1, &[(100, vec![-1.0])]).unwrap().bv_norm(0), 1.0);
        assert_eq!(DelayKernel::zero(&mesh, 1).bv_norm(0), 0.0);
        let k = DelayKernel::constant(&mesh, 1, &[(0, vec![2.0]), (100, vec![3.0])]).unwrap();
        assert_eq!(k.bv_norm(7), 5.0);
        let g = k.eta_fn(7);
        assert!((total_variation_with(&g, g.first(), g.last(), |d| mat_norm_inf(d, 1, 1)) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn density_bv_matches_variation_of_eta() {
        let mesh = mesh();
        let mut k = DelayKernel::constant(&mesh, 2, &[(30, vec![1.0, -2.0, 0.5, 0.0])]).unwrap();
        k.set_density(|t, _, th, out| {
            out.copy_from_slice(&[th + t, 0.3, -1.0, libm::sin(3.0 * th)]);
        });
        for t in [0usize, 77, 200] {
            let g = k.eta_fn(t);
            let tv = total_variation_with(&g, g.first(), g.last(), |d| mat_norm_inf(d, 2, 2));
            // Agree up to the quadrature error of the density part.
            assert!((tv - k.bv_norm(t)).abs() < 2e-2, "t={t}: {tv} vs {}", k.bv_norm(t));
        }
    }
}
