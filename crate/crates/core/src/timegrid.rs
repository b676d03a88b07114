//! Uniform meshes, piecewise functions with one-sided node values, history
//! segments, norms and trapezoid quadrature.
//!
//! Times are integer node indices times the step `h`. A node index may be
//! negative (the history interval `[-r, 0]` has indices `-m..=0`), which keeps
//! `t - r` an exact node whenever `t` is one.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::norm_inf;

/// Which one-sided limit to take at a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Smoothness {
    /// Continuous.
    C0,
    /// Piecewise continuous, jumps at declared nodes.
    PC0,
    /// Continuous with piecewise continuous derivative.
    PC1,
}

/// Relative slack when snapping a float time onto the mesh.
const SNAP_TOL: f64 = 1e-9;

/// Round `x` to an integer if it is one up to floating-point noise.
pub fn snap(x: f64) -> Option<i64> {
    if !x.is_finite() {
        return None;
    }
    let k = libm::round(x);
    if (x - k).abs() <= SNAP_TOL * k.abs().max(1.0) {
        Some(k as i64)
    } else {
        None
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    h: f64,
    steps: usize,
    delay_steps: usize,
    breakpoints: Vec<usize>,
}

impl Mesh {
    /// Mesh on `[0, horizon]` with step `h`; both `horizon` and `delay` must
    /// be integer multiples of `h`.
    pub fn new(horizon: f64, delay: f64, h: f64) -> Result<Mesh> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Invalid(alloc::format!("step h must be positive, got {h}")));
        }
        if !(horizon > 0.0) {
            return Err(Error::Invalid(alloc::format!("horizon T must be positive, got {horizon}")));
        }
        if !(delay >= 0.0) {
            return Err(Error::Invalid(alloc::format!("delay r must be non-negative, got {delay}")));
        }
        let steps = snap(horizon / h).ok_or(Error::Alignment { what: "horizon T (T/h not integer)", time: horizon })?;
        let delay_steps = snap(delay / h).ok_or(Error::Alignment { what: "delay r (r/h not integer)", time: delay })?;
        Ok(Mesh { h, steps: steps as usize, delay_steps: delay_steps as usize, breakpoints: Vec::new() })
    }

    /// Registers breakpoint times; each must be a node of `[0, T]`.
    pub fn with_breakpoints(mut self, times: &[f64]) -> Result<Mesh> {
        for &t in times {
            let i = self.node_in_horizon(t, "breakpoint")?;
            self.breakpoints.push(i);
        }
        self.breakpoints.sort_unstable();
        self.breakpoints.dedup();
        Ok(self)
    }

    pub fn with_breakpoint_nodes(mut self, nodes: &[usize]) -> Mesh {
        self.breakpoints.extend(nodes.iter().copied().filter(|&i| i <= self.steps));
        self.breakpoints.sort_unstable();
        self.breakpoints.dedup();
        self
    }

    pub fn h(&self) -> f64 {
        self.h
    }
    /// Number of steps `M = T/h`; nodes are `0..=M`.
    pub fn steps(&self) -> usize {
        self.steps
    }
    /// `m = r/h`.
    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }
    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.h
    }
    pub fn delay(&self) -> f64 {
        self.delay_steps as f64 * self.h
    }
    pub fn breakpoints(&self) -> &[usize] {
        &self.breakpoints
    }
    pub fn is_breakpoint(&self, i: usize) -> bool {
        self.breakpoints.binary_search(&i).is_ok()
    }

    pub fn time(&self, i: i64) -> f64 {
        i as f64 * self.h
    }

    /// Node index of `t`, which may lie anywhere on the infinite lattice.
    pub fn node(&self, t: f64, what: &'static str) -> Result<i64> {
        snap(t / self.h).ok_or(Error::Alignment { what, time: t })
    }

    pub fn node_in_horizon(&self, t: f64, what: &'static str) -> Result<usize> {
        let i = self.node(t, what)?;
        if i < 0 || i as usize > self.steps {
            return Err(Error::Domain { what, time: t });
        }
        Ok(i as usize)
    }

    /// Same step and node counts (breakpoints may differ).
    pub fn same_grid(&self, other: &Mesh) -> bool {
        self.steps == other.steps && self.delay_steps == other.delay_steps && self.h == other.h
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Slopes {
    right: Vec<f64>,
    left: Vec<f64>,
}

/// Vector-valued function sampled at consecutive nodes `first..=last` with
/// both one-sided values stored at every node. Between nodes it is a cubic
/// Hermite interpolant when one-sided slopes are known and linear otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseFn {
    h: f64,
    first: i64,
    dim: usize,
    smoothness: Smoothness,
    right: Vec<f64>,
    left: Vec<f64>,
    slopes: Option<Slopes>,
    discont: Vec<i64>,
}

impl PiecewiseFn {
    /// Continuous function from node values (row-major, `dim` per node).
    pub fn from_nodes(h: f64, first: i64, dim: usize, values: Vec<f64>) -> PiecewiseFn {
        assert!(dim > 0 && values.len() % dim == 0 && !values.is_empty());
        PiecewiseFn {
            h,
            first,
            dim,
            smoothness: Smoothness::C0,
            left: values.clone(),
            right: values,
            slopes: None,
            discont: Vec::new(),
        }
    }

    /// From explicit one-sided arrays. Nodes where they differ become the
    /// declared discontinuities; a `PC1` tag with jumps is rejected.
    pub fn from_sides(
        h: f64,
        first: i64,
        dim: usize,
        right: Vec<f64>,
        left: Vec<f64>,
        smoothness: Smoothness,
    ) -> Result<PiecewiseFn> {
        if dim == 0 || right.len() != left.len() || right.is_empty() || right.len() % dim != 0 {
            return Err(Error::Dimension { what: "piecewise function sides", expected: right.len(), found: left.len() });
        }
        let n = right.len() / dim;
        let discont: Vec<i64> = (0..n)
            .filter(|&k| right[k * dim..(k + 1) * dim] != left[k * dim..(k + 1) * dim])
            .map(|k| first + k as i64)
            .collect();
        if !discont.is_empty() && smoothness != Smoothness::PC0 {
            return Err(Error::Invalid(alloc::format!(
                "function tagged {smoothness:?} jumps at t = {}",
                discont[0] as f64 * h
            )));
        }
        Ok(PiecewiseFn { h, first, dim, smoothness, right, left, slopes: None, discont })
    }

    /// Samples `f(t, side, out)` on nodes `first..=last`; both sides are
    /// evaluated only at the nodes listed in `breaks`.
    pub fn sample<F>(h: f64, first: i64, last: i64, dim: usize, breaks: &[i64], mut f: F) -> PiecewiseFn
    where
        F: FnMut(f64, Side, &mut [f64]),
    {
        assert!(last >= first);
        let n = (last - first + 1) as usize;
        let mut right = vec![0.0; n * dim];
        let mut left = vec![0.0; n * dim];
        for k in 0..n {
            let i = first + k as i64;
            let t = i as f64 * h;
            f(t, Side::Right, &mut right[k * dim..(k + 1) * dim]);
            if breaks.contains(&i) {
                f(t, Side::Left, &mut left[k * dim..(k + 1) * dim]);
            } else {
                let (l, r) = (&mut left[k * dim..(k + 1) * dim], &right[k * dim..(k + 1) * dim]);
                l.copy_from_slice(r);
            }
        }
        let mut out = PiecewiseFn::from_sides(h, first, dim, right, left, Smoothness::PC0)
            .expect("sample builds consistent sides");
        if out.discont.is_empty() {
            out.smoothness = Smoothness::C0;
        }
        out
    }

    pub fn constant(h: f64, first: i64, last: i64, value: &[f64]) -> PiecewiseFn {
        let n = (last - first + 1) as usize;
        let values: Vec<f64> = (0..n).flat_map(|_| value.iter().copied()).collect();
        let mut f = PiecewiseFn::from_nodes(h, first, value.len(), values);
        let zero = vec![0.0; n * value.len()];
        f.slopes = Some(Slopes { right: zero.clone(), left: zero });
        f
    }

    /// Right-continuous piecewise constant function on `[0, T]`; `pieces`
    /// are `(start time, value)` with strictly increasing node-aligned starts,
    /// the first at 0.
    pub fn piecewise_constant(mesh: &Mesh, pieces: &[(f64, Vec<f64>)]) -> Result<PiecewiseFn> {
        if pieces.is_empty() {
            return Err(Error::Invalid("piecewise constant function needs at least one piece".into()));
        }
        let dim = pieces[0].1.len();
        let mut starts = Vec::with_capacity(pieces.len());
        for (t, v) in pieces {
            if v.len() != dim {
                return Err(Error::Dimension { what: "piece value", expected: dim, found: v.len() });
            }
            let i = mesh.node_in_horizon(*t, "piece start")?;
            if let Some(&prev) = starts.last() {
                if i <= prev {
                    return Err(Error::Invalid(alloc::format!("piece starts must increase (t = {t})")));
                }
            } else if i != 0 {
                return Err(Error::Invalid("first piece must start at t = 0".into()));
            }
            starts.push(i);
        }
        let m = mesh.steps();
        let mut right = vec![0.0; (m + 1) * dim];
        let mut left = vec![0.0; (m + 1) * dim];
        let mut piece = 0;
        for i in 0..=m {
            while piece + 1 < starts.len() && starts[piece + 1] <= i {
                piece += 1;
            }
            right[i * dim..(i + 1) * dim].copy_from_slice(&pieces[piece].1);
            let lp = if i > 0 && starts[piece] == i { piece - 1 } else { piece };
            left[i * dim..(i + 1) * dim].copy_from_slice(&pieces[lp].1);
        }
        // At T the function is defined by its left piece.
        let last = m * dim;
        let tail = left[last..].to_vec();
        right[last..].copy_from_slice(&tail);
        let mut f = PiecewiseFn::from_sides(mesh.h(), 0, dim, right, left, Smoothness::PC0)?;
        if f.discont.is_empty() {
            f.smoothness = Smoothness::C0;
        }
        let zero = vec![0.0; (m + 1) * dim];
        f.slopes = Some(Slopes { right: zero.clone(), left: zero });
        Ok(f)
    }

    /// Attaches one-sided derivatives for Hermite interpolation.
    pub fn with_slopes(mut self, right: Vec<f64>, left: Vec<f64>) -> PiecewiseFn {
        assert_eq!(right.len(), self.right.len());
        assert_eq!(left.len(), self.left.len());
        self.slopes = Some(Slopes { right, left });
        self
    }

    pub fn with_smoothness(mut self, s: Smoothness) -> PiecewiseFn {
        assert!(s == Smoothness::PC0 || self.discont.is_empty());
        self.smoothness = s;
        self
    }

    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn first(&self) -> i64 {
        self.first
    }
    pub fn last(&self) -> i64 {
        self.first + self.len() as i64 - 1
    }
    pub fn len(&self) -> usize {
        self.right.len() / self.dim
    }
    pub fn is_empty(&self) -> bool {
        self.right.is_empty()
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }
    pub fn discont(&self) -> &[i64] {
        &self.discont
    }
    pub fn contains(&self, i: i64) -> bool {
        i >= self.first && i <= self.last()
    }

    /// One-sided value at node `i`. Panics outside the domain.
    pub fn value(&self, i: i64, side: Side) -> &[f64] {
        let k = (i - self.first) as usize;
        let d = self.dim;
        match side {
            Side::Right => &self.right[k * d..(k + 1) * d],
            Side::Left => &self.left[k * d..(k + 1) * d],
        }
    }

    pub fn try_value(&self, i: i64, side: Side) -> Result<&[f64]> {
        if self.contains(i) {
            Ok(self.value(i, side))
        } else {
            Err(Error::Domain { what: "piecewise function", time: i as f64 * self.h })
        }
    }

    pub fn slope(&self, i: i64, side: Side) -> Option<&[f64]> {
        let s = self.slopes.as_ref()?;
        let k = (i - self.first) as usize;
        let d = self.dim;
        Some(match side {
            Side::Right => &s.right[k * d..(k + 1) * d],
            Side::Left => &s.left[k * d..(k + 1) * d],
        })
    }

    /// Value at `t = (i + frac) h`, `0 < frac < 1`, inside interval `[i, i+1]`.
    pub fn interior_into(&self, i: i64, frac: f64, out: &mut [f64]) {
        let y0 = self.value(i, Side::Right);
        let y1 = self.value(i + 1, Side::Left);
        match (self.slope(i, Side::Right), self.slope(i + 1, Side::Left)) {
            // NaN marks an unknown slope.
            (Some(m0), Some(m1)) if m0.iter().chain(m1).all(|v| v.is_finite()) => {
                hermite(y0, m0, y1, m1, self.h, frac, out)
            }
            _ => {
                for j in 0..self.dim {
                    out[j] = (1.0 - frac) * y0[j] + frac * y1[j];
                }
            }
        }
    }

    /// Evaluation at an arbitrary time; nodes return the right value.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let x = t / self.h;
        let mut out = vec![0.0; self.dim];
        if let Some(i) = snap(x) {
            out.copy_from_slice(self.try_value(i, Side::Right)?);
            return Ok(out);
        }
        let i = libm::floor(x) as i64;
        if i < self.first || i + 1 > self.last() {
            return Err(Error::Domain { what: "piecewise function", time: t });
        }
        self.interior_into(i, x - i as f64, &mut out);
        Ok(out)
    }

    /// Node times and right values, one row per node.
    pub fn rows(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        (self.first..=self.last()).map(move |i| (i as f64 * self.h, self.value(i, Side::Right)))
    }

    /// Restriction to nodes `a..=b`.
    pub fn restrict(&self, a: i64, b: i64) -> Result<PiecewiseFn> {
        if !self.contains(a) || !self.contains(b) || a > b {
            return Err(Error::Domain { what: "restriction", time: a as f64 * self.h });
        }
        let d = self.dim;
        let ka = (a - self.first) as usize * d;
        let kb = (b - self.first + 1) as usize * d;
        let mut right = self.right[ka..kb].to_vec();
        let mut left = self.left[ka..kb].to_vec();
        // The endpoints of a closed sub-interval see only their inner sides.
        left[..d].copy_from_slice(&self.right[ka..ka + d]);
        let n = right.len();
        right[n - d..].copy_from_slice(&self.left[kb - d..kb]);
        let mut f = PiecewiseFn::from_sides(self.h, a, d, right, left, Smoothness::PC0)?;
        f.smoothness = if f.discont.is_empty() && self.smoothness != Smoothness::PC0 {
            self.smoothness
        } else if f.discont.is_empty() {
            Smoothness::C0
        } else {
            Smoothness::PC0
        };
        if let Some(s) = &self.slopes {
            f.slopes = Some(Slopes { right: s.right[ka..kb].to_vec(), left: s.left[ka..kb].to_vec() });
        }
        Ok(f)
    }
}

/// Cubic Hermite interpolation on an interval of length `h`.
pub fn hermite(y0: &[f64], m0: &[f64], y1: &[f64], m1: &[f64], h: f64, s: f64, out: &mut [f64]) {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    for j in 0..out.len() {
        out[j] = h00 * y0[j] + h10 * h * m0[j] + h01 * y1[j] + h11 * h * m1[j];
    }
}

/// The restriction `theta -> x(t + theta)` of a state to `[-r, 0]`, stored
/// at the `r/h + 1` delayed nodes and indexed by lag: `at_lag(k)` is
/// `x(t - k h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HistorySegment {
    h: f64,
    dim: usize,
    samples: Vec<f64>,
}

impl HistorySegment {
    pub fn from_lags(h: f64, dim: usize, samples: Vec<f64>) -> HistorySegment {
        assert!(dim > 0 && !samples.is_empty() && samples.len() % dim == 0);
        HistorySegment { h, dim, samples }
    }

    /// Samples `f(theta)` at `theta = -k h`, `k = 0..=m`.
    pub fn from_fn<F: FnMut(f64) -> Vec<f64>>(h: f64, delay_steps: usize, mut f: F) -> HistorySegment {
        let mut samples = Vec::new();
        let mut dim = 0;
        for k in 0..=delay_steps {
            let v = f(-(k as f64) * h);
            dim = v.len();
            samples.extend(v);
        }
        HistorySegment::from_lags(h, dim, samples)
    }

    pub fn constant(h: f64, delay_steps: usize, value: &[f64]) -> HistorySegment {
        HistorySegment::from_fn(h, delay_steps, |_| value.to_vec())
    }

    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn delay_steps(&self) -> usize {
        self.samples.len() / self.dim - 1
    }
    pub fn at_lag(&self, k: usize) -> &[f64] {
        &self.samples[k * self.dim..(k + 1) * self.dim]
    }

    /// Linear interpolation at `theta` in `[-r, 0]`.
    pub fn at(&self, theta: f64) -> Result<Vec<f64>> {
        let x = -theta / self.h;
        let m = self.delay_steps();
        if let Some(k) = snap(x) {
            if k < 0 || k as usize > m {
                return Err(Error::Domain { what: "history segment", time: theta });
            }
            return Ok(self.at_lag(k as usize).to_vec());
        }
        if x < 0.0 || x > m as f64 {
            return Err(Error::Domain { what: "history segment", time: theta });
        }
        let k = libm::floor(x) as usize;
        let w = x - k as f64;
        let a = self.at_lag(k);
        let b = self.at_lag(k + 1);
        Ok(a.iter().zip(b).map(|(p, q)| (1.0 - w) * p + w * q).collect())
    }

    /// As a continuous function on nodes `-m..=0`.
    pub fn to_fn(&self) -> PiecewiseFn {
        let m = self.delay_steps();
        let mut values = Vec::with_capacity(self.samples.len());
        for k in (0..=m).rev() {
            values.extend_from_slice(self.at_lag(k));
        }
        PiecewiseFn::from_nodes(self.h, -(m as i64), self.dim, values)
    }
}

impl LagSource for HistorySegment {
    fn lag_into(&self, k: usize, out: &mut [f64]) {
        out.copy_from_slice(self.at_lag(k));
    }
}

/// Anything that can report `x(t - k h)` for the current evaluation point.
pub trait LagSource {
    fn lag_into(&self, k: usize, out: &mut [f64]);
}

/// A lazy view of the history segment `x_t` handed to vector fields. Lags
/// are in steps; `lag(0)` is the current state.
#[derive(Clone, Copy)]
pub struct Segment<'a> {
    src: &'a dyn LagSource,
    dim: usize,
    delay_steps: usize,
    h: f64,
}

impl<'a> Segment<'a> {
    pub fn new(src: &'a dyn LagSource, dim: usize, delay_steps: usize, h: f64) -> Segment<'a> {
        Segment { src, dim, delay_steps, h }
    }
    pub fn of(hist: &'a HistorySegment) -> Segment<'a> {
        Segment::new(hist, hist.dim(), hist.delay_steps(), hist.h())
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn lag_into(&self, k: usize, out: &mut [f64]) {
        debug_assert!(k <= self.delay_steps);
        self.src.lag_into(k, out)
    }
    pub fn lag(&self, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        self.lag_into(k, &mut v);
        v
    }
    pub fn current(&self) -> Vec<f64> {
        self.lag(0)
    }
    /// Materializes the whole segment.
    pub fn to_history(&self) -> HistorySegment {
        let mut samples = Vec::with_capacity((self.delay_steps + 1) * self.dim);
        for k in 0..=self.delay_steps {
            samples.extend(self.lag(k));
        }
        HistorySegment::from_lags(self.h, self.dim, samples)
    }
}

/// `x_t` as stored samples. The state is assumed continuous; right values
/// are used.
pub fn segment(x: &PiecewiseFn, node: i64, delay_steps: usize) -> Result<HistorySegment> {
    let lo = node - delay_steps as i64;
    if !x.contains(lo) || !x.contains(node) {
        return Err(Error::Domain { what: "segment", time: lo as f64 * x.h() });
    }
    let mut samples = Vec::with_capacity((delay_steps + 1) * x.dim());
    for k in 0..=delay_steps as i64 {
        samples.extend_from_slice(x.value(node - k, Side::Right));
    }
    Ok(HistorySegment::from_lags(x.h(), x.dim(), samples))
}

/// `segment` at a float time, which must be a node of `[0, T]`.
pub fn segment_at(x: &PiecewiseFn, mesh: &Mesh, t: f64) -> Result<HistorySegment> {
    let i = mesh.node_in_horizon(t, "segment time")?;
    segment(x, i as i64, mesh.delay_steps())
}

/// Sup norm (vector infinity norm) over all stored one-sided node values.
pub fn sup_norm(x: &PiecewiseFn) -> f64 {
    norm_inf(&x.right).max(norm_inf(&x.left))
}

/// Total variation over the whole domain: jumps at every node (including
/// the endpoints, so an endpoint atom counts) plus node-to-node increments.
pub fn total_variation(g: &PiecewiseFn) -> f64 {
    total_variation_between(g, g.first(), g.last())
}

/// Variation over nodes `a..=b`: increments inside, jumps at nodes in
/// `[a, b)`, and the jump at `b` only when `b` ends the domain. This makes
/// the result additive over splits at nodes.
pub fn total_variation_between(g: &PiecewiseFn, a: i64, b: i64) -> f64 {
    let mut v = 0.0;
    for i in a..=b {
        if i < b || b == g.last() {
            v += vec_dist(g.value(i, Side::Left), g.value(i, Side::Right));
        }
        if i < b {
            v += vec_dist(g.value(i + 1, Side::Left), g.value(i, Side::Right));
        }
    }
    v
}

/// `total_variation_between` with a caller-chosen norm on increments,
/// e.g. an induced matrix norm for matrix-valued functions.
pub fn total_variation_with<N: Fn(&[f64]) -> f64>(g: &PiecewiseFn, a: i64, b: i64, norm: N) -> f64 {
    let mut diff = vec![0.0; g.dim()];
    let mut inc = |x: &[f64], y: &[f64]| {
        for j in 0..diff.len() {
            diff[j] = x[j] - y[j];
        }
        norm(&diff)
    };
    let mut v = 0.0;
    for i in a..=b {
        if i < b || b == g.last() {
            v += inc(g.value(i, Side::Right), g.value(i, Side::Left));
        }
        if i < b {
            v += inc(g.value(i + 1, Side::Left), g.value(i, Side::Right));
        }
    }
    v
}

fn vec_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Lags of a stored function seen from node `node`, one-sided.
pub struct NodeLags<'a> {
    pub f: &'a PiecewiseFn,
    pub node: i64,
    pub side: Side,
}

impl LagSource for NodeLags<'_> {
    fn lag_into(&self, k: usize, out: &mut [f64]) {
        out.copy_from_slice(self.f.value(self.node - k as i64, self.side));
    }
}

/// Composite trapezoid over nodes `a..=b` using one-sided values, so jumps
/// at nodes are never straddled.
pub fn quad(f: &PiecewiseFn, a: i64, b: i64) -> Result<Vec<f64>> {
    if a > b {
        return Err(Error::Invalid("quad needs a <= b".into()));
    }
    f.try_value(a, Side::Right)?;
    f.try_value(b, Side::Left)?;
    let d = f.dim();
    let mut acc = vec![0.0; d];
    let half = 0.5 * f.h();
    for i in a..b {
        let l = f.value(i, Side::Right);
        let r = f.value(i + 1, Side::Left);
        for j in 0..d {
            acc[j] += half * (l[j] + r[j]);
        }
    }
    Ok(acc)
}

/// `quad` between float times, which must be nodes.
pub fn quad_times(f: &PiecewiseFn, a: f64, b: f64) -> Result<Vec<f64>> {
    let ia = snap(a / f.h()).ok_or(Error::Alignment { what: "quadrature bound", time: a })?;
    let ib = snap(b / f.h()).ok_or(Error::Alignment { what: "quadrature bound", time: b })?;
    quad(f, ia, ib)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_rejects_incommensurate_delay() {
        assert!(Mesh::new(1.0, 0.3, 0.02).is_ok());
        let e = Mesh::new(1.0, 0.3, 0.04).unwrap_err();
        assert!(matches!(e, Error::Alignment { .. }));
    }

    #[test]
    fn delayed_node_is_exact() {
        let mesh = Mesh::new(2.0, 1.0, 1e-3).unwrap();
        assert_eq!(mesh.delay_steps(), 1000);
        assert_eq!(mesh.steps(), 2000);
        assert_eq!(mesh.node(1.7, "t").unwrap() - 1000, mesh.node(0.7, "t").unwrap());
    }

    #[test]
    fn breakpoints_must_be_nodes() {
        let mesh = Mesh::new(1.0, 0.5, 0.25).unwrap();
        assert!(mesh.clone().with_breakpoints(&[0.5]).is_ok());
        assert!(matches!(mesh.with_breakpoints(&[0.3]), Err(Error::Alignment { .. })));
    }

    #[test]
    fn sup_norm_examples() {
        let mesh = Mesh::new(1.0, 0.0, 0.25).unwrap();
        let c = PiecewiseFn::constant(0.25, 0, 4, &[3.0]);
        assert_eq!(sup_norm(&c), 3.0);
        let step = PiecewiseFn::piecewise_constant(&mesh, &[(0.0, vec![1.0]), (0.5, vec![-2.0])]).unwrap();
        assert_eq!(sup_norm(&step), 2.0);
        let lin = PiecewiseFn::sample(0.25, 0, 4, 1, &[], |t, _, o| o[0] = 1.0 - t);
        assert_eq!(sup_norm(&lin), 1.0);
    }

    #[test]
    fn piecewise_constant_is_right_continuous() {
        let mesh = Mesh::new(1.0, 0.0, 0.25).unwrap();
        let f = PiecewiseFn::piecewise_constant(&mesh, &[(0.0, vec![1.0]), (0.5, vec![-2.0])]).unwrap();
        assert_eq!(f.value(2, Side::Right), &[-2.0]);
        assert_eq!(f.value(2, Side::Left), &[1.0]);
        assert_eq!(f.discont(), &[2]);
        assert_eq!(f.smoothness(), Smoothness::PC0);
    }

    #[test]
    fn total_variation_examples() {
        let c = PiecewiseFn::constant(0.1, -10, 0, &[4.0]);
        assert_eq!(total_variation(&c), 0.0);
        // theta on [-1, 0] plus a jump of 2 at -1/2.
        let g = PiecewiseFn::sample(0.01, -100, 0, 1, &[-50], |t, side, o| {
            let jump = if t > -0.5 + 1e-12 || (side == Side::Right && t > -0.5 - 1e-12) { 2.0 } else { 0.0 };
            o[0] = t + jump;
        });
        assert!((total_variation(&g) - 3.0).abs() < 1e-12);
        let a = total_variation_between(&g, -100, -37);
        let b = total_variation_between(&g, -37, 0);
        assert!((a + b - 3.0).abs() < 1e-12);
    }

    #[test]
    fn quad_examples() {
        let one = PiecewiseFn::constant(1e-3, 0, 1000, &[1.0]);
        assert!((quad(&one, 0, 1000).unwrap()[0] - 1.0).abs() < 1e-12);
        let t = PiecewiseFn::sample(1e-3, 0, 1000, 1, &[], |t, _, o| o[0] = t);
        assert!((quad(&t, 0, 1000).unwrap()[0] - 0.5).abs() < 1e-12);
        let t2 = PiecewiseFn::sample(1e-3, 0, 1000, 1, &[], |t, _, o| o[0] = t * t);
        assert!((quad(&t2, 0, 1000).unwrap()[0] - 1.0 / 3.0).abs() < 1e-6);
        assert!(matches!(quad_times(&t2, 0.0, 0.0005), Err(Error::Alignment { .. })));
    }

    #[test]
    fn segment_examples() {
        let mesh = Mesh::new(2.0, 1.0, 0.1).unwrap();
        let one = PiecewiseFn::constant(0.1, -10, 20, &[1.0]);
        let s = segment_at(&one, &mesh, 0.5).unwrap();
        assert!((0..=10).all(|k| s.at_lag(k) == [1.0]));
        let id = PiecewiseFn::sample(0.1, -10, 20, 1, &[], |t, _, o| o[0] = t);
        let s = segment(&id, 10, 10).unwrap();
        for k in 0..=10 {
            assert_eq!(s.at_lag(k), id.value(10 - k as i64, Side::Right));
            assert!((s.at_lag(k)[0] - (1.0 - k as f64 * 0.1)).abs() < 1e-12);
        }
        assert!(matches!(segment_at(&id, &mesh, 0.55), Err(Error::Alignment { .. })));
        assert!(matches!(segment(&id, 5, 20), Err(Error::Domain { .. })));
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |t: f64| t * t * t - t;
        let df = |t: f64| 3.0 * t * t - 1.0;
        let h = 0.5;
        let g = PiecewiseFn::sample(h, 0, 4, 1, &[], |t, _, o| o[0] = f(t));
        let sl: Vec<f64> = (0..5).map(|i| df(i as f64 * h)).collect();
        let g = g.with_slopes(sl.clone(), sl);
        for t in [0.1, 0.7, 1.3, 1.99] {
            assert!((g.eval(t).unwrap()[0] - f(t)).abs() < 1e-12);
        }
    }
}
