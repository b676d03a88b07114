//! Method-of-steps time marching with the explicit midpoint rule.
//!
//! Every delayed argument lies at least one step in the past, so the only
//! unknown at the midpoint stage is the lag-0 value, which comes from the
//! Euler predictor. Delayed midpoint values come from the Hermite
//! interpolant of already computed nodes.

use alloc::vec;
use alloc::vec::Vec;

use super::{ControlledProblem, Rhs};
use crate::error::{Error, Result};
use crate::kernel::{DelayKernel, Point};
use crate::timegrid::{hermite, LagSource, Mesh, PiecewiseFn, Segment, Side, Smoothness};

pub(crate) struct ControlledRhs<'a> {
    pub problem: &'a ControlledProblem,
    pub u: &'a PiecewiseFn,
}

impl Rhs for ControlledRhs<'_> {
    fn eval(&self, p: Point, lags: &dyn LagSource, out: &mut [f64]) {
        let mesh = &self.problem.mesh;
        let mut u = vec![0.0; self.u.dim()];
        match p {
            Point::Node(i, side) => u.copy_from_slice(self.u.value(i as i64, side)),
            Point::Mid(i) => self.u.interior_into(i as i64, 0.5, &mut u),
        }
        let seg = Segment::new(lags, self.problem.state_dim(), mesh.delay_steps(), mesh.h());
        self.problem.dynamics.eval(p.time(mesh.h()), &seg, &u, out);
    }
}

pub(crate) struct LinearRhs<'a> {
    pub kernel: &'a DelayKernel,
    pub forcing: Option<&'a PiecewiseFn>,
}

impl Rhs for LinearRhs<'_> {
    fn eval(&self, p: Point, lags: &dyn LagSource, out: &mut [f64]) {
        self.kernel.apply_at(p, lags, out);
        if let Some(f) = self.forcing {
            match p {
                Point::Node(i, side) => {
                    for (o, v) in out.iter_mut().zip(f.value(i as i64, side)) {
                        *o += v;
                    }
                }
                Point::Mid(i) => {
                    let mut v = vec![0.0; out.len()];
                    f.interior_into(i as i64, 0.5, &mut v);
                    for (o, v) in out.iter_mut().zip(&v) {
                        *o += v;
                    }
                }
            }
        }
    }
}

/// Nodes in `0..=end` reachable from a seed by adding positive lags: the
/// places where the solution's derivative may jump.
pub fn propagate_breakpoints(seeds: &[usize], lags: &[usize], end: usize) -> Vec<usize> {
    let mut reach = vec![false; end + 1];
    for &s in seeds {
        if s <= end {
            reach[s] = true;
        }
    }
    for i in 0..=end {
        if reach[i] {
            for &l in lags {
                if l > 0 && i + l <= end {
                    reach[i + l] = true;
                }
            }
        }
    }
    (0..=end).filter(|&i| reach[i]).collect()
}

struct Track {
    n: usize,
    first: i64,
    h: f64,
    right: Vec<f64>,
    left: Vec<f64>,
    /// One-sided slopes, NaN where unknown.
    sr: Vec<f64>,
    sl: Vec<f64>,
}

impl Track {
    fn at(&self, i: i64) -> usize {
        (i - self.first) as usize * self.n
    }
    fn value(&self, i: i64, side: Side) -> &[f64] {
        let k = self.at(i);
        match side {
            Side::Right => &self.right[k..k + self.n],
            Side::Left => &self.left[k..k + self.n],
        }
    }
    fn mid_into(&self, i: i64, out: &mut [f64]) {
        let (a, b) = (self.at(i), self.at(i + 1));
        let n = self.n;
        let (y0, y1) = (&self.right[a..a + n], &self.left[b..b + n]);
        let (m0, m1) = (&self.sr[a..a + n], &self.sl[b..b + n]);
        if m0.iter().chain(m1).all(|v| v.is_finite()) {
            hermite(y0, m0, y1, m1, self.h, 0.5, out);
        } else {
            for j in 0..n {
                out[j] = 0.5 * (y0[j] + y1[j]);
            }
        }
    }
}

struct TrackLags<'a> {
    track: &'a Track,
    p: Point,
    mid0: &'a [f64],
}

impl LagSource for TrackLags<'_> {
    fn lag_into(&self, k: usize, out: &mut [f64]) {
        match self.p {
            Point::Node(i, side) => out.copy_from_slice(self.track.value(i as i64 - k as i64, side)),
            Point::Mid(i) => {
                if k == 0 {
                    out.copy_from_slice(self.mid0);
                } else {
                    self.track.mid_into(i as i64 - k as i64, out);
                }
            }
        }
    }
}

fn finite_or(v: &[f64], p: Point, h: f64) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what: "vector field", time: p.time(h) })
    }
}

/// Marches from `sigma` to `T`. `history` covers nodes `sigma-m..=sigma`;
/// the march starts from its right value at `sigma`. `breaks` lists the
/// nodes where a separate left slope is evaluated.
pub(crate) fn march(
    rhs: &dyn Rhs,
    n: usize,
    mesh: &Mesh,
    history: &PiecewiseFn,
    sigma: usize,
    breaks: &[usize],
) -> Result<PiecewiseFn> {
    let m = mesh.delay_steps() as i64;
    let h = mesh.h();
    let end = mesh.steps() as i64;
    let s = sigma as i64;
    if history.dim() != n || history.first() > s - m || history.last() < s {
        return Err(Error::Domain { what: "initial history", time: (s - m) as f64 * h });
    }
    let first = s - m;
    let len = (end - first + 1) as usize;
    let mut tr = Track {
        n,
        first,
        h,
        right: vec![0.0; len * n],
        left: vec![0.0; len * n],
        sr: vec![f64::NAN; len * n],
        sl: vec![f64::NAN; len * n],
    };
    for i in first..=s {
        let k = tr.at(i);
        tr.right[k..k + n].copy_from_slice(history.value(i, Side::Right));
        tr.left[k..k + n].copy_from_slice(history.value(i, Side::Left));
        if let (Some(a), Some(b)) = (history.slope(i, Side::Right), history.slope(i, Side::Left)) {
            tr.sr[k..k + n].copy_from_slice(a);
            tr.sl[k..k + n].copy_from_slice(b);
        }
    }
    let mut is_break = vec![false; (end + 1) as usize];
    for &b in breaks {
        if (b as i64) <= end {
            is_break[b] = true;
        }
    }

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut kl = vec![0.0; n];
    let mut xm = vec![0.0; n];
    for j in s..end {
        let ju = j as usize;
        let p = Point::Node(ju, Side::Right);
        rhs.eval(p, &TrackLags { track: &tr, p, mid0: &[] }, &mut k1);
        finite_or(&k1, p, h)?;
        let kj = tr.at(j);
        tr.sr[kj..kj + n].copy_from_slice(&k1);
        if j > s {
            if is_break[ju] {
                let pl = Point::Node(ju, Side::Left);
                rhs.eval(pl, &TrackLags { track: &tr, p: pl, mid0: &[] }, &mut kl);
                finite_or(&kl, pl, h)?;
                tr.sl[kj..kj + n].copy_from_slice(&kl);
            } else {
                tr.sl[kj..kj + n].copy_from_slice(&k1);
            }
        }
        for c in 0..n {
            xm[c] = tr.right[kj + c] + 0.5 * h * k1[c];
        }
        let pm = Point::Mid(ju);
        rhs.eval(pm, &TrackLags { track: &tr, p: pm, mid0: &xm }, &mut k2);
        finite_or(&k2, pm, h)?;
        let kn = tr.at(j + 1);
        for c in 0..n {
            let v = tr.right[kj + c] + h * k2[c];
            tr.right[kn + c] = v;
            tr.left[kn + c] = v;
        }
    }
    if end > s {
        let pl = Point::Node(end as usize, Side::Left);
        rhs.eval(pl, &TrackLags { track: &tr, p: pl, mid0: &[] }, &mut kl);
        finite_or(&kl, pl, h)?;
        let k = tr.at(end);
        tr.sl[k..k + n].copy_from_slice(&kl);
        tr.sr[k..k + n].copy_from_slice(&kl);
    }
    let Track { right, left, sr, sl, .. } = tr;
    let f = PiecewiseFn::from_sides(h, first, n, right, left, Smoothness::PC0)?.with_slopes(sr, sl);
    Ok(if f.discont().is_empty() { f.with_smoothness(Smoothness::PC1) } else { f })
}
