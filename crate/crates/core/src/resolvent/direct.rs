//! Column-by-column construction: `X(., s) e_j` solves the linear delay
//! equation from `s` with history `0` on `[s - r, s)` and `e_j` at `s`.

use alloc::vec;
use alloc::vec::Vec;

use super::{FundamentalMatrix, FundamentalOptions, Route};
use crate::error::{Error, Result};
use crate::fde::solve_linear_from;
use crate::kernel::DelayKernel;
use crate::timegrid::{PiecewiseFn, Side, Smoothness};

pub(crate) fn fundamental_direct(kernel: &DelayKernel, opts: &FundamentalOptions) -> Result<FundamentalMatrix> {
    let n = kernel.n();
    let nn = n * n;
    let steps = kernel.mesh().steps();
    let m = kernel.mesh().delay_steps();
    let h = kernel.mesh().h();
    let mut out = FundamentalMatrix::empty(n, steps, h, Route::Direct, opts);
    let mut x = vec![0.0; nn];
    for s in 0..=steps {
        let sols: Vec<PiecewiseFn> = (0..n)
            .map(|j| {
                let len = (m + 1) * n;
                let right_start = m * n + j;
                let mut right = vec![0.0; len];
                right[right_start] = 1.0;
                let left = vec![0.0; len];
                let hist = PiecewiseFn::from_sides(h, s as i64 - m as i64, n, right, left, Smoothness::PC0)?;
                solve_linear_from(kernel, s, &hist, None)
            })
            .collect::<Result<_>>()?;
        let wants = out.wants_column(s);
        for t in s..=steps {
            if !(wants || t == steps) {
                continue;
            }
            for (j, sol) in sols.iter().enumerate() {
                let col = sol.value(t as i64, Side::Right);
                for c in 0..n {
                    x[c * n + j] = col[c];
                }
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "fundamental matrix", time: t as f64 * h });
            }
            out.put(t, s, &x);
        }
    }
    Ok(out)
}
