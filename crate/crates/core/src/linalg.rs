//! Dense helpers on row-major `f64` slices. Matrices here are tiny
//! (state dimension), so plain loops beat any abstraction.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;

pub fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

/// `out += scale * a * b` with `a: r x k`, `b: k x c`.
pub fn mat_mul_acc(out: &mut [f64], a: &[f64], b: &[f64], r: usize, k: usize, c: usize, scale: f64) {
    for i in 0..r {
        for l in 0..k {
            let ail = scale * a[i * k + l];
            if ail == 0.0 {
                continue;
            }
            let brow = &b[l * c..(l + 1) * c];
            let orow = &mut out[i * c..(i + 1) * c];
            for j in 0..c {
                orow[j] += ail * brow[j];
            }
        }
    }
}

pub fn mat_mul(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    mat_mul_acc(&mut out, a, b, r, k, c, 1.0);
    out
}

/// `out += scale * a * x` with `a: rows x cols`.
pub fn mat_vec_acc(out: &mut [f64], a: &[f64], x: &[f64], rows: usize, cols: usize, scale: f64) {
    for i in 0..rows {
        let row = &a[i * cols..(i + 1) * cols];
        let mut s = 0.0;
        for j in 0..cols {
            s += row[j] * x[j];
        }
        out[i] += scale * s;
    }
}

/// Row vector times matrix: `out += scale * v * a`, `a: rows x cols`.
pub fn vec_mat_acc(out: &mut [f64], v: &[f64], a: &[f64], rows: usize, cols: usize, scale: f64) {
    for i in 0..rows {
        let vi = scale * v[i];
        if vi == 0.0 {
            continue;
        }
        for j in 0..cols {
            out[j] += vi * a[i * cols + j];
        }
    }
}

pub fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Vector infinity norm.
pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Induced infinity norm (max absolute row sum) of a `rows x cols` matrix.
pub fn mat_norm_inf(a: &[f64], rows: usize, cols: usize) -> f64 {
    (0..rows)
        .map(|i| a[i * cols..(i + 1) * cols].iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn inverse(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let m = DMatrix::from_row_slice(n, n, a);
    let inv = m.try_inverse()?;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = inv[(i, j)];
        }
    }
    if out.iter().all(|v| v.is_finite()) {
        Some(out)
    } else {
        None
    }
}

/// Numerical rank of the matrix whose rows are `rows`.
pub fn rank(rows: &[Vec<f64>], tol: f64) -> usize {
    if rows.is_empty() || rows[0].is_empty() {
        return 0;
    }
    let cols = rows[0].len();
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    let m = DMatrix::from_row_slice(rows.len(), cols, &flat);
    let sv = m.singular_values();
    let smax = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax.max(1.0)).count()
}
