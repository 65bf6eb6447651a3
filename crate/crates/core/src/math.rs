//! Scalar helpers and the small dense linear algebra used by the one-step
//! solvers. Everything here works on row-major `f64` slices; dimensions are
//! tiny (number of assets, number of children), so no external matrix crate.

use alloc::vec;
use alloc::vec::Vec;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

/// `log Σ w_i exp(x_i)` with max-shift. Weights must be nonnegative.
pub fn log_sum_exp(weights: &[f64], exponents: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), exponents.len());
    let shift = exponents
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(x, _)| *x)
        .fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = exponents
        .iter()
        .zip(weights)
        .map(|(x, w)| w * exp(x - shift))
        .sum();
    shift + ln(sum)
}

/// Normalized tilted weights `w_i exp(x_i) / Σ w_j exp(x_j)`.
pub fn tilted_weights(weights: &[f64], exponents: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(weights, exponents);
    weights
        .iter()
        .zip(exponents)
        .map(|(w, x)| w * exp(x - lse))
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| f64::max(m, abs(*x)))
}

/// Weighted mean of the rows of a `k × d` matrix.
pub fn weighted_mean(weights: &[f64], rows: &[f64], d: usize) -> Vec<f64> {
    let mut mean = vec![0.0; d];
    for (w, row) in weights.iter().zip(rows.chunks_exact(d.max(1))) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += w * x;
        }
    }
    mean
}

/// Weighted covariance `Σ w_i (x_i − m)(x_i − m)^T` of the rows, with `m`
/// supplied by the caller (pass zeros for the raw second moment).
pub fn weighted_second_moment(weights: &[f64], rows: &[f64], d: usize, center: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for (w, row) in weights.iter().zip(rows.chunks_exact(d.max(1))) {
        for a in 0..d {
            let xa = row[a] - center[a];
            for b in a..d {
                out[a * d + b] += w * xa * (row[b] - center[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            out[a * d + b] = out[b * d + a];
        }
    }
    out
}

/// Eigen-decomposition of a symmetric `n × n` matrix by cyclic Jacobi
/// rotations. Returns eigenvalues and the eigenvectors as columns of a
/// row-major matrix.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        let scale: f64 = (0..n).map(|i| a[i * n + i] * a[i * n + i]).sum::<f64>() + off;
        if off <= 1e-30 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i * n + i]).collect();
    (values, v)
}

/// Minimal-norm solution of `A x = b` for symmetric positive semidefinite `A`.
/// Eigenvalues below `rel_tol · λ_max` are treated as zero. Returns the
/// solution and the numerical rank.
pub fn pinv_solve(matrix: &[f64], n: usize, rhs: &[f64], rel_tol: f64) -> (Vec<f64>, usize) {
    if n == 1 {
        let a = matrix[0];
        return if a > 0.0 && a.is_finite() {
            (vec![rhs[0] / a], 1)
        } else {
            (vec![0.0], 0)
        };
    }
    if let Some(x) = cholesky_solve(matrix, n, rhs, rel_tol) {
        return (x, n);
    }
    let (values, vectors) = symmetric_eigen(matrix, n);
    let top = values.iter().fold(0.0_f64, |m, x| m.max(abs(*x)));
    let mut x = vec![0.0; n];
    let mut rank = 0;
    if top == 0.0 {
        return (x, 0);
    }
    for k in 0..n {
        if values[k] > rel_tol * top {
            rank += 1;
            let coeff: f64 = (0..n).map(|i| vectors[i * n + k] * rhs[i]).sum::<f64>() / values[k];
            for i in 0..n {
                x[i] += coeff * vectors[i * n + k];
            }
        }
    }
    (x, rank)
}

/// Newton direction `(H + μP)⁻¹ g` restricted to the range of the projector
/// `P`. The tiny shift `μ = 1e-13·tr H` keeps directions where the tilted
/// weights have nearly collapsed from being dropped by the rank cutoff.
pub fn damped_newton_direction(hessian: &[f64], projector: &[f64], d: usize, g: &[f64]) -> Vec<f64> {
    let trace: f64 = (0..d).map(|i| hessian[i * d + i]).sum();
    let mu = 1e-13 * trace;
    let shifted: Vec<f64> = hessian.iter().zip(projector).map(|(h, p)| h + mu * p).collect();
    let x = pinv_solve(&shifted, d, g, 1e-15).0;
    mat_vec(projector, d, &x)
}

/// Cholesky solve; `None` when a pivot falls below `rel_tol` times the
/// largest diagonal entry (the caller then takes the pseudo-inverse route).
fn cholesky_solve(matrix: &[f64], n: usize, rhs: &[f64], rel_tol: f64) -> Option<Vec<f64>> {
    let diag_max = (0..n).map(|i| matrix[i * n + i]).fold(0.0_f64, f64::max);
    if diag_max <= 0.0 {
        return None;
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = matrix[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= rel_tol * diag_max * 1e3 {
                    return None;
                }
                l[i * n + i] = sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = rhs[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

/// Orthogonal projector onto the span of the rows of a `k × d` matrix,
/// returned as a row-major `d × d` matrix, together with the rank.
pub fn row_space_projector(rows: &[f64], d: usize, rel_tol: f64) -> (Vec<f64>, usize) {
    let k = if d == 0 { 0 } else { rows.len() / d };
    let ones = vec![1.0; k];
    let zero = vec![0.0; d];
    let gram = weighted_second_moment(&ones, rows, d, &zero);
    let (values, vectors) = symmetric_eigen(&gram, d);
    let top = values.iter().fold(0.0_f64, |m, x| m.max(abs(*x)));
    let mut proj = vec![0.0; d * d];
    let mut rank = 0;
    if top == 0.0 {
        return (proj, 0);
    }
    for c in 0..d {
        if values[c] > rel_tol * top {
            rank += 1;
            for i in 0..d {
                for j in 0..d {
                    proj[i * d + j] += vectors[i * d + c] * vectors[j * d + c];
                }
            }
        }
    }
    (proj, rank)
}

pub fn mat_vec(matrix: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    (0..n).map(|i| dot(&matrix[i * n..(i + 1) * n], x)).collect()
}

/// Ordinary least-squares line through `(x, y)`: returns (slope, intercept,
/// standard error of the slope).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let stderr = if xs.len() > 2 {
        sqrt(sse / (n - 2.0) / sxx)
    } else {
        0.0
    };
    (slope, intercept, stderr)
}
