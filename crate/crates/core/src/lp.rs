//! One-step linear programs over the closed martingale simplex
//! `{q ≥ 0, Σ q = 1, Σ q_i ΔS_i = 0}` and the matching superhedging problem
//! `min_ϑ max_i (v_i − ϑ·ΔS_i)`.
//!
//! Small nodes (branching ≤ 6) are solved by enumerating the vertices of the
//! polytope; larger ones go through a dense two-phase simplex with Bland's
//! rule. Both routes are exposed so they can be checked against each other.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{abs, dot, max_abs, pinv_solve, symmetric_eigen};

/// Branching factor up to which vertex enumeration is used.
pub const VERTEX_ENUMERATION_LIMIT: usize = 6;

const PIVOT_TOL: f64 = 1e-12;

/// The martingale constraint is homogeneous in the increments, so every
/// kernel computation works on increments rescaled to unit size.
fn normalized(increments: &[f64]) -> Vec<f64> {
    let m = max_abs(increments);
    if m > 0.0 {
        increments.iter().map(|x| x / m).collect()
    } else {
        increments.to_vec()
    }
}

/// All vertices of the closed one-step martingale polytope. `increments` is
/// a row-major `k × d` matrix.
pub fn martingale_vertices(increments: &[f64], d: usize) -> Vec<Vec<f64>> {
    let k = increments.len() / d;
    let increments = &normalized(increments)[..];
    let mut out: Vec<Vec<f64>> = Vec::new();
    let max_support = (d + 1).min(k);
    for mask in 1u64..(1u64 << k) {
        let support: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        if support.len() > max_support {
            continue;
        }
        let r = support.len();
        // Columns (1, ΔS_i); Gram matrix of the support columns.
        let col = |i: usize, row: usize| -> f64 {
            if row == 0 {
                1.0
            } else {
                increments[i * d + row - 1]
            }
        };
        let mut gram = vec![0.0; r * r];
        for a in 0..r {
            for b in 0..r {
                gram[a * r + b] = (0..=d).map(|row| col(support[a], row) * col(support[b], row)).sum();
            }
        }
        let (eig, _) = symmetric_eigen(&gram, r);
        let top = eig.iter().fold(0.0_f64, |m, x| m.max(abs(*x)));
        if eig.iter().any(|e| *e <= 1e-12 * top) {
            continue;
        }
        let rhs = vec![1.0; r];
        let (weights, _) = pinv_solve(&gram, r, &rhs, 1e-14);
        let mut residual = 0.0_f64;
        for row in 0..=d {
            let target = if row == 0 { 1.0 } else { 0.0 };
            let lhs: f64 = support.iter().zip(&weights).map(|(&i, w)| w * col(i, row)).sum();
            residual = residual.max(abs(lhs - target));
        }
        if residual > 1e-10 || weights.iter().any(|w| *w < -1e-12) {
            continue;
        }
        let mut q = vec![0.0; k];
        for (&i, w) in support.iter().zip(&weights) {
            q[i] = w.max(0.0);
        }
        let s: f64 = q.iter().sum();
        q.iter_mut().for_each(|x| *x /= s);
        out.push(q);
    }
    out
}

/// `max E_q[v]` over the closed martingale simplex by vertex enumeration.
pub fn max_expectation_vertices(increments: &[f64], d: usize, values: &[f64]) -> Option<(f64, Vec<f64>)> {
    martingale_vertices(increments, d)
        .into_iter()
        .map(|q| (dot(&q, values), q))
        .fold(None, |best: Option<(f64, Vec<f64>)>, cand| match best {
            Some(b) if b.0 >= cand.0 => Some(b),
            _ => Some(cand),
        })
}

/// `max E_q[v]` over the closed martingale simplex by the simplex method.
pub fn max_expectation_simplex(increments: &[f64], d: usize, values: &[f64]) -> Option<(f64, Vec<f64>)> {
    let k = values.len();
    let increments = &normalized(increments)[..];
    let m = d + 1;
    let mut a = vec![0.0; m * k];
    for i in 0..k {
        a[i] = 1.0;
        for j in 0..d {
            a[(j + 1) * k + i] = increments[i * d + j];
        }
    }
    let mut b = vec![0.0; m];
    b[0] = 1.0;
    simplex_max(values, &a, &b, m, k)
}

/// `max E_q[v]` over the closed martingale simplex; `None` when the simplex
/// is empty.
pub fn max_expectation(increments: &[f64], d: usize, values: &[f64]) -> Option<(f64, Vec<f64>)> {
    if values.len() <= VERTEX_ENUMERATION_LIMIT {
        max_expectation_vertices(increments, d, values)
    } else {
        max_expectation_simplex(increments, d, values)
    }
}

/// True iff a strictly positive martingale kernel exists, i.e. 0 lies in the
/// relative interior of the convex hull of the increments.
pub fn admits_positive_martingale(increments: &[f64], d: usize, k: usize) -> bool {
    if k <= VERTEX_ENUMERATION_LIMIT {
        let mut covered = vec![false; k];
        for q in martingale_vertices(increments, d) {
            for (c, x) in covered.iter_mut().zip(&q) {
                if *x > PIVOT_TOL {
                    *c = true;
                }
            }
        }
        covered.iter().all(|c| *c)
    } else {
        (0..k).all(|i| {
            let mut e = vec![0.0; k];
            e[i] = 1.0;
            matches!(max_expectation_simplex(increments, d, &e), Some((v, _)) if v > PIVOT_TOL)
        })
    }
}

/// Dense two-phase simplex for `max c·x  s.t.  A x = b, x ≥ 0` with `b ≥ 0`.
/// `A` is row-major `m × n`. Returns `None` when infeasible or unbounded.
pub fn simplex_max(c: &[f64], a: &[f64], b: &[f64], m: usize, n: usize) -> Option<(f64, Vec<f64>)> {
    // Tableau columns: n structural, m artificial, 1 rhs.
    let width = n + m + 1;
    let mut t = vec![0.0; (m + 1) * width];
    let scale = max_abs(a).max(1.0);
    let eps = PIVOT_TOL * scale;
    for r in 0..m {
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[r * width + j] = sign * a[r * n + j];
        }
        t[r * width + n + r] = 1.0;
        t[r * width + width - 1] = sign * b[r];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Phase one: maximize −Σ artificials.
    let obj = m;
    for j in 0..width {
        let s: f64 = (0..m).map(|r| t[r * width + j]).sum();
        t[obj * width + j] = -s;
    }
    for r in 0..m {
        t[obj * width + n + r] = 0.0;
    }
    run_simplex(&mut t, &mut basis, m, width, n + m, eps)?;
    if -t[obj * width + width - 1] > 1e-9 * scale {
        return None;
    }
    // Drive artificials out of the basis where possible.
    for r in 0..m {
        if basis[r] >= n {
            if let Some(j) = (0..n).find(|&j| abs(t[r * width + j]) > eps) {
                pivot(&mut t, m, width, r, j);
                basis[r] = j;
            }
        }
    }
    // Phase two objective (reduced costs for maximizing c·x).
    for j in 0..width {
        t[obj * width + j] = if j < n { -c[j] } else { 0.0 };
    }
    for r in 0..m {
        let bj = basis[r];
        if bj < n {
            let coeff = t[obj * width + bj];
            if coeff != 0.0 {
                for j in 0..width {
                    t[obj * width + j] -= coeff * t[r * width + j];
                }
            }
        }
    }
    // Artificial columns are excluded from entering in phase two.
    run_simplex(&mut t, &mut basis, m, width, n, eps)?;
    let mut x = vec![0.0; n];
    for r in 0..m {
        if basis[r] < n {
            x[basis[r]] = t[r * width + width - 1].max(0.0);
        }
    }
    Some((dot(c, &x), x))
}

fn run_simplex(t: &mut [f64], basis: &mut [usize], m: usize, width: usize, enter_limit: usize, eps: f64) -> Option<()> {
    let obj = m;
    for _ in 0..10_000 {
        // Bland: smallest index with negative reduced cost.
        let entering = (0..enter_limit).find(|&j| t[obj * width + j] < -eps);
        let Some(j) = entering else { return Some(()) };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            let arj = t[r * width + j];
            if arj > eps {
                let ratio = t[r * width + width - 1] / arj;
                match leave {
                    Some((lr, best)) if ratio > best + 1e-15 || (abs(ratio - best) <= 1e-15 && basis[r] > basis[lr]) => {}
                    _ => leave = Some((r, ratio)),
                }
            }
        }
        let (r, _) = leave?;
        pivot(t, m, width, r, j);
        basis[r] = j;
    }
    None
}

fn pivot(t: &mut [f64], m: usize, width: usize, r: usize, j: usize) {
    let p = t[r * width + j];
    for c in 0..width {
        t[r * width + c] /= p;
    }
    for row in 0..=m {
        if row == r {
            continue;
        }
        let f = t[row * width + j];
        if f != 0.0 {
            for c in 0..width {
                t[row * width + c] -= f * t[r * width + c];
            }
        }
    }
}

/// Minimal-Euclidean-norm `ϑ` with `level + ϑ·ΔS_i ≥ v_i` for every child.
/// Returns `None` if no such `ϑ` exists (up to `tol`).
pub fn min_norm_superhedge(increments: &[f64], d: usize, values: &[f64], level: f64, tol: f64) -> Option<Vec<f64>> {
    let k = values.len();
    let need: Vec<f64> = values.iter().map(|v| v - level).collect();
    let feasible = |theta: &[f64]| -> bool { (0..k).all(|i| dot(theta, &increments[i * d..(i + 1) * d]) >= need[i] - tol) };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let zero = vec![0.0; d];
    if feasible(&zero) {
        return Some(zero);
    }
    let max_active = d.min(k);
    for mask in 1u64..(1u64 << k) {
        let active: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let r = active.len();
        if r > max_active {
            continue;
        }
        let mut gram = vec![0.0; r * r];
        for a in 0..r {
            for b in 0..r {
                gram[a * r + b] = dot(&increments[active[a] * d..(active[a] + 1) * d], &increments[active[b] * d..(active[b] + 1) * d]);
            }
        }
        let (eig, _) = symmetric_eigen(&gram, r);
        let top = eig.iter().fold(0.0_f64, |mx, x| mx.max(abs(*x)));
        if top == 0.0 || eig.iter().any(|e| *e <= 1e-12 * top) {
            continue;
        }
        let rhs: Vec<f64> = active.iter().map(|&i| need[i]).collect();
        let (mult, _) = pinv_solve(&gram, r, &rhs, 1e-14);
        let mut theta = vec![0.0; d];
        for (&i, w) in active.iter().zip(&mult) {
            for j in 0..d {
                theta[j] += w * increments[i * d + j];
            }
        }
        if feasible(&theta) {
            let n2 = dot(&theta, &theta);
            match &best {
                Some((b, _)) if *b <= n2 => {}
                _ => best = Some((n2, theta)),
            }
        }
    }
    best.map(|(_, t)| polish_superhedge(increments, d, &need, t, tol))
}

/// Largest shortfall `need_i − ϑ·ΔS_i`.
fn shortfall(increments: &[f64], d: usize, need: &[f64], theta: &[f64]) -> f64 {
    need.iter()
        .enumerate()
        .map(|(i, n)| n - dot(theta, &increments[i * d..(i + 1) * d]))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// When the optimal martingale vertex charges more than `d` children, a
/// hedge built from `d` of them misses the others by the rounding of the
/// price divided by their (possibly tiny) weights. A least-squares solve over
/// every nearly active child spreads that error evenly instead.
fn polish_superhedge(increments: &[f64], d: usize, need: &[f64], theta: Vec<f64>, tol: f64) -> Vec<f64> {
    let before = shortfall(increments, d, need, &theta);
    if before <= 0.0 {
        return theta;
    }
    let active: Vec<usize> = (0..need.len())
        .filter(|&i| need[i] - dot(&theta, &increments[i * d..(i + 1) * d]) > -tol)
        .collect();
    let mut normal = vec![0.0; d * d];
    let mut rhs = vec![0.0; d];
    for &i in &active {
        let row = &increments[i * d..(i + 1) * d];
        for a in 0..d {
            rhs[a] += row[a] * need[i];
            for b in 0..d {
                normal[a * d + b] += row[a] * row[b];
            }
        }
    }
    let (refined, _) = pinv_solve(&normal, d, &rhs, 1e-14);
    if shortfall(increments, d, need, &refined) < before {
        refined
    } else {
        theta
    }
}

/// `min_ϑ max_i (v_i − ϑ·ΔS_i)` together with its minimal-norm minimizer.
pub fn minimax_strategy(increments: &[f64], d: usize, values: &[f64]) -> Option<(f64, Vec<f64>)> {
    let (level, _) = max_expectation(increments, d, values)?;
    let tol = 1e-9 * (1.0 + max_abs(values));
    let theta = min_norm_superhedge(increments, d, values, level, tol)?;
    Some((level, theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn binomial_has_single_vertex() {
        let v = martingale_vertices(&[1.0, -2.0], 1);
        assert_eq!(v.len(), 1);
        assert_relative_eq!(v[0][0], 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn no_arbitrage_examples() {
        assert!(admits_positive_martingale(&[1.0, -0.5], 1, 2));
        assert!(!admits_positive_martingale(&[1.0, 2.0, 3.0], 1, 3));
        assert!(!admits_positive_martingale(&[1.0, 0.0, -1.0, 0.0, 0.0, 1.0], 2, 3));
        assert!(admits_positive_martingale(&[1.0, 0.0, -1.0, 1.0, 0.0, -1.0], 2, 3));
    }

    #[test]
    fn vertex_and_simplex_routes_agree() {
        let inc = [-1.0, -0.2, 0.4, 1.3, 0.1];
        let vals = [0.3, 0.0, 0.9, 2.0, -0.4];
        let a = max_expectation_vertices(&inc, 1, &vals).unwrap();
        let b = max_expectation_simplex(&inc, 1, &vals).unwrap();
        assert_relative_eq!(a.0, b.0, epsilon = 1e-12);
    }

    #[test]
    fn minimax_slope_through_binding_children() {
        // Convex payoff on a trinomial node: the hedge binds at the extremes.
        let inc = [-1.0, 0.0, 1.0];
        let vals = [1.0, 0.0, 1.0];
        let (level, theta) = minimax_strategy(&inc, 1, &vals).unwrap();
        assert_relative_eq!(level, 1.0, epsilon = 1e-12);
        assert_relative_eq!(theta[0], 0.0, epsilon = 1e-12);
    }
}
