//! Exact solver for small zero-sum matrix games.
//!
//! The row player picks a distribution `p` over rows and pays
//! `max_j sum_i p_i a_ij`; we return a minimizing `p` and the value. Among the
//! optimal strategies we return the one closest to uniform in Euclidean
//! distance, then the lexicographically smallest.

use serde::{Deserialize, Serialize};

use crate::error::{MgolError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedStrategy {
    pub probs: Vec<f64>,
    pub value: f64,
}

impl MixedStrategy {
    /// What `probs` pays against the worst column.
    pub fn payoff_against(probs: &[f64], matrix: &[Vec<f64>]) -> f64 {
        let cols = matrix[0].len();
        (0..cols)
            .map(|j| {
                probs
                    .iter()
                    .zip(matrix)
                    .map(|(p, row)| p * row[j])
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

// Active-set enumeration for the tie-break is exponential in rows + columns.
const MAX_TIE_BREAK_CONSTRAINTS: usize = 16;

pub fn solve_zero_sum(matrix: &[Vec<f64>]) -> Result<MixedStrategy> {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || matrix.iter().any(|r| r.len() != cols) {
        return Err(MgolError::InvalidConfig(
            "game matrix must be a nonempty rectangle".into(),
        ));
    }
    if matrix.iter().flatten().any(|v| !v.is_finite()) {
        return Err(MgolError::InvalidConfig(
            "game matrix has a non-finite entry".into(),
        ));
    }
    Ok(match rows {
        1 => MixedStrategy {
            probs: vec![1.0],
            value: matrix[0].iter().copied().fold(f64::NEG_INFINITY, f64::max),
        },
        2 => solve_two_rows(matrix),
        _ => solve_by_simplex(matrix),
    })
}

/// Closed form for two rows. With `p` the weight on row 0, column `j` pays
/// `a_1j + p (a_0j - a_1j)`; the upper envelope is convex and piecewise
/// linear, so its minimum sits at an endpoint or a crossing, and the optimal
/// set is an interval cut out by one half-line per column.
fn solve_two_rows(a: &[Vec<f64>]) -> MixedStrategy {
    let cols = a[0].len();
    let slope = |j: usize| a[0][j] - a[1][j];
    let envelope = |p: f64| {
        (0..cols)
            .map(|j| a[1][j] + p * slope(j))
            .fold(f64::NEG_INFINITY, f64::max)
    };

    let mut candidates = vec![0.0, 1.0];
    for j in 0..cols {
        for k in j + 1..cols {
            let ds = slope(j) - slope(k);
            if ds != 0.0 {
                let p = (a[1][k] - a[1][j]) / ds;
                if p > 0.0 && p < 1.0 {
                    candidates.push(p);
                }
            }
        }
    }
    let best = candidates
        .iter()
        .map(|&p| envelope(p))
        .fold(f64::INFINITY, f64::min);

    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for (j, &base) in a[1].iter().enumerate() {
        let s = slope(j);
        let cut = (best - base) / s;
        if s > 0.0 {
            hi = hi.min(cut);
        } else if s < 0.0 {
            lo = lo.max(cut);
        }
    }
    let p = if lo <= hi {
        0.5f64.clamp(lo, hi)
    } else {
        // rounding emptied the interval; fall back to the best candidate nearest 1/2
        candidates
            .iter()
            .copied()
            .filter(|&p| envelope(p) <= best)
            .min_by(|x, y| {
                (x - 0.5)
                    .abs()
                    .total_cmp(&(y - 0.5).abs())
                    .then(x.total_cmp(y))
            })
            .expect("the minimizing candidate is in the list")
    };
    MixedStrategy {
        probs: vec![p, 1.0 - p],
        value: envelope(p),
    }
}

fn solve_by_simplex(a: &[Vec<f64>]) -> MixedStrategy {
    let (rows, cols) = (a.len(), a[0].len());
    let lowest = a.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let shift = 1.0 - lowest;
    // shifted game is strictly positive: maximize sum(u) s.t. A'^T u <= 1, u >= 0
    let constraints: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..rows).map(|i| a[i][j] + shift).collect())
        .collect();
    let u = maximize_sum(&constraints);
    let total: f64 = u.iter().sum();
    let mut probs: Vec<f64> = u.iter().map(|v| v / total).collect();
    let value = MixedStrategy::payoff_against(&probs, a);

    if rows + cols <= MAX_TIE_BREAK_CONSTRAINTS {
        if let Some(p) = closest_to_uniform(a, value) {
            if MixedStrategy::payoff_against(&p, a) <= value + value_tolerance(a) {
                probs = p;
            }
        }
    }
    let value = MixedStrategy::payoff_against(&probs, a);
    MixedStrategy { probs, value }
}

fn value_tolerance(a: &[Vec<f64>]) -> f64 {
    let scale = a.iter().flatten().fold(1.0f64, |s, v| s.max(v.abs()));
    1e-11 * scale
}

/// Dense tableau simplex with Bland's rule for `max 1^T u, C u <= 1, u >= 0`.
/// `C` has one row per constraint and is entrywise positive, so the origin
/// is feasible and the optimum is bounded.
fn maximize_sum(c: &[Vec<f64>]) -> Vec<f64> {
    let m = c.len();
    let n = c[0].len();
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m + 1];
    for (i, row) in c.iter().enumerate() {
        t[i][..n].copy_from_slice(row);
        t[i][n + i] = 1.0;
        t[i][width - 1] = 1.0;
    }
    for v in &mut t[m][..n] {
        *v = -1.0;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    const EPS: f64 = 1e-12;
    while let Some(enter) = (0..n + m).find(|&j| t[m][j] < -EPS) {
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][enter] > EPS {
                let ratio = t[i][width - 1] / t[i][enter];
                let better = match leave {
                    None => true,
                    Some((l, r)) => ratio < r - EPS || (ratio <= r + EPS && basis[i] < basis[l]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let (pivot_row, _) = leave.expect("positive constraints keep the program bounded");
        let pivot = t[pivot_row][enter];
        for v in &mut t[pivot_row] {
            *v /= pivot;
        }
        let prow = t[pivot_row].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != pivot_row && row[enter] != 0.0 {
                let factor = row[enter];
                for (v, p) in row.iter_mut().zip(&prow) {
                    *v -= factor * p;
                }
            }
        }
        basis[pivot_row] = enter;
    }
    let mut u = vec![0.0; n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            u[b] = t[i][width - 1].max(0.0);
        }
    }
    u
}

/// Projection of the uniform distribution onto the optimal face
/// `{p in simplex : p^T A e_j <= value for all j}`, by enumerating candidate
/// active sets and keeping the nearest feasible equality-constrained projection.
fn closest_to_uniform(a: &[Vec<f64>], value: f64) -> Option<Vec<f64>> {
    let (rows, cols) = (a.len(), a[0].len());
    let uniform = vec![1.0 / rows as f64; rows];
    // inequality i: normal . p <= rhs
    let mut normals: Vec<(Vec<f64>, f64)> = (0..cols)
        .map(|j| ((0..rows).map(|i| a[i][j]).collect(), value))
        .collect();
    for i in 0..rows {
        let mut e = vec![0.0; rows];
        e[i] = -1.0;
        normals.push((e, 0.0));
    }
    let tol = value_tolerance(a).max(1e-12);
    let feasible = |p: &[f64]| {
        normals
            .iter()
            .all(|(n, rhs)| n.iter().zip(p).map(|(x, y)| x * y).sum::<f64>() <= rhs + tol)
    };

    let mut best: Option<(f64, Vec<f64>)> = None;
    let total = normals.len();
    for mask in 0u32..(1u32 << total) {
        let active = mask.count_ones() as usize;
        if active >= rows {
            continue;
        }
        let mut eq_rows: Vec<&[f64]> = Vec::with_capacity(active + 1);
        let mut rhs = Vec::with_capacity(active + 1);
        for (bit, (n, r)) in normals.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                eq_rows.push(n);
                rhs.push(*r);
            }
        }
        let ones = vec![1.0; rows];
        eq_rows.push(&ones);
        rhs.push(1.0);
        let Some(p) = project_affine(&uniform, &eq_rows, &rhs) else {
            continue;
        };
        if !feasible(&p) {
            continue;
        }
        let p: Vec<f64> = p.iter().map(|v| v.max(0.0)).collect();
        let sum: f64 = p.iter().sum();
        let p: Vec<f64> = p.iter().map(|v| v / sum).collect();
        let dist: f64 = p.iter().zip(&uniform).map(|(x, u)| (x - u) * (x - u)).sum();
        let better = match &best {
            None => true,
            Some((d, q)) => dist < d - 1e-15 || (dist <= d + 1e-15 && lex_less(&p, q)),
        };
        if better {
            best = Some((dist, p));
        }
    }
    best.map(|(_, p)| p)
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() > 1e-12 {
            return x < y;
        }
    }
    false
}

/// Projection of `point` onto `{p : rows . p = rhs}`; `None` when the rows
/// are linearly dependent.
fn project_affine(point: &[f64], rows: &[&[f64]], rhs: &[f64]) -> Option<Vec<f64>> {
    let k = rows.len();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    // (B B^T) mu = B point - rhs
    let mut gram: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| dot(rows[i], rows[j])).collect())
        .collect();
    let mut resid: Vec<f64> = (0..k).map(|i| dot(rows[i], point) - rhs[i]).collect();
    let mu = solve_linear(&mut gram, &mut resid)?;
    let mut p = point.to_vec();
    for (i, row) in rows.iter().enumerate() {
        for (v, r) in p.iter_mut().zip(row.iter()) {
            *v -= mu[i] * r;
        }
    }
    Some(p)
}

/// Gaussian elimination with partial pivoting.
fn solve_linear(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |s, v| s.max(v.abs()))
        .max(1.0);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-10 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                let (upper, lower) = a.split_at_mut(r);
                for (v, p) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                    *v -= f * p;
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}
