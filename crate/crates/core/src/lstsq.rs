//! Rank-revealing least squares.
//!
//! Householder QR with column pivoting followed by a complete orthogonal
//! reduction of the trapezoidal factor, giving the minimum-norm solution
//! when the design matrix is rank deficient.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, param, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LstsqSolution {
    pub x: Vec<f64>,
    /// Numerical rank detected from the pivoted diagonal.
    pub rank: usize,
    pub residual_norm: f64,
}

impl LstsqSolution {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.x.len()
    }
}

/// Column-major dense matrix used internally.
struct ColMajor {
    m: usize,
    a: Vec<f64>,
}

impl ColMajor {
    fn col(&self, j: usize) -> &[f64] {
        &self.a[j * self.m..(j + 1) * self.m]
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[j * self.m + i]
    }
}

/// Builds a Householder reflector `I - tau·u·uᵀ` with `u[0] = 1` that maps
/// `x` to `beta·e0`. Returns `(tau, beta)` and overwrites `x[1..]` with `u[1..]`.
fn householder(x: &mut [f64]) -> (f64, f64) {
    let alpha = x[0];
    let tail: f64 = x[1..].iter().map(|v| v * v).sum();
    if tail == 0.0 {
        return (0.0, alpha);
    }
    let norm = libm::sqrt(alpha * alpha + tail);
    let beta = if alpha >= 0.0 { -norm } else { norm };
    let denom = alpha - beta;
    for v in x[1..].iter_mut() {
        *v /= denom;
    }
    ((beta - alpha) / beta, beta)
}

/// Solves `min ‖A x − b‖₂` for a row-major `m × n` matrix `a`.
///
/// Columns whose pivoted diagonal falls below `rcond · |R₀₀|` are treated as
/// dependent; `rcond = None` uses `max(m, n) · ε`.
pub fn lstsq(a: &[f64], m: usize, n: usize, b: &[f64], rcond: Option<f64>) -> Result<LstsqSolution> {
    if m == 0 || n == 0 {
        return Err(param("least squares needs a non-empty matrix"));
    }
    check_len("design matrix", m * n, a.len())?;
    check_len("right-hand side", m, b.len())?;
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(param("least-squares inputs must be finite"));
    }
    let mut mat = ColMajor { m, a: vec![0.0; m * n] };
    for i in 0..m {
        for j in 0..n {
            mat.a[j * m + i] = a[i * n + j];
        }
    }
    let mut rhs = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut norms: Vec<f64> = (0..n).map(|j| mat.col(j).iter().map(|v| v * v).sum::<f64>()).collect();
    let mut norms_ref = norms.clone();
    let steps = m.min(n);
    let mut taus = Vec::with_capacity(steps);

    for k in 0..steps {
        // Pivot: remaining column with the largest trailing norm.
        let p = (k..n).fold(k, |best, j| if norms[j] > norms[best] { j } else { best });
        if p != k {
            let (lo, hi) = mat.a.split_at_mut(p * m);
            lo[k * m..(k + 1) * m].swap_with_slice(&mut hi[..m]);
            perm.swap(k, p);
            norms.swap(k, p);
            norms_ref.swap(k, p);
        }
        let (tau, beta) = householder(&mut mat.a[k * m + k..(k + 1) * m]);
        mat.a[k * m + k] = beta;
        taus.push(tau);
        if tau != 0.0 {
            let (head, tail) = mat.a.split_at_mut((k + 1) * m);
            let u_tail = &head[k * m + k + 1..(k + 1) * m];
            for j in 0..n - k - 1 {
                let col = &mut tail[j * m + k..(j + 1) * m];
                let dot = col[0] + u_tail.iter().zip(&col[1..]).map(|(u, c)| u * c).sum::<f64>();
                let s = tau * dot;
                col[0] -= s;
                for (c, u) in col[1..].iter_mut().zip(u_tail) {
                    *c -= s * u;
                }
            }
            let dot = rhs[k] + u_tail.iter().zip(&rhs[k + 1..]).map(|(u, c)| u * c).sum::<f64>();
            let s = tau * dot;
            rhs[k] -= s;
            for (c, u) in rhs[k + 1..].iter_mut().zip(u_tail) {
                *c -= s * u;
            }
        }
        // Downdate trailing norms, recomputing when cancellation is severe.
        for j in k + 1..n {
            let r = mat.at(k, j);
            norms[j] -= r * r;
            if norms[j] <= 1e-10 * norms_ref[j] {
                norms[j] = mat.col(j)[k + 1..].iter().map(|v| v * v).sum();
                norms_ref[j] = norms[j];
            }
        }
    }

    let r00 = libm::fabs(mat.at(0, 0));
    let tol = rcond.unwrap_or(m.max(n) as f64 * f64::EPSILON) * r00;
    let rank = if r00 == 0.0 {
        0
    } else {
        (0..steps).take_while(|&k| libm::fabs(mat.at(k, k)) > tol).count()
    };

    let mut z = vec![0.0; n];
    if rank > 0 {
        // Row-major copy of the leading `rank × n` trapezoid.
        let mut r: Vec<f64> = vec![0.0; rank * n];
        for i in 0..rank {
            for j in i..n {
                r[i * n + j] = mat.at(i, j);
            }
        }
        // Annihilate the block right of the rank with reflectors acting on
        // column k and columns rank..n, bottom row first.
        let extra = n - rank;
        let mut reflectors: Vec<(f64, Vec<f64>)> = Vec::with_capacity(rank);
        for k in (0..rank).rev() {
            if extra == 0 {
                break;
            }
            let mut v = Vec::with_capacity(extra + 1);
            v.push(r[k * n + k]);
            v.extend_from_slice(&r[k * n + rank..k * n + n]);
            let (tau, beta) = householder(&mut v);
            r[k * n + k] = beta;
            r[k * n + rank..k * n + n].fill(0.0);
            if tau != 0.0 {
                for i in 0..k {
                    let row = &mut r[i * n..(i + 1) * n];
                    let dot = row[k] + v[1..].iter().zip(&row[rank..]).map(|(u, c)| u * c).sum::<f64>();
                    let s = tau * dot;
                    row[k] -= s;
                    for (c, u) in row[rank..].iter_mut().zip(&v[1..]) {
                        *c -= s * u;
                    }
                }
            }
            reflectors.push((tau, v));
        }
        // Back substitution with the square triangular factor.
        for i in (0..rank).rev() {
            let mut acc = rhs[i];
            for j in i + 1..rank {
                acc -= r[i * n + j] * z[j];
            }
            z[i] = acc / r[i * n + i];
        }
        // Reflectors were built for k = rank-1 down to 0; apply k = 0 first.
        for (idx, (tau, v)) in reflectors.iter().enumerate().rev() {
            if *tau == 0.0 {
                continue;
            }
            let k = rank - 1 - idx;
            let dot = z[k] + v[1..].iter().zip(&z[rank..]).map(|(u, c)| u * c).sum::<f64>();
            let s = tau * dot;
            z[k] -= s;
            for (c, u) in z[rank..].iter_mut().zip(&v[1..]) {
                *c -= s * u;
            }
        }
    }
    let mut x = vec![0.0; n];
    for (k, &p) in perm.iter().enumerate() {
        x[p] = z[k];
    }
    let residual_norm = libm::sqrt(
        (0..m)
            .map(|i| {
                let fit: f64 = a[i * n..(i + 1) * n].iter().zip(&x).map(|(u, v)| u * v).sum();
                (fit - b[i]) * (fit - b[i])
            })
            .sum(),
    );
    Ok(LstsqSolution { x, rank, residual_norm })
}
