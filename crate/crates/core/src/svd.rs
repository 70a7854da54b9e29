//! Thin SVD of a short, wide matrix by one-sided (Hestenes) Jacobi rotations.
//!
//! The matrix is given as `n` rows of length `r` with `n` small (tens) and `r`
//! possibly large (thousands). Rotations are applied to the rows directly so
//! `A^T A` is never formed.

use crate::scalar::{dot, norm, Scalar};

const MAX_SWEEPS: usize = 64;

#[derive(Debug, Clone)]
pub struct ThinSvd<T> {
    /// Descending, length `min(n, r)`.
    pub singular_values: Vec<T>,
    /// Unit right singular vectors (length `r`), paired with `singular_values`.
    /// Entries whose singular value is zero are zero vectors.
    pub right_vectors: Vec<Vec<T>>,
    /// Unit left singular vectors (length `n`), paired with `singular_values`.
    pub left_vectors: Vec<Vec<T>>,
    pub sweeps: usize,
}

/// Decompose the matrix whose rows are `rows`. All rows must share a length.
pub fn thin_svd<T: Scalar>(rows: &[Vec<T>]) -> ThinSvd<T> {
    let n = rows.len();
    let r = rows.first().map_or(0, Vec::len);
    debug_assert!(rows.iter().all(|row| row.len() == r));

    // w[i] holds row i of A V as rotations accumulate; v[i] is column i of V.
    let mut w: Vec<Vec<T>> = rows.to_vec();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { T::one() } else { T::zero() }).collect())
        .collect();

    let tol = T::epsilon() * T::lit(2.0);
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let alpha = dot(&w[i], &w[i]);
                let beta = dot(&w[j], &w[j]);
                let gamma = dot(&w[i], &w[j]);
                if alpha == T::zero() || beta == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, i, j, c, s);
                rotate(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let sigmas: Vec<T> = w.iter().map(|col| norm(col)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sigmas[b].partial_cmp(&sigmas[a]).unwrap_or(std::cmp::Ordering::Equal));
    order.truncate(n.min(r));

    let sigma_max = order.first().map_or(T::zero(), |&i| sigmas[i]);
    let floor = sigma_max * T::epsilon() * T::lit(r.max(n) as f64);
    let mut out = ThinSvd {
        singular_values: Vec::with_capacity(order.len()),
        right_vectors: Vec::with_capacity(order.len()),
        left_vectors: Vec::with_capacity(order.len()),
        sweeps,
    };
    for &i in &order {
        let s = sigmas[i];
        let right = if s > floor && s > T::zero() {
            w[i].iter().map(|&x| x / s).collect()
        } else {
            vec![T::zero(); r]
        };
        out.singular_values.push(s);
        out.right_vectors.push(right);
        out.left_vectors.push(v[i].clone());
    }
    out
}

fn rotate<T: Scalar>(cols: &mut [Vec<T>], i: usize, j: usize, c: T, s: T) {
    let (lo, hi) = cols.split_at_mut(j);
    for (a, b) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}
