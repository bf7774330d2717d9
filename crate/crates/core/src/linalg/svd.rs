use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{dot, symmetric_eigenvalues, DenseMatrix};
use crate::error::{Error, Result};
use crate::math;

const MAX_SWEEPS: usize = 80;

/// Leading `k` singular triplets of a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// `rows x k`, orthonormal columns.
    pub u: DenseMatrix,
    /// Descending, non-negative.
    pub s: Vec<f64>,
    /// `cols x k`, orthonormal columns.
    pub v: DenseMatrix,
}

/// Top-`k` singular value decomposition by one-sided (Hestenes) Jacobi.
///
/// Jacobi is slower than bidiagonalisation but computes small singular values
/// to high relative accuracy and leaves the singular vectors orthonormal to
/// working precision.
pub fn svd(m: &DenseMatrix, k: usize) -> Result<SvdResult> {
    let (rows, cols) = m.shape();
    check_rank_request(rows, cols, k)?;
    if !m.is_finite() {
        return Err(Error::invalid("svd input has non-finite entries"));
    }
    if rows >= cols {
        let (u, s, v) = jacobi_tall(m.data(), rows, cols, k)?;
        Ok(SvdResult { u, s, v })
    } else {
        let t = m.transpose();
        let (v, s, u) = jacobi_tall(t.data(), cols, rows, k)?;
        Ok(SvdResult { u, s, v })
    }
}

/// The `k` largest singular values only, from the eigenvalues of the smaller
/// Gram matrix (`M M^T` or `M^T M`).
///
/// Relative accuracy is `O(eps * s_1^2 / s_i^2)`, which is ample for leading
/// values and much cheaper than a full Jacobi SVD on wide frames.
pub fn top_singular_values(m: &DenseMatrix, k: usize) -> Result<Vec<f64>> {
    let (rows, cols) = m.shape();
    check_rank_request(rows, cols, k)?;
    if !m.is_finite() {
        return Err(Error::invalid("singular value input has non-finite entries"));
    }
    let gram = if rows <= cols { gram_rows(m) } else { gram_rows(&m.transpose()) };
    let eig = symmetric_eigenvalues(&gram)?;
    Ok(eig.into_iter().take(k).map(|l| math::sqrt(l.max(0.0))).collect())
}

fn check_rank_request(rows: usize, cols: usize, k: usize) -> Result<()> {
    let p = rows.min(cols);
    if k == 0 || k > p {
        return Err(Error::invalid(format!("requested {k} singular values of a {rows}x{cols} matrix")));
    }
    Ok(())
}

/// `M M^T`, exploiting symmetry.
fn gram_rows(m: &DenseMatrix) -> DenseMatrix {
    let n = m.rows();
    let mut g = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let ri = m.row(i);
        for j in 0..=i {
            let v = dot(ri, m.row(j));
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// One-sided Jacobi on a tall `rows x cols` (rows >= cols) row-major input.
/// Returns `(U rows x k, s, V cols x k)`.
fn jacobi_tall(data: &[f64], rows: usize, cols: usize, k: usize) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    // column-major working copies so column pairs are contiguous
    let mut a = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            a[j * rows + i] = data[i * cols + j];
        }
    }
    let mut v = vec![0.0; cols * cols];
    for j in 0..cols {
        v[j * cols + j] = 1.0;
    }

    let tol = f64::EPSILON * math::sqrt(rows as f64);
    let mut converged = cols < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..cols - 1 {
            for q in (p + 1)..cols {
                let (alpha, beta, gamma) = {
                    let cp = &a[p * rows..(p + 1) * rows];
                    let cq = &a[q * rows..(q + 1) * rows];
                    (dot(cp, cp), dot(cq, cq), dot(cp, cq))
                };
                if gamma == 0.0 || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= tol * math::sqrt(alpha) * math::sqrt(beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + math::hypot(1.0, zeta));
                let c = 1.0 / math::hypot(1.0, t);
                let s = c * t;
                rotate_columns(&mut a, rows, p, q, c, s);
                rotate_columns(&mut v, cols, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::NumericalFailure(format!("one-sided Jacobi did not converge in {MAX_SWEEPS} sweeps")));
    }

    let norms: Vec<f64> = (0..cols)
        .map(|j| {
            let c = &a[j * rows..(j + 1) * rows];
            math::sqrt(dot(c, c))
        })
        .collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));

    let s: Vec<f64> = order.iter().take(k).map(|&j| norms[j]).collect();
    let mut u_cols: Vec<Option<Vec<f64>>> = Vec::with_capacity(k);
    for &j in order.iter().take(k) {
        let n = norms[j];
        if n > f64::MIN_POSITIVE * 1e10 {
            u_cols.push(Some(a[j * rows..(j + 1) * rows].iter().map(|x| x / n).collect()));
        } else {
            u_cols.push(None);
        }
    }
    let u_cols = complete_orthonormal(u_cols, rows);

    let mut u = DenseMatrix::zeros(rows, k);
    let mut vk = DenseMatrix::zeros(cols, k);
    for (c, &j) in order.iter().take(k).enumerate() {
        for i in 0..rows {
            u[(i, c)] = u_cols[c][i];
        }
        for i in 0..cols {
            vk[(i, c)] = v[j * cols + i];
        }
    }
    Ok((u, s, vk))
}

fn rotate_columns(buf: &mut [f64], len: usize, p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = buf.split_at_mut(q * len);
    let cp = &mut head[p * len..(p + 1) * len];
    let cq = &mut tail[..len];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills `None` slots (null singular directions) with unit vectors orthogonal
/// to every other column.
fn complete_orthonormal(cols: Vec<Option<Vec<f64>>>, len: usize) -> Vec<Vec<f64>> {
    if cols.iter().all(Option::is_some) {
        return cols.into_iter().flatten().collect();
    }
    let mut basis: Vec<Vec<f64>> = cols.iter().flatten().cloned().collect();
    let mut candidate = 0usize;
    let mut out = Vec::with_capacity(cols.len());
    for c in cols {
        match c {
            Some(v) => out.push(v),
            None => loop {
                assert!(candidate < len, "ran out of completion candidates");
                let mut e = vec![0.0; len];
                e[candidate] = 1.0;
                candidate += 1;
                // two Gram-Schmidt passes
                for _ in 0..2 {
                    for b in &basis {
                        let proj = dot(&e, b);
                        for (x, y) in e.iter_mut().zip(b) {
                            *x -= proj * y;
                        }
                    }
                }
                let n = math::sqrt(dot(&e, &e));
                if n > 0.5 {
                    e.iter_mut().for_each(|x| *x /= n);
                    basis.push(e.clone());
                    out.push(e);
                    break;
                }
            },
        }
    }
    out
}
