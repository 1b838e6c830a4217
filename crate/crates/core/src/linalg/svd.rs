//! Thin SVD by Householder bidiagonalization followed by implicitly shifted
//! QR on the bidiagonal (Golub–Kahan–Reinsch), plus the orthogonal
//! Procrustes update built on it.

use crate::error::{Error, Result};
use crate::linalg::{kernel, Matrix};

const MAX_QR_ITERATIONS: usize = 75;

/// `A = U · diag(sigma) · Vᵀ` with `sigma` non-increasing.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        us.scale_columns(&self.sigma);
        us.matmul_tr(&self.v)
    }
}

/// Thin SVD of a `p × n` matrix; `r = min(p, n)` singular triplets.
///
/// Columns are sorted by non-increasing singular value (ties keep their
/// original order) and each column of `U` is signed so that its
/// largest-magnitude entry is nonnegative, with `V` adjusted to match.
pub fn thin_svd(a: &Matrix) -> Result<SvdResult> {
    let (p, n) = a.shape();
    if p == 0 || n == 0 {
        return Err(Error::dim("thin_svd", format!("empty {p}x{n} matrix")));
    }
    if !a.is_finite() {
        return Err(Error::Input(format!(
            "thin_svd: {p}x{n} matrix has non-finite entries"
        )));
    }
    let (u, sigma, v) = if p >= n {
        golub_kahan(a.clone())?
    } else {
        let (u, s, v) = golub_kahan(a.transpose())?;
        (v, s, u)
    };
    let mut out = sort_and_sign(u, sigma, v);
    debug_assert!(out.u.is_finite() && out.v.is_finite());
    for s in &mut out.sigma {
        if *s < 0.0 {
            *s = 0.0;
        }
    }
    Ok(out)
}

/// Nearest orthogonal matrix to `p` in the Frobenius sense, i.e. the
/// maximizer of `trace(Qᵀ P)` over orthogonal `Q`: `Q = U Vᵀ`.
pub fn procrustes_polar(p: &Matrix) -> Result<Matrix> {
    if p.rows() != p.cols() {
        return Err(Error::dim(
            "procrustes_polar",
            format!("expected a square matrix, got {}x{}", p.rows(), p.cols()),
        ));
    }
    let svd = thin_svd(p)?;
    Ok(svd.u.matmul_tr(&svd.v))
}

fn sort_and_sign(u: Matrix, sigma: Vec<f64>, v: Matrix) -> SvdResult {
    let r = sigma.len();
    let mut order: Vec<usize> = (0..r).collect();
    // stable: equal values keep index order
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    let mut us = u.select_columns(&order);
    let mut vs = v.select_columns(&order);
    let sigma: Vec<f64> = order.iter().map(|&i| sigma[i]).collect();
    for j in 0..r {
        let col = us.col(j);
        let mut best = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            us.col_mut(j).iter_mut().for_each(|x| *x = -*x);
            vs.col_mut(j).iter_mut().for_each(|x| *x = -*x);
        }
    }
    SvdResult {
        u: us,
        sigma,
        v: vs,
    }
}

#[inline]
fn hypot(a: f64, b: f64) -> f64 {
    let (a, b) = (a.abs(), b.abs());
    if a > b {
        a * (1.0 + (b / a) * (b / a)).sqrt()
    } else if b == 0.0 {
        0.0
    } else {
        b * (1.0 + (a / b) * (a / b)).sqrt()
    }
}

#[inline]
fn with_sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

#[inline]
fn rotate_columns(m: &mut Matrix, j: usize, i: usize, c: f64, s: f64) {
    let rows = m.rows();
    let data = m.as_mut_slice();
    let (lo, hi) = if j < i { (j, i) } else { (i, j) };
    let (left, right) = data.split_at_mut(hi * rows);
    let col_lo = &mut left[lo * rows..(lo + 1) * rows];
    let col_hi = &mut right[..rows];
    let (cj, ci) = if j < i {
        (col_lo, col_hi)
    } else {
        (col_hi, col_lo)
    };
    for (y, z) in cj.iter_mut().zip(ci.iter_mut()) {
        let (yv, zv) = (*y, *z);
        *y = yv * c + zv * s;
        *z = zv * c - yv * s;
    }
}

/// In-place SVD of an `m × n` matrix with `m ≥ n`. Returns unsorted
/// `(U (m×n), w, V (n×n))`.
fn golub_kahan(mut a: Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let (m, n) = a.shape();
    debug_assert!(m >= n);
    let eps = f64::EPSILON;
    let mut w = vec![0.0; n];
    let mut rv1 = vec![0.0; n];
    let mut v = Matrix::zeros(n, n);

    let mut g = 0.0f64;
    let mut scale = 0.0f64;
    let mut anorm = 0.0f64;
    let mut l = 0;

    let mut tmp = vec![0.0; m.max(n)];
    let mut acc = vec![0.0; m];

    // Householder reduction to bidiagonal form.
    for i in 0..n {
        l = i + 1;
        rv1[i] = scale * g;
        g = 0.0;
        {
            let ci = &mut a.col_mut(i)[i..];
            scale = ci.iter().map(|x| x.abs()).sum();
            if scale != 0.0 {
                ci.iter_mut().for_each(|x| *x /= scale);
                let s = kernel::norm_sq(ci);
                let f = ci[0];
                g = -with_sign(s.sqrt(), f);
                let h = f * g - s;
                ci[0] = f - g;
                let u = &mut tmp[..m - i];
                u.copy_from_slice(ci);
                for j in l..n {
                    let cj = &mut a.col_mut(j)[i..];
                    let f = kernel::dot(u, cj) / h;
                    kernel::axpy(f, u, cj);
                }
                a.col_mut(i)[i..].iter_mut().for_each(|x| *x *= scale);
            }
        }
        w[i] = scale * g;
        g = 0.0;
        scale = 0.0;
        if i + 1 != n {
            let u = &mut tmp[..n - l];
            for (k, uk) in (l..n).zip(u.iter_mut()) {
                *uk = a[(i, k)];
            }
            scale = u.iter().map(|x| x.abs()).sum();
            if scale != 0.0 {
                u.iter_mut().for_each(|x| *x /= scale);
                let s = kernel::norm_sq(u);
                let f = u[0];
                g = -with_sign(s.sqrt(), f);
                let h = f * g - s;
                u[0] = f - g;
                for (k, &uk) in (l..n).zip(u.iter()) {
                    rv1[k] = uk / h;
                }
                // acc[j] = Σ_k a[j, k] u_k over the trailing rows
                let acc = &mut acc[..m - l];
                acc.iter_mut().for_each(|x| *x = 0.0);
                for (k, &uk) in (l..n).zip(u.iter()) {
                    kernel::axpy(uk, &a.col(k)[l..], acc);
                }
                for k in l..n {
                    kernel::axpy(rv1[k], acc, &mut a.col_mut(k)[l..]);
                }
                for (k, &uk) in (l..n).zip(u.iter()) {
                    a[(i, k)] = uk * scale;
                }
            }
        }
        anorm = anorm.max(w[i].abs() + rv1[i].abs());
    }

    // Accumulate right-hand transformations.
    for i in (0..n).rev() {
        if i + 1 < n {
            if g != 0.0 {
                let ail = a[(i, l)];
                for j in l..n {
                    // double division avoids possible underflow
                    v[(j, i)] = (a[(i, j)] / ail) / g;
                }
                let row = &mut tmp[..n - l];
                for (k, r) in (l..n).zip(row.iter_mut()) {
                    *r = a[(i, k)];
                }
                let vi = v.col(i)[l..].to_vec();
                for j in l..n {
                    let vj = &mut v.col_mut(j)[l..];
                    let s = kernel::dot(row, vj);
                    kernel::axpy(s, &vi, vj);
                }
            }
            for j in l..n {
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        }
        v[(i, i)] = 1.0;
        g = rv1[i];
        l = i;
    }

    // Accumulate left-hand transformations.
    for i in (0..n).rev() {
        let l = i + 1;
        let gi = w[i];
        for j in l..n {
            a[(i, j)] = 0.0;
        }
        if gi != 0.0 {
            let ginv = 1.0 / gi;
            let u = &mut tmp[..m - i];
            u.copy_from_slice(&a.col(i)[i..]);
            for j in l..n {
                let cj = &mut a.col_mut(j)[i..];
                let s = kernel::dot(&u[1..], &cj[1..]);
                let f = (s / u[0]) * ginv;
                kernel::axpy(f, u, cj);
            }
            a.col_mut(i)[i..].iter_mut().for_each(|x| *x *= ginv);
        } else {
            a.col_mut(i)[i..].iter_mut().for_each(|x| *x = 0.0);
        }
        a[(i, i)] += 1.0;
    }

    // Diagonalize the bidiagonal form.
    for k in (0..n).rev() {
        let mut its = 0;
        loop {
            // test for splitting
            let mut flag = true;
            let mut l = k;
            loop {
                if l == 0 || rv1[l].abs() <= eps * anorm {
                    flag = false;
                    break;
                }
                if w[l - 1].abs() <= eps * anorm {
                    break;
                }
                l -= 1;
            }
            if flag {
                // cancellation of rv1[l] when l > 0
                let nm = l - 1;
                let mut c = 0.0;
                let mut s = 1.0;
                for i in l..=k {
                    let f = s * rv1[i];
                    rv1[i] *= c;
                    if f.abs() <= eps * anorm {
                        break;
                    }
                    let g = w[i];
                    let h = hypot(f, g);
                    w[i] = h;
                    let hinv = 1.0 / h;
                    c = g * hinv;
                    s = -f * hinv;
                    rotate_columns(&mut a, nm, i, c, s);
                }
            }
            let z = w[k];
            if l == k {
                if z < 0.0 {
                    w[k] = -z;
                    v.col_mut(k).iter_mut().for_each(|x| *x = -*x);
                }
                break;
            }
            if its == MAX_QR_ITERATIONS {
                return Err(Error::Decomposition {
                    rows: m,
                    cols: n,
                    sweeps: MAX_QR_ITERATIONS,
                });
            }
            its += 1;

            // shift from the bottom 2x2 minor
            let mut x = w[l];
            let nm = k - 1;
            let mut y = w[nm];
            let mut g = rv1[nm];
            let mut h = rv1[k];
            let mut f = ((y - z) * (y + z) + (g - h) * (g + h)) / (2.0 * h * y);
            g = hypot(f, 1.0);
            f = ((x - z) * (x + z) + h * ((y / (f + with_sign(g, f))) - h)) / x;

            // next QR transformation
            let mut c = 1.0;
            let mut s = 1.0;
            for j in l..=nm {
                let i = j + 1;
                g = rv1[i];
                y = w[i];
                h = s * g;
                g *= c;
                let mut z = hypot(f, h);
                rv1[j] = z;
                c = f / z;
                s = h / z;
                f = x * c + g * s;
                g = g * c - x * s;
                h = y * s;
                y *= c;
                rotate_columns(&mut v, j, i, c, s);
                z = hypot(f, h);
                w[j] = z;
                if z != 0.0 {
                    let zinv = 1.0 / z;
                    c = f * zinv;
                    s = h * zinv;
                }
                f = c * g + s * y;
                x = c * y - s * g;
                rotate_columns(&mut a, j, i, c, s);
            }
            rv1[l] = 0.0;
            rv1[k] = f;
            w[k] = x;
        }
    }

    Ok((a, w, v))
}
