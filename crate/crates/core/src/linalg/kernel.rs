//! Inner-product kernels with a fixed summation order.
//!
//! Every coefficient in the crate goes through [`dot`] (or a batched variant
//! that performs exactly the same operations per output), so a value never
//! depends on which worker computed it or how the work was chunked.

const LANES: usize = 8;

#[inline(always)]
fn fold_lanes(acc: &[f64; LANES]) -> f64 {
    ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]))
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = fold_lanes(&acc);
    for (x, y) in ta.iter().zip(tb) {
        s += x * y;
    }
    s
}

/// `out[i] = dot(column i of cols, y)` where `cols` holds `out.len()`
/// contiguous columns of length `y.len()`.
#[inline]
pub fn dot_columns(cols: &[f64], rows: usize, y: &[f64], out: &mut [f64]) {
    assert_eq!(y.len(), rows);
    assert_eq!(cols.len(), rows * out.len());
    if rows == 0 {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mut groups = out.chunks_exact_mut(4);
    let mut c = 0;
    for o in &mut groups {
        let a0 = &cols[c * rows..(c + 1) * rows];
        let a1 = &cols[(c + 1) * rows..(c + 2) * rows];
        let a2 = &cols[(c + 2) * rows..(c + 3) * rows];
        let a3 = &cols[(c + 3) * rows..(c + 4) * rows];
        let r = dot4(a0, a1, a2, a3, y);
        o.copy_from_slice(&r);
        c += 4;
    }
    for o in groups.into_remainder() {
        *o = dot(&cols[c * rows..(c + 1) * rows], y);
        c += 1;
    }
}

#[inline(always)]
fn dot4(a0: &[f64], a1: &[f64], a2: &[f64], a3: &[f64], y: &[f64]) -> [f64; 4] {
    let n = y.len();
    let (a0, a1, a2, a3) = (&a0[..n], &a1[..n], &a2[..n], &a3[..n]);
    let mut acc0 = [0.0f64; LANES];
    let mut acc1 = [0.0f64; LANES];
    let mut acc2 = [0.0f64; LANES];
    let mut acc3 = [0.0f64; LANES];
    let full = n / LANES * LANES;
    let mut i = 0;
    while i < full {
        let yy = &y[i..i + LANES];
        let x0 = &a0[i..i + LANES];
        let x1 = &a1[i..i + LANES];
        let x2 = &a2[i..i + LANES];
        let x3 = &a3[i..i + LANES];
        for l in 0..LANES {
            acc0[l] += x0[l] * yy[l];
            acc1[l] += x1[l] * yy[l];
            acc2[l] += x2[l] * yy[l];
            acc3[l] += x3[l] * yy[l];
        }
        i += LANES;
    }
    let mut s = [
        fold_lanes(&acc0),
        fold_lanes(&acc1),
        fold_lanes(&acc2),
        fold_lanes(&acc3),
    ];
    for k in full..n {
        s[0] += a0[k] * y[k];
        s[1] += a1[k] * y[k];
        s[2] += a2[k] * y[k];
        s[3] += a3[k] * y[k];
    }
    s
}

const TILE_ROWS: usize = 32;
const TILE_COLS: usize = 4;
const ROW_TILE_ROWS: usize = 8;
const ROW_TILE_COLS: usize = 16;

/// Applies `Aᵀ` (A is `p × n`) to many vectors at once. Every output entry
/// is the fused multiply-add chain `Σ_r A[r, i] · y[r]` in increasing `r`,
/// whatever the tiling, so [`apply`](Self::apply) and
/// [`apply_one`](Self::apply_one) agree bitwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    p: usize,
    n: usize,
    // A in row-major order: at[r * n + i] = A[r, i]
    at: Vec<f64>,
}

impl Projector {
    /// `a` is column-major `p × n`.
    pub fn new(a: &[f64], p: usize, n: usize) -> Self {
        assert_eq!(a.len(), p * n);
        let mut at = vec![0.0; p * n];
        for i in 0..n {
            for r in 0..p {
                at[r * n + i] = a[i * p + r];
            }
        }
        Projector { p, n, at }
    }

    /// Input length.
    pub fn rows(&self) -> usize {
        self.p
    }

    /// Output length.
    pub fn cols(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn apply_one(&self, y: &[f64], out: &mut [f64]) {
        self.apply(y, out);
    }

    /// `ys` holds column-major vectors of length `p`, `out` receives the
    /// matching column-major results of length `n`.
    pub fn apply(&self, ys: &[f64], out: &mut [f64]) {
        let (p, n) = (self.p, self.n);
        if p == 0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        assert_eq!(ys.len() % p, 0);
        let m = ys.len() / p;
        assert_eq!(out.len(), m * n);
        let full_i = n / TILE_ROWS * TILE_ROWS;
        let mut j0 = 0;
        while j0 + TILE_COLS <= m {
            let mut i0 = 0;
            while i0 < full_i {
                self.tile::<TILE_COLS>(ys, out, i0, j0);
                i0 += TILE_ROWS;
            }
            for j in j0..j0 + TILE_COLS {
                self.edge(&ys[j * p..(j + 1) * p], &mut out[j * n..(j + 1) * n], full_i);
            }
            j0 += TILE_COLS;
        }
        for j in j0..m {
            let mut i0 = 0;
            while i0 < full_i {
                self.tile::<1>(ys, out, i0, j);
                i0 += TILE_ROWS;
            }
            self.edge(&ys[j * p..(j + 1) * p], &mut out[j * n..(j + 1) * n], full_i);
        }
    }

    #[inline(always)]
    fn tile<const COLS: usize>(&self, ys: &[f64], out: &mut [f64], i0: usize, j0: usize) {
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx512f") {
                // SAFETY: feature checked above; tile bounds are asserted below.
                unsafe { self.tile_avx512::<COLS>(ys, out, i0, j0) };
                return;
            }
        }
        self.tile_generic::<COLS>(ys, out, i0, j0);
    }

    fn tile_generic<const COLS: usize>(&self, ys: &[f64], out: &mut [f64], i0: usize, j0: usize) {
        let (p, n) = (self.p, self.n);
        let mut acc = [[0.0f64; TILE_ROWS]; COLS];
        for r in 0..p {
            let a = &self.at[r * n + i0..r * n + i0 + TILE_ROWS];
            for (jj, acc) in acc.iter_mut().enumerate() {
                let y = ys[(j0 + jj) * p + r];
                for ii in 0..TILE_ROWS {
                    acc[ii] = a[ii].mul_add(y, acc[ii]);
                }
            }
        }
        for (jj, acc) in acc.iter().enumerate() {
            let o = (j0 + jj) * n + i0;
            out[o..o + TILE_ROWS].copy_from_slice(acc);
        }
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f")]
    unsafe fn tile_avx512<const COLS: usize>(&self, ys: &[f64], out: &mut [f64], i0: usize, j0: usize) {
        use std::arch::x86_64::*;
        let (p, n) = (self.p, self.n);
        assert!(i0 + TILE_ROWS <= n && (j0 + COLS) * p <= ys.len());
        assert!((j0 + COLS - 1) * n + i0 + TILE_ROWS <= out.len());
        let at = self.at.as_ptr();
        let yp = ys.as_ptr();
        let mut c = [[_mm512_setzero_pd(); 4]; COLS];
        for r in 0..p {
            let row = at.add(r * n + i0);
            let a = [
                _mm512_loadu_pd(row),
                _mm512_loadu_pd(row.add(8)),
                _mm512_loadu_pd(row.add(16)),
                _mm512_loadu_pd(row.add(24)),
            ];
            for (jj, c) in c.iter_mut().enumerate() {
                let y = _mm512_set1_pd(*yp.add((j0 + jj) * p + r));
                for (k, c) in c.iter_mut().enumerate() {
                    *c = _mm512_fmadd_pd(a[k], y, *c);
                }
            }
        }
        let op = out.as_mut_ptr();
        for (jj, c) in c.iter().enumerate() {
            let o = op.add((j0 + jj) * n + i0);
            for (k, c) in c.iter().enumerate() {
                _mm512_storeu_pd(o.add(8 * k), *c);
            }
        }
    }

    /// Same products as [`apply`](Self::apply) with both sides stored
    /// row-major: `yt[r * m + j]` is entry `r` of vector `j` and the result
    /// lands in `out[i * m + j]`. Entries are bitwise equal to `apply`.
    pub fn apply_rows(&self, yt: &[f64], m: usize, out: &mut [f64]) {
        let (p, n) = (self.p, self.n);
        assert_eq!(yt.len(), p * m);
        assert_eq!(out.len(), n * m);
        let full_i = n / ROW_TILE_ROWS * ROW_TILE_ROWS;
        let full_j = m / ROW_TILE_COLS * ROW_TILE_COLS;
        #[cfg(target_arch = "x86_64")]
        let wide = std::arch::is_x86_feature_detected!("avx512f");
        #[cfg(not(target_arch = "x86_64"))]
        let wide = false;
        if wide && p > 0 {
            for i0 in (0..full_i).step_by(ROW_TILE_ROWS) {
                for j0 in (0..full_j).step_by(ROW_TILE_COLS) {
                    #[cfg(target_arch = "x86_64")]
                    // SAFETY: feature checked above; tile bounds asserted inside.
                    unsafe {
                        self.rows_tile_avx512(yt, m, out, i0, j0)
                    };
                }
            }
            self.rows_edge(yt, m, out, 0..full_i, full_j..m);
            self.rows_edge(yt, m, out, full_i..n, 0..m);
        } else {
            self.rows_edge(yt, m, out, 0..n, 0..m);
        }
    }

    fn rows_edge(
        &self,
        yt: &[f64],
        m: usize,
        out: &mut [f64],
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
    ) {
        let n = self.n;
        for i in rows {
            let o = &mut out[i * m..(i + 1) * m];
            o[cols.clone()].iter_mut().for_each(|v| *v = 0.0);
            for r in 0..self.p {
                let a = self.at[r * n + i];
                let y = &yt[r * m..(r + 1) * m];
                for j in cols.clone() {
                    o[j] = a.mul_add(y[j], o[j]);
                }
            }
        }
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f")]
    unsafe fn rows_tile_avx512(&self, yt: &[f64], m: usize, out: &mut [f64], i0: usize, j0: usize) {
        use std::arch::x86_64::*;
        let (p, n) = (self.p, self.n);
        assert!(i0 + ROW_TILE_ROWS <= n && j0 + ROW_TILE_COLS <= m);
        assert!(yt.len() >= p * m && out.len() >= n * m);
        let yp = yt.as_ptr();
        let mut c = [[_mm512_setzero_pd(); 2]; ROW_TILE_ROWS];
        for r in 0..p {
            let y0 = _mm512_loadu_pd(yp.add(r * m + j0));
            let y1 = _mm512_loadu_pd(yp.add(r * m + j0 + 8));
            let arow = self.at.as_ptr().add(r * n + i0);
            for (ii, c) in c.iter_mut().enumerate() {
                let a = _mm512_set1_pd(*arow.add(ii));
                c[0] = _mm512_fmadd_pd(a, y0, c[0]);
                c[1] = _mm512_fmadd_pd(a, y1, c[1]);
            }
        }
        let op = out.as_mut_ptr();
        for (ii, c) in c.iter().enumerate() {
            let o = op.add((i0 + ii) * m + j0);
            _mm512_storeu_pd(o, c[0]);
            _mm512_storeu_pd(o.add(8), c[1]);
        }
    }

    /// Outputs `from..n` of one vector, one entry at a time.
    fn edge(&self, y: &[f64], out: &mut [f64], from: usize) {
        let n = self.n;
        for i in from..n {
            let mut c = 0.0f64;
            for (r, &yr) in y.iter().enumerate() {
                c = self.at[r * n + i].mul_add(yr, c);
            }
            out[i] = c;
        }
    }
}

/// How a coefficient contributes to a magnitude ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Magnitude {
    Abs,
    Square,
}

impl Magnitude {
    #[inline(always)]
    pub fn of(self, v: f64) -> f64 {
        match self {
            Magnitude::Abs => v.abs(),
            Magnitude::Square => v * v,
        }
    }
}

const NET_LANES: usize = 8;

/// For each of the `m` vectors stored row-major in `coef` (`coef[i * m + j]`
/// is entry `i` of vector `j`, `n` entries each), writes its `keep` largest
/// magnitudes in descending order to `out[k * m + j]`. Uses a branch-free
/// insertion network over eight vectors at a time.
pub fn top_magnitudes(coef: &[f64], n: usize, m: usize, keep: usize, mag: Magnitude, out: &mut [f64]) {
    assert!(keep <= n);
    assert_eq!(coef.len(), n * m);
    assert_eq!(out.len(), keep * m);
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: feature checked above; lengths asserted.
            unsafe { top_magnitudes_avx512(coef, n, m, keep, mag, out) };
            return;
        }
    }
    top_magnitudes_generic(coef, n, m, keep, mag, out, 0);
}

/// Scalar network over vectors `from..m`.
fn top_magnitudes_generic(
    coef: &[f64],
    n: usize,
    m: usize,
    keep: usize,
    mag: Magnitude,
    out: &mut [f64],
    from: usize,
) {
    let mut slots = vec![0.0f64; keep];
    for j in from..m {
        slots.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let mut x = mag.of(coef[i * m + j]);
            for s in slots.iter_mut() {
                let a = *s;
                *s = if a > x { a } else { x };
                x = if a > x { x } else { a };
            }
        }
        for (k, &v) in slots.iter().enumerate() {
            out[k * m + j] = v;
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn top_magnitudes_avx512(coef: &[f64], n: usize, m: usize, keep: usize, mag: Magnitude, out: &mut [f64]) {
    use std::arch::x86_64::*;
    let full = m / NET_LANES * NET_LANES;
    let sign = _mm512_set1_pd(-0.0);
    let mut slots = vec![_mm512_setzero_pd(); keep];
    for g in (0..full).step_by(NET_LANES) {
        slots.iter_mut().for_each(|s| *s = _mm512_setzero_pd());
        for i in 0..n {
            let v = _mm512_loadu_pd(coef.as_ptr().add(i * m + g));
            let mut x = match mag {
                Magnitude::Square => _mm512_mul_pd(v, v),
                Magnitude::Abs => _mm512_andnot_pd(sign, v),
            };
            for s in slots.iter_mut() {
                let hi = _mm512_max_pd(*s, x);
                x = _mm512_min_pd(*s, x);
                *s = hi;
            }
        }
        for (k, s) in slots.iter().enumerate() {
            _mm512_storeu_pd(out.as_mut_ptr().add(k * m + g), *s);
        }
    }
    top_magnitudes_generic(coef, n, m, keep, mag, out, full);
}

/// Row-major copy of a column-major `rows × cols` matrix.
pub fn transpose_into(src: &[f64], rows: usize, cols: usize, dst: &mut Vec<f64>) {
    assert_eq!(src.len(), rows * cols);
    dst.clear();
    dst.resize(rows * cols, 0.0);
    for (j, col) in src.chunks_exact(rows.max(1)).enumerate() {
        for (r, &v) in col.iter().enumerate() {
            dst[r * cols + j] = v;
        }
    }
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn norm_sq(x: &[f64]) -> f64 {
    dot(x, x)
}
