//! Single orthonormal block: hard thresholding, SVD initialization and the
//! alternating threshold / Procrustes training loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::kernel::{Magnitude, Projector};
use crate::linalg::{kernel, procrustes_polar, thin_svd, MatRef, Matrix, SparseCodes};

/// Largest tolerated `‖QᵀQ − I‖_F` for a dictionary block.
pub const ORTHONORMALITY_TOL: f64 = 1e-8;

/// Per-column hard-thresholded coefficients in a block's own basis (row
/// indices `0..p`, exactly `min(s0, p)` entries per column).
pub type ThresholdedCode = SparseCodes;

const CODE_BATCH: usize = 128;

/// A `p × p` orthonormal dictionary block.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoBlock {
    q: Matrix,
    proj: Projector,
}

impl OrthoBlock {
    pub fn new(q: Matrix) -> Result<Self> {
        if q.rows() != q.cols() || q.rows() == 0 {
            return Err(Error::dim(
                "OrthoBlock::new",
                format!("block must be square and nonempty, got {}x{}", q.rows(), q.cols()),
            ));
        }
        let defect = q.orthonormality_defect();
        if !(defect <= ORTHONORMALITY_TOL) {
            return Err(Error::Input(format!(
                "block is not orthonormal: ‖QᵀQ − I‖_F = {defect:e}"
            )));
        }
        Ok(OrthoBlock::wrap(q))
    }

    pub fn identity(p: usize) -> Self {
        OrthoBlock::wrap(Matrix::identity(p))
    }

    fn wrap(q: Matrix) -> Self {
        let proj = Projector::new(q.as_slice(), q.rows(), q.cols());
        OrthoBlock { q, proj }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.q.rows()
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix {
        &self.q
    }

    pub fn into_matrix(self) -> Matrix {
        self.q
    }

    /// The `Qᵀ` product used for all coefficient computations.
    #[inline]
    pub fn projector(&self) -> &Projector {
        &self.proj
    }

    /// `out = Qᵀ y`.
    #[inline]
    pub fn coefficients(&self, y: &[f64], out: &mut [f64]) {
        self.proj.apply_one(y, out);
    }

    /// `Qᵀ Y` for column-major signals `ys`, bitwise equal to calling
    /// [`coefficients`](Self::coefficients) per column.
    #[inline]
    pub fn coefficients_many(&self, ys: &[f64], out: &mut [f64]) {
        self.proj.apply(ys, out);
    }

    /// Thresholded code of every column of `y` in this basis.
    pub fn code(&self, y: MatRef<'_>, s0: usize) -> ThresholdedCode {
        let p = self.dim();
        let keep = s0.min(p);
        let mut codes = SparseCodes::with_capacity(p, y.cols(), keep * y.cols());
        if keep == p {
            for col in y.iter_cols() {
                let mut coef = vec![0.0; p];
                self.coefficients(col, &mut coef);
                codes.push_column(&(0..p).collect::<Vec<_>>(), &coef);
            }
            return codes;
        }
        let mut yt = Vec::new();
        let mut coef = Vec::new();
        let mut top = Vec::new();
        let mut col = vec![0.0; p];
        let mut sel = TopSelection::new(s0);
        let mut j0 = 0;
        while j0 < y.cols() {
            let j1 = (j0 + CODE_BATCH).min(y.cols());
            let b = j1 - j0;
            kernel::transpose_into(y.columns(j0..j1).as_slice(), p, b, &mut yt);
            coef.resize(p * b, 0.0);
            self.proj.apply_rows(&yt, b, &mut coef);
            top.resize(keep * b, 0.0);
            kernel::top_magnitudes(&coef, p, b, keep, Magnitude::Abs, &mut top);
            for j in 0..b {
                let thr = top[(keep - 1) * b + j];
                let above = (0..keep).filter(|&k| top[k * b + j] > thr).count();
                for (i, c) in col.iter_mut().enumerate() {
                    *c = coef[i * b + j];
                }
                sel.run_with_threshold(&col, thr, above);
                codes.push_column(sel.indices(), sel.values());
            }
            j0 = j1;
        }
        codes
    }
}

/// Top-`s0` selection by absolute value with lowest-index tie-breaking;
/// reusable across calls to avoid allocation in hot loops.
#[derive(Debug, Clone)]
pub struct TopSelection {
    s0: usize,
    idx: Vec<usize>,
    val: Vec<f64>,
    mags: Vec<f64>,
}

impl TopSelection {
    pub fn new(s0: usize) -> Self {
        assert!(s0 >= 1, "sparsity must be at least 1");
        TopSelection {
            s0,
            idx: Vec::with_capacity(s0),
            val: Vec::with_capacity(s0),
            mags: Vec::new(),
        }
    }

    /// Keeps the `s0` entries of `x` with the largest magnitudes, in
    /// increasing index order. Among equal magnitudes the lower index wins.
    pub fn run(&mut self, x: &[f64]) {
        self.idx.clear();
        self.val.clear();
        let n = x.len();
        let keep = self.s0.min(n);
        if keep == n {
            self.idx.extend(0..n);
            self.val.extend_from_slice(x);
            return;
        }
        self.mags.clear();
        self.mags.extend(x.iter().map(|v| v.abs()));
        let (_, &mut thr, above) = self.mags.select_nth_unstable_by(n - keep, f64::total_cmp);
        let above = above.iter().filter(|&&a| a > thr).count();
        self.run_with_threshold(x, thr, above);
    }

    /// Selection given the `s0`-th largest magnitude `thr` of `x` and the
    /// number of entries strictly above it.
    pub(crate) fn run_with_threshold(&mut self, x: &[f64], thr: f64, above: usize) {
        self.idx.clear();
        self.val.clear();
        let keep = self.s0.min(x.len());
        // entries tied with the threshold are admitted lowest index first
        let mut ties = keep - above;
        for (i, &v) in x.iter().enumerate() {
            let a = v.abs();
            if a > thr || (a == thr && ties > 0) {
                if a == thr {
                    ties -= 1;
                }
                self.idx.push(i);
                self.val.push(v);
            }
        }
        debug_assert_eq!(self.idx.len(), keep);
    }

    #[inline]
    pub fn indices(&self) -> &[usize] {
        &self.idx
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.val
    }
}

/// Keeps the `s0` entries of `x` largest in absolute value (ties: lowest
/// index) and returns them as `(indices, values)` with increasing indices.
pub fn select_top(x: &[f64], s0: usize) -> (Vec<usize>, Vec<f64>) {
    let mut sel = TopSelection::new(s0);
    sel.run(x);
    (sel.idx, sel.val)
}

/// Starting block for a signal set: the left singular vectors of `ysub`.
///
/// When `ysub` has fewer columns than rows, or is rank deficient, the
/// numerically null directions are filled by Gram–Schmidt completion
/// against Gaussian vectors drawn from `seed`.
pub fn init_onb(ysub: MatRef<'_>, seed: u64) -> Result<OrthoBlock> {
    let p = ysub.rows();
    if p == 0 {
        return Err(Error::dim("init_onb", "signal dimension is zero"));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(p);
    if ysub.cols() > 0 {
        let svd = thin_svd(&ysub.to_owned())?;
        let smax = svd.sigma[0];
        let tol = smax * (p.max(ysub.cols()) as f64) * f64::EPSILON;
        for (j, &s) in svd.sigma.iter().enumerate() {
            if s > tol {
                basis.push(svd.u.col(j).to_vec());
            }
        }
    }
    if basis.len() < p {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        complete_basis(&mut basis, p, &mut rng);
    }
    OrthoBlock::new(Matrix::from_columns(p, basis.iter().map(|c| c.as_slice())))
}

fn complete_basis(basis: &mut Vec<Vec<f64>>, p: usize, rng: &mut ChaCha8Rng) {
    while basis.len() < p {
        let mut v: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
        let n0 = kernel::norm_sq(&v).sqrt();
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for b in basis.iter() {
                let c = kernel::dot(b, &v);
                kernel::axpy(-c, b, &mut v);
            }
        }
        let n = kernel::norm_sq(&v).sqrt();
        if n > 1e-3 * n0 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
}

/// Output of [`train_onb`].
#[derive(Debug, Clone)]
pub struct OnbTraining {
    pub block: OrthoBlock,
    pub codes: ThresholdedCode,
    /// `‖Y − Q_r X_r‖_F` for `r = 0..=rounds`, where `Q_0` is the starting
    /// block and `X_r` the thresholded code of `Y` in `Q_r`.
    pub errors: Vec<f64>,
}

/// Alternating optimization of a single orthonormal block over `y`:
/// threshold-code in the current basis, then replace the basis by the polar
/// factor of `Y Xᵀ`. Runs `rounds` updates.
pub fn train_onb(y: MatRef<'_>, q0: &OrthoBlock, s0: usize, rounds: usize) -> Result<OnbTraining> {
    let p = q0.dim();
    if y.rows() != p {
        return Err(Error::dim(
            "train_onb",
            format!("signals have dimension {}, block has {p}", y.rows()),
        ));
    }
    if s0 == 0 {
        return Err(Error::Config("s0 must be at least 1".into()));
    }
    if y.cols() == 0 {
        return Ok(OnbTraining {
            block: q0.clone(),
            codes: SparseCodes::new(p),
            errors: Vec::new(),
        });
    }

    let mut q = q0.clone();
    let mut codes = q.code(y, s0);
    let mut errors = Vec::with_capacity(rounds + 1);
    errors.push(block_error(y, &q, &codes));
    for _ in 0..rounds {
        let pm = correlate(y, &codes);
        q = OrthoBlock::new(procrustes_polar(&pm)?)?;
        codes = q.code(y, s0);
        errors.push(block_error(y, &q, &codes));
    }
    Ok(OnbTraining {
        block: q,
        codes,
        errors,
    })
}

/// `Y Xᵀ` for sparse `X`.
fn correlate(y: MatRef<'_>, x: &SparseCodes) -> Matrix {
    let p = y.rows();
    let mut out = Matrix::zeros(p, x.atoms());
    for (j, col) in y.iter_cols().enumerate() {
        let (idx, val) = x.column(j);
        for (&i, &v) in idx.iter().zip(val) {
            kernel::axpy(v, col, out.col_mut(i));
        }
    }
    out
}

fn block_error(y: MatRef<'_>, q: &OrthoBlock, codes: &SparseCodes) -> f64 {
    crate::linalg::frobenius_error(y, q.matrix(), codes).expect("conformant by construction")
}
