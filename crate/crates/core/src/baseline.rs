//! Overcomplete baseline: orthogonal matching pursuit for coding and
//! approximate K-SVD for atom updates.

use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::kernel::Projector;
use crate::linalg::{kernel, residual_into, rmse, Atoms, MatRef, Matrix, SparseCodes};
use crate::report::{IterationRecord, TrainReport};

/// Largest tolerated deviation of an atom norm from 1.
pub const ATOM_NORM_TOL: f64 = 1e-10;

/// `p × n` dictionary with unit-norm atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct OvercompleteDictionary {
    d: Matrix,
    proj: Projector,
}

impl OvercompleteDictionary {
    pub fn new(d: Matrix) -> Result<Self> {
        if d.rows() == 0 || d.cols() == 0 {
            return Err(Error::dim(
                "OvercompleteDictionary::new",
                format!("empty {}x{} dictionary", d.rows(), d.cols()),
            ));
        }
        for k in 0..d.cols() {
            let n = kernel::norm_sq(d.col(k)).sqrt();
            if !((n - 1.0).abs() <= ATOM_NORM_TOL) {
                return Err(Error::Input(format!("atom {k} has norm {n}, expected 1")));
            }
        }
        let proj = Projector::new(d.as_slice(), d.rows(), d.cols());
        Ok(OvercompleteDictionary { d, proj })
    }

    /// Normalizes every column first; zero columns are rejected.
    pub fn normalized(mut d: Matrix) -> Result<Self> {
        for k in 0..d.cols() {
            let n = kernel::norm_sq(d.col(k)).sqrt();
            if n == 0.0 {
                return Err(Error::Input(format!("atom {k} is zero")));
            }
            d.col_mut(k).iter_mut().for_each(|v| *v /= n);
        }
        Self::new(d)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.d
    }

    pub fn into_matrix(self) -> Matrix {
        self.d
    }

    fn refresh(&mut self) {
        self.proj = Projector::new(self.d.as_slice(), self.d.rows(), self.d.cols());
    }

    pub fn dim(&self) -> usize {
        self.d.rows()
    }

    pub fn len(&self) -> usize {
        self.d.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.d.cols() == 0
    }

    pub fn max_norm_defect(&self) -> f64 {
        (0..self.d.cols())
            .map(|k| (kernel::norm_sq(self.d.col(k)).sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

impl Atoms for OvercompleteDictionary {
    fn signal_dim(&self) -> usize {
        self.d.rows()
    }
    fn atom_count(&self) -> usize {
        self.d.cols()
    }
    fn atom(&self, k: usize) -> &[f64] {
        self.d.col(k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    /// Selected atoms, increasing.
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub residual_norm: f64,
    /// Set when a candidate atom was numerically dependent on the support
    /// and the pursuit stopped with fewer than `s0` atoms.
    pub dependent: bool,
}

/// Reusable OMP scratch space.
pub struct OmpWorkspace {
    corr: Vec<f64>,
    residual: Vec<f64>,
    // packed lower-triangular Cholesky factor of the support Gram matrix
    chol: Vec<f64>,
    rhs: Vec<f64>,
    sol: Vec<f64>,
    support: Vec<usize>,
    in_support: Vec<bool>,
}

impl OmpWorkspace {
    pub fn new(p: usize, n: usize, s0: usize) -> Self {
        OmpWorkspace {
            corr: vec![0.0; n],
            residual: vec![0.0; p],
            chol: Vec::with_capacity(s0 * (s0 + 1) / 2),
            rhs: Vec::with_capacity(s0),
            sol: Vec::with_capacity(s0),
            support: Vec::with_capacity(s0),
            in_support: vec![false; n],
        }
    }
}

/// Orthogonal matching pursuit with at most `s0` atoms.
pub fn omp(y: &[f64], d: &OvercompleteDictionary, s0: usize) -> OmpResult {
    let mut ws = OmpWorkspace::new(d.dim(), d.len(), s0);
    omp_with(y, d, s0, &mut ws)
}

/// Forward substitution with the packed factor: solves `L z = b`.
fn chol_forward(chol: &[f64], b: &[f64], z: &mut Vec<f64>) {
    z.clear();
    let mut row = 0;
    for i in 0..b.len() {
        let mut s = b[i];
        for k in 0..i {
            s -= chol[row + k] * z[k];
        }
        z.push(s / chol[row + i]);
        row += i + 1;
    }
}

/// Back substitution: solves `Lᵀ x = z` in place.
fn chol_backward(chol: &[f64], x: &mut [f64]) {
    let n = x.len();
    let row_start = |i: usize| i * (i + 1) / 2;
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= chol[row_start(k) + i] * x[k];
        }
        x[i] = s / chol[row_start(i) + i];
    }
}

pub fn omp_with(y: &[f64], d: &OvercompleteDictionary, s0: usize, ws: &mut OmpWorkspace) -> OmpResult {
    let (p, n) = (d.dim(), d.len());
    assert_eq!(y.len(), p, "signal dimension does not match dictionary");
    ws.chol.clear();
    ws.rhs.clear();
    ws.sol.clear();
    for &k in &ws.support {
        ws.in_support[k] = false;
    }
    ws.support.clear();
    ws.residual.copy_from_slice(y);

    let y_norm_sq = kernel::norm_sq(y);
    let stop_sq = y_norm_sq * 1e-24;
    let mut dependent = false;
    let max_atoms = s0.min(n);
    let mut gram_col = Vec::with_capacity(max_atoms);
    let mut w = Vec::with_capacity(max_atoms);

    while ws.support.len() < max_atoms {
        if kernel::norm_sq(&ws.residual) <= stop_sq {
            break;
        }
        d.proj.apply_one(&ws.residual, &mut ws.corr);
        let mut best = usize::MAX;
        let mut best_abs = -1.0;
        for (k, c) in ws.corr.iter().enumerate() {
            if !ws.in_support[k] && c.abs() > best_abs {
                best = k;
                best_abs = c.abs();
            }
        }
        if best == usize::MAX || best_abs == 0.0 {
            break;
        }
        let atom = d.matrix().col(best);

        // extend the Cholesky factor of the support Gram matrix
        gram_col.clear();
        gram_col.extend(ws.support.iter().map(|&s| kernel::dot(d.matrix().col(s), atom)));
        chol_forward(&ws.chol, &gram_col, &mut w);
        let diag_sq = kernel::norm_sq(atom) - kernel::norm_sq(&w);
        if !(diag_sq > 1e-10 * kernel::norm_sq(atom)) {
            dependent = true;
            break;
        }
        ws.chol.extend_from_slice(&w);
        ws.chol.push(diag_sq.sqrt());
        ws.support.push(best);
        ws.in_support[best] = true;
        ws.rhs.push(kernel::dot(atom, y));

        chol_forward(&ws.chol, &ws.rhs, &mut ws.sol);
        chol_backward(&ws.chol, &mut ws.sol);

        ws.residual.copy_from_slice(y);
        for (&s, &x) in ws.support.iter().zip(&ws.sol) {
            kernel::axpy(-x, d.matrix().col(s), &mut ws.residual);
        }
    }

    let mut pairs: Vec<(usize, f64)> = ws.support.iter().copied().zip(ws.sol.iter().copied()).collect();
    pairs.sort_unstable_by_key(|&(k, _)| k);
    OmpResult {
        indices: pairs.iter().map(|&(k, _)| k).collect(),
        values: pairs.iter().map(|&(_, v)| v).collect(),
        residual_norm: kernel::norm_sq(&ws.residual).sqrt(),
        dependent,
    }
}

/// OMP over every column of `y`, mapped over chunks of `chunk_size`
/// signals. Returns the codes and the number of early-stopped signals.
pub fn batch_omp(
    y: MatRef<'_>,
    d: &OvercompleteDictionary,
    s0: usize,
    chunk_size: usize,
) -> (SparseCodes, usize) {
    assert_eq!(y.rows(), d.dim());
    let m = y.cols();
    let cs = chunk_size.max(1);
    let parts: Vec<(SparseCodes, usize)> = (0..m.div_ceil(cs))
        .into_par_iter()
        .map(|c| {
            let r = c * cs..((c + 1) * cs).min(m);
            let mut ws = OmpWorkspace::new(d.dim(), d.len(), s0);
            let mut codes = SparseCodes::with_capacity(d.len(), r.len(), r.len() * s0);
            let mut flagged = 0;
            for j in r {
                let res = omp_with(y.col(j), d, s0, &mut ws);
                flagged += usize::from(res.dependent);
                codes.push_column(&res.indices, &res.values);
            }
            (codes, flagged)
        })
        .collect();
    let flagged = parts.iter().map(|p| p.1).sum();
    (SparseCodes::concat(d.len(), parts.into_iter().map(|p| p.0)), flagged)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AksvdConfig {
    /// Number of atoms.
    pub atoms: usize,
    pub s0: usize,
    pub iterations: usize,
    pub seed: u64,
    pub chunk_size: usize,
}

impl Default for AksvdConfig {
    fn default() -> Self {
        AksvdConfig {
            atoms: 128,
            s0: 8,
            iterations: 100,
            seed: 0,
            chunk_size: 256,
        }
    }
}

impl AksvdConfig {
    pub fn validate(&self, p: usize) -> Result<()> {
        if self.atoms < p {
            return Err(Error::Config(format!(
                "need at least p = {p} atoms, got {}",
                self.atoms
            )));
        }
        if self.s0 == 0 || self.iterations == 0 || self.chunk_size == 0 {
            return Err(Error::Config(
                "s0, iterations and chunk_size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AksvdOutcome {
    pub dictionary: OvercompleteDictionary,
    pub codes: SparseCodes,
    pub report: TrainReport,
}

fn random_unit(p: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let n = kernel::norm_sq(&v).sqrt();
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Copies `src` normalized into `dst`; falls back to a random direction for
/// (near) zero vectors.
fn set_unit(dst: &mut [f64], src: &[f64], rng: &mut ChaCha8Rng) {
    let n = kernel::norm_sq(src).sqrt();
    if n > 1e-12 {
        dst.iter_mut().zip(src).for_each(|(d, s)| *d = s / n);
    } else {
        dst.copy_from_slice(&random_unit(src.len(), rng));
    }
}

/// Approximate K-SVD: batch OMP coding alternated with one power-iteration
/// rank-1 refresh per atom. All atoms are updated against the same snapshot
/// of the dictionary and codes.
pub fn aksvd_train(y: MatRef<'_>, cfg: &AksvdConfig) -> Result<AksvdOutcome> {
    let (p, m) = (y.rows(), y.cols());
    check_signals(y)?;
    cfg.validate(p)?;
    let n = cfg.atoms;
    let mut report = TrainReport::new(
        "aksvd",
        serde_json::to_value(cfg).expect("config serializes"),
        cfg.seed,
        p,
        m,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let t_start = Instant::now();
    let picks: Vec<usize> = if n <= m {
        index::sample(&mut rng, m, n).into_vec()
    } else {
        report
            .warnings
            .push(format!("{n} atoms exceed the {m} signals; initial atoms drawn with replacement"));
        (0..n).map(|_| rng.random_range(0..m)).collect()
    };
    let mut dm = Matrix::zeros(p, n);
    for (k, &j) in picks.iter().enumerate() {
        set_unit(dm.col_mut(k), y.col(j), &mut rng);
    }
    let dict = OvercompleteDictionary::new(dm)?;
    report.t_init = t_start.elapsed().as_secs_f64();
    run_iterations(y, dict, cfg, &mut rng, report, t_start)
}

/// Trains from a given starting dictionary instead of sampled signals.
pub fn aksvd_train_from(
    y: MatRef<'_>,
    init: OvercompleteDictionary,
    cfg: &AksvdConfig,
) -> Result<AksvdOutcome> {
    let (p, m) = (y.rows(), y.cols());
    if init.dim() != p || init.len() != cfg.atoms {
        return Err(Error::dim(
            "aksvd_train_from",
            format!(
                "signals have p = {p}, dictionary is {}x{}, config asks for {} atoms",
                init.dim(),
                init.len(),
                cfg.atoms
            ),
        ));
    }
    check_signals(y)?;
    cfg.validate(p)?;
    let report = TrainReport::new(
        "aksvd",
        serde_json::to_value(cfg).expect("config serializes"),
        cfg.seed,
        p,
        m,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    run_iterations(y, init, cfg, &mut rng, report, Instant::now())
}

fn check_signals(y: MatRef<'_>) -> Result<()> {
    if y.rows() == 0 || y.cols() == 0 {
        return Err(Error::Input(format!(
            "signal matrix is empty ({}x{})",
            y.rows(),
            y.cols()
        )));
    }
    if y.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("signal matrix has non-finite entries".into()));
    }
    Ok(())
}

fn run_iterations(
    y: MatRef<'_>,
    mut dict: OvercompleteDictionary,
    cfg: &AksvdConfig,
    rng: &mut ChaCha8Rng,
    mut report: TrainReport,
    t_start: Instant,
) -> Result<AksvdOutcome> {
    let n = dict.len();
    let mut codes = SparseCodes::new(n);
    for it in 1..=cfg.iterations {
        let t_iter = Instant::now();
        let (c, flagged) = batch_omp(y, &dict, cfg.s0, cfg.chunk_size);
        codes = c;
        let rep_secs = t_iter.elapsed().as_secs_f64();
        if flagged > 0 {
            report.warnings.push(format!(
                "iteration {it}: {flagged} signals stopped early on dependent atoms"
            ));
        }

        update_atoms(y, &mut dict, &mut codes, rng);

        report.iterations.push(IterationRecord {
            iteration: it,
            size: n,
            rmse: rmse(y, &dict, &codes)?,
            elapsed_learn: t_iter.elapsed().as_secs_f64(),
            elapsed_represent: rep_secs,
            idle_blocks: Vec::new(),
            max_defect: None,
        });
    }
    report.t_learn = t_start.elapsed().as_secs_f64();
    Ok(AksvdOutcome {
        dictionary: dict,
        codes,
        report,
    })
}

/// One sweep of approximate K-SVD atom updates in place.
fn update_atoms(
    y: MatRef<'_>,
    dict: &mut OvercompleteDictionary,
    codes: &mut SparseCodes,
    rng: &mut ChaCha8Rng,
) {
    let (p, m, n) = (y.rows(), y.cols(), dict.len());

    // residual snapshot R = Y − D X
    let mut resid = Matrix::zeros(p, m);
    for j in 0..m {
        let (idx, val) = codes.column(j);
        residual_into(y.col(j), &*dict, idx, val, resid.col_mut(j));
    }

    // users of each atom: (signal, position in codes)
    let mut users: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for j in 0..m {
        for pos in codes.column_range(j) {
            users[codes.indices()[pos]].push((j, pos));
        }
    }

    let snapshot = &*dict;
    let values = codes.values();
    let updates: Vec<Option<(Vec<f64>, Vec<f64>)>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let us = &users[k];
            if us.is_empty() {
                return None;
            }
            let atom = snapshot.atom(k);
            // E_k g = R_I g + d_k (gᵀg)
            let mut eg = vec![0.0; p];
            let mut gg = 0.0;
            for &(j, pos) in us {
                let g = values[pos];
                kernel::axpy(g, resid.col(j), &mut eg);
                gg += g * g;
            }
            kernel::axpy(gg, atom, &mut eg);
            let norm = kernel::norm_sq(&eg).sqrt();
            if !(norm > 0.0) {
                return None;
            }
            eg.iter_mut().for_each(|v| *v /= norm);
            // g_new = E_kᵀ d_new = R_Iᵀ d_new + g (d_kᵀ d_new)
            let overlap = kernel::dot(atom, &eg);
            let g_new: Vec<f64> = us
                .iter()
                .map(|&(j, pos)| kernel::dot(resid.col(j), &eg) + values[pos] * overlap)
                .collect();
            Some((eg, g_new))
        })
        .collect();

    let mut dead = Vec::new();
    {
        let values = codes.values_mut();
        for (k, upd) in updates.into_iter().enumerate() {
            match upd {
                Some((atom, g_new)) => {
                    dict.d.col_mut(k).copy_from_slice(&atom);
                    for (&(_, pos), g) in users[k].iter().zip(g_new) {
                        values[pos] = g;
                    }
                }
                None if users[k].is_empty() => dead.push(k),
                None => {}
            }
        }
    }

    if !dead.is_empty() {
        // replace unused atoms by the currently worst-represented signals
        let mut r = vec![0.0; p];
        let mut errs: Vec<(f64, usize)> = (0..m)
            .map(|j| {
                let (idx, val) = codes.column(j);
                residual_into(y.col(j), &*dict, idx, val, &mut r);
                (kernel::norm_sq(&r), j)
            })
            .collect();
        errs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (k, &(_, j)) in dead.iter().zip(errs.iter().cycle()) {
            let src = y.col(j).to_vec();
            set_unit(dict.d.col_mut(*k), &src, rng);
        }
    }
    dict.refresh();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::onb::select_top;

    fn random_orthogonal(p: usize, rng: &mut ChaCha8Rng) -> Matrix {
        crate::onb::init_onb(Matrix::gaussian(p, p, rng).view(), 0)
            .unwrap()
            .into_matrix()
    }

    #[test]
    fn single_atom_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = OvercompleteDictionary::normalized(Matrix::gaussian(6, 12, &mut rng)).unwrap();
        let y: Vec<f64> = d.atom(5).iter().map(|v| 3.0 * v).collect();
        let r = omp(&y, &d, 3);
        assert_eq!(r.indices, vec![5]);
        assert!((r.values[0] - 3.0).abs() <= 1e-12);
        assert!(r.residual_norm <= 1e-12);
        assert!(!r.dependent);
    }

    #[test]
    fn residual_orthogonal_to_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = OvercompleteDictionary::normalized(Matrix::gaussian(6, 12, &mut rng)).unwrap();
        for _ in 0..50 {
            let y: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
            let r = omp(&y, &d, 2);
            assert_eq!(r.indices.len(), 2);
            let mut res = vec![0.0; 6];
            residual_into(&y, &d, &r.indices, &r.values, &mut res);
            for &k in &r.indices {
                assert!(kernel::dot(d.atom(k), &res).abs() <= 1e-8);
            }
            assert!((kernel::norm_sq(&res).sqrt() - r.residual_norm).abs() <= 1e-12);
        }
    }

    #[test]
    fn residual_shrinks_with_more_atoms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = OvercompleteDictionary::normalized(Matrix::gaussian(8, 20, &mut rng)).unwrap();
        let y: Vec<f64> = (0..8).map(|_| rng.sample(StandardNormal)).collect();
        let norms: Vec<f64> = (1..=8).map(|s| omp(&y, &d, s).residual_norm).collect();
        for w in norms.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn orthonormal_dictionary_reduces_to_thresholding() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = random_orthogonal(6, &mut rng);
        let d = OvercompleteDictionary::new(q.clone()).unwrap();
        let y: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
        let mut coef = vec![0.0; 6];
        kernel::dot_columns(q.as_slice(), 6, &y, &mut coef);
        let (idx, val) = select_top(&coef, 3);
        let r = omp(&y, &d, 3);
        assert_eq!(r.indices, idx);
        for (a, b) in r.values.iter().zip(&val) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn dependent_atoms_stop_early() {
        // atoms 0 and 2 coincide
        let d = Matrix::from_rows(&[&[1.0, 0.0, 1.0], &[0.0, 1.0, 0.0]]);
        let d = OvercompleteDictionary::new(d).unwrap();
        let r = omp(&[2.0, 1.0], &d, 3);
        assert_eq!(r.indices, vec![0, 1]);
        assert!(r.residual_norm <= 1e-12);

        // atom 2 is within 1e-6 of atom 0
        let eps = 1e-6;
        let n = (1.0f64 + eps * eps).sqrt();
        let d = Matrix::from_rows(&[&[1.0, 0.0, 1.0 / n], &[0.0, 1.0, 0.0], &[0.0, 0.0, eps / n]]);
        let d = OvercompleteDictionary::new(d).unwrap();
        let r = omp(&[1.0, 0.0, 1.0], &d, 3);
        assert!(r.dependent);
        assert_eq!(r.indices, vec![2]);
    }

    #[test]
    fn fixed_point_of_exact_sparse_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (p, n, m, s0) = (8, 16, 200, 1);
        let truth = OvercompleteDictionary::normalized(Matrix::gaussian(p, n, &mut rng)).unwrap();
        let mut y = Matrix::zeros(p, m);
        for j in 0..m {
            let a = rng.random_range(0..n);
            kernel::axpy(rng.random_range(-2.0..2.0), truth.atom(a), y.col_mut(j));
        }
        let cfg = AksvdConfig {
            atoms: n,
            s0,
            iterations: 1,
            seed: 0,
            chunk_size: 32,
        };
        let out = aksvd_train_from(y.view(), truth, &cfg).unwrap();
        assert!(out.report.final_rmse().unwrap() <= 1e-8);
    }

    #[test]
    fn training_keeps_unit_atoms_and_reports_each_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y = Matrix::gaussian(6, 300, &mut rng);
        let cfg = AksvdConfig {
            atoms: 12,
            s0: 2,
            iterations: 8,
            seed: 1,
            chunk_size: 64,
        };
        let out = aksvd_train(y.view(), &cfg).unwrap();
        assert_eq!(out.report.iterations.len(), 8);
        assert!(out.dictionary.max_norm_defect() <= 1e-10);
        let direct = rmse(y.view(), &out.dictionary, &out.codes).unwrap();
        assert_eq!(direct, out.report.final_rmse().unwrap());
    }

    #[test]
    fn config_errors() {
        let y = Matrix::identity(4);
        let bad = AksvdConfig {
            atoms: 3,
            ..Default::default()
        };
        assert!(matches!(aksvd_train(y.view(), &bad), Err(Error::Config(_))));
        assert!(OvercompleteDictionary::new(Matrix::from_diag(&[1.0, 2.0])).is_err());
        assert!(OvercompleteDictionary::normalized(Matrix::zeros(2, 2)).is_err());
    }
}
