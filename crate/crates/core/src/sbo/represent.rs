use rayon::prelude::*;

use super::{EnergyKind, UnionDictionary};
use crate::linalg::kernel::{self, Magnitude};
use crate::linalg::{MatRef, SparseCodes};
use crate::onb::{OrthoBlock, TopSelection};

/// Which block codes a signal, and how well.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub block: usize,
    pub energy: f64,
    /// `‖y‖² − Σ kept²`, clamped at zero.
    pub residual_sq: f64,
}

/// Block choice plus the thresholded code of every signal. Code row
/// indices are global atom indices `block * p + row`.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub assignments: Vec<Assignment>,
    pub codes: SparseCodes,
}

impl Representation {
    pub fn blocks(&self) -> impl Iterator<Item = usize> + '_ {
        self.assignments.iter().map(|a| a.block)
    }

    pub fn total_residual_sq(&self) -> f64 {
        self.assignments.iter().map(|a| a.residual_sq).sum()
    }
}

/// Energy of the `s0` largest-magnitude coefficients of `Qᵀ y`.
pub fn block_energy(y: &[f64], q: &OrthoBlock, s0: usize, kind: EnergyKind) -> f64 {
    let mut coef = vec![0.0; q.dim()];
    q.coefficients(y, &mut coef);
    let mut sel = TopSelection::new(s0);
    sel.run(&coef);
    kind.of(sel.values())
}

/// Top-`s0` energies of `m` coefficient vectors stored row-major
/// (`coef[i * m + j]` is coefficient `i` of vector `j`). Magnitudes are
/// summed largest first, matching [`EnergyKind::of`].
fn top_energies(coef: &[f64], n: usize, m: usize, s0: usize, kind: EnergyKind, top: &mut Vec<f64>, out: &mut [f64]) {
    let keep = s0.min(n);
    let mag = match kind {
        EnergyKind::SquaredSum => Magnitude::Square,
        EnergyKind::AbsSum => Magnitude::Abs,
    };
    top.resize(keep * m, 0.0);
    kernel::top_magnitudes(coef, n, m, keep, mag, top);
    out.iter_mut().for_each(|e| *e = 0.0);
    for row in top.chunks_exact(m) {
        for (e, v) in out.iter_mut().zip(row) {
            *e += v;
        }
    }
}

/// Per-chunk best-so-far block and energy.
struct ChunkBest {
    block: Vec<usize>,
    energy: Vec<f64>,
    // scratch: transposed signals, transposed coefficients, energies
    yt: Vec<f64>,
    coef: Vec<f64>,
    top: Vec<f64>,
    e: Vec<f64>,
}

impl ChunkBest {
    fn empty(chunk: MatRef<'_>) -> Self {
        let n = chunk.cols();
        let mut yt = Vec::new();
        kernel::transpose_into(chunk.as_slice(), chunk.rows(), n, &mut yt);
        ChunkBest {
            block: vec![0; n],
            energy: vec![f64::NEG_INFINITY; n],
            yt,
            coef: vec![0.0; chunk.rows() * n],
            top: Vec::new(),
            e: vec![0.0; n],
        }
    }

    /// Offers block `j` to every signal of the chunk; a block replaces the
    /// incumbent only with strictly larger energy, so ties go to the lowest
    /// block index when blocks are offered in increasing order.
    fn offer(&mut self, j: usize, q: &OrthoBlock, s0: usize, kind: EnergyKind) {
        let m = self.block.len();
        q.projector().apply_rows(&self.yt, m, &mut self.coef);
        top_energies(&self.coef, q.dim(), m, s0, kind, &mut self.top, &mut self.e);
        for (c, &e) in self.e.iter().enumerate() {
            if e > self.energy[c] {
                self.energy[c] = e;
                self.block[c] = j;
            }
        }
    }

    /// Codes each signal in its chosen block.
    fn finish(self, chunk: MatRef<'_>, d: &UnionDictionary, s0: usize) -> (Vec<Assignment>, SparseCodes) {
        let p = d.dim();
        let atoms = p * d.len();
        let n = chunk.cols();
        let keep = s0.min(p);
        let mut assignments = Vec::with_capacity(n);
        let mut codes = SparseCodes::with_capacity(atoms, n, n * keep);
        let mut coef = vec![0.0; p];
        let mut sel = TopSelection::new(s0);
        let mut gidx = vec![0; keep];
        for (c, y) in chunk.iter_cols().enumerate() {
            let b = self.block[c];
            d.block(b).coefficients(y, &mut coef);
            sel.run(&coef);
            let kept_sq = EnergyKind::SquaredSum.of(sel.values());
            assignments.push(Assignment {
                block: b,
                energy: self.energy[c],
                residual_sq: (kernel::norm_sq(y) - kept_sq).max(0.0),
            });
            for (g, &i) in gidx.iter_mut().zip(sel.indices()) {
                *g = b * p + i;
            }
            codes.push_column(&gidx, sel.values());
        }
        (assignments, codes)
    }

    fn from_previous(chunk: MatRef<'_>, prev: &Representation, range: std::ops::Range<usize>) -> Self {
        let mut best = ChunkBest::empty(chunk);
        for (c, s) in range.enumerate() {
            best.block[c] = prev.assignments[s].block;
            best.energy[c] = prev.assignments[s].energy;
        }
        best
    }
}

fn assemble(parts: Vec<(Vec<Assignment>, SparseCodes)>, atoms: usize) -> Representation {
    let mut assignments = Vec::new();
    let mut code_parts = Vec::with_capacity(parts.len());
    for (a, c) in parts {
        assignments.extend(a);
        code_parts.push(c);
    }
    Representation {
        assignments,
        codes: SparseCodes::concat(atoms, code_parts),
    }
}

fn chunk_ranges(m: usize, chunk_size: usize) -> Vec<std::ops::Range<usize>> {
    let cs = chunk_size.max(1);
    (0..m.div_ceil(cs))
        .map(|c| c * cs..((c + 1) * cs).min(m))
        .collect()
}

/// Assigns every signal to the block of maximal energy and codes it there.
///
/// Work is mapped over `(chunk, block)` pairs and reduced per signal over
/// blocks in increasing index order, so the result does not depend on
/// `chunk_size` or the number of workers.
pub fn represent(
    y: MatRef<'_>,
    d: &UnionDictionary,
    s0: usize,
    kind: EnergyKind,
    chunk_size: usize,
) -> Representation {
    assert_eq!(y.rows(), d.dim(), "signal dimension does not match dictionary");
    assert!(!d.is_empty());
    let atoms = d.dim() * d.len();
    let parts: Vec<_> = chunk_ranges(y.cols(), chunk_size)
        .into_par_iter()
        .map(|r| {
            let chunk = y.columns(r);
            let mut best = ChunkBest::empty(chunk);
            for (j, q) in d.blocks().iter().enumerate() {
                best.offer(j, q, s0, kind);
            }
            best.finish(chunk, d, s0)
        })
        .collect();
    assemble(parts, atoms)
}

/// Same result as [`represent`] when `prev` was computed against the first
/// `d.len() − 1` blocks of `d`: only the newest block is evaluated.
pub fn represent_new_block(
    y: MatRef<'_>,
    d: &UnionDictionary,
    prev: &Representation,
    s0: usize,
    kind: EnergyKind,
    chunk_size: usize,
) -> Representation {
    assert_eq!(y.rows(), d.dim());
    assert_eq!(prev.assignments.len(), y.cols());
    let atoms = d.dim() * d.len();
    let j = d.len() - 1;
    let q = d.block(j);
    let parts: Vec<_> = chunk_ranges(y.cols(), chunk_size)
        .into_par_iter()
        .map(|r| {
            let chunk = y.columns(r.clone());
            let mut best = ChunkBest::from_previous(chunk, prev, r);
            best.offer(j, q, s0, kind);
            best.finish(chunk, d, s0)
        })
        .collect();
    assemble(parts, atoms)
}
