//! Single-block orthogonal (SBO) dictionary learning.
//!
//! The dictionary is a union of orthonormal blocks. Every signal is coded
//! by exactly one block (the one whose hard-thresholded coefficients carry
//! the most energy); the dictionary grows by training a new block on the
//! worst-represented signals and each block is refined on the signals that
//! chose it.

mod grouping;
mod represent;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Atoms, Matrix};
use crate::onb::OrthoBlock;

pub use grouping::{group_by_block, worst_set, Grouping};
pub use represent::{block_energy, represent, represent_new_block, Assignment, Representation};
pub use train::{sbo_init, sbo_train, SboOutcome};

/// Ordered union `D = [Q_1 … Q_K]` of `p × p` orthonormal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct UnionDictionary {
    p: usize,
    blocks: Vec<OrthoBlock>,
}

impl UnionDictionary {
    pub fn new(blocks: Vec<OrthoBlock>) -> Result<Self> {
        let p = blocks
            .first()
            .ok_or_else(|| Error::Input("a union dictionary needs at least one block".into()))?
            .dim();
        if let Some(b) = blocks.iter().find(|b| b.dim() != p) {
            return Err(Error::dim(
                "UnionDictionary::new",
                format!("mixed block sizes {p} and {}", b.dim()),
            ));
        }
        Ok(UnionDictionary { p, blocks })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[OrthoBlock] {
        &self.blocks
    }

    pub fn block(&self, j: usize) -> &OrthoBlock {
        &self.blocks[j]
    }

    pub fn push(&mut self, block: OrthoBlock) {
        assert_eq!(block.dim(), self.p);
        self.blocks.push(block);
    }

    pub(crate) fn replace(&mut self, j: usize, block: OrthoBlock) {
        assert_eq!(block.dim(), self.p);
        self.blocks[j] = block;
    }

    /// The dictionary as one `p × Kp` matrix.
    pub fn to_matrix(&self) -> Matrix {
        let p = self.p;
        Matrix::from_columns(
            p,
            self.blocks
                .iter()
                .flat_map(|b| (0..p).map(move |i| b.matrix().col(i))),
        )
    }

    /// Largest `‖QᵀQ − I‖_F` over the blocks.
    pub fn max_orthonormality_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.matrix().orthonormality_defect())
            .fold(0.0, f64::max)
    }
}

impl Atoms for UnionDictionary {
    fn signal_dim(&self) -> usize {
        self.p
    }
    fn atom_count(&self) -> usize {
        self.p * self.blocks.len()
    }
    fn atom(&self, k: usize) -> &[f64] {
        self.blocks[k / self.p].matrix().col(k % self.p)
    }
}

/// How a block is scored for a signal from its `s0` kept coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyKind {
    /// Sum of squares; picks the block with the smallest residual.
    #[default]
    SquaredSum,
    /// Sum of absolute values.
    AbsSum,
}

impl EnergyKind {
    /// Contribution of one coefficient.
    #[inline(always)]
    pub fn magnitude(self, v: f64) -> f64 {
        match self {
            EnergyKind::SquaredSum => v * v,
            EnergyKind::AbsSum => v.abs(),
        }
    }

    /// Energy of the kept coefficients. Contributions are summed from the
    /// largest down, which fixes the rounding independently of the order
    /// the coefficients are given in.
    pub fn of(self, kept: &[f64]) -> f64 {
        let mut m: Vec<f64> = kept.iter().map(|&v| self.magnitude(v)).collect();
        m.sort_unstable_by(|a, b| b.total_cmp(a));
        m.iter().fold(0.0, |acc, v| acc + v)
    }
}

impl fmt::Display for EnergyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnergyKind::SquaredSum => "squared-sum",
            EnergyKind::AbsSum => "abs-sum",
        })
    }
}

impl FromStr for EnergyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared-sum" => Ok(EnergyKind::SquaredSum),
            "abs-sum" => Ok(EnergyKind::AbsSum),
            other => Err(Error::Config(format!(
                "unknown energy kind {other:?} (expected squared-sum or abs-sum)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SboConfig {
    /// Nonzero coefficients per signal.
    pub s0: usize,
    /// Blocks trained during initialization.
    pub k0: usize,
    /// Signals sampled for each initial block.
    pub p0: usize,
    /// Alternating rounds per block training.
    pub rounds: usize,
    /// Worst-set size; `None` means `max(p, m / 16)`.
    pub worst: Option<usize>,
    pub k_max: usize,
    /// Stop once the RMSE is at or below this value.
    pub target_error: f64,
    pub energy: EnergyKind,
    pub seed: u64,
    /// Signals per parallel work unit.
    pub chunk_size: usize,
}

impl Default for SboConfig {
    fn default() -> Self {
        SboConfig {
            s0: 8,
            k0: 5,
            p0: 4096,
            rounds: 6,
            worst: None,
            k_max: 64,
            target_error: 0.0,
            energy: EnergyKind::SquaredSum,
            seed: 0,
            chunk_size: 256,
        }
    }
}

impl SboConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.s0 == 0 {
            return bad("s0 must be at least 1");
        }
        if self.k0 == 0 {
            return bad("k0 must be at least 1");
        }
        if self.p0 == 0 {
            return bad("p0 must be at least 1");
        }
        if self.k0 > self.k_max {
            return bad("k0 must not exceed k_max");
        }
        if self.chunk_size == 0 {
            return bad("chunk_size must be at least 1");
        }
        if self.worst == Some(0) {
            return bad("worst-set size must be at least 1");
        }
        if !(self.target_error >= 0.0) {
            return bad("target_error must be a nonnegative number");
        }
        Ok(())
    }

    pub fn worst_set_size(&self, p: usize, m: usize) -> usize {
        self.worst.unwrap_or_else(|| p.max(m / 16)).max(1)
    }
}

/// Derives an independent stream seed from the run seed.
pub(crate) fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.rotate_left(32);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
